//! CSV files. Floats use the shortest representation that parses back to the
//! same `f64`, so identical runs produce identical bytes.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use brinkman_fourier::diagnostics::DiagnosticsRecord;
use brinkman_fourier::evolution::{Observer, State};

use crate::monitor::InvariantMonitor;

/// Version of the column sets, written to `summary.csv`.
pub const FORMAT_VERSION: u32 = 1;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

fn create(path: &Path) -> Result<csv::Writer<BufWriter<File>>, OutputError> {
    let file = File::create(path).map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> OutputError + '_ {
    move |source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes a header and rows of already formatted cells.
pub fn write_table<S: AsRef<str>>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<S>>) -> Result<(), OutputError> {
    let mut w = create(path)?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row.iter().map(|c| c.as_ref())).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// `key,value` rows preceded by `format_version`.
pub fn write_summary(path: &Path, entries: &[(&str, String)]) -> Result<(), OutputError> {
    let version = [("format_version", FORMAT_VERSION.to_string())];
    write_table(
        path,
        &["key", "value"],
        version.iter().chain(entries).map(|(k, v)| vec![k.to_string(), v.clone()]),
    )
}

/// Cell centers followed by `rho`, `theta` and the velocity components.
pub fn write_snapshot(path: &Path, state: &State) -> Result<(), OutputError> {
    let g = state.grid();
    let dim = g.dim();
    let mut header = vec!["x"];
    if dim == 2 {
        header.push("y");
    }
    header.extend(["rho", "theta", "u_x"]);
    if dim == 2 {
        header.push("u_y");
    }
    let rows = (0..g.cells()).map(|c| {
        let x = g.center(c);
        let mut row: Vec<String> = x[..dim].iter().map(|v| fmt_f64(*v)).collect();
        row.push(fmt_f64(state.rho.values()[c]));
        row.push(fmt_f64(state.theta.values()[c]));
        row.extend((0..dim).map(|a| fmt_f64(state.u.component(a)[c])));
        row
    });
    write_table(path, &header, rows)
}

pub fn snapshot_name(step: usize) -> String {
    format!("snap_{step:06}.csv")
}

/// Streams `diagnostics.csv` and snapshots while feeding an [`InvariantMonitor`].
pub struct RunWriter {
    dir: PathBuf,
    diagnostics: csv::Writer<BufWriter<File>>,
    snapshot_every: usize,
    total_steps: usize,
    last: Option<(usize, State)>,
    pub monitor: InvariantMonitor,
}

impl RunWriter {
    pub fn new(dir: &Path, snapshot_every: usize, total_steps: usize, monitor: InvariantMonitor) -> Result<Self, OutputError> {
        let path = dir.join("diagnostics.csv");
        let mut diagnostics = create(&path)?;
        let header: Vec<&str> = DiagnosticsRecord::column_names().to_vec();
        diagnostics.write_record(&header).map_err(csv_err(&path))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            diagnostics,
            snapshot_every,
            total_steps,
            last: None,
            monitor,
        })
    }

    /// Flushes the diagnostics and writes the final snapshot if the cadence skipped it.
    pub fn finish(mut self) -> Result<InvariantMonitor, OutputError> {
        let path = self.dir.join("diagnostics.csv");
        self.diagnostics.flush().map_err(|source| OutputError::Io { path, source })?;
        if let Some((step, state)) = self.last.take() {
            write_snapshot(&self.dir.join(snapshot_name(step)), &state)?;
        }
        Ok(self.monitor)
    }
}

impl Observer for RunWriter {
    type Error = OutputError;

    fn observe(&mut self, step: usize, state: &State, record: &DiagnosticsRecord) -> Result<(), OutputError> {
        let _ = self.monitor.observe(step, state, record);
        let path = self.dir.join("diagnostics.csv");
        self.diagnostics
            .write_record(record.columns().iter().map(|(_, v)| fmt_f64(*v)))
            .map_err(csv_err(&path))?;
        let due = step == 0 || step == self.total_steps || (self.snapshot_every > 0 && step.is_multiple_of(self.snapshot_every));
        if due {
            write_snapshot(&self.dir.join(snapshot_name(step)), state)?;
            self.last = None;
        } else {
            self.last = Some((step, state.clone()));
        }
        Ok(())
    }
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<(), OutputError> {
    let io = |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = File::create(path).map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0, -2.5e-300, 1e16, 123456.789, f64::MIN_POSITIVE, 1.0 / 3.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(1.0), "1.0");
    }

    #[test]
    fn summary_starts_with_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.csv");
        write_summary(&path, &[("steps", "3".into())]).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text, format!("key,value\nformat_version,{FORMAT_VERSION}\nsteps,3\n"));
    }
}
