use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use brinkman_fourier::evolution::{self, NoForcing, RunError, Termination};
use clap::{Parser, Subcommand, ValueEnum};

use bflab::config::{parse_config, RunConfig};
use bflab::derive::{derive_report, POINTWISE_TOL};
use bflab::experiments::{prepare, run_mms, run_sweep, termination_label, Axis, ExperimentError, MmsKind, MmsSpec, Norm, SweepSpec};
use bflab::monitor::InvariantMonitor;
use bflab::output::{fmt_f64, write_summary, write_table, OutputError, RunWriter};

const EXIT_CHECK: u8 = 1;
const EXIT_POSITIVITY: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_USAGE: u8 = 64;

/// Number of random `(rho, theta)` points in `derive-check`.
const DERIVE_SAMPLES: usize = 10_000;

#[derive(Parser)]
#[command(name = "bflab", version, about = "Numerical lab for the Brinkman-Fourier ideal gas system")]
struct Cli {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write diagnostics, snapshots and a summary.
    Simulate,
    /// Check the thermodynamic identities on the built-in models.
    DeriveCheck {
        /// Add a model with a deliberately wrong derivative; the check must fail.
        #[arg(long)]
        self_test_negative: bool,
    },
    /// Run the base configuration along one parameter axis.
    Sweep {
        #[arg(long)]
        axis: String,
        /// Strictly decreasing, comma separated; `1/n` is accepted.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long, value_enum, default_value_t = NormArg::L2)]
        norm: NormArg,
    },
    /// Convergence against a manufactured solution.
    Mms {
        #[arg(long, value_delimiter = ',', default_values_t = [32usize, 64, 128, 256])]
        resolutions: Vec<usize>,
        #[arg(long, default_value = "advective")]
        kind: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    L2,
    Linf,
}

/// Error carrying its exit code.
struct Failure(u8, String);

impl From<OutputError> for Failure {
    fn from(e: OutputError) -> Self {
        Failure(EXIT_IO, e.to_string())
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        Failure(EXIT_USAGE, e.to_string())
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        None => RunConfig::default(),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure(EXIT_IO, format!("{}: {e}", path.display())))?;
            parse_config(&text).map_err(|e| Failure(EXIT_USAGE, format!("{}:\n{e}", path.display())))?
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let dir = cli.out.clone().or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(|e| Failure(EXIT_IO, format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn simulate(cli: &Cli) -> Result<u8, Failure> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, &cfg)?;
    let (state, ctx) = prepare(&cfg)?;
    let total = (cfg.time.t_end / cfg.time.dt).ceil() as usize;
    let mut writer = RunWriter::new(&dir, cfg.output.snapshot_every, total, InvariantMonitor::default())?;
    let summary = match evolution::run(&state, &cfg.time, &cfg.model, &ctx, &NoForcing, &mut writer) {
        Ok(s) => s,
        Err(RunError::Setup(e)) => return Err(Failure(EXIT_USAGE, e.to_string())),
        Err(RunError::Observer(e)) => return Err(e.into()),
    };
    let monitor = writer.finish()?;
    let checks = monitor.checks(&cfg.model, &cfg.time, false);

    let mut entries: Vec<(&str, String)> = vec![
        ("termination", termination_label(&summary.termination)),
        ("steps", summary.steps.to_string()),
        ("t", fmt_f64(summary.final_state.t)),
    ];
    let (abort_step, abort_t, error) = match &summary.termination {
        Termination::Completed => (String::new(), String::new(), String::new()),
        Termination::PositivityAbort { step, t, error } | Termination::SolverFailure { step, t, error } => {
            (step.to_string(), fmt_f64(*t), error.to_string())
        }
    };
    entries.extend([
        ("abort_step", abort_step),
        ("abort_t", abort_t),
        ("error", error),
        ("picard_warnings", summary.picard_warnings.to_string()),
        ("max_picard_iterations", summary.max_picard_iterations.to_string()),
        ("min_rho", fmt_f64(monitor.min_rho)),
        ("min_theta", fmt_f64(monitor.min_theta)),
        ("seed", cfg.seed.to_string()),
    ]);
    for c in &checks {
        entries.push((c.name, fmt_f64(c.value)));
    }
    write_summary(&dir.join("summary.csv"), &entries)?;

    println!("{} after {} steps, t = {}", termination_label(&summary.termination), summary.steps, summary.final_state.t);
    for c in &checks {
        println!("  {:<18} {:>12.3e}  bound {:>10.3e}  {}", c.name, c.value, c.bound, if c.pass { "ok" } else { "FAIL" });
    }
    Ok(match summary.termination {
        Termination::PositivityAbort { .. } => EXIT_POSITIVITY,
        Termination::SolverFailure { .. } => EXIT_SOLVER,
        Termination::Completed if checks.iter().all(|c| c.pass) => 0,
        Termination::Completed => EXIT_CHECK,
    })
}

fn derive_check(cli: &Cli, negative: bool) -> Result<u8, Failure> {
    let cfg = load_config(cli)?;
    let rows = derive_report(cfg.seed, DERIVE_SAMPLES, negative).map_err(|e| Failure(EXIT_CHECK, e.to_string()))?;
    println!("{:<40} {:<44} {:>12} {:>8}  result", "model", "identity", "max_resid", "ratio");
    for r in &rows {
        let ratio = r.refinement_ratio.map_or_else(|| "-".into(), |x| format!("{x:.2}"));
        println!(
            "{:<40} {:<44} {:>12.3e} {:>8}  {}",
            r.model,
            r.identity,
            r.max_residual,
            ratio,
            if r.passed { "pass" } else { "FAIL" }
        );
    }
    let failed = rows.iter().filter(|r| !r.passed).count();
    println!("{} checks, {failed} failed (pointwise tolerance {POINTWISE_TOL:e})", rows.len());
    Ok(if failed == 0 { 0 } else { EXIT_CHECK })
}

fn parse_value(s: &str) -> Option<f64> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?,
        None => s.parse().ok()?,
    };
    v.is_finite().then_some(v)
}

fn timestamp() -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    secs.to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, fmt_f64)
}

fn sweep(cli: &Cli, axis: &str, values: &[String], norm: NormArg) -> Result<u8, Failure> {
    let axis = Axis::parse(axis).ok_or_else(|| Failure(EXIT_USAGE, format!("unknown axis `{axis}` (mesh, eps, delta, dt)")))?;
    let values = values
        .iter()
        .map(|v| parse_value(v).ok_or_else(|| Failure(EXIT_USAGE, format!("bad sweep value `{v}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    let norm = match norm {
        NormArg::L2 => Norm::L2,
        NormArg::Linf => Norm::Linf,
    };
    let cfg = load_config(cli)?;
    let spec = SweepSpec { axis, values, norm };
    spec.validate(&cfg).map_err(|m| Failure(EXIT_USAGE, m))?;
    let dir = out_dir(cli, &cfg)?;
    let table = run_sweep(&cfg, &spec, cli.threads)?;

    let name = format!("{}_{}.csv", axis.name(), timestamp());
    let rows = table.rows.iter().map(|r| {
        vec![
            fmt_f64(r.value),
            opt(r.distance),
            opt(r.order),
            r.termination.clone(),
            r.invariants_hold.to_string(),
        ]
    });
    write_table(&dir.join(&name), &["value", "distance", "order", "termination", "invariants_hold"], rows)?;
    let ok = table.all_invariants_hold();
    write_summary(
        &dir.join("summary.csv"),
        &[
            ("study", "sweep".into()),
            ("axis", axis.name().into()),
            ("table", name.clone()),
            ("strictly_decreasing", table.strictly_decreasing().to_string()),
            ("all_invariants_hold", ok.to_string()),
        ],
    )?;
    println!("{:>12} {:>12} {:>8}  termination", axis.name(), "distance", "order");
    for r in &table.rows {
        let d = r.distance.map_or_else(|| "-".into(), |d| format!("{d:.4e}"));
        let o = r.order.map_or_else(|| "-".into(), |o| format!("{o:.3}"));
        println!("{:>12.4e} {d:>12} {o:>8}  {}{}", r.value, r.termination, if r.invariants_hold { "" } else { " (invariant violated)" });
    }
    println!("wrote {}", dir.join(name).display());
    Ok(if ok { 0 } else { EXIT_CHECK })
}

fn mms(cli: &Cli, resolutions: &[usize], kind: &str) -> Result<u8, Failure> {
    let kind = MmsKind::parse(kind).ok_or_else(|| Failure(EXIT_USAGE, format!("unknown kind `{kind}` (static, advective, diffusive)")))?;
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, &cfg)?;
    let spec = MmsSpec::new(kind, resolutions.to_vec());
    let rows = match run_mms(&spec, cli.threads) {
        Ok(rows) => rows,
        Err(ExperimentError::Setup(e)) => {
            eprintln!("run failed: {e}");
            return Ok(EXIT_CHECK);
        }
        Err(e) => return Err(e.into()),
    };
    let header = ["n", "dt", "err_rho", "err_theta", "err_u", "err_all", "order_rho", "order_theta", "order_u", "order_all"];
    let table = rows.iter().map(|r| {
        let mut row = vec![r.n.to_string(), fmt_f64(r.dt)];
        row.extend(r.errors.iter().map(|e| fmt_f64(*e)));
        row.extend((0..4).map(|i| opt(r.orders.map(|o| o[i]))));
        row
    });
    let name = format!("mms_{}.csv", kind.name());
    write_table(&dir.join(&name), &header, table)?;
    let last = rows.last().and_then(|r| r.orders).map_or(f64::NAN, |o| o[3]);
    let ok = last >= kind.formal_order() - 0.1;
    write_summary(
        &dir.join("summary.csv"),
        &[
            ("study", "mms".into()),
            ("kind", kind.name().into()),
            ("table", name),
            ("formal_order", fmt_f64(kind.formal_order())),
            ("observed_order", fmt_f64(last)),
        ],
    )?;
    println!("{:>6} {:>10} {:>12} {:>8}", "n", "dt", "error", "order");
    for r in &rows {
        let o = r.orders.map_or_else(|| "-".into(), |o| format!("{:.3}", o[3]));
        println!("{:>6} {:>10.3e} {:>12.4e} {o:>8}", r.n, r.dt, r.errors[3]);
    }
    println!("observed order {last:.3}, formal {}", kind.formal_order());
    Ok(if ok { 0 } else { EXIT_CHECK })
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which is reserved for positivity aborts here.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(EXIT_USAGE);
    }
    let result = match &cli.command {
        Command::Simulate => simulate(&cli),
        Command::DeriveCheck { self_test_negative } => derive_check(&cli, *self_test_negative),
        Command::Sweep { axis, values, norm } => sweep(&cli, axis, values, *norm),
        Command::Mms { resolutions, kind } => mms(&cli, resolutions, kind),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
