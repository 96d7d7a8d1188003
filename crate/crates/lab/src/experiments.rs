//! Refinement and regularization sweeps, manufactured solutions, and the
//! empirical existence horizon of sharp cold spots.

use std::convert::Infallible;
use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use brinkman_fourier::diagnostics::DiagnosticsContext;
use brinkman_fourier::evolution::{self, Forcing, NoForcing, RunError, RunSummary, State, Termination};
use brinkman_fourier::{Error, Grid, ModelParams, ScalarField, TimeStepConfig, VectorField};

use crate::config::RunConfig;
use crate::initial::{InitialSpec, NotPositive};
use crate::monitor::InvariantMonitor;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Setup(#[from] Error),
    #[error(transparent)]
    Initial(#[from] NotPositive),
    #[error("invalid study: {0}")]
    Spec(String),
}

/// Applies `f` to every item on up to `threads` workers; results keep the input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                out.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    out.into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every item is processed"))
        .collect()
}

/// Initial state (velocity zero) and monitor context of a configuration.
pub fn prepare(cfg: &RunConfig) -> Result<(State, DiagnosticsContext), ExperimentError> {
    let grid = cfg.grid.build()?;
    let (rho, theta) = cfg.initial.build(&grid)?;
    let ctx = DiagnosticsContext::for_initial(cfg.model, &theta, cfg.time.solver_tol, cfg.time.max_iter);
    Ok((State::at_rest(rho, theta)?, ctx))
}

/// A finished run together with its invariant checks.
#[derive(Debug, Clone)]
pub struct MemberRun {
    pub summary: RunSummary,
    pub monitor: InvariantMonitor,
}

impl MemberRun {
    pub fn invariants_hold(&self, cfg: &RunConfig) -> bool {
        self.summary.termination.is_completed() && self.monitor.all_pass(&cfg.model, &cfg.time, false)
    }
}

fn setup_error(e: RunError<Infallible>) -> Error {
    match e {
        RunError::Setup(e) => e,
        RunError::Observer(never) => match never {},
    }
}

/// Runs `cfg` to completion or the first failure.
pub fn run_monitored(cfg: &RunConfig) -> Result<MemberRun, ExperimentError> {
    let (state, ctx) = prepare(cfg)?;
    let mut monitor = InvariantMonitor::default();
    let summary = evolution::run(&state, &cfg.time, &cfg.model, &ctx, &NoForcing, &mut monitor).map_err(setup_error)?;
    Ok(MemberRun { summary, monitor })
}

pub fn termination_label(t: &Termination) -> String {
    match t {
        Termination::Completed => "completed".into(),
        Termination::PositivityAbort { step, .. } => format!("positivity_abort@{step}"),
        Termination::SolverFailure { step, .. } => format!("solver_failure@{step}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Values are relative spacings `1/n` of the first axis.
    Mesh,
    Eps,
    Delta,
    Dt,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Mesh => "mesh",
            Axis::Eps => "eps",
            Axis::Delta => "delta",
            Axis::Dt => "dt",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "mesh" => Axis::Mesh,
            "eps" => Axis::Eps,
            "delta" => Axis::Delta,
            "dt" => Axis::Dt,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L2,
    Linf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: Axis,
    /// Strictly decreasing; the last entry is the reference run.
    pub values: Vec<f64>,
    pub norm: Norm,
}

fn mesh_cells(value: f64) -> Option<usize> {
    let n = (1.0 / value).round();
    let exact = value > 0.0 && n >= 4.0 && (n as usize).is_power_of_two() && 1.0 / n == value;
    exact.then_some(n as usize)
}

impl SweepSpec {
    pub fn validate(&self, base: &RunConfig) -> Result<(), String> {
        if self.values.len() < 3 {
            return Err("a sweep needs at least three values".into());
        }
        if let Some(v) = self.values.iter().find(|v| v.is_nan() || **v <= 0.0 || v.is_infinite()) {
            return Err(format!("sweep value {v} is not positive"));
        }
        if self.values.windows(2).any(|w| w[0] <= w[1]) {
            return Err("sweep values must be strictly decreasing".into());
        }
        match self.axis {
            Axis::Mesh => {
                if let Some(v) = self.values.iter().find(|v| mesh_cells(**v).is_none()) {
                    return Err(format!("mesh value {v} is not 1/n for a power of two n >= 4"));
                }
                if base.grid.dim() == 2 && !base.grid.n[1].is_multiple_of(base.grid.n[0]) && !base.grid.n[0].is_multiple_of(base.grid.n[1]) {
                    return Err("2D mesh sweeps need commensurate cell counts".into());
                }
            }
            Axis::Dt => {
                for &dt in &self.values {
                    let steps = base.time.t_end / dt;
                    if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
                        return Err(format!("t_end is not a whole number of steps of {dt}"));
                    }
                }
            }
            Axis::Eps | Axis::Delta => {}
        }
        Ok(())
    }

    /// Base configuration with the axis set to `value`.
    pub fn member(&self, base: &RunConfig, value: f64) -> RunConfig {
        let mut cfg = base.clone();
        match self.axis {
            Axis::Mesh => cfg.grid = base.grid.with_cells(mesh_cells(value).expect("validated")),
            Axis::Eps => cfg.model.eps = value,
            Axis::Delta => cfg.model.delta = value,
            Axis::Dt => cfg.time.dt = value,
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    /// Distance of the final state to the reference run; `None` if either run failed.
    pub distance: Option<f64>,
    /// `log(d_prev / d) / log(v_prev / v)` against the previous row.
    pub order: Option<f64>,
    pub termination: String,
    pub invariants_hold: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axis: Axis,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn all_invariants_hold(&self) -> bool {
        self.rows.iter().all(|r| r.invariants_hold)
    }

    /// Distances strictly decrease down the table.
    pub fn strictly_decreasing(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| matches!((w[0].distance, w[1].distance), (Some(a), Some(b)) if a > b))
    }
}

/// Block averages of a fine field onto `coarse`, whose cell counts divide the fine ones.
pub fn restrict(f: &[f64], fine: &Grid, coarse: &Grid) -> Vec<f64> {
    let rx = fine.n(0) / coarse.n(0);
    let ry = if fine.dim() == 2 { fine.n(1) / coarse.n(1) } else { 1 };
    let mut out = vec![0.0; coarse.cells()];
    for c in 0..fine.cells() {
        let k = fine.coords(c);
        let cc = coarse.index(k[0] / rx, if fine.dim() == 2 { k[1] / ry } else { 0 });
        out[cc] += f[c];
    }
    let w = (rx * ry) as f64;
    out.iter_mut().for_each(|v| *v /= w);
    out
}

/// Distance between `(rho, theta, u)` of two states on the same grid, after
/// restricting `b` when it lives on a finer grid.
pub fn field_distance(a: &State, b: &State, norm: Norm) -> f64 {
    let (ga, gb) = (a.grid(), b.grid());
    let pull = |f: &[f64]| if ga == gb { f.to_vec() } else { restrict(f, gb, ga) };
    let mut pairs: Vec<(Vec<f64>, &[f64])> = vec![(pull(b.rho.values()), a.rho.values()), (pull(b.theta.values()), a.theta.values())];
    for ax in 0..ga.dim() {
        pairs.push((pull(b.u.component(ax)), a.u.component(ax)));
    }
    let diffs = pairs.iter().flat_map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| p - q));
    match norm {
        Norm::L2 => (diffs.map(|d| d * d).sum::<f64>() * ga.cell_volume()).sqrt(),
        Norm::Linf => diffs.fold(0.0, |m, d| m.max(d.abs())),
    }
}

/// Runs every member of the sweep and measures final-state distances to the last one.
pub fn run_sweep(base: &RunConfig, spec: &SweepSpec, threads: usize) -> Result<SweepTable, ExperimentError> {
    spec.validate(base).map_err(ExperimentError::Spec)?;
    let members: Vec<RunConfig> = spec.values.iter().map(|&v| spec.member(base, v)).collect();
    let runs = par_map(&members, threads, run_monitored);
    let runs: Vec<MemberRun> = runs.into_iter().collect::<Result<_, _>>()?;
    let reference = runs.last().expect("validated length");
    let ref_ok = reference.summary.termination.is_completed();
    let mut rows: Vec<SweepRow> = Vec::with_capacity(runs.len());
    for ((run, cfg), &value) in runs.iter().zip(&members).zip(&spec.values) {
        let distance = (ref_ok && run.summary.termination.is_completed())
            .then(|| field_distance(&run.summary.final_state, &reference.summary.final_state, spec.norm));
        let order = rows.last().and_then(|prev| match (prev.distance, distance) {
            (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some((a / b).ln() / (prev.value / value).ln()),
            _ => None,
        });
        rows.push(SweepRow {
            value,
            distance,
            order,
            termination: termination_label(&run.summary.termination),
            invariants_hold: run.invariants_hold(cfg),
        });
    }
    Ok(SweepTable { axis: spec.axis, rows })
}

/// Which manufactured solution [`run_mms`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmsKind {
    /// Steady fields with a nonzero velocity.
    Static,
    /// Time-dependent fields with `dt` proportional to `h`.
    Advective,
    /// Steady fields at rest, so only the diffusion stencils contribute error.
    Diffusive,
}

impl MmsKind {
    pub fn name(self) -> &'static str {
        match self {
            MmsKind::Static => "static",
            MmsKind::Advective => "advective",
            MmsKind::Diffusive => "diffusive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "static" => MmsKind::Static,
            "advective" => MmsKind::Advective,
            "diffusive" => MmsKind::Diffusive,
            _ => return None,
        })
    }

    /// Expected convergence order: upwind transport is first order, the
    /// centered diffusion stencils second order.
    pub fn formal_order(self) -> f64 {
        match self {
            MmsKind::Diffusive => 2.0,
            MmsKind::Static | MmsKind::Advective => 1.0,
        }
    }
}

/// `rho = 1 + a_rho cos(kx) T`, `theta = 1 + a_theta cos(kx) T`, `u = a_u sin(kx) T`
/// on `[0, 1]` with `k = pi` and `T(t) = 1 + tau sin(omega t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Manufactured {
    pub a_rho: f64,
    pub a_theta: f64,
    pub a_u: f64,
    pub tau: f64,
    pub omega: f64,
    pub params: ModelParams,
}

struct Point {
    rho: [f64; 4],
    theta: [f64; 4],
    u: [f64; 3],
}

impl Manufactured {
    pub fn for_kind(kind: MmsKind, params: ModelParams) -> Self {
        let (a_u, tau) = match kind {
            MmsKind::Static => (0.3, 0.0),
            MmsKind::Advective => (0.5, 0.5),
            MmsKind::Diffusive => (0.0, 0.0),
        };
        Self {
            a_rho: 0.2,
            a_theta: 0.3,
            a_u,
            tau,
            omega: 2.0 * PI,
            params,
        }
    }

    /// Values and derivatives: `rho, rho_x, rho_xx, rho_t`, same for `theta`, and `u, u_x, u_xx`.
    fn at(&self, x: f64, t: f64) -> Point {
        let k = PI;
        let (c, s) = ((k * x).cos(), (k * x).sin());
        let tt = 1.0 + self.tau * (self.omega * t).sin();
        let dtt = self.tau * self.omega * (self.omega * t).cos();
        let scalar = |a: f64| [1.0 + a * c * tt, -a * k * s * tt, -a * k * k * c * tt, a * c * dtt];
        Point {
            rho: scalar(self.a_rho),
            theta: scalar(self.a_theta),
            u: [self.a_u * s * tt, self.a_u * k * c * tt, -self.a_u * k * k * s * tt],
        }
    }

    pub fn exact(&self, grid: &Grid, t: f64) -> State {
        let rho = ScalarField::from_fn(*grid, |x| self.at(x[0], t).rho[0]);
        let theta = ScalarField::from_fn(*grid, |x| self.at(x[0], t).theta[0]);
        let u = VectorField::from_fn(*grid, |x| [self.at(x[0], t).u[0], 0.0]);
        State::new(rho, theta, u, t).expect("manufactured fields are positive")
    }
}

impl Forcing for Manufactured {
    fn density(&self, grid: &Grid, t: f64) -> Option<ScalarField> {
        let p = &self.params;
        Some(ScalarField::from_fn(*grid, |x| {
            let Point { rho: r, u, .. } = self.at(x[0], t);
            r[3] + r[1] * u[0] + r[0] * u[1] - p.eps * r[2]
        }))
    }

    fn energy(&self, grid: &Grid, t: f64) -> Option<ScalarField> {
        let p = &self.params;
        Some(ScalarField::from_fn(*grid, |x| {
            let Point { rho: r, theta: th, u } = self.at(x[0], t);
            let e_t = p.k1 * (r[3] * th[0] + r[0] * th[3]);
            let e_x = p.k1 * (r[1] * th[0] + r[0] * th[1]);
            let flux_div = e_x * u[0] + p.k1 * r[0] * th[0] * u[1];
            let mech = p.mu * u[1] * u[1] + p.nu * r[0] * u[0] * u[0] - p.k2 * r[0] * th[0] * u[1];
            let barrier = p.delta * (th[0].powi(-2) - th[0].powi(5));
            let heating = p.eps * p.delta * (r[0].powf(p.gamma_exp) + 2.0) * r[1] * r[1];
            e_t + flux_div - p.kappa * th[2] - mech - barrier - heating
        }))
    }

    fn momentum(&self, grid: &Grid, t: f64) -> Option<VectorField> {
        let p = &self.params;
        Some(VectorField::from_fn(*grid, |x| {
            let Point { rho: r, theta: th, u } = self.at(x[0], t);
            [p.nu * r[0] * u[0] - p.mu * u[2] + p.k2 * (r[1] * th[0] + r[0] * th[1]), 0.0]
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmsSpec {
    pub kind: MmsKind,
    pub resolutions: Vec<usize>,
    pub t_end: f64,
    /// `dt = dt_factor * h`.
    pub dt_factor: f64,
    pub params: ModelParams,
    pub solver_tol: f64,
}

impl MmsSpec {
    pub fn new(kind: MmsKind, resolutions: Vec<usize>) -> Self {
        Self {
            kind,
            resolutions,
            t_end: 0.5,
            dt_factor: 0.5,
            params: ModelParams::default(),
            solver_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmsRow {
    pub n: usize,
    pub dt: f64,
    /// L2 errors of `rho`, `theta`, `u` and all three combined.
    pub errors: [f64; 4],
    pub orders: Option<[f64; 4]>,
}

/// Errors at `t_end` against the manufactured solution under simultaneous refinement.
pub fn run_mms(spec: &MmsSpec, threads: usize) -> Result<Vec<MmsRow>, ExperimentError> {
    if spec.resolutions.len() < 2 || spec.resolutions.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ExperimentError::Spec("resolutions must increase and contain at least two entries".into()));
    }
    let m = Manufactured::for_kind(spec.kind, spec.params);
    let results = par_map(&spec.resolutions, threads, |&n| -> Result<(f64, [f64; 4]), ExperimentError> {
        let grid = Grid::new_1d(n, 1.0)?;
        let steps = (spec.t_end / (spec.dt_factor * grid.h(0))).round().max(1.0);
        let cfg = TimeStepConfig {
            dt: spec.t_end / steps,
            t_end: spec.t_end,
            solver_tol: spec.solver_tol,
            ..TimeStepConfig::default()
        };
        let init = m.exact(&grid, 0.0);
        let ctx = DiagnosticsContext::for_initial(spec.params, &init.theta, cfg.solver_tol, cfg.max_iter);
        let mut monitor = InvariantMonitor::default();
        let summary = evolution::run(&init, &cfg, &spec.params, &ctx, &m, &mut monitor).map_err(setup_error)?;
        match summary.termination {
            Termination::Completed => {}
            Termination::PositivityAbort { error, .. } | Termination::SolverFailure { error, .. } => return Err(error.into()),
        }
        let fin = &summary.final_state;
        let exact = m.exact(&grid, fin.t);
        let err = |a: &[f64], b: &[f64]| (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() * grid.cell_volume()).sqrt();
        let e = [
            err(fin.rho.values(), exact.rho.values()),
            err(fin.theta.values(), exact.theta.values()),
            err(fin.u.component(0), exact.u.component(0)),
            field_distance(fin, &exact, Norm::L2),
        ];
        Ok((cfg.dt, e))
    });
    let mut rows: Vec<MmsRow> = Vec::new();
    for (&n, r) in spec.resolutions.iter().zip(results) {
        let (dt, errors) = r?;
        let orders = rows.last().map(|prev| {
            let ratio = (n as f64 / prev.n as f64).ln();
            std::array::from_fn(|i| (prev.errors[i] / errors[i]).ln() / ratio)
        });
        rows.push(MmsRow { n, dt, errors, orders });
    }
    Ok(rows)
}

/// Family of sharp, dense cold spots on `[0, 1]`:
/// `theta = 1 - depth a g`, `rho = 1 + density a g`, `g` a Gaussian of
/// `width_cells` cells, all advanced with the smallest CFL-limited step of the family.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSpec {
    pub n: usize,
    pub amplitudes: Vec<f64>,
    pub depth: f64,
    pub density: f64,
    pub width_cells: f64,
    pub params: ModelParams,
    pub steps: usize,
    pub cfl_safety: f64,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            n: 64,
            amplitudes: vec![0.0, 0.1, 0.5, 1.0],
            depth: 0.99,
            density: 50.0,
            width_cells: 1.5,
            params: ModelParams {
                mu: 1e-3,
                kappa: 1e-3,
                ..ModelParams::default()
            },
            steps: 200,
            cfl_safety: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub amplitude: f64,
    pub completed: bool,
    /// Time of the last accepted state before a positivity abort.
    pub t_abort: Option<f64>,
    pub min_theta: f64,
    pub termination: String,
}

impl ProbeSpec {
    fn config(&self, amplitude: f64, dt: f64) -> RunConfig {
        let h = 1.0 / self.n as f64;
        RunConfig {
            model: self.params,
            grid: crate::config::GridSpec {
                n: vec![self.n],
                length: vec![1.0],
            },
            time: TimeStepConfig {
                dt,
                t_end: dt * self.steps as f64,
                cfl_safety: self.cfl_safety,
                ..TimeStepConfig::default()
            },
            initial: InitialSpec::ColdSpot {
                depth: self.depth * amplitude,
                width: self.width_cells * h,
                density: self.density * amplitude,
            },
            ..RunConfig::default()
        }
    }

    /// Step size shared by every member: the smallest CFL limit of the initial velocities.
    pub fn dt(&self) -> Result<f64, ExperimentError> {
        let mut dt = 1.0 / self.n as f64;
        for &a in &self.amplitudes {
            let probe = self.config(a, 1.0);
            let (mut state, _) = prepare(&probe)?;
            evolution::equilibrate_velocity(&mut state, &probe.model, &probe.time, &NoForcing)?;
            dt = dt.min(evolution::cfl_limit(&state.u, self.cfl_safety));
        }
        Ok(dt)
    }
}

/// Runs each amplitude until `steps` or the first positivity abort.
pub fn local_existence_probe(spec: &ProbeSpec, threads: usize) -> Result<Vec<ProbeRow>, ExperimentError> {
    let dt = spec.dt()?;
    let runs = par_map(&spec.amplitudes, threads, |&a| run_monitored(&spec.config(a, dt)));
    spec.amplitudes
        .iter()
        .zip(runs)
        .map(|(&amplitude, run)| {
            let run = run?;
            let t_abort = match run.summary.termination {
                Termination::PositivityAbort { t, .. } => Some(t),
                _ => None,
            };
            Ok(ProbeRow {
                amplitude,
                completed: run.summary.termination.is_completed(),
                t_abort,
                min_theta: run.monitor.min_theta,
                termination: termination_label(&run.summary.termination),
            })
        })
        .collect()
}
