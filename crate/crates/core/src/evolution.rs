//! Time stepping of the regularized system.
//!
//! Each step runs a Picard iteration. Given the iterate `(rho_k, theta_k)` the
//! velocity `u_k` comes from the Brinkman solve; density and the conserved
//! internal energy `E = k1 rho theta` are then advanced from the previous time
//! level with `u_k` and sources frozen at the iterate:
//!
//! * density: explicit upwind transport, backward Euler artificial viscosity;
//! * energy: explicit upwind transport, explicit work and dissipation sources,
//!   backward Euler heat conduction, then a per-cell Newton solve that treats
//!   the stiff pair `delta / theta^2 - delta theta^5` implicitly.
//!
//! Because the dissipation density is the exact face energy of the velocity
//! Laplacian and the divergence is the adjoint of the gradient, the work and
//! dissipation sources cancel in the domain sum up to the Brinkman solver
//! tolerance. Mass and energy corrections on the linear solves remove the
//! remaining CG defect from the sums, so the discrete balances telescope.

use alloc::vec::Vec;

use crate::brinkman::{self, BrinkmanSystem};
use crate::cg;
use crate::constitutive::ModelParams;
use crate::diagnostics::{self, DiagnosticsContext, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::grid::{self, Grid, ScalarField, VectorField};
use crate::math::{powf, sqrt};

/// Density, temperature, velocity and time.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub rho: ScalarField,
    pub theta: ScalarField,
    pub u: VectorField,
    pub t: f64,
}

impl State {
    /// Checks grid agreement, finiteness and strict positivity of `rho` and `theta`.
    pub fn new(rho: ScalarField, theta: ScalarField, u: VectorField, t: f64) -> Result<Self> {
        let s = Self { rho, theta, u, t };
        s.validate()?;
        Ok(s)
    }

    /// A state with zero velocity; use [`equilibrate_velocity`] to make `u` consistent.
    pub fn at_rest(rho: ScalarField, theta: ScalarField) -> Result<Self> {
        let u = VectorField::zeros(*rho.grid());
        Self::new(rho, theta, u, 0.0)
    }

    pub fn grid(&self) -> &Grid {
        self.rho.grid()
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.grid() != self.rho.grid() || self.u.grid() != self.rho.grid() {
            return Err(Error::GridMismatch);
        }
        check_positive("rho", &self.rho, 0.0)?;
        check_positive("theta", &self.theta, 0.0)?;
        for a in 0..self.grid().dim() {
            if let Some(cell) = self.u.component(a).iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { field: "u", cell });
            }
        }
        Ok(())
    }

    pub fn mass(&self) -> f64 {
        grid::integrate(&self.rho)
    }
}

fn check_positive(field: &'static str, f: &ScalarField, threshold: f64) -> Result<()> {
    for (cell, &v) in f.values().iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { field, cell });
        }
        if !(v > threshold) {
            return Err(Error::Positivity {
                field,
                cell,
                value: v,
                threshold,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeStepConfig {
    pub dt: f64,
    pub t_end: f64,
    pub cfl_safety: f64,
    /// Bound on the volume-weighted L2 change of `(rho, theta)` between Picard iterates.
    pub picard_tol: f64,
    pub picard_max: usize,
    pub theta_floor: f64,
    /// Relative tolerance of every CG solve.
    pub solver_tol: f64,
    pub max_iter: usize,
}

impl Default for TimeStepConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            t_end: 10.0,
            cfl_safety: 0.5,
            picard_tol: 1e-10,
            picard_max: 50,
            theta_floor: 1e-10,
            solver_tol: 1e-12,
            max_iter: 20_000,
        }
    }
}

impl TimeStepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, value, reason| Err(Error::InvalidArgument { name, value, reason });
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", self.dt, "time step must be positive");
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad("t_end", self.t_end, "horizon must be nonnegative");
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad("cfl_safety", self.cfl_safety, "must lie in (0, 1]");
        }
        if !(self.picard_tol > 0.0) {
            return bad("picard_tol", self.picard_tol, "must be positive");
        }
        if self.picard_max == 0 {
            return bad("picard_max", 0.0, "at least one Picard iteration is required");
        }
        if !(self.theta_floor >= 0.0) {
            return bad("theta_floor", self.theta_floor, "must be nonnegative");
        }
        if !(self.solver_tol > 0.0 && self.solver_tol <= 1e-6) {
            return bad("solver_tol", self.solver_tol, "must lie in (0, 1e-6]");
        }
        if self.max_iter == 0 {
            return bad("max_iter", 0.0, "must be positive");
        }
        Ok(())
    }

    /// Number of steps needed to reach `t_end` (the last step is not shortened).
    pub fn steps(&self) -> usize {
        let n = self.t_end / self.dt;
        let r = libm::round(n);
        if (n - r).abs() <= 1e-9 * n.max(1.0) {
            r as usize
        } else {
            libm::ceil(n) as usize
        }
    }
}

/// External sources for manufactured-solution runs, sampled at cell centers.
pub trait Forcing {
    fn density(&self, _grid: &Grid, _t: f64) -> Option<ScalarField> {
        None
    }
    /// Source in the conserved energy equation.
    fn energy(&self, _grid: &Grid, _t: f64) -> Option<ScalarField> {
        None
    }
    /// Body force added to the Brinkman right-hand side.
    fn momentum(&self, _grid: &Grid, _t: f64) -> Option<VectorField> {
        None
    }
}

/// The unforced system.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoForcing;

impl Forcing for NoForcing {}

/// Largest admissible step `cfl_safety * h_min / max|u|` (infinite for `u = 0`).
pub fn cfl_limit(u: &VectorField, cfl_safety: f64) -> f64 {
    let m = u.max_abs();
    if m == 0.0 {
        f64::INFINITY
    } else {
        cfl_safety * u.grid().min_spacing() / m
    }
}

fn check_cfl(u: &VectorField, cfg: &TimeStepConfig) -> Result<()> {
    let limit = cfl_limit(u, cfg.cfl_safety);
    if cfg.dt > limit {
        Err(Error::Cfl { dt: cfg.dt, limit })
    } else {
        Ok(())
    }
}

/// Velocity of the Brinkman system at `(rho, theta)`.
pub fn solve_velocity(
    rho: &ScalarField,
    theta: &ScalarField,
    p: &ModelParams,
    cfg: &TimeStepConfig,
    force: Option<VectorField>,
    guess: Option<&VectorField>,
) -> Result<brinkman::BrinkmanSolution> {
    let mut sys = BrinkmanSystem::new(rho.clone(), theta.clone(), *p, cfg.solver_tol, cfg.max_iter)?;
    if let Some(f) = force {
        sys = sys.with_forcing(f)?;
    }
    brinkman::solve_brinkman_from(&sys, guess)
}

/// Replaces `state.u` by the Brinkman velocity of `(rho, theta)`.
pub fn equilibrate_velocity(state: &mut State, p: &ModelParams, cfg: &TimeStepConfig, forcing: &dyn Forcing) -> Result<()> {
    let sol = solve_velocity(
        &state.rho,
        &state.theta,
        p,
        cfg,
        forcing.momentum(state.grid(), state.t),
        Some(&state.u),
    )?;
    state.u = sol.u;
    Ok(())
}

/// Backward Euler solve of `(I - a Lap_N) x = b` with the domain sum of the
/// defect removed, so `sum x = sum b` up to summation roundoff.
fn implicit_neumann(grid: &Grid, weight: &[f64], a: f64, b: &[f64], guess: &[f64], cfg: &TimeStepConfig) -> Result<Vec<f64>> {
    let mut x = guess.to_vec();
    let lap_diag: Vec<f64> = (0..grid.cells())
        .map(|c| {
            let k = grid.coords(c);
            (0..grid.dim())
                .map(|ax| {
                    let n = grid.n(ax);
                    let w = if k[ax] == 0 || k[ax] + 1 == n { 1.0 } else { 2.0 };
                    w / (grid.h(ax) * grid.h(ax))
                })
                .sum::<f64>()
        })
        .collect();
    let diag: Vec<f64> = weight.iter().zip(&lap_diag).map(|(w, l)| w + a * l).collect();
    let mut lap = alloc::vec![0.0; grid.cells()];
    let apply = |v: &[f64], out: &mut [f64]| {
        grid::laplacian_neumann_into(grid, v, out);
        for i in 0..v.len() {
            out[i] = weight[i] * v[i] - a * out[i];
        }
    };
    cg::solve(apply, &diag, b, &mut x, cfg.solver_tol, cfg.max_iter)?;
    // Remove the summed defect with a constant shift, which the Neumann Laplacian annihilates.
    grid::laplacian_neumann_into(grid, &x, &mut lap);
    let mut defect = 0.0;
    for i in 0..x.len() {
        defect += b[i] - (weight[i] * x[i] - a * lap[i]);
    }
    let shift = defect / weight.iter().sum::<f64>();
    x.iter_mut().for_each(|v| *v += shift);
    Ok(x)
}

fn density_update(
    rho_old: &ScalarField,
    u: &VectorField,
    p: &ModelParams,
    cfg: &TimeStepConfig,
    source: Option<&ScalarField>,
) -> Result<ScalarField> {
    let grid = *rho_old.grid();
    let adv = grid::advect_upwind(rho_old, u);
    let mut rhs: Vec<f64> = rho_old
        .values()
        .iter()
        .zip(adv.values())
        .map(|(r, a)| r - cfg.dt * a)
        .collect();
    if let Some(s) = source {
        rhs.iter_mut().zip(s.values()).for_each(|(r, q)| *r += cfg.dt * q);
    }
    let values = if p.eps > 0.0 {
        let ones = alloc::vec![1.0; grid.cells()];
        implicit_neumann(&grid, &ones, cfg.dt * p.eps, &rhs, &rhs, cfg)?
    } else {
        rhs
    };
    let out = ScalarField::from_values(grid, values).map_err(|_| Error::NonFinite { field: "rho", cell: 0 })?;
    check_positive("rho", &out, 0.0)?;
    Ok(out)
}

/// One density step `rho' = rho - dt div_up(rho u) + dt eps Lap rho'` with the state's velocity.
pub fn step_density(state: &State, cfg: &TimeStepConfig, p: &ModelParams) -> Result<ScalarField> {
    check_cfl(&state.u, cfg)?;
    density_update(&state.rho, &state.u, p, cfg, None)
}

/// Integrated source terms of one energy step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergySources {
    /// `dt * int delta (theta'^-2 - theta'^5)` at the new temperature.
    pub delta_source: f64,
    /// `dt * int eps delta (rho^Gamma + 2) |grad rho|^2` at the iterate.
    pub eps_delta_heating: f64,
    /// `dt * int (mu |grad u|^2 + nu rho |u|^2 - k2 rho theta div u)` at the iterate.
    pub mechanical: f64,
}

/// Root of `a x + q (x^5 - x^-2) = a target` for `a, q > 0`; the left side is
/// strictly increasing on `x > 0`, so the root is unique and positive.
pub fn solve_stiff_pair(a: f64, q: f64, target: f64) -> f64 {
    let g = |x: f64| a * (x - target) + q * (powf(x, 5.0) - 1.0 / (x * x));
    let dg = |x: f64| a + q * (5.0 * powf(x, 4.0) + 2.0 / (x * x * x));
    if target == 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = if target > 1.0 {
        (1.0, target)
    } else if target > 0.0 {
        (target, 1.0)
    } else {
        let mut lo = 0.5;
        while g(lo) >= 0.0 && lo > 1e-300 {
            lo *= 0.5;
        }
        (lo, 1.0)
    };
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let gx = g(x);
        if gx == 0.0 {
            return x;
        }
        if gx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - gx / dg(x);
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x {
            return next;
        }
        x = next;
    }
    x
}

#[allow(clippy::too_many_arguments)]
fn energy_update(
    old: &State,
    rho_k: &ScalarField,
    theta_k: &ScalarField,
    u_k: &VectorField,
    rho_new: &ScalarField,
    p: &ModelParams,
    cfg: &TimeStepConfig,
    source: Option<&ScalarField>,
) -> Result<(ScalarField, EnergySources)> {
    let grid = *old.grid();
    let vol = grid.cell_volume();
    let dt = cfg.dt;
    let e_old = old.rho.zip_map(&old.theta, |r, t| p.k1 * r * t);
    let adv = grid::advect_upwind(&e_old, u_k);
    let diss = grid::dissipation_density(u_k);
    let usq = u_k.norm_sq();
    let divu = grid::divergence(u_k);
    let heating = if p.eps > 0.0 && p.delta > 0.0 {
        let g = grid::face_grad_sq(rho_k);
        rho_k.zip_map(&g, |r, g| p.eps * p.delta * (powf(r, p.gamma_exp) + 2.0) * g)
    } else {
        ScalarField::zeros(grid)
    };

    let mut sources = EnergySources::default();
    let mut rhs = Vec::with_capacity(grid.cells());
    for i in 0..grid.cells() {
        let (r, t) = (rho_k.values()[i], theta_k.values()[i]);
        let mech = p.mu * diss.values()[i] + p.nu * r * usq.values()[i] - p.k2 * r * t * divu.values()[i];
        sources.mechanical += dt * vol * mech;
        sources.eps_delta_heating += dt * vol * heating.values()[i];
        let mut q = mech + heating.values()[i];
        if let Some(s) = source {
            q += s.values()[i];
        }
        rhs.push(e_old.values()[i] - dt * adv.values()[i] + dt * q);
    }

    let weight: Vec<f64> = rho_new.values().iter().map(|r| p.k1 * r).collect();
    let mut theta = implicit_neumann(&grid, &weight, dt * p.kappa, &rhs, theta_k.values(), cfg)?;

    if p.delta > 0.0 {
        let q = dt * p.delta;
        for (x, w) in theta.iter_mut().zip(&weight) {
            let root = solve_stiff_pair(*w, q, *x);
            sources.delta_source += vol * q * (1.0 / (root * root) - powf(root, 5.0));
            *x = root;
        }
    }

    if let Some(cell) = theta.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { field: "theta", cell });
    }
    let out = ScalarField::from_values(grid, theta)?;
    check_positive("theta", &out, cfg.theta_floor)?;
    Ok((out, sources))
}

/// One energy step from `state` to the given new density, with sources taken
/// at `state` itself. Returns the new temperature.
pub fn step_energy(state: &State, rho_new: &ScalarField, cfg: &TimeStepConfig, p: &ModelParams) -> Result<ScalarField> {
    check_cfl(&state.u, cfg)?;
    energy_update(state, &state.rho, &state.theta, &state.u, rho_new, p, cfg, None).map(|r| r.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub picard_iterations: usize,
    /// False when `picard_max` was reached before `picard_tol`.
    pub picard_converged: bool,
    /// Last Picard change in `(rho, theta)`.
    pub picard_change: f64,
    pub sources: EnergySources,
    /// CG iterations of the closing velocity solve.
    pub velocity_iterations: usize,
}

/// One coupled step without external forcing.
pub fn step_coupled(state: &State, cfg: &TimeStepConfig, p: &ModelParams) -> Result<State> {
    step_coupled_with(state, cfg, p, &NoForcing).map(|r| r.0)
}

/// One coupled step. The returned velocity is the Brinkman solution at the new state.
pub fn step_coupled_with(
    state: &State,
    cfg: &TimeStepConfig,
    p: &ModelParams,
    forcing: &dyn Forcing,
) -> Result<(State, StepReport)> {
    let grid = *state.grid();
    let t_new = state.t + cfg.dt;
    let rho_src = forcing.density(&grid, t_new);
    let e_src = forcing.energy(&grid, t_new);

    let mut rho_k = state.rho.clone();
    let mut theta_k = state.theta.clone();
    let mut u_k = solve_velocity(&rho_k, &theta_k, p, cfg, forcing.momentum(&grid, state.t), Some(&state.u))?.u;
    check_cfl(&u_k, cfg)?;

    let mut report = StepReport {
        picard_iterations: 0,
        picard_converged: false,
        picard_change: f64::INFINITY,
        sources: EnergySources::default(),
        velocity_iterations: 0,
    };
    let f_new = forcing.momentum(&grid, t_new);
    loop {
        report.picard_iterations += 1;
        let rho_new = density_update(&state.rho, &u_k, p, cfg, rho_src.as_ref())?;
        let (theta_new, sources) = energy_update(state, &rho_k, &theta_k, &u_k, &rho_new, p, cfg, e_src.as_ref())?;
        let mut change = 0.0;
        for i in 0..grid.cells() {
            let dr = rho_new.values()[i] - rho_k.values()[i];
            let dth = theta_new.values()[i] - theta_k.values()[i];
            change += dr * dr + dth * dth;
        }
        report.picard_change = sqrt(change * grid.cell_volume());
        report.sources = sources;
        rho_k = rho_new;
        theta_k = theta_new;
        let sol = solve_velocity(&rho_k, &theta_k, p, cfg, f_new.clone(), Some(&u_k))?;
        report.velocity_iterations = sol.iterations;
        u_k = sol.u;
        if report.picard_change <= cfg.picard_tol {
            report.picard_converged = true;
            break;
        }
        if report.picard_iterations >= cfg.picard_max {
            break;
        }
        check_cfl(&u_k, cfg)?;
    }
    Ok((
        State {
            rho: rho_k,
            theta: theta_k,
            u: u_k,
            t: t_new,
        },
        report,
    ))
}

/// Why a run stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Completed,
    /// Density or temperature fell to or below its threshold.
    PositivityAbort { step: usize, t: f64, error: Error },
    /// Linear solve, CFL guard, or a non-finite value.
    SolverFailure { step: usize, t: f64, error: Error },
}

impl Termination {
    pub fn is_completed(&self) -> bool {
        matches!(self, Termination::Completed)
    }

    fn from_error(step: usize, t: f64, error: Error) -> Self {
        match error {
            Error::Positivity { .. } => Termination::PositivityAbort { step, t, error },
            _ => Termination::SolverFailure { step, t, error },
        }
    }
}

/// Receives the state and diagnostics after every accepted step (and the initial state as step 0).
pub trait Observer {
    type Error;
    fn observe(&mut self, step: usize, state: &State, record: &DiagnosticsRecord) -> core::result::Result<(), Self::Error>;
}

/// Discards everything.
#[derive(Debug, Default)]
pub struct NullObserver;

impl Observer for NullObserver {
    type Error = core::convert::Infallible;
    fn observe(&mut self, _: usize, _: &State, _: &DiagnosticsRecord) -> core::result::Result<(), Self::Error> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub termination: Termination,
    /// Accepted steps.
    pub steps: usize,
    pub final_state: State,
    pub first_record: DiagnosticsRecord,
    pub last_record: DiagnosticsRecord,
    /// Steps that hit `picard_max` without reaching `picard_tol`.
    pub picard_warnings: usize,
    pub max_picard_iterations: usize,
}

/// Runs from `initial` to `cfg.t_end` or the first failure.
///
/// The initial velocity is recomputed from `(rho, theta)`. Diagnostics use
/// `ctx`; errors from the observer abort the run and are returned as `Err`.
pub fn run<O: Observer>(
    initial: &State,
    cfg: &TimeStepConfig,
    p: &ModelParams,
    ctx: &DiagnosticsContext,
    forcing: &dyn Forcing,
    observer: &mut O,
) -> core::result::Result<RunSummary, RunError<O::Error>> {
    cfg.validate().map_err(RunError::Setup)?;
    initial.validate().map_err(RunError::Setup)?;
    let mut state = initial.clone();
    equilibrate_velocity(&mut state, p, cfg, forcing).map_err(RunError::Setup)?;
    let first = diagnostics::record(&state, None, None, ctx, forcing).map_err(RunError::Setup)?;
    observer.observe(0, &state, &first).map_err(RunError::Observer)?;

    let mut summary = RunSummary {
        termination: Termination::Completed,
        steps: 0,
        final_state: state.clone(),
        first_record: first.clone(),
        last_record: first,
        picard_warnings: 0,
        max_picard_iterations: 0,
    };
    let total = cfg.steps();
    for step in 1..=total {
        let outcome = step_coupled_with(&state, cfg, p, forcing)
            .and_then(|(next, report)| {
                diagnostics::record(&next, Some(&summary.last_record), Some(&report), ctx, forcing).map(|r| (next, report, r))
            })
            .and_then(|(next, report, rec)| match rec.first_non_finite() {
                Some(field) => Err(Error::NonFinite { field, cell: 0 }),
                None => Ok((next, report, rec)),
            });
        match outcome {
            Ok((next, report, rec)) => {
                if !report.picard_converged {
                    summary.picard_warnings += 1;
                }
                summary.max_picard_iterations = summary.max_picard_iterations.max(report.picard_iterations);
                observer.observe(step, &next, &rec).map_err(RunError::Observer)?;
                state = next;
                summary.steps = step;
                summary.last_record = rec;
            }
            Err(error) => {
                summary.termination = Termination::from_error(step, state.t, error);
                break;
            }
        }
    }
    summary.final_state = state;
    Ok(summary)
}

/// Failure of [`run`] that is not a property of the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum RunError<E> {
    /// Invalid configuration or initial data.
    Setup(Error),
    Observer(E),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{cos, sin};
    use core::f64::consts::PI;

    fn smooth_state(n: usize) -> State {
        let g = Grid::new_1d(n, 2.0 * PI).unwrap();
        State::at_rest(
            ScalarField::from_fn(g, |x| 1.0 + 0.3 * sin(x[0])),
            ScalarField::from_fn(g, |x| 1.0 + 0.2 * cos(x[0])),
        )
        .unwrap()
    }

    #[test]
    fn density_identity_step() {
        let s = smooth_state(16);
        let p = ModelParams::default();
        let out = step_density(&s, &TimeStepConfig::default(), &p).unwrap();
        assert_eq!(out, s.rho);
    }

    #[test]
    fn density_diffusion_conserves_mass() {
        let g = Grid::new_1d(32, 1.0).unwrap();
        let mut rho = ScalarField::constant(g, 1.0);
        rho.values_mut()[10] = 5.0;
        let s = State::at_rest(rho, ScalarField::constant(g, 1.0)).unwrap();
        let p = ModelParams {
            eps: 0.1,
            ..ModelParams::default()
        };
        let out = step_density(&s, &TimeStepConfig::default(), &p).unwrap();
        assert!((grid::integrate(&out) - s.mass()).abs() <= 1e-13 * s.mass());
        assert!(out.max() < 5.0);
    }

    #[test]
    fn density_hand_oracle() {
        let g = Grid::new_1d(4, 4.0).unwrap();
        let s = State::new(
            ScalarField::from_values(g, alloc::vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            ScalarField::constant(g, 1.0),
            VectorField::from_components(g, alloc::vec![alloc::vec![0.0, 1.0, 0.0, 0.0]]).unwrap(),
            0.0,
        )
        .unwrap();
        let cfg = TimeStepConfig {
            dt: 1.0,
            cfl_safety: 1.0,
            ..TimeStepConfig::default()
        };
        let p = ModelParams {
            eps: 0.0,
            ..ModelParams::default()
        };
        let out = step_density(&s, &cfg, &p).unwrap();
        assert_eq!(out.values(), &[0.5, 1.5, 4.0, 4.0]);
        assert_eq!(grid::integrate(&out), 10.0);
    }

    #[test]
    fn uniform_energy_fixed_points() {
        let g = Grid::new_1d(8, 1.0).unwrap();
        for (delta, theta) in [(0.0, 1.7), (0.3, 1.0)] {
            let s = State::at_rest(ScalarField::constant(g, 1.3), ScalarField::constant(g, theta)).unwrap();
            let p = ModelParams {
                delta,
                ..ModelParams::default()
            };
            let out = step_energy(&s, &s.rho, &TimeStepConfig::default(), &p).unwrap();
            for v in out.values() {
                assert!((v - theta).abs() <= 1e-14, "{v}");
            }
        }
    }

    fn rk4_cooling(theta0: f64, delta: f64, t: f64, steps: usize) -> f64 {
        let f = |x: f64| delta * (1.0 / (x * x) - x.powi(5));
        let h = t / steps as f64;
        let mut x = theta0;
        for _ in 0..steps {
            let k1 = f(x);
            let k2 = f(x + 0.5 * h * k1);
            let k3 = f(x + 0.5 * h * k2);
            let k4 = f(x + h * k3);
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        x
    }

    #[test]
    fn uniform_cooling_matches_rk4() {
        let g = Grid::new_1d(4, 1.0).unwrap();
        let p = ModelParams {
            delta: 0.1,
            ..ModelParams::unit()
        };
        let cfg = TimeStepConfig {
            dt: 1e-3,
            ..TimeStepConfig::default()
        };
        let mut s = State::at_rest(ScalarField::constant(g, 1.0), ScalarField::constant(g, 2.0)).unwrap();
        for _ in 0..1000 {
            s = step_coupled(&s, &cfg, &p).unwrap();
        }
        let oracle = rk4_cooling(2.0, 0.1, 1.0, 100_000);
        for v in s.theta.values() {
            assert!(((v - oracle) / oracle).abs() <= 1e-3, "{v} vs {oracle}");
        }
    }

    #[test]
    fn stiff_pair_root() {
        for (a, q, target) in [(1.0, 0.1, 2.0), (2.0, 1e-3, 0.3), (1.5, 0.5, -0.2), (1.0, 1e-6, 1e-8), (3.0, 0.2, 1.0)] {
            let x = solve_stiff_pair(a, q, target);
            assert!(x > 0.0);
            let g = a * (x - target) + q * (x.powi(5) - 1.0 / (x * x));
            assert!(g.abs() <= 1e-12 * (1.0 + a * target.abs() + q / (x * x)), "{a} {q} {target}: {g}");
        }
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let g = Grid::new_1d(16, 2.0).unwrap();
        let p = ModelParams {
            delta: 0.7,
            ..ModelParams::default()
        };
        let s = State::at_rest(ScalarField::constant(g, 1.4), ScalarField::constant(g, 1.0)).unwrap();
        let (next, report) = step_coupled_with(&s, &TimeStepConfig::default(), &p, &NoForcing).unwrap();
        assert_eq!(report.picard_iterations, 1);
        assert!(report.picard_converged);
        for (a, b) in next.rho.values().iter().zip(s.rho.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
        for v in next.theta.values() {
            assert!((v - 1.0).abs() <= 1e-12);
        }
        assert_eq!(next.u.max_abs(), 0.0);
    }

    #[test]
    fn picard_count_does_not_grow_when_dt_halves() {
        let p = ModelParams::default();
        let count = |dt: f64| {
            let cfg = TimeStepConfig {
                dt,
                ..TimeStepConfig::default()
            };
            let (_, r) = step_coupled_with(&smooth_state(64), &cfg, &p, &NoForcing).unwrap();
            assert!(r.picard_converged);
            r.picard_iterations
        };
        let (a, b) = (count(0.02), count(0.01));
        assert!(a <= 10 && b <= a, "{a} {b}");
    }

    #[test]
    fn cfl_violation_is_rejected_before_update() {
        let s = smooth_state(64);
        let p = ModelParams::default();
        let cfg = TimeStepConfig {
            dt: 5.0,
            ..TimeStepConfig::default()
        };
        assert!(matches!(step_coupled(&s, &cfg, &p), Err(Error::Cfl { .. })));
    }

    #[test]
    fn steps_rounding() {
        let cfg = TimeStepConfig {
            dt: 0.02,
            t_end: 10.0,
            ..TimeStepConfig::default()
        };
        assert_eq!(cfg.steps(), 500);
        let cfg = TimeStepConfig {
            dt: 0.3,
            t_end: 1.0,
            ..TimeStepConfig::default()
        };
        assert_eq!(cfg.steps(), 4);
    }
}
