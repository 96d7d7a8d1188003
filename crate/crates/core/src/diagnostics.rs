//! Per-step monitors of the discrete trajectory.
//!
//! All space integrals are midpoint sums. Time integrals accumulate with the
//! right-endpoint rule `I_k = I_{k-1} + (t_k - t_{k-1}) f(state_k)`, which is
//! the quadrature the time stepping itself realizes for every implicit term.
//!
//! Entropy production densities are assembled from face differences: the
//! velocity part uses [`grid::dissipation_density`] and the heat part
//! `|grad theta|^2 / theta^2` uses the face-wise geometric mean of `theta`.
//! Both are nonnegative cell by cell.
//!
//! The appendix inequalities live in [`crate::inequalities`] and are
//! re-exported here.

use alloc::vec::Vec;

use crate::brinkman::{self, BrinkmanSystem};
use crate::constitutive::{self, LocalThermoPoint, ModelParams};
use crate::error::{Error, Result};
use crate::evolution::{Forcing, Observer, State, StepReport};
use crate::grid::{self, Grid, ScalarField};
use crate::math::{ln, powf};

pub use crate::inequalities::{inverse_jensen_bound, reverse_young_check, specht_ratio, InverseJensen};

/// Fixed inputs of the monitors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsContext {
    pub params: ModelParams,
    /// Weight of the entropy in `H = e - theta_bar s`.
    pub theta_bar: f64,
    /// Threshold of the superlevel fraction `|{theta > theta_lower}| / |Omega|`.
    pub theta_lower: f64,
    pub solver_tol: f64,
    pub max_iter: usize,
}

impl DiagnosticsContext {
    /// `theta_bar = 1` and `theta_lower` equal to half the median of the initial temperature.
    pub fn for_initial(params: ModelParams, theta0: &ScalarField, solver_tol: f64, max_iter: usize) -> Self {
        Self {
            params,
            theta_bar: 1.0,
            theta_lower: 0.5 * median(theta0.values()),
            solver_tol,
            max_iter,
        }
    }
}

/// Median of a nonempty slice (mean of the two central values for even length).
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

const COLUMN_NAMES: [&str; 28] = [
    "step",
    "t",
    "mass",
    "energy",
    "entropy",
    "helmholtz",
    "rho_min",
    "rho_max",
    "theta_min",
    "theta_max",
    "sigma_min",
    "sigma_rate",
    "sigma_cumulative",
    "brinkman_residual",
    "delta_source_cumulative",
    "eps_delta_heating_cumulative",
    "energy_balance_residual",
    "entropy_residual",
    "regularization_gap_cumulative",
    "rate_a",
    "rate_b",
    "rate_c",
    "rate_d",
    "dissipation_slack",
    "superlevel_fraction",
    "picard_iterations",
    "picard_warning",
    "mass_drift",
];

/// Everything monitored at one accepted state.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    /// `int rho`.
    pub mass: f64,
    /// `int k1 rho theta`.
    pub energy: f64,
    /// `int s(rho, theta)`.
    pub entropy: f64,
    /// `int e - theta_bar s`.
    pub helmholtz: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    /// Smallest cell value of the entropy production density.
    pub sigma_min: f64,
    /// `int sigma` at this state.
    pub sigma_rate: f64,
    pub sigma_cumulative: f64,
    /// Normalized defect of the Brinkman energy identity.
    pub brinkman_residual: f64,
    /// `int int delta (theta^-2 - theta^5)`.
    pub delta_source_cumulative: f64,
    /// `int int eps delta (rho^Gamma + 2) |grad rho|^2`.
    pub eps_delta_heating_cumulative: f64,
    /// `E(t) - E(0)` minus both cumulative sources above.
    pub energy_balance_residual: f64,
    /// `S(t) - S(0)` minus the cumulative production in the Gamma-augmented form.
    pub entropy_residual: f64,
    /// Cumulative difference between the Gamma-augmented production and the
    /// production the scheme actually realizes.
    pub regularization_gap_cumulative: f64,
    /// Dissipation-balance rates; see [`dissipation_balance_slack`].
    pub rate_a: f64,
    pub rate_b: f64,
    pub rate_c: f64,
    pub rate_d: f64,
    /// Dissipation-balance slack at this time for `ctx.theta_bar`.
    pub dissipation_slack: f64,
    pub superlevel_fraction: f64,
    pub picard_iterations: usize,
    pub picard_warning: bool,
    initial_mass: f64,
    initial_energy: f64,
    initial_entropy: f64,
    initial_helmholtz: f64,
    production_cumulative: f64,
    balance_lhs_cumulative: f64,
    balance_rhs_cumulative: f64,
}

impl DiagnosticsRecord {
    /// `(M(t) - M(0)) / M(0)`.
    pub fn mass_drift(&self) -> f64 {
        (self.mass - self.initial_mass) / self.initial_mass
    }

    pub fn initial_energy(&self) -> f64 {
        self.initial_energy
    }

    pub fn initial_entropy(&self) -> f64 {
        self.initial_entropy
    }

    pub fn initial_helmholtz(&self) -> f64 {
        self.initial_helmholtz
    }

    /// Column names of [`Self::columns`].
    pub fn column_names() -> [&'static str; 28] {
        COLUMN_NAMES
    }

    /// Named numeric columns in a fixed order.
    pub fn columns(&self) -> [(&'static str, f64); 28] {
        let values = [
            self.step as f64,
            self.t,
            self.mass,
            self.energy,
            self.entropy,
            self.helmholtz,
            self.rho_min,
            self.rho_max,
            self.theta_min,
            self.theta_max,
            self.sigma_min,
            self.sigma_rate,
            self.sigma_cumulative,
            self.brinkman_residual,
            self.delta_source_cumulative,
            self.eps_delta_heating_cumulative,
            self.energy_balance_residual,
            self.entropy_residual,
            self.regularization_gap_cumulative,
            self.rate_a,
            self.rate_b,
            self.rate_c,
            self.rate_d,
            self.dissipation_slack,
            self.superlevel_fraction,
            self.picard_iterations as f64,
            if self.picard_warning { 1.0 } else { 0.0 },
            self.mass_drift(),
        ];
        core::array::from_fn(|i| (COLUMN_NAMES[i], values[i]))
    }

    /// Name of the first non-finite column, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.columns().iter().find(|(_, v)| !v.is_finite()).map(|(n, _)| *n)
    }
}

/// Cellwise densities shared by the monitors.
struct Densities {
    sigma: ScalarField,
    /// `|grad theta|^2 / theta^2`.
    log_grad_sq: ScalarField,
    grad_rho_sq: ScalarField,
    /// `grad rho . grad theta / theta`.
    cross: ScalarField,
    lap_rho: ScalarField,
}

fn densities(state: &State, p: &ModelParams) -> Result<Densities> {
    let diss = grid::dissipation_density(&state.u);
    let usq = state.u.norm_sq();
    let lg = grid::log_grad_sq(&state.theta);
    let mut sigma = ScalarField::zeros(*state.grid());
    for i in 0..state.grid().cells() {
        let (r, t) = (state.rho.values()[i], state.theta.values()[i]);
        sigma.values_mut()[i] = constitutive::entropy_production_density(
            t,
            diss.values()[i],
            usq.values()[i],
            r,
            t * t * lg.values()[i],
            p,
        )?;
    }
    Ok(Densities {
        sigma,
        log_grad_sq: lg,
        grad_rho_sq: grid::face_grad_sq(&state.rho),
        cross: grid::face_cross(&state.rho, &state.theta),
        lap_rho: grid::laplacian_neumann(&state.rho),
    })
}

/// Computes the record of `state`, accumulating time integrals from `prev`.
///
/// When `report` is given, the energy-balance sources are the ones the step
/// actually applied. Fails on non-positive or non-finite fields.
pub fn record(
    state: &State,
    prev: Option<&DiagnosticsRecord>,
    report: Option<&StepReport>,
    ctx: &DiagnosticsContext,
    forcing: &dyn Forcing,
) -> Result<DiagnosticsRecord> {
    state.validate()?;
    let p = &ctx.params;
    let g = *state.grid();
    let vol = g.cell_volume();
    let d = densities(state, p)?;
    let tb = ctx.theta_bar;

    let (mut energy, mut entropy) = (0.0, 0.0);
    let (mut delta_rate, mut heat_rate, mut prod_rate, mut gap_rate) = (0.0, 0.0, 0.0, 0.0);
    let (mut ra, mut rb, mut rc, mut rd) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..g.cells() {
        let (r, t) = (state.rho.values()[i], state.theta.values()[i]);
        let pt = LocalThermoPoint::new(r, t)?;
        energy += constitutive::internal_energy(pt, p);
        entropy += constitutive::entropy(pt, p);
        let sigma = d.sigma.values()[i];
        let grs = d.grad_rho_sq.values()[i];
        let lg = d.log_grad_sq.values()[i];
        let heat_src = p.eps * p.delta * (powf(r, p.gamma_exp) + 2.0) * grs;
        let ds_drho_minus_k1 = -p.k2 * (ln(r) + 1.0) + p.k1 * ln(t);
        let eps_mix = p.eps * d.lap_rho.values()[i] * ds_drho_minus_k1;
        let stiff = p.delta * (1.0 / (t * t * t) - t * t * t * t);
        let scheme = sigma + stiff + heat_src / t + eps_mix;
        let augmented = sigma
            + p.delta * powf(t, p.gamma_exp) * lg
            + stiff
            + p.eps * p.delta * (p.gamma_exp * powf(r, p.gamma_exp - 2.0) + 2.0) * grs
            + eps_mix;
        delta_rate += p.delta * (1.0 / (t * t) - powf(t, 5.0));
        heat_rate += heat_src;
        prod_rate += augmented;
        gap_rate += augmented - scheme;
        ra += sigma + p.delta / (t * t * t) + heat_src / t + p.eps * p.k2 * grs / r;
        rb += p.delta * powf(t, 5.0);
        rc += p.delta / (t * t) + heat_src;
        rd += p.delta * t * t * t * t + p.eps * p.k1 * d.cross.values()[i];
    }
    let [energy, entropy, delta_rate, heat_rate, prod_rate, gap_rate, ra, rb, rc, rd] =
        [energy, entropy, delta_rate, heat_rate, prod_rate, gap_rate, ra, rb, rc, rd].map(|v| v * vol);
    let sigma_rate = grid::integrate(&d.sigma);
    let helmholtz = energy - tb * entropy;

    let mut sys = BrinkmanSystem::new(state.rho.clone(), state.theta.clone(), *p, ctx.solver_tol, ctx.max_iter)?;
    if let Some(f) = forcing.momentum(&g, state.t) {
        sys = sys.with_forcing(f)?;
    }
    let brinkman_residual = brinkman::energy_identity_residual(&state.u, &sys);

    let mut rec = DiagnosticsRecord {
        step: 0,
        t: state.t,
        mass: state.mass(),
        energy,
        entropy,
        helmholtz,
        rho_min: state.rho.min(),
        rho_max: state.rho.max(),
        theta_min: state.theta.min(),
        theta_max: state.theta.max(),
        sigma_min: d.sigma.min(),
        sigma_rate,
        sigma_cumulative: 0.0,
        brinkman_residual,
        delta_source_cumulative: 0.0,
        eps_delta_heating_cumulative: 0.0,
        energy_balance_residual: 0.0,
        entropy_residual: 0.0,
        regularization_gap_cumulative: 0.0,
        rate_a: ra,
        rate_b: rb,
        rate_c: rc,
        rate_d: rd,
        dissipation_slack: 0.0,
        superlevel_fraction: superlevel_measure(&state.theta, ctx.theta_lower),
        picard_iterations: report.map_or(0, |r| r.picard_iterations),
        picard_warning: report.is_some_and(|r| !r.picard_converged),
        initial_mass: state.mass(),
        initial_energy: energy,
        initial_entropy: entropy,
        initial_helmholtz: helmholtz,
        production_cumulative: 0.0,
        balance_lhs_cumulative: 0.0,
        balance_rhs_cumulative: 0.0,
    };
    if let Some(prev) = prev {
        let dt = state.t - prev.t;
        rec.step = prev.step + 1;
        rec.initial_mass = prev.initial_mass;
        rec.initial_energy = prev.initial_energy;
        rec.initial_entropy = prev.initial_entropy;
        rec.initial_helmholtz = prev.initial_helmholtz;
        rec.sigma_cumulative = prev.sigma_cumulative + dt * sigma_rate;
        let (delta_step, heat_step) = match report {
            Some(r) => (r.sources.delta_source, r.sources.eps_delta_heating),
            None => (dt * delta_rate, dt * heat_rate),
        };
        rec.delta_source_cumulative = prev.delta_source_cumulative + delta_step;
        rec.eps_delta_heating_cumulative = prev.eps_delta_heating_cumulative + heat_step;
        rec.production_cumulative = prev.production_cumulative + dt * prod_rate;
        rec.regularization_gap_cumulative = prev.regularization_gap_cumulative + dt * gap_rate;
        rec.balance_lhs_cumulative = prev.balance_lhs_cumulative + dt * (tb * ra + rb);
        rec.balance_rhs_cumulative = prev.balance_rhs_cumulative + dt * (rc + tb * rd);
    }
    rec.energy_balance_residual =
        rec.energy - rec.initial_energy - rec.delta_source_cumulative - rec.eps_delta_heating_cumulative;
    rec.entropy_residual = rec.entropy - rec.initial_entropy - rec.production_cumulative;
    rec.dissipation_slack =
        (rec.initial_helmholtz + rec.balance_rhs_cumulative) - (rec.helmholtz + rec.balance_lhs_cumulative);
    Ok(rec)
}

/// Minimum over the history of the dissipation-balance slack
///
/// `[H(0) + int_0^t (C + theta_bar D)] - [H(t) + int_0^t (theta_bar A + B)]`
///
/// with `H = E - theta_bar S` and the rates
///
/// * `A = int sigma + delta/theta^3 + eps delta (rho^Gamma+2)|grad rho|^2/theta + eps k2 |grad rho|^2/rho`
/// * `B = int delta theta^5`
/// * `C = int delta/theta^2 + eps delta (rho^Gamma+2)|grad rho|^2`
/// * `D = int delta theta^4 + eps k1 grad rho . grad theta / theta`
///
/// integrated with the right-endpoint rule. In the continuum the two brackets agree.
pub fn dissipation_balance_slack(history: &[DiagnosticsRecord], theta_bar: f64) -> Result<f64> {
    if history.len() < 2 {
        return Err(Error::InsufficientHistory("the dissipation balance needs at least two records"));
    }
    let h = |r: &DiagnosticsRecord| r.energy - theta_bar * r.entropy;
    let h0 = h(&history[0]);
    let (mut lhs, mut rhs) = (0.0, 0.0);
    let mut worst = f64::INFINITY;
    for w in history.windows(2) {
        let (prev, r) = (&w[0], &w[1]);
        let dt = r.t - prev.t;
        lhs += dt * (theta_bar * r.rate_a + r.rate_b);
        rhs += dt * (r.rate_c + theta_bar * r.rate_d);
        worst = worst.min((h0 + rhs) - (h(r) + lhs));
    }
    Ok(worst)
}

/// `|{theta > theta_lower}| / |Omega|`.
pub fn superlevel_measure(theta: &ScalarField, theta_lower: f64) -> f64 {
    let n = theta.values().iter().filter(|&&t| t > theta_lower).count();
    n as f64 / theta.values().len() as f64
}

/// Collects every state and record of a run.
#[derive(Debug, Default, Clone)]
pub struct History {
    pub states: Vec<State>,
    pub records: Vec<DiagnosticsRecord>,
}

impl Observer for History {
    type Error = core::convert::Infallible;
    fn observe(&mut self, _: usize, state: &State, record: &DiagnosticsRecord) -> core::result::Result<(), Self::Error> {
        self.states.push(state.clone());
        self.records.push(record.clone());
        Ok(())
    }
}

/// Largest weak-form defects over the test family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakFormResiduals {
    pub continuity: f64,
    pub brinkman: f64,
    pub energy: f64,
    /// `max(0, J)`; the entropy relation is one-sided.
    pub entropy_violation: f64,
    /// `max |J|`, used for convergence orders.
    pub entropy_abs: f64,
}

/// `(P_k, P_k', P_k'')` of the Legendre polynomial of degree `k <= 3`.
fn legendre(k: usize, x: f64) -> (f64, f64, f64) {
    match k {
        0 => (1.0, 0.0, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.5 * (3.0 * x * x - 1.0), 3.0 * x, 3.0),
        _ => (0.5 * (5.0 * x * x * x - 3.0 * x), 0.5 * (15.0 * x * x - 3.0), 15.0 * x),
    }
}

/// One-axis factor of a test function: value, d/dx, d2/dx2 in physical units.
type Factor = fn(usize, f64, f64) -> (f64, f64, f64);

/// `P_k(xi)` with `xi = 2x/L - 1`.
fn free_factor(k: usize, x: f64, l: f64) -> (f64, f64, f64) {
    let c = 2.0 / l;
    let (v, d, dd) = legendre(k, c * x - 1.0);
    (v, c * d, c * c * dd)
}

/// `P_k(xi) (1 - xi^2)`, vanishing at both ends.
fn clamped_factor(k: usize, x: f64, l: f64) -> (f64, f64, f64) {
    let c = 2.0 / l;
    let xi = c * x - 1.0;
    let (v, d, dd) = legendre(k, xi);
    let b = 1.0 - xi * xi;
    (v * b, c * (d * b - 2.0 * xi * v), c * c * (dd * b - 4.0 * xi * d - 2.0 * v))
}

/// `1 + P_k(xi)`, nonnegative on the domain.
fn positive_factor(k: usize, x: f64, l: f64) -> (f64, f64, f64) {
    let (v, d, dd) = free_factor(k, x, l);
    (1.0 + v, d, dd)
}

/// Tensor-product test function evaluated at a point.
struct TestFn {
    degrees: [usize; 2],
    factor: Factor,
}

impl TestFn {
    /// Value, gradient and Laplacian at `x`.
    fn eval(&self, g: &Grid, x: [f64; 2]) -> (f64, [f64; 2], f64) {
        let f: [(f64, f64, f64); 2] =
            core::array::from_fn(|a| if a < g.dim() { (self.factor)(self.degrees[a], x[a], g.len(a)) } else { (1.0, 0.0, 0.0) });
        let value = f[0].0 * f[1].0;
        let grad = [f[0].1 * f[1].0, f[0].0 * f[1].1];
        let lap = f[0].2 * f[1].0 + f[0].0 * f[1].2;
        (value, grad, lap)
    }
}

/// Sampled test function on the cells and on interior faces.
struct Sampled {
    value: Vec<f64>,
    grad: [Vec<f64>; 2],
    lap: Vec<f64>,
    /// `d phi / d x_a` at the face between cell `c` and its `+a` neighbour.
    face_grad: [Vec<f64>; 2],
}

fn sample(phi: &TestFn, g: &Grid) -> Sampled {
    let n = g.cells();
    let mut s = Sampled {
        value: Vec::with_capacity(n),
        grad: [Vec::with_capacity(n), Vec::with_capacity(n)],
        lap: Vec::with_capacity(n),
        face_grad: [alloc::vec![0.0; n], alloc::vec![0.0; n]],
    };
    for c in 0..n {
        let x = g.center(c);
        let (v, gr, l) = phi.eval(g, x);
        s.value.push(v);
        s.grad[0].push(gr[0]);
        s.grad[1].push(gr[1]);
        s.lap.push(l);
        for a in 0..g.dim() {
            let mut xf = x;
            xf[a] += 0.5 * g.h(a);
            s.face_grad[a][c] = phi.eval(g, xf).1[a];
        }
    }
    s
}

/// `sum over interior faces of (f_R - f_L)/h * dphi/dx_a (face) * vol`, the
/// zero-flux weak form of `-int phi Lap f`. With `recip = Some(theta)` each
/// face difference is multiplied by the face mean of `1 / theta`.
fn face_pairing(g: &Grid, f: &[f64], s: &Sampled, recip: Option<&[f64]>) -> f64 {
    let mut acc = 0.0;
    for a in 0..g.dim() {
        let stride = if a == 0 { 1 } else { g.n(0) };
        for c in 0..g.cells() {
            if g.coords(c)[a] + 1 < g.n(a) {
                let r = c + stride;
                let weight = recip.map_or(1.0, |t| 0.5 * (1.0 / t[c] + 1.0 / t[r]));
                acc += weight * (f[r] - f[c]) / g.h(a) * s.face_grad[a][c];
            }
        }
    }
    acc * g.cell_volume()
}

fn family(degrees: usize, dim: usize, factor: Factor) -> Vec<TestFn> {
    let mut out = Vec::new();
    for i in 0..degrees {
        for j in 0..if dim == 2 { degrees } else { 1 } {
            out.push(TestFn { degrees: [i, j], factor });
        }
    }
    out
}

/// Space-time weak-form defects of a trajectory stored at every step.
///
/// Test functions are `w(t) phi(x)` with `w = 1 - (t - t_0)/T` and `phi`
/// tensor products of Legendre polynomials of degree below `degrees` (at most
/// 4). The Brinkman family carries the factor `(1 - xi^2)` per axis so it
/// vanishes on the walls; the entropy family uses `(1 + P_i)(1 + P_j) >= 0`.
///
/// Continuity and energy use left-endpoint quadrature in time; Brinkman and
/// entropy evaluate all but the `phi_t` term at `t_{n+1}`, the level at which
/// the scheme treats them. Continuity, Brinkman and energy pair the fields
/// with the exact derivatives of `phi`, so their defects measure consistency
/// error.
///
/// The entropy defect is
/// `J = int int (sigma + R) phi w - [ -int int s (phi w)_t - int s_0 phi w(0) - int int s u . grad phi w + kappa int int grad theta / theta . grad phi w ]`
/// where `R` collects the regularization terms of the scheme's entropy
/// production beyond `sigma` (zero for `eps = delta = 0`). The entropy flux is
/// the upwind face flux of `s` and the heat flux uses face differences, so
/// `J <= 0` is the discrete entropy inequality.
pub fn weak_form_residual(history: &[State], p: &ModelParams, degrees: usize) -> Result<WeakFormResiduals> {
    if history.len() < 2 {
        return Err(Error::InsufficientHistory("weak forms need at least two snapshots"));
    }
    if degrees == 0 || degrees > 4 {
        return Err(Error::InvalidArgument {
            name: "degrees",
            value: degrees as f64,
            reason: "test family uses 1 to 4 Legendre degrees per axis",
        });
    }
    let g = *history[0].grid();
    let t0 = history[0].t;
    let total = history[history.len() - 1].t - t0;
    let dt0 = history[1].t - t0;
    for w in history.windows(2) {
        if w[1].grid() != &g {
            return Err(Error::GridMismatch);
        }
        let dt = w[1].t - w[0].t;
        if !(dt > 0.0) || (dt - dt0).abs() > 1e-9 * dt0 {
            return Err(Error::InsufficientHistory("snapshots must be stored at every step"));
        }
    }
    let n = g.cells();
    let vol = g.cell_volume();
    let dot = |a: &[f64], b: &[f64]| vol * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let dwt = -1.0 / total;

    // Per-state fields reused across test functions.
    struct Cache {
        t: f64,
        rho: Vec<f64>,
        energy: Vec<f64>,
        entropy: Vec<f64>,
        /// Discrete `k2 grad(rho theta)` per component.
        pressure_grad: [Vec<f64>; 2],
        rho_u: [Vec<f64>; 2],
        e_u: [Vec<f64>; 2],
        u: [Vec<f64>; 2],
        rhs_e: Vec<f64>,
        production: Vec<f64>,
        theta: Vec<f64>,
    }
    let mut caches = Vec::with_capacity(history.len());
    for st in history {
        let d = densities(st, p)?;
        let diss = grid::dissipation_density(&st.u);
        let usq = st.u.norm_sq();
        let divu = grid::divergence(&st.u);
        let pg = grid::gradient(&st.rho.zip_map(&st.theta, |r, t| p.k2 * r * t));
        let zero = || alloc::vec![0.0; n];
        let mut c = Cache {
            t: st.t,
            rho: st.rho.values().to_vec(),
            energy: Vec::with_capacity(n),
            entropy: Vec::with_capacity(n),
            pressure_grad: core::array::from_fn(|a| if a < g.dim() { pg.component(a).to_vec() } else { zero() }),
            rho_u: [zero(), zero()],
            e_u: [zero(), zero()],
            u: [zero(), zero()],
            rhs_e: Vec::with_capacity(n),
            production: Vec::with_capacity(n),
            theta: st.theta.values().to_vec(),
        };
        for i in 0..n {
            let (r, t) = (st.rho.values()[i], st.theta.values()[i]);
            let pt = LocalThermoPoint::new(r, t)?;
            let e = constitutive::internal_energy(pt, p);
            c.energy.push(e);
            c.entropy.push(constitutive::entropy(pt, p));
            let grs = d.grad_rho_sq.values()[i];
            let heat_src = p.eps * p.delta * (powf(r, p.gamma_exp) + 2.0) * grs;
            c.rhs_e.push(
                p.mu * diss.values()[i] + p.nu * r * usq.values()[i] - p.k2 * r * t * divu.values()[i]
                    + p.delta * (1.0 / (t * t) - powf(t, 5.0))
                    + heat_src,
            );
            let ds_drho_minus_k1 = -p.k2 * (ln(r) + 1.0) + p.k1 * ln(t);
            let extra = p.delta * (1.0 / (t * t * t) - t * t * t * t)
                + heat_src / t
                + p.eps * d.lap_rho.values()[i] * ds_drho_minus_k1;
            c.production.push(d.sigma.values()[i] + extra);
            for a in 0..g.dim() {
                let ua = st.u.component(a)[i];
                c.u[a][i] = ua;
                c.rho_u[a][i] = r * ua;
                c.e_u[a][i] = e * ua;
            }
        }
        caches.push(c);
    }
    // Upwind entropy transport of level n by the velocity of level n + 1.
    let s_adv: Vec<Vec<f64>> = history
        .windows(2)
        .zip(&caches)
        .map(|(w, c)| {
            let s = ScalarField::from_values(g, c.entropy.clone())?;
            Ok(grid::advect_upwind(&s, &w[1].u).into_values())
        })
        .collect::<Result<_>>()?;
    let wt = |t: f64| 1.0 - (t - t0) / total;
    let first = &caches[0];

    let mut out = WeakFormResiduals {
        continuity: 0.0,
        brinkman: 0.0,
        energy: 0.0,
        entropy_violation: 0.0,
        entropy_abs: 0.0,
    };

    for phi in family(degrees, g.dim(), free_factor) {
        let s = sample(&phi, &g);
        let mut rc = -dot(&first.rho, &s.value) * wt(first.t);
        let mut re = -dot(&first.energy, &s.value) * wt(first.t);
        for k in 0..caches.len() - 1 {
            let old = &caches[k];
            let (dt, w) = (caches[k + 1].t - old.t, wt(old.t));
            let adv: f64 = (0..g.dim()).map(|a| dot(&old.rho_u[a], &s.grad[a])).sum();
            rc += dt * (-dwt * dot(&old.rho, &s.value) - w * adv + w * p.eps * face_pairing(&g, &old.rho, &s, None));
            let e_adv: f64 = (0..g.dim()).map(|a| dot(&old.e_u[a], &s.grad[a])).sum();
            re += dt
                * (-dwt * dot(&old.energy, &s.value) - w * e_adv + w * p.kappa * face_pairing(&g, &old.theta, &s, None)
                    - w * dot(&old.rhs_e, &s.value));
        }
        out.continuity = out.continuity.max(rc.abs());
        out.energy = out.energy.max(re.abs());
    }

    for phi in family(degrees, g.dim(), clamped_factor) {
        let s = sample(&phi, &g);
        for a in 0..g.dim() {
            let mut rb = 0.0;
            for k in 0..caches.len() - 1 {
                let new = &caches[k + 1];
                let dt = new.t - caches[k].t;
                // int k2 rho theta d_a phi = -int k2 d_a(rho theta) phi since phi vanishes on the walls.
                let work = -dot(&new.pressure_grad[a], &s.value);
                let visc = p.mu * dot(&new.u[a], &s.lap);
                let drag = p.nu * dot(&new.rho_u[a], &s.value);
                rb += dt * wt(new.t) * (work + visc - drag);
            }
            out.brinkman = out.brinkman.max(rb.abs());
        }
    }

    for phi in family(degrees, g.dim(), positive_factor) {
        let s = sample(&phi, &g);
        let mut weak = -dot(&first.entropy, &s.value) * wt(first.t);
        let mut produced = 0.0;
        for k in 0..caches.len() - 1 {
            let (old, new) = (&caches[k], &caches[k + 1]);
            let (dt, w) = (new.t - old.t, wt(new.t));
            let heat = p.kappa * face_pairing(&g, &new.theta, &s, Some(&new.theta));
            weak += dt * (-dwt * dot(&old.entropy, &s.value) + w * dot(&s_adv[k], &s.value) + w * heat);
            produced += dt * w * dot(&new.production, &s.value);
        }
        let j = produced - weak;
        out.entropy_violation = out.entropy_violation.max(j);
        out.entropy_abs = out.entropy_abs.max(j.abs());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{self, NoForcing, TimeStepConfig};
    use crate::grid::VectorField;
    use crate::math::{cos, sin};
    use core::f64::consts::PI;

    fn ctx(p: ModelParams) -> DiagnosticsContext {
        DiagnosticsContext {
            params: p,
            theta_bar: 1.0,
            theta_lower: 0.5,
            solver_tol: 1e-12,
            max_iter: 10_000,
        }
    }

    fn equilibrium(n: usize) -> State {
        let g = Grid::new_1d(n, 2.0 * PI).unwrap();
        State::at_rest(ScalarField::constant(g, 1.2), ScalarField::constant(g, 1.0)).unwrap()
    }

    #[test]
    fn superlevel_examples() {
        let g = Grid::new_1d(8, 1.0).unwrap();
        let one = ScalarField::constant(g, 1.0);
        assert_eq!(superlevel_measure(&one, 0.5), 1.0);
        assert_eq!(superlevel_measure(&one, 2.0), 0.0);
        let step = ScalarField::from_fn(g, |x| if x[0] < 0.5 { 2.0 } else { 0.1 });
        assert_eq!(superlevel_measure(&step, 1.0), 0.5);
    }

    #[test]
    fn median_and_context() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let g = Grid::new_1d(4, 1.0).unwrap();
        let c = DiagnosticsContext::for_initial(ModelParams::default(), &ScalarField::constant(g, 3.0), 1e-12, 10);
        assert_eq!(c.theta_lower, 1.5);
    }

    #[test]
    fn equilibrium_record_is_clean() {
        let p = ModelParams {
            delta: 0.2,
            ..ModelParams::default()
        };
        let s = equilibrium(16);
        let r = record(&s, None, None, &ctx(p), &NoForcing).unwrap();
        assert!(r.brinkman_residual <= 1e-10);
        assert_eq!(r.superlevel_fraction, 1.0);
        assert_eq!(r.sigma_rate, 0.0);
        assert!(r.energy_balance_residual.abs() <= 1e-10);
        assert!(r.first_non_finite().is_none());
    }

    #[test]
    fn hand_oracle_mass() {
        let g = Grid::new_1d(4, 4.0).unwrap();
        let s = State::new(
            ScalarField::from_values(g, alloc::vec![0.5, 1.5, 4.0, 4.0]).unwrap(),
            ScalarField::constant(g, 1.0),
            VectorField::zeros(g),
            1.0,
        )
        .unwrap();
        let r = record(&s, None, None, &ctx(ModelParams::default()), &NoForcing).unwrap();
        assert_eq!(r.mass, 10.0);
    }

    #[test]
    fn negative_temperature_is_rejected() {
        let g = Grid::new_1d(4, 1.0).unwrap();
        let mut theta = ScalarField::constant(g, 1.0);
        theta.values_mut()[2] = -0.1;
        let s = State {
            rho: ScalarField::constant(g, 1.0),
            theta,
            u: VectorField::zeros(g),
            t: 0.0,
        };
        assert!(matches!(
            record(&s, None, None, &ctx(ModelParams::default()), &NoForcing),
            Err(Error::Positivity { field: "theta", cell: 2, .. })
        ));
    }

    fn run_history(initial: &State, cfg: &TimeStepConfig, p: ModelParams) -> History {
        let mut h = History::default();
        let summary = evolution::run(initial, cfg, &p, &ctx(p), &NoForcing, &mut h).unwrap();
        assert!(summary.termination.is_completed(), "{:?}", summary.termination);
        h
    }

    #[test]
    fn equilibrium_run_is_balanced() {
        let p = ModelParams {
            delta: 0.05,
            ..ModelParams::default()
        };
        let cfg = TimeStepConfig {
            dt: 0.05,
            t_end: 0.5,
            ..TimeStepConfig::default()
        };
        let h = run_history(&equilibrium(16), &cfg, p);
        // theta = 1 is a root of the delta pair, so nothing moves.
        let slack = dissipation_balance_slack(&h.records, 1.0).unwrap();
        assert!(slack.abs() <= 1e-10, "{slack}");
        for r in &h.records {
            assert!((r.entropy - h.records[0].entropy).abs() <= 1e-10);
        }
        let w = weak_form_residual(&h.states, &p, 4).unwrap();
        assert!(w.continuity <= 1e-10 && w.brinkman <= 1e-10 && w.energy <= 1e-10, "{w:?}");
        assert!(w.entropy_abs <= 1e-10, "{w:?}");
    }

    #[test]
    fn constant_test_function_gives_mass_residual() {
        let g = Grid::new_1d(32, 2.0 * PI).unwrap();
        let s0 = State::at_rest(
            ScalarField::from_fn(g, |x| 1.0 + 0.3 * sin(x[0])),
            ScalarField::from_fn(g, |x| 1.0 + 0.2 * cos(x[0])),
        )
        .unwrap();
        let p = ModelParams::default();
        let cfg = TimeStepConfig {
            dt: 0.05,
            t_end: 0.5,
            ..TimeStepConfig::default()
        };
        let h = run_history(&s0, &cfg, p);
        // With phi = 1 the continuity defect is (1/T) sum dt M_n - M_0.
        let total = h.states.last().unwrap().t;
        let mut expected = -h.records[0].mass;
        for w in h.states.windows(2) {
            expected += (w[1].t - w[0].t) / total * w[0].mass();
        }
        let w = weak_form_residual(&h.states, &p, 1).unwrap();
        assert!((w.continuity - expected.abs()).abs() <= 1e-13, "{} vs {}", w.continuity, expected);
        assert!(w.continuity <= 1e-12);
    }

    #[test]
    fn weak_form_needs_history() {
        let s = equilibrium(8);
        assert!(matches!(
            weak_form_residual(core::slice::from_ref(&s), &ModelParams::default(), 2),
            Err(Error::InsufficientHistory(_))
        ));
        let mut later = s.clone();
        later.t = 1.0;
        let mut last = s.clone();
        last.t = 3.0;
        assert!(weak_form_residual(&[s, later, last], &ModelParams::default(), 2).is_err());
    }

    #[test]
    fn uniform_cooling_slack_matches_rk4_oracle() {
        let p = ModelParams {
            delta: 0.1,
            ..ModelParams::unit()
        };
        let g = Grid::new_1d(4, 1.0).unwrap();
        let dt = 1e-4;
        let s0 = State::at_rest(ScalarField::constant(g, 1.0), ScalarField::constant(g, 2.0)).unwrap();
        let cfg = TimeStepConfig {
            dt,
            t_end: dt,
            ..TimeStepConfig::default()
        };
        let h = run_history(&s0, &cfg, p);
        let slack = dissipation_balance_slack(&h.records, 1.0).unwrap();

        // Oracle: the same balance evaluated on an RK4 solution of theta' = delta (theta^-2 - theta^5).
        let f = |x: f64| 0.1 * (1.0 / (x * x) - x.powi(5));
        let mut x: f64 = 2.0;
        let sub = 1000;
        let hh = dt / sub as f64;
        for _ in 0..sub {
            let a = f(x);
            let b = f(x + 0.5 * hh * a);
            let c = f(x + 0.5 * hh * b);
            let d = f(x + hh * c);
            x += hh / 6.0 * (a + 2.0 * b + 2.0 * c + d);
        }
        let len = 1.0;
        let hfun = |t: f64| len * (t - (1.0 + t.ln()));
        let (ra, rb, rc, rd) = (0.1 / x.powi(3), 0.1 * x.powi(5), 0.1 / (x * x), 0.1 * x.powi(4));
        let oracle = (hfun(2.0) + dt * (rc + rd)) - (hfun(x) + dt * (ra + rb));
        assert!((slack - oracle).abs() <= 1e-6, "{slack} vs {oracle}");
    }
}
