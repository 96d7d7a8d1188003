//! Runtime checks of the balance laws and inequalities along one trajectory.

use std::convert::Infallible;

use brinkman_fourier::diagnostics::DiagnosticsRecord;
use brinkman_fourier::evolution::{Observer, State};
use brinkman_fourier::{ModelParams, TimeStepConfig};

/// Relative mass drift allowed over a run.
pub const MASS_TOL: f64 = 1e-12;
/// Per-step entropy decrease allowed, relative to `|S|`, when `eps = delta = 0`.
pub const ENTROPY_STEP_TOL: f64 = 1e-8;

/// Energy-balance tolerance relative to the initial energy.
pub fn energy_tol(cfg: &TimeStepConfig, steps: usize) -> f64 {
    (100.0 * cfg.solver_tol * steps.max(1) as f64).max(1e-10)
}

/// Bound on the normalized Brinkman energy-identity defect of every solve.
pub fn brinkman_tol(cfg: &TimeStepConfig) -> f64 {
    (10.0 * cfg.solver_tol).max(1e-10)
}

/// Extremes of the monitored quantities seen so far.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantMonitor {
    pub steps: usize,
    pub max_mass_drift: f64,
    pub max_energy_residual: f64,
    pub min_sigma: f64,
    /// Smallest `(S_k - S_{k-1}) / |S_{k-1}|`.
    pub worst_entropy_step: f64,
    pub max_brinkman_residual: f64,
    pub min_dissipation_slack: f64,
    pub min_rho: f64,
    pub min_theta: f64,
    /// `(t, min theta)` after every accepted step.
    pub theta_min_series: Vec<(f64, f64)>,
    pub picard_warnings: usize,
    last_entropy: Option<f64>,
    initial_energy: Option<f64>,
}

impl Default for InvariantMonitor {
    fn default() -> Self {
        Self {
            steps: 0,
            max_mass_drift: 0.0,
            max_energy_residual: 0.0,
            min_sigma: f64::INFINITY,
            worst_entropy_step: f64::INFINITY,
            max_brinkman_residual: 0.0,
            min_dissipation_slack: f64::INFINITY,
            min_rho: f64::INFINITY,
            min_theta: f64::INFINITY,
            theta_min_series: Vec::new(),
            picard_warnings: 0,
            last_entropy: None,
            initial_energy: None,
        }
    }
}

/// One monitored bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl InvariantMonitor {
    /// Checks against the tolerances for a run with `p` and `cfg`. The entropy
    /// monotonicity check only applies to unregularized, unforced runs.
    pub fn checks(&self, p: &ModelParams, cfg: &TimeStepConfig, forced: bool) -> Vec<Check> {
        let le = |name, value: f64, bound: f64| Check {
            name,
            value,
            bound,
            pass: value <= bound,
        };
        let ge = |name, value: f64, bound: f64| Check {
            name,
            value,
            bound,
            pass: value >= bound,
        };
        let mut out = vec![
            le("mass_drift", self.max_mass_drift, MASS_TOL),
            le("energy_balance", self.max_energy_residual, energy_tol(cfg, self.steps)),
            ge("sigma_min", self.min_sigma, 0.0),
            le("brinkman_identity", self.max_brinkman_residual, brinkman_tol(cfg)),
            Check {
                name: "positivity",
                value: self.min_rho.min(self.min_theta),
                bound: 0.0,
                pass: self.min_rho > 0.0 && self.min_theta > 0.0,
            },
        ];
        if p.eps == 0.0 && p.delta == 0.0 && !forced && self.steps > 0 {
            out.push(ge("entropy_step", self.worst_entropy_step, -ENTROPY_STEP_TOL));
        }
        out
    }

    pub fn all_pass(&self, p: &ModelParams, cfg: &TimeStepConfig, forced: bool) -> bool {
        self.checks(p, cfg, forced).iter().all(|c| c.pass)
    }
}

impl Observer for InvariantMonitor {
    type Error = Infallible;

    fn observe(&mut self, step: usize, state: &State, r: &DiagnosticsRecord) -> Result<(), Infallible> {
        self.steps = step;
        let e0 = *self.initial_energy.get_or_insert(r.energy);
        self.max_mass_drift = self.max_mass_drift.max(r.mass_drift().abs());
        self.max_energy_residual = self.max_energy_residual.max(r.energy_balance_residual.abs() / e0.abs());
        self.min_sigma = self.min_sigma.min(r.sigma_min);
        if let Some(prev) = self.last_entropy {
            self.worst_entropy_step = self.worst_entropy_step.min((r.entropy - prev) / prev.abs());
        }
        self.last_entropy = Some(r.entropy);
        self.max_brinkman_residual = self.max_brinkman_residual.max(r.brinkman_residual);
        if step > 0 {
            self.min_dissipation_slack = self.min_dissipation_slack.min(r.dissipation_slack);
        }
        self.min_rho = self.min_rho.min(state.rho.min());
        self.min_theta = self.min_theta.min(state.theta.min());
        self.theta_min_series.push((r.t, state.theta.min()));
        self.picard_warnings += usize::from(r.picard_warning);
        Ok(())
    }
}
