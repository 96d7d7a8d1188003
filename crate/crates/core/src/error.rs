use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A constitutive function was asked for a state outside rho > 0, theta > 0.
    #[error("thermodynamic state outside the open quadrant: rho = {rho}, theta = {theta}")]
    Domain { rho: f64, theta: f64 },

    #[error("invalid argument `{name}` = {value}: {reason}")]
    InvalidArgument {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("exponential overflow (exponent {exponent})")]
    Overflow { exponent: f64 },

    #[error("entropy {s} at rho = {rho} is outside the range of s(rho, .) on [{theta_min}, {theta_max}]")]
    InversionFailure {
        rho: f64,
        s: f64,
        theta_min: f64,
        theta_max: f64,
    },

    #[error("entropy is not strictly increasing in theta (d s/d theta = {slope} at rho = {rho}, theta = {theta})")]
    NotInvertible { rho: f64, theta: f64, slope: f64 },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("operator is not positive definite (curvature {curvature:e} at iteration {iteration})")]
    NotPositiveDefinite { iteration: usize, curvature: f64 },

    #[error("time step {dt} violates the advective CFL bound {limit}")]
    Cfl { dt: f64, limit: f64 },

    #[error("positivity lost in `{field}` at cell {cell}: value {value:e} (threshold {threshold:e})")]
    Positivity {
        field: &'static str,
        cell: usize,
        value: f64,
        threshold: f64,
    },

    #[error("non-finite value in `{field}` at cell {cell}")]
    NonFinite { field: &'static str, cell: usize },

    #[error("insufficient history: {0}")]
    InsufficientHistory(&'static str),
}
