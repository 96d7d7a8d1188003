//! Closed-form ideal-gas thermodynamics.
//!
//! Everything here is derived from the free energy density
//!
//! ```text
//! psi(rho, theta) = k2 theta rho log(rho) - k1 rho theta log(theta)
//! ```
//!
//! and evaluated only on the open quadrant `rho > 0, theta > 0`. Points on or
//! outside the boundary are rejected when a [`LocalThermoPoint`] is built; they
//! are never clamped.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{exp, ln};

/// Largest argument accepted by `exp` before the result overflows `f64`.
const MAX_EXPONENT: f64 = 709.782_712_893_384;

/// Physical constants and regularization knobs of the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Heat-capacity coefficient in `e = k1 rho theta`.
    pub k1: f64,
    /// Gas coefficient in `p = k2 rho theta`.
    pub k2: f64,
    /// Viscosity.
    pub mu: f64,
    /// Darcy drag.
    pub nu: f64,
    /// Heat conductivity.
    pub kappa: f64,
    /// Artificial viscosity of the continuity equation.
    pub eps: f64,
    /// Strength of the temperature barrier/damping sources.
    pub delta: f64,
    /// Density exponent of the regularization.
    pub gamma_exp: f64,
    /// When set, `k1 = 1.5 k2` must hold exactly (monatomic gas, `e = 3/2 p`).
    pub enforce_ideal_ratio: bool,
}

/// One rejected parameter together with the reason it is physically inadmissible.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamViolation {
    pub field: &'static str,
    pub value: f64,
    pub reason: &'static str,
}

impl Default for ModelParams {
    /// Monatomic ideal gas with unit transport coefficients and no regularization.
    fn default() -> Self {
        Self::monatomic(1.0)
    }
}

impl ModelParams {
    /// Monatomic gas: `k1 = 3/2 k2`, unit transport coefficients, `eps = delta = 0`, `Gamma = 8`.
    pub fn monatomic(k2: f64) -> Self {
        Self {
            k1: 1.5 * k2,
            k2,
            mu: 1.0,
            nu: 1.0,
            kappa: 1.0,
            eps: 0.0,
            delta: 0.0,
            gamma_exp: 8.0,
            enforce_ideal_ratio: true,
        }
    }

    /// `k1 = k2 = 1`: the normalization used by the regularized scheme.
    pub fn unit() -> Self {
        Self {
            k1: 1.0,
            k2: 1.0,
            enforce_ideal_ratio: false,
            ..Self::monatomic(1.0)
        }
    }

    /// Checks every invariant and reports all violations, not just the first.
    pub fn validate(&self) -> core::result::Result<(), Vec<ParamViolation>> {
        let mut out = Vec::new();
        let mut check = |ok: bool, field: &'static str, value: f64, reason: &'static str| {
            if !ok {
                out.push(ParamViolation {
                    field,
                    value,
                    reason,
                });
            }
        };
        check(
            self.k1 > 0.0 && self.k1.is_finite(),
            "k1",
            self.k1,
            "heat-capacity coefficient must be positive",
        );
        check(
            self.k2 > 0.0 && self.k2.is_finite(),
            "k2",
            self.k2,
            "gas coefficient must be positive",
        );
        check(
            self.mu > 0.0 && self.mu.is_finite(),
            "mu",
            self.mu,
            "viscosity must be positive: in the pure Darcy limit (mu = 0) the velocity-gradient bounds supplied by the Laplacian are lost",
        );
        check(
            self.nu >= 0.0 && self.nu.is_finite(),
            "nu",
            self.nu,
            "Darcy drag must be non-negative",
        );
        check(
            self.kappa > 0.0 && self.kappa.is_finite(),
            "kappa",
            self.kappa,
            "heat conductivity must be positive",
        );
        check(
            self.eps >= 0.0 && self.eps.is_finite(),
            "eps",
            self.eps,
            "artificial viscosity must be non-negative",
        );
        check(
            self.delta >= 0.0 && self.delta.is_finite(),
            "delta",
            self.delta,
            "temperature regularization must be non-negative",
        );
        check(
            self.gamma_exp > 6.0 && self.gamma_exp.is_finite(),
            "gamma_exp",
            self.gamma_exp,
            "exponent must satisfy Gamma > 6 for the vanishing-viscosity estimate",
        );
        check(
            !self.enforce_ideal_ratio || self.k1 == 1.5 * self.k2,
            "k1",
            self.k1,
            "enforce_ideal_ratio requires k1 = 3/2 k2 exactly",
        );
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }
}

/// A point `(rho, theta)` of the open positive quadrant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalThermoPoint {
    rho: f64,
    theta: f64,
}

impl LocalThermoPoint {
    pub fn new(rho: f64, theta: f64) -> Result<Self> {
        if rho > 0.0 && theta > 0.0 && rho.is_finite() && theta.is_finite() {
            Ok(Self { rho, theta })
        } else {
            Err(Error::Domain { rho, theta })
        }
    }

    #[inline]
    pub fn rho(&self) -> f64 {
        self.rho
    }

    #[inline]
    pub fn theta(&self) -> f64 {
        self.theta
    }
}

/// Helmholtz free energy density `psi = k2 theta rho log rho - k1 rho theta log theta`.
pub fn free_energy(pt: LocalThermoPoint, p: &ModelParams) -> f64 {
    let (rho, theta) = (pt.rho, pt.theta);
    p.k2 * theta * rho * ln(rho) - p.k1 * rho * theta * ln(theta)
}

/// `d psi / d rho = k2 theta (log rho + 1) - k1 theta log theta`.
pub fn free_energy_drho(pt: LocalThermoPoint, p: &ModelParams) -> f64 {
    let (rho, theta) = (pt.rho, pt.theta);
    p.k2 * theta * (ln(rho) + 1.0) - p.k1 * theta * ln(theta)
}

/// `d psi / d theta = k2 rho log rho - k1 rho (log theta + 1)`.
pub fn free_energy_dtheta(pt: LocalThermoPoint, p: &ModelParams) -> f64 {
    let (rho, theta) = (pt.rho, pt.theta);
    p.k2 * rho * ln(rho) - p.k1 * rho * (ln(theta) + 1.0)
}

/// Entropy density `s = -d psi / d theta = -rho (k2 log rho - k1 (log theta + 1))`.
pub fn entropy(pt: LocalThermoPoint, p: &ModelParams) -> f64 {
    let (rho, theta) = (pt.rho, pt.theta);
    -rho * (p.k2 * ln(rho) - p.k1 * (ln(theta) + 1.0))
}

/// Internal energy density `e = psi + s theta = k1 rho theta`.
pub fn internal_energy(pt: LocalThermoPoint, p: &ModelParams) -> f64 {
    p.k1 * pt.rho * pt.theta
}

/// Pressure `p = rho psi_rho - psi = k2 rho theta`.
pub fn pressure(pt: LocalThermoPoint, p: &ModelParams) -> f64 {
    p.k2 * pt.rho * pt.theta
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument {
            name: "rho",
            value: rho,
            reason: "density must be positive",
        })
    }
}

/// Exponent of `theta(rho, s) = e^{-1} rho^{k2/k1} exp(s / (k1 rho))`, kept in log space.
fn log_theta_of(rho: f64, s: f64, p: &ModelParams) -> f64 {
    s / (p.k1 * rho) + (p.k2 / p.k1) * ln(rho) - 1.0
}

/// Explicit inversion of the entropy for the temperature.
pub fn temperature_from_entropy(rho: f64, s: f64, p: &ModelParams) -> Result<f64> {
    check_rho(rho)?;
    let exponent = log_theta_of(rho, s, p);
    if !(exponent <= MAX_EXPONENT) {
        return Err(Error::Overflow { exponent });
    }
    Ok(exp(exponent))
}

/// Internal energy in entropy variables, `e1(rho, s) = e(rho, theta(rho, s))`.
pub fn internal_energy_from_entropy(rho: f64, s: f64, p: &ModelParams) -> Result<f64> {
    check_rho(rho)?;
    let exponent = log_theta_of(rho, s, p) + ln(p.k1 * rho);
    if !(exponent <= MAX_EXPONENT) {
        return Err(Error::Overflow { exponent });
    }
    Ok(exp(exponent))
}

/// Pointwise entropy production rate
/// `(1/theta) (mu |grad u|^2 + nu rho |u|^2 + kappa |grad theta|^2 / theta)`.
pub fn entropy_production_density(
    theta: f64,
    grad_u_sq: f64,
    u_sq: f64,
    rho: f64,
    grad_theta_sq: f64,
    p: &ModelParams,
) -> Result<f64> {
    if !(theta > 0.0) || !(rho > 0.0) {
        return Err(Error::Domain { rho, theta });
    }
    for (name, value) in [
        ("grad_u_sq", grad_u_sq),
        ("u_sq", u_sq),
        ("grad_theta_sq", grad_theta_sq),
    ] {
        if !(value >= 0.0) {
            return Err(Error::InvalidArgument {
                name,
                value,
                reason: "squared magnitude must be non-negative",
            });
        }
    }
    Ok((p.mu * grad_u_sq + p.nu * rho * u_sq + p.kappa * grad_theta_sq / theta) / theta)
}

/// Relative-entropy type functional `H = e - theta_bar s`.
pub fn helmholtz_functional_h(pt: LocalThermoPoint, theta_bar: f64, p: &ModelParams) -> Result<f64> {
    if !(theta_bar > 0.0) {
        return Err(Error::InvalidArgument {
            name: "theta_bar",
            value: theta_bar,
            reason: "reference temperature must be positive",
        });
    }
    Ok(internal_energy(pt, p) - theta_bar * entropy(pt, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::E;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(rho: f64, theta: f64) -> LocalThermoPoint {
        LocalThermoPoint::new(rho, theta).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn free_energy_values() {
        let p = ModelParams::monatomic(1.0);
        assert_eq!(free_energy(pt(1.0, 1.0), &p), 0.0);
        assert!((free_energy(pt(E, 1.0), &p) - E).abs() < 1e-15);
        assert!((free_energy(pt(1.0, E), &p) + 1.5 * E).abs() < 1e-14);
    }

    #[test]
    fn boundary_points_are_rejected() {
        assert!(LocalThermoPoint::new(0.0, 1.0).is_err());
        assert!(LocalThermoPoint::new(1.0, 0.0).is_err());
        assert!(LocalThermoPoint::new(-1.0, 1.0).is_err());
        assert!(LocalThermoPoint::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn entropy_values() {
        let p = ModelParams::monatomic(1.0);
        assert!((entropy(pt(1.0, 1.0), &p) - 1.5).abs() < 1e-15);
        assert!((entropy(pt(E, 1.0), &p) - 0.5 * E).abs() < 1e-14);
    }

    #[test]
    fn entropy_is_minus_theta_derivative_of_free_energy() {
        let p = ModelParams::monatomic(1.0);
        let (rho, theta, h) = (1.3, 0.7, 1e-5);
        let fd = -(free_energy(pt(rho, theta + h), &p) - free_energy(pt(rho, theta - h), &p)) / (2.0 * h);
        let s = entropy(pt(rho, theta), &p);
        // third theta-derivative of psi is k1 rho / theta^2, so the central-difference error is ~ h^2 k1 rho / (6 theta^2)
        assert!((fd - s).abs() < 1e-9, "fd {fd} vs s {s}");
    }

    #[test]
    fn internal_energy_and_pressure_values() {
        let p = ModelParams::monatomic(1.0);
        assert_eq!(internal_energy(pt(1.0, 1.0), &p), 1.5);
        assert_eq!(internal_energy(pt(2.0, 3.0), &p), 9.0);
        assert_eq!(pressure(pt(1.0, 1.0), &p), 1.0);
        assert_eq!(pressure(pt(2.0, 3.0), &p), 6.0);
    }

    #[test]
    fn legendre_identity_on_random_points() {
        let p = ModelParams::monatomic(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let q = pt(rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0));
            let e = internal_energy(q, &p);
            let via_legendre = free_energy(q, &p) + entropy(q, &p) * q.theta();
            assert!(rel(via_legendre, e) < 1e-12);
        }
    }

    #[test]
    fn temperature_from_entropy_values() {
        let p = ModelParams::monatomic(1.0);
        assert!((temperature_from_entropy(1.0, p.k1, &p).unwrap() - 1.0).abs() < 1e-15);
        let s = entropy(pt(2.0, 5.0), &p);
        assert!(rel(temperature_from_entropy(2.0, s, &p).unwrap(), 5.0) < 1e-12);
        let unit = ModelParams::unit();
        // 2/e to 12 digits
        assert!((temperature_from_entropy(2.0, 0.0, &unit).unwrap() - 0.735_758_882_342_885).abs() < 1e-12);
    }

    #[test]
    fn temperature_from_entropy_errors() {
        let p = ModelParams::monatomic(1.0);
        assert!(matches!(
            temperature_from_entropy(0.0, 1.0, &p),
            Err(Error::InvalidArgument { .. })
        ));
        assert!(matches!(
            temperature_from_entropy(1.0, 1e4, &p),
            Err(Error::Overflow { .. })
        ));
        assert!(matches!(
            internal_energy_from_entropy(1.0, 1e4, &p),
            Err(Error::Overflow { .. })
        ));
    }

    #[test]
    fn internal_energy_from_entropy_lemmas() {
        let p = ModelParams::monatomic(1.0);
        assert!((internal_energy_from_entropy(1.0, p.k1, &p).unwrap() - 1.5).abs() < 1e-14);

        let (rho, s, h) = (1.2, 0.4, 1e-5);
        let e1 = |r: f64, s: f64| internal_energy_from_entropy(r, s, &p).unwrap();
        let theta = temperature_from_entropy(rho, s, &p).unwrap();
        let de_ds = (e1(rho, s + h) - e1(rho, s - h)) / (2.0 * h);
        assert!((de_ds - theta).abs() < 1e-8);
        let de_drho = (e1(rho + h, s) - e1(rho - h, s)) / (2.0 * h);
        let psi_rho = free_energy_drho(pt(rho, theta), &p);
        assert!((de_drho - psi_rho).abs() < 1e-8);
    }

    #[test]
    fn entropy_production_values() {
        let mut p = ModelParams::monatomic(1.0);
        assert_eq!(entropy_production_density(1.3, 0.0, 0.0, 2.0, 0.0, &p).unwrap(), 0.0);
        p.nu = 0.0;
        p.kappa = 0.0;
        assert_eq!(entropy_production_density(2.0, 4.0, 0.0, 1.0, 0.0, &p).unwrap(), 2.0);
        p.mu = 0.0;
        p.nu = 1.0;
        assert_eq!(entropy_production_density(1.0, 0.0, 3.0, 2.0, 0.0, &p).unwrap(), 6.0);
        assert!(entropy_production_density(0.0, 0.0, 0.0, 1.0, 0.0, &p).is_err());
        assert!(entropy_production_density(1.0, -1.0, 0.0, 1.0, 0.0, &p).is_err());
    }

    #[test]
    fn helmholtz_functional_values_and_minimum() {
        let p = ModelParams::unit();
        assert!(helmholtz_functional_h(pt(1.0, 1.0), 1.0, &p).unwrap().abs() < 1e-15);
        assert!((helmholtz_functional_h(pt(1.0, E), 1.0, &p).unwrap() - (E - 2.0)).abs() < 1e-14);
        assert!(helmholtz_functional_h(pt(1.0, 1.0), 0.0, &p).is_err());

        // golden-section search over theta in [0.1, 10]
        let h = |t: f64| helmholtz_functional_h(pt(1.0, t), 1.0, &p).unwrap();
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (0.1, 10.0);
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if h(c) < h(d) {
                b = d;
            } else {
                a = c;
            }
        }
        assert!((0.5 * (a + b) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn validation_reports_all_violations() {
        let mut p = ModelParams::monatomic(1.0);
        assert!(p.validate().is_ok());
        p.mu = 0.0;
        p.gamma_exp = 4.0;
        p.kappa = -1.0;
        let errs = p.validate().unwrap_err();
        let fields: Vec<_> = errs.iter().map(|e| e.field).collect();
        assert_eq!(fields, ["mu", "kappa", "gamma_exp"]);

        let mut q = ModelParams::monatomic(2.0);
        q.k1 = 2.0;
        assert_eq!(q.validate().unwrap_err()[0].field, "k1");
        q.enforce_ideal_ratio = false;
        assert!(q.validate().is_ok());
    }
}
