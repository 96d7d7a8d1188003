//! Thermodynamics derived from an arbitrary free-energy density.
//!
//! Starting from `psi(rho, theta)` alone, entropy, internal energy and pressure
//! follow as
//!
//! ```text
//! s = -psi_theta,   e = psi - theta psi_theta,   p = rho psi_rho - psi
//! ```
//!
//! The partial derivatives come from user-supplied closed forms when they are
//! available and from fourth-order central differences otherwise. The
//! residual functions in this module check the structural identities that any
//! such derivation must satisfy: the pressure-gradient decomposition
//! `grad p = rho grad psi_rho + s grad theta`, the Gibbs relation in specific
//! variables, and the two entropy-variable identities `d e1/ds = theta`,
//! `d e1/drho = psi_rho`.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::constitutive::{self, LocalThermoPoint, ModelParams};
use crate::error::{Error, Result};
use crate::math::{abs, cos, exp, ln, max, powf, sin};

type ScalarMap = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A free-energy density `psi(rho, theta)` with optional closed-form partials.
pub struct FreeEnergyModel {
    name: String,
    psi: ScalarMap,
    psi_rho: Option<ScalarMap>,
    psi_theta: Option<ScalarMap>,
}

impl core::fmt::Debug for FreeEnergyModel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("FreeEnergyModel")
            .field("name", &self.name)
            .field("analytic_partials", &self.has_analytic_partials())
            .finish()
    }
}

impl FreeEnergyModel {
    pub fn new(name: impl Into<String>, psi: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            psi: Box::new(psi),
            psi_rho: None,
            psi_theta: None,
        }
    }

    /// Attaches closed-form `d psi/d rho` and `d psi/d theta`.
    pub fn with_partials(
        mut self,
        psi_rho: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        psi_theta: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.psi_rho = Some(Box::new(psi_rho));
        self.psi_theta = Some(Box::new(psi_theta));
        self
    }

    /// The ideal-gas free energy with its closed-form partials.
    pub fn ideal_gas(p: &ModelParams) -> Self {
        let (k1, k2) = (p.k1, p.k2);
        Self::new("ideal-gas", move |r, t| k2 * t * r * ln(r) - k1 * r * t * ln(t)).with_partials(
            move |r, t| k2 * t * (ln(r) + 1.0) - k1 * t * ln(t),
            move |r, t| k2 * r * ln(r) - k1 * r * (ln(t) + 1.0),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn psi(&self, rho: f64, theta: f64) -> f64 {
        (self.psi)(rho, theta)
    }

    pub fn has_analytic_partials(&self) -> bool {
        self.psi_rho.is_some() && self.psi_theta.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    FiniteDifference,
}

/// Where `s_theta = -psi_theta_theta` failed to be positive on the probe grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonInvertible {
    pub rho: f64,
    pub theta: f64,
    pub slope: f64,
}

/// Entropy, internal energy and pressure obtained from a [`FreeEnergyModel`].
#[derive(Debug)]
pub struct DerivedLaws<'a> {
    model: &'a FreeEnergyModel,
    provenance: Provenance,
    fd_step: f64,
    non_invertible: Option<NonInvertible>,
}

/// Default relative step of the derivative stencils.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// Fourth-order central difference with a step relative to `x`.
fn d4<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    let dx = h * max(abs(x), 1e-300);
    (-f(x + 2.0 * dx) + 8.0 * f(x + dx) - 8.0 * f(x - dx) + f(x - 2.0 * dx)) / (12.0 * dx)
}

/// Second-order central difference with a step relative to `x`.
fn d2<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    let dx = h * max(abs(x), 1e-300);
    (f(x + dx) - f(x - dx)) / (2.0 * dx)
}

/// The 10 x 10 log-spaced probe grid on `[0.1, 10]^2`.
pub fn probe_grid() -> impl Iterator<Item = (f64, f64)> {
    let node = |i: usize| exp(ln(0.1) + (ln(10.0) - ln(0.1)) * i as f64 / 9.0);
    (0..10).flat_map(move |i| (0..10).map(move |j| (node(i), node(j))))
}

/// Derives the laws with analytic partials when the model has them.
pub fn derive_laws(model: &FreeEnergyModel, h: f64) -> Result<DerivedLaws<'_>> {
    let provenance = if model.has_analytic_partials() {
        Provenance::Analytic
    } else {
        Provenance::FiniteDifference
    };
    derive_laws_with(model, h, provenance)
}

/// Derives the laws with an explicit choice of derivative route.
///
/// Asking for [`Provenance::Analytic`] on a model without closed-form
/// partials is an error.
pub fn derive_laws_with(model: &FreeEnergyModel, h: f64, provenance: Provenance) -> Result<DerivedLaws<'_>> {
    if !(1e-8..=1e-2).contains(&h) {
        return Err(Error::InvalidArgument {
            name: "h",
            value: h,
            reason: "finite-difference step must lie in [1e-8, 1e-2]",
        });
    }
    if provenance == Provenance::Analytic && !model.has_analytic_partials() {
        return Err(Error::InvalidArgument {
            name: "provenance",
            value: 0.0,
            reason: "model has no analytic partials",
        });
    }
    let mut laws = DerivedLaws {
        model,
        provenance,
        fd_step: h,
        non_invertible: None,
    };
    laws.non_invertible = probe_grid()
        .map(|(r, t)| NonInvertible {
            rho: r,
            theta: t,
            slope: laws.s_theta(r, t),
        })
        .find(|c| !(c.slope > 0.0));
    Ok(laws)
}

impl<'a> DerivedLaws<'a> {
    pub fn model(&self) -> &'a FreeEnergyModel {
        self.model
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    /// First probe point where entropy fails to increase with temperature.
    pub fn non_invertible(&self) -> Option<NonInvertible> {
        self.non_invertible
    }

    pub fn ensure_invertible(&self) -> Result<()> {
        match self.non_invertible {
            None => Ok(()),
            Some(c) => Err(Error::NotInvertible {
                rho: c.rho,
                theta: c.theta,
                slope: c.slope,
            }),
        }
    }

    pub fn psi(&self, rho: f64, theta: f64) -> f64 {
        self.model.psi(rho, theta)
    }

    pub fn psi_rho(&self, rho: f64, theta: f64) -> f64 {
        match (self.provenance, &self.model.psi_rho) {
            (Provenance::Analytic, Some(f)) => f(rho, theta),
            _ => d4(|r| self.model.psi(r, theta), rho, self.fd_step),
        }
    }

    pub fn psi_theta(&self, rho: f64, theta: f64) -> f64 {
        match (self.provenance, &self.model.psi_theta) {
            (Provenance::Analytic, Some(f)) => f(rho, theta),
            _ => d4(|t| self.model.psi(rho, t), theta, self.fd_step),
        }
    }

    /// `s = -psi_theta`.
    pub fn s(&self, rho: f64, theta: f64) -> f64 {
        -self.psi_theta(rho, theta)
    }

    /// `e = psi - theta psi_theta`.
    pub fn e(&self, rho: f64, theta: f64) -> f64 {
        self.psi(rho, theta) - theta * self.psi_theta(rho, theta)
    }

    /// `p = rho psi_rho - psi`.
    pub fn p(&self, rho: f64, theta: f64) -> f64 {
        rho * self.psi_rho(rho, theta) - self.psi(rho, theta)
    }

    /// `d s / d theta`, differentiated numerically from `s`.
    pub fn s_theta(&self, rho: f64, theta: f64) -> f64 {
        d4(|t| self.s(rho, t), theta, self.fd_step.max(1e-3))
    }
}

/// Maximum over interior samples of `|p_x - rho (psi_rho)_x - s theta_x|`,
/// with every x-derivative taken by central differences of spacing `dx`.
pub fn lemma0_residual(laws: &DerivedLaws<'_>, rho_profile: &[f64], theta_profile: &[f64], dx: f64) -> Result<f64> {
    if rho_profile.len() != theta_profile.len() || rho_profile.len() < 5 {
        return Err(Error::InvalidArgument {
            name: "profile length",
            value: rho_profile.len() as f64,
            reason: "profiles need matching lengths and at least 5 samples",
        });
    }
    if !(dx > 0.0) {
        return Err(Error::InvalidArgument {
            name: "dx",
            value: dx,
            reason: "sample spacing must be positive",
        });
    }
    for (&r, &t) in rho_profile.iter().zip(theta_profile) {
        LocalThermoPoint::new(r, t)?;
    }
    let p: Vec<f64> = rho_profile
        .iter()
        .zip(theta_profile)
        .map(|(&r, &t)| laws.p(r, t))
        .collect();
    let psi_rho: Vec<f64> = rho_profile
        .iter()
        .zip(theta_profile)
        .map(|(&r, &t)| laws.psi_rho(r, t))
        .collect();
    let n = rho_profile.len();
    let dc = |v: &[f64], i: usize| (v[i + 1] - v[i - 1]) / (2.0 * dx);
    Ok((1..n - 1)
        .map(|i| {
            let (r, t) = (rho_profile[i], theta_profile[i]);
            abs(dc(&p, i) - r * dc(&psi_rho, i) - laws.s(r, t) * dc(theta_profile, i))
        })
        .fold(0.0, f64::max))
}

/// Gibbs relation in specific variables, `theta d(s/rho) = d(e/rho) + p d(1/rho)`,
/// split into its theta- and rho-components.
pub fn gibbs_residual(laws: &DerivedLaws<'_>, pt: LocalThermoPoint, h: f64) -> (f64, f64) {
    let (rho, theta) = (pt.rho(), pt.theta());
    let s_hat = |r: f64, t: f64| laws.s(r, t) / r;
    let e_hat = |r: f64, t: f64| laws.e(r, t) / r;
    let r_theta = abs(theta * d2(|t| s_hat(rho, t), theta, h) - d2(|t| e_hat(rho, t), theta, h));
    let r_rho = abs(
        theta * d2(|r| s_hat(r, theta), rho, h) - d2(|r| e_hat(r, theta), rho, h) + laws.p(rho, theta) / (rho * rho),
    );
    (r_theta, r_rho)
}

/// Search interval for the numerical entropy inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionBracket {
    pub theta_min: f64,
    pub theta_max: f64,
}

impl Default for InversionBracket {
    fn default() -> Self {
        Self {
            theta_min: 1e-6,
            theta_max: 1e6,
        }
    }
}

/// Solves `s(rho, theta) = s_value` for theta by bisection in `log theta`,
/// relying on `s` being increasing in theta.
pub fn invert_entropy(laws: &DerivedLaws<'_>, rho: f64, s_value: f64, bracket: InversionBracket) -> Result<f64> {
    let fail = Error::InversionFailure {
        rho,
        s: s_value,
        theta_min: bracket.theta_min,
        theta_max: bracket.theta_max,
    };
    let (mut lo, mut hi) = (ln(bracket.theta_min), ln(bracket.theta_max));
    let s_lo = laws.s(rho, exp(lo));
    let s_hi = laws.s(rho, exp(hi));
    if !(s_lo <= s_value && s_value <= s_hi) {
        return Err(fail);
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if laws.s(rho, exp(mid)) < s_value {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(exp(0.5 * (lo + hi)))
}

/// Residuals of `d e1/ds = theta(rho, s)` and `d e1/drho = psi_rho(rho, theta(rho, s))`
/// where `e1(rho, s) = e(rho, theta(rho, s))` is composed through [`invert_entropy`].
pub fn lemma12_check(laws: &DerivedLaws<'_>, rho: f64, s_value: f64, h: f64) -> Result<(f64, f64)> {
    lemma12_check_in(laws, rho, s_value, h, InversionBracket::default())
}

pub fn lemma12_check_in(
    laws: &DerivedLaws<'_>,
    rho: f64,
    s_value: f64,
    h: f64,
    bracket: InversionBracket,
) -> Result<(f64, f64)> {
    laws.ensure_invertible()?;
    LocalThermoPoint::new(rho, 1.0)?;
    let theta = invert_entropy(laws, rho, s_value, bracket)?;
    let e1 = |r: f64, s: f64| -> Result<f64> { Ok(laws.e(r, invert_entropy(laws, r, s, bracket)?)) };
    let ds = h * max(abs(s_value), 1.0);
    let de_ds = (e1(rho, s_value + ds)? - e1(rho, s_value - ds)?) / (2.0 * ds);
    let dr = h * rho;
    let de_drho = (e1(rho + dr, s_value)? - e1(rho - dr, s_value)?) / (2.0 * dr);
    Ok((abs(de_ds - theta), abs(de_drho - laws.psi_rho(rho, theta))))
}

/// One row of the identity report produced by [`identity_suite`].
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub model: String,
    pub identity: &'static str,
    pub max_residual: f64,
    /// Residual reduction per step halving, for checks that are refinement tests.
    pub refinement_ratio: Option<f64>,
    pub passed: bool,
}

/// Minimum residual reduction per halving accepted as second-order decay.
pub const MIN_REFINEMENT_RATIO: f64 = 3.5;

fn profile(n: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let dx = 2.0 * core::f64::consts::PI / (n - 1) as f64;
    let rho = (0..n).map(|i| 1.0 + 0.3 * sin(i as f64 * dx)).collect();
    let theta = (0..n).map(|i| 1.0 + 0.2 * cos(i as f64 * dx)).collect();
    (rho, theta, dx)
}

/// Runs the complete identity suite on one model.
///
/// `closed_form` enables the comparisons against the ideal-gas formulas of
/// [`constitutive`]; pass it only for ideal-gas models built from the same
/// parameters.
pub fn identity_suite(model: &FreeEnergyModel, closed_form: Option<&ModelParams>) -> Result<Vec<IdentityCheck>> {
    let mut out = Vec::new();
    let mut push = |identity: &'static str, max_residual: f64, ratio: Option<f64>, passed: bool| {
        out.push(IdentityCheck {
            model: String::from(model.name()),
            identity,
            max_residual,
            refinement_ratio: ratio,
            passed: passed && max_residual.is_finite(),
        })
    };
    let laws = derive_laws(model, DEFAULT_FD_STEP)?;
    push(
        "entropy invertible (s_theta > 0)",
        laws.non_invertible().map_or(0.0, |c| -c.slope),
        None,
        laws.non_invertible().is_none(),
    );

    if let Some(params) = closed_form {
        let mut worst = [0.0f64; 3];
        for (r, t) in probe_grid() {
            let q = LocalThermoPoint::new(r, t)?;
            worst[0] = worst[0].max(abs(laws.s(r, t) - constitutive::entropy(q, params)));
            worst[1] = worst[1].max(abs(laws.e(r, t) - constitutive::internal_energy(q, params)));
            worst[2] = worst[2].max(abs(laws.p(r, t) - constitutive::pressure(q, params)));
        }
        push("derived s = closed form", worst[0], None, worst[0] <= 1e-7);
        push("derived e = closed form", worst[1], None, worst[1] <= 1e-7);
        push("derived p = closed form", worst[2], None, worst[2] <= 1e-7);
        if params.enforce_ideal_ratio {
            let w = probe_grid()
                .map(|(r, t)| {
                    let q = LocalThermoPoint::new(r, t).unwrap();
                    let e = constitutive::internal_energy(q, params);
                    abs(e - 1.5 * constitutive::pressure(q, params)) / e
                })
                .fold(0.0, f64::max);
            push("e = 3/2 p", w, None, w <= 1e-12);
        }
    }

    // Analytic and finite-difference routes must agree to second order or better.
    if model.has_analytic_partials() {
        let fd = |h: f64| -> Result<f64> {
            let a = derive_laws_with(model, h, Provenance::Analytic)?;
            let f = derive_laws_with(model, h, Provenance::FiniteDifference)?;
            Ok(probe_grid()
                .map(|(r, t)| {
                    let d = abs(a.s(r, t) - f.s(r, t)) + abs(a.p(r, t) - f.p(r, t));
                    d / (1.0 + abs(a.s(r, t)) + abs(a.p(r, t)))
                })
                .fold(0.0, f64::max))
        };
        let (coarse, fine) = (fd(1e-2)?, fd(5e-3)?);
        let ratio = coarse / fine;
        push(
            "analytic vs finite-difference partials",
            fine,
            Some(ratio),
            fine <= 1e-6 && ratio >= MIN_REFINEMENT_RATIO,
        );
    }

    let lemma0 = |n: usize| -> Result<f64> {
        let (r, t, dx) = profile(n);
        lemma0_residual(&laws, &r, &t, dx)
    };
    let (c, f) = (lemma0(65)?, lemma0(129)?);
    push(
        "grad p = rho grad psi_rho + s grad theta",
        f,
        Some(c / f),
        c / f >= MIN_REFINEMENT_RATIO,
    );

    let gibbs = |h: f64| -> f64 {
        probe_grid()
            .map(|(r, t)| {
                let (a, b) = gibbs_residual(&laws, LocalThermoPoint::new(r, t).unwrap(), h);
                max(a, b)
            })
            .fold(0.0, f64::max)
    };
    let (c, f) = (gibbs(1e-2), gibbs(5e-3));
    push(
        "Gibbs relation (specific variables)",
        f,
        Some(c / f),
        c / f >= MIN_REFINEMENT_RATIO,
    );

    if laws.ensure_invertible().is_ok() {
        let rho = 1.3;
        let s = laws.s(rho, 0.8);
        match (lemma12_check(&laws, rho, s, 1e-2), lemma12_check(&laws, rho, s, 5e-3)) {
            (Ok((c1, c2)), Ok((f1, f2))) => {
                push("d e1/ds = theta", f1, Some(c1 / f1), c1 / f1 >= MIN_REFINEMENT_RATIO);
                push(
                    "d e1/drho = psi_rho",
                    f2,
                    Some(c2 / f2),
                    c2 / f2 >= MIN_REFINEMENT_RATIO,
                );
            }
            _ => {
                push("d e1/ds = theta", f64::NAN, None, false);
                push("d e1/drho = psi_rho", f64::NAN, None, false);
            }
        }
    }
    Ok(out)
}

/// Synthetic models used alongside the ideal gas in the identity report.
pub fn synthetic_models() -> Vec<FreeEnergyModel> {
    alloc::vec![
        FreeEnergyModel::new("ideal-gas+rho^2 (numeric partials)", |r, t| {
            r * t * ln(r) - r * t * ln(t) + r * r
        }),
        FreeEnergyModel::new("power-law heat capacity", |r, t| {
            r * t * ln(r) - 2.0 * r * powf(t, 1.5)
        })
        .with_partials(
            |_r, t| t * (ln(_r) + 1.0) - 2.0 * powf(t, 1.5),
            |r, t| r * ln(r) - 3.0 * r * powf(t, 0.5),
        ),
    ]
}

/// An ideal gas whose supplied `psi_theta` is deliberately wrong, used as a
/// negative control for the identity checks.
pub fn corrupted_model(p: &ModelParams) -> FreeEnergyModel {
    let (k1, k2) = (p.k1, p.k2);
    FreeEnergyModel::new("corrupted ideal gas", move |r, t| k2 * t * r * ln(r) - k1 * r * t * ln(t)).with_partials(
        move |r, t| k2 * t * (ln(r) + 1.0) - k1 * t * ln(t),
        move |r, t| k2 * r * ln(r) - k1 * r * (ln(t) + 1.0) + 0.05 * r * t,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal() -> (ModelParams, FreeEnergyModel) {
        let p = ModelParams::monatomic(1.0);
        let m = FreeEnergyModel::ideal_gas(&p);
        (p, m)
    }

    #[test]
    fn finite_difference_laws_match_closed_forms() {
        let (p, m) = ideal();
        let laws = derive_laws_with(&m, 1e-4, Provenance::FiniteDifference).unwrap();
        let q = LocalThermoPoint::new(1.3, 0.7).unwrap();
        assert!((laws.s(1.3, 0.7) - constitutive::entropy(q, &p)).abs() < 1e-7);
        assert!((laws.e(1.3, 0.7) - constitutive::internal_energy(q, &p)).abs() < 1e-7);
        assert!((laws.p(1.3, 0.7) - constitutive::pressure(q, &p)).abs() < 1e-7);
    }

    #[test]
    fn zero_and_linear_models() {
        let zero = FreeEnergyModel::new("zero", |_, _| 0.0);
        let laws = derive_laws(&zero, 1e-4).unwrap();
        assert_eq!((laws.s(2.0, 3.0), laws.e(2.0, 3.0), laws.p(2.0, 3.0)), (0.0, 0.0, 0.0));
        assert!(laws.non_invertible().is_some());

        let linear = FreeEnergyModel::new("rho theta", |r, t| r * t);
        let laws = derive_laws(&linear, 1e-4).unwrap();
        assert!((laws.s(2.0, 3.0) + 2.0).abs() < 1e-10);
        assert!(laws.e(2.0, 3.0).abs() < 1e-9);
        assert!(laws.p(2.0, 3.0).abs() < 1e-9);
    }

    #[test]
    fn step_outside_range_is_rejected() {
        let (_, m) = ideal();
        assert!(derive_laws(&m, 1e-1).is_err());
        assert!(derive_laws(&m, 1e-9).is_err());
        let no_partials = FreeEnergyModel::new("x", |r, t| r * t);
        assert!(derive_laws_with(&no_partials, 1e-4, Provenance::Analytic).is_err());
    }

    #[test]
    fn lemma0_constant_profiles_vanish() {
        let (_, m) = ideal();
        let laws = derive_laws(&m, 1e-4).unwrap();
        let r = [1.4; 8];
        let t = [0.6; 8];
        assert_eq!(lemma0_residual(&laws, &r, &t, 0.1).unwrap(), 0.0);
        assert!(lemma0_residual(&laws, &r[..4], &t[..4], 0.1).is_err());
        assert!(lemma0_residual(&laws, &[1.0, 1.0, -1.0, 1.0, 1.0], &[1.0; 5], 0.1).is_err());
    }

    #[test]
    fn lemma0_linear_density_decays_quadratically() {
        let (_, m) = ideal();
        let laws = derive_laws(&m, 1e-4).unwrap();
        let res = |n: usize| {
            let dx = 1.0 / (n - 1) as f64;
            let r: Vec<f64> = (0..n).map(|i| 0.5 + 2.0 * i as f64 * dx).collect();
            lemma0_residual(&laws, &r, &alloc::vec![0.9; n], dx).unwrap()
        };
        let ratio = res(33) / res(65);
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }

    #[test]
    fn gibbs_ideal_gas() {
        let (_, m) = ideal();
        let laws = derive_laws(&m, 1e-4).unwrap();
        let (a, b) = gibbs_residual(&laws, LocalThermoPoint::new(1.0, 1.0).unwrap(), 1e-5);
        assert!(a <= 1e-8 && b <= 1e-8, "{a} {b}");
        let (a, b) = gibbs_residual(&laws, LocalThermoPoint::new(2.7, 0.3).unwrap(), 1e-5);
        assert!(a <= 1e-7 && b <= 1e-7, "{a} {b}");
    }

    #[test]
    fn gibbs_holds_for_non_ideal_model() {
        let m = FreeEnergyModel::new("rho^2", |r, t| r * t * ln(r) - r * t * ln(t) + r * r);
        let laws = derive_laws(&m, 1e-4).unwrap();
        let q = LocalThermoPoint::new(1.7, 0.6).unwrap();
        let (a1, b1) = gibbs_residual(&laws, q, 1e-2);
        let (a2, b2) = gibbs_residual(&laws, q, 5e-3);
        assert!(a1 / a2 > 3.5 && b1 / b2 > 3.5, "{a1} {a2} {b1} {b2}");
    }

    #[test]
    fn lemma12_ideal_gas() {
        let (p, m) = ideal();
        let laws = derive_laws(&m, 1e-4).unwrap();
        let theta = invert_entropy(&laws, 1.0, p.k1, InversionBracket::default()).unwrap();
        assert!((theta - 1.0).abs() < 1e-12);
        let (r1, r2) = lemma12_check(&laws, 1.0, p.k1, 1e-4).unwrap();
        assert!(r1 <= 1e-6 && r2 <= 1e-6);

        let theta = invert_entropy(&laws, 2.0, 0.0, InversionBracket::default()).unwrap();
        let exact = constitutive::temperature_from_entropy(2.0, 0.0, &p).unwrap();
        assert!((theta - exact).abs() < 1e-12 * exact);
        let (r1, r2) = lemma12_check(&laws, 2.0, 0.0, 1e-4).unwrap();
        assert!(r1 <= 1e-6 && r2 <= 1e-6);
    }

    #[test]
    fn lemma12_out_of_range_entropy() {
        let (_, m) = ideal();
        let laws = derive_laws(&m, 1e-4).unwrap();
        assert!(matches!(
            lemma12_check(&laws, 1.0, 100.0, 1e-4),
            Err(Error::InversionFailure { .. })
        ));
        let zero = FreeEnergyModel::new("zero", |_, _| 0.0);
        let laws = derive_laws(&zero, 1e-4).unwrap();
        assert!(matches!(
            lemma12_check(&laws, 1.0, 0.0, 1e-4),
            Err(Error::NotInvertible { .. })
        ));
    }

    #[test]
    fn suite_passes_for_shipped_models_and_fails_for_corrupted() {
        let (p, m) = ideal();
        for check in identity_suite(&m, Some(&p)).unwrap() {
            assert!(check.passed, "{check:?}");
        }
        for model in synthetic_models() {
            for check in identity_suite(&model, None).unwrap() {
                assert!(check.passed, "{check:?}");
            }
        }
        let bad = corrupted_model(&p);
        let checks = identity_suite(&bad, Some(&p)).unwrap();
        assert!(checks.iter().any(|c| !c.passed));
    }
}
