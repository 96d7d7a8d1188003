//! Thermodynamic identity report behind `bflab derive-check`.

use brinkman_fourier::constitutive::{self, LocalThermoPoint};
use brinkman_fourier::envara::{self, FreeEnergyModel, IdentityCheck};
use brinkman_fourier::ModelParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative tolerance of the closed-form identities at random points.
pub const POINTWISE_TOL: f64 = 1e-10;
/// Sampling box `[lo, hi]^2` of `(rho, theta)`.
pub const SAMPLE_BOX: (f64, f64) = (0.05, 20.0);

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Largest relative residuals of `e = psi + s theta`, `p = rho psi_rho - psi`,
/// `e = 3/2 p` and `theta(rho, s(rho, theta)) = theta` over `samples` uniform
/// points of [`SAMPLE_BOX`].
pub fn random_identity_sweep(p: &ModelParams, seed: u64, samples: usize) -> brinkman_fourier::Result<Vec<IdentityCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 4];
    for _ in 0..samples {
        let rho = rng.gen_range(SAMPLE_BOX.0..=SAMPLE_BOX.1);
        let theta = rng.gen_range(SAMPLE_BOX.0..=SAMPLE_BOX.1);
        let pt = LocalThermoPoint::new(rho, theta)?;
        let psi = constitutive::free_energy(pt, p);
        let s = constitutive::entropy(pt, p);
        let e = constitutive::internal_energy(pt, p);
        let pr = constitutive::pressure(pt, p);
        let back = constitutive::temperature_from_entropy(rho, s, p)?;
        // Cancellation in psi + s theta and rho psi_rho - psi is measured against the size of the terms.
        let scale_e = e.abs().max(psi.abs()).max((s * theta).abs());
        let scale_p = pr.abs().max(psi.abs());
        let r = [
            (e - (psi + s * theta)).abs() / scale_e,
            (pr - (rho * constitutive::free_energy_drho(pt, p) - psi)).abs() / scale_p,
            rel(e, p.k1 / p.k2 * pr),
            rel(back, theta),
        ];
        for (w, v) in worst.iter_mut().zip(r) {
            *w = w.max(v);
        }
    }
    let names = ["e = psi + s theta", "p = rho psi_rho - psi", "e = (k1/k2) p", "theta(rho, s) = theta"];
    Ok(names
        .iter()
        .zip(worst)
        .map(|(identity, max_residual)| IdentityCheck {
            model: format!("ideal gas, {samples} random points"),
            identity,
            max_residual,
            refinement_ratio: None,
            passed: max_residual <= POINTWISE_TOL,
        })
        .collect())
}

/// Identity suite on the ideal gas, the synthetic models, and with
/// `negative_control` the corrupted model, followed by the random sweep.
pub fn derive_report(seed: u64, samples: usize, negative_control: bool) -> brinkman_fourier::Result<Vec<IdentityCheck>> {
    let p = ModelParams::monatomic(1.0);
    let mut rows = envara::identity_suite(&FreeEnergyModel::ideal_gas(&p), Some(&p))?;
    for m in envara::synthetic_models() {
        rows.extend(envara::identity_suite(&m, None)?);
    }
    if negative_control {
        rows.extend(envara::identity_suite(&envara::corrupted_model(&p), None)?);
    }
    rows.extend(random_identity_sweep(&p, seed, samples)?);
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_report_passes_and_negative_control_fails() {
        assert!(derive_report(1, 1000, false).unwrap().iter().all(|r| r.passed));
        let neg = derive_report(1, 1000, true).unwrap();
        assert!(neg.iter().any(|r| !r.passed && r.model.contains("corrupted")));
    }
}
