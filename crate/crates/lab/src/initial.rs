//! Initial density and temperature.

use std::f64::consts::TAU;

use brinkman_fourier::{Grid, ScalarField};

/// `cos * cos(phi) + sin * sin(phi)` with `phi = 2 pi sum_a k_a x_a / L_a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierMode {
    pub k: [usize; 2],
    pub cos: f64,
    pub sin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierSeries {
    pub offset: f64,
    pub modes: Vec<FourierMode>,
}

impl FourierSeries {
    pub fn constant(offset: f64) -> Self {
        Self { offset, modes: Vec::new() }
    }

    pub fn eval(&self, x: [f64; 2], len: [f64; 2]) -> f64 {
        self.modes.iter().fold(self.offset, |acc, m| {
            let phi = TAU * (m.k[0] as f64 * x[0] / len[0] + m.k[1] as f64 * x[1] / len[1]);
            acc + m.cos * phi.cos() + m.sin * phi.sin()
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    /// `rho = 1 + 0.3 sin(2 pi x / L)`, `theta = 1 + 0.2 cos(2 pi x / L)` (times `cos(2 pi y / L_y)` in 2D).
    Default,
    /// Uniform `rho = theta = 1`.
    Equilibrium,
    /// `theta = 1 - depth g`, `rho = 1 + density g` with the Gaussian
    /// `g = exp(-|x - c|^2 / width^2)` around the domain center `c`.
    ColdSpot { depth: f64, width: f64, density: f64 },
    Fourier { rho: FourierSeries, theta: FourierSeries },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("initial {field} is not positive: {value:e} at ({x}, {y})")]
pub struct NotPositive {
    pub field: &'static str,
    pub value: f64,
    pub x: f64,
    pub y: f64,
}

/// Oversampling factor of the positivity check.
pub const POSITIVITY_OVERSAMPLING: usize = 8;

impl InitialSpec {
    /// Point values of `(rho, theta)` at `x`.
    pub fn eval(&self, x: [f64; 2], grid: &Grid) -> (f64, f64) {
        let len = [grid.len(0), if grid.dim() == 2 { grid.len(1) } else { 1.0 }];
        match self {
            InitialSpec::Fourier { rho, theta } => (rho.eval(x, len), theta.eval(x, len)),
            InitialSpec::Default => {
                let phase = TAU * x[0] / len[0];
                let y_factor = if grid.dim() == 2 { (TAU * x[1] / len[1]).cos() } else { 1.0 };
                (1.0 + 0.3 * phase.sin(), 1.0 + 0.2 * phase.cos() * y_factor)
            }
            InitialSpec::Equilibrium => (1.0, 1.0),
            InitialSpec::ColdSpot { depth, width, density } => {
                let r2: f64 = (0..grid.dim()).map(|a| (x[a] - 0.5 * len[a]).powi(2)).sum();
                let g = (-r2 / (width * width)).exp();
                (1.0 + density * g, 1.0 - depth * g)
            }
        }
    }

    /// Cell-center samples on `grid` after checking positivity on a grid
    /// refined [`POSITIVITY_OVERSAMPLING`] times.
    pub fn build(&self, grid: &Grid) -> Result<(ScalarField, ScalarField), NotPositive> {
        let fine = grid
            .refined(POSITIVITY_OVERSAMPLING)
            .expect("refining a valid grid by a positive factor");
        for c in 0..fine.cells() {
            let x = fine.center(c);
            let (r, t) = self.eval(x, grid);
            for (field, value) in [("rho", r), ("theta", t)] {
                if !(value > 0.0 && value.is_finite()) {
                    return Err(NotPositive { field, value, x: x[0], y: x[1] });
                }
            }
        }
        let rho = ScalarField::from_fn(*grid, |x| self.eval(x, grid).0);
        let theta = ScalarField::from_fn(*grid, |x| self.eval(x, grid).1);
        Ok((rho, theta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_matches_closed_form() {
        let g = Grid::new_1d(16, TAU).unwrap();
        let (r, t) = InitialSpec::Default.build(&g).unwrap();
        for c in 0..16 {
            let x = g.center(c)[0];
            assert!((r.values()[c] - (1.0 + 0.3 * x.sin())).abs() < 1e-14);
            assert!((t.values()[c] - (1.0 + 0.2 * x.cos())).abs() < 1e-14);
        }
    }

    #[test]
    fn equilibrium_is_uniform() {
        let g = Grid::new_2d(4, 6, 1.0, 2.0).unwrap();
        let (r, t) = InitialSpec::Equilibrium.build(&g).unwrap();
        assert!(r.values().iter().chain(t.values()).all(|v| *v == 1.0));
    }

    #[test]
    fn cold_spot_is_coldest_at_center() {
        let g = Grid::new_1d(33, 2.0).unwrap();
        let spec = InitialSpec::ColdSpot {
            depth: 0.9,
            width: 0.2,
            density: 2.0,
        };
        let (r, t) = spec.build(&g).unwrap();
        assert!((r.values()[16] - 3.0).abs() < 1e-12);
        assert!((t.values()[16] - 0.1).abs() < 1e-12);
        assert!(t.min() == t.values()[16]);
    }

    #[test]
    fn oversampling_catches_negativity_between_centers() {
        // 1 - 1.05 cos(2 pi x) dips below zero only in a narrow window around x = 0 and x = 1.
        let g = Grid::new_1d(4, 1.0).unwrap();
        let spec = InitialSpec::Fourier {
            rho: FourierSeries {
                offset: 1.0,
                modes: vec![FourierMode { k: [1, 0], cos: -1.05, sin: 0.0 }],
            },
            theta: FourierSeries::constant(1.0),
        };
        let coarse_ok = (0..4).all(|c| spec.eval(g.center(c), &g).0 > 0.0);
        assert!(coarse_ok);
        let err = spec.build(&g).unwrap_err();
        assert_eq!(err.field, "rho");
    }
}
