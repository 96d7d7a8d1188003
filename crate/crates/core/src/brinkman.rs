//! Quasi-static momentum balance `mu Lap u - nu rho u = k2 grad(rho theta)`
//! with no-slip walls.
//!
//! The discrete system is `A u = b` with `A = nu diag(rho) - mu Lap_D` (SPD)
//! and `b = -k2 grad(rho theta) + f` for an optional body force `f`. Each
//! velocity component is solved independently against the same operator.

use alloc::vec;
use alloc::vec::Vec;

use crate::cg;
use crate::constitutive::ModelParams;
use crate::error::{Error, Result};
use crate::grid::{self, Grid, ScalarField, VectorField};

#[derive(Debug, Clone)]
pub struct BrinkmanSystem {
    grid: Grid,
    rho: ScalarField,
    theta: ScalarField,
    params: ModelParams,
    solver_tol: f64,
    max_iter: usize,
    forcing: Option<VectorField>,
}

impl BrinkmanSystem {
    /// `solver_tol` must lie in `(0, 1)`; production runs keep it at or below `1e-6`.
    pub fn new(
        rho: ScalarField,
        theta: ScalarField,
        params: ModelParams,
        solver_tol: f64,
        max_iter: usize,
    ) -> Result<Self> {
        let grid = *rho.grid();
        if *theta.grid() != grid {
            return Err(Error::GridMismatch);
        }
        for (field, f) in [("rho", &rho), ("theta", &theta)] {
            if let Some(cell) = f.values().iter().position(|v| !(*v > 0.0)) {
                return Err(Error::Positivity {
                    field,
                    cell,
                    value: f.values()[cell],
                    threshold: 0.0,
                });
            }
        }
        if !(solver_tol > 0.0 && solver_tol < 1.0) {
            return Err(Error::InvalidArgument {
                name: "solver_tol",
                value: solver_tol,
                reason: "relative tolerance must lie in (0, 1)",
            });
        }
        if !(params.mu > 0.0) || !(params.nu >= 0.0) {
            return Err(Error::InvalidArgument {
                name: "mu",
                value: params.mu,
                reason: "the Brinkman operator needs mu > 0 and nu >= 0",
            });
        }
        Ok(Self {
            grid,
            rho,
            theta,
            params,
            solver_tol,
            max_iter,
            forcing: None,
        })
    }

    /// Adds a body force `f` to the right-hand side.
    pub fn with_forcing(mut self, f: VectorField) -> Result<Self> {
        if *f.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        self.forcing = Some(f);
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rho(&self) -> &ScalarField {
        &self.rho
    }

    pub fn theta(&self) -> &ScalarField {
        &self.theta
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn solver_tol(&self) -> f64 {
        self.solver_tol
    }

    pub fn forcing(&self) -> Option<&VectorField> {
        self.forcing.as_ref()
    }

    /// `A x` for one component.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        grid::laplacian_dirichlet_into(&self.grid, x, out);
        let (mu, nu) = (self.params.mu, self.params.nu);
        for ((o, xi), r) in out.iter_mut().zip(x).zip(self.rho.values()) {
            *o = nu * r * xi - mu * *o;
        }
    }

    /// Diagonal of `A`.
    pub fn diagonal(&self) -> Vec<f64> {
        let g = &self.grid;
        (0..g.cells())
            .map(|c| {
                let coords = g.coords(c);
                let lap: f64 = (0..g.dim())
                    .map(|a| {
                        let k = coords[a];
                        let w = if k == 0 || k + 1 == g.n(a) { 3.0 } else { 2.0 };
                        w / (g.h(a) * g.h(a))
                    })
                    .sum();
                self.params.nu * self.rho.values()[c] + self.params.mu * lap
            })
            .collect()
    }

    /// `b = -k2 grad(rho theta) + f`.
    pub fn rhs(&self) -> VectorField {
        let p = self.rho.zip_map(&self.theta, |r, t| r * t);
        let mut b = grid::gradient(&p).scaled(-self.params.k2);
        if let Some(f) = &self.forcing {
            for a in 0..self.grid.dim() {
                for (bi, fi) in b.component_mut(a).iter_mut().zip(f.component(a)) {
                    *bi += fi;
                }
            }
        }
        b
    }
}

#[derive(Debug, Clone)]
pub struct BrinkmanSolution {
    pub u: VectorField,
    /// Largest CG iteration count over components.
    pub iterations: usize,
    /// `||A u - b|| / ||b||` over all components (0 for a zero right-hand side).
    pub relative_residual: f64,
}

/// Solves the system from a zero initial guess.
pub fn solve_brinkman(sys: &BrinkmanSystem) -> Result<VectorField> {
    solve_brinkman_from(sys, None).map(|s| s.u)
}

/// Solves the system, starting CG from `guess` when given.
pub fn solve_brinkman_from(sys: &BrinkmanSystem, guess: Option<&VectorField>) -> Result<BrinkmanSolution> {
    let b = sys.rhs();
    let diag = sys.diagonal();
    let mut u = match guess {
        Some(g) if *g.grid() == sys.grid => g.clone(),
        Some(_) => return Err(Error::GridMismatch),
        None => VectorField::zeros(sys.grid),
    };
    let mut iterations = 0;
    let mut r2 = 0.0;
    let mut b2 = 0.0;
    for a in 0..sys.grid.dim() {
        let ba = b.component(a);
        let bn2: f64 = ba.iter().map(|v| v * v).sum();
        let out = cg::solve(|x, y| sys.apply(x, y), &diag, ba, u.component_mut(a), sys.solver_tol, sys.max_iter)?;
        iterations = iterations.max(out.iterations);
        r2 += out.relative_residual * out.relative_residual * bn2;
        b2 += bn2;
    }
    let relative_residual = if b2 > 0.0 { crate::math::sqrt(r2 / b2) } else { 0.0 };
    Ok(BrinkmanSolution {
        u,
        iterations,
        relative_residual,
    })
}

/// `||A u - b|| / ||b||`, recomputed from scratch; 0 when `b = 0` and `u = 0`.
pub fn algebraic_residual(u: &VectorField, sys: &BrinkmanSystem) -> f64 {
    let b = sys.rhs();
    let mut au = vec![0.0; sys.grid.cells()];
    let (mut r2, mut b2) = (0.0, 0.0);
    for a in 0..sys.grid.dim() {
        sys.apply(u.component(a), &mut au);
        for (x, y) in au.iter().zip(b.component(a)) {
            r2 += (x - y) * (x - y);
            b2 += y * y;
        }
    }
    if b2 == 0.0 {
        if r2 == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        crate::math::sqrt(r2 / b2)
    }
}

/// Normalized defect of the discrete energy identity obtained by testing the
/// momentum balance with `u` itself:
/// `|k2 <rho theta, div u> + <f, u> - mu <grad u, grad u> - nu <rho u, u>| / (1 + mu <grad u, grad u>)`.
pub fn energy_identity_residual(u: &VectorField, sys: &BrinkmanSystem) -> f64 {
    let p = sys.rho.zip_map(&sys.theta, |r, t| r * t);
    let work = sys.params.k2 * grid::inner(&p, &grid::divergence(u));
    let forcing = sys.forcing.as_ref().map_or(0.0, |f| grid::inner_vec(f, u));
    let viscous = sys.params.mu * grid::integrate(&grid::dissipation_density(u));
    let drag = sys.params.nu * grid::inner(&sys.rho, &u.norm_sq());
    crate::math::abs(work + forcing - viscous - drag) / (1.0 + viscous)
}
