//! Cell-centered discrete calculus on intervals and axis-aligned rectangles.
//!
//! Scalars (density, temperature, energy) carry homogeneous Neumann
//! conditions, realized through even ghost cells `f[-1] = f[0]`. Velocity
//! components carry no-slip conditions, realized through odd ghost cells
//! `v[-1] = -v[0]`, which places the zero exactly on the boundary face.
//!
//! [`divergence`] is built as the exact negative adjoint of [`gradient`] in
//! the volume-weighted cell inner product, so
//! `<gradient(f), v> = -<f, divergence(v)>` holds to roundoff for every pair.
//! All flux-form operators telescope, so their cell sums vanish.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Uniform cell-centered grid on `[0, L]` or `[0, Lx] x [0, Ly]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    n: [usize; 2],
    len: [f64; 2],
    h: [f64; 2],
}

impl Grid {
    pub fn new_1d(n: usize, len: f64) -> Result<Self> {
        Self::build(1, [n, 1], [len, 1.0])
    }

    pub fn new_2d(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        Self::build(2, [nx, ny], [lx, ly])
    }

    fn build(dim: usize, n: [usize; 2], len: [f64; 2]) -> Result<Self> {
        for a in 0..dim {
            if n[a] < 4 {
                return Err(Error::InvalidArgument {
                    name: "n",
                    value: n[a] as f64,
                    reason: "at least 4 cells per axis are required",
                });
            }
            if !(len[a] > 0.0 && len[a].is_finite()) {
                return Err(Error::InvalidArgument {
                    name: "L",
                    value: len[a],
                    reason: "domain length must be positive",
                });
            }
        }
        let h = [len[0] / n[0] as f64, len[1] / n[1] as f64];
        Ok(Self { dim, n, len, h })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells along `axis`.
    #[inline]
    pub fn n(&self, axis: usize) -> usize {
        self.n[axis]
    }

    #[inline]
    pub fn len(&self, axis: usize) -> f64 {
        self.len[axis]
    }

    /// Spacing along `axis`.
    #[inline]
    pub fn h(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim).map(|a| self.h[a]).fold(f64::INFINITY, f64::min)
    }

    #[inline]
    pub fn cells(&self) -> usize {
        self.n[0] * self.n[1]
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.h[a]).product()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|a| self.len[a]).product()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.n[0] * j
    }

    /// `(i, j)` coordinates of a linear cell index.
    #[inline]
    pub fn coords(&self, c: usize) -> [usize; 2] {
        [c % self.n[0], c / self.n[0]]
    }

    /// Cell center; the second coordinate is 0 on 1D grids.
    pub fn center(&self, c: usize) -> [f64; 2] {
        let [i, j] = self.coords(c);
        let y = if self.dim == 2 { (j as f64 + 0.5) * self.h[1] } else { 0.0 };
        [(i as f64 + 0.5) * self.h[0], y]
    }

    #[inline]
    fn stride(&self, axis: usize) -> usize {
        if axis == 0 {
            1
        } else {
            self.n[0]
        }
    }

    /// The grid with every axis refined by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        let mut n = self.n;
        for a in 0..self.dim {
            n[a] *= factor;
        }
        Self::build(self.dim, n, self.len)
    }
}

/// One real value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.cells()],
        }
    }

    /// Samples `f` at cell centers.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        Self {
            grid,
            values: (0..grid.cells()).map(|c| f(grid.center(c))).collect(),
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(Error::GridMismatch);
        }
        if let Some(cell) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                field: "scalar",
                cell,
            });
        }
        Ok(Self { grid, values })
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Cellwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the first cell with a non-finite value.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }
}

/// `dim` reals per cell, stored component-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    comps: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            comps: vec![vec![0.0; grid.cells()]; grid.dim()],
        }
    }

    /// Samples `f` at cell centers; components beyond the grid dimension are ignored.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        let samples: Vec<[f64; 2]> = (0..grid.cells()).map(|c| f(grid.center(c))).collect();
        Self {
            grid,
            comps: (0..grid.dim()).map(|a| samples.iter().map(|s| s[a]).collect()).collect(),
        }
    }

    pub fn from_components(grid: Grid, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != grid.dim() || comps.iter().any(|c| c.len() != grid.cells()) {
            return Err(Error::GridMismatch);
        }
        for c in &comps {
            if let Some(cell) = c.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    field: "vector",
                    cell,
                });
            }
        }
        Ok(Self { grid, comps })
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn component(&self, axis: usize) -> &[f64] {
        &self.comps[axis]
    }

    #[inline]
    pub fn component_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.comps[axis]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    /// `|v|^2` per cell.
    pub fn norm_sq(&self) -> ScalarField {
        let mut out = ScalarField::zeros(self.grid);
        for comp in &self.comps {
            for (o, v) in out.values.iter_mut().zip(comp) {
                *o += v * v;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            grid: self.grid,
            comps: self.comps.iter().map(|c| c.iter().map(|v| alpha * v).collect()).collect(),
        }
    }
}

/// Volume-weighted inner product of raw cell arrays.
pub fn dot_cells(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    grid.cell_volume() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

/// `<f, g>` scaled by cell volume.
pub fn inner(f: &ScalarField, g: &ScalarField) -> f64 {
    dot_cells(&f.grid, &f.values, &g.values)
}

/// `<v, w>` summed over components, scaled by cell volume.
pub fn inner_vec(v: &VectorField, w: &VectorField) -> f64 {
    v.comps
        .iter()
        .zip(&w.comps)
        .map(|(a, b)| dot_cells(&v.grid, a, b))
        .sum()
}

/// `sqrt(<f, f>)`.
pub fn l2_norm(f: &ScalarField) -> f64 {
    crate::math::sqrt(inner(f, f))
}

#[derive(Clone, Copy)]
enum Ghost {
    Even,
    Odd,
}

/// Value of the neighbor at `k + step` along `axis`, with ghost extension.
#[inline]
fn neighbor(grid: &Grid, f: &[f64], c: usize, axis: usize, k: usize, forward: bool, ghost: Ghost) -> f64 {
    let n = grid.n[axis];
    let s = grid.stride(axis);
    let inside = if forward { k + 1 < n } else { k > 0 };
    if inside {
        if forward {
            f[c + s]
        } else {
            f[c - s]
        }
    } else {
        match ghost {
            Ghost::Even => f[c],
            Ghost::Odd => -f[c],
        }
    }
}

fn centered(grid: &Grid, f: &[f64], axis: usize, ghost: Ghost, out: &mut [f64]) {
    let inv = 1.0 / (2.0 * grid.h[axis]);
    for (c, o) in out.iter_mut().enumerate() {
        let k = grid.coords(c)[axis];
        *o += (neighbor(grid, f, c, axis, k, true, ghost) - neighbor(grid, f, c, axis, k, false, ghost)) * inv;
    }
}

fn second_difference(grid: &Grid, f: &[f64], axis: usize, ghost: Ghost, out: &mut [f64]) {
    let inv = 1.0 / (grid.h[axis] * grid.h[axis]);
    for (c, o) in out.iter_mut().enumerate() {
        let k = grid.coords(c)[axis];
        *o += (neighbor(grid, f, c, axis, k, true, ghost) - 2.0 * f[c] + neighbor(grid, f, c, axis, k, false, ghost))
            * inv;
    }
}

/// Centered gradient with zero-Neumann ghost cells.
pub fn gradient(f: &ScalarField) -> VectorField {
    let grid = f.grid;
    let mut out = VectorField::zeros(grid);
    for a in 0..grid.dim {
        centered(&grid, &f.values, a, Ghost::Even, &mut out.comps[a]);
    }
    out
}

/// Centered divergence with no-slip (odd) ghost cells; the negative adjoint of [`gradient`].
pub fn divergence(v: &VectorField) -> ScalarField {
    let grid = v.grid;
    let mut out = ScalarField::zeros(grid);
    for a in 0..grid.dim {
        centered(&grid, &v.comps[a], a, Ghost::Odd, &mut out.values);
    }
    out
}

/// Neumann Laplacian of a raw cell array, accumulated into `out`.
pub fn laplacian_neumann_into(grid: &Grid, f: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for a in 0..grid.dim {
        second_difference(grid, f, a, Ghost::Even, out);
    }
}

/// Dirichlet (no-slip) Laplacian of one raw component.
pub fn laplacian_dirichlet_into(grid: &Grid, f: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for a in 0..grid.dim {
        second_difference(grid, f, a, Ghost::Odd, out);
    }
}

/// 3/5-point Laplacian with reflected (zero-flux) ghost cells.
pub fn laplacian_neumann(f: &ScalarField) -> ScalarField {
    let mut out = ScalarField::zeros(f.grid);
    laplacian_neumann_into(&f.grid, &f.values, &mut out.values);
    out
}

/// Componentwise 3/5-point Laplacian vanishing on the boundary faces.
pub fn laplacian_dirichlet(v: &VectorField) -> VectorField {
    let mut out = VectorField::zeros(v.grid);
    for a in 0..v.grid.dim {
        laplacian_dirichlet_into(&v.grid, &v.comps[a], &mut out.comps[a]);
    }
    out
}

/// Conservative first-order upwind approximation of `div(f u)`.
///
/// Face velocities are averages of the adjacent cell values and boundary
/// faces carry no flux.
pub fn advect_upwind(f: &ScalarField, u: &VectorField) -> ScalarField {
    let grid = f.grid;
    let mut out = ScalarField::zeros(grid);
    for a in 0..grid.dim {
        let s = grid.stride(a);
        let inv_h = 1.0 / grid.h[a];
        let ua = &u.comps[a];
        for c in 0..grid.cells() {
            if grid.coords(c)[a] + 1 >= grid.n[a] {
                continue;
            }
            let r = c + s;
            let uf = 0.5 * (ua[c] + ua[r]);
            let flux = if uf > 0.0 { uf * f.values[c] } else { uf * f.values[r] };
            out.values[c] += flux * inv_h;
            out.values[r] -= flux * inv_h;
        }
    }
    out
}

/// Midpoint-rule integral over the domain.
pub fn integrate(f: &ScalarField) -> f64 {
    f.grid.cell_volume() * f.values.iter().sum::<f64>()
}

/// Cellwise sum of `g(f_left, f_right, face_difference / h)` over the faces of
/// each cell, weighted by one half so that the domain sum counts every face
/// once. With `odd = false` boundary faces are skipped (zero flux); with
/// `odd = true` they see the no-slip ghost value.
fn half_face_sum(f: &[f64], grid: &Grid, odd: bool, g: impl Fn(f64, f64, f64) -> f64) -> ScalarField {
    let mut out = ScalarField::zeros(*grid);
    for a in 0..grid.dim {
        let s = grid.stride(a);
        let h = grid.h[a];
        for c in 0..grid.cells() {
            let k = grid.coords(c)[a];
            if k + 1 < grid.n[a] {
                let r = c + s;
                let v = 0.5 * g(f[c], f[r], (f[r] - f[c]) / h);
                out.values[c] += v;
                out.values[r] += v;
            } else if odd {
                out.values[c] += 0.5 * g(f[c], -f[c], -2.0 * f[c] / h);
            }
            if k == 0 && odd {
                out.values[c] += 0.5 * g(-f[c], f[c], 2.0 * f[c] / h);
            }
        }
    }
    out
}

/// `|grad v|^2` per cell from face differences under the no-slip condition.
///
/// Its volume-weighted sum equals `-<laplacian_dirichlet(v), v>` exactly.
pub fn dissipation_density(v: &VectorField) -> ScalarField {
    let mut out = ScalarField::zeros(v.grid);
    for comp in &v.comps {
        let part = half_face_sum(comp, &v.grid, true, |_, _, d| d * d);
        for (o, p) in out.values.iter_mut().zip(part.values) {
            *o += p;
        }
    }
    out
}

/// `|grad f|^2` per cell from interior face differences (zero-flux boundary).
///
/// Its volume-weighted sum equals `-<laplacian_neumann(f), f>` exactly.
pub fn face_grad_sq(f: &ScalarField) -> ScalarField {
    half_face_sum(&f.values, &f.grid, false, |_, _, d| d * d)
}

/// `|grad theta|^2 / theta^2` per cell with the face-wise geometric mean
/// `theta_left theta_right` in the denominator.
pub fn log_grad_sq(theta: &ScalarField) -> ScalarField {
    half_face_sum(&theta.values, &theta.grid, false, |l, r, d| d * d / (l * r))
}

/// `grad a . grad b / b` per cell from interior face differences.
pub fn face_cross(a: &ScalarField, b: &ScalarField) -> ScalarField {
    let grid = a.grid;
    let mut out = ScalarField::zeros(grid);
    for ax in 0..grid.dim {
        let s = grid.stride(ax);
        let h = grid.h[ax];
        for c in 0..grid.cells() {
            if grid.coords(c)[ax] + 1 >= grid.n[ax] {
                continue;
            }
            let r = c + s;
            let da = (a.values[r] - a.values[c]) / h;
            let db = (b.values[r] - b.values[c]) / h;
            let v = 0.5 * da * db * 0.5 * (1.0 / b.values[c] + 1.0 / b.values[r]);
            out.values[c] += v;
            out.values[r] += v;
        }
    }
    out
}
