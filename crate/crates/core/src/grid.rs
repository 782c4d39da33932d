//! Uniform periodic grids on the unit torus `[0,1)^d`, grid-sampled fields and
//! the second-order difference operators used by the solver.
//!
//! Flat indices are lexicographic in the multi-index `(i0, i1)` with `i0`
//! varying slowest. Points are `x = (i0 h, i1 h)`; in one dimension the second
//! coordinate is always zero and ignored.

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 2;

/// Coordinates of a grid point. Only the first `dim` entries are meaningful.
pub type Point = [f64; MAX_DIM];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::Grid(format!("unsupported dimension {dim}")));
        }
        if n < 8 || !n.is_multiple_of(2) {
            return Err(Error::Grid(format!("n must be even and ≥ 8 (got {n})")));
        }
        Ok(Self { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Total number of grid points, `n^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume element `h^dim` of the midpoint rule.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    pub fn multi_index(&self, flat: usize) -> [usize; MAX_DIM] {
        match self.dim {
            1 => [flat, 0],
            _ => [flat / self.n, flat % self.n],
        }
    }

    pub fn flat_index(&self, idx: [usize; MAX_DIM]) -> usize {
        match self.dim {
            1 => idx[0] % self.n,
            _ => (idx[0] % self.n) * self.n + idx[1] % self.n,
        }
    }

    /// Index of the point `offset` cells away from `flat` along `axis`, with wrap.
    pub fn neighbor(&self, flat: usize, axis: usize, offset: isize) -> usize {
        let mut idx = self.multi_index(flat);
        let n = self.n as isize;
        idx[axis] = (idx[axis] as isize + offset).rem_euclid(n) as usize;
        self.flat_index(idx)
    }

    pub fn point(&self, flat: usize) -> Point {
        let idx = self.multi_index(flat);
        let h = self.h();
        match self.dim {
            1 => [idx[0] as f64 * h, 0.0],
            _ => [idx[0] as f64 * h, idx[1] as f64 * h],
        }
    }

    /// Geodesic distance on the unit torus between two points.
    pub fn torus_distance(&self, a: &Point, b: &Point) -> f64 {
        (0..self.dim)
            .map(|k| {
                let d = (a[k] - b[k]).rem_euclid(1.0);
                let d = d.min(1.0 - d);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Torus distance between two grid points, computed from integer offsets.
    pub fn index_distance(&self, a: usize, b: usize) -> f64 {
        let ia = self.multi_index(a);
        let ib = self.multi_index(b);
        let n = self.n as isize;
        let h = self.h();
        (0..self.dim)
            .map(|k| {
                let d = (ia[k] as isize - ib[k] as isize).rem_euclid(n);
                let d = d.min(n - d) as f64 * h;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

pub fn make_grid(dim: usize, n: usize) -> Result<TorusGrid> {
    TorusGrid::new(dim, n)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Field(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Field(format!("non-finite value at index {i}")));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every grid point.
    ///
    /// Panics if `f` produces a non-finite value.
    pub fn from_fn(grid: TorusGrid, mut f: impl FnMut(&Point) -> f64) -> Self {
        let values: Vec<f64> = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        assert!(
            values.iter().all(|v| v.is_finite()),
            "field sampler produced a non-finite value"
        );
        Self { grid, values }
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        assert!(c.is_finite());
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub(crate) fn from_raw(grid: TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        Self::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// The field translated by `offset` cells along `axis`: `out(i) = self(i - offset)`.
    pub fn shifted(&self, axis: usize, offset: isize) -> Self {
        let values = (0..self.len())
            .map(|i| self.values[self.grid.neighbor(i, axis, -offset)])
            .collect();
        Self::from_raw(self.grid, values)
    }

    pub fn argmax(&self) -> usize {
        self.values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            })
            .0
    }

    pub fn argmin(&self) -> usize {
        self.values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, &v)| {
                if v < best.1 {
                    (i, v)
                } else {
                    best
                }
            })
            .0
    }
}

/// One real `dim`-vector per grid point, stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl VectorField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * grid.dim() {
            return Err(Error::Field(format!(
                "expected {} components, got {}",
                grid.len() * grid.dim(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Field("non-finite vector component".into()));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_raw(grid: TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len() * grid.dim());
        Self { grid, values }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn at(&self, i: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn component(&self, k: usize) -> ScalarField {
        let d = self.grid.dim();
        assert!(k < d);
        ScalarField::from_raw(
            self.grid,
            self.values.iter().skip(k).step_by(d).copied().collect(),
        )
    }

    /// Pointwise Euclidean norm.
    pub fn norm(&self) -> ScalarField {
        ScalarField::from_raw(
            self.grid,
            (0..self.grid.len())
                .map(|i| self.at(i).iter().map(|c| c * c).sum::<f64>().sqrt())
                .collect(),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Symmetric `2×2` matrix; in one dimension only `xx` is used.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SymMatrix {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl SymMatrix {
    pub const IDENTITY: SymMatrix = SymMatrix {
        xx: 1.0,
        xy: 0.0,
        yy: 1.0,
    };

    /// Symmetric part `(M + Mᵀ)/2` of a full matrix.
    pub fn symmetrize(m: [[f64; 2]; 2]) -> Self {
        Self {
            xx: m[0][0],
            xy: 0.5 * (m[0][1] + m[1][0]),
            yy: m[1][1],
        }
    }

    pub fn scalar(a: f64) -> Self {
        Self {
            xx: a,
            xy: 0.0,
            yy: 0.0,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            xx: self.xx * s,
            xy: self.xy * s,
            yy: self.yy * s,
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match (i, j) {
            (0, 0) => self.xx,
            (1, 1) => self.yy,
            _ => self.xy,
        }
    }

    /// `p A pᵀ`, with the dimension taken from `p.len()`.
    pub fn quad(&self, p: &[f64]) -> f64 {
        match p.len() {
            1 => self.xx * p[0] * p[0],
            _ => self.xx * p[0] * p[0] + 2.0 * self.xy * p[0] * p[1] + self.yy * p[1] * p[1],
        }
    }

    /// `A p` written into `out` (same length as `p`).
    pub fn apply(&self, p: &[f64], out: &mut [f64]) {
        match p.len() {
            1 => out[0] = self.xx * p[0],
            _ => {
                out[0] = self.xx * p[0] + self.xy * p[1];
                out[1] = self.xy * p[0] + self.yy * p[1];
            }
        }
    }

    /// Smallest and largest eigenvalue of the leading `dim × dim` block.
    pub fn eigen_range(&self, dim: usize) -> (f64, f64) {
        if dim == 1 {
            return (self.xx, self.xx);
        }
        let mean = 0.5 * (self.xx + self.yy);
        let rad = (0.25 * (self.xx - self.yy).powi(2) + self.xy * self.xy).sqrt();
        (mean - rad, mean + rad)
    }

    fn is_finite(&self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite()
    }
}

/// Symmetric matrix per grid point. Inputs are symmetrized on ingestion.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixField {
    grid: TorusGrid,
    values: Vec<SymMatrix>,
}

impl MatrixField {
    pub fn new(grid: TorusGrid, values: Vec<[[f64; 2]; 2]>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Field(format!(
                "expected {} matrices, got {}",
                grid.len(),
                values.len()
            )));
        }
        let values: Vec<SymMatrix> = values
            .into_iter()
            .map(|m| Self::ingest(grid.dim(), m))
            .collect();
        if values.iter().any(|m| !m.is_finite()) {
            return Err(Error::Field("non-finite matrix entry".into()));
        }
        Ok(Self { grid, values })
    }

    /// Samples a full matrix-valued function and keeps its symmetric part.
    ///
    /// Panics on non-finite entries.
    pub fn from_fn(grid: TorusGrid, mut f: impl FnMut(&Point) -> [[f64; 2]; 2]) -> Self {
        let values: Vec<SymMatrix> = (0..grid.len())
            .map(|i| Self::ingest(grid.dim(), f(&grid.point(i))))
            .collect();
        assert!(
            values.iter().all(SymMatrix::is_finite),
            "matrix sampler produced a non-finite entry"
        );
        Self { grid, values }
    }

    pub fn constant(grid: TorusGrid, m: [[f64; 2]; 2]) -> Self {
        Self::from_fn(grid, |_| m)
    }

    pub fn identity(grid: TorusGrid) -> Self {
        Self::constant(grid, [[1.0, 0.0], [0.0, 1.0]])
    }

    fn ingest(dim: usize, m: [[f64; 2]; 2]) -> SymMatrix {
        let s = SymMatrix::symmetrize(m);
        if dim == 1 {
            SymMatrix::scalar(s.xx)
        } else {
            s
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[SymMatrix] {
        &self.values
    }

    pub fn at(&self, i: usize) -> &SymMatrix {
        &self.values[i]
    }

    /// The `(i, j)` entry as a scalar field.
    pub fn entry_field(&self, i: usize, j: usize) -> ScalarField {
        ScalarField::from_raw(self.grid, self.values.iter().map(|m| m.entry(i, j)).collect())
    }

    /// Pointwise product `w(x) A(x)`.
    pub fn weighted(&self, w: &ScalarField) -> MatrixField {
        assert_eq!(self.grid, *w.grid(), "fields live on different grids");
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(w.values())
                .map(|(m, &s)| m.scaled(s))
                .collect(),
        }
    }
}

/// Row of a stencil operator: up to nine `(column, coefficient)` pairs.
/// Columns may repeat; coefficients of repeated columns add.
#[derive(Clone, Debug, Default)]
pub(crate) struct StencilRow {
    pub center: usize,
    pub entries: Vec<(usize, f64)>,
}

impl StencilRow {
    /// Rows sum to zero, so applying in difference form `Σ w (u_c - u_i)`
    /// gives the same value and maps constants to exactly zero.
    pub fn apply(&self, u: &[f64]) -> f64 {
        let ui = u[self.center];
        self.entries.iter().map(|&(c, w)| w * (u[c] - ui)).sum()
    }
}

/// Stencil of `u ↦ div(A Duᵀ)` at point `i` in conservative flux form.
///
/// Axis-aligned fluxes use the arithmetic mean of `A` at the half point.
/// The mixed terms are `D⁰ₓ(a_xy D⁰ᵧ u) + D⁰ᵧ(a_xy D⁰ₓ u)`, which keeps the
/// assembled operator symmetric and annihilates constants.
pub(crate) fn div_a_grad_row(grid: &TorusGrid, a: &[SymMatrix], i: usize) -> StencilRow {
    let h2 = grid.h() * grid.h();
    let mut entries = Vec::with_capacity(if grid.dim() == 1 { 3 } else { 13 });
    let mut diag = 0.0;
    for axis in 0..grid.dim() {
        let coef = |m: &SymMatrix| if axis == 0 { m.xx } else { m.yy };
        let ip = grid.neighbor(i, axis, 1);
        let im = grid.neighbor(i, axis, -1);
        let ap = 0.5 * (coef(&a[i]) + coef(&a[ip])) / h2;
        let am = 0.5 * (coef(&a[i]) + coef(&a[im])) / h2;
        entries.push((ip, ap));
        entries.push((im, am));
        diag -= ap + am;
    }
    entries.push((i, diag));
    if grid.dim() == 2 {
        let q = 0.25 / h2;
        for (outer, inner) in [(0usize, 1usize), (1, 0)] {
            for s_out in [1isize, -1] {
                let j = grid.neighbor(i, outer, s_out);
                let axy = a[j].xy * q * s_out as f64;
                entries.push((grid.neighbor(j, inner, 1), axy));
                entries.push((grid.neighbor(j, inner, -1), -axy));
            }
        }
    }
    StencilRow { center: i, entries }
}

pub(crate) fn div_a_grad_raw(grid: &TorusGrid, a: &[SymMatrix], u: &[f64]) -> Vec<f64> {
    (0..grid.len())
        .map(|i| div_a_grad_row(grid, a, i).apply(u))
        .collect()
}

/// Central-difference gradient written into a flat `len × dim` buffer.
pub(crate) fn gradient_raw(grid: &TorusGrid, u: &[f64]) -> Vec<f64> {
    let d = grid.dim();
    let inv2h = 0.5 / grid.h();
    let mut out = vec![0.0; grid.len() * d];
    for i in 0..grid.len() {
        for k in 0..d {
            out[i * d + k] = (u[grid.neighbor(i, k, 1)] - u[grid.neighbor(i, k, -1)]) * inv2h;
        }
    }
    out
}

/// Central differences `(u(x + h e_k) - u(x - h e_k)) / 2h` with periodic wrap.
pub fn gradient(u: &ScalarField) -> VectorField {
    VectorField::from_raw(u.grid, gradient_raw(&u.grid, &u.values))
}

/// Central-difference divergence of a vector field.
pub fn divergence(f: &VectorField) -> ScalarField {
    let grid = f.grid;
    let inv2h = 0.5 / grid.h();
    let values = (0..grid.len())
        .map(|i| {
            (0..grid.dim())
                .map(|k| {
                    (f.at(grid.neighbor(i, k, 1))[k] - f.at(grid.neighbor(i, k, -1))[k]) * inv2h
                })
                .sum()
        })
        .collect();
    ScalarField::from_raw(grid, values)
}

/// Discrete `div(A Duᵀ)` (note the sign: the elliptic operator is its negative).
pub fn div_a_grad(u: &ScalarField, a: &MatrixField) -> ScalarField {
    assert_eq!(u.grid, a.grid, "fields live on different grids");
    ScalarField::from_raw(u.grid, div_a_grad_raw(&u.grid, &a.values, &u.values))
}

/// Midpoint rule `h^d Σ f`.
pub fn integrate(f: &ScalarField) -> f64 {
    f.grid.cell_volume() * f.values.iter().sum::<f64>()
}

pub fn linf_norm(f: &ScalarField) -> f64 {
    f.values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn l2_norm(f: &ScalarField) -> f64 {
    (f.grid.cell_volume() * f.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

pub(crate) fn linf(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn assemble_dense(grid: &TorusGrid, a: &MatrixField) -> Vec<Vec<f64>> {
        let n = grid.len();
        let mut m = vec![vec![0.0; n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            for (c, w) in div_a_grad_row(grid, a.values(), i).entries {
                row[c] += w;
            }
        }
        m
    }

    #[test]
    fn grid_construction() {
        let g = make_grid(1, 8).unwrap();
        assert_eq!(g.len(), 8);
        assert_eq!(g.h(), 0.125);
        assert_eq!(make_grid(2, 16).unwrap().len(), 256);
        let err = make_grid(3, 16).unwrap_err();
        assert!(err.to_string().contains("unsupported dimension"));
        assert!(make_grid(1, 6).is_err());
        assert!(make_grid(1, 9).is_err());
    }

    #[test]
    fn wrap_and_spacing() {
        for n in [8, 10, 64, 1000] {
            let g = make_grid(2, n).unwrap();
            assert!((g.n() as f64 * g.h() - 1.0).abs() <= f64::EPSILON);
            let last = g.flat_index([n - 1, 3]);
            assert_eq!(g.neighbor(last, 0, 1), g.flat_index([0, 3]));
            assert_eq!(g.neighbor(g.flat_index([2, 0]), 1, -1), g.flat_index([2, n - 1]));
        }
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = make_grid(2, 16).unwrap();
        let du = gradient(&ScalarField::constant(g, 3.7));
        assert!(du.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_stencil_by_hand() {
        let g = make_grid(1, 8).unwrap();
        let mut vals = vec![0.0; 8];
        vals[0] = 1.0;
        let du = gradient(&ScalarField::new(g, vals).unwrap());
        assert_eq!(du.at(1)[0], -4.0);
        assert_eq!(du.at(7)[0], 4.0);
    }

    #[test]
    fn gradient_second_order() {
        let err = |n| {
            let g = make_grid(1, n).unwrap();
            let u = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).sin());
            let du = gradient(&u);
            (0..g.len())
                .map(|i| (du.at(i)[0] - 2.0 * PI * (2.0 * PI * g.point(i)[0]).cos()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(64) / err(128);
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn laplacian_second_order() {
        let err = |n| {
            let g = make_grid(1, n).unwrap();
            let u = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).cos());
            let lu = div_a_grad(&u, &MatrixField::identity(g));
            (0..g.len())
                .map(|i| (lu.values()[i] + 4.0 * PI * PI * u.values()[i]).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(128) / err(256);
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn div_a_grad_kills_constants() {
        let g = make_grid(2, 16).unwrap();
        let a = MatrixField::from_fn(g, |x| {
            let s = (2.0 * PI * x[0]).sin();
            [[1.5 + s, 0.3 * s], [0.3 * s, 1.2]]
        });
        let out = div_a_grad(&ScalarField::constant(g, -2.5), &a);
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn assembled_operator_symmetric_semidefinite_with_constant_kernel() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let g = make_grid(2, 16).unwrap();
        let a = MatrixField::from_fn(g, |_| {
            let off = rng.gen_range(-0.3..0.3);
            [[rng.gen_range(0.7..1.3), off], [off, rng.gen_range(0.7..1.3)]]
        });
        let m = assemble_dense(&g, &a);
        let n = g.len();
        for i in 0..n {
            for j in 0..n {
                assert!((m[i][j] - m[j][i]).abs() < 1e-9, "asymmetry at ({i},{j})");
            }
        }
        // Eigenvalues of -L via Jacobi rotations on a dense copy.
        let mut s: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
        let eig = jacobi_eigenvalues(&mut s);
        let scale = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-10 * scale;
        assert!(eig.iter().all(|&e| e > -tol), "negative eigenvalue");
        assert_eq!(eig.iter().filter(|e| e.abs() <= tol).count(), 1);
    }

    fn jacobi_eigenvalues(a: &mut [Vec<f64>]) -> Vec<f64> {
        let n = a.len();
        for _sweep in 0..50 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i][j] * a[i][j])
                .sum();
            if off < 1e-22 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        (0..n).map(|i| a[i][i]).collect()
    }

    #[test]
    fn quadrature_examples() {
        let g = make_grid(1, 32).unwrap();
        assert_eq!(integrate(&ScalarField::constant(g, 1.0)), 1.0);
        let s = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).sin());
        assert!(integrate(&s).abs() < 1e-15);
        let c = ScalarField::from_fn(g, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).cos());
        assert!((integrate(&c) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn norms() {
        let g = make_grid(1, 64).unwrap();
        assert_eq!(linf_norm(&ScalarField::zeros(g)), 0.0);
        assert_eq!(l2_norm(&ScalarField::zeros(g)), 0.0);
        assert_eq!(linf_norm(&ScalarField::constant(g, -2.0)), 2.0);
        let c = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).cos());
        assert!((l2_norm(&c) - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn field_validation() {
        let g = make_grid(1, 8).unwrap();
        assert!(ScalarField::new(g, vec![0.0; 7]).is_err());
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        assert!(ScalarField::new(g, v).is_err());
    }

    #[test]
    fn symmetrization_idempotent() {
        let g = make_grid(2, 8).unwrap();
        let a = MatrixField::from_fn(g, |x| [[1.0 + x[0], 0.2 - x[1]], [0.4, 2.0]]);
        let again = MatrixField::new(
            g,
            a.values()
                .iter()
                .map(|m| [[m.xx, m.xy], [m.xy, m.yy]])
                .collect(),
        )
        .unwrap();
        assert_eq!(a, again);
        assert!((a.at(0).xy - 0.3).abs() < 1e-15);
    }
}
