//! Problem data `(A, V, g)`, its validation and the built-in benchmark problems.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{linf_norm, MatrixField, Point, ScalarField, TorusGrid};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Step of the symmetric difference quotient used when `g′` is not supplied.
pub const COUPLING_FD_STEP: f64 = 1e-7;

/// The coupling `g` (evaluated at `log m = -u`), an optional derivative and the
/// coercivity constant `C_g`.
#[derive(Clone)]
pub struct CouplingSpec {
    name: String,
    g: RealFn,
    g_prime: Option<RealFn>,
    c_g: f64,
}

impl fmt::Debug for CouplingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CouplingSpec")
            .field("name", &self.name)
            .field("c_g", &self.c_g)
            .field("analytic_derivative", &self.g_prime.is_some())
            .finish()
    }
}

impl CouplingSpec {
    pub fn new(
        name: impl Into<String>,
        c_g: f64,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(c_g > 0.0 && c_g.is_finite()) {
            return Err(Error::Validation(format!("C_g must be positive, got {c_g}")));
        }
        Ok(Self {
            name: name.into(),
            g: Arc::new(g),
            g_prime: None,
            c_g,
        })
    }

    pub fn with_derivative(mut self, g_prime: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.g_prime = Some(Arc::new(g_prime));
        self
    }

    /// `g(s) = s`, `C_g = 1`.
    pub fn linear() -> Self {
        Self::new("linear", 1.0, |s| s)
            .expect("valid constant")
            .with_derivative(|_| 1.0)
    }

    /// Looks up one of the named couplings: `linear`, `cubic` (`s + s³`),
    /// `tanh` (bounded, coercive only on a window) and `decreasing` (`-s`).
    pub fn named(name: &str, c_g: Option<f64>) -> Result<Self> {
        let spec = match name {
            "linear" => Self::new(name, c_g.unwrap_or(1.0), |s| s)?.with_derivative(|_| 1.0),
            "cubic" => Self::new(name, c_g.unwrap_or(1.0), |s| s + s * s * s)?
                .with_derivative(|s| 1.0 + 3.0 * s * s),
            "tanh" => Self::new(name, c_g.unwrap_or(0.4), f64::tanh)?
                .with_derivative(|s| 1.0 - s.tanh().powi(2)),
            "decreasing" => Self::new(name, c_g.unwrap_or(1.0), |s| -s)?.with_derivative(|_| -1.0),
            other => {
                return Err(Error::Validation(format!("unknown coupling `{other}`")));
            }
        };
        Ok(spec)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn c_g(&self) -> f64 {
        self.c_g
    }

    pub fn eval(&self, s: f64) -> f64 {
        (self.g)(s)
    }

    /// `g′(s)`; falls back to a symmetric difference quotient.
    pub fn derivative(&self, s: f64) -> f64 {
        match &self.g_prime {
            Some(gp) => gp(s),
            None => {
                let e = COUPLING_FD_STEP;
                ((self.g)(s + e) - (self.g)(s - e)) / (2.0 * e)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CouplingViolation {
    /// `g(s) sign(s) < C_g |s| - 1/C_g`.
    Coercivity { s: f64, g: f64, bound: f64 },
    /// `s1 < s2` but `g(s1) >= g(s2)`.
    Monotonicity { s1: f64, s2: f64, g1: f64, g2: f64 },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CouplingReport {
    pub violations: Vec<CouplingViolation>,
}

impl CouplingReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks coercivity at every sample and strict monotonicity between
/// consecutive distinct samples.
pub fn validate_coupling(c: &CouplingSpec, samples: &[f64]) -> CouplingReport {
    let mut violations = Vec::new();
    for &s in samples {
        let g = c.eval(s);
        let bound = c.c_g * s.abs() - 1.0 / c.c_g;
        let lhs = if s == 0.0 { 0.0 } else { g * s.signum() };
        if !(lhs >= bound) {
            violations.push(CouplingViolation::Coercivity { s, g, bound });
        }
    }
    let mut sorted: Vec<f64> = samples.iter().copied().filter(|s| s.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    for w in sorted.windows(2) {
        let (g1, g2) = (c.eval(w[0]), c.eval(w[1]));
        if !(g1 < g2) {
            violations.push(CouplingViolation::Monotonicity {
                s1: w[0],
                s2: w[1],
                g1,
                g2,
            });
        }
    }
    CouplingReport { violations }
}

/// Extreme eigenvalues `(θ₀, θ₁)` of `A` over the grid; fails unless `θ₀ > 0`.
pub fn validate_ellipticity(a: &MatrixField) -> Result<(f64, f64)> {
    let dim = a.grid().dim();
    let (lo, hi) = a
        .values()
        .iter()
        .map(|m| m.eigen_range(dim))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (l, h)| {
            (lo.min(l), hi.max(h))
        });
    if !(lo > 0.0) {
        return Err(Error::Validation(format!(
            "ellipticity violated: smallest eigenvalue {lo}"
        )));
    }
    Ok((lo, hi))
}

/// Largest neighbor difference quotient of a grid field (entrywise for
/// matrix fields). Under-estimates the true Lipschitz constant.
pub trait LipschitzEstimate {
    fn lipschitz_estimate(&self) -> f64;
}

fn scalar_lipschitz(grid: &TorusGrid, values: &[f64]) -> f64 {
    let inv_h = 1.0 / grid.h();
    let mut best = 0.0f64;
    for i in 0..grid.len() {
        for k in 0..grid.dim() {
            let j = grid.neighbor(i, k, 1);
            best = best.max((values[j] - values[i]).abs() * inv_h);
        }
    }
    best
}

impl LipschitzEstimate for ScalarField {
    fn lipschitz_estimate(&self) -> f64 {
        scalar_lipschitz(self.grid(), self.values())
    }
}

impl LipschitzEstimate for MatrixField {
    fn lipschitz_estimate(&self) -> f64 {
        let dim = self.grid().dim();
        let mut best = 0.0f64;
        for i in 0..dim {
            for j in i..dim {
                let e = self.entry_field(i, j);
                best = best.max(scalar_lipschitz(self.grid(), e.values()));
            }
        }
        best
    }
}

pub fn lipschitz_estimate<F: LipschitzEstimate + ?Sized>(f: &F) -> f64 {
    f.lipschitz_estimate()
}

/// A known solution `(u*, H̄*)` of a manufactured problem.
#[derive(Clone, Debug)]
pub struct ExactSolution {
    pub u: ScalarField,
    pub hbar: f64,
}

/// Validated problem bundle. Construction runs the ellipticity and coupling
/// checks; no solver entry point accepts unvalidated data.
#[derive(Clone, Debug)]
pub struct MFGProblem {
    name: String,
    grid: TorusGrid,
    a: MatrixField,
    v: ScalarField,
    coupling: CouplingSpec,
    theta0: f64,
    theta1: f64,
    lip_a: f64,
    lip_v: f64,
    exact: Option<ExactSolution>,
}

/// Number of coupling samples taken on `[-k₀-1, k₀+1]` at construction.
const COUPLING_SAMPLES: usize = 401;

impl MFGProblem {
    pub fn new(
        name: impl Into<String>,
        a: MatrixField,
        v: ScalarField,
        coupling: CouplingSpec,
    ) -> Result<Self> {
        if a.grid() != v.grid() {
            return Err(Error::Validation("A and V live on different grids".into()));
        }
        let (theta0, theta1) = validate_ellipticity(&a)?;
        let k0 = (linf_norm(&v) + 1.0 / coupling.c_g()) / coupling.c_g() + 1.0;
        let span = k0 + 1.0;
        let samples: Vec<f64> = (0..COUPLING_SAMPLES)
            .map(|i| -span + 2.0 * span * i as f64 / (COUPLING_SAMPLES - 1) as f64)
            .collect();
        let report = validate_coupling(&coupling, &samples);
        if let Some(first) = report.violations.first() {
            return Err(Error::Validation(format!(
                "coupling `{}` violates assumptions ({} violations, first: {first:?})",
                coupling.name(),
                report.violations.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            grid: *a.grid(),
            lip_a: a.lipschitz_estimate(),
            lip_v: v.lipschitz_estimate(),
            a,
            v,
            coupling,
            theta0,
            theta1,
            exact: None,
        })
    }

    pub fn with_exact(mut self, exact: ExactSolution) -> Self {
        assert_eq!(exact.u.grid(), &self.grid);
        self.exact = Some(exact);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }
    pub fn a(&self) -> &MatrixField {
        &self.a
    }
    pub fn v(&self) -> &ScalarField {
        &self.v
    }
    pub fn coupling(&self) -> &CouplingSpec {
        &self.coupling
    }
    pub fn theta0(&self) -> f64 {
        self.theta0
    }
    pub fn theta1(&self) -> f64 {
        self.theta1
    }
    pub fn lip_a(&self) -> f64 {
        self.lip_a
    }
    pub fn lip_v(&self) -> f64 {
        self.lip_v
    }
    pub fn exact(&self) -> Option<&ExactSolution> {
        self.exact.as_ref()
    }

    /// Same data with `V` replaced; used for negative controls.
    pub fn with_potential(&self, v: ScalarField) -> Result<Self> {
        Self::new(self.name.clone(), self.a.clone(), v, self.coupling.clone())
    }
}

pub const BUILTIN_NAMES: [&str; 4] = ["trivial", "manufactured_1d", "manufactured_2d", "anisotropic_2d"];

#[derive(Clone, Debug)]
pub struct ProblemParams {
    pub dim: usize,
    pub n: usize,
    pub coupling: CouplingSpec,
}

impl ProblemParams {
    pub fn new(dim: usize, n: usize) -> Self {
        Self {
            dim,
            n,
            coupling: CouplingSpec::linear(),
        }
    }

    pub fn with_coupling(mut self, coupling: CouplingSpec) -> Self {
        self.coupling = coupling;
        self
    }
}

pub fn builtin_problem(name: &str, params: &ProblemParams) -> Result<MFGProblem> {
    let required_dim = match name {
        "trivial" => params.dim,
        "manufactured_1d" => 1,
        "manufactured_2d" | "anisotropic_2d" => 2,
        other => return Err(Error::UnknownProblem(other.to_string())),
    };
    if params.dim != required_dim {
        return Err(Error::Validation(format!(
            "problem `{name}` requires dim={required_dim}, got {}",
            params.dim
        )));
    }
    let grid = TorusGrid::new(params.dim, params.n)?;
    let coupling = params.coupling.clone();
    match name {
        "trivial" => MFGProblem::new(
            name,
            MatrixField::identity(grid),
            ScalarField::zeros(grid),
            coupling,
        ),
        "manufactured_1d" => manufactured(name, grid, &Manufactured::one_d(), coupling),
        "manufactured_2d" => manufactured(name, grid, &Manufactured::two_d(), coupling),
        "anisotropic_2d" => {
            let raw = |x: &Point| {
                let (c1, s1) = ((2.0 * PI * x[0]).cos(), (2.0 * PI * x[0]).sin());
                let s2 = (2.0 * PI * x[1]).sin();
                [
                    [1.0 + 0.4 * c1 * c1, 0.4 * 0.2 * s2],
                    [0.4 * 0.2 * s2, 1.0 + 0.4 * s1 * s1],
                ]
            };
            let (lo, _) = validate_ellipticity(&MatrixField::from_fn(grid, raw))?;
            let shift = (0.5 - lo).max(0.0);
            let a = MatrixField::from_fn(grid, |x| {
                let m = raw(x);
                [[m[0][0] + shift, m[0][1]], [m[1][0], m[1][1] + shift]]
            });
            let v = ScalarField::from_fn(grid, |x| {
                0.3 * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).cos()
            });
            MFGProblem::new(name, a, v, coupling)
        }
        _ => unreachable!(),
    }
}

/// Analytic data of a manufactured solution: `u* = w + c₀` with `∫ e^{-u*} = 1`.
pub(crate) struct Manufactured {
    dim: usize,
    w: fn(&Point) -> f64,
    grad_w: fn(&Point) -> [f64; 2],
    hess_w: fn(&Point) -> [[f64; 2]; 2],
    a: fn(&Point) -> [[f64; 2]; 2],
    /// `(div A)_j = Σ_i ∂_i A_ij`.
    div_a: fn(&Point) -> [f64; 2],
}

impl Manufactured {
    pub(crate) fn one_d() -> Self {
        Self {
            dim: 1,
            w: |x| 0.1 * (2.0 * PI * x[0]).cos(),
            grad_w: |x| [-0.2 * PI * (2.0 * PI * x[0]).sin(), 0.0],
            hess_w: |x| [[-0.4 * PI * PI * (2.0 * PI * x[0]).cos(), 0.0], [0.0, 0.0]],
            a: |x| [[1.0 + 0.25 * (2.0 * PI * x[0]).sin(), 0.0], [0.0, 0.0]],
            div_a: |x| [0.5 * PI * (2.0 * PI * x[0]).cos(), 0.0],
        }
    }

    pub(crate) fn two_d() -> Self {
        Self {
            dim: 2,
            w: |x| 0.1 * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).cos(),
            grad_w: |x| {
                let (c1, s1) = ((2.0 * PI * x[0]).cos(), (2.0 * PI * x[0]).sin());
                let (c2, s2) = ((2.0 * PI * x[1]).cos(), (2.0 * PI * x[1]).sin());
                [-0.2 * PI * s1 * c2, -0.2 * PI * c1 * s2]
            },
            hess_w: |x| {
                let (c1, s1) = ((2.0 * PI * x[0]).cos(), (2.0 * PI * x[0]).sin());
                let (c2, s2) = ((2.0 * PI * x[1]).cos(), (2.0 * PI * x[1]).sin());
                let d = -0.4 * PI * PI * c1 * c2;
                let o = 0.4 * PI * PI * s1 * s2;
                [[d, o], [o, d]]
            },
            a: |x| {
                let s1 = (2.0 * PI * x[0]).sin();
                let (c2, s2) = ((2.0 * PI * x[1]).cos(), (2.0 * PI * x[1]).sin());
                let off = 0.1 * s1 * s2;
                [[1.0 + 0.2 * s1, off], [off, 1.0 + 0.2 * c2]]
            },
            div_a: |x| {
                let (c1, s1) = ((2.0 * PI * x[0]).cos(), (2.0 * PI * x[0]).sin());
                let (c2, s2) = ((2.0 * PI * x[1]).cos(), (2.0 * PI * x[1]).sin());
                // j = 0: ∂₁A₁₁ + ∂₂A₂₁; j = 1: ∂₁A₁₂ + ∂₂A₂₂
                [
                    0.4 * PI * c1 + 0.2 * PI * s1 * c2,
                    0.2 * PI * c1 * s2 - 0.4 * PI * s2,
                ]
            },
        }
    }

    /// `c₀ = log ∫ e^{-w}` by a fine midpoint rule (spectrally accurate here).
    pub(crate) fn mass_shift(&self) -> f64 {
        let m = if self.dim == 1 { 4096 } else { 512 };
        let h = 1.0 / m as f64;
        let total: f64 = match self.dim {
            1 => (0..m).map(|i| (-(self.w)(&[i as f64 * h, 0.0])).exp()).sum(),
            _ => (0..m * m)
                .map(|k| (-(self.w)(&[(k / m) as f64 * h, (k % m) as f64 * h])).exp())
                .sum(),
        };
        (total * h.powi(self.dim as i32)).ln()
    }

    pub(crate) fn exact_u(&self, x: &Point, c0: f64) -> f64 {
        (self.w)(x) + c0
    }

    /// `V = H̄* + g(-u*) + div(A Du*ᵀ) - ½ Du* A Du*ᵀ` with `H̄* = 0`.
    fn potential(&self, x: &Point, c0: f64, coupling: &CouplingSpec) -> f64 {
        let a = (self.a)(x);
        let p = (self.grad_w)(x);
        let hs = (self.hess_w)(x);
        let da = (self.div_a)(x);
        let d = self.dim;
        let mut div = 0.0;
        let mut quad = 0.0;
        for i in 0..d {
            div += da[i] * p[i];
            for j in 0..d {
                div += a[i][j] * hs[i][j];
                quad += p[i] * a[i][j] * p[j];
            }
        }
        coupling.eval(-self.exact_u(x, c0)) + div - 0.5 * quad
    }
}

fn manufactured(
    name: &str,
    grid: TorusGrid,
    m: &Manufactured,
    coupling: CouplingSpec,
) -> Result<MFGProblem> {
    let c0 = m.mass_shift();
    let a = MatrixField::from_fn(grid, m.a);
    let v = ScalarField::from_fn(grid, |x| m.potential(x, c0, &coupling));
    let exact = ExactSolution {
        u: ScalarField::from_fn(grid, |x| m.exact_u(x, c0)),
        hbar: 0.0,
    };
    Ok(MFGProblem::new(name, a, v, coupling)?.with_exact(exact))
}
