//! Checks run on computed solutions: residuals of both equations, the
//! maximum principle, Lasry–Lions monotonicity, uniqueness, and the
//! Morrey/Campanato/Hölder regularity quantities.
//!
//! All balls and point pairs use the geodesic distance of the unit torus,
//! with radii capped at `1/2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{
    div_a_grad, divergence, gradient, l2_norm, linf_norm, MatrixField, ScalarField, TorusGrid,
    VectorField,
};
use crate::problem::{builtin_problem, CouplingSpec, MFGProblem, ProblemParams};
use crate::solver::{residual, solve_mfg, MFGSolution, SolverConfig};

#[derive(Clone, Debug)]
pub struct ResidualNorms {
    pub field: ScalarField,
    pub linf: f64,
    pub l2: f64,
}

impl ResidualNorms {
    fn of(field: ScalarField) -> Self {
        Self {
            linf: linf_norm(&field),
            l2: l2_norm(&field),
            field,
        }
    }
}

/// Strong-form residual of the Hamilton–Jacobi equation with the exact Hamiltonian.
pub fn hj_residual(u: &ScalarField, prob: &MFGProblem, hbar: f64) -> Result<ResidualNorms> {
    Ok(ResidualNorms::of(residual(u, prob, hbar, 0.0)?))
}

/// `div(A Dmᵀ) + div(m A Duᵀ)`, both in flux form; `m A` is averaged to the
/// cell interfaces like `A`.
pub fn fp_residual(u: &ScalarField, m: &ScalarField, prob: &MFGProblem) -> Result<ResidualNorms> {
    if let Some(i) = m.values().iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Field(format!("density must be positive (index {i})")));
    }
    let a = prob.a();
    let diffusion = div_a_grad(m, a);
    let drift = div_a_grad(u, &a.weighted(m));
    Ok(ResidualNorms::of(diffusion.zip_map(&drift, |x, y| x + y)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaxPrincipleReport {
    pub argmax: usize,
    pub argmin: usize,
    /// `V(x_M) - H̄ - g(-u(x_M))`, must be `≤ tol`.
    pub margin_max: f64,
    /// `V(x_m) - H̄ - g(-u(x_m))`, must be `≥ -tol`.
    pub margin_min: f64,
    pub tol: f64,
    pub passed: bool,
}

pub fn max_principle_check(u: &ScalarField, prob: &MFGProblem, hbar: f64, tol: f64) -> MaxPrincipleReport {
    let zeroth = |i: usize| prob.v().values()[i] - hbar - prob.coupling().eval(-u.values()[i]);
    let argmax = u.argmax();
    let argmin = u.argmin();
    let margin_max = zeroth(argmax);
    let margin_min = zeroth(argmin);
    MaxPrincipleReport {
        argmax,
        argmin,
        margin_max,
        margin_min,
        tol,
        passed: margin_max <= tol && margin_min >= -tol,
    }
}

/// `∫ (g(log m₁) - g(log m₂)) (m₁ - m₂)`, nonnegative for monotone `g`.
pub fn monotonicity_gap(m1: &ScalarField, m2: &ScalarField, coupling: &CouplingSpec) -> Result<f64> {
    if m1.grid() != m2.grid() {
        return Err(Error::Field("densities live on different grids".into()));
    }
    if m1.values().iter().chain(m2.values()).any(|&v| !(v > 0.0)) {
        return Err(Error::Field("densities must be positive".into()));
    }
    let h = m1.grid().cell_volume();
    Ok(h * m1
        .values()
        .iter()
        .zip(m2.values())
        .map(|(&a, &b)| (coupling.eval(a.ln()) - coupling.eval(b.ln())) * (a - b))
        .sum::<f64>())
}

/// Largest pairwise `‖u_i - u_j‖∞` over full solves from each initial guess.
pub fn uniqueness_probe(prob: &MFGProblem, config: &SolverConfig, inits: &[ScalarField]) -> Result<f64> {
    let solutions = inits
        .iter()
        .map(|init| solve_mfg(prob, &config.clone().with_init(init.clone())).map(|s| s.u))
        .collect::<Result<Vec<_>>>()?;
    let mut worst = 0.0f64;
    for (i, a) in solutions.iter().enumerate() {
        for b in &solutions[i + 1..] {
            worst = worst.max(linf_norm(&a.zip_map(b, |x, y| x - y)));
        }
    }
    Ok(worst)
}

/// Ball centers and radii for sampled sup-norms.
#[derive(Clone, Debug, PartialEq)]
pub struct BallSampler {
    grid: TorusGrid,
    centers: Vec<usize>,
    radii: Vec<f64>,
}

impl BallSampler {
    pub fn new(grid: TorusGrid, centers: Vec<usize>, radii: Vec<f64>) -> Result<Self> {
        if centers.is_empty() || radii.is_empty() {
            return Err(Error::Validation("ball sampler needs centers and radii".into()));
        }
        if centers.iter().any(|&c| c >= grid.len()) {
            return Err(Error::Validation("ball center outside the grid".into()));
        }
        if radii.iter().any(|&r| !(r > 0.0 && r <= 0.5)) {
            return Err(Error::Validation("radii must lie in (0, 1/2]".into()));
        }
        if radii.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Validation("radii must be strictly decreasing".into()));
        }
        Ok(Self { grid, centers, radii })
    }

    /// Radii `2^{-j}` from `1/2` down to the smallest value `≥ 2h`; centers on
    /// a regular sub-lattice with at most `max_centers` points.
    pub fn dyadic(grid: TorusGrid, max_centers: usize) -> Self {
        let mut radii = Vec::new();
        let mut r = 0.5;
        while r >= 2.0 * grid.h() - 1e-15 {
            radii.push(r);
            r *= 0.5;
        }
        let mut stride = 1;
        while (grid.n() / stride).pow(grid.dim() as u32) > max_centers.max(1) && stride < grid.n() {
            stride *= 2;
        }
        let centers = (0..grid.len())
            .filter(|&i| grid.multi_index(i).iter().all(|&k| k % stride == 0))
            .collect();
        Self { grid, centers, radii }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }
    pub fn centers(&self) -> &[usize] {
        &self.centers
    }
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Visits every sampled ball as `(radius, [(point, weight)])`.
    fn for_each_ball(&self, mut visit: impl FnMut(f64, &[(usize, f64)])) {
        let mut members = Vec::new();
        for &r in &self.radii {
            let stencil = BallStencil::new(&self.grid, r);
            for &c in &self.centers {
                stencil.members(&self.grid, c, &mut members);
                visit(r, &members);
            }
        }
    }
}

/// Offsets and fractional membership weights of a torus ball of radius `r`.
///
/// A point at distance `ρ` from the center gets weight `clamp((r - ρ)/h + ½, 0, 1)`,
/// summed over periodic images and capped at one. In one dimension this is the
/// exact overlap of each cell with the ball; in two it is a smoothed midpoint
/// rule.
struct BallStencil {
    offsets: Vec<([isize; 2], f64)>,
}

impl BallStencil {
    fn new(grid: &TorusGrid, r: f64) -> Self {
        let n = grid.n() as isize;
        let h = grid.h();
        let reach = (r / h).ceil() as isize + 1;
        let (lo, hi) = if 2 * reach + 1 >= n { (-n / 2, n / 2 - 1) } else { (-reach, reach) };
        let dim = grid.dim();
        let mut offsets = Vec::new();
        let range1 = if dim == 2 { lo..=hi } else { 0..=0 };
        for o0 in lo..=hi {
            for o1 in range1.clone() {
                let o = [o0, o1];
                let mut w = 0.0;
                for s0 in -1..=1isize {
                    for s1 in if dim == 2 { -1..=1isize } else { 0..=0 } {
                        let s = [s0, s1];
                        let rho = (0..dim)
                            .map(|k| (o[k] as f64 * h + s[k] as f64).powi(2))
                            .sum::<f64>()
                            .sqrt();
                        w += ((r - rho) / h + 0.5).clamp(0.0, 1.0);
                    }
                }
                let w = w.min(1.0);
                if w > 0.0 {
                    offsets.push((o, w));
                }
            }
        }
        Self { offsets }
    }

    fn members(&self, grid: &TorusGrid, center: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let c = grid.multi_index(center);
        let n = grid.n() as isize;
        for &(o, w) in &self.offsets {
            let idx = [
                (c[0] as isize + o[0]).rem_euclid(n) as usize,
                (c[1] as isize + o[1]).rem_euclid(n) as usize,
            ];
            out.push((grid.flat_index(idx), w));
        }
    }
}

fn check_exponents(p: f64, lambda: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Validation(format!("p must be ≥ 1, got {p}")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Validation(format!("lambda must be ≥ 0, got {lambda}")));
    }
    Ok(())
}

/// Sampled Morrey norm `sup_B (r^{-λ} ∫_B |f|^p)^{1/p}`.
pub fn morrey_norm(f: &ScalarField, p: f64, lambda: f64, sampler: &BallSampler) -> Result<f64> {
    check_exponents(p, lambda)?;
    if lambda >= sampler.grid.dim() as f64 {
        return Err(Error::Validation(format!("lambda must be < d, got {lambda}")));
    }
    check_sampler(f, sampler)?;
    let vol = sampler.grid.cell_volume();
    let vals = f.values();
    let mut best = 0.0f64;
    sampler.for_each_ball(|r, members| {
        let integral: f64 = members.iter().map(|&(i, w)| w * vals[i].abs().powf(p)).sum::<f64>() * vol;
        best = best.max(r.powf(-lambda) * integral);
    });
    Ok(best.powf(1.0 / p))
}

/// Sampled Campanato seminorm `sup_B (r^{-λ} ∫_B |f - f_B|^p)^{1/p}`, with
/// `f_B` the ball mean. Pass `λ = d` for the `r^{-d}` normalization.
pub fn campanato_norm(f: &ScalarField, p: f64, lambda: f64, sampler: &BallSampler) -> Result<f64> {
    check_exponents(p, lambda)?;
    check_sampler(f, sampler)?;
    let vol = sampler.grid.cell_volume();
    let vals = f.values();
    let mut best = 0.0f64;
    sampler.for_each_ball(|r, members| {
        let wsum: f64 = members.iter().map(|m| m.1).sum();
        let mean = members.iter().map(|&(i, w)| w * vals[i]).sum::<f64>() / wsum;
        let integral: f64 = members
            .iter()
            .map(|&(i, w)| w * (vals[i] - mean).abs().powf(p))
            .sum::<f64>()
            * vol;
        best = best.max(r.powf(-lambda) * integral);
    });
    Ok(best.powf(1.0 / p))
}

fn check_sampler(f: &ScalarField, sampler: &BallSampler) -> Result<()> {
    if f.grid() != sampler.grid() {
        return Err(Error::Field("field and sampler live on different grids".into()));
    }
    Ok(())
}

/// Above this many grid points the Hölder seminorm samples random pairs.
pub const HOLDER_ALL_PAIRS_LIMIT: usize = 4096;

/// `max |f(x) - f(y)| / dist(x,y)^α` over all pairs on small grids, otherwise
/// over every neighbor pair plus `pair_budget` seeded random pairs.
pub fn holder_seminorm(f: &ScalarField, alpha: f64, pair_budget: usize, seed: u64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Validation(format!("alpha must lie in (0,1], got {alpha}")));
    }
    let grid = f.grid();
    let v = f.values();
    let ratio = |i: usize, j: usize| {
        let d = grid.index_distance(i, j);
        if d == 0.0 {
            0.0
        } else {
            (v[i] - v[j]).abs() / d.powf(alpha)
        }
    };
    let n = grid.len();
    let mut best = 0.0f64;
    if n <= HOLDER_ALL_PAIRS_LIMIT {
        for i in 0..n {
            for j in i + 1..n {
                best = best.max(ratio(i, j));
            }
        }
    } else {
        for i in 0..n {
            for k in 0..grid.dim() {
                best = best.max(ratio(i, grid.neighbor(i, k, 1)));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..pair_budget {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            best = best.max(ratio(i, j));
        }
    }
    Ok(best)
}

/// Largest oscillation `max_x max_k |f(x + s e_k) - f(x)|` at a shift of `s` cells.
fn oscillation(f: &ScalarField, s: usize) -> f64 {
    let grid = f.grid();
    let v = f.values();
    (0..grid.len())
        .flat_map(|i| (0..grid.dim()).map(move |k| (i, k)))
        .map(|(i, k)| (v[grid.neighbor(i, k, s as isize)] - v[i]).abs())
        .fold(0.0, f64::max)
}

/// Least-squares slope of `log osc(δ)` against `log δ`, clamped to `[0, 1]`.
///
/// Separations are the dyadic lengths `1/4 … 1/32` that are whole multiples of
/// `h`, so the fit window does not move under refinement; grids too coarse for
/// two of them fall back to `δ = h, 2h, 4h, …, ≤ 1/4`.
pub fn fit_holder_exponent(f: &ScalarField) -> f64 {
    let n = f.grid().n();
    let mut shifts: Vec<usize> = [4usize, 8, 16, 32]
        .iter()
        .filter(|&&den| n.is_multiple_of(den))
        .map(|&den| n / den)
        .collect();
    if shifts.len() < 2 {
        shifts = std::iter::successors(Some(1usize), |s| Some(s * 2))
            .take_while(|&s| 4 * s <= n)
            .collect();
    }
    let pts: Vec<(f64, f64)> = shifts
        .iter()
        .map(|&s| (s as f64 / n as f64, oscillation(f, s)))
        .filter(|&(_, o)| o > 0.0)
        .map(|(d, o)| (d.ln(), o.ln()))
        .collect();
    if pts.len() < 2 {
        return 1.0;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxy / sxx).clamp(0.0, 1.0)
}

/// Morrey exponent `λ = d - 2 + 2α` paired with a Hölder exponent `α`.
pub fn morrey_exponent(dim: usize, alpha: f64) -> f64 {
    dim as f64 - 2.0 + 2.0 * alpha
}

/// `C* = max_B ∫_B |Du|² / R^{d-2+2α}` over the sampled balls.
pub fn caccioppoli_check(u: &ScalarField, sampler: &BallSampler, alpha: f64) -> Result<f64> {
    check_sampler(u, sampler)?;
    let lambda = morrey_exponent(u.grid().dim(), alpha);
    let du2 = gradient(u).norm().map(|v| v * v);
    let vol = sampler.grid.cell_volume();
    let vals = du2.values();
    let mut best = 0.0f64;
    sampler.for_each_ball(|r, members| {
        let integral: f64 = members.iter().map(|&(i, w)| w * vals[i]).sum::<f64>() * vol;
        best = best.max(integral / r.powf(lambda));
    });
    Ok(best)
}

/// Coefficients of the equation satisfied by `v = ∂u/∂x_k`,
/// `-div(A Dvᵀ) + f₁ v + div(f₂) + f₃·Dv + f₄ = 0`, and its discrete residual.
#[derive(Clone, Debug)]
pub struct DerivativeEquation {
    pub v: ScalarField,
    /// `g′(-u)`.
    pub f1: ScalarField,
    /// `-A_{x_k} Duᵀ`.
    pub f2: VectorField,
    /// `½(Du A + Du Aᵀ)`.
    pub f3: VectorField,
    /// `½ Du A_{x_k} Duᵀ + V_{x_k}`.
    pub f4: ScalarField,
    pub residual: ResidualNorms,
}

pub fn derivative_equation_fields(
    u: &ScalarField,
    prob: &MFGProblem,
    _hbar: f64,
    k: usize,
) -> Result<DerivativeEquation> {
    let grid = *prob.grid();
    if k >= grid.dim() {
        return Err(Error::Validation(format!("axis {k} out of range")));
    }
    if u.grid() != &grid {
        return Err(Error::Field("u lives on a different grid".into()));
    }
    let d = grid.dim();
    let inv2h = 0.5 / grid.h();
    let a = prob.a();
    let partial = |vals: &[f64], i: usize| {
        (vals[grid.neighbor(i, k, 1)] - vals[grid.neighbor(i, k, -1)]) * inv2h
    };
    let entries: Vec<Vec<f64>> = [(0, 0), (0, 1), (1, 1)]
        .iter()
        .map(|&(i, j)| a.entry_field(i, j).into_values())
        .collect();
    let a_k = MatrixField::from_fn(grid, |_| [[0.0; 2]; 2]);
    let a_k_vals: Vec<[[f64; 2]; 2]> = (0..grid.len())
        .map(|i| {
            let xx = partial(&entries[0], i);
            let xy = partial(&entries[1], i);
            let yy = partial(&entries[2], i);
            [[xx, xy], [xy, yy]]
        })
        .collect();
    let a_k = MatrixField::new(grid, a_k_vals).unwrap_or(a_k);
    let v_k: Vec<f64> = (0..grid.len()).map(|i| partial(prob.v().values(), i)).collect();

    let du = gradient(u);
    let v = du.component(k);
    let dv = gradient(&v);
    let coupling = prob.coupling();

    let f1 = u.map(|x| coupling.derivative(-x));
    let mut f2 = vec![0.0; grid.len() * d];
    let mut f3 = vec![0.0; grid.len() * d];
    let mut f4 = vec![0.0; grid.len()];
    for i in 0..grid.len() {
        let p = du.at(i);
        a_k.at(i).apply(p, &mut f2[i * d..(i + 1) * d]);
        for c in &mut f2[i * d..(i + 1) * d] {
            *c = -*c;
        }
        a.at(i).apply(p, &mut f3[i * d..(i + 1) * d]);
        f4[i] = 0.5 * a_k.at(i).quad(p) + v_k[i];
    }
    let f2 = VectorField::new(grid, f2)?;
    let f3 = VectorField::new(grid, f3)?;
    let f4 = ScalarField::new(grid, f4)?;

    let lv = div_a_grad(&v, a);
    let div_f2 = divergence(&f2);
    let res: Vec<f64> = (0..grid.len())
        .map(|i| {
            let transport: f64 = f3.at(i).iter().zip(dv.at(i)).map(|(x, y)| x * y).sum();
            -lv.values()[i]
                + f1.values()[i] * v.values()[i]
                + div_f2.values()[i]
                + transport
                + f4.values()[i]
        })
        .collect();
    Ok(DerivativeEquation {
        residual: ResidualNorms::of(ScalarField::new(grid, res)?),
        v,
        f1,
        f2,
        f3,
        f4,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Order {
    Observed(f64),
    /// Both errors at round-off; no rate can be observed.
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub error: f64,
    pub hbar: f64,
    /// Order against the previous size; `None` for the first row.
    pub order: Option<Order>,
}

/// Errors below this level are treated as exact.
pub const ROUNDOFF_ERROR: f64 = 1e-12;

/// Solves a built-in problem at each size and compares with its exact solution.
pub fn convergence_study(
    name: &str,
    template: &ProblemParams,
    sizes: &[usize],
    config: &SolverConfig,
) -> Result<Vec<ConvergenceRow>> {
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for &n in sizes {
        let params = ProblemParams {
            n,
            ..template.clone()
        };
        let prob = builtin_problem(name, &params)?;
        let exact = prob.exact().ok_or_else(|| {
            Error::Validation(format!("problem `{name}` has no exact solution"))
        })?;
        let sol = solve_mfg(&prob, config)?;
        let error = linf_norm(&sol.u.zip_map(&exact.u, |a, b| a - b));
        let order = rows.last().map(|prev| {
            if prev.error <= ROUNDOFF_ERROR && error <= ROUNDOFF_ERROR {
                Order::Exact
            } else {
                Order::Observed((prev.error / error).ln() / (n as f64 / prev.n as f64).ln())
            }
        });
        rows.push(ConvergenceRow {
            n,
            error,
            hbar: sol.hbar,
            order,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularityReport {
    /// Morrey norm of `|Du|` with `p = 2`, `λ = d - 2 + 2α̂`.
    pub morrey_du: f64,
    pub morrey_lambda: f64,
    /// Campanato seminorm of `u` with `p = 2`, `λ = d + 2α̂`.
    pub campanato: f64,
    pub holder_alpha: f64,
    pub holder_seminorm: f64,
    pub caccioppoli_ratio: f64,
    /// `k₀ - ‖u‖∞`.
    pub k0_margin: f64,
}

pub const DEFAULT_PAIR_BUDGET: usize = 200_000;
pub const DEFAULT_MAX_CENTERS: usize = 1024;

pub fn regularity_report(u: &ScalarField, k0: f64, seed: u64) -> Result<RegularityReport> {
    let grid = *u.grid();
    let sampler = BallSampler::dyadic(grid, DEFAULT_MAX_CENTERS);
    let alpha = fit_holder_exponent(u);
    let lambda = morrey_exponent(grid.dim(), alpha).clamp(0.0, grid.dim() as f64 - 1e-9);
    let du = gradient(u).norm();
    Ok(RegularityReport {
        morrey_du: morrey_norm(&du, 2.0, lambda, &sampler)?,
        morrey_lambda: lambda,
        campanato: campanato_norm(u, 2.0, grid.dim() as f64 + 2.0 * alpha, &sampler)?,
        holder_alpha: alpha,
        holder_seminorm: holder_seminorm(u, alpha.max(1e-6), DEFAULT_PAIR_BUDGET, seed)?,
        caccioppoli_ratio: caccioppoli_check(u, &sampler, alpha)?,
        k0_margin: k0 - linf_norm(u),
    })
}

/// Full diagnostics bundle for a solved problem.
#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub hj_residual_linf: f64,
    pub fp_residual_linf: f64,
    pub max_principle: MaxPrincipleReport,
    pub regularity: RegularityReport,
    pub derivative_residual_linf: Vec<f64>,
    pub exact_error_linf: Option<f64>,
}

/// Runs every diagnostic on a solution; the maximum-principle tolerance is `10 h²`.
pub fn verify_solution(sol: &MFGSolution, prob: &MFGProblem, seed: u64) -> Result<VerificationReport> {
    let h = prob.grid().h();
    let derivative_residual_linf = (0..prob.grid().dim())
        .map(|k| derivative_equation_fields(&sol.u, prob, sol.hbar, k).map(|d| d.residual.linf))
        .collect::<Result<Vec<_>>>()?;
    Ok(VerificationReport {
        hj_residual_linf: hj_residual(&sol.u, prob, sol.hbar)?.linf,
        fp_residual_linf: fp_residual(&sol.u, &sol.m, prob)?.linf,
        max_principle: max_principle_check(&sol.u, prob, sol.hbar, 10.0 * h * h),
        regularity: regularity_report(&sol.u, sol.k0, seed)?,
        derivative_residual_linf,
        exact_error_linf: prob
            .exact()
            .map(|e| linf_norm(&sol.u.zip_map(&e.u, |a, b| a - b))),
    })
}
