//! Hopf–Cole reduced solver.
//!
//! With `m = e^{-u}` the Fokker–Planck equation holds identically and the MFG
//! system collapses to the scalar equation
//!
//! ```text
//! F(u) = -div(A Duᵀ) + H_ε(x, Du) + V(x) - H̄ - g(-u) = 0,
//! ```
//!
//! solved by damped Newton along a decreasing `ε` schedule. The ergodic
//! constant `H̄` is then fixed by bisection on the mass `∫ e^{-u_H̄}`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{div_a_grad_row, gradient_raw, integrate, linf, ScalarField, StencilRow};
use crate::hamiltonian::{dh_eps_dp_into, h_eps, EpsSchedule};
use crate::linalg::SparsePattern;
use crate::problem::MFGProblem;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NewtonOptions {
    /// Target for `‖F‖∞`.
    pub tol: f64,
    pub max_iter: usize,
    /// Sufficient-decrease constant of the Armijo test on `‖F‖∞`.
    pub armijo_c: f64,
    /// Smallest step length tried before giving up.
    pub min_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            armijo_c: 1e-4,
            min_step: 2f64.powi(-20),
        }
    }
}

impl NewtonOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Validation("newton tol must be positive".into()));
        }
        if self.max_iter < 1 {
            return Err(Error::Validation("newton max_iter must be ≥ 1".into()));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::Validation("armijo_c must lie in (0,1)".into()));
        }
        if !(self.min_step > 0.0 && self.min_step <= 1.0) {
            return Err(Error::Validation("min_step must lie in (0,1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct NewtonReport {
    pub hbar: f64,
    pub eps: f64,
    pub iterations: usize,
    /// `‖F‖∞` before each iteration and at exit.
    pub residual_history: Vec<f64>,
    pub step_lengths: Vec<f64>,
    pub converged: bool,
}

impl NewtonReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageReport {
    pub eps: f64,
    pub newton: NewtonReport,
    /// `‖u_stage - u_previous‖∞` (the first stage compares with the initial guess).
    pub increment: f64,
    pub u_linf: f64,
}

#[derive(Clone, Debug)]
pub struct ContinuationResult {
    pub u: ScalarField,
    pub stages: Vec<StageReport>,
}

impl ContinuationResult {
    /// Increments between consecutive stages, `‖u_{k+1} - u_k‖∞`.
    pub fn stage_increments(&self) -> Vec<f64> {
        self.stages.iter().skip(1).map(|s| s.increment).collect()
    }

    pub fn newton_iterations(&self) -> usize {
        self.stages.iter().map(|s| s.newton.iterations).sum()
    }
}

/// Newton machinery for one problem. The Jacobian sparsity pattern and its
/// symbolic LU are built once and shared by every solve.
pub struct HopfColeSolver<'p> {
    prob: &'p MFGProblem,
    rows: Vec<StencilRow>,
    pattern: SparsePattern,
    /// Largest absolute row sum of the diffusion stencil.
    op_norm: f64,
}

/// Last iterate, report and reason of a failed Newton solve.
type NewtonFailure = (Vec<f64>, NewtonReport, String);

/// Multiple of `ε_mach ‖L‖ ‖u‖∞` below which residuals are round-off.
pub const ROUNDOFF_FACTOR: f64 = 4.0;

impl<'p> HopfColeSolver<'p> {
    pub fn new(prob: &'p MFGProblem) -> Result<Self> {
        let grid = prob.grid();
        let rows: Vec<StencilRow> = (0..grid.len())
            .map(|i| div_a_grad_row(grid, prob.a().values(), i))
            .collect();
        let mut entries = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            entries.extend(row.entries.iter().map(|&(c, _)| (i, c)));
            for k in 0..grid.dim() {
                entries.push((i, grid.neighbor(i, k, 1)));
                entries.push((i, grid.neighbor(i, k, -1)));
            }
            entries.push((i, i));
        }
        let pattern = SparsePattern::new(grid.len(), &entries)?;
        let op_norm = rows
            .iter()
            .map(|r| r.entries.iter().map(|e| e.1.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        Ok(Self {
            prob,
            rows,
            pattern,
            op_norm,
        })
    }

    /// `max(tol, ROUNDOFF_FACTOR ε_mach ‖L‖ max(‖u‖∞, 1))`: on fine grids the
    /// residual of a representable `u` cannot be evaluated more accurately.
    pub fn attainable_tol(&self, tol: f64, u: &[f64]) -> f64 {
        tol.max(ROUNDOFF_FACTOR * f64::EPSILON * self.op_norm * linf(u).max(1.0))
    }

    pub fn problem(&self) -> &MFGProblem {
        self.prob
    }

    /// Pointwise `F(u)` for the given `H̄` and `ε`.
    pub fn residual(&self, u: &[f64], hbar: f64, eps: f64) -> Vec<f64> {
        let grid = self.prob.grid();
        let d = grid.dim();
        let du = gradient_raw(grid, u);
        let a = self.prob.a().values();
        let v = self.prob.v().values();
        let g = self.prob.coupling();
        (0..grid.len())
            .map(|i| {
                -self.rows[i].apply(u) + h_eps(&du[i * d..(i + 1) * d], &a[i], eps) + v[i]
                    - hbar
                    - g.eval(-u[i])
            })
            .collect()
    }

    /// Jacobian values in pattern order.
    fn jacobian_values(&self, u: &[f64], eps: f64) -> Vec<f64> {
        let grid = self.prob.grid();
        let d = grid.dim();
        let inv2h = 0.5 / grid.h();
        let du = gradient_raw(grid, u);
        let a = self.prob.a().values();
        let g = self.prob.coupling();
        let mut vals = Vec::with_capacity(self.pattern.nnz_entries());
        let mut b = [0.0; 2];
        for (i, row) in self.rows.iter().enumerate() {
            vals.extend(row.entries.iter().map(|&(_, w)| -w));
            dh_eps_dp_into(&du[i * d..(i + 1) * d], &a[i], eps, &mut b[..d]);
            for bk in &b[..d] {
                vals.push(bk * inv2h);
                vals.push(-bk * inv2h);
            }
            vals.push(g.derivative(-u[i]));
        }
        vals
    }

    /// Directional derivative `J(u) w` from the assembled Jacobian.
    pub fn jacobian_apply(&self, u: &[f64], eps: f64, w: &[f64]) -> Vec<f64> {
        self.pattern.matvec(&self.jacobian_values(u, eps), w)
    }

    // Private, called once per stage; boxing the failure buys nothing.
    #[allow(clippy::result_large_err)]
    fn newton(
        &self,
        hbar: f64,
        eps: f64,
        init: &[f64],
        opts: &NewtonOptions,
        force_step: bool,
    ) -> std::result::Result<(Vec<f64>, NewtonReport), NewtonFailure> {
        let mut u = init.to_vec();
        let mut report = NewtonReport {
            hbar,
            eps,
            ..Default::default()
        };
        let mut f = self.residual(&u, hbar, eps);
        let mut r = linf(&f);
        loop {
            report.residual_history.push(r);
            if !r.is_finite() {
                return Err((u, report, "non-finite residual".into()));
            }
            let tol = self.attainable_tol(opts.tol, &u);
            let must_step = force_step && report.iterations == 0;
            if r <= tol && !must_step {
                report.converged = true;
                return Ok((u, report));
            }
            if report.iterations >= opts.max_iter {
                return Err((u, report, format!("max_iter {} exhausted", opts.max_iter)));
            }
            let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
            let delta = match self.pattern.solve(&self.jacobian_values(&u, eps), &rhs) {
                Ok(d) => d,
                Err(e) => return Err((u, report, e.to_string())),
            };
            report.iterations += 1;

            let mut t = 1.0;
            loop {
                let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, b)| a + t * b).collect();
                let ft = self.residual(&trial, hbar, eps);
                let rt = linf(&ft);
                let armijo = rt <= (1.0 - opts.armijo_c * t) * r;
                if rt.is_finite() && (armijo || rt <= tol) {
                    u = trial;
                    f = ft;
                    r = rt;
                    report.step_lengths.push(t);
                    break;
                }
                if r <= tol {
                    // Forced step from an already converged iterate that did
                    // not improve: keep the iterate.
                    report.step_lengths.push(0.0);
                    break;
                }
                t *= 0.5;
                if t < opts.min_step {
                    return Err((u, report, "line search below min_step".into()));
                }
            }
        }
    }

    pub fn solve_scalar(
        &self,
        hbar: f64,
        eps: f64,
        init: &ScalarField,
        opts: &NewtonOptions,
    ) -> Result<(ScalarField, NewtonReport)> {
        check_init(self.prob, init)?;
        match self.newton(hbar, eps, init.values(), opts, false) {
            Ok((u, report)) => Ok((ScalarField::from_raw(*self.prob.grid(), u), report)),
            Err((_, report, reason)) => Err(Error::NonConvergence {
                stage: None,
                reason,
                report: Box::new(report),
            }),
        }
    }

    /// Solves along the schedule, warm-starting every stage from the last.
    /// Each stage takes at least one Newton step so that the recorded
    /// increments reflect the change in `ε` rather than the stopping test.
    pub fn continuation(
        &self,
        hbar: f64,
        schedule: &EpsSchedule,
        init: &ScalarField,
        opts: &NewtonOptions,
    ) -> Result<ContinuationResult> {
        schedule.validate()?;
        check_init(self.prob, init)?;
        let mut u = init.values().to_vec();
        let mut stages = Vec::new();
        for (k, eps) in schedule.stages().into_iter().enumerate() {
            match self.newton(hbar, eps, &u, opts, true) {
                Ok((next, newton)) => {
                    let increment = next
                        .iter()
                        .zip(&u)
                        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                    stages.push(StageReport {
                        eps,
                        newton,
                        increment,
                        u_linf: linf(&next),
                    });
                    u = next;
                }
                Err((_, report, reason)) => {
                    return Err(Error::NonConvergence {
                        stage: Some(k),
                        reason,
                        report: Box::new(report),
                    })
                }
            }
        }
        Ok(ContinuationResult {
            u: ScalarField::from_raw(*self.prob.grid(), u),
            stages,
        })
    }
}

fn check_init(prob: &MFGProblem, init: &ScalarField) -> Result<()> {
    if init.grid() != prob.grid() {
        return Err(Error::Field("initial guess lives on a different grid".into()));
    }
    if init.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Field("initial guess is not finite".into()));
    }
    Ok(())
}

/// Pointwise residual `F(u)` of the `ε`-regularized scalar equation.
pub fn residual(u: &ScalarField, prob: &MFGProblem, hbar: f64, eps: f64) -> Result<ScalarField> {
    let solver = HopfColeSolver::new(prob)?;
    check_init(prob, u)?;
    Ok(ScalarField::from_raw(*prob.grid(), solver.residual(u.values(), hbar, eps)))
}

pub fn solve_scalar(
    prob: &MFGProblem,
    hbar: f64,
    eps: f64,
    init: &ScalarField,
    opts: &NewtonOptions,
) -> Result<(ScalarField, NewtonReport)> {
    HopfColeSolver::new(prob)?.solve_scalar(hbar, eps, init, opts)
}

pub fn continuation_solve(
    prob: &MFGProblem,
    hbar: f64,
    schedule: &EpsSchedule,
    init: &ScalarField,
    opts: &NewtonOptions,
) -> Result<ContinuationResult> {
    HopfColeSolver::new(prob)?.continuation(hbar, schedule, init, opts)
}

/// A-priori bound `k₀ = (sup|V - H̄| + 1/C_g)/C_g + 1` on `‖u‖∞`.
pub fn linf_bound_k0(prob: &MFGProblem, hbar: f64) -> f64 {
    let c_v = prob
        .v()
        .values()
        .iter()
        .fold(0.0f64, |m, v| m.max((v - hbar).abs()));
    let c_g = prob.coupling().c_g();
    (c_v + 1.0 / c_g) / c_g + 1.0
}

/// `∫ e^{-u}`.
pub fn mass_functional(u: &ScalarField) -> f64 {
    integrate(&hopf_cole(u))
}

/// Density `m = e^{-u}`.
pub fn hopf_cole(u: &ScalarField) -> ScalarField {
    u.map(|v| (-v).exp())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub schedule: EpsSchedule,
    pub newton: NewtonOptions,
    pub bisect_tol: f64,
    /// Initial guess for the first solve; zero when absent.
    pub init: Option<ScalarField>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            schedule: EpsSchedule::default(),
            newton: NewtonOptions::default(),
            bisect_tol: 1e-10,
            init: None,
        }
    }
}

impl SolverConfig {
    pub fn with_init(mut self, init: ScalarField) -> Self {
        self.init = Some(init);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.newton.validate()?;
        if !(self.bisect_tol > 0.0) {
            return Err(Error::Validation("bisect_tol must be positive".into()));
        }
        Ok(())
    }

    fn initial_guess(&self, prob: &MFGProblem) -> ScalarField {
        self.init
            .clone()
            .unwrap_or_else(|| ScalarField::zeros(*prob.grid()))
    }
}

pub const MAX_BRACKET_EXPANSIONS: usize = 60;
pub const MAX_BISECTION_STEPS: usize = 200;

/// One evaluation of `ℋ(H̄)`; `mass` is `None` when the inner solve failed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MassEvaluation {
    pub hbar: f64,
    pub mass: Option<f64>,
    pub newton_iterations: usize,
}

/// `ℋ(low) < 1 < ℋ(up)` with `up < low`.
#[derive(Clone, Debug)]
pub struct Bracket {
    pub low: f64,
    pub up: f64,
    pub mass_low: f64,
    pub mass_up: f64,
    pub expansions: usize,
    pub evaluations: Vec<MassEvaluation>,
    u_low: ScalarField,
    u_up: ScalarField,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BisectionStep {
    pub hbar: f64,
    pub mass: f64,
    /// Bracket in force when `hbar` was evaluated.
    pub low: f64,
    pub up: f64,
    pub newton_iterations: usize,
}

impl<'p> HopfColeSolver<'p> {
    pub fn bracket_hbar(&self, config: &SolverConfig) -> Result<Bracket> {
        config.validate()?;
        let prob = self.prob;
        let c_g = prob.coupling().c_g();
        let mut offset = crate::grid::linf_norm(prob.v()) + 1.0 / c_g + 1.0;
        let mut warm = config.initial_guess(prob);
        let mut low: Option<(f64, f64, ScalarField)> = None;
        let mut up: Option<(f64, f64, ScalarField)> = None;
        let mut evaluations = Vec::new();

        for expansion in 0..=MAX_BRACKET_EXPANSIONS {
            for side in [1.0, -1.0] {
                let done = if side > 0.0 { low.is_some() } else { up.is_some() };
                if done {
                    continue;
                }
                let hbar = side * offset;
                match self.continuation(hbar, &config.schedule, &warm, &config.newton) {
                    Ok(res) => {
                        let mass = mass_functional(&res.u);
                        evaluations.push(MassEvaluation {
                            hbar,
                            mass: Some(mass),
                            newton_iterations: res.newton_iterations(),
                        });
                        warm = res.u.clone();
                        if side > 0.0 && mass < 1.0 {
                            low = Some((hbar, mass, res.u));
                        } else if side < 0.0 && mass > 1.0 {
                            up = Some((hbar, mass, res.u));
                        }
                    }
                    Err(Error::NonConvergence { report, .. }) => {
                        evaluations.push(MassEvaluation {
                            hbar,
                            mass: None,
                            newton_iterations: report.iterations,
                        });
                    }
                    Err(e) => return Err(e),
                }
            }
            if let (Some(l), Some(u)) = (&low, &up) {
                return Ok(Bracket {
                    low: l.0,
                    up: u.0,
                    mass_low: l.1,
                    mass_up: u.1,
                    expansions: expansion,
                    evaluations,
                    u_low: l.2.clone(),
                    u_up: u.2.clone(),
                });
            }
            offset *= 2.0;
        }
        let failed = evaluations.iter().filter(|e| e.mass.is_none()).count();
        Err(Error::BracketFailure {
            expansions: MAX_BRACKET_EXPANSIONS,
            reason: format!(
                "mass never crossed 1 on both sides ({} evaluations, {failed} inner solves failed); \
                 the coupling likely violates coercivity",
                evaluations.len()
            ),
        })
    }

    pub fn normalize_hbar(&self, config: &SolverConfig) -> Result<MFGSolution> {
        let bracket = self.bracket_hbar(config)?;
        let (mut lo, mut up) = (bracket.low, bracket.up);
        let mut warm = bracket.u_low.clone();
        let mut history = Vec::new();
        let mut total_iters: usize = bracket.evaluations.iter().map(|e| e.newton_iterations).sum();
        // Endpoints already satisfying the tolerance are accepted as they are.
        let endpoints = [
            (bracket.low, bracket.mass_low, &bracket.u_low),
            (bracket.up, bracket.mass_up, &bracket.u_up),
        ];
        if let Some(&(hbar, _, u)) = endpoints
            .iter()
            .find(|e| (e.1 - 1.0).abs() <= config.bisect_tol)
        {
            let res = self.continuation(hbar, &config.schedule, u, &config.newton)?;
            return Ok(self.assemble(res, hbar, bracket, history, total_iters));
        }
        for _ in 0..MAX_BISECTION_STEPS {
            let mid = 0.5 * (lo + up);
            let res = self.continuation(mid, &config.schedule, &warm, &config.newton)?;
            let mass = mass_functional(&res.u);
            let iters = res.newton_iterations();
            total_iters += iters;
            history.push(BisectionStep {
                hbar: mid,
                mass,
                low: lo,
                up,
                newton_iterations: iters,
            });
            if (mass - 1.0).abs() <= config.bisect_tol {
                return Ok(self.assemble(res, mid, bracket, history, total_iters));
            }
            if mass < 1.0 {
                lo = mid;
            } else {
                up = mid;
            }
            warm = res.u;
            let next = 0.5 * (lo + up);
            if next <= up || next >= lo {
                return Err(Error::BisectionStalled {
                    iterations: history.len(),
                    gap: (mass - 1.0).abs(),
                });
            }
        }
        let gap = history.last().map(|s| (s.mass - 1.0).abs()).unwrap_or(f64::NAN);
        Err(Error::BisectionStalled {
            iterations: history.len(),
            gap,
        })
    }

    fn assemble(
        &self,
        res: ContinuationResult,
        hbar: f64,
        bracket: Bracket,
        bisection: Vec<BisectionStep>,
        newton_iters_total: usize,
    ) -> MFGSolution {
        let m = hopf_cole(&res.u);
        let mass = integrate(&m);
        MFGSolution {
            k0: linf_bound_k0(self.prob, hbar),
            mass,
            m,
            hbar,
            newton_iters_total,
            bracket: BracketSummary {
                low: bracket.low,
                up: bracket.up,
                mass_low: bracket.mass_low,
                mass_up: bracket.mass_up,
                expansions: bracket.expansions,
                evaluations: bracket.evaluations,
            },
            bisection,
            stages: res.stages,
            u: res.u,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BracketSummary {
    pub low: f64,
    pub up: f64,
    pub mass_low: f64,
    pub mass_up: f64,
    pub expansions: usize,
    pub evaluations: Vec<MassEvaluation>,
}

/// The MFG triple `(u, m, H̄)` with the records of how it was obtained.
#[derive(Clone, Debug)]
pub struct MFGSolution {
    pub u: ScalarField,
    /// `e^{-u}` pointwise.
    pub m: ScalarField,
    pub hbar: f64,
    /// `∫ m`.
    pub mass: f64,
    /// `linf_bound_k0` at the final `H̄`.
    pub k0: f64,
    /// Continuation stages of the final evaluation.
    pub stages: Vec<StageReport>,
    pub bracket: BracketSummary,
    pub bisection: Vec<BisectionStep>,
    pub newton_iters_total: usize,
}

impl MFGSolution {
    pub fn bisect_iters(&self) -> usize {
        self.bisection.len()
    }
}

pub fn bracket_hbar(prob: &MFGProblem, config: &SolverConfig) -> Result<Bracket> {
    HopfColeSolver::new(prob)?.bracket_hbar(config)
}

pub fn normalize_hbar(prob: &MFGProblem, config: &SolverConfig) -> Result<MFGSolution> {
    HopfColeSolver::new(prob)?.normalize_hbar(config)
}

/// End-to-end: bracket, bisect and assemble `(u, m, H̄)`.
pub fn solve_mfg(prob: &MFGProblem, config: &SolverConfig) -> Result<MFGSolution> {
    config.validate()?;
    normalize_hbar(prob, config)
}

/// `ℋ(H̄)` without normalization, one continuation solve per value.
pub fn mass_sweep(prob: &MFGProblem, config: &SolverConfig, hbars: &[f64]) -> Result<Vec<(f64, f64)>> {
    let solver = HopfColeSolver::new(prob)?;
    let mut warm = config.initial_guess(prob);
    let mut out = Vec::with_capacity(hbars.len());
    for &hbar in hbars {
        let res = solver.continuation(hbar, &config.schedule, &warm, &config.newton)?;
        out.push((hbar, mass_functional(&res.u)));
        warm = res.u;
    }
    Ok(out)
}
