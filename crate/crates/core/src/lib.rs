//! Numerical solver for stationary second-order mean-field games on the flat
//! torus with logarithmic coupling and a quadratic, anisotropic Hamiltonian.
//!
//! The Hopf–Cole substitution `m = e^{-u}` collapses the coupled
//! Hamilton–Jacobi / Fokker–Planck system into one scalar equation for `u`.
//! It is solved by damped Newton along a continuation in the regularization
//! of the Hamiltonian, while the ergodic constant `H̄` is fixed by bisection
//! on the mass `∫ e^{-u} = 1`.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod hamiltonian;
pub mod io;
mod linalg;
pub mod problem;
pub mod solver;

pub use diagnostics::{
    caccioppoli_check, campanato_norm, convergence_study, derivative_equation_fields,
    fit_holder_exponent, fp_residual, hj_residual, holder_seminorm, max_principle_check,
    monotonicity_gap, morrey_norm, regularity_report, uniqueness_probe, verify_solution,
    BallSampler, ConvergenceRow, MaxPrincipleReport, Order, RegularityReport, VerificationReport,
};
pub use error::{Error, Result};
pub use grid::{make_grid, MatrixField, ScalarField, SymMatrix, TorusGrid, VectorField};
pub use hamiltonian::{dh_eps_dp, h_eps, EpsSchedule};
pub use io::{parse_config, read_fields, write_fields, RunConfig, RunSummary};
pub use linalg::LINEAR_REL_TOL;
pub use problem::{
    builtin_problem, validate_coupling, validate_ellipticity, CouplingSpec, ExactSolution,
    MFGProblem, ProblemParams, BUILTIN_NAMES,
};
pub use solver::{
    bracket_hbar, continuation_solve, hopf_cole, linf_bound_k0, mass_functional, mass_sweep,
    normalize_hbar, solve_mfg, solve_scalar, HopfColeSolver, MFGSolution, NewtonOptions,
    SolverConfig,
};
