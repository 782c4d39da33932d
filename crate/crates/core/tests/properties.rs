//! Cross-module invariants checked on random inputs and on full solves.

use std::f64::consts::PI;

use proptest::prelude::*;

use mfg_core::diagnostics::{caccioppoli_check, morrey_exponent};
use mfg_core::grid::{div_a_grad, divergence, gradient, integrate, l2_norm, linf_norm};
use mfg_core::io::fields_csv;
use mfg_core::problem::lipschitz_estimate;
use mfg_core::{
    builtin_problem, fit_holder_exponent, fp_residual, holder_seminorm,
    linf_bound_k0, make_grid, mass_functional, morrey_norm, solve_mfg, uniqueness_probe,
    BallSampler, CouplingSpec, MatrixField, ProblemParams, ScalarField, SolverConfig, TorusGrid,
    VectorField,
};

fn field(grid: TorusGrid, vals: Vec<f64>) -> ScalarField {
    ScalarField::new(grid, vals).unwrap()
}

fn random_a(grid: TorusGrid, raw: &[(f64, f64, f64)]) -> MatrixField {
    let vals = raw.iter().map(|&(xx, xy, yy)| [[xx, xy], [xy, yy]]).collect();
    MatrixField::new(grid, vals).unwrap()
}

/// Moves every value one cell forward along `axis`.
fn shift_matrix(a: &MatrixField, axis: usize) -> MatrixField {
    let g = *a.grid();
    let vals = (0..g.len())
        .map(|i| {
            let m = a.at(g.neighbor(i, axis, -1));
            [[m.xx, m.xy], [m.xy, m.yy]]
        })
        .collect();
    MatrixField::new(g, vals).unwrap()
}

/// Largest one-cell difference quotient, computed independently of the library.
fn neighbor_quotient(f: &ScalarField) -> f64 {
    let g = f.grid();
    let v = f.values();
    let mut best = 0.0f64;
    for i in 0..g.len() {
        for k in 0..g.dim() {
            best = best.max((v[g.neighbor(i, k, 1)] - v[i]).abs() / g.h());
        }
    }
    best
}

fn coeffs(len: usize) -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    proptest::collection::vec((0.7f64..1.3, -0.25f64..0.25, 0.7f64..1.3), len)
}

fn values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0f64..1.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn operators_commute_with_periodic_shift(
        u in values(100), a in coeffs(100), axis in 0usize..2, dim in 1usize..3
    ) {
        let n = 10;
        let g = make_grid(dim, n).unwrap();
        let len = g.len();
        let u = field(g, u[..len].to_vec());
        let a = random_a(g, &a[..len]);
        let axis = axis.min(dim - 1);

        let lhs = div_a_grad(&u.shifted(axis, 1), &shift_matrix(&a, axis));
        let rhs = div_a_grad(&u, &a).shifted(axis, 1);
        prop_assert_eq!(lhs.values(), rhs.values());

        let lhs = gradient(&u.shifted(axis, 1));
        let rhs = gradient(&u);
        for i in 0..len {
            prop_assert_eq!(lhs.at(g.neighbor(i, axis, 1)).to_vec(), rhs.at(i).to_vec());
        }

        let v = VectorField::new(g, (0..len * dim).map(|k| u.values()[k % len] * (k as f64).cos()).collect()).unwrap();
        let shifted_v = VectorField::new(
            g,
            (0..len).flat_map(|i| v.at(g.neighbor(i, axis, -1)).to_vec()).collect(),
        ).unwrap();
        let (lhs, rhs) = (divergence(&shifted_v), divergence(&v).shifted(axis, 1));
        prop_assert_eq!(lhs.values(), rhs.values());
    }

    #[test]
    fn diffusion_operator_is_symmetric(u in values(144), v in values(144), a in coeffs(144)) {
        let g = make_grid(2, 12).unwrap();
        let (u, v) = (field(g, u), field(g, v));
        let a = random_a(g, &a);
        let lu = div_a_grad(&u, &a);
        let lv = div_a_grad(&v, &a);
        let vlu = integrate(&v.zip_map(&lu, |x, y| x * y));
        let ulv = integrate(&u.zip_map(&lv, |x, y| x * y));
        let scale = l2_norm(&u) * l2_norm(&v);
        prop_assert!((vlu - ulv).abs() <= 1e-12 * scale.max(1.0), "{} vs {}", vlu, ulv);
    }

    #[test]
    fn fp_residual_zero_for_constants(c in -3.0f64..3.0) {
        let p = builtin_problem("anisotropic_2d", &ProblemParams::new(2, 8)).unwrap();
        let g = *p.grid();
        let u = ScalarField::constant(g, c);
        prop_assert_eq!(fp_residual(&u, &u.map(|x| (-x).exp()), &p).unwrap().linf, 0.0);
    }

    #[test]
    fn morrey_full_ball_is_lp_norm(f in values(32), p in 1.0f64..4.0) {
        let g = make_grid(1, 32).unwrap();
        let f = field(g, f);
        let s = BallSampler::new(g, vec![0], vec![0.5]).unwrap();
        let lp = (integrate(&f.map(|x| x.abs().powf(p)))).powf(1.0 / p);
        prop_assert!((morrey_norm(&f, p, 0.0, &s).unwrap() - lp).abs() <= 1e-12 * lp.max(1.0));
    }

    #[test]
    fn holder_lipschitz_consistency(f in values(64), dim in 1usize..3) {
        let n = if dim == 1 { 64 } else { 8 };
        let g = make_grid(dim, n).unwrap();
        let f = field(g, f[..g.len()].to_vec());
        let lip = lipschitz_estimate(&f);
        prop_assert!(holder_seminorm(&f, 1.0, 0, 0).unwrap() >= lip);
        prop_assert_eq!(lip, neighbor_quotient(&f));
    }

    #[test]
    fn csv_has_one_row_per_point(dim in 1usize..3, half in 4usize..9) {
        let g = make_grid(dim, 2 * half).unwrap();
        let z = ScalarField::zeros(g);
        let text = fields_csv(&z, &z.map(|_| 1.0), &z);
        prop_assert_eq!(text.lines().count(), g.len() + 1);
    }
}

#[test]
fn uniqueness_from_nonconstant_inits() {
    let cubic = CouplingSpec::named("cubic", None).unwrap();
    for (name, dim, n, coupling) in [
        ("manufactured_1d", 1, 32, CouplingSpec::linear()),
        ("anisotropic_2d", 2, 16, CouplingSpec::linear()),
        ("anisotropic_2d", 2, 16, cubic),
    ] {
        let p = builtin_problem(name, &ProblemParams::new(dim, n).with_coupling(coupling)).unwrap();
        let k0 = linf_bound_k0(&p, 0.0);
        let g = *p.grid();
        let inits = vec![
            ScalarField::from_fn(g, |x| k0 * (2.0 * PI * x[0]).cos()),
            ScalarField::from_fn(g, |x| -0.5 * k0 * (2.0 * PI * (x[0] + x[1])).sin()),
            ScalarField::constant(g, 0.3 * k0),
        ];
        let gap = uniqueness_probe(&p, &SolverConfig::default(), &inits).unwrap();
        assert!(gap <= 1e-8, "{name}: {gap}");
    }
}

#[test]
fn bisection_history_straddles_unit_mass() {
    let p = builtin_problem("anisotropic_2d", &ProblemParams::new(2, 16)).unwrap();
    let s = solve_mfg(&p, &SolverConfig::default()).unwrap();
    assert!(s.bracket.mass_low < 1.0 && s.bracket.mass_up > 1.0);
    for w in s.bisection.windows(2) {
        let (prev, next) = (&w[0], &w[1]);
        if prev.mass < 1.0 {
            assert_eq!(next.low, prev.hbar);
            assert_eq!(next.up, prev.up);
        } else {
            assert_eq!(next.up, prev.hbar);
            assert_eq!(next.low, prev.low);
        }
    }
    assert!((mass_functional(&s.u) - 1.0).abs() <= 1e-10);
    assert!(linf_norm(&s.u) <= s.k0 + 1e-6);
}

#[test]
fn caccioppoli_seam_control_blows_up() {
    let mut smooth = Vec::new();
    let mut seam = Vec::new();
    for n in [64usize, 128, 256] {
        let p = builtin_problem("manufactured_1d", &ProblemParams::new(1, n)).unwrap();
        let u = p.exact().unwrap().u.clone();
        let g = *p.grid();
        let sampler = BallSampler::dyadic(g, 1024);
        let alpha = fit_holder_exponent(&u);
        assert!(morrey_exponent(1, alpha) > 0.0);
        smooth.push(caccioppoli_check(&u, &sampler, alpha).unwrap());
        let jumped = u.zip_map(&ScalarField::from_fn(g, |x| 0.5 * x[0]), |a, b| a + b);
        seam.push(caccioppoli_check(&jumped, &sampler, alpha).unwrap());
    }
    for w in smooth.windows(2) {
        assert!((w[1] / w[0] - 1.0).abs() < 0.1, "{smooth:?}");
    }
    for w in seam.windows(2) {
        assert!(w[1] / w[0] > 2.0, "{seam:?}");
    }
}
