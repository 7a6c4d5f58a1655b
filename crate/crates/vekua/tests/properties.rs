use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use vekua::expr::parse;
use vekua::fredholm::{solve_main, ProblemSpec};
use vekua::mesh::{build_boundary_grid, build_disk_mesh, build_disk_mesh_about, DiskMesh};
use vekua::operators::CoefficientPair;
use vekua::rh::{solve_rh, RhProblem};
use vekua::Complex64 as C;

const ORIGIN: C = C::new(0.0, 0.0);

fn small_mesh() -> Arc<DiskMesh> {
    Arc::new(build_disk_mesh(1.0, ORIGIN, 8, 16, 2.0).unwrap())
}

fn max_diff(a: &[C], b: &[C]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn coef() -> impl Strategy<Value = f64> {
    (-20i32..=20).prop_map(|k| k as f64 / 10.0)
}

/// Polynomial in `z` and `zbar` with a few small terms, as source text.
fn poly() -> impl Strategy<Value = String> {
    prop::collection::vec((coef(), coef(), 0u32..3, 0u32..3), 1..4).prop_map(|terms| {
        terms
            .iter()
            .map(|(re, im, p, q)| format!("({re}+{im}i)*z^{p}*zbar^{q}"))
            .collect::<Vec<_>>()
            .join(" + ")
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mesh_weights_cover_the_disk(r in 0.3f64..4.0, n_r in 3usize..20, n_t in 4usize..40, grading in 1.0f64..3.0,
                                   cx in -1.0f64..1.0, cy in -1.0f64..1.0) {
        let c = C::new(cx, cy);
        let m = build_disk_mesh_about(c, r, c, n_r, n_t, grading).unwrap();
        let total: f64 = m.weights.iter().sum();
        prop_assert!((total - PI * r * r).abs() <= 1e-12 * PI * r * r);
        prop_assert!(m.nodes.iter().all(|z| (z - c).norm() < r));
        prop_assert!(m.breaks.windows(2).all(|b| b[0] < b[1]));
    }

    #[test]
    fn dbar_matches_central_differences(text in poly(), x in -0.8f64..0.8, y in -0.8f64..0.8) {
        let e = parse(&text).unwrap();
        let z = C::new(x, y);
        let h = 1e-5;
        let fx = (e.eval(z + h, ORIGIN).unwrap() - e.eval(z - h, ORIGIN).unwrap()) / (2.0 * h);
        let ih = C::new(0.0, h);
        let fy = (e.eval(z + ih, ORIGIN).unwrap() - e.eval(z - ih, ORIGIN).unwrap()) / (2.0 * h);
        let want = (fx + C::new(0.0, 1.0) * fy) * 0.5;
        let got = e.dbar().eval(z, ORIGIN).unwrap();
        prop_assert!((got - want).norm() <= 1e-6 * (1.0 + want.norm()), "{text}: {got} vs {want}");
    }

    #[test]
    fn printed_expressions_reparse(text in poly()) {
        let e = parse(&text).unwrap();
        let again = parse(&e.to_string()).unwrap();
        prop_assert_eq!(e.to_string(), again.to_string());
        let z = C::new(0.3, -0.4);
        prop_assert!((e.eval(z, ORIGIN).unwrap() - again.eval(z, ORIGIN).unwrap()).norm() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn solution_map_is_real_linear(p in coef(), q in coef(), f1 in poly(), f2 in poly()) {
        let m = small_mesh();
        let coeffs = CoefficientPair::from_exprs(&m, parse("0.3+0.1*re(z)").unwrap(), parse("0.2i").unwrap()).unwrap();
        let solve = |f: &str, phi: &str| {
            let spec = ProblemSpec::new(m.clone(), coeffs.clone()).with_f_expr(parse(f).unwrap()).unwrap().with_phi(parse(phi).unwrap());
            solve_main(&spec).unwrap().values
        };
        let a = solve(&f1, "1");
        let b = solve(&f2, "z");
        let ab = solve(&format!("{p}*({f1}) + {q}*({f2})"), &format!("{p} + {q}*z"));
        let comb: Vec<C> = a.iter().zip(&b).map(|(x, y)| x * p + y * q).collect();
        let scale = comb.iter().map(|v| v.norm()).fold(1.0, f64::max);
        prop_assert!(max_diff(&ab, &comb) <= 1e-10 * scale);
    }

    #[test]
    fn repeated_solves_are_bitwise_identical(f in poly()) {
        let m = small_mesh();
        let coeffs = CoefficientPair::from_exprs(&m, parse("0.4").unwrap(), parse("0.1-0.2i").unwrap()).unwrap();
        let spec = ProblemSpec::new(m.clone(), coeffs).with_f_expr(parse(&f).unwrap()).unwrap().with_phi(parse("1").unwrap());
        let a = solve_main(&spec).unwrap().values;
        let b = solve_main(&spec).unwrap().values;
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits()));
    }

    #[test]
    fn rh_free_parameters_enter_affinely(c in prop::collection::vec(coef(), 3)) {
        let m = small_mesh();
        let grid = build_boundary_grid(ORIGIN, 1.0, 256).unwrap();
        let coeffs = CoefficientPair::from_exprs(&m, parse("0.2").unwrap(), parse("0.1i").unwrap()).unwrap();
        let g = RhProblem::g_from_expr(&grid, &parse("re(z^3)").unwrap()).unwrap();
        let base = RhProblem::new(2, m.clone(), grid.clone(), g.clone(), coeffs.clone()).unwrap();
        let s0 = solve_rh(&base).unwrap();
        let mut with = base.clone();
        with.free_params = c.clone();
        let s1 = solve_rh(&with).unwrap();
        let want: Vec<C> = (0..m.len())
            .map(|j| s0.particular.values[j] + (0..3).map(|i| s0.homogeneous_basis[i].values[j] * c[i]).sum::<C>())
            .collect();
        let scale = want.iter().map(|v| v.norm()).fold(1.0, f64::max);
        prop_assert!(max_diff(&s1.particular.values, &want) <= 1e-10 * scale);
    }

    #[test]
    fn zero_index_defect_is_the_mean(c in coef()) {
        // g = c + cos(theta) with zero coefficients: solvable exactly when c = 0.
        let m = small_mesh();
        let grid = build_boundary_grid(ORIGIN, 1.0, 256).unwrap();
        let g = RhProblem::g_from_expr(&grid, &parse(&format!("{c} + re(z)")).unwrap()).unwrap();
        let s = solve_rh(&RhProblem::new(0, m.clone(), grid, g, CoefficientPair::zero(&m)).unwrap()).unwrap();
        prop_assert!((s.defects.real[0].abs() - c.abs()).abs() <= 1e-12);
        prop_assert_eq!(s.solvable, c == 0.0);
    }
}
