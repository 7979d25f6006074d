use std::f64::consts::PI;

use deltasl::measure::{bump_family, mde_solve, weakstar_convergence_study, write_study_csv, AtomicMeasure};
use deltasl::shooting::shoot_left;
use deltasl::{CoefficientFunction, DirichletProblem, Grid};
use proptest::prelude::*;

fn grid() -> Grid {
    Grid::uniform(2001).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(5))]

    #[test]
    fn mde_reproduces_shooting(t in 0.05f64..0.95, r in 0.0f64..2.0, lambda in -20.0f64..200.0) {
        let g = grid();
        let q = CoefficientFunction::sample(&g, |x| 5.0 * (2.0 * PI * x).cos() + 3.0 * x).unwrap();
        let w = CoefficientFunction::sample(&g, |x| 1.0 + x * x).unwrap();
        let p = DirichletProblem::unperturbed(q.clone(), w.clone()).unwrap().with_interaction(t, r).unwrap();
        let mu = AtomicMeasure::new(q, vec![(t, -r)]).unwrap();
        let a = mde_solve(&mu, lambda, &w, 0.0, 1.0).unwrap();
        let b = shoot_left(&p, lambda).unwrap();
        let scale = b.max_abs();
        for (x, y) in a.y.iter().zip(&b.y) {
            prop_assert!((x - y).abs() <= 1e-11 * scale);
        }
    }

    #[test]
    fn jump_law_at_every_atom(
        t1 in 0.05f64..0.45, t2 in 0.55f64..0.95,
        m1 in -3.0f64..3.0, m2 in -3.0f64..3.0,
        y0 in -1.0f64..1.0, z0 in -1.0f64..1.0,
    ) {
        let g = grid();
        let mu = AtomicMeasure::new(
            CoefficientFunction::sample(&g, |x| x).unwrap(),
            vec![(t2, m2), (t1, m1)],
        ).unwrap();
        let w = CoefficientFunction::constant(&g, 1.0).unwrap();
        let s = mde_solve(&mu, 7.0, &w, y0, z0).unwrap();
        for (k, &(_, m)) in s.knots.iter().zip(mu.atoms()) {
            prop_assert!((k.yprime_plus - k.yprime_minus - m * k.y).abs() <= 1e-12);
        }
        prop_assert!(s.integral_residual(&mu, &w, y0, z0) <= 1e-9);
    }
}

#[test]
fn study_examples() {
    let g = grid();
    let q = CoefficientFunction::constant(&g, 0.0).unwrap();
    let w = CoefficientFunction::constant(&g, 1.0).unwrap();
    let rows = weakstar_convergence_study(&q, &w, 0.5, 0.1, &[4, 8, 16, 32, 64]).unwrap();
    for row in &rows {
        assert!(row.lambda_n <= PI * PI);
    }
    for pair in rows.windows(2) {
        assert!(pair[1].gap <= pair[0].gap);
    }
    let mut buf = Vec::new();
    write_study_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("n,lambda_n,gap\n4,"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn bump_first_moment_tends_to_point_value() {
    let g = grid();
    let errs: Vec<f64> = [2, 4, 8]
        .iter()
        .map(|&n| {
            let b = bump_family(0.3, n, &g).unwrap();
            let f: Vec<f64> = g.nodes().iter().zip(b.values()).map(|(x, v)| x * x * v).collect();
            let m: f64 = f.windows(2).map(|p| 0.5 * g.spacing() * (p[0] + p[1])).sum();
            (m - 0.09).abs()
        })
        .collect();
    // O(1/n²): halving the width divides the error by about 4.
    assert!(errs[1] < errs[0] / 3.0 && errs[2] < errs[1] / 3.0, "{errs:?}");
}
