use std::sync::Arc;

use robust_dde::models::{hayes, scalar_fold};
use robust_dde::robust::*;
use robust_dde::system::{nominal, solve_steady_state};

/// Euclidean distance from `(a, b)` to the Hopf curve `a = ω cot ω, b = ω / sin ω`.
fn distance_to_hayes_curve(a: f64, b: f64) -> f64 {
    let dist = |w: f64| {
        let (ca, cb) = (w / w.tan(), w / w.sin());
        ((ca - a).powi(2) + (cb - b).powi(2)).sqrt()
    };
    let n = 200_000;
    let mut best = (f64::INFINITY, 0.0);
    for i in 1..n {
        let w = std::f64::consts::PI * i as f64 / n as f64;
        let d = dist(w);
        if d < best.0 {
            best = (d, w);
        }
    }
    // golden-section refinement
    let (mut lo, mut hi) = (best.1 - 1e-4, best.1 + 1e-4);
    for _ in 0..100 {
        let m1 = lo + (hi - lo) * 0.382;
        let m2 = lo + (hi - lo) * 0.618;
        if dist(m1) < dist(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    dist(0.5 * (lo + hi))
}

#[test]
fn hayes_robust_keeps_ball_off_the_hopf_curve() {
    let sys = hayes(0.0, 0.5, 1.0);
    let objective: Arc<ObjectiveFn> = Arc::new(|_x, a| -a[1]);
    let problem = RobustProblem::new(&sys, objective, true, 0.0).unwrap();
    let ss = solve_steady_state(&sys, &[0.0], nominal(&sys).as_slice()).unwrap();
    let seeds = seed_by_ray(&problem, &ss, 1, 1.0).unwrap();
    assert!((seeds.critical.alpha_c[1] - std::f64::consts::FRAC_PI_2).abs() < 1e-8);

    let robust = solve(&problem, Mode::Robust, &ss, Some(&seeds.critical)).unwrap();
    assert!(robust.valid, "{:?}", robust.issues);
    let d = robust.d.unwrap();
    assert!((d - 2f64.sqrt() - 1e-6).abs() < 1e-7, "distance {d}");
    let b0 = robust.alpha0()[1];
    // the scaling is isotropic (Δa = Δb = 0.1)
    let dist = distance_to_hayes_curve(0.0, b0);
    assert!(
        (dist - 0.1 * (2f64.sqrt() + 1e-6)).abs() < 1e-7,
        "b0 {b0} dist {dist}"
    );

    let naive = solve(&problem, Mode::Naive, &ss, None).unwrap();
    assert!(naive.valid, "{:?}", naive.issues);
    assert_eq!(naive.alpha0()[1], 3.0);
    assert!(robust.objective_value >= naive.objective_value);

    let report = verify_vertices(
        &sys,
        &robust.nominal,
        &problem.uncertainty,
        0.0,
        &problem.spectrum,
    );
    assert_eq!(report.vertices.len(), 4);
    assert!(report.all_stable);
}

#[test]
fn scalar_fold_modified_manifold() {
    let sys = scalar_fold(-1.0, 1.0);
    let objective: Arc<ObjectiveFn> = Arc::new(|_x, a| -a[0]);
    let mut problem = RobustProblem::new(&sys, objective, false, -0.3).unwrap();
    problem.sigma = -0.3;
    let ss = solve_steady_state(&sys, &[-1.0], nominal(&sys).as_slice()).unwrap();
    let seeds = seed_by_ray(&problem, &ss, 0, 1.0).unwrap();
    let robust = solve(&problem, Mode::Robust, &ss, Some(&seeds.critical)).unwrap();
    assert!(robust.valid, "{:?}", robust.issues);
    let naive = solve(&problem, Mode::Naive, &ss, None).unwrap();
    assert!(naive.valid, "{:?}", naive.issues);
    assert!((naive.alpha0()[0] + 0.001).abs() < 1e-12);
    assert!(robust.objective_value > naive.objective_value);
    let report = verify_vertices(
        &sys,
        &robust.nominal,
        &problem.uncertainty,
        -0.3,
        &problem.spectrum,
    );
    assert!(report.all_stable, "{report:?}");
}
