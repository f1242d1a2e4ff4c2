mod common;

use common::b_fd_error;
use robust_dde::laser::{build_laser, LaserConfig, ETA, J, TAU};
use robust_dde::manifolds::*;
use robust_dde::models::{hayes, scalar_fold};
use robust_dde::normal_vector::solve_normal_vector;
use robust_dde::spectrum::compute_spectrum;
use robust_dde::system::{deltas, nominal, solve_steady_state, DdeSystem, Vector};
use std::f64::consts::FRAC_PI_2;

/// Hopf curve of `ẋ = a x − b x(t−1)` parametrized by the crossing frequency.
fn hayes_curve(omega: f64) -> (f64, f64) {
    (omega / omega.tan(), omega / omega.sin())
}

fn hayes_hopf(a: f64, b: f64) -> (robust_dde::FnSystem, CriticalPoint) {
    let sys = hayes(a, b, 1.0);
    let alpha = nominal(&sys);
    let ss = solve_steady_state(&sys, &[0.0], alpha.as_slice()).unwrap();
    let spec = compute_spectrum(&sys, &ss, 20).unwrap();
    let seed = seed_from_spectrum(CriticalKind::Hopf, &ss, &spec, 0.0).unwrap();
    let cp = solve_augmented(&sys, &seed, 1).unwrap();
    (sys, cp)
}

#[test]
fn hayes_hopf_lies_on_analytic_curve() {
    let (_, cp) = hayes_hopf(0.0, 1.2);
    let omega = cp.omega().unwrap();
    assert!((omega - FRAC_PI_2).abs() < 1e-9);
    assert!((cp.alpha_c[1] - FRAC_PI_2).abs() < 1e-9);
    assert!(cp.regular);

    let (_, cp) = hayes_hopf(0.5, 1.2);
    let (a, b) = hayes_curve(cp.omega().unwrap());
    assert!((a - 0.5).abs() < 1e-9 && (b - cp.alpha_c[1]).abs() < 1e-9);
}

#[test]
fn hayes_normal_matches_curve_geometry() {
    for a0 in [-0.5, 0.0, 0.5] {
        let (sys, cp) = hayes_hopf(a0, 1.2);
        let nv = solve_normal_vector(&sys, &cp).unwrap();
        let w = cp.omega().unwrap();
        let h = 1e-6;
        let (a1, b1) = hayes_curve(w + h);
        let (a2, b2) = hayes_curve(w - h);
        let d = deltas(&sys);
        let t = Vector::from_column_slice(&[(a1 - a2) / d[0], (b1 - b2) / d[1]]).normalize();
        assert!(
            nv.r.dot(&t).abs() < 1e-6,
            "normal not orthogonal to the curve"
        );
        // larger feedback gain destabilizes
        assert!(nv.r[1] > 0.0);
        assert!(nv.residual_norm < 1e-9);
    }
}

#[test]
fn hopf_continuation_tracks_the_curve() {
    let (sys, cp) = hayes_hopf(0.0, 1.2);
    let down = continue_manifold(&sys, &cp, (0, 1), 15, -2.0).unwrap();
    // b reaches its upper bound of 3 before 15 steps
    assert!(down.points.len() > 8, "{:?}", down.diagnostic);
    assert!(down.points.iter().all(|p| p.alpha_c[1] <= 3.0));
    assert!(down
        .points
        .windows(2)
        .all(|w| w[1].alpha_c[0] < w[0].alpha_c[0]));
    // toward larger a the frequency vanishes at (1, 1)
    let up = continue_manifold(&sys, &cp, (0, 1), 40, 2.0).unwrap();
    assert!(up.diagnostic.is_some());
    assert!(up.points.iter().all(|p| p.alpha_c[0] < 1.0));
    for p in down.points.iter().chain(&up.points) {
        let (a, b) = hayes_curve(p.omega().unwrap());
        assert!(
            (a - p.alpha_c[0]).abs() < 1e-8 && (b - p.alpha_c[1]).abs() < 1e-8,
            "{a} {b} {} {}",
            p.alpha_c,
            p.omega().unwrap()
        );
    }
}

#[test]
fn scalar_fold_is_found_at_zero() {
    let sys = scalar_fold(-0.04, 1.0);
    let alpha = nominal(&sys);
    let ss = solve_steady_state(&sys, &[-0.2], alpha.as_slice()).unwrap();
    let spec = compute_spectrum(&sys, &ss, 20).unwrap();
    let seed = seed_from_spectrum(CriticalKind::Fold, &ss, &spec, 0.0).unwrap();
    let cp = solve_augmented(&sys, &seed, 0).unwrap();
    assert!(cp.alpha_c[0].abs() < 1e-9 && cp.x_c[0].abs() < 1e-5);
    let nv = solve_normal_vector(&sys, &cp).unwrap();
    // no steady state for α1 > 0
    assert!((nv.r[0] - 1.0).abs() < 1e-9);
}

#[test]
fn modified_fold_tracks_decay_rate() {
    // λ = 2x + α2(e^{−λ} − 1) = σ with x = −√(−α1)
    let sigma = -0.3;
    let sys = scalar_fold(-0.2, 1.0);
    let alpha = nominal(&sys);
    let ss = solve_steady_state(&sys, &[-0.4], alpha.as_slice()).unwrap();
    let spec = compute_spectrum(&sys, &ss, 20).unwrap();
    let seed = seed_from_spectrum(CriticalKind::ModifiedFold, &ss, &spec, sigma).unwrap();
    let cp = solve_augmented(&sys, &seed, 0).unwrap();
    let x = cp.x_c[0];
    let expect = 2.0 * x + ((-sigma).exp() - 1.0);
    assert!((expect - sigma).abs() < 1e-9);
    assert!((x * x + cp.alpha_c[0]).abs() < 1e-9);
    let nv = solve_normal_vector(&sys, &cp).unwrap();
    // raising α1 moves x toward the fold and the eigenvalue to the right
    assert!(nv.r[0] > 0.0);
}

#[test]
fn laser_blocks_match_finite_differences() {
    let laser = build_laser(&LaserConfig::with_points(7)).unwrap();
    let alpha = nominal(&laser);
    let n_x = laser.n_x();
    let n_d = laser.dynamic_states().len();
    let x = laser.steady_guess(alpha.as_slice());
    let x = Vector::from_iterator(
        n_x,
        x.iter()
            .enumerate()
            .map(|(i, v)| v + 0.01 * (i as f64).sin()),
    );
    let fold = CriticalPoint {
        kind: CriticalKind::ModifiedFold,
        x_c: x.clone(),
        alpha_c: alpha.clone(),
        sigma: -0.01,
        aux: Aux::Fold {
            w: Vector::from_fn(n_d, |i, _| (i as f64 + 1.0).cos()),
        },
        regular: true,
    };
    let e = b_fd_error(&laser, &fold);
    assert!(e < 1e-5, "fold {e}");
    let hopf = CriticalPoint {
        kind: CriticalKind::ModifiedHopf,
        x_c: x,
        alpha_c: alpha,
        sigma: -0.01,
        aux: Aux::Hopf {
            a: Vector::from_fn(n_d, |i, _| (i as f64 + 1.0).cos()),
            b: Vector::from_fn(n_d, |i, _| (2.0 * i as f64).sin()),
            omega: 0.08,
        },
        regular: true,
    };
    let e = b_fd_error(&laser, &hopf);
    assert!(e < 1e-5, "hopf {e}");
}

#[test]
fn laser_hopf_in_feedback_strength() {
    let laser = build_laser(&LaserConfig::with_points(7)).unwrap();
    let mut alpha = nominal(&laser);
    alpha[J] = 1.0;
    alpha[TAU] = 246.46;
    // scan feedback strength until the leading pair crosses
    let mut prev: Option<(f64, robust_dde::SteadyState, f64)> = None;
    let mut found = None;
    for k in 0..40 {
        alpha[ETA] = 2e-4 * 1.25f64.powi(k);
        let ss = solve_steady_state(
            &laser,
            laser.steady_guess(alpha.as_slice()).as_slice(),
            alpha.as_slice(),
        )
        .unwrap();
        let re = compute_spectrum(&laser, &ss, 20).unwrap().leading.re;
        if let Some((pre, pss, _)) = &prev {
            if *pre < 0.0 && re >= 0.0 {
                found = Some(pss.clone());
                break;
            }
        }
        prev = Some((re, ss, alpha[ETA]));
    }
    let ss = found.expect("no crossing in scanned range");
    let spec = compute_spectrum(&laser, &ss, 20).unwrap();
    let seed = seed_from_spectrum(CriticalKind::Hopf, &ss, &spec, 0.0).unwrap();
    let cp = solve_augmented(&laser, &seed, ETA).unwrap();
    let ss_c = solve_steady_state(&laser, cp.x_c.as_slice(), cp.alpha_c.as_slice()).unwrap();
    let lead = compute_spectrum(&laser, &ss_c, 20).unwrap().leading;
    assert!(lead.re.abs() < 1e-7, "{lead}");
    assert!((lead.im.abs() - cp.omega().unwrap()).abs() < 1e-7);
    let nv = solve_normal_vector(&laser, &cp).unwrap();
    assert!(nv.residual_norm < 1e-8);
    assert!(nv.r[ETA] > 0.0);
}
