//! End-to-end acceptance run: one PASS/FAIL line per criterion, non-zero
//! exit status if any criterion fails.

mod common;

use std::f64::consts::FRAC_PI_2;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use robust_dde::laser::{
    build_laser, intensity, negative_intensity, Laser, LaserConfig, ETA, J, TAU,
};
use robust_dde::manifolds::{
    seed_from_spectrum, solve_augmented, Aux, CriticalKind, CriticalPoint,
};
use robust_dde::models::{hayes, scalar_fold};
use robust_dde::robust::{
    corner_start, seed_by_ray, solve, verify_vertices, Mode, ObjectiveFn, RobustProblem,
    RobustResult, VertexReport,
};
use robust_dde::sim::{perturb, simulate, History};
use robust_dde::spectrum::compute_spectrum;
use robust_dde::system::{nominal, solve_steady_state, DdeSystem, SteadyState, Vector};

type Outcome = Result<String, String>;
/// Naive and robust objective values.
type Objectives = Result<(f64, f64), String>;

/// Rightmost root of `λ + e^{−λ} = 0` by Newton from the upper half plane.
fn pure_delay_root() -> Complex64 {
    let mut l = Complex64::new(0.0, 1.5);
    for _ in 0..50 {
        let e = (-l).exp();
        let step = (l + e) / (1.0 - e);
        l -= step;
        if step.norm() < 1e-15 {
            break;
        }
    }
    l
}

fn leading_of_pure_delay() -> Outcome {
    let oracle = pure_delay_root();
    // the oracle itself is pinned to seven digits
    if (oracle - Complex64::new(-0.3181315, 1.3372357)).norm() > 1e-6 {
        return Err(format!("oracle root {oracle}"));
    }
    let start = Instant::now();
    let sys = hayes(0.0, 1.0, 1.0);
    let ss =
        solve_steady_state(&sys, &[0.0], nominal(&sys).as_slice()).map_err(|e| e.to_string())?;
    let lead = compute_spectrum(&sys, &ss, 20)
        .map_err(|e| e.to_string())?
        .leading;
    let elapsed = start.elapsed();
    let err = (lead - oracle).norm();
    let detail = format!("leading {lead:.9}, error {err:.2e}, {elapsed:.2?}");
    (err <= 1e-6 && elapsed < Duration::from_secs(1))
        .then_some(detail.clone())
        .ok_or(detail)
}

fn hayes_hopf_point() -> Outcome {
    let sys = hayes(0.0, 1.2, 1.0);
    let ss =
        solve_steady_state(&sys, &[0.0], nominal(&sys).as_slice()).map_err(|e| e.to_string())?;
    let spec = compute_spectrum(&sys, &ss, 20).map_err(|e| e.to_string())?;
    let point = |kind: CriticalKind| -> Result<CriticalPoint, String> {
        let seed = seed_from_spectrum(kind, &ss, &spec, 0.0).map_err(|e| e.to_string())?;
        solve_augmented(&sys, &seed, 1).map_err(|e| e.to_string())
    };
    let plain = point(CriticalKind::Hopf)?;
    let modified = point(CriticalKind::ModifiedHopf)?;
    let omega = plain.omega().unwrap_or(f64::NAN);
    let b = plain.alpha_c[1];
    let err = (b - FRAC_PI_2).abs().max((omega - FRAC_PI_2).abs());
    let gap = (&plain.alpha_c - &modified.alpha_c)
        .amax()
        .max((&plain.x_c - &modified.x_c).amax())
        .max((modified.omega().unwrap_or(f64::NAN) - omega).abs());
    let detail = format!(
        "b {b:.12}, omega {omega:.12}, error {err:.2e}, modified at sigma 0 differs by {gap:.2e}"
    );
    (err <= 1e-8 && gap <= 1e-12)
        .then_some(detail.clone())
        .ok_or(detail)
}

fn normal_vector_orthogonality() -> Outcome {
    let start = Instant::now();
    let kinds = [
        (CriticalKind::Fold, 0.0),
        (CriticalKind::ModifiedFold, -0.3),
        (CriticalKind::Hopf, 0.0),
        (CriticalKind::ModifiedHopf, -0.3),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (kind, sigma) in kinds {
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        for seed in 0..20 {
            match common::orthogonality(seed, kind, sigma, 1e-4) {
                Ok(o) => {
                    worst = worst.max(o.worst);
                    checked += 1;
                }
                Err(e) => parts.push(format!("{kind:?} seed {seed}: {e}")),
            }
        }
        ok &= checked == 20 && worst <= 1e-6;
        parts.push(format!("{kind:?} {checked}/20 worst {worst:.1e}"));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(120);
    let detail = format!("{}, {elapsed:.1?}", parts.join(", "));
    ok.then_some(detail.clone()).ok_or(detail)
}

fn laser_blocks() -> Outcome {
    let laser = build_laser(&LaserConfig::with_points(7)).map_err(|e| e.to_string())?;
    let alpha = nominal(&laser);
    let n_d = laser.dynamic_states().len();
    let x = laser.steady_guess(alpha.as_slice());
    let x = Vector::from_iterator(
        laser.n_x(),
        x.iter()
            .enumerate()
            .map(|(i, v)| v + 0.01 * (i as f64).sin()),
    );
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for kind in [
        CriticalKind::Fold,
        CriticalKind::ModifiedFold,
        CriticalKind::Hopf,
        CriticalKind::ModifiedHopf,
    ] {
        let aux = if kind.is_hopf() {
            Aux::Hopf {
                a: Vector::from_fn(n_d, |i, _| (i as f64 + 1.0).cos()),
                b: Vector::from_fn(n_d, |i, _| (2.0 * i as f64).sin()),
                omega: 0.08,
            }
        } else {
            Aux::Fold {
                w: Vector::from_fn(n_d, |i, _| (i as f64 + 1.0).cos()),
            }
        };
        let sigma = if matches!(
            kind,
            CriticalKind::ModifiedFold | CriticalKind::ModifiedHopf
        ) {
            -0.01
        } else {
            0.0
        };
        let cp = CriticalPoint {
            kind,
            x_c: x.clone(),
            alpha_c: alpha.clone(),
            sigma,
            aux,
            regular: true,
        };
        let e = common::b_fd_error(&laser, &cp);
        worst = worst.max(e);
        parts.push(format!("{kind:?} {e:.1e}"));
    }
    let detail = parts.join(", ");
    (worst <= 1e-5).then_some(detail.clone()).ok_or(detail)
}

/// Naive and robust laser optima with their vertex checks.
struct LaserRuns {
    laser: Laser,
    /// Tightened bounds by parameter index.
    tightened: Vec<Option<(f64, f64)>>,
    naive: RobustResult,
    naive_vertices: VertexReport,
    robust: RobustResult,
    robust_vertices: VertexReport,
}

fn laser_runs() -> Result<LaserRuns, String> {
    let laser = build_laser(&LaserConfig::with_points(31)).map_err(|e| e.to_string())?;
    let (naive, naive_vertices, robust, robust_vertices, tightened) = {
        let problem = RobustProblem::new(&laser, Arc::new(negative_intensity), true, 0.0)
            .map_err(|e| e.to_string())?;
        let alpha = nominal(&laser);
        let ss = solve_steady_state(
            &laser,
            laser.steady_guess(alpha.as_slice()).as_slice(),
            alpha.as_slice(),
        )
        .map_err(|e| e.to_string())?;
        let naive = solve(&problem, Mode::Naive, &ss, None).map_err(|e| format!("naive: {e}"))?;
        let start = corner_start(&problem, &ss).map_err(|e| e.to_string())?;
        let seeds = seed_by_ray(&problem, &start, ETA, 1.0).map_err(|e| e.to_string())?;
        let robust = solve(
            &problem,
            Mode::Robust,
            &seeds.nominal,
            Some(&seeds.critical),
        )
        .map_err(|e| format!("robust: {e}"))?;
        let check = |r: &RobustResult| {
            verify_vertices(
                &laser,
                &r.nominal,
                &problem.uncertainty,
                0.0,
                &problem.spectrum,
            )
        };
        let (nv, rv) = (check(&naive), check(&robust));
        let mut tightened = vec![None; laser.n_alpha()];
        for (&i, &b) in problem
            .optimize
            .iter()
            .zip(&problem.tightened_bounds().map_err(|e| e.to_string())?)
        {
            tightened[i] = Some(b);
        }
        (naive, nv, robust, rv, tightened)
    };
    Ok(LaserRuns {
        laser,
        tightened,
        naive,
        naive_vertices,
        robust,
        robust_vertices,
    })
}

fn bound_tightening(runs: &LaserRuns) -> Outcome {
    let a = runs.robust.alpha0();
    let sqrt7 = 7f64.sqrt();
    let mut parts = Vec::new();
    let mut ok = true;
    let bound = |i: usize| runs.tightened[i].ok_or("not a decision parameter");
    // j sits on its upper bound, tau on its lower one
    for (name, idx, bound, expect) in [
        ("j", J, bound(J)?.1, 1.0265 - 0.01 * sqrt7),
        ("tau", TAU, bound(TAU)?.0, 220.0 + 10.0 * sqrt7),
    ] {
        let active = (a[idx] - bound).abs() <= 1e-6 * bound.abs().max(1.0);
        if active {
            let err = (a[idx] - expect).abs();
            ok &= err <= 1e-3;
            parts.push(format!("{name} {:.6} active, error {err:.1e}", a[idx]));
        } else {
            parts.push(format!("{name} {:.6} inactive", a[idx]));
        }
    }
    let n = runs.naive.alpha0();
    let exact = n[J] == 1.0265 && n[ETA] == 0.02 && n[TAU] == 220.0;
    ok &= exact && runs.robust.valid && runs.naive.valid;
    parts.push(format!("naive j {} eta {} tau {}", n[J], n[ETA], n[TAU]));
    let detail = parts.join(", ");
    ok.then_some(detail.clone()).ok_or(detail)
}

fn vertex_stability(runs: &LaserRuns) -> Outcome {
    let naive_lead = runs.naive.leading.re;
    let rv = &runs.robust_vertices;
    let i_naive = intensity(runs.naive.nominal.x.as_slice());
    let i_robust = intensity(runs.robust.nominal.x.as_slice());
    let reduction = 1.0 - i_robust / i_naive;
    let worst = rv
        .vertices
        .iter()
        .filter_map(|v| v.leading)
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let ok = naive_lead > 0.0
        && runs.robust.valid
        && runs.robust.leading.re < 0.0
        && rv.all_stable
        && rv.vertices.len() == 128
        && reduction > 0.0
        && reduction <= 0.1;
    let detail = format!(
        "naive leading {naive_lead:.3e} ({} of {} vertices unstable), robust leading {:.3e}, {}/{} vertices stable (worst {worst:.3e}), \
         intensity {i_naive:.5} -> {i_robust:.5} ({:.1}% lower); placeholder model constants, so the published intensities are not compared",
        runs.naive_vertices.n_unstable,
        runs.naive_vertices.vertices.len(),
        runs.robust.leading.re,
        rv.vertices.iter().filter(|v| v.stable).count(),
        rv.vertices.len(),
        100.0 * reduction
    );
    ok.then_some(detail.clone()).ok_or(detail)
}

fn simulated_decay(runs: &LaserRuns) -> Outcome {
    let laser = &runs.laser;
    let ss = &runs.robust.nominal;
    let spec = compute_spectrum(laser, ss, 20).map_err(|e| e.to_string())?;
    let (lambda, v) = spec
        .rightmost_real(1e-9)
        .ok_or("leading eigenvalue is not real")?;
    if lambda != spec.leading {
        return Err(format!("leading {} is complex", spec.leading));
    }
    // start on the leading eigendirection so the deviation follows exp(λ t)
    let mut dir = Vector::zeros(laser.n_x());
    for (k, &i) in laser.dynamic_states().iter().enumerate() {
        dir[i] = v[k].re;
    }
    let eps = 1e-6 / dir.amax();
    let (x0, lam) = (ss.x.clone(), lambda.re);
    let history = History::function(move |t| &x0 + &dir * (eps * (lam * t).exp()));
    let tau = ss.alpha[TAU];
    let tr =
        simulate(laser, ss.alpha.as_slice(), history, 6.0 * tau, 0.5).map_err(|e| e.to_string())?;
    let dev = |t: f64| (tr.at(t) - &ss.x).amax();
    let measured = dev(6.0 * tau) / dev(tau);
    let predicted = (lam * 5.0 * tau).exp();
    let rel = (measured / predicted - 1.0).abs();

    let departure = naive_departure(laser, &runs.naive.nominal)?;
    let detail = format!(
        "robust decay over 5 delays {measured:.4} vs predicted {predicted:.4} ({:.1}% off); naive deviation grows {departure:.1}x",
        100.0 * rel
    );
    (rel <= 0.2 && departure > 10.0)
        .then_some(detail.clone())
        .ok_or(detail)
}

/// Growth of the largest state deviation over five delays after scaling the
/// field by `1 + 1e−4`, relative to the initial deviation.
fn naive_departure(laser: &Laser, ss: &SteadyState) -> Result<f64, String> {
    let history = perturb(ss, &[0, 1], 1.0 + 1e-4).map_err(|e| e.to_string())?;
    let initial = (history.at(0.0) - &ss.x).amax();
    let tau = ss.alpha[TAU];
    let tr =
        simulate(laser, ss.alpha.as_slice(), history, 5.0 * tau, 0.5).map_err(|e| e.to_string())?;
    Ok(tr.max_deviation(&ss.x, 0.0, tr.t_end()) / initial)
}

fn integrator_order() -> Outcome {
    let sys = hayes(0.0, 1.0, 1.0);
    // history cos t gives x(1) = 1 − sin 1
    let exact = 1.0 - 1f64.sin();
    let err = |dt: f64| -> Result<f64, String> {
        let history = History::function(|t| Vector::from_element(1, t.cos()));
        let tr = simulate(&sys, &[0.0, 1.0], history, 1.0, dt).map_err(|e| e.to_string())?;
        Ok((tr.at(1.0)[0] - exact).abs())
    };
    let (coarse, fine) = (err(0.1)?, err(0.05)?);
    let ratio = coarse / fine;
    let detail = format!("errors {coarse:.3e}, {fine:.3e}, ratio {ratio:.2}");
    ((ratio - 16.0).abs() <= 3.0)
        .then_some(detail.clone())
        .ok_or(detail)
}

/// Objectives of one fixture, with the robust run seeded by a walk
/// along `ray`.
fn hardening_pair(
    sys: &dyn DdeSystem,
    objective: Arc<ObjectiveFn>,
    hopf: bool,
    sigma: f64,
    guess: &[f64],
    ray: usize,
) -> Objectives {
    let problem = RobustProblem::new(sys, objective, hopf, sigma).map_err(|e| e.to_string())?;
    let ss = solve_steady_state(sys, guess, nominal(sys).as_slice()).map_err(|e| e.to_string())?;
    let naive = solve(&problem, Mode::Naive, &ss, None).map_err(|e| e.to_string())?;
    let start = corner_start(&problem, &ss).map_err(|e| e.to_string())?;
    let seeds = seed_by_ray(&problem, &start, ray, 1.0).map_err(|e| e.to_string())?;
    let robust = solve(
        &problem,
        Mode::Robust,
        &seeds.nominal,
        Some(&seeds.critical),
    )
    .map_err(|e| e.to_string())?;
    if !robust.valid {
        return Err(format!("robust run invalid: {:?}", robust.issues));
    }
    Ok((naive.objective_value, robust.objective_value))
}

fn monotone_hardening(runs: &LaserRuns) -> Outcome {
    let hayes_sys = hayes(0.0, 0.5, 1.0);
    let fold = scalar_fold(-1.0, 1.0);
    let fixtures: Vec<(&str, Objectives)> = vec![
        (
            "hayes",
            hardening_pair(
                &hayes_sys,
                Arc::new(|_: &[f64], a: &[f64]| -a[1]),
                true,
                0.0,
                &[0.0],
                1,
            ),
        ),
        (
            "scalar fold",
            hardening_pair(
                &fold,
                Arc::new(|_: &[f64], a: &[f64]| -a[0]),
                false,
                0.0,
                &[-1.0],
                0,
            ),
        ),
        (
            "scalar fold, sigma -0.3",
            hardening_pair(
                &fold,
                Arc::new(|_: &[f64], a: &[f64]| -a[0]),
                false,
                -0.3,
                &[-1.0],
                0,
            ),
        ),
        (
            "laser",
            Ok((runs.naive.objective_value, runs.robust.objective_value)),
        ),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, r) in fixtures {
        match r {
            Ok((naive, robust)) => {
                ok &= robust >= naive;
                parts.push(format!("{name} {naive:.6} <= {robust:.6}"));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{name}: {e}"));
            }
        }
    }
    let detail = parts.join(", ");
    ok.then_some(detail.clone()).ok_or(detail)
}

fn report(failed: &mut usize, n: usize, name: &str, outcome: Outcome) {
    match outcome {
        Ok(d) => println!("PASS {n} {name}: {d}"),
        Err(d) => {
            *failed += 1;
            println!("FAIL {n} {name}: {d}");
        }
    }
}

fn main() -> ExitCode {
    let mut failed = 0;
    report(
        &mut failed,
        1,
        "pure-delay leading eigenvalue",
        leading_of_pure_delay(),
    );
    report(
        &mut failed,
        2,
        "hopf point of the delayed-feedback model",
        hayes_hopf_point(),
    );
    report(
        &mut failed,
        3,
        "normal vectors orthogonal to manifolds",
        normal_vector_orthogonality(),
    );
    report(
        &mut failed,
        4,
        "laser block matrix against finite differences",
        laser_blocks(),
    );
    match laser_runs() {
        Ok(runs) => {
            report(
                &mut failed,
                5,
                "tightened bounds at the laser optima",
                bound_tightening(&runs),
            );
            report(
                &mut failed,
                6,
                "laser vertex stability and intensity",
                vertex_stability(&runs),
            );
            report(
                &mut failed,
                7,
                "simulated decay and departure",
                simulated_decay(&runs),
            );
            report(&mut failed, 8, "integrator order", integrator_order());
            report(
                &mut failed,
                9,
                "robust objective never beats naive",
                monotone_hardening(&runs),
            );
        }
        Err(e) => {
            for (n, name) in [
                (5, "tightened bounds at the laser optima"),
                (6, "laser vertex stability and intensity"),
                (7, "simulated decay and departure"),
            ] {
                report(
                    &mut failed,
                    n,
                    name,
                    Err(format!("laser optimization failed: {e}")),
                );
            }
            report(&mut failed, 8, "integrator order", integrator_order());
            report(
                &mut failed,
                9,
                "robust objective never beats naive",
                Err(format!("laser optimization failed: {e}")),
            );
        }
    }
    if failed == 0 {
        println!("all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
