use std::path::PathBuf;

use num_complex::Complex64;
use robust_dde::manifolds::{
    continue_manifold, seed_from_spectrum, solve_augmented, CriticalKind, CriticalPoint,
};
use robust_dde::normal_vector::solve_normal_vector;
use robust_dde::robust::{
    corner_start, seed_by_ray, solve, verify_vertices, Mode, RobustProblem, UncertaintyBox,
    VertexReport,
};
use robust_dde::sim::{perturb, simulate, History};
use robust_dde::spectrum::{compute_spectrum_with, SpectrumOptions};
use robust_dde::system::{
    eval_delays, nominal, solve_steady_state, DdeSystem, SteadyState, Vector,
};
use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::model::Model;
use crate::output::{cols, num, Output};

/// Resolved analysis settings with names turned into indices.
struct Ctx<'a> {
    cfg: &'a RunConfig,
    model: &'a Model,
    hopf: bool,
    ray: usize,
    plane: (usize, usize),
    spectrum: SpectrumOptions,
}

impl Ctx<'_> {
    fn sys(&self) -> &dyn DdeSystem {
        self.model.sys()
    }

    fn kind(&self) -> CriticalKind {
        CriticalKind::for_sigma(self.hopf, self.cfg.analysis.sigma)
    }

    fn steady(&self) -> Result<SteadyState, CliError> {
        let alpha = nominal(self.sys());
        let guess = self.model.steady_guess(alpha.as_slice());
        Ok(solve_steady_state(
            self.sys(),
            guess.as_slice(),
            alpha.as_slice(),
        )?)
    }

    fn problem(&self) -> Result<RobustProblem<'_>, CliError> {
        let mut p = RobustProblem::new(
            self.sys(),
            self.model.objective(),
            self.hopf,
            self.cfg.analysis.sigma,
        )?;
        p.spectrum = self.spectrum;
        Ok(p)
    }

    /// First critical point met when walking the ray from the nominal
    /// steady state, or the nominal point itself if it is already critical.
    fn critical_point(&self) -> Result<CriticalPoint, CliError> {
        let ss = self.steady()?;
        let spec = compute_spectrum_with(self.sys(), &ss, &self.spectrum)?;
        if (spec.leading.re - self.cfg.analysis.sigma).abs() < 1e-6 {
            let seed = seed_from_spectrum(self.kind(), &ss, &spec, self.cfg.analysis.sigma)?;
            return Ok(solve_augmented(self.sys(), &seed, self.ray)?);
        }
        let problem = self.problem()?;
        Ok(seed_by_ray(&problem, &ss, self.ray, self.cfg.analysis.ray_dir)?.critical)
    }

    fn named(&self, v: &Vector) -> Map<String, Value> {
        self.sys()
            .params()
            .iter()
            .zip(v.iter())
            .map(|(p, &x)| (p.name.clone(), json!(x)))
            .collect()
    }

    fn state(&self, x: &Vector) -> Map<String, Value> {
        let mut m: Map<String, Value> = self
            .model
            .state_names()
            .into_iter()
            .zip(x.iter())
            .map(|(n, &v)| (n, json!(v)))
            .collect();
        for (k, v) in self.model.observables(x.as_slice()) {
            m.insert(k.to_string(), json!(v));
        }
        m
    }

    fn rate_unit(&self) -> String {
        format!("1/({})", self.model.time_unit())
    }
}

fn complex(c: Complex64) -> Value {
    json!({ "re": c.re, "im": c.im })
}

/// Fills model-dependent defaults so the manifest records what actually ran.
fn fill_defaults(cfg: &mut RunConfig, model: &Model) -> Result<(), CliError> {
    let sys = model.sys();
    let a = &mut cfg.analysis;
    a.kind
        .get_or_insert_with(|| model.default_kind().to_string());
    a.ray.get_or_insert_with(|| model.default_ray().to_string());
    a.plane
        .get_or_insert_with(|| model.default_plane().map(String::from));
    a.perturb_components
        .get_or_insert_with(|| model.default_perturbed());
    a.perturb_offset
        .get_or_insert_with(|| model.default_offset());
    if a.dt.is_none() || a.t_end.is_none() {
        let alpha = nominal(sys);
        let taus = eval_delays(
            sys,
            model.steady_guess(alpha.as_slice()).as_slice(),
            alpha.as_slice(),
        )?;
        let positive = taus.iter().copied().filter(|&t| t > 0.0);
        let min = positive.clone().fold(f64::INFINITY, f64::min);
        let max = positive.fold(0.0, f64::max);
        if a.dt.is_none() {
            a.dt = Some(if min.is_finite() {
                (min / 20.0).min(0.5)
            } else {
                0.5
            });
        }
        if a.t_end.is_none() {
            a.t_end = Some(if max > 0.0 { 20.0 * max } else { 100.0 });
        }
    }
    cfg.out.get_or_insert_with(|| PathBuf::from("out"));
    Ok(())
}

fn context<'a>(cfg: &'a RunConfig, model: &'a Model) -> Result<Ctx<'a>, CliError> {
    let a = &cfg.analysis;
    if !(a.sigma <= 0.0 && a.sigma.is_finite()) {
        return Err(CliError::Usage(format!(
            "sigma must be finite and <= 0, got {}",
            a.sigma
        )));
    }
    let kind_name = a.kind.as_deref().unwrap_or("hopf");
    let hopf = kind_name
        .parse::<CriticalKind>()
        .map_err(|e| CliError::Usage(e.to_string()))?
        .is_hopf();
    let ray = model.param(a.ray.as_deref().unwrap_or_default())?;
    let plane = match &a.plane {
        Some([p, q]) => (model.param(p)?, model.param(q)?),
        None => (0, 1),
    };
    if plane.0 == plane.1 {
        return Err(CliError::Usage(
            "plane needs two different parameters".into(),
        ));
    }
    if a.ray_dir == 0.0 || !a.ray_dir.is_finite() {
        return Err(CliError::Usage("ray direction must be nonzero".into()));
    }
    if let Some(&i) = a
        .perturb_components
        .iter()
        .flatten()
        .find(|&&i| i >= model.sys().n_x())
    {
        return Err(CliError::Usage(format!(
            "perturbed component {i} out of range"
        )));
    }
    if a.order < 2 {
        return Err(CliError::Usage(format!(
            "discretization order must be >= 2, got {}",
            a.order
        )));
    }
    Ok(Ctx {
        cfg,
        model,
        hopf,
        ray,
        plane,
        spectrum: SpectrumOptions {
            order: a.order,
            ..Default::default()
        },
    })
}

pub fn run(command: &str, mut cfg: RunConfig) -> Result<(), CliError> {
    let model = Model::build(&cfg)?;
    fill_defaults(&mut cfg, &model)?;
    let ctx = context(&cfg, &model)?;
    let dir = cfg.out.clone().expect("filled by defaults");
    let mut out = Output::create(&dir, cfg.hash())?;
    let result = match command {
        "steady" => steady(&ctx, &mut out),
        "eigs" => eigs(&ctx, &mut out),
        "manifold" => manifold(&ctx, &mut out),
        "normal-vector" => normal_vector(&ctx, &mut out),
        "optimize" => optimize(&ctx, &mut out),
        "verify-vertices" => vertices(&ctx, &mut out),
        "simulate" => simulate_cmd(&ctx, &mut out),
        other => Err(CliError::Usage(format!("unknown subcommand '{other}'"))),
    };
    // the manifest is written even when the computation fails
    out.finish(command, &cfg)?;
    result
}

fn steady(ctx: &Ctx, out: &mut Output) -> Result<(), CliError> {
    let ss = ctx.steady()?;
    let body = json!({
        "model": ctx.cfg.model,
        "parameters": ctx.named(&ss.alpha),
        "state": ctx.state(&ss.x),
        "residual_norm": ss.residual_norm,
    });
    out.json(
        "steady.json",
        &[("state", "model units"), ("parameters", "model units")],
        &body,
    )
}

fn eigs(ctx: &Ctx, out: &mut Output) -> Result<(), CliError> {
    let ss = ctx.steady()?;
    let spec = compute_spectrum_with(ctx.sys(), &ss, &ctx.spectrum)?;
    let rate = ctx.rate_unit();
    let columns = cols(&[("re", &rate), ("im", &rate), ("converged", "bool")]);
    let rows = spec
        .eigenvalues
        .iter()
        .map(|l| vec![num(l.re), num(l.im), spec.converged.to_string()]);
    out.csv("eigs.csv", &columns, rows)?;
    let body = json!({
        "parameters": ctx.named(&ss.alpha),
        "leading": complex(spec.leading),
        "stable": spec.leading.re < ctx.cfg.analysis.sigma,
        "sigma": ctx.cfg.analysis.sigma,
        "converged": spec.converged,
        "discretization_order": spec.discretization_order,
        "count": spec.eigenvalues.len(),
    });
    out.json("eigs.json", &[("leading", &rate), ("sigma", &rate)], &body)
}

fn critical_json(ctx: &Ctx, cp: &CriticalPoint) -> Value {
    json!({
        "kind": cp.kind,
        "sigma": cp.sigma,
        "parameters": ctx.named(&cp.alpha_c),
        "state": ctx.state(&cp.x_c),
        "omega": cp.omega(),
        "regular": cp.regular,
    })
}

fn manifold(ctx: &Ctx, out: &mut Output) -> Result<(), CliError> {
    let cp = ctx.critical_point()?;
    let a = &ctx.cfg.analysis;
    let fwd = continue_manifold(ctx.sys(), &cp, ctx.plane, a.steps, a.arc_step)?;
    let bwd = continue_manifold(ctx.sys(), &cp, ctx.plane, a.steps, -a.arc_step)?;
    let params = ctx.sys().params();
    let (pi, pj) = ctx.plane;
    let rate = ctx.rate_unit();
    let mut columns = cols(&[("index", "-")]);
    columns.push((params[pi].name.clone(), "parameter".into()));
    columns.push((params[pj].name.clone(), "parameter".into()));
    columns.push(("omega".into(), rate.clone()));
    columns.extend(
        params
            .iter()
            .map(|p| (format!("alpha.{}", p.name), "parameter".to_string())),
    );

    // the start point heads both branches; keep one copy
    let skip =
        |b: &[CriticalPoint]| usize::from(b.first().is_some_and(|p| p.alpha_c == cp.alpha_c));
    let back: Vec<(i64, &CriticalPoint)> = bwd.points[skip(&bwd.points)..]
        .iter()
        .enumerate()
        .rev()
        .map(|(k, p)| (-(k as i64) - 1, p))
        .collect();
    let ahead = fwd.points[skip(&fwd.points)..]
        .iter()
        .enumerate()
        .map(|(k, p)| (k as i64 + 1, p));
    let all: Vec<(i64, &CriticalPoint)> = back
        .into_iter()
        .chain(std::iter::once((0, &cp)))
        .chain(ahead)
        .collect();
    let rows = all.iter().map(|(k, p)| {
        let mut r = vec![
            k.to_string(),
            num(p.alpha_c[pi]),
            num(p.alpha_c[pj]),
            num(p.omega().unwrap_or(0.0)),
        ];
        r.extend(p.alpha_c.iter().map(|&v| num(v)));
        r
    });
    out.csv("manifold.csv", &columns, rows)?;
    let body = json!({
        "start": critical_json(ctx, &cp),
        "plane": [params[pi].name, params[pj].name],
        "points": all.len(),
        "forward": { "points": fwd.points.len(), "stopped": fwd.diagnostic },
        "backward": { "points": bwd.points.len(), "stopped": bwd.diagnostic },
    });
    out.json(
        "manifold.json",
        &[("omega", &rate), ("parameters", "model units")],
        &body,
    )
}

fn normal_vector(ctx: &Ctx, out: &mut Output) -> Result<(), CliError> {
    let cp = ctx.critical_point()?;
    let nv = solve_normal_vector(ctx.sys(), &cp)?;
    let body = json!({
        "critical": critical_json(ctx, &nv.critical),
        "r": ctx.named(&nv.r),
        "kappa": nv.kappa.as_slice(),
        "residual_norm": nv.residual_norm,
    });
    out.json(
        "normal_vector.json",
        &[
            ("r", "unit vector in parameters scaled by their uncertainty"),
            ("kappa", "-"),
            ("omega", &ctx.rate_unit()),
        ],
        &body,
    )
}

fn vertex_rows(
    report: &VertexReport,
    names: &[String],
) -> (Vec<(String, String)>, Vec<Vec<String>>) {
    let mut columns: Vec<(String, String)> = names
        .iter()
        .map(|n| (format!("sign.{n}"), "-".to_string()))
        .collect();
    columns.extend(cols(&[
        ("leading_re", "1/time"),
        ("leading_im", "1/time"),
        ("stable", "bool"),
        ("failure", "-"),
    ]));
    let rows = report
        .vertices
        .iter()
        .map(|v| {
            let mut r: Vec<String> = v.pattern.iter().map(|s| s.to_string()).collect();
            let (re, im) = v
                .leading
                .map_or((String::new(), String::new()), |l| (num(l.re), num(l.im)));
            r.extend([
                re,
                im,
                v.stable.to_string(),
                v.failure.clone().unwrap_or_default(),
            ]);
            r
        })
        .collect();
    (columns, rows)
}

fn vertex_summary(report: &VertexReport) -> Value {
    let worst = report
        .vertices
        .iter()
        .filter_map(|v| v.leading)
        .max_by(|a, b| a.re.total_cmp(&b.re));
    json!({
        "count": report.vertices.len(),
        "unstable": report.n_unstable,
        "indeterminate": report.n_indeterminate,
        "all_stable": report.all_stable,
        "worst_leading": worst.map(complex),
    })
}

fn optimize(ctx: &Ctx, out: &mut Output) -> Result<(), CliError> {
    let problem = ctx.problem()?;
    let ss = ctx.steady()?;
    let mode = ctx.cfg.analysis.mode;
    let res = match mode {
        Mode::Naive => solve(&problem, Mode::Naive, &ss, None)?,
        Mode::Robust => {
            let start = corner_start(&problem, &ss)?;
            let seeds = seed_by_ray(&problem, &start, ctx.ray, ctx.cfg.analysis.ray_dir)?;
            solve(
                &problem,
                Mode::Robust,
                &seeds.nominal,
                Some(&seeds.critical),
            )?
        }
    };
    let report = verify_vertices(
        ctx.sys(),
        &res.nominal,
        &problem.uncertainty,
        problem.sigma,
        &ctx.spectrum,
    );
    let rate = ctx.rate_unit();

    let names: Vec<String> = ctx.sys().params().iter().map(|p| p.name.clone()).collect();
    let (columns, rows) = vertex_rows(&report, &names);
    out.csv("vertices.csv", &columns, rows)?;
    let columns = cols(&[
        ("iteration", "-"),
        ("objective", "objective units"),
        ("violation", "-"),
        ("kkt", "-"),
        ("step", "scaled parameters"),
    ]);
    let rows = res.history.iter().map(|h| {
        vec![
            h.iteration.to_string(),
            num(h.objective),
            num(h.violation),
            num(h.kkt),
            num(h.step),
        ]
    });
    out.csv("history.csv", &columns, rows)?;

    let bounds: Map<String, Value> = problem
        .optimize
        .iter()
        .zip(&res.bounds)
        .map(|(&i, &(lo, hi))| (names[i].clone(), json!([lo, hi])))
        .collect();
    let body = json!({
        "mode": mode,
        "objective": ctx.model.objective_description(),
        "objective_value": res.objective_value,
        "parameters": ctx.named(res.alpha0()),
        "state": ctx.state(&res.nominal.x),
        "bounds": bounds,
        "leading": complex(res.leading),
        "d": res.d,
        "ball_radius": problem.uncertainty.radius(),
        "connection_residual": res.connection_residual,
        "critical": res.critical.as_ref().map(|cp| critical_json(ctx, cp)),
        "critical_leading": res.critical_leading.map(complex),
        "normal_vector": res.nv.as_ref().map(|nv| ctx.named(&nv.r)),
        "kkt_residual": res.kkt_residual,
        "iterations": res.iterations,
        "vertices": vertex_summary(&report),
        "valid": res.valid,
        "issues": res.issues,
    });
    out.json(
        "optimize.json",
        &[
            ("parameters", "model units"),
            ("leading", &rate),
            ("d", "scaled parameters"),
            ("r", "unit vector in scaled parameters"),
        ],
        &body,
    )?;
    if res.valid {
        Ok(())
    } else {
        Err(CliError::Rejected(format!(
            "optimization result failed its checks: {}",
            res.issues.join("; ")
        )))
    }
}

fn vertices(ctx: &Ctx, out: &mut Output) -> Result<(), CliError> {
    let ss = ctx.steady()?;
    let uncertainty = UncertaintyBox::from_system(ctx.sys())?;
    let report = verify_vertices(
        ctx.sys(),
        &ss,
        &uncertainty,
        ctx.cfg.analysis.sigma,
        &ctx.spectrum,
    );
    let names: Vec<String> = ctx.sys().params().iter().map(|p| p.name.clone()).collect();
    let (columns, rows) = vertex_rows(&report, &names);
    out.csv("vertices.csv", &columns, rows)?;
    let body = json!({
        "parameters": ctx.named(&ss.alpha),
        "delta": ctx.named(&uncertainty.delta),
        "sigma": ctx.cfg.analysis.sigma,
        "vertices": vertex_summary(&report),
    });
    out.json(
        "vertices.json",
        &[
            ("parameters", "model units"),
            ("worst_leading", &ctx.rate_unit()),
        ],
        &body,
    )
}

fn simulate_cmd(ctx: &Ctx, out: &mut Output) -> Result<(), CliError> {
    let a = &ctx.cfg.analysis;
    let ss = ctx.steady()?;
    let comps = a.perturb_components.clone().unwrap_or_default();
    let mut x0 = perturb(&ss, &comps, a.perturb_factor)?.at(0.0);
    for &i in &comps {
        x0[i] += a.perturb_offset.unwrap_or(0.0);
    }
    let history = History::Constant(x0);
    let dt = a.dt.expect("filled by defaults");
    let t_end = a.t_end.expect("filled by defaults");
    let tr = simulate(ctx.sys(), ss.alpha.as_slice(), history, t_end, dt)?;
    let time = ctx.model.time_unit();
    let mut columns = cols(&[("t", time)]);
    columns.extend(
        ctx.model
            .state_names()
            .into_iter()
            .map(|n| (n, "model units".to_string())),
    );
    let extra: Vec<&str> = ctx
        .model
        .observables(ss.x.as_slice())
        .iter()
        .map(|(k, _)| *k)
        .collect();
    columns.extend(
        extra
            .iter()
            .map(|k| (k.to_string(), "model units".to_string())),
    );
    let rows = tr.times.iter().zip(&tr.states).map(|(t, x)| {
        let mut r = vec![num(*t)];
        r.extend(x.iter().map(|&v| num(v)));
        r.extend(
            ctx.model
                .observables(x.as_slice())
                .into_iter()
                .map(|(_, v)| num(v)),
        );
        r
    });
    out.csv("simulate.csv", &columns, rows)?;
    let last = tr.states.last().expect("initial point");
    let body = json!({
        "parameters": ctx.named(&ss.alpha),
        "steady_state": ctx.state(&ss.x),
        "final_state": ctx.state(last),
        "dt": dt,
        "t_end": tr.t_end(),
        "blow_up": tr.blow_up,
        "max_deviation": tr.max_deviation(&ss.x, 0.0, tr.t_end()),
        "final_deviation": (last - &ss.x).amax(),
    });
    out.json(
        "simulate.json",
        &[("t_end", time), ("dt", time), ("blow_up", time)],
        &body,
    )
}
