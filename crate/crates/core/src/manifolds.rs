//! Augmented systems for (modified) fold and Hopf points, their Newton
//! solution and pseudo-arclength continuation in parameter planes.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::linalg::{self, null_space};
use crate::normal_vector::{augmented_jacobian, Local};
use crate::spectrum::{CVector, Spectrum};
use crate::system::{deltas, DdeSystem, SteadyState, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriticalKind {
    Fold,
    ModifiedFold,
    Hopf,
    ModifiedHopf,
}

impl CriticalKind {
    pub fn is_hopf(self) -> bool {
        matches!(self, CriticalKind::Hopf | CriticalKind::ModifiedHopf)
    }

    /// Number of auxiliary unknowns for `n_d` dynamic components.
    pub fn aux_len(self, n_d: usize) -> usize {
        if self.is_hopf() {
            2 * n_d + 1
        } else {
            n_d
        }
    }

    /// Number of augmented equations (and of columns of the block matrix).
    pub fn residual_len(self, n_x: usize, n_d: usize) -> usize {
        if self.is_hopf() {
            n_x + 2 * n_d + 2
        } else {
            n_x + n_d + 1
        }
    }

    /// The kind that tracks decay rate `sigma`.
    pub fn for_sigma(hopf: bool, sigma: f64) -> Self {
        match (hopf, sigma == 0.0) {
            (true, true) => CriticalKind::Hopf,
            (true, false) => CriticalKind::ModifiedHopf,
            (false, true) => CriticalKind::Fold,
            (false, false) => CriticalKind::ModifiedFold,
        }
    }
}

impl std::str::FromStr for CriticalKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fold" => Ok(CriticalKind::Fold),
            "modified-fold" => Ok(CriticalKind::ModifiedFold),
            "hopf" => Ok(CriticalKind::Hopf),
            "modified-hopf" => Ok(CriticalKind::ModifiedHopf),
            other => Err(Error::Config(format!("unknown manifold kind '{other}'"))),
        }
    }
}

/// Eigenvector data of a critical point (dynamic coordinates).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aux {
    Fold { w: Vector },
    Hopf { a: Vector, b: Vector, omega: f64 },
}

impl Aux {
    pub fn to_vector(&self) -> Vector {
        match self {
            Aux::Fold { w } => w.clone(),
            Aux::Hopf { a, b, omega } => linalg::stack(&[a, b, &Vector::from_element(1, *omega)]),
        }
    }

    pub fn from_vector(kind: CriticalKind, v: &Vector, n_d: usize) -> Self {
        if kind.is_hopf() {
            Aux::Hopf {
                a: v.rows(0, n_d).into_owned(),
                b: v.rows(n_d, n_d).into_owned(),
                omega: v[2 * n_d],
            }
        } else {
            Aux::Fold {
                w: v.rows(0, n_d).into_owned(),
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub kind: CriticalKind,
    pub x_c: Vector,
    pub alpha_c: Vector,
    pub sigma: f64,
    pub aux: Aux,
    pub regular: bool,
}

impl CriticalPoint {
    pub fn omega(&self) -> Option<f64> {
        match &self.aux {
            Aux::Hopf { omega, .. } => Some(*omega),
            Aux::Fold { .. } => None,
        }
    }

    /// The eigenvalue this point places on the line `Re λ = σ`.
    pub fn eigenvalue(&self) -> Complex64 {
        Complex64::new(self.sigma, self.omega().unwrap_or(0.0))
    }

    /// Unknown vector `(x, aux)`.
    pub fn state_vector(&self) -> Vector {
        linalg::stack(&[&self.x_c, &self.aux.to_vector()])
    }
}

fn check_sigma(kind: CriticalKind, sigma: f64) -> Result<()> {
    if sigma > 0.0 || !sigma.is_finite() {
        return Err(Error::Config(format!(
            "decay rate must be finite and <= 0, got {sigma}"
        )));
    }
    if matches!(kind, CriticalKind::Fold | CriticalKind::Hopf) && sigma != 0.0 {
        return Err(Error::Config(format!("{kind:?} requires sigma = 0")));
    }
    Ok(())
}

/// Residual of the augmented system in the row order steady state,
/// eigenvalue equations, normalization (and phase condition for Hopf kinds).
pub fn augmented_residual(
    kind: CriticalKind,
    sys: &dyn DdeSystem,
    x_c: &Vector,
    alpha_c: &Vector,
    aux: &Aux,
    sigma: f64,
) -> Result<Vector> {
    check_sigma(kind, sigma)?;
    let loc = Local::at(sys, x_c, alpha_c)?;
    residual_from_local(kind, &loc, aux, sigma)
}

pub(crate) fn residual_from_local(
    kind: CriticalKind,
    loc: &Local,
    aux: &Aux,
    sigma: f64,
) -> Result<Vector> {
    let n_x = loc.f.len();
    let n_d = loc.n_d();
    let mut out = Vector::zeros(kind.residual_len(n_x, n_d));
    out.rows_mut(0, n_x).copy_from(&loc.f);
    match (kind.is_hopf(), aux) {
        (false, Aux::Fold { w }) => {
            let mut eig = w * sigma;
            for (k, a) in loc.a.iter().enumerate() {
                eig -= a * w * (-sigma * loc.tau[k]).exp();
            }
            out.rows_mut(n_x, n_d).copy_from(&eig);
            out[n_x + n_d] = w.norm_squared() - 1.0;
        }
        (true, Aux::Hopf { a, b, omega }) => {
            let mut re = a * sigma - b * *omega;
            let mut im = b * sigma + a * *omega;
            for (k, ak) in loc.a.iter().enumerate() {
                let (s, c) = sc(sigma, *omega, loc.tau[k]);
                re -= ak * (a * c + b * s);
                im -= ak * (b * c - a * s);
            }
            out.rows_mut(n_x, n_d).copy_from(&re);
            out.rows_mut(n_x + n_d, n_d).copy_from(&im);
            out[n_x + 2 * n_d] = a.norm_squared() + b.norm_squared() - 1.0;
            out[n_x + 2 * n_d + 1] = a.dot(b);
        }
        _ => {
            return Err(Error::Config(format!(
                "auxiliary data does not match {kind:?}"
            )));
        }
    }
    check_finite(out.as_slice(), "augmented residual")?;
    Ok(out)
}

/// `(s, c) = e^{−στ}(sin ωτ, cos ωτ)`.
pub fn sc(sigma: f64, omega: f64, tau: f64) -> (f64, f64) {
    let e = (-sigma * tau).exp();
    let (s, c) = (omega * tau).sin_cos();
    (e * s, e * c)
}

/// Critical-point guess from a steady state and an eigenpair (dynamic coordinates).
pub fn seed_from_eigenpair(
    kind: CriticalKind,
    ss: &SteadyState,
    lambda: Complex64,
    v: &CVector,
    sigma: f64,
) -> CriticalPoint {
    let aux = if kind.is_hopf() {
        let p = v.map(|c| c.re);
        let q = v.map(|c| c.im);
        let theta = 0.5 * (-2.0 * p.dot(&q)).atan2(p.norm_squared() - q.norm_squared());
        let (s, c) = theta.sin_cos();
        let mut a = &p * c - &q * s;
        let mut b = &p * s + &q * c;
        let n = (a.norm_squared() + b.norm_squared()).sqrt();
        a /= n;
        b /= n;
        let mut omega = lambda.im;
        if omega < 0.0 {
            omega = -omega;
            b = -b;
        }
        Aux::Hopf { a, b, omega }
    } else {
        let w = v.map(|c| c.re);
        let n = w.norm();
        Aux::Fold { w: w / n }
    };
    CriticalPoint {
        kind,
        x_c: ss.x.clone(),
        alpha_c: ss.alpha.clone(),
        sigma,
        aux,
        regular: false,
    }
}

/// Seed from the rightmost eigenvalue of the matching type.
pub fn seed_from_spectrum(
    kind: CriticalKind,
    ss: &SteadyState,
    spec: &Spectrum,
    sigma: f64,
) -> Result<CriticalPoint> {
    let pick = if kind.is_hopf() {
        spec.rightmost_complex(1e-8)
    } else {
        spec.rightmost_real(1e-8)
    };
    let (lambda, v) = pick.ok_or_else(|| {
        Error::NoEigenvalue(if kind.is_hopf() {
            "complex pair".into()
        } else {
            "real eigenvalue".into()
        })
    })?;
    Ok(seed_from_eigenpair(kind, ss, lambda, v, sigma))
}

#[derive(Clone, Copy, Debug)]
pub struct AugmentedOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for AugmentedOptions {
    fn default() -> Self {
        AugmentedOptions {
            max_iter: 50,
            tol: 1e-10,
        }
    }
}

/// Newton solve of the augmented system in `(x_c, aux, α_free)`, all other
/// parameters held at the seed's values.
pub fn solve_augmented(
    sys: &dyn DdeSystem,
    seed: &CriticalPoint,
    free_param: usize,
) -> Result<CriticalPoint> {
    solve_augmented_with(sys, seed, free_param, AugmentedOptions::default())
}

pub fn solve_augmented_with(
    sys: &dyn DdeSystem,
    seed: &CriticalPoint,
    free_param: usize,
    opts: AugmentedOptions,
) -> Result<CriticalPoint> {
    check_sigma(seed.kind, seed.sigma)?;
    check_finite(seed.state_vector().as_slice(), "critical point seed")?;
    if free_param >= sys.n_alpha() {
        return Err(Error::Dimension {
            what: "free parameter index",
            expected: sys.n_alpha(),
            got: free_param,
        });
    }
    let kind = seed.kind;
    let n_x = sys.n_x();
    let n_d = sys.dynamic_states().len();
    let n_aux = kind.aux_len(n_d);
    let nu = n_x + n_aux;
    let delta = deltas(sys);
    let mut cp = seed.clone();
    let mut best = f64::INFINITY;

    for _ in 0..opts.max_iter {
        let (g, jt) = augmented_jacobian(sys, &cp)?;
        let gnorm = g.amax();
        // square Jacobian in (x, aux, α_free); B rows are the transposed columns
        let cols: Vec<usize> = (0..nu).chain(std::iter::once(nu + free_param)).collect();
        let mut jac = jt.select_rows(cols.iter()).transpose();
        let last = jac.ncols() - 1;
        jac.column_mut(last).scale_mut(1.0 / delta[free_param]);
        cp.regular = linalg::inverse_condition(&jac) > 1e-8;
        if gnorm <= 1e-13 || (gnorm <= opts.tol && gnorm >= 0.5 * best) {
            break;
        }
        best = best.min(gnorm);
        let step = linalg::solve(&jac, &(-&g)).ok_or(Error::SingularJacobian {
            condition: f64::INFINITY,
        })?;
        let u = cp.state_vector();
        let mut t = 1.0;
        loop {
            let trial_u = &u + step.rows(0, nu) * t;
            let mut trial = cp.clone();
            trial.x_c = trial_u.rows(0, n_x).into_owned();
            trial.aux = Aux::from_vector(kind, &trial_u.rows(n_x, n_aux).into_owned(), n_d);
            trial.alpha_c[free_param] += step[nu] * t;
            if let Ok(gt) = residual_at(sys, &trial) {
                if gt.norm() <= (1.0 - 1e-4 * t) * g.norm() || gt.amax() <= opts.tol {
                    cp = trial;
                    break;
                }
            }
            t *= 0.5;
            if t < 2f64.powi(-20) {
                return Err(Error::NoConvergence {
                    solver: "augmented Newton (line search)",
                    iterations: opts.max_iter,
                    residual: gnorm,
                });
            }
        }
    }
    let g = residual_at(sys, &cp)?;
    if g.amax() > opts.tol {
        return Err(Error::NoConvergence {
            solver: "augmented Newton",
            iterations: opts.max_iter,
            residual: g.amax(),
        });
    }
    Ok(normalize_sign(cp))
}

pub(crate) fn residual_at(sys: &dyn DdeSystem, cp: &CriticalPoint) -> Result<Vector> {
    augmented_residual(cp.kind, sys, &cp.x_c, &cp.alpha_c, &cp.aux, cp.sigma)
}

/// Enforces ω > 0 by flipping (b, ω).
pub(crate) fn normalize_sign(mut cp: CriticalPoint) -> CriticalPoint {
    if let Aux::Hopf { b, omega, .. } = &mut cp.aux {
        if *omega < 0.0 {
            *omega = -*omega;
            *b = -b.clone();
        }
    }
    cp
}

/// Output of [`continue_manifold`].
#[derive(Clone, Debug)]
pub struct Branch {
    pub points: Vec<CriticalPoint>,
    /// Why the branch ended before `steps` points, if it did.
    pub diagnostic: Option<String>,
}

/// Pseudo-arclength continuation of a critical manifold in the plane of two
/// parameters (scaled by their half-widths). A negative `arc_step` walks
/// toward decreasing values of the first plane parameter.
pub fn continue_manifold(
    sys: &dyn DdeSystem,
    start: &CriticalPoint,
    plane: (usize, usize),
    steps: usize,
    arc_step: f64,
) -> Result<Branch> {
    let kind = start.kind;
    check_sigma(kind, start.sigma)?;
    let (pi, pj) = plane;
    if pi == pj || pi >= sys.n_alpha() || pj >= sys.n_alpha() {
        return Err(Error::Config(format!(
            "invalid parameter plane ({pi}, {pj})"
        )));
    }
    let n_x = sys.n_x();
    let n_d = sys.dynamic_states().len();
    let n_aux = kind.aux_len(n_d);
    let nu = n_x + n_aux;
    let delta = deltas(sys);
    let meta = sys.params();
    let h0 = arc_step.abs();
    let cols: Vec<usize> = (0..nu).chain([nu + pi, nu + pj]).collect();

    let pack = |cp: &CriticalPoint| {
        let mut y = Vector::zeros(nu + 2);
        y.rows_mut(0, nu).copy_from(&cp.state_vector());
        y[nu] = cp.alpha_c[pi] / delta[pi];
        y[nu + 1] = cp.alpha_c[pj] / delta[pj];
        y
    };
    let unpack = |y: &Vector, base: &CriticalPoint| {
        let mut cp = base.clone();
        cp.x_c = y.rows(0, n_x).into_owned();
        cp.aux = Aux::from_vector(kind, &y.rows(n_x, n_aux).into_owned(), n_d);
        cp.alpha_c[pi] = y[nu] * delta[pi];
        cp.alpha_c[pj] = y[nu + 1] * delta[pj];
        cp
    };
    let jac_y = |cp: &CriticalPoint| -> Result<(Vector, crate::system::Matrix)> {
        let (g, jt) = augmented_jacobian(sys, cp)?;
        Ok((g, jt.select_rows(cols.iter()).transpose()))
    };
    let in_bounds = |cp: &CriticalPoint| {
        [pi, pj]
            .iter()
            .all(|&i| cp.alpha_c[i] >= meta[i].lower && cp.alpha_c[i] <= meta[i].upper)
    };

    let mut points = vec![start.clone()];
    let mut prev_t = Vector::zeros(nu + 2);
    prev_t[nu] = arc_step.signum();
    let mut diagnostic = None;
    let mut h = h0;

    'outer: while points.len() <= steps {
        let cur = points.last().unwrap().clone();
        let (_, j) = jac_y(&cur)?;
        let (basis, _) = null_space(&j, 1e-9);
        let basis = if basis.ncols() == 0 {
            // numerically full rank: fall back to the smallest right singular vector
            let (b, sv) = null_space(&j, 1.0);
            let imin = sv
                .iter()
                .enumerate()
                .fold(0, |m, (i, v)| if *v < sv[m] { i } else { m });
            b.columns(imin, 1).into_owned()
        } else {
            basis
        };
        let mut t = &basis * (basis.transpose() * &prev_t);
        if t.norm() < 1e-12 {
            t = basis.column(0).into_owned();
        }
        let tp = (t[nu].powi(2) + t[nu + 1].powi(2)).sqrt();
        if tp < 1e-12 {
            diagnostic = Some("manifold turns orthogonal to the parameter plane".into());
            break;
        }
        let t = t / tp;
        let dir = Vector::from_column_slice(&[t[nu], t[nu + 1]]);
        let y0 = pack(&cur);

        loop {
            let mut y = &y0 + &t * h;
            let mut ok = false;
            let mut last_res = f64::INFINITY;
            for _ in 0..20 {
                let cand = unpack(&y, &cur);
                let (g, jg) = match jac_y(&cand) {
                    Ok(v) => v,
                    Err(_) => break,
                };
                let arc = dir[0] * (y[nu] - y0[nu]) + dir[1] * (y[nu + 1] - y0[nu + 1]) - h;
                let res = g.amax().max(arc.abs());
                if res <= 1e-12 || (res <= 1e-10 && res >= 0.5 * last_res) {
                    ok = true;
                    break;
                }
                last_res = res;
                let mut full = crate::system::Matrix::zeros(jg.nrows() + 1, nu + 2);
                full.view_mut((0, 0), jg.shape()).copy_from(&jg);
                full[(jg.nrows(), nu)] = dir[0];
                full[(jg.nrows(), nu + 1)] = dir[1];
                let mut rhs = Vector::zeros(jg.nrows() + 1);
                rhs.rows_mut(0, jg.nrows()).copy_from(&(-&g));
                rhs[jg.nrows()] = -arc;
                match linalg::lstsq(&full, &rhs, 1e-13) {
                    Some(dy) if dy.iter().all(|v| v.is_finite()) => y += dy,
                    _ => break,
                }
            }
            if ok {
                let raw = unpack(&y, &cur);
                if raw.omega().is_some_and(|w| w < 1e-6) {
                    diagnostic = Some("crossing frequency reached zero".into());
                    break 'outer;
                }
                let mut cp = raw;
                if !in_bounds(&cp) {
                    diagnostic = Some("reached a parameter bound".into());
                    break 'outer;
                }
                let (_, jg) = jac_y(&cp)?;
                let mut sq = crate::system::Matrix::zeros(jg.nrows() + 1, nu + 2);
                sq.view_mut((0, 0), jg.shape()).copy_from(&jg);
                sq.row_mut(jg.nrows()).copy_from(&t.transpose());
                cp.regular = linalg::inverse_condition(&sq) > 1e-8;
                prev_t = t.clone();
                points.push(cp);
                h = (h * 1.5).min(h0);
                break;
            }
            h *= 0.5;
            if h < h0 / 64.0 {
                diagnostic = Some(format!(
                    "corrector failed after step halving at point {}",
                    points.len()
                ));
                break 'outer;
            }
        }
    }
    Ok(Branch { points, diagnostic })
}

/// Scaled sensitivities `Δα_i ∂Re(λ_lead)/∂α_i` by central differences.
pub fn leading_sensitivity(sys: &dyn DdeSystem, ss: &SteadyState, order: usize) -> Result<Vector> {
    let delta = deltas(sys);
    let mut out = Vector::zeros(sys.n_alpha());
    for i in 0..sys.n_alpha() {
        let h = 1e-3;
        let mut re = [0.0; 2];
        for (slot, sgn) in [1.0, -1.0].iter().enumerate() {
            let mut alpha = ss.alpha.clone();
            alpha[i] += sgn * h * delta[i];
            let s = crate::system::solve_steady_state(sys, ss.x.as_slice(), alpha.as_slice())?;
            re[slot] = crate::spectrum::compute_spectrum(sys, &s, order)?
                .leading
                .re;
        }
        out[i] = (re[0] - re[1]) / (2.0 * h);
    }
    Ok(out)
}

/// Index of the parameter with the largest scaled sensitivity of the leading
/// eigenvalue's real part.
pub fn most_sensitive_param(sys: &dyn DdeSystem, ss: &SteadyState, order: usize) -> Result<usize> {
    let s = leading_sensitivity(sys, ss, order)?;
    Ok(s.iamax())
}
