//! Line-search SQP for smooth problems
//!
//! ```text
//! min f(z)  s.t.  c(z) = 0,  h(z) ≥ 0,  lo ≤ z ≤ hi
//! ```
//!
//! Inequalities become equalities `h(z) − s = 0` with slacks `s ≥ 0`. The
//! Hessian of the Lagrangian is a damped BFGS approximation; steps are
//! globalized with an ℓ1 merit function and a second-order correction.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::system::{fd_step, Matrix, Vector};

/// A nonlinear program. Derivatives default to central differences.
pub trait Nlp {
    fn n(&self) -> usize;

    /// Simple bounds; infinite entries mean unbounded.
    fn bounds(&self) -> (Vector, Vector);

    fn objective(&self, z: &Vector) -> Result<f64>;

    fn objective_gradient(&self, z: &Vector) -> Result<Vector> {
        let mut g = Vector::zeros(z.len());
        for i in 0..z.len() {
            let h = fd_step(z[i]);
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[i] += h;
            zm[i] -= h;
            g[i] = (self.objective(&zp)? - self.objective(&zm)?) / (2.0 * h);
        }
        Ok(g)
    }

    fn equalities(&self, z: &Vector) -> Result<Vector>;

    fn equality_jacobian(&self, z: &Vector) -> Result<Matrix> {
        fd_jacobian(|v| self.equalities(v), z)
    }

    /// Constraints required to be nonnegative.
    fn inequalities(&self, _z: &Vector) -> Result<Vector> {
        Ok(Vector::zeros(0))
    }

    fn inequality_jacobian(&self, z: &Vector) -> Result<Matrix> {
        fd_jacobian(|v| self.inequalities(v), z)
    }
}

/// Central-difference Jacobian of a vector function.
pub fn fd_jacobian(f: impl Fn(&Vector) -> Result<Vector>, z: &Vector) -> Result<Matrix> {
    let m = f(z)?.len();
    let mut jac = Matrix::zeros(m, z.len());
    for i in 0..z.len() {
        let h = fd_step(z[i]);
        let (mut zp, mut zm) = (z.clone(), z.clone());
        zp[i] += h;
        zm[i] -= h;
        jac.set_column(i, &((f(&zp)? - f(&zm)?) / (2.0 * h)));
    }
    Ok(jac)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SqpOptions {
    pub max_iter: usize,
    pub kkt_tol: f64,
    /// Equality violation accepted before the first SQP step.
    pub feasibility_tol: f64,
    pub restoration_iter: usize,
    /// Initial cap on the largest step component; grows after full steps.
    pub initial_radius: f64,
}

impl Default for SqpOptions {
    fn default() -> Self {
        SqpOptions {
            max_iter: 200,
            kkt_tol: 1e-7,
            feasibility_tol: 1e-4,
            restoration_iter: 40,
            initial_radius: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SqpIterate {
    pub iteration: usize,
    pub objective: f64,
    pub violation: f64,
    pub kkt: f64,
    pub step: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SqpResult {
    pub z: Vector,
    pub objective: f64,
    pub kkt_residual: f64,
    pub violation: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Multipliers of the equalities followed by those of the inequalities.
    pub multipliers: Vector,
    pub history: Vec<SqpIterate>,
}

/// The problem with slack variables appended: `z̃ = (z, s)`.
struct Slacked<'a> {
    nlp: &'a dyn Nlp,
    n: usize,
    m_eq: usize,
    m_in: usize,
    lo: Vector,
    hi: Vector,
}

impl<'a> Slacked<'a> {
    fn new(nlp: &'a dyn Nlp, z0: &Vector) -> Result<(Self, Vector)> {
        let n = nlp.n();
        let (lo0, hi0) = nlp.bounds();
        if z0.len() != n || lo0.len() != n || hi0.len() != n {
            return Err(Error::Dimension {
                what: "NLP variables",
                expected: n,
                got: z0.len(),
            });
        }
        if let Some(i) = (0..n).find(|&i| lo0[i] > hi0[i]) {
            return Err(Error::Infeasible(format!("bounds of variable {i} cross")));
        }
        let m_eq = nlp.equalities(z0)?.len();
        let h = nlp.inequalities(z0)?;
        let m_in = h.len();
        let mut lo = Vector::from_element(n + m_in, 0.0);
        let mut hi = Vector::from_element(n + m_in, f64::INFINITY);
        lo.rows_mut(0, n).copy_from(&lo0);
        hi.rows_mut(0, n).copy_from(&hi0);
        let mut z = Vector::zeros(n + m_in);
        z.rows_mut(0, n)
            .copy_from(&z0.zip_map(&lo0, f64::max).zip_map(&hi0, f64::min));
        z.rows_mut(n, m_in).copy_from(&h.map(|v| v.max(0.0)));
        Ok((
            Slacked {
                nlp,
                n,
                m_eq,
                m_in,
                lo,
                hi,
            },
            z,
        ))
    }

    fn split<'v>(&self, z: &'v Vector) -> (Vector, nalgebra::DVectorView<'v, f64>) {
        (z.rows(0, self.n).into_owned(), z.rows(self.n, self.m_in))
    }

    fn objective(&self, z: &Vector) -> Result<f64> {
        self.nlp.objective(&self.split(z).0)
    }

    fn gradient(&self, z: &Vector) -> Result<Vector> {
        let g = self.nlp.objective_gradient(&self.split(z).0)?;
        let mut out = Vector::zeros(z.len());
        out.rows_mut(0, self.n).copy_from(&g);
        Ok(out)
    }

    fn constraints(&self, z: &Vector) -> Result<Vector> {
        let (x, s) = self.split(z);
        let mut c = Vector::zeros(self.m_eq + self.m_in);
        c.rows_mut(0, self.m_eq)
            .copy_from(&self.nlp.equalities(&x)?);
        if self.m_in > 0 {
            c.rows_mut(self.m_eq, self.m_in)
                .copy_from(&(self.nlp.inequalities(&x)? - s));
        }
        Ok(c)
    }

    fn jacobian(&self, z: &Vector) -> Result<Matrix> {
        let x = self.split(z).0;
        let mut j = Matrix::zeros(self.m_eq + self.m_in, z.len());
        j.view_mut((0, 0), (self.m_eq, self.n))
            .copy_from(&self.nlp.equality_jacobian(&x)?);
        if self.m_in > 0 {
            j.view_mut((self.m_eq, 0), (self.m_in, self.n))
                .copy_from(&self.nlp.inequality_jacobian(&x)?);
            for i in 0..self.m_in {
                j[(self.m_eq + i, self.n + i)] = -1.0;
            }
        }
        Ok(j)
    }

    fn clamp(&self, z: &Vector) -> Vector {
        z.zip_map(&self.lo, f64::max).zip_map(&self.hi, f64::min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Side {
    Lower,
    Upper,
}

#[derive(Clone, Debug)]
struct QpSolution {
    p: Vector,
    lambda: Vector,
    mu: Vector,
    active: Vec<(usize, Side)>,
}

/// Solves `min ½p'Hp + g'p  s.t.  A p = b,  l ≤ p ≤ u` by a primal active-set
/// iteration on the bounded variables, with enumeration of active sets as a
/// fallback when the iteration cycles.
fn solve_qp(
    h: &Matrix,
    g: &Vector,
    a: &Matrix,
    b: &Vector,
    l: &Vector,
    u: &Vector,
    warm: &[(usize, Side)],
) -> Option<QpSolution> {
    let n = g.len();
    let bounded: Vec<usize> = (0..n)
        .filter(|&i| l[i].is_finite() || u[i].is_finite())
        .collect();
    let mut work: Vec<(usize, Side)> = warm
        .iter()
        .copied()
        .filter(|(i, s)| match s {
            Side::Lower => l[*i].is_finite(),
            Side::Upper => u[*i].is_finite(),
        })
        .collect();
    let mut seen = HashSet::new();
    let tol = 1e-11;
    for _ in 0..(4 * bounded.len() + 20) {
        work.sort();
        work.dedup_by_key(|w| w.0);
        if !seen.insert(work.clone()) {
            break;
        }
        let Some(sol) = solve_eqp(h, g, a, b, l, u, &work) else {
            if work.is_empty() {
                break;
            }
            work.pop();
            continue;
        };
        // most violated free bound
        let mut worst = (0.0, None);
        for &i in &bounded {
            if work.iter().any(|w| w.0 == i) {
                continue;
            }
            let (vl, vu) = (l[i] - sol.p[i], sol.p[i] - u[i]);
            let scale = 1.0 + sol.p[i].abs();
            if vl > tol * scale && vl > worst.0 {
                worst = (vl, Some((i, Side::Lower)));
            }
            if vu > tol * scale && vu > worst.0 {
                worst = (vu, Some((i, Side::Upper)));
            }
        }
        if let (_, Some(w)) = worst {
            work.push(w);
            continue;
        }
        match wrong_sign(&sol) {
            Some(k) => {
                work.remove(k);
            }
            None => return Some(sol),
        }
    }
    enumerate_qp(h, g, a, b, l, u, &bounded)
}

fn wrong_sign(sol: &QpSolution) -> Option<usize> {
    let mut worst = (1e-10, None);
    for (k, &(i, side)) in sol.active.iter().enumerate() {
        let wrong = match side {
            Side::Lower => -sol.mu[i],
            Side::Upper => sol.mu[i],
        };
        if wrong > worst.0 {
            worst = (wrong, Some(k));
        }
    }
    worst.1
}

fn enumerate_qp(
    h: &Matrix,
    g: &Vector,
    a: &Matrix,
    b: &Vector,
    l: &Vector,
    u: &Vector,
    bounded: &[usize],
) -> Option<QpSolution> {
    if bounded.len() > 10 {
        return None;
    }
    let mut best: Option<(f64, QpSolution)> = None;
    for code in 0..3usize.pow(bounded.len() as u32) {
        let mut c = code;
        let mut work = Vec::new();
        let mut valid = true;
        for &i in bounded {
            match c % 3 {
                1 if l[i].is_finite() => work.push((i, Side::Lower)),
                2 if u[i].is_finite() => work.push((i, Side::Upper)),
                0 => {}
                _ => valid = false,
            }
            c /= 3;
        }
        if !valid {
            continue;
        }
        let Some(sol) = solve_eqp(h, g, a, b, l, u, &work) else {
            continue;
        };
        let feasible = bounded.iter().all(|&i| {
            let s = 1e-9 * (1.0 + sol.p[i].abs());
            sol.p[i] >= l[i] - s && sol.p[i] <= u[i] + s
        });
        if !feasible || wrong_sign(&sol).is_some() {
            continue;
        }
        let val = 0.5 * sol.p.dot(&(h * &sol.p)) + g.dot(&sol.p);
        if best.as_ref().is_none_or(|(v, _)| val < *v) {
            best = Some((val, sol));
        }
    }
    best.map(|(_, s)| s)
}

/// Equality-constrained QP with the variables in `work` fixed at their bounds.
fn solve_eqp(
    h: &Matrix,
    g: &Vector,
    a: &Matrix,
    b: &Vector,
    l: &Vector,
    u: &Vector,
    work: &[(usize, Side)],
) -> Option<QpSolution> {
    let n = g.len();
    let m = b.len();
    let mut fixed = vec![None; n];
    for &(i, side) in work {
        fixed[i] = Some(match side {
            Side::Lower => l[i],
            Side::Upper => u[i],
        });
    }
    let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
    let mut p = Vector::zeros(n);
    for (i, v) in fixed.iter().enumerate() {
        if let Some(v) = v {
            p[i] = *v;
        }
    }
    let nf = free.len();
    let mut kkt = Matrix::zeros(nf + m, nf + m);
    let mut rhs = Vector::zeros(nf + m);
    let hp = h * &p;
    let ap = a * &p;
    for (r, &i) in free.iter().enumerate() {
        for (c, &j) in free.iter().enumerate() {
            kkt[(r, c)] = h[(i, j)];
        }
        for k in 0..m {
            kkt[(r, nf + k)] = a[(k, i)];
            kkt[(nf + k, r)] = a[(k, i)];
        }
        rhs[r] = -g[i] - hp[i];
    }
    for k in 0..m {
        rhs[nf + k] = b[k] - ap[k];
    }
    let sol = if nf + m == 0 {
        Vector::zeros(0)
    } else {
        kkt_solve(&kkt, &rhs)?
    };
    for (r, &i) in free.iter().enumerate() {
        p[i] = sol[r];
    }
    let lambda = -sol.rows(nf, m).into_owned();
    let grad = h * &p + g - a.transpose() * &lambda;
    let mut mu = Vector::zeros(n);
    for &(i, _) in work {
        mu[i] = grad[i];
    }
    Some(QpSolution {
        p,
        lambda,
        mu,
        active: work.to_vec(),
    })
}

fn kkt_solve(kkt: &Matrix, rhs: &Vector) -> Option<Vector> {
    match kkt.clone().lu().solve(rhs) {
        Some(s) if s.iter().all(|v| v.is_finite()) => Some(s),
        _ => {
            let s = linalg::lstsq(kkt, rhs, 1e-13)?;
            if (kkt * &s - rhs).amax() > 1e-8 * (1.0 + rhs.amax()) {
                return None;
            }
            Some(s)
        }
    }
}

/// Minimum-norm solution of `J dz = −c`; variables the step would push
/// through a bound are pinned there and the rest re-solved.
fn bounded_gauss_newton(
    prob: &Slacked,
    z: &Vector,
    j: &Matrix,
    c: &Vector,
    hold: &[usize],
) -> Option<Vector> {
    let n = z.len();
    let mut pinned = vec![None; n];
    for &i in hold {
        pinned[i] = Some(0.0);
    }
    for _ in 0..n.min(20) + 1 {
        let free: Vec<usize> = (0..n).filter(|&i| pinned[i].is_none()).collect();
        let mut dz = Vector::zeros(n);
        let mut rhs = -c;
        for (i, p) in pinned.iter().enumerate() {
            if let Some(v) = p {
                dz[i] = *v;
                rhs -= j.column(i) * *v;
            }
        }
        let jf = j.select_columns(free.iter());
        let sol = linalg::lstsq(&jf, &rhs, 1e-13)?;
        for (k, &i) in free.iter().enumerate() {
            dz[i] = sol[k];
        }
        let mut changed = false;
        for &i in &free {
            let t = z[i] + dz[i];
            if t < prob.lo[i] {
                pinned[i] = Some(prob.lo[i] - z[i]);
                changed = true;
            } else if t > prob.hi[i] {
                pinned[i] = Some(prob.hi[i] - z[i]);
                changed = true;
            }
        }
        if !changed {
            return Some(dz);
        }
    }
    None
}

/// Gauss-Newton minimum-norm iteration on `c(z) = 0` within the bounds.
fn restore(
    prob: &Slacked,
    z: &Vector,
    iters: usize,
    tol: f64,
    accept: f64,
    hold: &[usize],
) -> Result<Vector> {
    let mut z = z.clone();
    let mut c = prob.constraints(&z)?;
    let mut stalled = false;
    for _ in 0..iters {
        if c.amax() <= tol || c.is_empty() {
            return Ok(z);
        }
        let j = prob.jacobian(&z)?;
        let Some(dz) = bounded_gauss_newton(prob, &z, &j, &c, hold) else {
            stalled = true;
            break;
        };
        let mut t = 1.0;
        loop {
            let trial = prob.clamp(&(&z + &dz * t));
            if let Ok(ct) = prob.constraints(&trial) {
                if ct.norm() < (1.0 - 1e-4 * t) * c.norm() {
                    z = trial;
                    c = ct;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-6 {
                stalled = true;
                break;
            }
        }
        if stalled {
            break;
        }
    }
    if c.amax() <= accept {
        Ok(z)
    } else {
        Err(Error::Infeasible(format!(
            "feasibility restoration {} at violation {:.3e}",
            if stalled {
                "stalled"
            } else {
                "ran out of iterations"
            },
            c.amax()
        )))
    }
}

fn l1(c: &Vector) -> f64 {
    c.iter().map(|v| v.abs()).sum()
}

pub fn solve_nlp(nlp: &dyn Nlp, z0: &Vector, opts: &SqpOptions) -> Result<SqpResult> {
    let (prob, z) = Slacked::new(nlp, z0)?;
    let nz = z.len();
    let mut z = restore(
        &prob,
        &z,
        opts.restoration_iter,
        1e-10,
        opts.feasibility_tol,
        &[],
    )?;

    let mut f = prob.objective(&z)?;
    let mut g = prob.gradient(&z)?;
    let mut c = prob.constraints(&z)?;
    let mut jac = prob.jacobian(&z)?;
    let mut hess = Matrix::identity(nz, nz);
    let mut nu: f64 = 1.0;
    let mut active: Vec<(usize, Side)> = Vec::new();
    let mut history = Vec::new();
    let mut lambda = Vector::zeros(c.len());
    let mut kkt = f64::INFINITY;
    let mut first_update = true;
    let mut radius = opts.initial_radius;

    for it in 0..opts.max_iter {
        let lo = &prob.lo - &z;
        let hi = &prob.hi - &z;
        let qp = match solve_qp(&hess, &g, &jac, &(-&c), &lo, &hi, &active) {
            Some(q) => q,
            None => {
                // linearization incompatible with the bounds: re-restore
                z = restore(
                    &prob,
                    &z,
                    opts.restoration_iter,
                    1e-10,
                    opts.feasibility_tol,
                    &[],
                )?;
                f = prob.objective(&z)?;
                g = prob.gradient(&z)?;
                c = prob.constraints(&z)?;
                jac = prob.jacobian(&z)?;
                hess = Matrix::identity(nz, nz);
                match solve_qp(
                    &hess,
                    &g,
                    &jac,
                    &(-&c),
                    &(&prob.lo - &z),
                    &(&prob.hi - &z),
                    &[],
                ) {
                    Some(q) => q,
                    None => {
                        return Err(Error::Infeasible(
                            "QP subproblem infeasible after restoration".into(),
                        ))
                    }
                }
            }
        };
        active = qp.active.clone();
        lambda = qp.lambda.clone();
        let grad_l = &g - jac.transpose() * &lambda - &qp.mu;
        let stationarity = match least_squares_stationarity(&prob, &z, &g, &jac, &qp.active) {
            Some(v) => v.min(grad_l.amax()),
            None => grad_l.amax(),
        };
        kkt = c.amax().max(stationarity);
        history.push(SqpIterate {
            iteration: it,
            objective: f,
            violation: c.amax(),
            kkt,
            step: qp.p.amax(),
        });
        if kkt <= opts.kkt_tol {
            // a few Gauss-Newton steps tighten feasibility beyond the KKT
            // test, with variables on their bounds held
            let hold: Vec<usize> = (0..nz)
                .filter(|&i| {
                    let near =
                        |b: f64| b.is_finite() && (z[i] - b).abs() <= 1e-12 * (1.0 + b.abs());
                    near(prob.lo[i]) || near(prob.hi[i])
                })
                .collect();
            if let Ok(zp) = restore(&prob, &z, 5, 1e-13, c.amax(), &hold) {
                let cp = prob.constraints(&zp)?;
                if cp.amax() < c.amax() {
                    f = prob.objective(&zp)?;
                    z = zp;
                    c = cp;
                }
            }
            return Ok(finish(
                &prob,
                z,
                f,
                kkt,
                c.amax(),
                it,
                true,
                lambda,
                history,
            ));
        }

        let capped = qp.p.amax() > radius;
        let p = if capped {
            &qp.p * (radius / qp.p.amax())
        } else {
            qp.p
        };
        nu = nu.max(1.1 * lambda.amax() + 1e-4);
        let phi = f + nu * l1(&c);
        let dphi = g.dot(&p) - nu * l1(&c);
        let merit = |zt: &Vector| -> Option<(f64, f64, Vector)> {
            let ft = prob.objective(zt).ok()?;
            let ct = prob.constraints(zt).ok()?;
            Some((ft + nu * l1(&ct), ft, ct))
        };
        let mut accepted = None;
        let mut t = 1.0;
        while t > 1e-10 {
            let zt = prob.clamp(&(&z + &p * t));
            if let Some((pt, ft, ct)) = merit(&zt) {
                if pt <= phi + 1e-4 * t * dphi.min(0.0) {
                    accepted = Some((zt, ft, ct));
                    break;
                }
                if t == 1.0 && !ct.is_empty() {
                    // second-order correction against the Maratos effect
                    if let Some(q) = linalg::lstsq(&jac, &(-&ct), 1e-13) {
                        let zs = prob.clamp(&(&zt + q));
                        if let Some((ps, fs, cs)) = merit(&zs) {
                            if ps <= phi + 1e-4 * dphi.min(0.0) {
                                accepted = Some((zs, fs, cs));
                                break;
                            }
                        }
                    }
                }
            }
            t *= 0.5;
        }
        let Some((zn, fn_, cn)) = accepted else {
            return Ok(finish(
                &prob,
                z,
                f,
                kkt,
                c.amax(),
                it,
                false,
                lambda,
                history,
            ));
        };
        radius = if t < 1.0 {
            (t * p.amax()).max(1e-3 * opts.initial_radius)
        } else if capped {
            (2.0 * radius).min(1e4)
        } else {
            radius
        };
        let gn = prob.gradient(&zn)?;
        let jn = prob.jacobian(&zn)?;
        let s = &zn - &z;
        let y = (&gn - jn.transpose() * &lambda) - (&g - jac.transpose() * &lambda);
        bfgs_update(&mut hess, &s, &y, &mut first_update);
        z = zn;
        f = fn_;
        c = cn;
        g = gn;
        jac = jn;
    }
    Ok(finish(
        &prob,
        z,
        f,
        kkt,
        c.amax(),
        opts.max_iter,
        false,
        lambda,
        history,
    ))
}

/// Stationarity residual with least-squares multipliers for the equalities
/// and for the bounds the current point sits on. The QP multipliers carry the
/// `Hp` term, which a poor quasi-Newton matrix inflates near a vertex.
fn least_squares_stationarity(
    prob: &Slacked,
    z: &Vector,
    g: &Vector,
    jac: &Matrix,
    active: &[(usize, Side)],
) -> Option<f64> {
    let on_bound: Vec<(usize, Side)> = active
        .iter()
        .copied()
        .filter(|&(i, side)| {
            let b = if side == Side::Lower {
                prob.lo[i]
            } else {
                prob.hi[i]
            };
            (z[i] - b).abs() <= 1e-12 * (1.0 + b.abs())
        })
        .collect();
    let m = jac.nrows();
    let mut a = Matrix::zeros(z.len(), m + on_bound.len());
    a.view_mut((0, 0), (z.len(), m)).copy_from(&jac.transpose());
    for (k, &(i, _)) in on_bound.iter().enumerate() {
        a[(i, m + k)] = 1.0;
    }
    if a.ncols() == 0 {
        return Some(g.amax());
    }
    let mult = linalg::lstsq(&a, g, 1e-13)?;
    let scale = 1e-10 * (1.0 + g.amax());
    let signs_ok = on_bound
        .iter()
        .enumerate()
        .all(|(k, &(_, side))| match side {
            Side::Lower => mult[m + k] >= -scale,
            Side::Upper => mult[m + k] <= scale,
        });
    signs_ok.then(|| (g - &a * &mult).amax())
}

/// Damped BFGS update keeping `h` positive definite.
fn bfgs_update(h: &mut Matrix, s: &Vector, y: &Vector, first: &mut bool) {
    let ss = s.norm_squared();
    if ss < 1e-30 {
        return;
    }
    if *first {
        let sy = s.dot(y);
        if sy > 0.0 {
            *h = Matrix::identity(s.len(), s.len()) * (y.norm_squared() / sy).clamp(1e-4, 1e4);
        }
        *first = false;
    }
    let hs = &*h * s;
    let shs = s.dot(&hs);
    if shs <= 1e-30 {
        return;
    }
    let sy = s.dot(y);
    let r = if sy >= 0.2 * shs {
        y.clone()
    } else {
        let theta = 0.8 * shs / (shs - sy);
        y * theta + &hs * (1.0 - theta)
    };
    let sr = s.dot(&r);
    *h += &r * r.transpose() / sr - &hs * hs.transpose() / shs;
}

#[allow(clippy::too_many_arguments)]
fn finish(
    prob: &Slacked,
    z: Vector,
    objective: f64,
    kkt: f64,
    violation: f64,
    iterations: usize,
    converged: bool,
    multipliers: Vector,
    history: Vec<SqpIterate>,
) -> SqpResult {
    SqpResult {
        z: z.rows(0, prob.n).into_owned(),
        objective,
        kkt_residual: kkt,
        violation,
        iterations,
        converged,
        multipliers,
        history,
    }
}
