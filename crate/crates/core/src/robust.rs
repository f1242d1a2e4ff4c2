//! Steady-state optimization whose nominal point keeps the whole parameter
//! uncertainty box on the stable side of a tracked critical manifold.
//!
//! Everything is formulated in scaled parameters `ᾱ = α/Δα`, where the box
//! is a unit hypercube enclosed by the ball of radius `√n_α`. The optimizer
//! works on the joint unknowns
//!
//! ```text
//! (x⁰, ᾱ⁰_opt, x_c, aux, ᾱ_c, κ, r, d)
//! ```
//!
//! with constraints `f(x⁰, α⁰) = 0`, `G(x_c, aux, α_c) = 0`, `Bκ = (0, r)`,
//! `r'r = 1`, `ᾱ⁰ − ᾱ_c + d r = 0` and `d ≥ √n_α + ε`.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::manifolds::{
    augmented_residual, seed_from_spectrum, solve_augmented, Aux, CriticalKind, CriticalPoint,
};
use crate::normal_vector::{
    augmented_jacobian, nv_residual, solve_normal_vector, NormalVectorSolution,
};
use crate::spectrum::{compute_spectrum_with, Spectrum, SpectrumOptions};
use crate::sqp::{solve_nlp, Nlp, SqpIterate, SqpOptions};
use crate::system::{
    continue_steady_state, eval_residual, jacobians, solve_steady_state, DdeSystem, Matrix,
    SteadyState, Vector,
};

/// Interval uncertainty `α_i ∈ [α⁰_i − Δα_i, α⁰_i + Δα_i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyBox {
    pub alpha0: Vector,
    pub delta: Vector,
}

impl UncertaintyBox {
    pub fn new(alpha0: Vector, delta: Vector) -> Result<Self> {
        check_dim("uncertainty half-widths", alpha0.len(), delta.len())?;
        if let Some(i) = delta.iter().position(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::Config(format!(
                "half-width {i} must be positive, got {}",
                delta[i]
            )));
        }
        Ok(UncertaintyBox { alpha0, delta })
    }

    pub fn from_system(sys: &dyn DdeSystem) -> Result<Self> {
        Self::new(crate::system::nominal(sys), crate::system::deltas(sys))
    }

    pub fn n_alpha(&self) -> usize {
        self.delta.len()
    }

    /// Radius of the ball enclosing the scaled box.
    pub fn radius(&self) -> f64 {
        (self.n_alpha() as f64).sqrt()
    }

    pub fn scale(&self, alpha: &Vector) -> Vector {
        alpha.component_div(&self.delta)
    }

    pub fn unscale(&self, scaled: &Vector) -> Vector {
        scaled.component_mul(&self.delta)
    }

    /// The `2^n_α` corners; bit `i` of the index selects `+Δα_i`.
    pub fn vertices(&self) -> Vec<(Vec<i8>, Vector)> {
        let n = self.n_alpha();
        (0..1usize << n)
            .map(|code| {
                let pattern: Vec<i8> = (0..n)
                    .map(|i| if code >> i & 1 == 1 { 1 } else { -1 })
                    .collect();
                let alpha = Vector::from_fn(n, |i, _| {
                    self.alpha0[i] + f64::from(pattern[i]) * self.delta[i]
                });
                (pattern, alpha)
            })
            .collect()
    }
}

/// `ᾱ⁰ − ᾱ_c + d r` for a unit normal `r` and positive distance `d`.
pub fn connection_residual(
    alpha0: &Vector,
    alpha_c: &Vector,
    d: f64,
    r: &Vector,
) -> Result<Vector> {
    check_dim("critical parameters", alpha0.len(), alpha_c.len())?;
    check_dim("normal vector", alpha0.len(), r.len())?;
    if d <= 0.0 || !d.is_finite() {
        return Err(Error::SignConvention(d));
    }
    Ok(alpha0 - alpha_c + r * d)
}

pub type ObjectiveFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Robust,
    /// Only the steady state and the untightened bounds.
    Naive,
}

pub struct RobustProblem<'a> {
    pub sys: &'a dyn DdeSystem,
    /// Minimized over `(x⁰, α⁰)`.
    pub objective: Arc<ObjectiveFn>,
    pub uncertainty: UncertaintyBox,
    pub sigma: f64,
    pub kind: CriticalKind,
    pub margin: f64,
    /// Indices of the decision parameters and their bounds.
    pub optimize: Vec<usize>,
    pub bounds: Vec<(f64, f64)>,
    pub sqp: SqpOptions,
    pub spectrum: SpectrumOptions,
}

impl<'a> RobustProblem<'a> {
    /// Decision parameters and bounds from the system's metadata; the box is
    /// centered on the nominal values.
    pub fn new(
        sys: &'a dyn DdeSystem,
        objective: Arc<ObjectiveFn>,
        hopf: bool,
        sigma: f64,
    ) -> Result<Self> {
        if sigma > 0.0 || !sigma.is_finite() {
            return Err(Error::Config(format!(
                "decay rate must be finite and <= 0, got {sigma}"
            )));
        }
        let (optimize, bounds) = sys
            .params()
            .iter()
            .enumerate()
            .filter(|(_, p)| p.optimizable)
            .map(|(i, p)| (i, (p.lower, p.upper)))
            .unzip();
        Ok(RobustProblem {
            sys,
            objective,
            uncertainty: UncertaintyBox::from_system(sys)?,
            sigma,
            kind: CriticalKind::for_sigma(hopf, sigma),
            margin: 1e-6,
            optimize,
            bounds,
            sqp: SqpOptions::default(),
            spectrum: SpectrumOptions::default(),
        })
    }

    /// Bounds shrunk by the enclosing ball radius: `lo + √n_α Δα_i`, `hi − √n_α Δα_i`.
    pub fn tightened_bounds(&self) -> Result<Vec<(f64, f64)>> {
        let rad = self.uncertainty.radius();
        self.optimize
            .iter()
            .zip(&self.bounds)
            .map(|(&i, &(lo, hi))| {
                let d = self.uncertainty.delta[i];
                let (l, h) = (lo + rad * d, hi - rad * d);
                if l > h {
                    Err(Error::Infeasible(format!(
                        "tightened bounds of '{}' cross: [{l}, {h}]",
                        self.sys.params()[i].name
                    )))
                } else {
                    Ok((l, h))
                }
            })
            .collect()
    }

    fn check(&self) -> Result<()> {
        check_dim("parameter bounds", self.optimize.len(), self.bounds.len())?;
        check_dim(
            "uncertainty box",
            self.sys.n_alpha(),
            self.uncertainty.n_alpha(),
        )?;
        if let Some(&i) = self.optimize.iter().find(|&&i| i >= self.sys.n_alpha()) {
            return Err(Error::Config(format!("parameter index {i} out of range")));
        }
        Ok(())
    }

    fn alpha_with(&self, opt_values: &[f64]) -> Vector {
        let mut a = self.uncertainty.alpha0.clone();
        for (k, &i) in self.optimize.iter().enumerate() {
            a[i] = opt_values[k];
        }
        a
    }
}

/// Starting data: a stable nominal steady state and a point on the tracked manifold.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RobustSeeds {
    pub nominal: SteadyState,
    pub critical: CriticalPoint,
}

/// Walks from a stable steady state along parameter `ray` (direction sign
/// `dir`) until the leading eigenvalue reaches `σ`, bisects the crossing and
/// solves the augmented system there with `ray` free. A branch that ends
/// counts as past the crossing, which is how plain folds are reached.
pub fn seed_by_ray(
    problem: &RobustProblem,
    nominal: &SteadyState,
    ray: usize,
    dir: f64,
) -> Result<RobustSeeds> {
    let sys = problem.sys;
    let sigma = problem.sigma;
    let delta = problem.uncertainty.delta[ray];
    let meta = &sys.params()[ray];
    let lead = |ss: &SteadyState| -> Result<Spectrum> {
        compute_spectrum_with(sys, ss, &problem.spectrum)
    };
    let spec0 = lead(nominal)?;
    if spec0.leading.re >= sigma {
        return Err(Error::Seeding(format!(
            "start point is not stable (leading {:.6e})",
            spec0.leading
        )));
    }
    let at = |base: &SteadyState, v: f64| -> Result<SteadyState> {
        let mut a = base.alpha.clone();
        a[ray] = v;
        continue_steady_state(sys, base, a.as_slice())
    };

    // a failed continuation counts as past the crossing: beyond a fold the
    // branch simply ends
    let past = |base: &SteadyState, v: f64| -> Result<Option<SteadyState>> {
        match at(base, v) {
            Ok(ss) if lead(&ss)?.leading.re < sigma => Ok(Some(ss)),
            _ => Ok(None),
        }
    };
    // design bounds of a decision parameter say nothing about where the
    // manifold is, so the walk may leave them by one box width
    let (lower, upper) = if meta.optimizable {
        let w = (meta.upper - meta.lower).max(delta);
        (meta.lower - w, meta.upper + w)
    } else {
        (meta.lower, meta.upper)
    };
    let mut lo = nominal.clone();
    let mut step = 1.0;
    let mut hi = None;
    for _ in 0..60 {
        let v = (lo.alpha[ray] + dir * step * delta).clamp(lower, upper);
        if v == lo.alpha[ray] {
            break;
        }
        match past(&lo, v)? {
            Some(ss) => lo = ss,
            None => {
                hi = Some(v);
                break;
            }
        }
        step *= 1.5;
    }
    let mut hi = hi.ok_or_else(|| {
        Error::Seeding(format!("no crossing of Re = {sigma} along '{}'", meta.name))
    })?;
    for _ in 0..60 {
        if (hi - lo.alpha[ray]).abs() <= 1e-9 * delta {
            break;
        }
        let mid = 0.5 * (lo.alpha[ray] + hi);
        match past(&lo, mid)? {
            Some(ss) => lo = ss,
            None => hi = mid,
        }
    }
    let spec = lead(&lo)?;
    let seed = seed_from_spectrum(problem.kind, &lo, &spec, sigma)?;
    let critical = solve_augmented(sys, &seed, ray).map_err(|e| Error::Seeding(e.to_string()))?;
    Ok(RobustSeeds {
        nominal: nominal.clone(),
        critical,
    })
}

/// Start for the robust solve: among the corners of the tightened box whose
/// steady state (continued from `nominal`) is stable, the one with the lowest
/// objective. Falls back to `nominal` clamped into the box if no corner is
/// stable or reachable.
pub fn corner_start(problem: &RobustProblem, nominal: &SteadyState) -> Result<SteadyState> {
    let sys = problem.sys;
    let tb = problem.tightened_bounds()?;
    let n = problem.optimize.len();
    if n > 16 {
        return Err(Error::Config(format!(
            "{n} decision parameters is too many corners to scan"
        )));
    }
    let candidates: Vec<(f64, SteadyState)> = (0..1usize << n)
        .into_par_iter()
        .filter_map(|mask| {
            let mut a = nominal.alpha.clone();
            for (k, &i) in problem.optimize.iter().enumerate() {
                a[i] = if mask >> k & 1 == 1 { tb[k].1 } else { tb[k].0 };
            }
            let ss = continue_steady_state(sys, nominal, a.as_slice()).ok()?;
            let spec = compute_spectrum_with(sys, &ss, &problem.spectrum).ok()?;
            (spec.converged && spec.leading.re < problem.sigma).then(|| {
                (
                    (problem.objective)(ss.x.as_slice(), ss.alpha.as_slice()),
                    ss,
                )
            })
        })
        .collect();
    if let Some((_, best)) = candidates.into_iter().min_by(|a, b| a.0.total_cmp(&b.0)) {
        return Ok(best);
    }
    let mut a = nominal.alpha.clone();
    for (k, &i) in problem.optimize.iter().enumerate() {
        a[i] = a[i].clamp(tb[k].0, tb[k].1);
    }
    continue_steady_state(sys, nominal, a.as_slice())
}

/// Offsets of the variable blocks.
#[derive(Clone, Copy, Debug)]
struct Layout {
    n_x: usize,
    n_o: usize,
    n_aux: usize,
    n_a: usize,
    n_g: usize,
    n_b: usize,
}

impl Layout {
    fn x0(&self) -> usize {
        0
    }
    fn a0(&self) -> usize {
        self.n_x
    }
    fn xc(&self) -> usize {
        self.n_x + self.n_o
    }
    fn aux(&self) -> usize {
        self.xc() + self.n_x
    }
    fn ac(&self) -> usize {
        self.aux() + self.n_aux
    }
    fn kappa(&self) -> usize {
        self.ac() + self.n_a
    }
    fn r(&self) -> usize {
        self.kappa() + self.n_g
    }
    fn d(&self) -> usize {
        self.r() + self.n_a
    }
    fn len(&self) -> usize {
        self.d() + 1
    }
    /// Number of equalities.
    fn n_eq(&self) -> usize {
        self.n_x + self.n_g + self.n_b + 1 + self.n_a
    }
}

struct Unpacked {
    alpha0: Vector,
    cp: CriticalPoint,
    kappa: Vector,
    r: Vector,
    d: f64,
}

struct RobustNlp<'p, 'a> {
    p: &'p RobustProblem<'a>,
    mode: Mode,
    layout: Layout,
    n_d: usize,
    lo: Vector,
    hi: Vector,
}

impl<'p, 'a> RobustNlp<'p, 'a> {
    fn new(p: &'p RobustProblem<'a>, mode: Mode) -> Result<Self> {
        p.check()?;
        let sys = p.sys;
        let n_x = sys.n_x();
        let n_d = sys.dynamic_states().len();
        let n_a = sys.n_alpha();
        let n_aux = p.kind.aux_len(n_d);
        let layout = Layout {
            n_x,
            n_o: p.optimize.len(),
            n_aux,
            n_a,
            n_g: p.kind.residual_len(n_x, n_d),
            n_b: n_x + n_aux + n_a,
        };
        let bounds = match mode {
            Mode::Robust => p.tightened_bounds()?,
            Mode::Naive => p.bounds.clone(),
        };
        let n = if mode == Mode::Robust {
            layout.len()
        } else {
            n_x + layout.n_o
        };
        let mut lo = Vector::from_element(n, f64::NEG_INFINITY);
        let mut hi = Vector::from_element(n, f64::INFINITY);
        for (k, (&i, &(l, h))) in p.optimize.iter().zip(&bounds).enumerate() {
            let d = p.uncertainty.delta[i];
            lo[layout.a0() + k] = l / d;
            hi[layout.a0() + k] = h / d;
        }
        Ok(RobustNlp {
            p,
            mode,
            layout,
            n_d,
            lo,
            hi,
        })
    }

    fn alpha0(&self, z: &Vector) -> Vector {
        let l = &self.layout;
        let delta = &self.p.uncertainty.delta;
        let opt: Vec<f64> = self
            .p
            .optimize
            .iter()
            .enumerate()
            .map(|(k, &i)| z[l.a0() + k] * delta[i])
            .collect();
        self.p.alpha_with(&opt)
    }

    fn unpack(&self, z: &Vector) -> Unpacked {
        let l = &self.layout;
        let alpha0 = self.alpha0(z);
        let cp = CriticalPoint {
            kind: self.p.kind,
            x_c: z.rows(l.xc(), l.n_x).into_owned(),
            alpha_c: self
                .p
                .uncertainty
                .unscale(&z.rows(l.ac(), l.n_a).into_owned()),
            sigma: self.p.sigma,
            aux: Aux::from_vector(
                self.p.kind,
                &z.rows(l.aux(), l.n_aux).into_owned(),
                self.n_d,
            ),
            regular: true,
        };
        Unpacked {
            alpha0,
            cp,
            kappa: z.rows(l.kappa(), l.n_g).into_owned(),
            r: z.rows(l.r(), l.n_a).into_owned(),
            d: z[l.d()],
        }
    }

    fn pack(
        &self,
        x0: &Vector,
        alpha0: &Vector,
        nv: Option<(&NormalVectorSolution, f64)>,
    ) -> Vector {
        let l = &self.layout;
        let n = if self.mode == Mode::Robust {
            l.len()
        } else {
            l.n_x + l.n_o
        };
        let mut z = Vector::zeros(n);
        z.rows_mut(l.x0(), l.n_x).copy_from(x0);
        for (k, &i) in self.p.optimize.iter().enumerate() {
            z[l.a0() + k] = alpha0[i] / self.p.uncertainty.delta[i];
        }
        if let Some((nv, d)) = nv {
            let cp = &nv.critical;
            z.rows_mut(l.xc(), l.n_x).copy_from(&cp.x_c);
            z.rows_mut(l.aux(), l.n_aux).copy_from(&cp.aux.to_vector());
            z.rows_mut(l.ac(), l.n_a)
                .copy_from(&self.p.uncertainty.scale(&cp.alpha_c));
            z.rows_mut(l.kappa(), l.n_g).copy_from(&nv.kappa);
            z.rows_mut(l.r(), l.n_a).copy_from(&nv.r);
            z[l.d()] = d;
        }
        z
    }

    /// `Bκ − (0, r)` at the critical part of `z`.
    fn nv_rows(&self, cp: &CriticalPoint, kappa: &Vector, r: &Vector) -> Result<Vector> {
        let (_, b) = augmented_jacobian(self.p.sys, cp)?;
        let mut v = b * kappa;
        let off = v.len() - r.len();
        let mut tail = v.rows_mut(off, r.len());
        tail -= r;
        Ok(v)
    }
}

impl Nlp for RobustNlp<'_, '_> {
    fn n(&self) -> usize {
        self.lo.len()
    }

    fn bounds(&self) -> (Vector, Vector) {
        (self.lo.clone(), self.hi.clone())
    }

    fn objective(&self, z: &Vector) -> Result<f64> {
        let l = &self.layout;
        let x0 = z.rows(l.x0(), l.n_x);
        Ok((self.p.objective)(x0.as_slice(), self.alpha0(z).as_slice()))
    }

    fn objective_gradient(&self, z: &Vector) -> Result<Vector> {
        let l = &self.layout;
        let mut g = Vector::zeros(z.len());
        for i in 0..l.n_x + l.n_o {
            let h = 1e-6 * (1.0 + z[i].abs());
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[i] += h;
            zm[i] -= h;
            g[i] = (self.objective(&zp)? - self.objective(&zm)?) / (2.0 * h);
        }
        Ok(g)
    }

    fn equalities(&self, z: &Vector) -> Result<Vector> {
        let l = self.layout;
        let x0 = z.rows(l.x0(), l.n_x).into_owned();
        let f = eval_residual(self.p.sys, x0.as_slice(), self.alpha0(z).as_slice())?;
        if self.mode == Mode::Naive {
            return Ok(f);
        }
        let u = self.unpack(z);
        let (g, b) = augmented_jacobian(self.p.sys, &u.cp)?;
        let mut nv = &b * &u.kappa;
        {
            let off = nv.len() - l.n_a;
            let mut tail = nv.rows_mut(off, l.n_a);
            tail -= &u.r;
        }
        let scaled0 = self.p.uncertainty.scale(&u.alpha0);
        let scaled_c = self.p.uncertainty.scale(&u.cp.alpha_c);
        let conn = &scaled0 - &scaled_c + &u.r * u.d;
        let mut out = Vector::zeros(l.n_eq());
        let mut off = 0;
        for part in [
            &f,
            &g,
            &nv,
            &Vector::from_element(1, u.r.norm_squared() - 1.0),
            &conn,
        ] {
            out.rows_mut(off, part.len()).copy_from(part);
            off += part.len();
        }
        Ok(out)
    }

    fn equality_jacobian(&self, z: &Vector) -> Result<Matrix> {
        let l = self.layout;
        let sys = self.p.sys;
        let delta = &self.p.uncertainty.delta;
        let x0 = z.rows(l.x0(), l.n_x).into_owned();
        let alpha0 = self.alpha0(z);
        let jac0 = jacobians(sys, x0.as_slice(), alpha0.as_slice())?;
        let n_rows = if self.mode == Mode::Naive {
            l.n_x
        } else {
            l.n_eq()
        };
        let mut j = Matrix::zeros(n_rows, z.len());
        j.view_mut((0, l.x0()), (l.n_x, l.n_x))
            .copy_from(&jac0.steady());
        for (k, &i) in self.p.optimize.iter().enumerate() {
            j.view_mut((0, l.a0() + k), (l.n_x, 1))
                .copy_from(&(jac0.dfdalpha.column(i) * delta[i]));
        }
        if self.mode == Mode::Naive {
            return Ok(j);
        }
        let u = self.unpack(z);
        let (_, b) = augmented_jacobian(sys, &u.cp)?;
        let (rg, rn, rr, rc) = (
            l.n_x,
            l.n_x + l.n_g,
            l.n_x + l.n_g + l.n_b,
            l.n_x + l.n_g + l.n_b + 1,
        );
        // G: the block matrix is its transposed Jacobian in (x_c, aux, ᾱ_c)
        j.view_mut((rg, l.xc()), (l.n_g, l.n_b))
            .copy_from(&b.transpose());
        // Bκ − (0, r)
        j.view_mut((rn, l.kappa()), (l.n_b, l.n_g)).copy_from(&b);
        for i in 0..l.n_a {
            j[(rn + l.n_b - l.n_a + i, l.r() + i)] = -1.0;
        }
        let cols: Vec<Vector> = (0..l.n_b)
            .into_par_iter()
            .map(|c| -> Result<Vector> {
                // the rows already contain finite-difference tensors, so a
                // wide fourth-order stencil keeps their rounding noise small;
                // parameters are in uncertainty units, hence an absolute step
                let i = l.xc() + c;
                let h = 1e-3;
                let at = |s: f64| -> Result<Vector> {
                    let mut zs = z.clone();
                    zs[i] += s * h;
                    self.nv_rows(&self.unpack(&zs).cp, &u.kappa, &u.r)
                };
                Ok((at(-2.0)? - at(2.0)? + (at(1.0)? - at(-1.0)?) * 8.0) / (12.0 * h))
            })
            .collect::<Result<_>>()?;
        for (c, col) in cols.iter().enumerate() {
            j.view_mut((rn, l.xc() + c), (l.n_b, 1)).copy_from(col);
        }
        // r'r − 1
        j.view_mut((rr, l.r()), (1, l.n_a))
            .copy_from(&(u.r.transpose() * 2.0));
        // ᾱ⁰ − ᾱ_c + d r
        for (k, &i) in self.p.optimize.iter().enumerate() {
            j[(rc + i, l.a0() + k)] = 1.0;
        }
        for i in 0..l.n_a {
            j[(rc + i, l.ac() + i)] = -1.0;
            j[(rc + i, l.r() + i)] = u.d;
            j[(rc + i, l.d())] = u.r[i];
        }
        Ok(j)
    }

    fn inequalities(&self, z: &Vector) -> Result<Vector> {
        if self.mode == Mode::Naive {
            return Ok(Vector::zeros(0));
        }
        let min = self.p.uncertainty.radius() + self.p.margin;
        Ok(Vector::from_element(1, z[self.layout.d()] - min))
    }

    fn inequality_jacobian(&self, z: &Vector) -> Result<Matrix> {
        if self.mode == Mode::Naive {
            return Ok(Matrix::zeros(0, z.len()));
        }
        let mut j = Matrix::zeros(1, z.len());
        j[(0, self.layout.d())] = 1.0;
        Ok(j)
    }
}

/// Moves the critical block of `z` to the manifold point nearest the nominal
/// parameters of `z` and sets `d` to that distance. The nominal is reached
/// by a homotopy that starts on the normal line through the seed, so the
/// solution stays on the seed's branch.
fn nearest_critical(nlp: &RobustNlp, z: &Vector) -> Result<Vector> {
    let l = nlp.layout;
    let unc = &nlp.p.uncertainty;
    let u = nlp.unpack(z);
    let target = unc.scale(&u.alpha0);
    let start = unc.scale(&u.cp.alpha_c) - &u.r * u.d;
    let mut z = z.clone();
    let (mut s, mut ds) = (0.0f64, 1.0f64);
    while s < 1.0 {
        let next = (s + ds).min(1.0);
        let anchor = &start + (&target - &start) * next;
        match newton_to_anchor(nlp, &z, &anchor, if next < 1.0 { 1e-8 } else { 1e-11 }) {
            Some(zn) => {
                z = zn;
                s = next;
                ds = (2.0 * ds).min(1.0);
            }
            None => {
                ds *= 0.5;
                if ds < 1e-4 {
                    return Err(Error::Seeding(format!(
                        "nearest critical point lost at homotopy parameter {s:.4}"
                    )));
                }
            }
        }
    }
    if z[l.d()] <= 0.0 {
        return Err(Error::Seeding(
            "nominal seed lies past the critical manifold".into(),
        ));
    }
    Ok(z)
}

/// Newton on the critical-point, normal-vector and connection equations with
/// the nominal parameters replaced by `anchor` (scaled).
fn newton_to_anchor(nlp: &RobustNlp, z: &Vector, anchor: &Vector, tol: f64) -> Option<Vector> {
    let l = nlp.layout;
    let (col, row) = (l.xc(), l.n_x);
    let n = l.len() - col;
    let residual = |z: &Vector| -> Option<Vector> {
        let mut c = nlp.equalities(z).ok()?.rows(row, n).into_owned();
        let shift = anchor - nlp.p.uncertainty.scale(&nlp.alpha0(z));
        let mut conn = c.rows_mut(n - l.n_a, l.n_a);
        conn += shift;
        Some(c)
    };
    let mut z = z.clone();
    let mut c = residual(&z)?;
    for _ in 0..30 {
        let norm = c.amax();
        if norm < tol {
            return Some(z);
        }
        let j = nlp
            .equality_jacobian(&z)
            .ok()?
            .view((row, col), (n, n))
            .into_owned();
        let step = linalg::solve(&j, &(-&c))?;
        let mut t = 1.0;
        loop {
            let mut trial = z.clone();
            let mut tail = trial.rows_mut(col, n);
            tail += &step * t;
            if let Some(ct) = residual(&trial) {
                if ct.amax() < (1.0 - 1e-4 * t) * norm {
                    z = trial;
                    c = ct;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-3 {
                // at the rounding floor of the finite-difference tensors
                return (norm < 1e-8).then_some(z);
            }
        }
    }
    (c.amax() < tol.max(1e-8)).then_some(z)
}

/// Leading eigenvalue of one box corner.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VertexEntry {
    pub pattern: Vec<i8>,
    pub alpha: Vector,
    pub leading: Option<Complex64>,
    pub stable: bool,
    /// Why the vertex could not be assessed.
    pub failure: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VertexReport {
    pub sigma: f64,
    pub vertices: Vec<VertexEntry>,
    pub n_unstable: usize,
    pub n_indeterminate: usize,
    pub all_stable: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RobustResult {
    pub mode: Mode,
    pub nominal: SteadyState,
    pub leading: Complex64,
    pub critical: Option<CriticalPoint>,
    pub nv: Option<NormalVectorSolution>,
    /// Scaled distance between the nominal and the critical point.
    pub d: Option<f64>,
    pub connection_residual: Option<f64>,
    /// Real part of the leading eigenvalue at the critical point.
    pub critical_leading: Option<Complex64>,
    pub objective_value: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub bounds: Vec<(f64, f64)>,
    pub vertex_report: Option<VertexReport>,
    pub valid: bool,
    pub issues: Vec<String>,
    pub history: Vec<SqpIterate>,
}

impl RobustResult {
    pub fn alpha0(&self) -> &Vector {
        &self.nominal.alpha
    }
}

/// Solves the naive or robust problem from the given seeds. The nominal
/// seed must be a steady state; the critical seed is needed in robust mode.
pub fn solve(
    problem: &RobustProblem,
    mode: Mode,
    nominal: &SteadyState,
    critical: Option<&CriticalPoint>,
) -> Result<RobustResult> {
    let nlp = RobustNlp::new(problem, mode)?;
    let z0 = match mode {
        Mode::Naive => nlp.pack(&nominal.x, &nominal.alpha, None),
        Mode::Robust => {
            let cp = critical
                .ok_or_else(|| Error::Config("robust mode needs a critical-point seed".into()))?;
            if cp.kind != problem.kind {
                return Err(Error::Config(format!(
                    "critical seed is a {:?} point, the problem tracks {:?}",
                    cp.kind, problem.kind
                )));
            }
            // start with the ball just touching the manifold at the seed,
            // which is where the distance constraint tends to end up
            let nv = solve_normal_vector(problem.sys, cp)?;
            let d = problem.uncertainty.radius() + 2.0 * problem.margin;
            let tight = problem.tightened_bounds()?;
            // only the optimizable parameters move, so step along their
            // part of the normal far enough to put the seed at distance d
            let r_opt: f64 = problem.optimize.iter().map(|&i| nv.r[i] * nv.r[i]).sum();
            let reach = d / r_opt.max(1e-12);
            let mut alpha0 = nominal.alpha.clone();
            for (&i, &(lo, hi)) in problem.optimize.iter().zip(&tight) {
                let delta = problem.uncertainty.delta[i];
                alpha0[i] = (cp.alpha_c[i] - reach * nv.r[i] * delta).clamp(lo, hi);
            }
            let touching =
                continue_steady_state(problem.sys, nominal, alpha0.as_slice()).and_then(|start| {
                    nearest_critical(&nlp, &nlp.pack(&start.x, &alpha0, Some((&nv, d))))
                });
            match touching {
                Ok(z) if z[z.len() - 1] >= 0.5 * d => z,
                // another part of the manifold is much nearer, or the
                // homotopy failed: fall back to the supplied nominal
                _ => {
                    let s0 = problem.uncertainty.scale(&nominal.alpha);
                    let sc = problem.uncertainty.scale(&cp.alpha_c);
                    let d0 = (&sc - &s0).dot(&nv.r).max(d);
                    nearest_critical(&nlp, &nlp.pack(&nominal.x, &nominal.alpha, Some((&nv, d0))))?
                }
            }
        }
    };
    let sqp = solve_nlp(&nlp, &z0, &problem.sqp)?;
    let mut issues = Vec::new();
    if !sqp.converged {
        issues.push(format!(
            "SQP stopped after {} iterations with KKT residual {:.3e}",
            sqp.iterations, sqp.kkt_residual
        ));
    }
    let alpha0 = nlp.alpha0(&sqp.z);
    let x0 = sqp.z.rows(0, problem.sys.n_x()).into_owned();
    let bounds = match mode {
        Mode::Robust => problem.tightened_bounds()?,
        Mode::Naive => problem.bounds.clone(),
    };

    // fresh verification
    let nominal = solve_steady_state(problem.sys, x0.as_slice(), alpha0.as_slice())?;
    let spec = compute_spectrum_with(problem.sys, &nominal, &problem.spectrum)?;
    if !spec.converged {
        issues.push("nominal spectrum did not converge".into());
    }
    let mut out = RobustResult {
        mode,
        leading: spec.leading,
        nominal,
        critical: None,
        nv: None,
        d: None,
        connection_residual: None,
        critical_leading: None,
        objective_value: sqp.objective,
        kkt_residual: sqp.kkt_residual,
        iterations: sqp.iterations,
        bounds,
        vertex_report: None,
        valid: false,
        issues,
        history: sqp.history,
    };
    if mode == Mode::Robust {
        if spec.leading.re >= problem.sigma {
            out.issues.push(format!(
                "nominal point is not stable: leading {:.6e}",
                spec.leading
            ));
        }
        let u = nlp.unpack(&sqp.z);
        let (_, b) = augmented_jacobian(problem.sys, &u.cp)?;
        let g = augmented_residual(
            u.cp.kind,
            problem.sys,
            &u.cp.x_c,
            &u.cp.alpha_c,
            &u.cp.aux,
            u.cp.sigma,
        )?;
        let res = nv_residual(&b, &u.kappa, &u.r).max(g.amax());
        if res > 1e-8 {
            out.issues
                .push(format!("manifold and normal-vector residual {res:.3e}"));
        }
        let conn = connection_residual(
            &problem.uncertainty.scale(&out.nominal.alpha),
            &problem.uncertainty.scale(&u.cp.alpha_c),
            u.d,
            &u.r,
        )?
        .amax();
        if conn > 1e-8 {
            out.issues.push(format!("connection residual {conn:.3e}"));
        }
        if u.d < problem.uncertainty.radius() + problem.margin - 1e-9 {
            out.issues
                .push(format!("distance {} below the ball radius", u.d));
        }
        match solve_steady_state(problem.sys, u.cp.x_c.as_slice(), u.cp.alpha_c.as_slice())
            .and_then(|ss| compute_spectrum_with(problem.sys, &ss, &problem.spectrum))
        {
            Ok(s) => {
                if s.leading.re > problem.sigma + 1e-6 {
                    out.issues.push(format!(
                        "another eigenvalue is already past the target at the critical point (leading {:.6e})",
                        s.leading
                    ));
                }
                out.critical_leading = Some(s.leading);
            }
            Err(e) => out.issues.push(format!("critical point check failed: {e}")),
        }
        out.connection_residual = Some(conn);
        out.d = Some(u.d);
        out.nv = Some(NormalVectorSolution {
            r: u.r,
            kappa: u.kappa,
            critical: u.cp.clone(),
            residual_norm: res,
        });
        out.critical = Some(u.cp);
    }
    out.valid = out.issues.is_empty();
    Ok(out)
}

/// Continues the nominal steady state to every box corner and records the
/// leading eigenvalue there.
pub fn verify_vertices(
    sys: &dyn DdeSystem,
    nominal: &SteadyState,
    uncertainty: &UncertaintyBox,
    sigma: f64,
    opts: &SpectrumOptions,
) -> VertexReport {
    let centered = UncertaintyBox {
        alpha0: nominal.alpha.clone(),
        delta: uncertainty.delta.clone(),
    };
    let vertices: Vec<VertexEntry> = centered
        .vertices()
        .into_par_iter()
        .map(|(pattern, alpha)| {
            let res = continue_steady_state(sys, nominal, alpha.as_slice())
                .and_then(|ss| compute_spectrum_with(sys, &ss, opts));
            match res {
                Ok(spec) if spec.converged => VertexEntry {
                    stable: spec.leading.re < sigma,
                    leading: Some(spec.leading),
                    pattern,
                    alpha,
                    failure: None,
                },
                Ok(spec) => VertexEntry {
                    stable: false,
                    leading: Some(spec.leading),
                    pattern,
                    alpha,
                    failure: Some("spectrum not converged".into()),
                },
                Err(e) => VertexEntry {
                    stable: false,
                    leading: None,
                    pattern,
                    alpha,
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect();
    let n_indeterminate = vertices.iter().filter(|v| v.failure.is_some()).count();
    let n_unstable = vertices
        .iter()
        .filter(|v| v.failure.is_none() && !v.stable)
        .count();
    VertexReport {
        sigma,
        all_stable: n_unstable == 0 && n_indeterminate == 0,
        vertices,
        n_unstable,
        n_indeterminate,
    }
}
