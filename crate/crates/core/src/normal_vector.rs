//! Transposed Jacobians of the augmented systems and the normal direction to
//! a critical manifold in scaled parameter space.
//!
//! Rows of a block matrix `B` are the unknowns `(x, aux, α/Δα)`; columns are
//! the augmented equations. Parameter rows are always scaled by `Δα`.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::linalg::null_space;
use crate::manifolds::{residual_from_local, sc, Aux, CriticalPoint};
use crate::system::{
    deltas, eval_delays, eval_residual, jacobians, restrict, DdeSystem, Matrix, Vector,
};

/// Linearization data at one `(x, α)` (steady-state call pattern).
#[derive(Clone, Debug)]
pub(crate) struct Local {
    pub f: Vector,
    pub a_sum: Matrix,
    /// Projected `A_k`, k = 0..=m.
    pub a: Vec<Matrix>,
    pub dfda: Matrix,
    /// `τ_k` including `τ_0 = 0`.
    pub tau: Vec<f64>,
    pub dtau_dx: Vec<Vector>,
    pub dtau_da: Vec<Vector>,
    pub dynamic: Vec<usize>,
}

impl Local {
    pub fn at(sys: &dyn DdeSystem, x: &Vector, alpha: &Vector) -> Result<Self> {
        let f = eval_residual(sys, x.as_slice(), alpha.as_slice())?;
        let jac = jacobians(sys, x.as_slice(), alpha.as_slice())?;
        let dynamic = sys.dynamic_states();
        let mut tau = vec![0.0];
        tau.extend(eval_delays(sys, x.as_slice(), alpha.as_slice())?);
        let mut dtau_dx = vec![Vector::zeros(sys.n_x())];
        dtau_dx.extend(jac.dtau_dx.iter().cloned());
        let mut dtau_da = vec![Vector::zeros(sys.n_alpha())];
        dtau_da.extend(jac.dtau_dalpha.iter().cloned());
        Ok(Local {
            f,
            a_sum: jac.steady(),
            a: jac.a.iter().map(|m| restrict(m, &dynamic)).collect(),
            dfda: jac.dfdalpha,
            tau,
            dtau_dx,
            dtau_da,
            dynamic,
        })
    }

    pub fn n_d(&self) -> usize {
        self.dynamic.len()
    }
}

/// Derivatives of the projected `A_k` along every state and parameter
/// direction: `dx[i][k] = ∂Â_k/∂x_i`, `da[i][k] = Δα_i ∂Â_k/∂α_i`.
struct Tensors {
    dx: Vec<Vec<Matrix>>,
    da: Vec<Vec<Matrix>>,
}

impl Tensors {
    fn new(sys: &dyn DdeSystem, x: &Vector, alpha: &Vector, dynamic: &[usize]) -> Result<Self> {
        let delta = deltas(sys);
        let diff =
            |xp: &Vector, xm: &Vector, ap: &Vector, am: &Vector, h: f64| -> Result<Vec<Matrix>> {
                let jp = jacobians(sys, xp.as_slice(), ap.as_slice())?;
                let jm = jacobians(sys, xm.as_slice(), am.as_slice())?;
                Ok(jp
                    .a
                    .iter()
                    .zip(&jm.a)
                    .map(|(p, m)| restrict(&((p - m) / (2.0 * h)), dynamic))
                    .collect())
            };
        let mut dx = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            let h = 1e-5 * (1.0 + x[i].abs());
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            dx.push(diff(&xp, &xm, alpha, alpha, h)?);
        }
        let mut da = Vec::with_capacity(alpha.len());
        for i in 0..alpha.len() {
            let h = 1e-5 * (1.0 + alpha[i].abs());
            let (mut ap, mut am) = (alpha.clone(), alpha.clone());
            ap[i] += h;
            am[i] -= h;
            let mut d = diff(x, x, &ap, &am, h)?;
            for m in &mut d {
                *m *= delta[i];
            }
            da.push(d);
        }
        for m in dx.iter().chain(&da).flatten() {
            check_finite(m.as_slice(), "second-derivative tensor")?;
        }
        Ok(Tensors { dx, da })
    }

    /// Rows `(∂Â_k/∂x_i · v)'` for every x direction i.
    fn x_times(&self, k: usize, v: &Vector) -> Matrix {
        rows_times(&self.dx, k, v)
    }

    fn a_times(&self, k: usize, v: &Vector) -> Matrix {
        rows_times(&self.da, k, v)
    }
}

fn rows_times(d: &[Vec<Matrix>], k: usize, v: &Vector) -> Matrix {
    let mut out = Matrix::zeros(d.len(), v.len());
    for (i, di) in d.iter().enumerate() {
        out.row_mut(i).copy_from(&(&di[k] * v).transpose());
    }
    out
}

fn scaled_dfda(sys: &dyn DdeSystem, loc: &Local) -> Matrix {
    let delta = deltas(sys);
    let mut m = loc.dfda.clone();
    for (i, mut c) in m.column_iter_mut().enumerate() {
        c *= delta[i];
    }
    m
}

fn scaled_dtau_da(sys: &dyn DdeSystem, loc: &Local, k: usize) -> Vector {
    loc.dtau_da[k].component_mul(&deltas(sys))
}

fn fold_w(cp: &CriticalPoint) -> Result<&Vector> {
    match &cp.aux {
        Aux::Fold { w } if !cp.kind.is_hopf() => Ok(w),
        _ => Err(Error::Config(
            "fold blocks need a fold-kind critical point".into(),
        )),
    }
}

fn hopf_aux(cp: &CriticalPoint) -> Result<(&Vector, &Vector, f64)> {
    match &cp.aux {
        Aux::Hopf { a, b, omega } if cp.kind.is_hopf() => Ok((a, b, *omega)),
        _ => Err(Error::Config(
            "Hopf blocks need a Hopf-kind critical point".into(),
        )),
    }
}

/// Block matrix for (modified) fold points,
/// `[∇_x f', B12, 0; 0, B22, 2w; ∇_α f', B32, 0]`.
pub fn build_blocks_fold(sys: &dyn DdeSystem, cp: &CriticalPoint) -> Result<Matrix> {
    let loc = Local::at(sys, &cp.x_c, &cp.alpha_c)?;
    fold_blocks(sys, cp, &loc)
}

fn fold_blocks(sys: &dyn DdeSystem, cp: &CriticalPoint, loc: &Local) -> Result<Matrix> {
    let w = fold_w(cp)?;
    let sigma = cp.sigma;
    let n_x = sys.n_x();
    let n_d = loc.n_d();
    let n_a = sys.n_alpha();
    let t = Tensors::new(sys, &cp.x_c, &cp.alpha_c, &loc.dynamic)?;
    let (rw, ra) = (n_x, n_x + n_d);
    let mut b = Matrix::zeros(n_x + n_d + n_a, n_x + n_d + 1);

    b.view_mut((0, 0), (n_x, n_x))
        .copy_from(&loc.a_sum.transpose());
    b.view_mut((ra, 0), (n_a, n_x))
        .copy_from(&scaled_dfda(sys, loc).transpose());
    let mut b22 = Matrix::identity(n_d, n_d) * sigma;
    for (k, ak) in loc.a.iter().enumerate() {
        let e = (-sigma * loc.tau[k]).exp();
        let aw = ak * w;
        let b12 = (&loc.dtau_dx[k] * aw.transpose() * sigma - t.x_times(k, w)) * e;
        let b32 = (scaled_dtau_da(sys, loc, k) * aw.transpose() * sigma - t.a_times(k, w)) * e;
        let mut v12 = b.view_mut((0, n_x), (n_x, n_d));
        v12 += b12;
        let mut v32 = b.view_mut((ra, n_x), (n_a, n_d));
        v32 += b32;
        b22 -= ak.transpose() * e;
    }
    b.view_mut((rw, n_x), (n_d, n_d)).copy_from(&b22);
    b.view_mut((rw, n_x + n_d), (n_d, 1)).copy_from(&(w * 2.0));
    check_finite(b.as_slice(), "fold block matrix")?;
    Ok(b)
}

/// Block matrix for (modified) Hopf points with rows `(x, a, b, ω, α)` and
/// columns (steady state, real part, imaginary part, normalization, phase).
pub fn build_blocks_hopf(sys: &dyn DdeSystem, cp: &CriticalPoint) -> Result<Matrix> {
    let loc = Local::at(sys, &cp.x_c, &cp.alpha_c)?;
    hopf_blocks(sys, cp, &loc, false)
}

/// The `σ = 0` specialization written with plain `cos(ωτ_k)`, `sin(ωτ_k)`.
pub fn build_blocks_hopf_trig(sys: &dyn DdeSystem, cp: &CriticalPoint) -> Result<Matrix> {
    if cp.sigma != 0.0 {
        return Err(Error::Config(
            "the trigonometric Hopf blocks require sigma = 0".into(),
        ));
    }
    let loc = Local::at(sys, &cp.x_c, &cp.alpha_c)?;
    hopf_blocks(sys, cp, &loc, true)
}

fn hopf_blocks(sys: &dyn DdeSystem, cp: &CriticalPoint, loc: &Local, trig: bool) -> Result<Matrix> {
    let (a, bv, omega) = hopf_aux(cp)?;
    let sigma = cp.sigma;
    let n_x = sys.n_x();
    let n_d = loc.n_d();
    let n_a = sys.n_alpha();
    let t = Tensors::new(sys, &cp.x_c, &cp.alpha_c, &loc.dynamic)?;
    let (ra, rb, rw, rp) = (n_x, n_x + n_d, n_x + 2 * n_d, n_x + 2 * n_d + 1);
    let (cr, ci, cn, cph) = (n_x, n_x + n_d, n_x + 2 * n_d, n_x + 2 * n_d + 1);
    let mut b = Matrix::zeros(rp + n_a, n_x + 2 * n_d + 2);

    b.view_mut((0, 0), (n_x, n_x))
        .copy_from(&loc.a_sum.transpose());
    b.view_mut((rp, 0), (n_a, n_x))
        .copy_from(&scaled_dfda(sys, loc).transpose());

    let eye = Matrix::identity(n_d, n_d);
    let mut b22 = &eye * sigma;
    let mut b23 = &eye * omega;
    let mut b32 = &eye * (-omega);
    let mut b42 = -bv.transpose();
    let mut b43 = a.transpose();
    for (k, ak) in loc.a.iter().enumerate() {
        let tk = loc.tau[k];
        let (s, c) = if trig {
            (omega * tk).sin_cos()
        } else {
            sc(sigma, omega, tk)
        };
        let ca_sb = ak * (a * c + bv * s);
        let cb_sa = ak * (bv * c - a * s);
        let sa_cb = ak * (a * s - bv * c);
        let sb_ca = ak * (bv * s + a * c);
        let (u12, u13) = if trig {
            (&sa_cb * omega, &sb_ca * omega)
        } else {
            (
                &ca_sb * sigma + &sa_cb * omega,
                &cb_sa * sigma + &sb_ca * omega,
            )
        };
        let ta = t.x_times(k, a);
        let tb = t.x_times(k, bv);
        let b12 = &loc.dtau_dx[k] * u12.transpose() - &ta * c - &tb * s;
        let b13 = &loc.dtau_dx[k] * u13.transpose() - &tb * c + &ta * s;
        let gta = scaled_dtau_da(sys, loc, k);
        let pa = t.a_times(k, a);
        let pb = t.a_times(k, bv);
        let b52 = &gta * u12.transpose() - &pa * c - &pb * s;
        let b53 = &gta * u13.transpose() - &pb * c + &pa * s;
        let mut v = b.view_mut((0, cr), (n_x, n_d));
        v += b12;
        let mut v = b.view_mut((0, ci), (n_x, n_d));
        v += b13;
        let mut v = b.view_mut((rp, cr), (n_a, n_d));
        v += b52;
        let mut v = b.view_mut((rp, ci), (n_a, n_d));
        v += b53;

        let at = ak.transpose();
        b22 -= &at * c;
        b23 += &at * s;
        b32 -= &at * s;
        b42 += sa_cb.transpose() * tk;
        b43 += sb_ca.transpose() * tk;
    }
    b.view_mut((ra, cr), (n_d, n_d)).copy_from(&b22);
    b.view_mut((ra, ci), (n_d, n_d)).copy_from(&b23);
    b.view_mut((rb, cr), (n_d, n_d)).copy_from(&b32);
    b.view_mut((rb, ci), (n_d, n_d)).copy_from(&b22);
    b.view_mut((rw, cr), (1, n_d)).copy_from(&b42);
    b.view_mut((rw, ci), (1, n_d)).copy_from(&b43);
    b.view_mut((ra, cn), (n_d, 1)).copy_from(&(a * 2.0));
    b.view_mut((ra, cph), (n_d, 1)).copy_from(bv);
    b.view_mut((rb, cn), (n_d, 1)).copy_from(&(bv * 2.0));
    b.view_mut((rb, cph), (n_d, 1)).copy_from(a);
    check_finite(b.as_slice(), "Hopf block matrix")?;
    Ok(b)
}

/// Block matrix of the critical point's kind.
pub fn build_blocks(sys: &dyn DdeSystem, cp: &CriticalPoint) -> Result<Matrix> {
    if cp.kind.is_hopf() {
        build_blocks_hopf(sys, cp)
    } else {
        build_blocks_fold(sys, cp)
    }
}

/// Augmented residual together with its transposed Jacobian with respect to
/// `(x, aux, α/Δα)`.
pub(crate) fn augmented_jacobian(
    sys: &dyn DdeSystem,
    cp: &CriticalPoint,
) -> Result<(Vector, Matrix)> {
    let loc = Local::at(sys, &cp.x_c, &cp.alpha_c)?;
    let g = residual_from_local(cp.kind, &loc, &cp.aux, cp.sigma)?;
    let b = if cp.kind.is_hopf() {
        hopf_blocks(sys, cp, &loc, false)?
    } else {
        fold_blocks(sys, cp, &loc)?
    };
    Ok((g, b))
}

/// Derivative of the augmented residual with respect to the decay rate σ.
fn sigma_derivative(cp: &CriticalPoint, loc: &Local) -> Vector {
    let n_x = loc.f.len();
    let n_d = loc.n_d();
    let mut g = Vector::zeros(cp.kind.residual_len(n_x, n_d));
    match &cp.aux {
        Aux::Fold { w } => {
            let mut e = w.clone();
            for (k, ak) in loc.a.iter().enumerate() {
                e += ak * w * (loc.tau[k] * (-cp.sigma * loc.tau[k]).exp());
            }
            g.rows_mut(n_x, n_d).copy_from(&e);
        }
        Aux::Hopf { a, b, omega } => {
            let mut re = a.clone();
            let mut im = b.clone();
            for (k, ak) in loc.a.iter().enumerate() {
                let (s, c) = sc(cp.sigma, *omega, loc.tau[k]);
                re += ak * (a * c + b * s) * loc.tau[k];
                im += ak * (b * c - a * s) * loc.tau[k];
            }
            g.rows_mut(n_x, n_d).copy_from(&re);
            g.rows_mut(n_x + n_d, n_d).copy_from(&im);
        }
    }
    g
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormalVectorSolution {
    /// Unit normal in scaled parameter space, pointing to the side where the
    /// critical eigenvalue's real part exceeds σ.
    pub r: Vector,
    pub kappa: Vector,
    pub critical: CriticalPoint,
    pub residual_norm: f64,
}

/// `max(‖top·κ‖∞, ‖B_α κ − r‖∞, |r'r − 1|)`.
pub fn nv_residual(b: &Matrix, kappa: &Vector, r: &Vector) -> f64 {
    let n_a = r.len();
    let top = b.rows(0, b.nrows() - n_a) * kappa;
    let bottom = b.rows(b.nrows() - n_a, n_a) * kappa - r;
    top.amax()
        .max(bottom.amax())
        .max((r.norm_squared() - 1.0).abs())
}

pub fn solve_normal_vector(
    sys: &dyn DdeSystem,
    cp: &CriticalPoint,
) -> Result<NormalVectorSolution> {
    let loc = Local::at(sys, &cp.x_c, &cp.alpha_c)?;
    let b = if cp.kind.is_hopf() {
        hopf_blocks(sys, cp, &loc, false)?
    } else {
        fold_blocks(sys, cp, &loc)?
    };
    let n_a = sys.n_alpha();
    let n_top = b.nrows() - n_a;
    let top = b.rows(0, n_top).into_owned();
    let bottom = b.rows(n_top, n_a).into_owned();
    let (basis, _) = null_space(&top, 1e-10);
    if basis.ncols() == 0 {
        return Err(Error::Degenerate("top block has full column rank".into()));
    }
    let (mut kappa, r_raw) = if basis.ncols() == 1 {
        let k = basis.column(0).into_owned();
        let r = &bottom * &k;
        (k, r)
    } else {
        let proj = &bottom * &basis;
        let svd = proj.clone().svd(true, true);
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let s1 = svd.singular_values[order[0]];
        let s2 = order.get(1).map(|&i| svd.singular_values[i]).unwrap_or(0.0);
        if s1 == 0.0 || s2 > 1e-8 * s1 {
            return Err(Error::Degenerate(format!(
                "null space of dimension {} projects onto {} parameter directions",
                basis.ncols(),
                if s1 == 0.0 { 0 } else { 2 }
            )));
        }
        let v = svd.v_t.unwrap().row(order[0]).transpose();
        let k = &basis * v;
        let r = &bottom * &k;
        (k, r)
    };
    let rn = r_raw.norm();
    if rn <= 1e-12 * bottom.amax().max(1e-300) {
        return Err(Error::Tangency);
    }
    kappa /= rn;
    let mut r = r_raw / rn;

    let flip = orientation_flip(sys, cp, &loc, &b, &kappa, &r)?;
    if flip {
        kappa = -kappa;
        r = -r;
    }
    let residual_norm = nv_residual(&b, &kappa, &r);
    Ok(NormalVectorSolution {
        r,
        kappa,
        critical: cp.clone(),
        residual_norm,
    })
}

/// Decides whether `(κ, r)` must be negated so that `r` points to the
/// unstable side of the manifold.
fn orientation_flip(
    sys: &dyn DdeSystem,
    cp: &CriticalPoint,
    loc: &Local,
    b: &Matrix,
    kappa: &Vector,
    r: &Vector,
) -> Result<bool> {
    // dσ_crit/dᾱ = −r / (κ'·∂G/∂σ)
    let gs = sigma_derivative(cp, loc);
    let p = kappa.dot(&gs);
    if p.abs() > 1e-8 * kappa.norm() * gs.norm() {
        return Ok(p > 0.0);
    }
    if let Aux::Fold { w } = &cp.aux {
        // at a fold the steady states cease to exist on the side where
        // ψ'f_α·u has the sign of ψ'f_xx[w, w]
        let n_x = sys.n_x();
        let psi = kappa.rows(0, n_x).into_owned();
        let psi_d = Vector::from_iterator(loc.n_d(), loc.dynamic.iter().map(|&i| psi[i]));
        let mut w_full = Vector::zeros(n_x);
        for (j, &i) in loc.dynamic.iter().enumerate() {
            w_full[i] = w[j];
        }
        let t = Tensors::new(sys, &cp.x_c, &cp.alpha_c, &loc.dynamic)?;
        let curv: f64 = (0..loc.a.len())
            .map(|k| w_full.dot(&(t.x_times(k, w) * &psi_d)))
            .sum();
        let n_a = sys.n_alpha();
        let dfda = b.view((b.nrows() - n_a, 0), (n_a, n_x)) * &psi;
        let q = dfda.dot(r) * curv;
        if q.abs() > 1e-10 * dfda.norm() * curv.abs().max(1e-300) && q != 0.0 {
            return Ok(q < 0.0);
        }
    }
    Ok(r[r.iamax()] < 0.0)
}
