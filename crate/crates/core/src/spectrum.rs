//! Rightmost eigenvalues of the linearization at a steady state.
//!
//! Seeds come from a Chebyshev collocation of the infinitesimal generator on
//! `[−τ_max, 0]`; each seed is then refined by Newton's method on the
//! characteristic matrix `Δ(λ) = λI − Σ_k A_k e^{−λτ_k}`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{eval_delays, jacobians, restrict, DdeSystem, Matrix, SteadyState, Vector};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Linearization restricted to the dynamic components.
#[derive(Clone, Debug)]
pub struct Linearization {
    /// `a[0]` belongs to τ₀ = 0, `a[k]` to `tau[k − 1]`.
    pub a: Vec<Matrix>,
    pub tau: Vec<f64>,
    pub symmetry: Vec<Vector>,
}

impl Linearization {
    pub fn new(a: Vec<Matrix>, tau: Vec<f64>) -> Self {
        assert_eq!(a.len(), tau.len() + 1, "one matrix per delay plus A_0");
        Linearization {
            a,
            tau,
            symmetry: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.a[0].nrows()
    }

    fn delay(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.tau[k - 1]
        }
    }

    /// `Δ(λ)`.
    pub fn characteristic(&self, lambda: Complex64) -> CMatrix {
        let n = self.dim();
        let mut d = CMatrix::from_diagonal_element(n, n, lambda);
        for (k, a) in self.a.iter().enumerate() {
            let e = (-lambda * self.delay(k)).exp();
            d -= a.map(|v| Complex64::new(v, 0.0)) * e;
        }
        d
    }

    /// `dΔ/dλ = I + Σ τ_k A_k e^{−λτ_k}`.
    pub fn characteristic_derivative(&self, lambda: Complex64) -> CMatrix {
        let n = self.dim();
        let mut d = CMatrix::identity(n, n);
        for (k, a) in self.a.iter().enumerate().skip(1) {
            let t = self.delay(k);
            let e = (-lambda * t).exp() * t;
            d += a.map(|v| Complex64::new(v, 0.0)) * e;
        }
        d
    }
}

/// `Δ(λ)` for the given Jacobians and delays, with its smallest singular value.
pub fn char_residual(lambda: Complex64, a: &[Matrix], tau: &[f64]) -> Result<(CMatrix, f64)> {
    if !lambda.re.is_finite() || !lambda.im.is_finite() {
        return Err(Error::NonFinite {
            context: "eigenvalue",
            index: 0,
        });
    }
    let lin = Linearization::new(a.to_vec(), tau.to_vec());
    let d = lin.characteristic(lambda);
    let smin = d.clone().singular_values().min();
    Ok((d, smin))
}

/// Projected Jacobians and delay values at a steady state.
pub fn linearize(sys: &dyn DdeSystem, ss: &SteadyState) -> Result<Linearization> {
    let jac = jacobians(sys, ss.x.as_slice(), ss.alpha.as_slice())?;
    let tau = eval_delays(sys, ss.x.as_slice(), ss.alpha.as_slice())?;
    let dynamic = sys.dynamic_states();
    let a = jac.a.iter().map(|m| restrict(m, &dynamic)).collect();
    Ok(Linearization {
        a,
        tau,
        symmetry: sys.symmetry_directions(ss.x.as_slice(), ss.alpha.as_slice()),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Spectrum {
    /// Sorted by descending real part; conjugate pairs listed with positive imaginary part first.
    pub eigenvalues: Vec<Complex64>,
    #[serde(skip)]
    pub eigenvectors: Vec<CVector>,
    pub discretization_order: usize,
    pub leading: Complex64,
    pub converged: bool,
}

impl Spectrum {
    /// Rightmost eigenvalue with `|Im λ| ≤ tol` together with its eigenvector.
    pub fn rightmost_real(&self, tol: f64) -> Option<(Complex64, &CVector)> {
        self.eigenvalues
            .iter()
            .zip(&self.eigenvectors)
            .find(|(l, _)| l.im.abs() <= tol)
            .map(|(l, v)| (*l, v))
    }

    /// Rightmost eigenvalue with `Im λ > tol`.
    pub fn rightmost_complex(&self, tol: f64) -> Option<(Complex64, &CVector)> {
        self.eigenvalues
            .iter()
            .zip(&self.eigenvectors)
            .find(|(l, _)| l.im > tol)
            .map(|(l, v)| (*l, v))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SpectrumOptions {
    pub order: usize,
    pub cap: usize,
    /// Eigenvalues with `Re λ > Re(leading) − window` are reported.
    pub window: f64,
    pub max_candidates: usize,
    pub tol_move: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            order: 20,
            cap: 160,
            window: 5.0,
            max_candidates: 80,
            tol_move: 1e-8,
        }
    }
}

pub fn compute_spectrum(sys: &dyn DdeSystem, ss: &SteadyState, order: usize) -> Result<Spectrum> {
    let opts = SpectrumOptions {
        order,
        ..Default::default()
    };
    spectrum_of(&linearize(sys, ss)?, &opts)
}

pub fn compute_spectrum_with(
    sys: &dyn DdeSystem,
    ss: &SteadyState,
    opts: &SpectrumOptions,
) -> Result<Spectrum> {
    spectrum_of(&linearize(sys, ss)?, opts)
}

/// Spectrum of a linearization, doubling the collocation order until the
/// leading eigenvalue settles.
pub fn spectrum_of(lin: &Linearization, opts: &SpectrumOptions) -> Result<Spectrum> {
    let tau_max = lin.tau.iter().copied().fold(0.0, f64::max);
    let delayed_cols = delayed_columns(lin);
    if tau_max <= 0.0 || delayed_cols.is_empty() {
        let mut sum = lin.a[0].clone();
        for a in &lin.a[1..] {
            sum += a;
        }
        let seeds: Vec<Complex64> = sum.complex_eigenvalues().iter().copied().collect();
        return Ok(finish(lin, &seeds, 0, true, opts));
    }

    let mut order = opts.order.max(4);
    let mut previous = single_order(lin, &delayed_cols, tau_max, order, opts);
    loop {
        let next_order = order * 2;
        if next_order > opts.cap {
            return Err(Error::SpectrumNotConverged {
                previous: previous.as_ref().map(|s| s.leading).unwrap_or_default(),
                last: previous.as_ref().map(|s| s.leading).unwrap_or_default(),
            });
        }
        let next = single_order(lin, &delayed_cols, tau_max, next_order, opts);
        if let (Some(p), Some(n)) = (&previous, &next) {
            if (p.leading - n.leading).norm() < opts.tol_move {
                let mut out = n.clone();
                out.converged = true;
                return Ok(out);
            }
            if next_order * 2 > opts.cap {
                return Err(Error::SpectrumNotConverged {
                    previous: p.leading,
                    last: n.leading,
                });
            }
        }
        previous = next;
        order = next_order;
    }
}

fn single_order(
    lin: &Linearization,
    cols: &[usize],
    tau_max: f64,
    order: usize,
    opts: &SpectrumOptions,
) -> Option<Spectrum> {
    let m = collocation_matrix(lin, cols, tau_max, order);
    let seeds: Vec<Complex64> = m.complex_eigenvalues().iter().copied().collect();
    let s = finish(lin, &seeds, order, false, opts);
    if s.eigenvalues.is_empty() {
        None
    } else {
        Some(s)
    }
}

/// Columns of the state that enter through some delayed term.
fn delayed_columns(lin: &Linearization) -> Vec<usize> {
    let n = lin.dim();
    (0..n)
        .filter(|&c| {
            lin.a
                .iter()
                .enumerate()
                .skip(1)
                .any(|(k, a)| lin.tau[k - 1] > 0.0 && a.column(c).iter().any(|v| *v != 0.0))
        })
        .collect()
}

/// Chebyshev differentiation matrix on the points `cos(πj/N)`, j = 0..N.
pub fn cheb(n: usize) -> (Matrix, Vec<f64>) {
    let x: Vec<f64> = (0..=n)
        .map(|j| (std::f64::consts::PI * j as f64 / n as f64).cos())
        .collect();
    let c: Vec<f64> = (0..=n)
        .map(|j| {
            let base = if j == 0 || j == n { 2.0 } else { 1.0 };
            if j % 2 == 0 {
                base
            } else {
                -base
            }
        })
        .collect();
    let mut d = Matrix::zeros(n + 1, n + 1);
    for i in 0..=n {
        for j in 0..=n {
            if i != j {
                d[(i, j)] = c[i] / c[j] / (x[i] - x[j]);
            }
        }
    }
    for i in 0..=n {
        let s: f64 = d.row(i).sum();
        d[(i, i)] = -s;
    }
    (d, x)
}

/// Barycentric Lagrange weights of the Chebyshev points evaluated at `t ∈ [−1, 1]`.
fn cheb_interp_weights(x: &[f64], t: f64) -> Vec<f64> {
    let n = x.len() - 1;
    if let Some(j) = x.iter().position(|xj| (xj - t).abs() < 1e-14) {
        let mut w = vec![0.0; n + 1];
        w[j] = 1.0;
        return w;
    }
    let bw: Vec<f64> = (0..=n)
        .map(|j| {
            let s = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == n {
                0.5 * s
            } else {
                s
            }
        })
        .collect();
    let terms: Vec<f64> = (0..=n).map(|j| bw[j] / (t - x[j])).collect();
    let total: f64 = terms.iter().sum();
    terms.iter().map(|v| v / total).collect()
}

/// Discretized generator. Unknowns: the full dynamic state at θ = 0 followed by
/// the delayed columns at nodes θ_1..θ_N.
fn collocation_matrix(lin: &Linearization, cols: &[usize], tau_max: f64, n: usize) -> Matrix {
    let nd = lin.dim();
    let ns = cols.len();
    let dim = nd + n * ns;
    let (d, x) = cheb(n);
    let d = d * (2.0 / tau_max);
    let hist = |j: usize, s: usize| nd + (j - 1) * ns + s;
    let mut m = Matrix::zeros(dim, dim);

    m.view_mut((0, 0), (nd, nd)).copy_from(&lin.a[0]);
    for (k, a) in lin.a.iter().enumerate().skip(1) {
        let t = lin.tau[k - 1];
        if t <= 0.0 {
            let mut block = m.view_mut((0, 0), (nd, nd));
            block += a;
            continue;
        }
        let w = cheb_interp_weights(&x, 1.0 - 2.0 * t / tau_max);
        for (j, wj) in w.iter().enumerate() {
            if *wj == 0.0 {
                continue;
            }
            for (si, &c) in cols.iter().enumerate() {
                let col = if j == 0 { c } else { hist(j, si) };
                for r in 0..nd {
                    m[(r, col)] += a[(r, c)] * wj;
                }
            }
        }
    }
    for j in 1..=n {
        for (si, &c) in cols.iter().enumerate() {
            let r = hist(j, si);
            m[(r, c)] += d[(j, 0)];
            for l in 1..=n {
                m[(r, hist(l, si))] += d[(j, l)];
            }
        }
    }
    m
}

/// Refines seeds, removes duplicates and symmetry-induced zeros, adds
/// conjugates and applies the reporting window.
fn finish(
    lin: &Linearization,
    seeds: &[Complex64],
    order: usize,
    converged: bool,
    opts: &SpectrumOptions,
) -> Spectrum {
    let mut cands: Vec<Complex64> = seeds
        .iter()
        .filter(|l| l.re.is_finite() && l.im.is_finite() && l.im >= -1e-10)
        .copied()
        .collect();
    cands.sort_by(|a, b| b.re.total_cmp(&a.re));
    if let Some(top) = cands.first().map(|c| c.re) {
        cands.retain(|c| c.re > top - opts.window - 1.0);
    }
    cands.truncate(opts.max_candidates);

    let mut found: Vec<(Complex64, CVector)> = Vec::new();
    for seed in cands {
        let Some((lambda, v)) = correct_eigenpair(lin, seed) else {
            continue;
        };
        if is_symmetry_mode(lin, lambda, &v) {
            continue;
        }
        let lambda = if lambda.im.abs() < 1e-10 * (1.0 + lambda.re.abs()) {
            Complex64::new(lambda.re, 0.0)
        } else if lambda.im < 0.0 {
            lambda.conj()
        } else {
            lambda
        };
        let v = if lambda.im == 0.0 { realify(&v) } else { v };
        let dup = found
            .iter()
            .any(|(l, _)| (l - lambda).norm() < 1e-8 * (1.0 + lambda.norm()));
        if !dup {
            found.push((lambda, v));
        }
    }

    let mut all: Vec<(Complex64, CVector)> = Vec::new();
    for (l, v) in found {
        if l.im > 0.0 {
            all.push((l.conj(), v.map(|c| c.conj())));
        }
        all.push((l, v));
    }
    all.sort_by(|a, b| b.0.re.total_cmp(&a.0.re).then(b.0.im.total_cmp(&a.0.im)));
    let leading = all.first().map(|p| p.0).unwrap_or_default();
    all.retain(|(l, _)| l.re > leading.re - opts.window);
    let (eigenvalues, eigenvectors) = all.into_iter().unzip();
    Spectrum {
        eigenvalues,
        eigenvectors,
        discretization_order: order,
        leading,
        converged,
    }
}

fn is_symmetry_mode(lin: &Linearization, lambda: Complex64, v: &CVector) -> bool {
    if lambda.norm() > 1e-7 {
        return false;
    }
    lin.symmetry.iter().any(|s| {
        let sc = s.map(|x| Complex64::new(x, 0.0));
        let overlap = sc.dotc(v).norm() / (s.norm() * v.norm());
        overlap > 0.99
    })
}

/// Rotates a complex vector so that it is (numerically) real.
fn realify(v: &CVector) -> CVector {
    let (i, _) =
        v.iter().enumerate().fold(
            (0, 0.0),
            |acc, (i, c)| if c.norm() > acc.1 { (i, c.norm()) } else { acc },
        );
    let phase = v[i] / v[i].norm();
    let out = v.map(|c| Complex64::new((c / phase).re, 0.0));
    let n = out.norm();
    out / Complex64::new(n, 0.0)
}

/// Bordered Newton refinement of an eigenpair of `Δ(λ)v = 0`.
pub fn correct_eigenpair(lin: &Linearization, seed: Complex64) -> Option<(Complex64, CVector)> {
    let n = lin.dim();
    let mut lambda = seed;
    let mut v = initial_vector(lin, seed);
    let c = v.clone();
    for _ in 0..40 {
        let d = lin.characteristic(lambda);
        let dp = lin.characteristic_derivative(lambda);
        let r = &d * &v;
        let rn = c.dotc(&v) - Complex64::new(1.0, 0.0);
        let mut jac = CMatrix::zeros(n + 1, n + 1);
        jac.view_mut((0, 0), (n, n)).copy_from(&d);
        jac.view_mut((0, n), (n, 1)).copy_from(&(&dp * &v));
        jac.view_mut((n, 0), (1, n)).copy_from(&c.adjoint());
        let mut rhs = CVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&(-r));
        rhs[n] = -rn;
        let step = jac.lu().solve(&rhs)?;
        v += step.rows(0, n);
        lambda += step[n];
        if !lambda.re.is_finite() || !lambda.im.is_finite() {
            return None;
        }
        if step[n].norm() <= 1e-14 * (1.0 + lambda.norm())
            && step.rows(0, n).norm() <= 1e-12 * v.norm()
        {
            break;
        }
    }
    let vn = v.norm();
    if vn == 0.0 || !vn.is_finite() {
        return None;
    }
    let v = v / Complex64::new(vn, 0.0);
    let res = (lin.characteristic(lambda) * &v).norm();
    let scale = 1.0 + lin.a.iter().map(|a| a.amax()).fold(0.0, f64::max);
    if res <= 1e-10 * scale {
        Some((lambda, normalize_phase(v)))
    } else {
        None
    }
}

fn normalize_phase(v: CVector) -> CVector {
    let (i, _) = v.iter().enumerate().fold((0, 0.0), |acc, (i, c)| {
        if c.norm() > acc.1 + 1e-12 {
            (i, c.norm())
        } else {
            acc
        }
    });
    let phase = v[i] / v[i].norm();
    v.map(|c| c / phase)
}

fn initial_vector(lin: &Linearization, lambda: Complex64) -> CVector {
    let n = lin.dim();
    let mut v = CVector::from_fn(n, |i, _| {
        Complex64::new(1.0 + 0.1 * (i as f64 * 0.7).sin(), 0.05 * i as f64)
    });
    v /= Complex64::new(v.norm(), 0.0);
    let lu = lin.characteristic(lambda).lu();
    for _ in 0..3 {
        match lu.solve(&v) {
            Some(w) if w.iter().all(|c| c.re.is_finite() && c.im.is_finite()) && w.norm() > 0.0 => {
                v = &w / Complex64::new(w.norm(), 0.0);
            }
            _ => break,
        }
    }
    v
}

/// `(Re(leading) < sigma_bar, sigma_bar − Re(leading))`.
pub fn is_stable(spec: &Spectrum, sigma_bar: f64) -> Result<(bool, f64)> {
    if !spec.converged {
        return Err(Error::UnconvergedSpectrum);
    }
    let margin = sigma_bar - spec.leading.re;
    Ok((margin > 0.0, margin))
}
