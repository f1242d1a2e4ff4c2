//! DDE system abstraction, residual and Jacobian evaluation, steady states.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Metadata of one model parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamMeta {
    pub name: String,
    pub nominal: f64,
    /// Half-width of the uncertainty interval.
    pub delta: f64,
    pub optimizable: bool,
    pub lower: f64,
    pub upper: f64,
}

impl ParamMeta {
    pub fn new(name: &str, nominal: f64, delta: f64) -> Self {
        ParamMeta {
            name: name.to_string(),
            nominal,
            delta,
            optimizable: false,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn optimizable(mut self, lower: f64, upper: f64) -> Self {
        self.optimizable = true;
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn bounded(mut self, lower: f64, upper: f64) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }
}

/// Linearization data at a steady state.
#[derive(Clone, Debug)]
pub struct Jacobians {
    /// `a[k] = ∂f/∂x_k` for k = 0..=m.
    pub a: Vec<Matrix>,
    pub dfdalpha: Matrix,
    /// Gradients of τ_k (k = 1..=m) with respect to the current state.
    pub dtau_dx: Vec<Vector>,
    pub dtau_dalpha: Vec<Vector>,
}

impl Jacobians {
    /// `Σ_k A_k`, the Jacobian of the steady-state residual.
    pub fn steady(&self) -> Matrix {
        let mut s = self.a[0].clone();
        for a in &self.a[1..] {
            s += a;
        }
        s
    }
}

/// A right-hand side `f(x(t), x(t−τ_1), …, x(t−τ_m), α)` with delays `τ_k(x(t), α)`.
///
/// Implementations must be re-entrant; every method takes `&self`.
pub trait DdeSystem: Send + Sync {
    fn n_x(&self) -> usize;

    /// Number of (nonzero) delays m.
    fn n_delays(&self) -> usize;

    fn params(&self) -> &[ParamMeta];

    fn n_alpha(&self) -> usize {
        self.params().len()
    }

    /// `states[0]` is x(t), `states[k]` is x(t−τ_k).
    fn rhs(&self, states: &[&[f64]], alpha: &[f64], out: &mut [f64]);

    fn delays(&self, x: &[f64], alpha: &[f64], out: &mut [f64]);

    fn analytic_jacobians(&self, _x: &[f64], _alpha: &[f64]) -> Option<Jacobians> {
        None
    }

    /// Components that carry dynamics. The rows and columns outside this set
    /// are algebraic: they close the steady-state system but are frozen in
    /// linear stability analysis and time integration.
    fn dynamic_states(&self) -> Vec<usize> {
        (0..self.n_x()).collect()
    }

    /// Directions (in dynamic coordinates) generated by continuous symmetries
    /// at a steady state. Eigenvalues at zero along these are not reported.
    fn symmetry_directions(&self, _x: &[f64], _alpha: &[f64]) -> Vec<Vector> {
        Vec::new()
    }
}

type RhsFn = dyn Fn(&[&[f64]], &[f64], &mut [f64]) + Send + Sync;
type DelayFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;
type JacFn = dyn Fn(&[f64], &[f64]) -> Jacobians + Send + Sync;

/// A system assembled from closures.
pub struct FnSystem {
    n_x: usize,
    m: usize,
    params: Vec<ParamMeta>,
    rhs: Box<RhsFn>,
    delays: Box<DelayFn>,
    jac: Option<Box<JacFn>>,
}

impl FnSystem {
    pub fn new<F>(n_x: usize, params: Vec<ParamMeta>, rhs: F) -> Self
    where
        F: Fn(&[&[f64]], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        FnSystem {
            n_x,
            m: 0,
            params,
            rhs: Box::new(rhs),
            delays: Box::new(|_, _, _| {}),
            jac: None,
        }
    }

    pub fn with_delays<D>(mut self, m: usize, delays: D) -> Self
    where
        D: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.m = m;
        self.delays = Box::new(delays);
        self
    }

    /// Constant delays.
    pub fn with_fixed_delays(self, taus: Vec<f64>) -> Self {
        let m = taus.len();
        self.with_delays(m, move |_, _, out| out.copy_from_slice(&taus))
    }

    /// Replaces the parameter metadata (names, nominals, bounds) without
    /// changing the equations; the count must match.
    pub fn with_params(mut self, params: Vec<ParamMeta>) -> Result<Self> {
        check_dim("parameters", self.params.len(), params.len())?;
        self.params = params;
        Ok(self)
    }

    pub fn with_jacobians<J>(mut self, jac: J) -> Self
    where
        J: Fn(&[f64], &[f64]) -> Jacobians + Send + Sync + 'static,
    {
        self.jac = Some(Box::new(jac));
        self
    }
}

impl DdeSystem for FnSystem {
    fn n_x(&self) -> usize {
        self.n_x
    }
    fn n_delays(&self) -> usize {
        self.m
    }
    fn params(&self) -> &[ParamMeta] {
        &self.params
    }
    fn rhs(&self, states: &[&[f64]], alpha: &[f64], out: &mut [f64]) {
        (self.rhs)(states, alpha, out)
    }
    fn delays(&self, x: &[f64], alpha: &[f64], out: &mut [f64]) {
        (self.delays)(x, alpha, out)
    }
    fn analytic_jacobians(&self, x: &[f64], alpha: &[f64]) -> Option<Jacobians> {
        self.jac.as_ref().map(|j| j(x, alpha))
    }
}

pub fn nominal(sys: &dyn DdeSystem) -> Vector {
    Vector::from_iterator(sys.n_alpha(), sys.params().iter().map(|p| p.nominal))
}

pub fn deltas(sys: &dyn DdeSystem) -> Vector {
    Vector::from_iterator(sys.n_alpha(), sys.params().iter().map(|p| p.delta))
}

pub fn param_index(sys: &dyn DdeSystem, name: &str) -> Option<usize> {
    sys.params().iter().position(|p| p.name == name)
}

fn check_inputs(sys: &dyn DdeSystem, x: &[f64], alpha: &[f64]) -> Result<()> {
    check_dim("state", sys.n_x(), x.len())?;
    check_dim("parameters", sys.n_alpha(), alpha.len())
}

/// `f(x, …, x, α)`.
pub fn eval_residual(sys: &dyn DdeSystem, x: &[f64], alpha: &[f64]) -> Result<Vector> {
    check_inputs(sys, x, alpha)?;
    let states = vec![x; sys.n_delays() + 1];
    let mut out = vec![0.0; sys.n_x()];
    sys.rhs(&states, alpha, &mut out);
    check_finite(&out, "residual")?;
    Ok(Vector::from_vec(out))
}

/// Delay values `τ_1..τ_m` at state x.
pub fn eval_delays(sys: &dyn DdeSystem, x: &[f64], alpha: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; sys.n_delays()];
    sys.delays(x, alpha, &mut out);
    check_finite(&out, "delays")?;
    if let Some((index, &value)) = out.iter().enumerate().find(|(_, t)| **t < 0.0) {
        return Err(Error::NegativeDelay {
            index: index + 1,
            value,
        });
    }
    Ok(out)
}

pub(crate) fn fd_step(v: f64) -> f64 {
    f64::EPSILON.cbrt() * v.abs().max(1.0)
}

/// Central finite-difference linearization with cube-root-of-epsilon steps.
pub fn fd_jacobians(sys: &dyn DdeSystem, x: &[f64], alpha: &[f64]) -> Result<Jacobians> {
    check_inputs(sys, x, alpha)?;
    let n = sys.n_x();
    let m = sys.n_delays();
    let p = sys.n_alpha();
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];

    let mut a = Vec::with_capacity(m + 1);
    for k in 0..=m {
        let mut ak = Matrix::zeros(n, n);
        let mut xp = x.to_vec();
        for i in 0..n {
            let h = fd_step(x[i]);
            xp[i] = x[i] + h;
            {
                let mut states = vec![x; m + 1];
                states[k] = &xp;
                sys.rhs(&states, alpha, &mut plus);
            }
            xp[i] = x[i] - h;
            {
                let mut states = vec![x; m + 1];
                states[k] = &xp;
                sys.rhs(&states, alpha, &mut minus);
            }
            xp[i] = x[i];
            for r in 0..n {
                ak[(r, i)] = (plus[r] - minus[r]) / (2.0 * h);
            }
        }
        a.push(ak);
    }

    let states = vec![x; m + 1];
    let mut dfdalpha = Matrix::zeros(n, p);
    let mut ap = alpha.to_vec();
    for i in 0..p {
        let h = fd_step(alpha[i]);
        ap[i] = alpha[i] + h;
        sys.rhs(&states, &ap, &mut plus);
        ap[i] = alpha[i] - h;
        sys.rhs(&states, &ap, &mut minus);
        ap[i] = alpha[i];
        for r in 0..n {
            dfdalpha[(r, i)] = (plus[r] - minus[r]) / (2.0 * h);
        }
    }

    let mut dtau_dx = vec![Vector::zeros(n); m];
    let mut dtau_dalpha = vec![Vector::zeros(p); m];
    if m > 0 {
        let mut tp = vec![0.0; m];
        let mut tm = vec![0.0; m];
        let mut xp = x.to_vec();
        for i in 0..n {
            let h = fd_step(x[i]);
            xp[i] = x[i] + h;
            sys.delays(&xp, alpha, &mut tp);
            xp[i] = x[i] - h;
            sys.delays(&xp, alpha, &mut tm);
            xp[i] = x[i];
            for k in 0..m {
                dtau_dx[k][i] = (tp[k] - tm[k]) / (2.0 * h);
            }
        }
        for i in 0..p {
            let h = fd_step(alpha[i]);
            ap[i] = alpha[i] + h;
            sys.delays(x, &ap, &mut tp);
            ap[i] = alpha[i] - h;
            sys.delays(x, &ap, &mut tm);
            ap[i] = alpha[i];
            for k in 0..m {
                dtau_dalpha[k][i] = (tp[k] - tm[k]) / (2.0 * h);
            }
        }
    }

    let jac = Jacobians {
        a,
        dfdalpha,
        dtau_dx,
        dtau_dalpha,
    };
    check_jacobians(&jac)?;
    Ok(jac)
}

fn check_jacobians(j: &Jacobians) -> Result<()> {
    for a in &j.a {
        check_finite(a.as_slice(), "state Jacobian")?;
    }
    check_finite(j.dfdalpha.as_slice(), "parameter Jacobian")?;
    for g in j.dtau_dx.iter().chain(&j.dtau_dalpha) {
        check_finite(g.as_slice(), "delay gradient")?;
    }
    Ok(())
}

/// Linearization at the steady-state call pattern; analytic when the system provides it.
pub fn jacobians(sys: &dyn DdeSystem, x: &[f64], alpha: &[f64]) -> Result<Jacobians> {
    check_inputs(sys, x, alpha)?;
    match sys.analytic_jacobians(x, alpha) {
        Some(j) => {
            check_jacobians(&j)?;
            Ok(j)
        }
        None => fd_jacobians(sys, x, alpha),
    }
}

/// Rows and columns of `m` restricted to `idx`.
pub fn restrict(m: &Matrix, idx: &[usize]) -> Matrix {
    Matrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub x: Vector,
    pub alpha: Vector,
    pub residual_norm: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_condition: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iter: 50,
            max_condition: 1e14,
        }
    }
}

pub fn solve_steady_state(
    sys: &dyn DdeSystem,
    x_guess: &[f64],
    alpha: &[f64],
) -> Result<SteadyState> {
    solve_steady_state_with(sys, x_guess, alpha, NewtonOptions::default())
}

/// Damped Newton on `g(x) = f(x, …, x, α)` with Armijo backtracking on ‖g‖².
pub fn solve_steady_state_with(
    sys: &dyn DdeSystem,
    x_guess: &[f64],
    alpha: &[f64],
    opts: NewtonOptions,
) -> Result<SteadyState> {
    check_inputs(sys, x_guess, alpha)?;
    check_finite(x_guess, "initial guess")?;
    let mut x = Vector::from_column_slice(x_guess);
    let mut g = eval_residual(sys, x.as_slice(), alpha)?;
    let converged = |x: &Vector, g: &Vector| g.amax() <= opts.tol * (1.0 + x.amax());

    for _ in 0..opts.max_iter {
        if converged(&x, &g) {
            return Ok(SteadyState {
                residual_norm: g.norm(),
                x,
                alpha: Vector::from_column_slice(alpha),
            });
        }
        let j = jacobians(sys, x.as_slice(), alpha)?.steady();
        let dx = newton_step(&j, &g, opts.max_condition)?;
        let merit = g.norm_squared();
        let mut step = 1.0;
        loop {
            let trial = &x + &dx * step;
            let gt = eval_residual(sys, trial.as_slice(), alpha);
            if let Ok(gt) = gt {
                if gt.norm_squared() <= (1.0 - 1e-4 * step) * merit || converged(&trial, &gt) {
                    x = trial;
                    g = gt;
                    break;
                }
            }
            step *= 0.5;
            if step < 2f64.powi(-20) {
                return Err(Error::NoConvergence {
                    solver: "steady-state Newton (line search)",
                    iterations: opts.max_iter,
                    residual: g.norm(),
                });
            }
        }
    }
    if converged(&x, &g) {
        return Ok(SteadyState {
            residual_norm: g.norm(),
            x,
            alpha: Vector::from_column_slice(alpha),
        });
    }
    Err(Error::NoConvergence {
        solver: "steady-state Newton",
        iterations: opts.max_iter,
        residual: g.norm(),
    })
}

/// Solves `J dx = −g`. A numerically singular J is tolerated only when the
/// system is consistent (g in the range of J); the minimum-norm step is used.
fn newton_step(j: &Matrix, g: &Vector, max_condition: f64) -> Result<Vector> {
    let svd = j.clone().svd(true, true);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    let cond = if min == 0.0 { f64::INFINITY } else { max / min };
    if cond <= max_condition {
        if let Some(dx) = j.clone().lu().solve(&(-g)) {
            return Ok(dx);
        }
    }
    let dx = svd
        .solve(&(-g), max / max_condition)
        .map_err(|_| Error::SingularJacobian { condition: cond })?;
    let mismatch = (j * &dx + g).norm();
    if mismatch <= 1e-8 * g.norm().max(f64::MIN_POSITIVE) && dx.iter().all(|v| v.is_finite()) {
        Ok(dx)
    } else {
        Err(Error::SingularJacobian { condition: cond })
    }
}

/// 2-norm condition number from singular values; infinite when singular.
pub fn condition_number(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Follows a steady state from `start` to parameter `target` along a straight
/// line, subdividing the path when Newton fails.
pub fn continue_steady_state(
    sys: &dyn DdeSystem,
    start: &SteadyState,
    target: &[f64],
) -> Result<SteadyState> {
    check_dim("parameters", sys.n_alpha(), target.len())?;
    let from = start.alpha.clone();
    let to = Vector::from_column_slice(target);
    let mut s: f64 = 0.0;
    let mut ds: f64 = 1.0;
    let mut current = start.clone();
    while s < 1.0 {
        let next = (s + ds).min(1.0);
        let alpha = &from + (&to - &from) * next;
        match solve_steady_state(sys, current.x.as_slice(), alpha.as_slice()) {
            Ok(ss) => {
                current = ss;
                s = next;
                ds = (ds * 2.0).min(1.0);
            }
            Err(e) => {
                ds *= 0.5;
                if ds < 1.0 / 1024.0 {
                    return Err(e);
                }
            }
        }
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(
        rhs: impl Fn(&[&[f64]], &[f64], &mut [f64]) + Send + Sync + 'static,
        m: usize,
    ) -> FnSystem {
        FnSystem::new(1, vec![ParamMeta::new("a", 0.0, 1.0)], rhs).with_fixed_delays(vec![1.0; m])
    }

    #[test]
    fn residual_at_fixed_point() {
        let sys = scalar(|s, a, o| o[0] = -s[0][0] + a[0], 0);
        let r = eval_residual(&sys, &[0.7], &[0.7]).unwrap();
        assert_eq!(r[0], 0.0);
    }

    #[test]
    fn residual_dimension_and_finiteness() {
        let sys = scalar(|s, _, o| o[0] = 1.0 / s[0][0], 0);
        assert!(matches!(
            eval_residual(&sys, &[1.0, 2.0], &[0.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            eval_residual(&sys, &[0.0], &[0.0]),
            Err(Error::NonFinite { index: 0, .. })
        ));
    }

    #[test]
    fn linear_jacobians() {
        let sys = scalar(|s, _, o| o[0] = -s[0][0] + 0.5 * s[1][0], 1);
        let j = jacobians(&sys, &[0.3], &[0.0]).unwrap();
        assert!((j.a[0][(0, 0)] + 1.0).abs() < 1e-9);
        assert!((j.a[1][(0, 0)] - 0.5).abs() < 1e-9);
        assert!(j.dtau_dx[0].amax() == 0.0);
    }

    #[test]
    fn steady_state_linear_and_logistic() {
        let sys = scalar(|s, a, o| o[0] = -s[0][0] + a[0], 0);
        let ss = solve_steady_state(&sys, &[0.0], &[3.0]).unwrap();
        assert!((ss.x[0] - 3.0).abs() < 1e-9);

        let logistic = scalar(|s, _, o| o[0] = s[0][0] * (1.0 - s[1][0]), 1);
        let ss = solve_steady_state(&logistic, &[0.9], &[0.0]).unwrap();
        assert!((ss.x[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn singular_jacobian_is_reported() {
        let sys = scalar(|s, _, o| o[0] = s[0][0] * s[0][0] + 1.0, 0);
        assert!(matches!(
            solve_steady_state(&sys, &[0.0], &[0.0]),
            Err(Error::SingularJacobian { .. })
        ));
    }

    #[test]
    fn no_convergence_is_reported() {
        let sys = scalar(|s, _, o| o[0] = s[0][0] * s[0][0] + 1.0, 0);
        let err = solve_steady_state(&sys, &[0.3], &[0.0]).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { .. }), "{err}");
    }

    #[test]
    fn negative_delay_rejected() {
        let sys = scalar(|s, _, o| o[0] = -s[1][0], 1).with_delays(1, |_, a, o| o[0] = a[0]);
        assert!(matches!(
            eval_delays(&sys, &[0.0], &[-1.0]),
            Err(Error::NegativeDelay { .. })
        ));
    }
}
