//! Time integration by the method of steps: fixed-step classical RK4 with
//! cubic Hermite dense output for the delayed arguments.

use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::system::{DdeSystem, SteadyState, Vector};

type HistoryFn = dyn Fn(f64) -> Vector + Send + Sync;

/// Initial function on `[−max τ, 0]`.
#[derive(Clone)]
pub enum History {
    Constant(Vector),
    Function(Arc<HistoryFn>),
}

impl History {
    pub fn function(f: impl Fn(f64) -> Vector + Send + Sync + 'static) -> Self {
        History::Function(Arc::new(f))
    }

    pub fn at(&self, t: f64) -> Vector {
        match self {
            History::Constant(v) => v.clone(),
            History::Function(f) => f(t),
        }
    }
}

impl fmt::Debug for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            History::Constant(v) => f.debug_tuple("Constant").field(&v.as_slice()).finish(),
            History::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// Constant history equal to `ss.x` with `components` scaled by `factor`.
pub fn perturb(ss: &SteadyState, components: &[usize], factor: f64) -> Result<History> {
    let mut x = ss.x.clone();
    for &i in components {
        if i >= x.len() {
            return Err(Error::Dimension {
                what: "perturbed component",
                expected: x.len(),
                got: i,
            });
        }
        x[i] *= factor;
    }
    Ok(History::Constant(x))
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    derivatives: Vec<Vector>,
    pub history: History,
    /// Time at which the state stopped being finite, if it did.
    pub blow_up: Option<f64>,
}

impl Trajectory {
    pub fn t_end(&self) -> f64 {
        *self
            .times
            .last()
            .expect("trajectory has at least the initial point")
    }

    /// Dense output: the history for `t ≤ 0`, cubic Hermite interpolation
    /// between grid points after that.
    pub fn at(&self, t: f64) -> Vector {
        if t <= self.times[0] {
            return self.history.at(t);
        }
        let n = self.times.len();
        let k = match self.times.partition_point(|&s| s <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        if n < 2 {
            return self.states[0].clone();
        }
        hermite(
            (self.times[k], &self.states[k], &self.derivatives[k]),
            (
                self.times[k + 1],
                &self.states[k + 1],
                &self.derivatives[k + 1],
            ),
            t,
        )
    }

    /// `max_i ‖x(t_i) − x*‖∞` over grid points in `[t0, t1]`.
    pub fn max_deviation(&self, reference: &Vector, t0: f64, t1: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.states)
            .filter(|(t, _)| **t >= t0 && **t <= t1)
            .map(|(_, x)| (x - reference).amax())
            .fold(0.0, f64::max)
    }
}

fn hermite(a: (f64, &Vector, &Vector), b: (f64, &Vector, &Vector), t: f64) -> Vector {
    let h = b.0 - a.0;
    let s = (t - a.0) / h;
    let (s2, s3) = (s * s, s * s * s);
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    a.1 * h00 + a.2 * (h10 * h) + b.1 * h01 + b.2 * (h11 * h)
}

/// Integrates from `t = 0` to `t_end` with step `dt`. Rows outside
/// `dynamic_states()` are held at their initial values. A non-finite state
/// ends the run early and is recorded in `blow_up`; it is not an error.
pub fn simulate(
    sys: &dyn DdeSystem,
    alpha: &[f64],
    history: History,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    let n = sys.n_x();
    let m = sys.n_delays();
    check_dim("parameters", sys.n_alpha(), alpha.len())?;
    if !(dt > 0.0 && t_end >= 0.0 && dt.is_finite() && t_end.is_finite()) {
        return Err(Error::Config(format!(
            "need dt > 0 and t_end ≥ 0, got dt = {dt}, t_end = {t_end}"
        )));
    }
    let x0 = history.at(0.0);
    check_dim("history", n, x0.len())?;
    let mut dynamic = vec![false; n];
    for i in sys.dynamic_states() {
        dynamic[i] = true;
    }

    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.clone()],
        derivatives: Vec::new(),
        history,
        blow_up: None,
    };
    let mut taus = vec![0.0; m];
    let mut out = vec![0.0; n];
    // derivative at (t, x); delayed states come from the dense output, which
    // only reaches back into completed steps because dt < min τ
    let mut deriv = |traj: &Trajectory, t: f64, x: &Vector| -> Result<Vector> {
        sys.delays(x.as_slice(), alpha, &mut taus);
        if let Some((k, &tau)) = taus
            .iter()
            .enumerate()
            .find(|(_, &tau)| !(tau == 0.0 || tau > dt))
        {
            return Err(Error::Config(format!(
                "step {dt} is not below delay {k} = {tau} at t = {t}; the method of steps needs dt < τ"
            )));
        }
        let delayed: Vec<Vector> = taus
            .iter()
            .map(|&tau| {
                if tau == 0.0 {
                    x.clone()
                } else {
                    traj.at(t - tau)
                }
            })
            .collect();
        let mut states: Vec<&[f64]> = Vec::with_capacity(m + 1);
        states.push(x.as_slice());
        states.extend(delayed.iter().map(|v| v.as_slice()));
        sys.rhs(&states, alpha, &mut out);
        Ok(Vector::from_iterator(
            n,
            out.iter()
                .zip(&dynamic)
                .map(|(&v, &d)| if d { v } else { 0.0 }),
        ))
    };

    let steps = (t_end / dt).ceil() as usize;
    let mut x = x0;
    let mut t = 0.0;
    let mut k1 = deriv(&traj, t, &x)?;
    traj.derivatives.push(k1.clone());
    for i in 0..steps {
        let h = if i + 1 == steps { t_end - t } else { dt };
        if h <= 0.0 {
            break;
        }
        let k2 = deriv(&traj, t + 0.5 * h, &(&x + &k1 * (0.5 * h)))?;
        let k3 = deriv(&traj, t + 0.5 * h, &(&x + &k2 * (0.5 * h)))?;
        let k4 = deriv(&traj, t + h, &(&x + &k3 * h))?;
        let xn = &x + (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (h / 6.0);
        let tn = if i + 1 == steps {
            t_end
        } else {
            (i + 1) as f64 * dt
        };
        if xn.iter().any(|v| !v.is_finite()) {
            traj.blow_up = Some(tn);
            break;
        }
        // the derivative at the new grid point is both the Hermite slope and
        // the first stage of the next step
        traj.times.push(tn);
        traj.states.push(xn.clone());
        let fn_ = match deriv(&traj, tn, &xn) {
            Ok(f) if f.iter().all(|v| v.is_finite()) => f,
            Ok(_) => {
                traj.times.pop();
                traj.states.pop();
                traj.blow_up = Some(tn);
                break;
            }
            Err(e) => return Err(e),
        };
        traj.derivatives.push(fn_.clone());
        x = xn;
        t = tn;
        k1 = fn_;
    }
    Ok(traj)
}
