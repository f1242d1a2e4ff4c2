//! Semiconductor laser with delayed optical feedback and a method-of-lines
//! carrier diffusion profile.
//!
//! State `x = (Re A, Im A, N_1..N_K, Ω)`, parameters
//! `α = (j, η, α_LW, φ, τ, T, d_diff)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{DdeSystem, Jacobians, Matrix, ParamMeta, Vector};

pub const J: usize = 0;
pub const ETA: usize = 1;
pub const ALPHA_LW: usize = 2;
pub const PHI: usize = 3;
pub const TAU: usize = 4;
pub const T_CARRIER: usize = 5;
pub const D_DIFF: usize = 6;

pub const PARAM_NAMES: [&str; 7] = ["j", "eta", "alpha_lw", "phi", "tau", "T", "d_diff"];

/// Sign of the frequency term inside the feedback phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseConvention {
    /// `e^{−i(φ + Ωτ)}`, the phase picked up by a field rotating at Ω.
    #[default]
    CoRotating,
    /// `e^{−i(φ − Ωτ)}`.
    AsPrinted,
}

impl PhaseConvention {
    fn sign(self) -> f64 {
        match self {
            PhaseConvention::CoRotating => 1.0,
            PhaseConvention::AsPrinted => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaserConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub params: Vec<ParamMeta>,
    pub phase: PhaseConvention,
}

impl Default for LaserConfig {
    fn default() -> Self {
        LaserConfig::with_points(31)
    }
}

impl LaserConfig {
    pub fn with_points(k: usize) -> Self {
        let params = vec![
            ParamMeta::new("j", 1.0, 0.01).optimizable(0.02, 1.0265),
            ParamMeta::new("eta", 1e-3, 1e-4).optimizable(1e-4, 0.02),
            ParamMeta::new("alpha_lw", 5.0, 1.0),
            ParamMeta::new("phi", 0.0, 0.1 * PI),
            ParamMeta::new("tau", 250.0, 10.0).optimizable(220.0, 2000.0),
            ParamMeta::new("T", 1000.0, 10.0).bounded(1e-6, f64::INFINITY),
            ParamMeta::new("d_diff", 0.01, 0.001).bounded(1e-9, f64::INFINITY),
        ];
        LaserConfig {
            k,
            params,
            phase: PhaseConvention::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Laser {
    k: usize,
    h: f64,
    pump_mask: Vec<bool>,
    f: Vec<f64>,
    gain_weight: f64,
    params: Vec<ParamMeta>,
    phase: PhaseConvention,
}

/// A steady lasing state (external cavity mode).
#[derive(Clone, Debug)]
pub struct Ecm {
    pub omega: f64,
    pub intensity: f64,
    pub state: Vector,
}

pub fn build_laser(cfg: &LaserConfig) -> Result<Laser> {
    if cfg.k < 3 {
        return Err(Error::Config(format!("laser needs K >= 3, got {}", cfg.k)));
    }
    if cfg.params.len() != 7 {
        return Err(Error::Config(format!(
            "laser expects 7 parameters, got {}",
            cfg.params.len()
        )));
    }
    for (p, name) in cfg.params.iter().zip(PARAM_NAMES) {
        if p.name != name {
            return Err(Error::Config(format!(
                "laser parameter order: expected {name}, got {}",
                p.name
            )));
        }
    }
    let k = cfg.k;
    let h = 0.5 / (k as f64 - 1.0);
    let pos: Vec<f64> = (0..k).map(|i| -0.25 + i as f64 * h).collect();
    Ok(Laser {
        k,
        h,
        pump_mask: pos.iter().map(|p| p.abs() < 0.2).collect(),
        f: pos.iter().map(|p| (-400.0 * p * p).exp()).collect(),
        gain_weight: 2.0 * h * (400.0 / PI).sqrt(),
        params: cfg.params.clone(),
        phase: cfg.phase,
    })
}

/// Objective of the intensity maximization, `−|A|²`.
pub fn negative_intensity(x: &[f64], _alpha: &[f64]) -> f64 {
    -intensity(x)
}

/// `|A|²`.
pub fn intensity(x: &[f64]) -> f64 {
    x[0] * x[0] + x[1] * x[1]
}

impl Laser {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn omega_index(&self) -> usize {
        self.k + 2
    }

    pub fn pump(&self, j: f64) -> Vec<f64> {
        self.pump_mask
            .iter()
            .map(|&m| if m { 1.075 * j } else { -0.8 })
            .collect()
    }

    pub fn field_profile(&self) -> &[f64] {
        &self.f
    }

    /// Modal gain ζ for carrier densities `n`.
    pub fn gain(&self, n: &[f64]) -> f64 {
        self.gain_weight * self.f.iter().zip(n).map(|(f, n)| f * n).sum::<f64>()
    }

    fn laplacian(&self, n: &[f64], k: usize) -> f64 {
        let last = self.k - 1;
        if k == 0 {
            n[1] - n[0]
        } else if k == last {
            n[last - 1] - n[last]
        } else {
            n[k - 1] - 2.0 * n[k] + n[k + 1]
        }
    }

    fn feedback_phase(&self, omega: f64, alpha: &[f64]) -> f64 {
        alpha[PHI] + self.phase.sign() * omega * alpha[TAU]
    }

    /// Carrier profile for a prescribed intensity (tridiagonal solve of the
    /// stationary carrier rows).
    pub fn carriers(&self, intensity: f64, alpha: &[f64]) -> Vec<f64> {
        let k = self.k;
        let c = alpha[D_DIFF] / (self.h * self.h);
        let pump = self.pump(alpha[J]);
        let mut lower = vec![0.0; k];
        let mut diag = vec![0.0; k];
        let mut upper = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for i in 0..k {
            diag[i] = -1.0 - 2.0 * self.f[i] * intensity;
            if i > 0 {
                lower[i] = c;
                diag[i] -= c;
            }
            if i + 1 < k {
                upper[i] = c;
                diag[i] -= c;
            }
            rhs[i] = -(pump[i] - self.f[i] * intensity);
        }
        thomas(&lower, &diag, &upper, &rhs)
    }

    /// Non-lasing steady state: A = 0 with the tridiagonal carrier profile.
    pub fn off_state(&self, alpha: &[f64]) -> Vector {
        let mut x = Vector::zeros(self.k + 3);
        for (i, n) in self.carriers(0.0, alpha).into_iter().enumerate() {
            x[2 + i] = n;
        }
        x
    }

    /// All external cavity modes with positive intensity, sorted by decreasing intensity.
    pub fn ecms(&self, alpha: &[f64]) -> Vec<Ecm> {
        let eta = alpha[ETA];
        let a = alpha[ALPHA_LW];
        let g = |om: f64| {
            let th = self.feedback_phase(om, alpha);
            om - eta * (a * th.cos() - th.sin())
        };
        let radius = eta * (1.0 + a * a).sqrt() * 1.01 + 1e-12;
        let samples = 20_000;
        let grid: Vec<f64> = (0..=samples)
            .map(|i| -radius + 2.0 * radius * i as f64 / samples as f64)
            .collect();
        let mut out = Vec::new();
        for w in grid.windows(2) {
            let (ga, gb) = (g(w[0]), g(w[1]));
            if ga == 0.0 || ga.signum() != gb.signum() {
                let om = bisect(&g, w[0], w[1]);
                let zeta = -eta * self.feedback_phase(om, alpha).cos();
                if let Some(ecm) = self.ecm_with_gain(om, zeta, alpha) {
                    out.push(ecm);
                }
            }
        }
        out.sort_by(|p, q| q.intensity.total_cmp(&p.intensity));
        out
    }

    fn ecm_with_gain(&self, omega: f64, zeta: f64, alpha: &[f64]) -> Option<Ecm> {
        let gap = |i: f64| self.gain(&self.carriers(i, alpha)) - zeta;
        if gap(0.0) <= 0.0 {
            return None;
        }
        let mut hi = 1.0;
        while gap(hi) > 0.0 {
            hi *= 2.0;
            if hi > 1e6 {
                return None;
            }
        }
        let intensity = bisect(&gap, 0.0, hi);
        let n = self.carriers(intensity, alpha);
        let amp = (intensity / 2.0).sqrt();
        let mut state = Vector::zeros(self.k + 3);
        state[0] = amp;
        state[1] = amp;
        for (i, v) in n.into_iter().enumerate() {
            state[2 + i] = v;
        }
        state[self.k + 2] = omega;
        Some(Ecm {
            omega,
            intensity,
            state,
        })
    }

    /// Most intense external cavity mode.
    pub fn brightest_ecm(&self, alpha: &[f64]) -> Option<Ecm> {
        self.ecms(alpha).into_iter().next()
    }

    /// Starting point for a steady-state solve: the brightest external
    /// cavity mode, or the off state when no mode lases.
    pub fn steady_guess(&self, alpha: &[f64]) -> Vector {
        self.brightest_ecm(alpha)
            .map(|e| e.state)
            .unwrap_or_else(|| self.off_state(alpha))
    }
}

fn bisect(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / m;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

impl DdeSystem for Laser {
    fn n_x(&self) -> usize {
        self.k + 3
    }

    fn n_delays(&self) -> usize {
        1
    }

    fn params(&self) -> &[ParamMeta] {
        &self.params
    }

    fn rhs(&self, states: &[&[f64]], alpha: &[f64], out: &mut [f64]) {
        let x = states[0];
        let xd = states[1];
        let k = self.k;
        let (ar, ai) = (x[0], x[1]);
        let (dr, di) = (xd[0], xd[1]);
        let n = &x[2..2 + k];
        let om = x[k + 2];
        let zeta = self.gain(n);
        let a = alpha[ALPHA_LW];
        let eta = alpha[ETA];
        let th = self.feedback_phase(om, alpha);
        let (s, c) = th.sin_cos();

        out[0] = om * ai + zeta * (ar + a * ai) + eta * (c * dr + s * di);
        out[1] = -om * ar + zeta * (ai - a * ar) + eta * (c * di - s * dr);

        let i_field = ar * ar + ai * ai;
        let pump = self.pump(alpha[J]);
        let diff = alpha[D_DIFF] / (self.h * self.h);
        let t = alpha[T_CARRIER];
        for q in 0..k {
            out[2 + q] = (diff * self.laplacian(n, q) - n[q] + pump[q]
                - self.f[q] * (1.0 + 2.0 * n[q]) * i_field)
                / t;
        }
        out[k + 2] = ar - ai;
    }

    fn delays(&self, _x: &[f64], alpha: &[f64], out: &mut [f64]) {
        out[0] = alpha[TAU];
    }

    fn analytic_jacobians(&self, x: &[f64], alpha: &[f64]) -> Option<Jacobians> {
        let k = self.k;
        let nx = k + 3;
        let (ar, ai) = (x[0], x[1]);
        let n = &x[2..2 + k];
        let om = x[k + 2];
        let zeta = self.gain(n);
        let a = alpha[ALPHA_LW];
        let eta = alpha[ETA];
        let tau = alpha[TAU];
        let sg = self.phase.sign();
        let th = self.feedback_phase(om, alpha);
        let (s, c) = th.sin_cos();
        let t = alpha[T_CARRIER];
        let diff = alpha[D_DIFF] / (self.h * self.h);
        let i_field = ar * ar + ai * ai;
        let pump = self.pump(alpha[J]);

        // derivative of the feedback term with respect to the phase θ,
        // evaluated with the delayed field equal to the current one
        let dfb0 = eta * (-s * ar + c * ai);
        let dfb1 = eta * (-s * ai - c * ar);

        let mut a0 = Matrix::zeros(nx, nx);
        a0[(0, 0)] = zeta;
        a0[(0, 1)] = om + zeta * a;
        a0[(1, 0)] = -om - zeta * a;
        a0[(1, 1)] = zeta;
        for q in 0..k {
            let gq = self.gain_weight * self.f[q];
            a0[(0, 2 + q)] = gq * (ar + a * ai);
            a0[(1, 2 + q)] = gq * (ai - a * ar);
        }
        a0[(0, k + 2)] = ai + dfb0 * sg * tau;
        a0[(1, k + 2)] = -ar + dfb1 * sg * tau;
        for (q, (&fq, &nq)) in self.f.iter().zip(n).enumerate().take(k) {
            let row = 2 + q;
            let g = fq * (1.0 + 2.0 * nq);
            a0[(row, 0)] = -g * 2.0 * ar / t;
            a0[(row, 1)] = -g * 2.0 * ai / t;
            a0[(row, row)] = (-1.0 - 2.0 * fq * i_field) / t;
            if q == 0 {
                a0[(row, row)] -= diff / t;
                a0[(row, row + 1)] += diff / t;
            } else if q == k - 1 {
                a0[(row, row)] -= diff / t;
                a0[(row, row - 1)] += diff / t;
            } else {
                a0[(row, row)] -= 2.0 * diff / t;
                a0[(row, row - 1)] += diff / t;
                a0[(row, row + 1)] += diff / t;
            }
        }
        a0[(k + 2, 0)] = 1.0;
        a0[(k + 2, 1)] = -1.0;

        let mut a1 = Matrix::zeros(nx, nx);
        a1[(0, 0)] = eta * c;
        a1[(0, 1)] = eta * s;
        a1[(1, 0)] = -eta * s;
        a1[(1, 1)] = eta * c;

        let mut da = Matrix::zeros(nx, 7);
        for q in 0..k {
            if self.pump_mask[q] {
                da[(2 + q, J)] = 1.075 / t;
            }
            let bracket = diff * self.laplacian(n, q) - n[q] + pump[q]
                - self.f[q] * (1.0 + 2.0 * n[q]) * i_field;
            da[(2 + q, T_CARRIER)] = -bracket / (t * t);
            da[(2 + q, D_DIFF)] = self.laplacian(n, q) / (self.h * self.h * t);
        }
        da[(0, ETA)] = c * ar + s * ai;
        da[(1, ETA)] = c * ai - s * ar;
        da[(0, ALPHA_LW)] = zeta * ai;
        da[(1, ALPHA_LW)] = -zeta * ar;
        da[(0, PHI)] = dfb0;
        da[(1, PHI)] = dfb1;
        da[(0, TAU)] = dfb0 * sg * om;
        da[(1, TAU)] = dfb1 * sg * om;

        let mut dtau_dalpha = Vector::zeros(7);
        dtau_dalpha[TAU] = 1.0;
        Some(Jacobians {
            a: vec![a0, a1],
            dfdalpha: da,
            dtau_dx: vec![Vector::zeros(nx)],
            dtau_dalpha: vec![dtau_dalpha],
        })
    }

    fn dynamic_states(&self) -> Vec<usize> {
        (0..self.k + 2).collect()
    }

    fn symmetry_directions(&self, x: &[f64], _alpha: &[f64]) -> Vec<Vector> {
        let mut v = Vector::zeros(self.k + 2);
        v[0] = -x[1];
        v[1] = x[0];
        if v.norm() > 0.0 {
            vec![v]
        } else {
            Vec::new()
        }
    }
}
