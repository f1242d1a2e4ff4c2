//! Small built-in systems used as fixtures and demos.

use crate::system::{FnSystem, Jacobians, Matrix, ParamMeta, Vector};

/// `ẋ = a·x(t) − b·x(t−τ)` with parameters `(a, b)`.
pub fn hayes(a: f64, b: f64, tau: f64) -> FnSystem {
    let params = vec![
        ParamMeta::new("a", a, 0.1).bounded(-10.0, 10.0),
        ParamMeta::new("b", b, 0.1).optimizable(0.0, 3.0),
    ];
    FnSystem::new(1, params, |s, p, out| {
        out[0] = p[0] * s[0][0] - p[1] * s[1][0]
    })
    .with_fixed_delays(vec![tau])
    .with_jacobians(|x, p| Jacobians {
        a: vec![
            Matrix::from_element(1, 1, p[0]),
            Matrix::from_element(1, 1, -p[1]),
        ],
        dfdalpha: Matrix::from_row_slice(1, 2, &[x[0], -x[0]]),
        dtau_dx: vec![Vector::zeros(1)],
        dtau_dalpha: vec![Vector::zeros(2)],
    })
}

/// `ẋ = α₁ + x(t)² + α₂·(x(t−1) − x(t))`.
///
/// Steady states `x = ±√(−α₁)` meet in a fold on the line `α₁ = 0`; the lower
/// branch is stable for `α₂ ≥ 0`.
pub fn scalar_fold(alpha1: f64, alpha2: f64) -> FnSystem {
    let params = vec![
        ParamMeta::new("alpha1", alpha1, 0.01).optimizable(-2.0, -0.001),
        ParamMeta::new("alpha2", alpha2, 0.1).bounded(0.0, 10.0),
    ];
    FnSystem::new(1, params, |s, p, out| {
        let x = s[0][0];
        out[0] = p[0] + x * x + p[1] * (s[1][0] - x);
    })
    .with_fixed_delays(vec![1.0])
    .with_jacobians(|x, p| Jacobians {
        a: vec![
            Matrix::from_element(1, 1, 2.0 * x[0] - p[1]),
            Matrix::from_element(1, 1, p[1]),
        ],
        dfdalpha: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
        dtau_dx: vec![Vector::zeros(1)],
        dtau_dalpha: vec![Vector::zeros(2)],
    })
}
