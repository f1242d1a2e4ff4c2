//! Random polynomial delay systems with a known route to a fold or Hopf
//! manifold, shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robust_dde::manifolds::{
    augmented_residual, continue_manifold, Aux, CriticalKind, CriticalPoint,
};
use robust_dde::normal_vector::{build_blocks, solve_normal_vector};
use robust_dde::robust::{seed_by_ray, RobustProblem};
use robust_dde::system::{
    deltas, nominal, solve_steady_state, DdeSystem, FnSystem, Jacobians, Matrix, ParamMeta, Vector,
};

/// `c · x_j · x_k` in row `i`.
#[derive(Clone, Debug)]
struct Quad {
    i: usize,
    j: usize,
    k: usize,
    c: f64,
}

/// Coefficients of
/// `f = L x + D x(t−τ) + Σ quad − cube ∘ x³ + P α + Σ_p α_p M_p x`,
/// plus `−α₀ x₁(t−τ)` in the first row when `feedback` is set.
#[derive(Clone, Debug)]
pub struct Poly {
    pub n: usize,
    pub m: usize,
    pub tau: f64,
    lin: Matrix,
    del: Matrix,
    quads: Vec<Quad>,
    cube: Vec<f64>,
    forcing: Matrix,
    /// `M_p` for each parameter.
    mixing: Vec<Matrix>,
    feedback: bool,
    pub params: Vec<ParamMeta>,
}

impl Poly {
    fn eval(&self, x: &[f64], xd: &[f64], a: &[f64], out: &mut [f64]) {
        let xv = Vector::from_column_slice(x);
        let xdv = Vector::from_column_slice(xd);
        let av = Vector::from_column_slice(a);
        let mut f = &self.lin * &xv + &self.del * &xdv + &self.forcing * &av;
        for (p, mp) in self.mixing.iter().enumerate() {
            f += mp * &xv * a[p];
        }
        for q in &self.quads {
            f[q.i] += q.c * x[q.j] * x[q.k];
        }
        for i in 0..self.n {
            f[i] -= self.cube[i] * x[i].powi(3);
        }
        if self.feedback {
            f[0] -= a[0] * xd[0];
        }
        out.copy_from_slice(f.as_slice());
    }

    fn jac(&self, x: &[f64], a: &[f64]) -> Jacobians {
        let mut a0 = self.lin.clone();
        for (p, mp) in self.mixing.iter().enumerate() {
            a0 += mp * a[p];
        }
        for q in &self.quads {
            a0[(q.i, q.j)] += q.c * x[q.k];
            a0[(q.i, q.k)] += q.c * x[q.j];
        }
        for i in 0..self.n {
            a0[(i, i)] -= 3.0 * self.cube[i] * x[i] * x[i];
        }
        let xv = Vector::from_column_slice(x);
        let mut dfda = self.forcing.clone();
        for (p, mp) in self.mixing.iter().enumerate() {
            let col = mp * &xv;
            for i in 0..self.n {
                dfda[(i, p)] += col[i];
            }
        }
        let mut a1 = self.del.clone();
        if self.feedback {
            a1[(0, 0)] -= a[0];
            dfda[(0, 0)] -= x[0];
        }
        Jacobians {
            a: vec![a0, a1],
            dfdalpha: dfda,
            dtau_dx: vec![Vector::zeros(self.n)],
            dtau_dalpha: vec![Vector::zeros(self.m)],
        }
    }

    pub fn system(&self) -> FnSystem {
        let (p1, p2) = (Arc::new(self.clone()), Arc::new(self.clone()));
        FnSystem::new(self.n, self.params.clone(), move |s, a, out| {
            p1.eval(s[0], s[1], a, out)
        })
        .with_fixed_delays(vec![self.tau])
        .with_jacobians(move |x, a| p2.jac(x, a))
    }

    /// Steady-state guess at the nominal parameters.
    pub fn guess(&self) -> Vector {
        Vector::from_element(self.n, if self.cube[0] == 0.0 { -0.7 } else { 0.0 })
    }
}

/// A random system whose first parameter drives the first state through a
/// fold (`hopf = false`, `α₀ + x₁²` with delayed diffusive feedback) or
/// through a delayed-feedback Hopf bifurcation (`hopf = true`). The other
/// states are damped and weakly coupled.
pub fn random_poly(seed: u64, hopf: bool) -> Poly {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=4);
    let m = rng.gen_range(2..=4);
    let tau = rng.gen_range(0.5..1.5);
    let mut lin = Matrix::zeros(n, n);
    let mut del = Matrix::zeros(n, n);
    let mut quads = Vec::new();
    let mut cube = vec![0.0; n];
    for i in 1..n {
        lin[(i, i)] = -rng.gen_range(1.0..2.0);
        del[(i, i - 1)] = rng.gen_range(-0.5..0.5);
        lin[(0, i)] = rng.gen_range(-0.1..0.1);
        quads.push(Quad {
            i,
            j: rng.gen_range(0..n),
            k: rng.gen_range(0..n),
            c: rng.gen_range(-0.2..0.2),
        });
    }
    let mut forcing = Matrix::zeros(n, m);
    let mut params = Vec::with_capacity(m);
    if hopf {
        // ẋ₁ = −c x₁ − α₀ x₁(t−τ) − x₁³ + …: stable for α₀ < c
        let c = rng.gen_range(0.6..1.2);
        lin[(0, 0)] = -c;
        cube[0] = 1.0;
        params.push(ParamMeta::new("p0", 0.1 * c, rng.gen_range(0.05..0.3)).bounded(0.0, 20.0));
    } else {
        // ẋ₁ = α₀ + x₁² + g (x₁(t−τ) − x₁) + …: lower branch stable
        let g = rng.gen_range(0.5..1.5);
        lin[(0, 0)] = -g;
        del[(0, 0)] = g;
        quads.push(Quad {
            i: 0,
            j: 0,
            k: 0,
            c: 1.0,
        });
        forcing[(0, 0)] = 1.0;
        params.push(ParamMeta::new("p0", -0.5, rng.gen_range(0.05..0.3)).bounded(-5.0, 5.0));
    }
    let mut mixing = vec![Matrix::zeros(n, n)];
    for p in 1..m {
        for i in 0..n {
            forcing[(i, p)] = rng.gen_range(-0.3..0.3);
        }
        let mut mp = Matrix::zeros(n, n);
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        mp[(i, j)] = rng.gen_range(-0.2..0.2);
        mixing.push(mp);
        params.push(ParamMeta::new(
            &format!("p{p}"),
            rng.gen_range(-0.2..0.2),
            rng.gen_range(0.05..0.5),
        ));
    }
    Poly {
        n,
        m,
        tau,
        lin,
        del,
        quads,
        cube,
        forcing,
        mixing,
        feedback: hopf,
        params,
    }
}

/// Outcome of one orthogonality check.
#[derive(Debug)]
pub struct Orthogonality {
    pub kind: CriticalKind,
    pub n_x: usize,
    pub n_alpha: usize,
    /// Largest `|r·t|` over the planes `(p0, p_j)`.
    pub worst: f64,
}

/// Finds the critical point of `kind` reached by raising `p0` from the
/// nominal steady state, then compares its normal vector with central
/// continuation secants (scaled arclength `h`) in every plane `(p0, p_j)`.
pub fn orthogonality(
    seed: u64,
    kind: CriticalKind,
    sigma: f64,
    h: f64,
) -> Result<Orthogonality, String> {
    let poly = random_poly(seed, kind.is_hopf());
    let sys = poly.system();
    let alpha = nominal(&sys);
    let ss = solve_steady_state(&sys, poly.guess().as_slice(), alpha.as_slice())
        .map_err(|e| format!("steady: {e}"))?;
    let problem = RobustProblem::new(
        &sys,
        Arc::new(|_: &[f64], _: &[f64]| 0.0),
        kind.is_hopf(),
        sigma,
    )
    .map_err(|e| e.to_string())?;
    let cp: CriticalPoint = seed_by_ray(&problem, &ss, 0, 1.0)
        .map_err(|e| format!("seed: {e}"))?
        .critical;
    if cp.kind != kind {
        return Err(format!("found {:?}", cp.kind));
    }
    let nv = solve_normal_vector(&sys, &cp).map_err(|e| format!("normal vector: {e}"))?;
    let delta = deltas(&sys);
    let mut worst: f64 = 0.0;
    for j in 1..poly.m {
        let end = |step: f64| -> Result<Vector, String> {
            let b = continue_manifold(&sys, &cp, (0, j), 1, step)
                .map_err(|e| format!("continuation: {e}"))?;
            if b.points.len() < 2 {
                return Err(format!("continuation stopped: {:?}", b.diagnostic));
            }
            Ok(b.points.last().unwrap().alpha_c.component_div(&delta))
        };
        let t = (end(h)? - end(-h)?).normalize();
        worst = worst.max(nv.r.dot(&t).abs());
    }
    Ok(Orthogonality {
        kind,
        n_x: poly.n,
        n_alpha: poly.m,
        worst,
    })
}

/// Largest gap between the columns of the assembled block matrix and central
/// differences of the augmented residual, relative to the largest entry.
pub fn b_fd_error(sys: &dyn DdeSystem, cp: &CriticalPoint) -> f64 {
    let b = build_blocks(sys, cp).unwrap();
    let n_x = sys.n_x();
    let n_d = sys.dynamic_states().len();
    let u = cp.state_vector();
    let delta = deltas(sys);
    let mut worst: f64 = 0.0;
    for j in 0..b.nrows() {
        let eval = |s: f64| {
            let mut c = cp.clone();
            if j < u.len() {
                let mut v = u.clone();
                v[j] += s;
                c.x_c = v.rows(0, n_x).into_owned();
                c.aux = Aux::from_vector(cp.kind, &v.rows(n_x, v.len() - n_x).into_owned(), n_d);
            } else {
                c.alpha_c[j - u.len()] += s * delta[j - u.len()];
            }
            augmented_residual(c.kind, sys, &c.x_c, &c.alpha_c, &c.aux, c.sigma).unwrap()
        };
        let h = 1e-6;
        let col = (eval(h) - eval(-h)) / (2.0 * h);
        worst = worst.max((col - b.row(j).transpose()).amax());
    }
    worst / b.amax().max(1.0)
}
