//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SVD};

use crate::system::{Matrix, Vector};

/// Right singular vectors of `m` whose singular values fall below
/// `rel_tol · σ_max`, plus the directions a wide matrix cannot reach.
/// Returned as columns, together with the full singular value list
/// (padded with zeros to the column count).
pub fn null_space(m: &Matrix, rel_tol: f64) -> (Matrix, Vec<f64>) {
    let (rows, cols) = m.shape();
    // nalgebra's SVD is thin; pad to square so every right singular vector is present
    let padded = if rows < cols {
        let mut p = Matrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("requested V");
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let cut = rel_tol * max.max(f64::MIN_POSITIVE);
    let picked: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= cut).collect();
    let mut basis = Matrix::zeros(cols, picked.len());
    for (c, &i) in picked.iter().enumerate() {
        basis.set_column(c, &v_t.row(i).transpose());
    }
    let mut all = sv;
    all.resize(cols, 0.0);
    (basis, all)
}

/// Ratio of the smallest to the largest singular value (0 when rank deficient).
pub fn inverse_condition(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        let n = m.nrows().min(m.ncols());
        let min = if m.nrows() == m.ncols() {
            sv.min()
        } else {
            sv.iter().take(n).copied().fold(f64::INFINITY, f64::min)
        };
        min / max
    }
}

/// Minimum-norm least-squares solution of `m x = b`, truncating singular
/// values below `rel_tol · σ_max`.
pub fn lstsq(m: &Matrix, b: &Vector, rel_tol: f64) -> Option<Vector> {
    if m.is_empty() {
        return Some(Vector::zeros(m.ncols()));
    }
    let svd = m.clone().svd(true, true);
    let eps = rel_tol * svd.singular_values.max();
    svd.solve(b, eps).ok()
}

/// Solves a square system by LU, falling back to least squares.
pub fn solve(m: &Matrix, b: &Vector) -> Option<Vector> {
    if let Some(x) = m.clone().lu().solve(b) {
        if x.iter().all(|v| v.is_finite()) {
            return Some(x);
        }
    }
    lstsq(m, b, 1e-14)
}

pub fn stack(parts: &[&Vector]) -> Vector {
    let n = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(n);
    let mut off = 0;
    for p in parts {
        out.rows_mut(off, p.len()).copy_from(*p);
        off += p.len();
    }
    out
}

pub fn outer(a: &Vector, b: &Vector) -> Matrix {
    a * b.transpose()
}

pub fn identity(n: usize) -> Matrix {
    DMatrix::identity(n, n)
}
