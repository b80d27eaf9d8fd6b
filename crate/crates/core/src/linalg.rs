//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigen-decomposition of a symmetric matrix with eigenvalues ascending.
pub struct SortedEigen {
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector of `values[k]`.
    pub vectors: DMatrix<f64>,
}

pub fn sym_eigen(h: &DMatrix<f64>) -> SortedEigen {
    let n = h.nrows();
    let sym = (h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    SortedEigen { values, vectors }
}

/// Ascending eigenvalues only.
pub fn sym_eigenvalues(h: &DMatrix<f64>) -> Vec<f64> {
    let sym = (h + h.transpose()) * 0.5;
    let mut v: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Number of eigenvalues below `-tol`.
pub fn morse_index(values: &[f64], tol: f64) -> usize {
    values.iter().filter(|&&v| v < -tol).count()
}

/// `(H + shift I)^{-1} g`, falling back to the eigen route when Cholesky and
/// LU both fail.
pub fn solve_shifted(h: &DMatrix<f64>, g: &[f64], shift: f64) -> Vec<f64> {
    let n = h.nrows();
    let mut m = h.clone();
    for k in 0..n {
        m[(k, k)] += shift;
    }
    let rhs = DVector::from_column_slice(g);
    if let Some(sol) = m.clone().lu().solve(&rhs) {
        if sol.iter().all(|v| v.is_finite()) {
            return sol.iter().copied().collect();
        }
    }
    let e = sym_eigen(&m);
    let coeffs = e.vectors.transpose() * rhs;
    let mut out = DVector::zeros(n);
    for k in 0..n {
        let lam = e.values[k];
        if lam.abs() > 1e-14 {
            out += e.vectors.column(k) * (coeffs[k] / lam);
        }
    }
    out.iter().copied().collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
