use nalgebra::{DMatrix, DVector};

use crate::error::{BhamError, Result};

/// Symmetric eigendecomposition with eigenvalues ascending and each
/// eigenvector's largest-magnitude entry made positive.
pub(crate) fn sym_eigen_ascending(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let (mut best, mut best_abs) = (0.0f64, -1.0f64);
        for &v in col.iter() {
            // strict comparison keeps the first of equal-magnitude entries
            if v.abs() > best_abs + 1e-12 * best_abs.max(0.0) {
                best = v;
                best_abs = v.abs();
            }
        }
        let sign = if best < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(dst, &(col * sign));
    }
    (values, vectors)
}

/// Solves the symmetric positive-definite system `a x = b`, retrying with a
/// small diagonal ridge if the factorization fails. Returns the factor's
/// inverse alongside when `want_inverse` is set.
pub(crate) fn spd_solve(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    want_inverse: bool,
) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
    let chol = match a.clone().cholesky() {
        Some(c) => c,
        None => {
            let scale = a.diagonal().amax().max(1.0);
            let mut ridged = a.clone();
            for i in 0..ridged.nrows() {
                ridged[(i, i)] += 1e-12 * scale;
            }
            ridged.cholesky().ok_or(BhamError::SingularSystem)?
        }
    };
    let x = chol.solve(b);
    if !x.iter().all(|v| v.is_finite()) {
        return Err(BhamError::SingularSystem);
    }
    let inv = want_inverse.then(|| chol.inverse());
    Ok((x, inv))
}

/// `Xᵀ diag(w) X` for a column-major design.
pub(crate) fn weighted_gram(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (i, wi) in w.iter().enumerate() {
        let s = wi.sqrt();
        xw.row_mut(i).scale_mut(s);
    }
    let xt = xw.transpose();
    xt * xw
}
