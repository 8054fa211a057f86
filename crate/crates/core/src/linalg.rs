//! Dense linear-algebra helpers shared by the POD fits and the regressions.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::{LampError, Result};

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order (ties keep their original order).
pub fn sorted_symmetric_eigen(g: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = g.nrows();
    let eig = SymmetricEigen::try_new(g, EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or_else(|| LampError::numerical("symmetric eigensolver did not converge"))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Flips column signs so that the entry of largest magnitude in every
/// column is nonnegative (first such entry on ties).
pub fn fix_column_signs(u: &mut DMatrix<f64>) {
    for mut col in u.column_iter_mut() {
        let mut best = 0usize;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if !col.is_empty() && col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Leading `k` left singular vectors and singular values of `x`.
///
/// Works on whichever Gram matrix is smaller. When the columns are
/// recovered from the right singular vectors they are re-orthonormalized,
/// and directions with (numerically) zero singular value are completed
/// with an orthonormal complement so the result always has `k`
/// orthonormal columns.
pub fn leading_left_singular(x: &DMatrix<f64>, k: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let (m, n) = x.shape();
    if k == 0 || k > m.min(n) {
        return Err(LampError::invalid(format!("requested {k} singular vectors of a {m}x{n} matrix")));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(LampError::numerical("non-finite entry in snapshot matrix"));
    }
    let (mut u, sigma) = if m <= n {
        let (values, vectors) = sorted_symmetric_eigen(x * x.transpose())?;
        let sigma: Vec<f64> = values[..k].iter().map(|l| l.max(0.0).sqrt()).collect();
        (vectors.columns(0, k).into_owned(), sigma)
    } else {
        let (values, vectors) = sorted_symmetric_eigen(x.transpose() * x)?;
        let sigma: Vec<f64> = values[..k].iter().map(|l| l.max(0.0).sqrt()).collect();
        let cutoff = sigma[0] * 1e-12;
        let mut cols: Vec<DVector<f64>> = Vec::with_capacity(k);
        for (j, &s) in sigma.iter().enumerate() {
            if s > cutoff && s > 0.0 {
                cols.push(x * vectors.column(j) / s);
            }
        }
        let u = orthonormal_completion(cols, m, k);
        (u, sigma)
    };
    fix_column_signs(&mut u);
    Ok((u, sigma))
}

/// Orthonormalizes `cols` (two passes of modified Gram-Schmidt) and pads
/// with unit-vector directions orthogonal to them until `k` columns exist.
fn orthonormal_completion(cols: Vec<DVector<f64>>, m: usize, k: usize) -> DMatrix<f64> {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(k);
    let push = |basis: &mut Vec<DVector<f64>>, mut v: DVector<f64>| -> bool {
        let start = v.norm();
        for _ in 0..2 {
            for b in basis.iter() {
                let p = b.dot(&v);
                v.axpy(-p, b, 1.0);
            }
        }
        let nrm = v.norm();
        if nrm > 1e-8 * start.max(f64::MIN_POSITIVE) && nrm > 0.0 {
            basis.push(v / nrm);
            true
        } else {
            false
        }
    };
    for c in cols {
        if basis.len() == k {
            break;
        }
        push(&mut basis, c);
    }
    let mut i = 0;
    while basis.len() < k && i < m {
        let mut e = DVector::zeros(m);
        e[i] = 1.0;
        push(&mut basis, e);
        i += 1;
    }
    DMatrix::from_columns(&basis)
}

/// Cholesky factor of a symmetric positive definite system.
pub fn cholesky(a: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    Cholesky::new(a)
}

/// `g + lambda * I`.
pub fn shifted(g: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let mut a = g.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    a
}
