//! Brute-force reference implementations. Nothing here calls into the
//! crate's linear algebra, so the tests compare two independent routes.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Mat = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    (0..rows).map(|_| (0..cols).map(|_| gaussian(rng)).collect()).collect()
}

pub fn transpose(a: &Mat) -> Mat {
    if a.is_empty() {
        return vec![];
    }
    (0..a[0].len()).map(|j| a.iter().map(|row| row[j]).collect()).collect()
}

/// Triple-loop product.
pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut c = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for l in 0..k {
                s += a[i][l] * b[l][j];
            }
            c[i][j] = s;
        }
    }
    c
}

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let m = b[0].len();
    let mut aug: Mat = a.iter().zip(b).map(|(ra, rb)| ra.iter().chain(rb).copied().collect()).collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs())).unwrap();
        aug.swap(col, pivot);
        let p = aug[col][col];
        for row in 0..n {
            if row != col {
                let f = aug[row][col] / p;
                for k in col..n + m {
                    aug[row][k] -= f * aug[col][k];
                }
            }
        }
    }
    (0..n).map(|i| (0..m).map(|j| aug[i][n + j] / aug[i][i]).collect()).collect()
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Returns
/// eigenvalues in descending order and the matching eigenvectors as columns.
pub fn jacobi_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.len();
    let mut a = a.clone();
    let mut v: Mat = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = (0..n).map(|r| order.iter().map(|&c| v[r][c]).collect()).collect();
    (values, vectors)
}

/// Singular values of `x` (descending) from the eigenvalues of `x x^T`.
pub fn singular_values(x: &Mat) -> Vec<f64> {
    let g = matmul(x, &transpose(x));
    jacobi_eigen(&g).0.into_iter().map(|l| l.max(0.0).sqrt()).collect()
}

/// Ridge least squares `W = (Y X^T)(X X^T + lambda I)^-1` with `X`, `Y` stored
/// as `features x samples`.
pub fn ridge_map(y: &Mat, x: &Mat, lambda: f64) -> Mat {
    let xt = transpose(x);
    let mut g = matmul(x, &xt);
    for (i, row) in g.iter_mut().enumerate() {
        row[i] += lambda;
    }
    // W G = Y X^T  <=>  G W^T = X Y^T (G symmetric)
    let wt = solve(&g, &matmul(x, &transpose(y)));
    transpose(&wt)
}

/// Affine ridge regression of targets `y(t)` on features `x` (`features x
/// samples`) with an unpenalized intercept, solved on the augmented system
/// `[x; 1]` with the penalty only on the feature block.
pub fn affine_ridge(x: &Mat, y: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let f = x.len();
    let t = y.len();
    let mut aug: Mat = x.clone();
    aug.push(vec![1.0; t]);
    let mut g = matmul(&aug, &transpose(&aug));
    for (i, row) in g.iter_mut().enumerate().take(f) {
        row[i] += lambda;
    }
    let rhs: Mat = aug.iter().map(|row| vec![row.iter().zip(y).map(|(a, b)| a * b).sum()]).collect();
    let sol = solve(&g, &rhs);
    (sol[..f].iter().map(|r| r[0]).collect(), sol[f][0])
}

/// Softmax in double-double style: logits shifted by the max, exponentials
/// summed with Kahan compensation.
pub fn reference_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| if v.is_finite() { (v - max).exp() } else { 0.0 }).collect();
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in &e {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    e.iter().map(|v| v / sum).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
