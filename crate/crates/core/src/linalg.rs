//! Small dense helpers shared by the samplers and basis code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "cholesky of a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    let mut l = a;
    // Column-oriented left-looking factorization on the lower triangle.
    for j in 0..n {
        for k in 0..j {
            let ljk = l[(j, k)];
            if ljk != 0.0 {
                let (src, mut dst) = l.columns_range_pair_mut(k, j);
                let src = src.column(0);
                let mut dst = dst.column_mut(0);
                for i in j..n {
                    dst[i] -= ljk * src[i];
                }
            }
        }
        let d = l[(j, j)];
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Cholesky(format!("pivot {j} is {d:e}")));
        }
        let d = d.sqrt();
        let mut col = l.column_mut(j);
        col[j] = d;
        for i in j + 1..n {
            col[i] /= d;
        }
    }
    for j in 1..n {
        for i in 0..j {
            l[(i, j)] = 0.0;
        }
    }
    Ok(l)
}

/// Cholesky with a single retry after adding `jitter` to the diagonal.
pub fn cholesky_with_jitter(a: &DMatrix<f64>, jitter: f64) -> Result<DMatrix<f64>> {
    match cholesky(a.clone()) {
        Ok(l) => Ok(l),
        Err(_) => {
            let mut b = a.clone();
            for i in 0..b.nrows() {
                b[(i, i)] += jitter;
            }
            cholesky(b)
        }
    }
}

/// `2 * sum(log diag(L))`.
pub fn log_det_from_cholesky(l: &DMatrix<f64>) -> f64 {
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Solve `L x = b` in place.
pub fn forward_solve(l: &DMatrix<f64>, b: &mut [f64]) {
    let n = l.nrows();
    for j in 0..n {
        b[j] /= l[(j, j)];
        let bj = b[j];
        if bj != 0.0 {
            let col = l.column(j);
            for i in j + 1..n {
                b[i] -= col[i] * bj;
            }
        }
    }
}

/// Solve `L' x = b` in place.
pub fn backward_solve_transpose(l: &DMatrix<f64>, b: &mut [f64]) {
    let n = l.nrows();
    for j in (0..n).rev() {
        let col = l.column(j);
        let mut s = b[j];
        for i in j + 1..n {
            s -= col[i] * b[i];
        }
        b[j] = s / l[(j, j)];
    }
}

/// `L v` for lower-triangular `L`.
pub fn lower_mul_vec(l: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let n = l.nrows();
    let mut out = vec![0.0; n];
    for j in 0..n {
        let vj = v[j];
        if vj != 0.0 {
            let col = l.column(j);
            for i in j..n {
                out[i] += col[i] * vj;
            }
        }
    }
    out
}

/// `|| L' v ||^2`, i.e. `v' (L L') v`.
pub fn quad_form_lower(l: &DMatrix<f64>, v: &[f64]) -> f64 {
    let n = l.nrows();
    let mut s = 0.0;
    for j in 0..n {
        let col = l.column(j);
        let mut t = 0.0;
        for i in j..n {
            t += col[i] * v[i];
        }
        s += t * t;
    }
    s
}

pub fn mat_vec(a: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (a * DVector::from_column_slice(v)).as_slice().to_vec()
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted
/// descending and eigenvectors as matching columns.
pub fn symmetric_eigen_desc(a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = a.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0]);
        let l = cholesky(a.clone()).unwrap();
        assert!((&l * l.transpose() - &a).abs().max() < 1e-14);
        let mut b = vec![1.0, -2.0, 0.5];
        let orig = b.clone();
        forward_solve(&l, &mut b);
        backward_solve_transpose(&l, &mut b);
        let back = mat_vec(&a, &b);
        for (x, y) in back.iter().zip(&orig) {
            assert!((x - y).abs() < 1e-13);
        }
        let v = [0.3, -1.0, 2.0];
        let direct = dot(&v, &mat_vec(&a, &v));
        assert!((quad_form_lower(&l, &v) - direct).abs() < 1e-12);
        let lv = lower_mul_vec(&l, &v);
        let dense = mat_vec(&l, &v);
        assert!(lv.iter().zip(&dense).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(cholesky(a).is_err());
    }
}
