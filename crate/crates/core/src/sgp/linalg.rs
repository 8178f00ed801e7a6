//! Dense symmetric positive-definite kernels on row-major storage.
//!
//! Only the lower triangle of `a` is read or written.

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize the reduction.
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * c + k] * b[4 * c + k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += alpha * x;
    }
}

/// Overwrites the lower triangle of `a` with its Cholesky factor. Returns
/// false if `a` is not numerically positive definite.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    for i in 0..n {
        for j in 0..=i {
            let s = {
                let (head, tail) = a.split_at(i * n);
                let row_i = &tail[..j];
                if j == i {
                    dot(row_i, row_i)
                } else {
                    dot(row_i, &head[j * n..j * n + j])
                }
            };
            let v = a[i * n + j] - s;
            if j == i {
                if !(v > 0.0) || !v.is_finite() {
                    return false;
                }
                a[i * n + i] = v.sqrt();
            } else {
                a[i * n + j] = v / a[j * n + j];
            }
        }
    }
    true
}

/// Solves `L x = b` in place.
pub fn solve_lower(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let s = dot(&l[i * n..i * n + i], &b[..i]);
        b[i] = (b[i] - s) / l[i * n + i];
    }
}

/// Solves `Lᵀ x = b` in place.
pub fn solve_upper_transposed(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        b[i] /= l[i * n + i];
        let bi = b[i];
        axpy(-bi, &l[i * n..i * n + i], &mut b[..i]);
    }
}

/// Solves `L Lᵀ x = b` in place.
pub fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    solve_lower(l, n, b);
    solve_upper_transposed(l, n, b);
}

pub fn log_det(l: &[f64], n: usize) -> f64 {
    2.0 * (0..n).map(|i| l[i * n + i].ln()).sum::<f64>()
}

/// Lower triangle of `(L Lᵀ)⁻¹`, row-major; the upper triangle is zero.
pub fn inverse_lower(l: &[f64], n: usize) -> Vec<f64> {
    // M = L⁻¹ by rows: row i = (e_i - Σ_{k<i} L_ik M_k) / L_ii.
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        let (done, rest) = m.split_at_mut(i * n);
        let row = &mut rest[..n];
        row[i] = 1.0;
        for k in 0..i {
            let lik = l[i * n + k];
            if lik != 0.0 {
                axpy(-lik, &done[k * n..k * n + k + 1], &mut row[..k + 1]);
            }
        }
        let d = 1.0 / l[i * n + i];
        row[..=i].iter_mut().for_each(|v| *v *= d);
    }
    // K⁻¹ = MᵀM, accumulated one row of M at a time.
    let mut inv = vec![0.0; n * n];
    for k in 0..n {
        let mk = &m[k * n..k * n + k + 1];
        for i in 0..=k {
            let a = mk[i];
            if a != 0.0 {
                axpy(a, &mk[..=i], &mut inv[i * n..i * n + i + 1]);
            }
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn spd(n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let d = i as f64 - j as f64;
                a[i * n + j] = (-d * d / 8.0).exp() + if i == j { 0.1 } else { 0.0 };
            }
        }
        a
    }

    #[test]
    fn matches_dense_reference() {
        let n = 13;
        let a = spd(n);
        let reference = DMatrix::from_row_slice(n, n, &a);
        let mut l = a.clone();
        assert!(cholesky_in_place(&mut l, n));
        let chol = reference.clone().cholesky().unwrap();
        for i in 0..n {
            for j in 0..=i {
                assert!((l[i * n + j] - chol.l()[(i, j)]).abs() < 1e-12);
            }
        }
        let inv = inverse_lower(&l, n);
        let ref_inv = reference.clone().try_inverse().unwrap();
        for i in 0..n {
            for j in 0..=i {
                assert!((inv[i * n + j] - ref_inv[(i, j)]).abs() < 1e-9 * ref_inv.amax());
            }
        }
        let mut b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let expected = &ref_inv * nalgebra::DVector::from_vec(b.clone());
        cholesky_solve(&l, n, &mut b);
        for i in 0..n {
            assert!((b[i] - expected[i]).abs() < 1e-9 * expected.amax());
        }
        assert!((log_det(&l, n) - reference.determinant().ln()).abs() < 1e-9);
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = vec![1.0, 0.0, 2.0, 1.0];
        assert!(!cholesky_in_place(&mut a, 2));
    }
}
