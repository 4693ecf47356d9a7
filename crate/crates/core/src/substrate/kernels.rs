//! Inner loops shared by the inference path and the tape. All reductions use a
//! fixed summation order so results are bit-identical across runs and thread
//! counts.

use super::Real;

/// y += alpha * x
#[inline]
pub fn axpy<R: Real>(alpha: R, x: &[R], y: &mut [R]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// C[m x n] += A[m x k] @ B[k x n], all row-major.
pub fn mm_acc<R: Real>(a: &[R], b: &[R], c: &mut [R], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            axpy(av, &b[kk * n..(kk + 1) * n], crow);
        }
    }
}

/// C[k x n] += A^T[k x b] @ G[b x n] where A is stored as [b x k].
pub fn mm_at_acc<R: Real>(a: &[R], g: &[R], c: &mut [R], b_rows: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), b_rows * k);
    debug_assert_eq!(g.len(), b_rows * n);
    debug_assert_eq!(c.len(), k * n);
    for i in 0..b_rows {
        let grow = &g[i * n..(i + 1) * n];
        for kk in 0..k {
            axpy(a[i * k + kk], grow, &mut c[kk * n..(kk + 1) * n]);
        }
    }
}

/// out[j] += sum over rows of G[b x n]
pub fn col_sums_acc<R: Real>(g: &[R], rows: usize, n: usize, out: &mut [R]) {
    debug_assert_eq!(g.len(), rows * n);
    debug_assert_eq!(out.len(), n);
    for i in 0..rows {
        for j in 0..n {
            out[j] += g[i * n + j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mm_acc_matches_naive() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.73).cos()).collect();
        let mut c = vec![0.0; m * n];
        mm_acc(&a, &b, &mut c, m, k, n);
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for kk in 0..k {
                    s += a[i * k + kk] * b[kk * n + j];
                }
                assert!((c[i * n + j] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mm_at_acc_matches_naive() {
        let (b_rows, k, n) = (4, 3, 2);
        let a: Vec<f64> = (0..b_rows * k).map(|i| (i as f64 * 0.11).sin()).collect();
        let g: Vec<f64> = (0..b_rows * n).map(|i| (i as f64 * 0.29).cos()).collect();
        let mut c = vec![0.0; k * n];
        mm_at_acc(&a, &g, &mut c, b_rows, k, n);
        for kk in 0..k {
            for j in 0..n {
                let mut s = 0.0;
                for i in 0..b_rows {
                    s += a[i * k + kk] * g[i * n + j];
                }
                assert!((c[kk * n + j] - s).abs() < 1e-12);
            }
        }
    }
}
