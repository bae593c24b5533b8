//! Plain dense kernels used by the tape and by the tape-free forward pass.
//!
//! Every output row of [`matmul`] depends only on the matching input row and
//! accumulates over the inner dimension in ascending order, so evaluating a
//! batch and evaluating its rows one at a time give bit-identical results.

/// `c[m×n] = a[m×k] · b[k×n]`.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &aip) in arow.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            axpy(aip, &b[p * n..(p + 1) * n], crow);
        }
    }
    c
}

/// `c[m×k] = g[m×n] · bᵀ` where `b` is `k×n`.
pub fn matmul_bt(g: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            c[i * k + p] = dot(grow, &b[p * n..(p + 1) * n]);
        }
    }
    c
}

/// `c[k×n] = aᵀ · g` where `a` is `m×k` and `g` is `m×n`.
pub fn matmul_at(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            axpy(aip, grow, &mut c[p * n..(p + 1) * n]);
        }
    }
    c
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Dot product with four interleaved partial sums.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn transpose(a: &[f64], r: usize, c: usize) -> Vec<f64> {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = a[i * c + j];
            }
        }
        t
    }

    #[test]
    fn variants_agree_with_naive_product() {
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.91).cos()).collect();
        let expect = naive(&a, &b, m, k, n);
        let got = matmul(&a, &b, m, k, n);
        for (x, y) in got.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }
        let bt = transpose(&b, k, n);
        let got = matmul_bt(&a, &bt, m, k, n);
        for (x, y) in got.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }
        let at = transpose(&a, m, k);
        let got = matmul_at(&at, &b, k, m, n);
        for (x, y) in got.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rows_are_independent_of_batch() {
        let (m, k, n) = (9, 6, 4);
        let a: Vec<f64> = (0..m * k).map(|i| ((i * 7919) % 13) as f64 - 6.3).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).sqrt() - 1.7).collect();
        let batch = matmul(&a, &b, m, k, n);
        for i in 0..m {
            let row = matmul(&a[i * k..(i + 1) * k], &b, 1, k, n);
            assert_eq!(&batch[i * n..(i + 1) * n], &row[..]);
        }
    }
}
