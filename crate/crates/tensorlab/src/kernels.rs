//! Dense kernels. Row-major everywhere; the inner loops are written as
//! eight-lane accumulations so they vectorize without fast-math.

const LANES: usize = 8;

#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        let x: &[f32; LANES] = x.try_into().unwrap();
        let y: &[f32; LANES] = y.try_into().unwrap();
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f32, x: &[f32], y: &mut [f32]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `c[m,n] = a[m,k] · b[n,k]ᵀ`
///
/// Every element is the left-to-right sum over `k` that `matmul_nn` would
/// produce, whatever `m` is, so a one-row call matches the same row of a
/// batched call bit for bit.
pub fn matmul_nt(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    if m >= TRANSPOSE_MIN_ROWS {
        return matmul_nn(a, &transpose(b, n, k), m, k, n);
    }
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        for (j, cj) in c[i * n..(i + 1) * n].iter_mut().enumerate() {
            let mut s = 0.0f32;
            for (&av, &bv) in ar.iter().zip(&b[j * k..(j + 1) * k]) {
                s += av * bv;
            }
            *cj = s;
        }
    }
    c
}

const TRANSPOSE_MIN_ROWS: usize = 4;

/// `b[rows,cols]` to `[cols,rows]`
pub fn transpose(b: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut t = vec![0.0; rows * cols];
    for (r, row) in b.chunks_exact(cols).enumerate() {
        for (c, &v) in row.iter().enumerate() {
            t[c * rows + r] = v;
        }
    }
    t
}

/// `c[m,n] = a[m,k] · b[k,n]`
pub fn matmul_nn(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut c = vec![0.0; m * n];
    gemm_acc(a, b, m, k, n, &mut c);
    c
}

/// `out[k,n] += a[m,k]ᵀ · b[m,n]`
pub fn matmul_tn_acc(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    gemm_acc(&transpose(a, m, k), b, k, m, n, out);
}

/// `out[m,k] += a[m,n] · b[n,k]` (the plain product, accumulated)
pub fn matmul_nn_acc(a: &[f32], b: &[f32], m: usize, n: usize, k: usize, out: &mut [f32]) {
    gemm_acc(a, b, m, n, k, out);
}

/// `out[m,n] += a[m,k] · b[n,k]ᵀ` (accumulated)
pub fn matmul_nt_acc(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    gemm_acc(a, &transpose(b, n, k), m, k, n, out);
}

/// `out[m,n] += a[m,k] · b[k,n]`, each element accumulated in `k` order
/// starting from its current value. Uses AVX2 when the CPU has it; there is
/// no fused multiply-add on either path, so both give the same bits.
pub fn gemm_acc(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    assert!(a.len() >= m * k && b.len() >= k * n && out.len() >= m * n);
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime.
        unsafe { gemm_avx2(a, b, m, k, n, out) };
        return;
    }
    gemm_body(a, b, m, k, n, out);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn gemm_avx2(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    gemm_body(a, b, m, k, n, out);
}

const TILE_ROWS: usize = 4;

#[inline(always)]
fn gemm_body(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    let mut i = 0;
    while i + TILE_ROWS <= m {
        row_block::<TILE_ROWS>(a, b, i, k, n, out);
        i += TILE_ROWS;
    }
    for i in i..m {
        row_block::<1>(a, b, i, k, n, out);
    }
}

/// Rows `i..i + R` of the product, in column tiles of 16, 8, 4 and 1.
#[inline(always)]
fn row_block<const R: usize>(a: &[f32], b: &[f32], i: usize, k: usize, n: usize, out: &mut [f32]) {
    let mut j = 0;
    while j + 16 <= n {
        tile::<R, 16>(a, b, i, j, k, n, out);
        j += 16;
    }
    if j + 8 <= n {
        tile::<R, 8>(a, b, i, j, k, n, out);
        j += 8;
    }
    if j + 4 <= n {
        tile::<R, 4>(a, b, i, j, k, n, out);
        j += 4;
    }
    for j in j..n {
        tile::<R, 1>(a, b, i, j, k, n, out);
    }
}

/// An `R × W` block of `out` held in registers while `p` runs over `k`.
#[inline(always)]
fn tile<const R: usize, const W: usize>(
    a: &[f32],
    b: &[f32],
    i: usize,
    j: usize,
    k: usize,
    n: usize,
    out: &mut [f32],
) {
    let rows: [&[f32]; R] = std::array::from_fn(|r| &a[(i + r) * k..(i + r + 1) * k]);
    let mut acc = [[0.0f32; W]; R];
    for (r, acc) in acc.iter_mut().enumerate() {
        acc.copy_from_slice(&out[(i + r) * n + j..(i + r) * n + j + W]);
    }
    for p in 0..k {
        let bv: &[f32; W] = b[p * n + j..p * n + j + W].try_into().unwrap();
        for r in 0..R {
            let av = rows[r][p];
            for l in 0..W {
                acc[r][l] += av * bv[l];
            }
        }
    }
    for (r, acc) in acc.iter().enumerate() {
        out[(i + r) * n + j..(i + r) * n + j + W].copy_from_slice(acc);
    }
}

pub fn softmax_in_place(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = 1.0 / sum;
    row.iter_mut().for_each(|v| *v *= inv);
}

pub fn log_softmax_in_place(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let sum: f32 = row.iter().map(|v| (v - max).exp()).sum();
    let lse = max + sum.ln();
    row.iter_mut().for_each(|v| *v -= lse);
}

pub const LN_EPS: f32 = 1e-5;

/// Row-wise layer norm of `x[m,n]`. Returns the output, the normalized
/// input and each row's reciprocal standard deviation.
pub fn layer_norm(
    x: &[f32],
    gamma: &[f32],
    beta: &[f32],
    m: usize,
    n: usize,
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let mut xhat = Vec::with_capacity(m * n);
    let mut rstd = Vec::with_capacity(m);
    let mut out = Vec::with_capacity(m * n);
    for r in x.chunks_exact(n) {
        let mean = r.iter().sum::<f32>() / n as f32;
        let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n as f32;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd.push(rs);
        for (j, v) in r.iter().enumerate() {
            let h = (v - mean) * rs;
            xhat.push(h);
            out.push(h * gamma[j] + beta[j]);
        }
    }
    (out, xhat, rstd)
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
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

    #[test]
    fn products_agree_with_naive_loops() {
        let (m, k, n) = (5, 11, 7);
        let a: Vec<f32> = (0..m * k).map(|i| ((i * 7) % 13) as f32 - 6.0).collect();
        let b: Vec<f32> = (0..k * n).map(|i| ((i * 5) % 11) as f32 - 5.0).collect();
        let want = naive(&a, &b, m, k, n);
        assert_eq!(matmul_nn(&a, &b, m, k, n), want);
        assert_eq!(matmul_nt(&a, &transpose(&b, k, n), m, k, n), want);
        // aᵀ·y with a [m,k], y [m,n]
        let y: Vec<f32> = (0..m * n).map(|i| ((i * 3) % 7) as f32 - 3.0).collect();
        let mut out = vec![0.0; k * n];
        matmul_tn_acc(&a, &y, m, k, n, &mut out);
        assert_eq!(out, naive(&transpose(&a, m, k), &y, k, m, n));
        let mut out = vec![0.0; m * n];
        matmul_nn_acc(&a, &b, m, k, n, &mut out);
        assert_eq!(out, want);
        let mut out = vec![0.0; m * n];
        matmul_nt_acc(&a, &transpose(&b, k, n), m, k, n, &mut out);
        assert_eq!(out, want);
    }

    #[test]
    fn single_row_product_matches_batched_row() {
        let (m, k, n) = (9, 37, 13);
        let a: Vec<f32> = (0..m * k).map(|i| (i as f32 * 0.37).sin()).collect();
        let b: Vec<f32> = (0..n * k).map(|i| (i as f32 * 0.11).cos()).collect();
        let full = matmul_nt(&a, &b, m, k, n);
        for i in 0..m {
            let row = matmul_nt(&a[i * k..(i + 1) * k], &b, 1, k, n);
            assert_eq!(row, &full[i * n..(i + 1) * n]);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut r = vec![1.0, 2.0, -3.0, 40.0];
        softmax_in_place(&mut r);
        assert!((r.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }
}
