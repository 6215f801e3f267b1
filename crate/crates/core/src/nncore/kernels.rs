//! Dense kernels shared by the graph operations.
//!
//! Every reduction runs in a fixed order. In `gemm` each output element is
//! accumulated over the inner dimension in ascending index order, starting
//! from zero, one multiply and one add per term (no fused multiply-add, no
//! split accumulators). Results are therefore bit-identical regardless of
//! how many rows are processed together.

use super::tensor::Scalar;

/// sqrt(2 / pi), the constant of the tanh GeLU approximation.
pub const GELU_SQRT_2_OVER_PI: f64 = 0.7978845608;
pub const GELU_CUBIC: f64 = 0.044715;

const ROW_BLOCK: usize = 4;
const COL_BLOCK: usize = 64;


/// `c[m×n] = a[m×k] · b[k×n]`, overwriting `c`.
pub fn gemm<F: Scalar>(a: &[F], b: &[F], c: &mut [F], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if n == 0 || m == 0 {
        return;
    }
    let mut i = 0;
    while i + ROW_BLOCK <= m {
        let mut j0 = 0;
        while j0 < n {
            let w = match n - j0 {
                r if r >= 64 => {
                    block::<F, 64>(a, b, c, i, j0, k, n);
                    64
                }
                r if r >= 32 => {
                    block::<F, 32>(a, b, c, i, j0, k, n);
                    32
                }
                r if r >= 16 => {
                    block::<F, 16>(a, b, c, i, j0, k, n);
                    16
                }
                r if r >= 8 => {
                    block::<F, 8>(a, b, c, i, j0, k, n);
                    8
                }
                r => {
                    block_partial(a, b, c, i, ROW_BLOCK, j0, r, k, n);
                    r
                }
            };
            j0 += w;
        }
        i += ROW_BLOCK;
    }
    if i < m {
        let rows = m - i;
        let mut j0 = 0;
        while j0 < n {
            let w = COL_BLOCK.min(n - j0);
            block_partial(a, b, c, i, rows, j0, w, k, n);
            j0 += w;
        }
    }
}

/// Four rows by `W` columns of accumulators held in registers.
#[inline(always)]
fn block<F: Scalar, const W: usize>(a: &[F], b: &[F], c: &mut [F], i: usize, j0: usize, k: usize, n: usize) {
    let mut acc = [[F::zero(); W]; ROW_BLOCK];
    let a0 = &a[i * k..(i + 1) * k];
    let a1 = &a[(i + 1) * k..(i + 2) * k];
    let a2 = &a[(i + 2) * k..(i + 3) * k];
    let a3 = &a[(i + 3) * k..(i + 4) * k];
    for p in 0..k {
        let brow: &[F; W] = b[p * n + j0..p * n + j0 + W].try_into().unwrap();
        let (x0, x1, x2, x3) = (a0[p], a1[p], a2[p], a3[p]);
        for jj in 0..W {
            let bv = brow[jj];
            acc[0][jj] = acc[0][jj] + x0 * bv;
            acc[1][jj] = acc[1][jj] + x1 * bv;
            acc[2][jj] = acc[2][jj] + x2 * bv;
            acc[3][jj] = acc[3][jj] + x3 * bv;
        }
    }
    for (r, row) in acc.iter().enumerate() {
        c[(i + r) * n + j0..(i + r) * n + j0 + W].copy_from_slice(row);
    }
}

#[allow(clippy::too_many_arguments)]
fn block_partial<F: Scalar>(
    a: &[F],
    b: &[F],
    c: &mut [F],
    i: usize,
    rows: usize,
    j0: usize,
    w: usize,
    k: usize,
    n: usize,
) {
    let mut acc = [[F::zero(); COL_BLOCK]; ROW_BLOCK];
    for p in 0..k {
        let brow = &b[p * n + j0..p * n + j0 + w];
        for r in 0..rows {
            let x = a[(i + r) * k + p];
            let accr = &mut acc[r][..w];
            for (dst, &bv) in accr.iter_mut().zip(brow) {
                *dst = *dst + x * bv;
            }
        }
    }
    for r in 0..rows {
        c[(i + r) * n + j0..(i + r) * n + j0 + w].copy_from_slice(&acc[r][..w]);
    }
}

/// Transpose of a row-major `m×n` matrix.
pub fn transpose<F: Scalar>(a: &[F], m: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); m * n];
    const T: usize = 32;
    for i0 in (0..m).step_by(T) {
        for j0 in (0..n).step_by(T) {
            for i in i0..(i0 + T).min(m) {
                for j in j0..(j0 + T).min(n) {
                    out[j * m + i] = a[i * n + j];
                }
            }
        }
    }
    out
}

/// `a[m×k] · b[n×k]ᵀ`, reducing over `k` in ascending order.
pub fn gemm_nt<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let bt = transpose(b, n, k);
    let mut c = vec![F::zero(); m * n];
    gemm(a, &bt, &mut c, m, k, n);
    c
}

/// `a[m×k]ᵀ · b[m×n]`, reducing over `m` in ascending order.
pub fn gemm_tn<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let at = transpose(a, m, k);
    let mut c = vec![F::zero(); k * n];
    gemm(&at, b, &mut c, k, m, n);
    c
}

#[inline]
pub fn gelu<F: Scalar>(x: F) -> F {
    let half = F::of(0.5);
    let inner = F::of(GELU_SQRT_2_OVER_PI) * (x + F::of(GELU_CUBIC) * x * x * x);
    half * x * (F::one() + inner.tanh_k())
}

/// Derivative of [`gelu`].
#[inline]
pub fn gelu_grad<F: Scalar>(x: F) -> F {
    let half = F::of(0.5);
    let s = F::of(GELU_SQRT_2_OVER_PI);
    let c = F::of(GELU_CUBIC);
    let t = (s * (x + c * x * x * x)).tanh_k();
    let dinner = s * (F::one() + F::of(3.0) * c * x * x);
    half * (F::one() + t) + half * x * (F::one() - t * t) * dinner
}

#[inline]
pub fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp_k())
}

/// Row-wise softmax and log-sum-exp from a single pass of exponentials,
/// both shifted by the row maximum.
pub fn softmax_lse_rows<F: Scalar>(x: &[F], cols: usize) -> (Vec<F>, Vec<F>) {
    let mut out = vec![F::zero(); x.len()];
    let mut lse = Vec::with_capacity(x.len() / cols.max(1));
    for (src, dst) in x.chunks_exact(cols).zip(out.chunks_exact_mut(cols)) {
        let max = lane_fold(src, F::neg_infinity(), F::max);
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = (s - max).exp_k();
        }
        let sum = lane_fold(dst, F::zero(), |a, b| a + b);
        for d in dst.iter_mut() {
            *d = *d / sum;
        }
        lse.push(max + sum.ln());
    }
    (out, lse)
}

/// Reduces with eight interleaved partial results combined in a fixed
/// order, so the result does not depend on the target's vector width.
#[inline(always)]
fn lane_fold<F: Scalar>(xs: &[F], init: F, f: impl Fn(F, F) -> F) -> F {
    let mut lanes = [init; 8];
    let mut chunks = xs.chunks_exact(8);
    for c in &mut chunks {
        for j in 0..8 {
            lanes[j] = f(lanes[j], c[j]);
        }
    }
    for (j, &v) in chunks.remainder().iter().enumerate() {
        lanes[j] = f(lanes[j], v);
    }
    let a = [f(lanes[0], lanes[4]), f(lanes[1], lanes[5]), f(lanes[2], lanes[6]), f(lanes[3], lanes[7])];
    f(f(a[0], a[2]), f(a[1], a[3]))
}

pub fn softmax_rows<F: Scalar>(x: &[F], cols: usize) -> Vec<F> {
    softmax_lse_rows(x, cols).0
}

pub fn log_sum_exp_rows<F: Scalar>(x: &[F], cols: usize) -> Vec<F> {
    softmax_lse_rows(x, cols).1
}
