//! Row-major matrix kernels shared by dense and convolution layers.

const MR: usize = 4;
const NR: usize = 8;

/// `c[m×n] += A · b[inner×n]` where `A[i][p] = a[i·row + p·step]`.
///
/// Every output accumulates its products in ascending `p`, in register
/// tiles of `MR×NR` and one scalar loop for the ragged edges.
#[allow(clippy::too_many_arguments)]
fn gemm_acc(
    a: &[f64],
    row: usize,
    step: usize,
    b: &[f64],
    c: &mut [f64],
    m: usize,
    inner: usize,
    n: usize,
) {
    let edge = |c: &mut [f64], rows: core::ops::Range<usize>, cols: core::ops::Range<usize>| {
        for i in rows {
            for p in 0..inner {
                let av = a[i * row + p * step];
                let b_row = &b[p * n..(p + 1) * n];
                for j in cols.clone() {
                    c[i * n + j] += av * b_row[j];
                }
            }
        }
    };
    let mut i0 = 0;
    while i0 + MR <= m {
        let mut j0 = 0;
        while j0 + NR <= n {
            let mut acc = [[0.0f64; NR]; MR];
            for (r, acc_r) in acc.iter_mut().enumerate() {
                acc_r.copy_from_slice(&c[(i0 + r) * n + j0..][..NR]);
            }
            for p in 0..inner {
                let bp: &[f64; NR] = b[p * n + j0..][..NR].try_into().unwrap();
                for (r, acc_r) in acc.iter_mut().enumerate() {
                    let av = a[(i0 + r) * row + p * step];
                    for (x, &bv) in acc_r.iter_mut().zip(bp) {
                        *x += av * bv;
                    }
                }
            }
            for (r, acc_r) in acc.iter().enumerate() {
                c[(i0 + r) * n + j0..][..NR].copy_from_slice(acc_r);
            }
            j0 += NR;
        }
        if j0 < n {
            edge(c, i0..i0 + MR, j0..n);
        }
        i0 += MR;
    }
    for i in i0..m {
        let mut j0 = 0;
        while j0 + NR <= n {
            let mut acc: [f64; NR] = c[i * n + j0..][..NR].try_into().unwrap();
            for p in 0..inner {
                let av = a[i * row + p * step];
                let bp: &[f64; NR] = b[p * n + j0..][..NR].try_into().unwrap();
                for (x, &bv) in acc.iter_mut().zip(bp) {
                    *x += av * bv;
                }
            }
            c[i * n + j0..][..NR].copy_from_slice(&acc);
            j0 += NR;
        }
        if j0 < n {
            edge(c, i..i + 1, j0..n);
        }
    }
}

/// `c[m×n] += a[m×k] · b[k×n]`
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    gemm_acc(a, k, 1, b, c, m, k, n);
}

/// `c[k×n] += aᵀ · b` for `a[m×k]`, `b[m×n]`.
pub(crate) fn matmul_at_b_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    gemm_acc(a, 1, k, b, c, k, m, n);
}

/// `c[m×k] += a · bᵀ` for `a[m×n]`, `b[k×n]`.
pub(crate) fn matmul_a_bt_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, n: usize, k: usize) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * k);
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        for p in 0..k {
            c[i * k + p] += dot(a_row, &b[p * n..(p + 1) * n]);
        }
    }
}

/// Four-lane dot product; the fixed lane order keeps results reproducible.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in chunks * 4..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Geometry of one 2-D convolution over a batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn columns(&self) -> usize {
        self.batch * self.out_h * self.out_w
    }
}

/// Output columns `lo..hi` whose tap `kj` lands inside the input row.
fn valid_span(g: &ConvGeom, kj: usize) -> (usize, usize) {
    let lo = if g.pad > kj {
        (g.pad - kj).div_ceil(g.stride)
    } else {
        0
    };
    let hi = if g.width + g.pad > kj {
        ((g.width + g.pad - kj - 1) / g.stride + 1).min(g.out_w)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// Unfolds `x[B,C,H,W]` into `cols[C·k·k, B·Ho·Wo]`. Padding taps are
/// skipped, so `cols` must arrive zeroed.
pub(crate) fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let n = g.columns();
    let plane = g.out_h * g.out_w;
    let image = g.height * g.width;
    for c in 0..g.channels {
        for ki in 0..g.kernel {
            // output rows whose tap `ki` lands inside the input
            let (row_lo, row_hi) = valid_rows(g, ki);
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let dst = &mut cols[row * n..(row + 1) * n];
                let (lo, hi) = valid_span(g, kj);
                if lo == hi {
                    continue;
                }
                // input column of output column `lo`
                let first = lo * g.stride + kj - g.pad;
                for b in 0..g.batch {
                    let src = &x[(b * g.channels + c) * image..][..image];
                    for oy in row_lo..row_hi {
                        let iy = oy * g.stride + ki - g.pad;
                        let at = b * plane + oy * g.out_w;
                        let src_at = iy * g.width + first;
                        for i in 0..hi - lo {
                            dst[at + lo + i] = src[src_at + i * g.stride];
                        }
                    }
                }
            }
        }
    }
}

/// Output rows `lo..hi` whose tap `ki` lands inside the input.
fn valid_rows(g: &ConvGeom, ki: usize) -> (usize, usize) {
    let rows = ConvGeom {
        width: g.height,
        out_w: g.out_h,
        ..*g
    };
    valid_span(&rows, ki)
}

/// Adjoint of [`im2col`]: scatters column gradients back onto `dx`.
pub(crate) fn col2im_acc(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let n = g.columns();
    let plane = g.out_h * g.out_w;
    let image = g.height * g.width;
    for c in 0..g.channels {
        for ki in 0..g.kernel {
            let (row_lo, row_hi) = valid_rows(g, ki);
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let src = &cols[row * n..(row + 1) * n];
                let (lo, hi) = valid_span(g, kj);
                if lo == hi {
                    continue;
                }
                let first = lo * g.stride + kj - g.pad;
                for b in 0..g.batch {
                    let dst = &mut dx[(b * g.channels + c) * image..][..image];
                    for oy in row_lo..row_hi {
                        let iy = oy * g.stride + ki - g.pad;
                        let at = b * plane + oy * g.out_w;
                        let dst_at = iy * g.width + first;
                        for i in 0..hi - lo {
                            dst[dst_at + i * g.stride] += src[at + lo + i];
                        }
                    }
                }
            }
        }
    }
}
