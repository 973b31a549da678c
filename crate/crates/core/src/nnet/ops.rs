//! Batched primitives on flat buffers. Activations are channel-major
//! `[C, N, H, W]`; a convolution kernel `[C_out, C_in, k, k]` is used as a
//! `C_out x (C_in k k)` matrix against the im2col expansion of its input.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

/// Shape of a channel-major activation buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub c: usize,
    pub n: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub fn new(c: usize, n: usize, h: usize, w: usize) -> Self {
        Self { c, n, h, w }
    }

    /// Spatial positions across the batch, `N H W`.
    pub fn cols(&self) -> usize {
        self.n * self.h * self.w
    }

    pub fn len(&self) -> usize {
        self.c * self.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn with_channels(&self, c: usize) -> Self {
        Self { c, ..*self }
    }
}

pub(crate) fn view(data: &[f64], rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), data).expect("buffer matches matrix shape")
}

pub(crate) fn view_mut(data: &mut [f64], rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), data).expect("buffer matches matrix shape")
}

/// Overlap of output columns `0..w` with inputs shifted by `kx - pad`.
fn valid_span(len: usize, offset: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(offset);
    let hi = (len + pad).saturating_sub(offset).min(len);
    (lo, hi.max(lo))
}

/// Expands `x` (dims `d`) into `[C k k, N H W]` patches with zero padding.
pub fn im2col(x: &[f64], d: Dims, k: usize) -> Vec<f64> {
    let pad = k / 2;
    let cols = d.cols();
    let mut out = vec![0.0; d.c * k * k * cols];
    for ci in 0..d.c {
        for ky in 0..k {
            let (ylo, yhi) = valid_span(d.h, ky, pad);
            for kx in 0..k {
                let (xlo, xhi) = valid_span(d.w, kx, pad);
                let row = (ci * k + ky) * k + kx;
                let dst = &mut out[row * cols..(row + 1) * cols];
                for b in 0..d.n {
                    for y in ylo..yhi {
                        let sy = y + ky - pad;
                        let src = ((ci * d.n + b) * d.h + sy) * d.w;
                        let dst_row = (b * d.h + y) * d.w;
                        let (s0, s1) = (src + xlo + kx - pad, src + xhi + kx - pad);
                        dst[dst_row + xlo..dst_row + xhi].copy_from_slice(&x[s0..s1]);
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
pub fn col2im(col: &[f64], d: Dims, k: usize) -> Vec<f64> {
    let pad = k / 2;
    let cols = d.cols();
    let mut out = vec![0.0; d.len()];
    for ci in 0..d.c {
        for ky in 0..k {
            let (ylo, yhi) = valid_span(d.h, ky, pad);
            for kx in 0..k {
                let (xlo, xhi) = valid_span(d.w, kx, pad);
                let row = (ci * k + ky) * k + kx;
                let src = &col[row * cols..(row + 1) * cols];
                for b in 0..d.n {
                    for y in ylo..yhi {
                        let sy = y + ky - pad;
                        let dst = ((ci * d.n + b) * d.h + sy) * d.w;
                        let src_row = (b * d.h + y) * d.w;
                        for x in xlo..xhi {
                            out[dst + x + kx - pad] += src[src_row + x];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Same-padded cross-correlation. Returns `[c_out, N, H, W]`.
pub fn conv_forward(x: &[f64], d: Dims, weight: &[f64], bias: &[f64], k: usize) -> Vec<f64> {
    let c_out = bias.len();
    let inner = d.c * k * k;
    let cols = d.cols();
    debug_assert_eq!(weight.len(), c_out * inner);
    let mut y = vec![0.0; c_out * cols];
    for (o, &b) in bias.iter().enumerate() {
        y[o * cols..(o + 1) * cols].fill(b);
    }
    let expanded;
    let col = if k == 1 {
        x
    } else {
        expanded = im2col(x, d, k);
        &expanded
    };
    general_mat_mul(
        1.0,
        &view(weight, c_out, inner),
        &view(col, inner, cols),
        1.0,
        &mut view_mut(&mut y, c_out, cols),
    );
    y
}

/// Backward of [`conv_forward`]. Accumulates into `dw` and `db`; returns the
/// input gradient when `need_dx`.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward(
    x: &[f64],
    d: Dims,
    weight: &[f64],
    k: usize,
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    need_dx: bool,
) -> Option<Vec<f64>> {
    let c_out = db.len();
    let inner = d.c * k * k;
    let cols = d.cols();
    let expanded;
    let col = if k == 1 {
        x
    } else {
        expanded = im2col(x, d, k);
        &expanded
    };
    let dy_m = view(dy, c_out, cols);
    general_mat_mul(
        1.0,
        &dy_m,
        &view(col, inner, cols).t(),
        1.0,
        &mut view_mut(dw, c_out, inner),
    );
    for (o, g) in db.iter_mut().enumerate() {
        *g += dy[o * cols..(o + 1) * cols].iter().sum::<f64>();
    }
    if !need_dx {
        return None;
    }
    let mut dcol = vec![0.0; inner * cols];
    general_mat_mul(
        1.0,
        &view(weight, c_out, inner).t(),
        &dy_m,
        0.0,
        &mut view_mut(&mut dcol, inner, cols),
    );
    Some(if k == 1 { dcol } else { col2im(&dcol, d, k) })
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// `dy` masked by `out > 0`, where `out` is the ReLU output.
pub fn relu_backward(out: &[f64], dy: &[f64]) -> Vec<f64> {
    out.iter().zip(dy).map(|(&o, &g)| if o > 0.0 { g } else { 0.0 }).collect()
}

/// Fully connected layer: `x [N, in]`, `weight [out, in]` -> `[N, out]`.
pub fn dense_forward(x: &[f64], n: usize, weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let out = bias.len();
    let inp = weight.len() / out.max(1);
    let mut y = Vec::with_capacity(n * out);
    for _ in 0..n {
        y.extend_from_slice(bias);
    }
    general_mat_mul(
        1.0,
        &view(x, n, inp),
        &view(weight, out, inp).t(),
        1.0,
        &mut view_mut(&mut y, n, out),
    );
    y
}

/// Backward of [`dense_forward`]; accumulates `dw += dy^T x`, `db += sum dy`.
pub fn dense_backward(
    x: &[f64],
    n: usize,
    weight: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    need_dx: bool,
) -> Option<Vec<f64>> {
    let out = db.len();
    let inp = weight.len() / out.max(1);
    let dy_m = view(dy, n, out);
    general_mat_mul(1.0, &dy_m.t(), &view(x, n, inp), 1.0, &mut view_mut(dw, out, inp));
    for row in dy.chunks_exact(out) {
        for (g, &v) in db.iter_mut().zip(row) {
            *g += v;
        }
    }
    if !need_dx {
        return None;
    }
    let mut dx = vec![0.0; n * inp];
    general_mat_mul(1.0, &dy_m, &view(weight, out, inp), 0.0, &mut view_mut(&mut dx, n, inp));
    Some(dx)
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Saved state of a training-mode batch normalization.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Per-channel batch normalization over `N H W` using batch statistics.
pub fn bn_forward_train(x: &[f64], c: usize, gamma: &[f64], beta: &[f64]) -> (Vec<f64>, BnCache) {
    let m = x.len() / c;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let (mut means, mut vars, mut inv) = (vec![0.0; c], vec![0.0; c], vec![0.0; c]);
    for ch in 0..c {
        let xs = &x[ch * m..(ch + 1) * m];
        let mean = xs.iter().sum::<f64>() / m as f64;
        let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
        let is = 1.0 / (var + BN_EPS).sqrt();
        for i in 0..m {
            let xh = (xs[i] - mean) * is;
            xhat[ch * m + i] = xh;
            y[ch * m + i] = gamma[ch] * xh + beta[ch];
        }
        means[ch] = mean;
        vars[ch] = var;
        inv[ch] = is;
    }
    (y, BnCache { xhat, inv_std: inv, mean: means, var: vars })
}

/// Normalization with stored running statistics.
pub fn bn_forward_eval(
    x: &[f64],
    c: usize,
    gamma: &[f64],
    beta: &[f64],
    mean: &[f64],
    var: &[f64],
) -> Vec<f64> {
    let m = x.len() / c;
    let mut y = vec![0.0; x.len()];
    for ch in 0..c {
        let is = 1.0 / (var[ch] + BN_EPS).sqrt();
        for i in 0..m {
            y[ch * m + i] = gamma[ch] * (x[ch * m + i] - mean[ch]) * is + beta[ch];
        }
    }
    y
}

/// Folds batch statistics into running estimates (unbiased variance).
pub fn bn_update_running(cache: &BnCache, m: usize, mean: &mut [f64], var: &mut [f64]) {
    let unbias = if m > 1 { m as f64 / (m - 1) as f64 } else { 1.0 };
    for ch in 0..mean.len() {
        mean[ch] = BN_MOMENTUM * mean[ch] + (1.0 - BN_MOMENTUM) * cache.mean[ch];
        var[ch] = BN_MOMENTUM * var[ch] + (1.0 - BN_MOMENTUM) * cache.var[ch] * unbias;
    }
}

/// Backward of [`bn_forward_train`]; accumulates `dgamma`, `dbeta`.
pub fn bn_backward(
    cache: &BnCache,
    gamma: &[f64],
    dy: &[f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Vec<f64> {
    let c = gamma.len();
    let m = dy.len() / c;
    let mf = m as f64;
    let mut dx = vec![0.0; dy.len()];
    for ch in 0..c {
        let r = ch * m..(ch + 1) * m;
        let (dys, xh) = (&dy[r.clone()], &cache.xhat[r]);
        let sum_dy: f64 = dys.iter().sum();
        let sum_dy_xh: f64 = dys.iter().zip(xh).map(|(a, b)| a * b).sum();
        dgamma[ch] += sum_dy_xh;
        dbeta[ch] += sum_dy;
        let k = gamma[ch] * cache.inv_std[ch] / mf;
        for i in 0..m {
            dx[ch * m + i] = k * (mf * dys[i] - sum_dy - xh[i] * sum_dy_xh);
        }
    }
    dx
}
