//! The segmentation-quality regressor: five 3x3 convolutions over the stacked
//! `(image, mask)` pair, batch normalization and leaky ReLU after the first
//! four, global average pooling and a logistic output.
//!
//! Forward and backward passes are written out by hand so the gradient with
//! respect to the mask channel is available to the prompt optimizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::Grid;
use crate::segmenter::logistic;

/// Input channels of every layer followed by the output channels of the last.
pub const CHANNEL_PLAN: [usize; 6] = [2, 8, 16, 16, 32, 1];
pub const STRIDES: [usize; 5] = [1, 2, 2, 2, 1];
pub const KERNEL: usize = 3;
pub const LEAKY_SLOPE: f64 = 0.01;
pub const NORM_EPS: f64 = 1e-5;
pub const NORM_MOMENTUM: f64 = 0.1;

const LAYERS: usize = 5;
const NORMED: usize = 4;

/// Number of stored scalars: convolution weights and biases, normalization
/// scale and shift, and the running mean and variance.
pub const PARAM_COUNT: usize = {
    let mut total = 0;
    let mut l = 0;
    while l < LAYERS {
        total += CHANNEL_PLAN[l] * CHANNEL_PLAN[l + 1] * KERNEL * KERNEL + CHANNEL_PLAN[l + 1];
        if l < NORMED {
            total += 4 * CHANNEL_PLAN[l + 1];
        }
        l += 1;
    }
    total
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are reported for update.
    Train,
    /// Running statistics.
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    /// `[out][in][ky][kx]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormLayer {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

/// All weights and statistics of the regressor.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressorParams {
    pub convs: Vec<ConvLayer>,
    pub norms: Vec<NormLayer>,
}

impl RegressorParams {
    /// Fan-in scaled uniform initialization for the leaky-ReLU stack; biases
    /// zero, normalization scale one and shift zero.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain = (2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE)).sqrt();
        let convs = (0..LAYERS)
            .map(|l| {
                let (cin, cout) = (CHANNEL_PLAN[l], CHANNEL_PLAN[l + 1]);
                let fan_in = (cin * KERNEL * KERNEL) as f64;
                let bound = gain * (3.0 / fan_in).sqrt();
                ConvLayer {
                    in_channels: cin,
                    out_channels: cout,
                    stride: STRIDES[l],
                    weight: (0..cout * cin * KERNEL * KERNEL)
                        .map(|_| rng.random_range(-bound..bound))
                        .collect(),
                    bias: vec![0.0; cout],
                }
            })
            .collect();
        let norms = (0..NORMED)
            .map(|l| {
                let c = CHANNEL_PLAN[l + 1];
                NormLayer {
                    scale: vec![1.0; c],
                    shift: vec![0.0; c],
                    running_mean: vec![0.0; c],
                    running_var: vec![1.0; c],
                }
            })
            .collect();
        Self { convs, norms }
    }

    /// Every stored scalar set to zero (running variance included).
    pub fn zeros() -> Self {
        let mut p = Self::init(0);
        for t in p.tensors_mut() {
            t.fill(0.0);
        }
        p
    }

    /// All stored tensors in serialization order: for each layer its weight
    /// and bias, then (first four layers) scale, shift, running mean and
    /// running variance.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(LAYERS * 2 + NORMED * 4);
        for (l, conv) in self.convs.iter().enumerate() {
            out.push(conv.weight.as_slice());
            out.push(conv.bias.as_slice());
            if let Some(n) = self.norms.get(l) {
                out.extend([
                    n.scale.as_slice(),
                    n.shift.as_slice(),
                    n.running_mean.as_slice(),
                    n.running_var.as_slice(),
                ]);
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(LAYERS * 2 + NORMED * 4);
        let mut norms = self.norms.iter_mut();
        for conv in self.convs.iter_mut() {
            out.push(conv.weight.as_mut_slice());
            out.push(conv.bias.as_mut_slice());
            if let Some(n) = norms.next() {
                out.push(n.scale.as_mut_slice());
                out.push(n.shift.as_mut_slice());
                out.push(n.running_mean.as_mut_slice());
                out.push(n.running_var.as_mut_slice());
            }
        }
        out
    }

    /// Trainable tensors in the same order as [`ParamGrads::tensors`].
    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(LAYERS * 2 + NORMED * 2);
        let mut norms = self.norms.iter_mut();
        for conv in self.convs.iter_mut() {
            out.push(conv.weight.as_mut_slice());
            out.push(conv.bias.as_mut_slice());
            if let Some(n) = norms.next() {
                out.push(n.scale.as_mut_slice());
                out.push(n.shift.as_mut_slice());
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Checks the layer plan and the statistics invariants.
    pub fn validate(&self) -> Result<()> {
        let plan_ok = self.convs.len() == LAYERS
            && self.norms.len() == NORMED
            && self.convs.iter().enumerate().all(|(l, c)| {
                c.in_channels == CHANNEL_PLAN[l]
                    && c.out_channels == CHANNEL_PLAN[l + 1]
                    && c.stride == STRIDES[l]
                    && c.weight.len() == c.in_channels * c.out_channels * KERNEL * KERNEL
                    && c.bias.len() == c.out_channels
            })
            && self.norms.iter().enumerate().all(|(l, n)| {
                let c = CHANNEL_PLAN[l + 1];
                n.scale.len() == c && n.shift.len() == c && n.running_mean.len() == c && n.running_var.len() == c
            });
        if !plan_ok {
            return Err(Error::InvalidConfig("regressor parameters do not follow the layer plan".into()));
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("regressor parameters"));
        }
        if self.norms.iter().any(|n| n.running_var.iter().any(|&v| v < 0.0)) {
            return Err(Error::InvalidConfig("negative running variance".into()));
        }
        Ok(())
    }

    /// FNV-1a over the bit patterns of every stored scalar.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in self.tensors() {
            for v in t {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    /// Folds the batch statistics of a training-mode forward pass into the
    /// running statistics. Running variance uses the unbiased batch variance.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) -> Result<()> {
        if cache.mode != Mode::Train {
            return Err(Error::StaleCache("running statistics need a training-mode pass"));
        }
        for (norm, stats) in self.norms.iter_mut().zip(&cache.norm_stats) {
            let n = stats.count as f64;
            let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
            for c in 0..norm.scale.len() {
                norm.running_mean[c] = (1.0 - NORM_MOMENTUM) * norm.running_mean[c] + NORM_MOMENTUM * stats.mean[c];
                norm.running_var[c] = (1.0 - NORM_MOMENTUM) * norm.running_var[c] + NORM_MOMENTUM * stats.var[c] * unbias;
            }
        }
        Ok(())
    }
}

/// Gradients of the trainable parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    pub conv_weight: Vec<Vec<f64>>,
    pub conv_bias: Vec<Vec<f64>>,
    pub norm_scale: Vec<Vec<f64>>,
    pub norm_shift: Vec<Vec<f64>>,
}

impl ParamGrads {
    fn zeros_like(params: &RegressorParams) -> Self {
        Self {
            conv_weight: params.convs.iter().map(|c| vec![0.0; c.weight.len()]).collect(),
            conv_bias: params.convs.iter().map(|c| vec![0.0; c.bias.len()]).collect(),
            norm_scale: params.norms.iter().map(|n| vec![0.0; n.scale.len()]).collect(),
            norm_shift: params.norms.iter().map(|n| vec![0.0; n.shift.len()]).collect(),
        }
    }

    /// Same order as [`RegressorParams::trainable_mut`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in 0..self.conv_weight.len() {
            out.push(self.conv_weight[l].as_slice());
            out.push(self.conv_bias[l].as_slice());
            if l < self.norm_scale.len() {
                out.push(self.norm_scale[l].as_slice());
                out.push(self.norm_shift[l].as_slice());
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Per-channel statistics used by one normalization layer in a forward pass.
#[derive(Clone, Debug)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// Biased variance (training) or running variance (evaluation).
    pub var: Vec<f64>,
    /// Values per channel that produced the statistics.
    pub count: usize,
}

#[derive(Clone, Debug)]
struct LayerCache {
    /// Patch matrices of the layer input, one `(cin * 9) x (ho * wo)` block per batch element.
    cols: Vec<f64>,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
    /// Normalized pre-activation `x_hat`; empty for the last layer.
    normalized: Vec<f64>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    mode: Mode,
    batch: usize,
    fingerprint: u64,
    layers: Vec<LayerCache>,
    pub norm_stats: Vec<NormStats>,
    scores: Vec<f64>,
}

impl ForwardCache {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }
}

/// Result of [`regressor_backward`].
#[derive(Clone, Debug)]
pub struct Backward {
    pub params: ParamGrads,
    /// Gradient with respect to the image channel, per batch element.
    pub image_grads: Vec<Grid>,
    /// Gradient with respect to the mask channel, per batch element.
    pub mask_grads: Vec<Grid>,
}

#[inline]
fn out_size(n: usize, stride: usize) -> usize {
    (n - 1) / stride + 1
}

/// Output columns `ox` for which input column `ox * stride + k - 1` is in `[0, n)`.
#[inline]
fn valid_range(k: usize, stride: usize, n: usize, out_n: usize) -> (usize, usize) {
    let lo = usize::from(k == 0);
    let hi = if n + 1 > k { ((n - k) / stride + 1).min(out_n) } else { 0 };
    (lo, hi.max(lo))
}

/// Unfolds one `cin x h x w` input into the `(cin * 9) x (ho * wo)` patch
/// matrix of a padded 3x3 convolution; rows follow the weight layout.
/// Padding entries are skipped, so `col` must arrive zeroed.
fn im2col(input: &[f64], cin: usize, h: usize, w: usize, stride: usize, col: &mut [f64]) {
    let (ho, wo) = (out_size(h, stride), out_size(w, stride));
    let p = ho * wo;
    for ci in 0..cin {
        let in_c = &input[ci * h * w..(ci + 1) * h * w];
        for ky in 0..KERNEL {
            let (oy_lo, oy_hi) = valid_range(ky, stride, h, ho);
            for kx in 0..KERNEL {
                let (ox_lo, ox_hi) = valid_range(kx, stride, w, wo);
                let row = &mut col[((ci * KERNEL + ky) * KERNEL + kx) * p..][..p];
                for oy in oy_lo..oy_hi {
                    let in_row = &in_c[(oy * stride + ky - 1) * w..][..w];
                    let dst = &mut row[oy * wo..(oy + 1) * wo];
                    if stride == 1 {
                        dst[ox_lo..ox_hi].copy_from_slice(&in_row[ox_lo + kx - 1..ox_hi + kx - 1]);
                    } else {
                        for ox in ox_lo..ox_hi {
                            dst[ox] = in_row[ox * stride + kx - 1];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
fn col2im(col: &[f64], cin: usize, h: usize, w: usize, stride: usize, grad_in: &mut [f64]) {
    let (ho, wo) = (out_size(h, stride), out_size(w, stride));
    let p = ho * wo;
    for ci in 0..cin {
        let g_c = &mut grad_in[ci * h * w..(ci + 1) * h * w];
        for ky in 0..KERNEL {
            let (oy_lo, oy_hi) = valid_range(ky, stride, h, ho);
            for kx in 0..KERNEL {
                let (ox_lo, ox_hi) = valid_range(kx, stride, w, wo);
                let row = &col[((ci * KERNEL + ky) * KERNEL + kx) * p..][..p];
                for oy in oy_lo..oy_hi {
                    let g_row = &mut g_c[(oy * stride + ky - 1) * w..][..w];
                    let src = &row[oy * wo..(oy + 1) * wo];
                    for ox in ox_lo..ox_hi {
                        g_row[ox * stride + kx - 1] += src[ox];
                    }
                }
            }
        }
    }
}

/// `c = alpha * a * b + beta * c` for row-major operands given by their strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(m == 0 || k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || n == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!(m * n <= c.len());
    // SAFETY: the assertions above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Convolves one input; leaves its patch matrix in `col` for the backward pass.
fn conv_forward(layer: &ConvLayer, input: &[f64], h: usize, w: usize, col: &mut [f64], output: &mut [f64]) {
    let s = layer.stride;
    let p = out_size(h, s) * out_size(w, s);
    let k = layer.in_channels * KERNEL * KERNEL;
    im2col(input, layer.in_channels, h, w, s, col);
    gemm(layer.out_channels, k, p, &layer.weight, (k, 1), col, (p, 1), 0.0, output);
    for (co, out_c) in output.chunks_exact_mut(p).enumerate() {
        let b = layer.bias[co];
        out_c.iter_mut().for_each(|v| *v += b);
    }
}

/// Accumulates weight/bias gradients and (optionally) the input gradient.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    layer: &ConvLayer,
    col: &[f64],
    h: usize,
    w: usize,
    grad_out: &[f64],
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
    grad_in: Option<(&mut [f64], &mut [f64])>,
) {
    let s = layer.stride;
    let p = out_size(h, s) * out_size(w, s);
    let (cin, cout) = (layer.in_channels, layer.out_channels);
    let k = cin * KERNEL * KERNEL;
    for (co, g_c) in grad_out.chunks_exact(p).enumerate() {
        grad_bias[co] += g_c.iter().sum::<f64>();
    }
    // dW += g col^T
    gemm(cout, p, k, grad_out, (p, 1), col, (1, p), 1.0, grad_weight);
    if let Some((scratch, gi)) = grad_in {
        // dcol = W^T g
        gemm(k, cout, p, &layer.weight, (1, k), grad_out, (p, 1), 0.0, scratch);
        col2im(scratch, cin, h, w, s, gi);
    }
}

/// One regressor input: an image and a (soft) mask of the same shape.
#[derive(Clone, Copy, Debug)]
pub struct Input<'a> {
    pub image: &'a Grid,
    pub mask: &'a Grid,
}

/// Scores a batch of `(image, mask)` pairs. All pairs must share one shape.
pub fn regressor_forward_batch(params: &RegressorParams, batch: &[Input<'_>], mode: Mode) -> Result<(Vec<f64>, ForwardCache)> {
    let first = batch.first().ok_or(Error::Empty("regressor batch"))?;
    let (h, w) = (first.image.height(), first.image.width());
    for inp in batch {
        first.image.check_shape(inp.image)?;
        first.image.check_shape(inp.mask)?;
    }
    params.validate()?;

    let b = batch.len();
    let hw = h * w;
    let mut x = vec![0.0; b * 2 * hw];
    for (n, inp) in batch.iter().enumerate() {
        x[n * 2 * hw..n * 2 * hw + hw].copy_from_slice(inp.image.values());
        x[n * 2 * hw + hw..(n + 1) * 2 * hw].copy_from_slice(inp.mask.values());
    }

    let mut layers = Vec::with_capacity(LAYERS);
    let mut norm_stats = Vec::with_capacity(NORMED);
    let (mut cur_h, mut cur_w) = (h, w);

    for (l, conv) in params.convs.iter().enumerate() {
        let (ho, wo) = (out_size(cur_h, conv.stride), out_size(cur_w, conv.stride));
        let (cin, cout) = (conv.in_channels, conv.out_channels);
        let in_size = cin * cur_h * cur_w;
        let out_sz = cout * ho * wo;
        let col_sz = cin * KERNEL * KERNEL * ho * wo;
        let mut z = vec![0.0; b * out_sz];
        let mut cols = vec![0.0; b * col_sz];
        for n in 0..b {
            conv_forward(
                conv,
                &x[n * in_size..(n + 1) * in_size],
                cur_h,
                cur_w,
                &mut cols[n * col_sz..(n + 1) * col_sz],
                &mut z[n * out_sz..(n + 1) * out_sz],
            );
        }

        let mut cache = LayerCache {
            cols,
            in_h: cur_h,
            in_w: cur_w,
            out_h: ho,
            out_w: wo,
            normalized: Vec::new(),
        };

        if let Some(norm) = params.norms.get(l) {
            let per = ho * wo;
            let count = b * per;
            let (mean, var) = match mode {
                Mode::Train => {
                    let mut mean = vec![0.0; cout];
                    let mut var = vec![0.0; cout];
                    for c in 0..cout {
                        let mut s = 0.0;
                        for n in 0..b {
                            s += z[n * out_sz + c * per..n * out_sz + (c + 1) * per].iter().sum::<f64>();
                        }
                        let m = s / count as f64;
                        let mut v = 0.0;
                        for n in 0..b {
                            v += z[n * out_sz + c * per..n * out_sz + (c + 1) * per]
                                .iter()
                                .map(|&t| (t - m) * (t - m))
                                .sum::<f64>();
                        }
                        mean[c] = m;
                        var[c] = v / count as f64;
                    }
                    (mean, var)
                }
                Mode::Eval => (norm.running_mean.clone(), norm.running_var.clone()),
            };
            // z becomes x_hat in place; the leaky-ReLU input is recomputed in backward
            let mut act = vec![0.0; b * out_sz];
            for n in 0..b {
                for c in 0..cout {
                    let inv_std = 1.0 / (var[c] + NORM_EPS).sqrt();
                    let base = n * out_sz + c * per;
                    for (zi, ai) in z[base..base + per].iter_mut().zip(&mut act[base..base + per]) {
                        let xh = (*zi - mean[c]) * inv_std;
                        *zi = xh;
                        let yi = norm.scale[c] * xh + norm.shift[c];
                        *ai = if yi > 0.0 { yi } else { LEAKY_SLOPE * yi };
                    }
                }
            }
            norm_stats.push(NormStats { mean, var, count });
            cache.normalized = z;
            x = act;
        } else {
            x = z;
        }
        layers.push(cache);
        cur_h = ho;
        cur_w = wo;
    }

    // final map is single-channel: pool and squash
    let per = cur_h * cur_w;
    let scores: Vec<f64> = (0..b)
        .map(|n| logistic(x[n * per..(n + 1) * per].iter().sum::<f64>() / per as f64))
        .collect();

    let cache = ForwardCache {
        mode,
        batch: b,
        fingerprint: params.fingerprint(),
        layers,
        norm_stats,
        scores: scores.clone(),
    };
    Ok((scores, cache))
}

/// Scores a single `(image, mask)` pair.
pub fn regressor_forward(params: &RegressorParams, image: &Grid, mask: &Grid, mode: Mode) -> Result<(f64, ForwardCache)> {
    let (scores, cache) = regressor_forward_batch(params, &[Input { image, mask }], mode)?;
    Ok((scores[0], cache))
}

/// Backpropagates `upstream[n] = dL/dscore[n]` through a cached forward pass.
///
/// In training mode the normalization derivative includes the dependence of
/// the batch mean and variance on every input.
pub fn regressor_backward(params: &RegressorParams, cache: &ForwardCache, upstream: &[f64]) -> Result<Backward> {
    if upstream.len() != cache.batch {
        return Err(Error::StaleCache("upstream length differs from the cached batch"));
    }
    if cache.layers.len() != LAYERS || cache.fingerprint != params.fingerprint() {
        return Err(Error::StaleCache("parameters changed since the forward pass"));
    }
    let b = cache.batch;
    let mut grads = ParamGrads::zeros_like(params);

    // d score / d pooled preactivation, spread evenly over the final map
    let last = &cache.layers[LAYERS - 1];
    let per = last.out_h * last.out_w;
    let mut g = vec![0.0; b * per];
    for n in 0..b {
        let s = cache.scores[n];
        let d = upstream[n] * s * (1.0 - s) / per as f64;
        g[n * per..(n + 1) * per].fill(d);
    }

    for l in (0..LAYERS).rev() {
        let conv = &params.convs[l];
        let lc = &cache.layers[l];
        let (cin, cout) = (conv.in_channels, conv.out_channels);
        let per = lc.out_h * lc.out_w;
        let out_sz = cout * per;

        // g holds dL/d(layer output after activation); turn it into dL/dz
        if let Some(norm) = params.norms.get(l) {
            let stats = &cache.norm_stats[l];
            for n in 0..b {
                for c in 0..cout {
                    let base = n * out_sz + c * per;
                    for (gi, &xh) in g[base..base + per].iter_mut().zip(&lc.normalized[base..base + per]) {
                        if norm.scale[c] * xh + norm.shift[c] <= 0.0 {
                            *gi *= LEAKY_SLOPE;
                        }
                    }
                }
            }
            // g is now dL/dy
            let count = stats.count as f64;
            for c in 0..cout {
                let inv_std = 1.0 / (stats.var[c] + NORM_EPS).sqrt();
                let (mut sum_g, mut sum_gx) = (0.0, 0.0);
                for n in 0..b {
                    let base = n * out_sz + c * per;
                    for i in base..base + per {
                        sum_g += g[i];
                        sum_gx += g[i] * lc.normalized[i];
                    }
                }
                grads.norm_shift[l][c] += sum_g;
                grads.norm_scale[l][c] += sum_gx;
                let gamma = norm.scale[c];
                for n in 0..b {
                    let base = n * out_sz + c * per;
                    for i in base..base + per {
                        g[i] = match cache.mode {
                            Mode::Train => {
                                gamma * inv_std * (g[i] - sum_g / count - lc.normalized[i] * sum_gx / count)
                            }
                            Mode::Eval => gamma * inv_std * g[i],
                        };
                    }
                }
            }
        }

        let in_size = cin * lc.in_h * lc.in_w;
        let col_sz = cin * KERNEL * KERNEL * per;
        let mut g_in = vec![0.0; b * in_size];
        let mut scratch = vec![0.0; col_sz];
        for n in 0..b {
            conv_backward(
                conv,
                &lc.cols[n * col_sz..(n + 1) * col_sz],
                lc.in_h,
                lc.in_w,
                &g[n * out_sz..(n + 1) * out_sz],
                &mut grads.conv_weight[l],
                &mut grads.conv_bias[l],
                Some((&mut scratch, &mut g_in[n * in_size..(n + 1) * in_size])),
            );
        }
        g = g_in;
    }

    let first = &cache.layers[0];
    let (h, w) = (first.in_h, first.in_w);
    let hw = h * w;
    let mut image_grads = Vec::with_capacity(b);
    let mut mask_grads = Vec::with_capacity(b);
    for n in 0..b {
        image_grads.push(Grid::new(w, h, g[n * 2 * hw..n * 2 * hw + hw].to_vec())?);
        mask_grads.push(Grid::new(w, h, g[n * 2 * hw + hw..(n + 1) * 2 * hw].to_vec())?);
    }
    Ok(Backward {
        params: grads,
        image_grads,
        mask_grads,
    })
}
