//! Numeric kernels: bilinear resampling, per-channel standardization,
//! element-wise multiply (with single-channel broadcast), channel
//! concatenation and 1x1 convolution.
//!
//! Each kernel has a plain forward function plus a recorded-op struct whose
//! `backward` returns analytic gradients for the inputs seen by the last
//! `forward` call. Calling `backward` first is a `TensorError::State`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Tensor, TensorError};

// ---------------------------------------------------------------------------
// bilinear resampling

#[derive(Clone, Copy)]
struct AxisTap {
    lo: usize,
    hi: usize,
    frac: f64,
}

/// Half-pixel-center sampling positions, edge-clamped.
fn axis_taps(out_len: usize, in_len: usize) -> Vec<AxisTap> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(in_len - 1);
            AxisTap { lo, hi, frac: s - lo as f64 }
        })
        .collect()
}

/// Resample to `out_h` x `out_w` with bilinear interpolation in the
/// half-pixel-center convention (`src = (dst + 0.5) * scale - 0.5`),
/// edge-clamped. The lerp form `a + f * (b - a)` keeps constant inputs and
/// same-size resampling exact. Works in both directions; downsampling uses
/// the same taps.
pub fn bilinear_upsample(t: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    assert!(out_h >= 1 && out_w >= 1, "output size must be at least 1x1");
    let [batch, channels, in_h, in_w] = t.shape();
    let taps_y = axis_taps(out_h, in_h);
    let taps_x = axis_taps(out_w, in_w);
    let mut data = Vec::with_capacity(batch * channels * out_h * out_w);
    for b in 0..batch {
        for c in 0..channels {
            for ty in &taps_y {
                for tx in &taps_x {
                    let v00 = t.at(b, c, ty.lo, tx.lo);
                    let v01 = t.at(b, c, ty.lo, tx.hi);
                    let v10 = t.at(b, c, ty.hi, tx.lo);
                    let v11 = t.at(b, c, ty.hi, tx.hi);
                    let top = v00 + tx.frac * (v01 - v00);
                    let bot = v10 + tx.frac * (v11 - v10);
                    data.push(top + ty.frac * (bot - top));
                }
            }
        }
    }
    Tensor::from_parts([batch, channels, out_h, out_w], data)
}

pub struct BilinearUpsampleOp {
    out_h: usize,
    out_w: usize,
    saved_shape: Option<[usize; 4]>,
}

impl BilinearUpsampleOp {
    pub fn new(out_h: usize, out_w: usize) -> Self {
        Self { out_h, out_w, saved_shape: None }
    }

    pub fn forward(&mut self, t: &Tensor) -> Tensor {
        self.saved_shape = Some(t.shape());
        bilinear_upsample(t, self.out_h, self.out_w)
    }

    /// Scatter the upstream gradient back through the sampling weights.
    pub fn backward(&self, upstream: &Tensor) -> Result<Tensor, TensorError> {
        let in_shape = self.saved_shape.ok_or(TensorError::State)?;
        let [batch, channels, in_h, in_w] = in_shape;
        if upstream.shape() != [batch, channels, self.out_h, self.out_w] {
            return Err(TensorError::ShapeMismatch(format!(
                "upstream shape {:?} does not match forward output {:?}",
                upstream.shape(),
                [batch, channels, self.out_h, self.out_w]
            )));
        }
        let taps_y = axis_taps(self.out_h, in_h);
        let taps_x = axis_taps(self.out_w, in_w);
        let mut grad = Tensor::zeros(in_shape);
        for b in 0..batch {
            for c in 0..channels {
                for (oy, ty) in taps_y.iter().enumerate() {
                    for (ox, tx) in taps_x.iter().enumerate() {
                        let up = upstream.at(b, c, oy, ox);
                        let (fy, fx) = (ty.frac, tx.frac);
                        let i00 = grad.index(b, c, ty.lo, tx.lo);
                        let i01 = grad.index(b, c, ty.lo, tx.hi);
                        let i10 = grad.index(b, c, ty.hi, tx.lo);
                        let i11 = grad.index(b, c, ty.hi, tx.hi);
                        let g = grad.data_mut();
                        g[i00] += up * (1.0 - fy) * (1.0 - fx);
                        g[i01] += up * (1.0 - fy) * fx;
                        g[i10] += up * fy * (1.0 - fx);
                        g[i11] += up * fy * fx;
                    }
                }
            }
        }
        Ok(grad)
    }
}

// ---------------------------------------------------------------------------
// standardization

/// Zero-mean, unit-variance normalization per (batch, channel) over the
/// spatial extent, population variance.
///
/// The denominator is `sqrt(max(var * (1 + eps), eps))`: the relative guard
/// keeps positive rescaling of the input exact (the scale factor cancels),
/// the absolute floor sends constant channels to zero instead of dividing
/// by zero.
pub fn standardize(t: &Tensor, eps: f64) -> Tensor {
    StandardizeOp::new(eps).forward(t)
}

struct StandardizeSaved {
    output: Tensor,
    /// Per (batch, channel): reciprocal denominator and whether the
    /// variance-proportional branch was taken.
    inv_denom: Vec<f64>,
    relative: Vec<bool>,
}

pub struct StandardizeOp {
    eps: f64,
    saved: Option<StandardizeSaved>,
}

impl StandardizeOp {
    pub fn new(eps: f64) -> Self {
        assert!(eps > 0.0, "eps must be positive");
        Self { eps, saved: None }
    }

    pub fn forward(&mut self, t: &Tensor) -> Tensor {
        let [batch, channels, h, w] = t.shape();
        let n = h * w;
        let mut data = vec![0.0; t.len()];
        let mut inv_denom = Vec::with_capacity(batch * channels);
        let mut relative = Vec::with_capacity(batch * channels);
        for bc in 0..batch * channels {
            let offset = bc * n;
            let x = &t.data()[offset..offset + n];
            let mean = x.iter().sum::<f64>() / n as f64;
            let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let scaled = var * (1.0 + self.eps);
            let (denom_sq, rel) = if scaled > self.eps { (scaled, true) } else { (self.eps, false) };
            let inv = 1.0 / denom_sq.sqrt();
            for (out, &v) in data[offset..offset + n].iter_mut().zip(x) {
                *out = (v - mean) * inv;
            }
            inv_denom.push(inv);
            relative.push(rel);
        }
        let output = Tensor::from_parts(t.shape(), data);
        self.saved = Some(StandardizeSaved { output: output.clone(), inv_denom, relative });
        output
    }

    pub fn backward(&self, upstream: &Tensor) -> Result<Tensor, TensorError> {
        let saved = self.saved.as_ref().ok_or(TensorError::State)?;
        let y = &saved.output;
        if upstream.shape() != y.shape() {
            return Err(TensorError::ShapeMismatch(format!(
                "upstream shape {:?} does not match forward output {:?}",
                upstream.shape(),
                y.shape()
            )));
        }
        let [batch, channels, h, w] = y.shape();
        let n = h * w;
        let mut data = vec![0.0; y.len()];
        for bc in 0..batch * channels {
            let offset = bc * n;
            let g = &upstream.data()[offset..offset + n];
            let ys = &y.data()[offset..offset + n];
            let inv = saved.inv_denom[bc];
            let mean_g = g.iter().sum::<f64>() / n as f64;
            if saved.relative[bc] {
                let mean_gy = g.iter().zip(ys).map(|(&gi, &yi)| gi * yi).sum::<f64>() / n as f64;
                let k = (1.0 + self.eps) * mean_gy;
                for ((out, &gi), &yi) in data[offset..offset + n].iter_mut().zip(g).zip(ys) {
                    *out = inv * (gi - mean_g - yi * k);
                }
            } else {
                for (out, &gi) in data[offset..offset + n].iter_mut().zip(g) {
                    *out = inv * (gi - mean_g);
                }
            }
        }
        Ok(Tensor::from_parts(y.shape(), data))
    }
}

// ---------------------------------------------------------------------------
// element-wise multiply with single-channel broadcast

fn mul_broadcast_check(a: &Tensor, b: &Tensor) -> Result<bool, TensorError> {
    let broadcast = b.channels() == 1 && a.channels() != 1;
    let compatible = a.batch() == b.batch()
        && a.height() == b.height()
        && a.width() == b.width()
        && (a.channels() == b.channels() || broadcast);
    if !compatible {
        return Err(TensorError::ShapeMismatch(format!(
            "cannot multiply {:?} with {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(broadcast)
}

/// `out[b,c,h,w] = a[b,c,h,w] * b[b,c,h,w]`; `b` may have one channel,
/// which broadcasts across `a`'s channels.
pub fn eltwise_mul(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    let broadcast = mul_broadcast_check(a, b)?;
    let mut data = Vec::with_capacity(a.len());
    for bi in 0..a.batch() {
        for c in 0..a.channels() {
            let bc = if broadcast { 0 } else { c };
            for h in 0..a.height() {
                for w in 0..a.width() {
                    data.push(a.at(bi, c, h, w) * b.at(bi, bc, h, w));
                }
            }
        }
    }
    Ok(Tensor::from_parts(a.shape(), data))
}

pub struct EltwiseMulOp {
    saved: Option<(Tensor, Tensor)>,
}

impl EltwiseMulOp {
    pub fn new() -> Self {
        Self { saved: None }
    }

    pub fn forward(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        let out = eltwise_mul(a, b)?;
        self.saved = Some((a.clone(), b.clone()));
        Ok(out)
    }

    /// Product rule: `da = up * b`, `db = up * a` (summed over the broadcast
    /// channels when `b` has one channel).
    pub fn backward(&self, upstream: &Tensor) -> Result<(Tensor, Tensor), TensorError> {
        let (a, b) = self.saved.as_ref().ok_or(TensorError::State)?;
        if upstream.shape() != a.shape() {
            return Err(TensorError::ShapeMismatch(format!(
                "upstream shape {:?} does not match forward output {:?}",
                upstream.shape(),
                a.shape()
            )));
        }
        let broadcast = mul_broadcast_check(a, b)?;
        let mut grad_a = Tensor::zeros(a.shape());
        let mut grad_b = Tensor::zeros(b.shape());
        for bi in 0..a.batch() {
            for c in 0..a.channels() {
                let bc = if broadcast { 0 } else { c };
                for h in 0..a.height() {
                    for w in 0..a.width() {
                        let up = upstream.at(bi, c, h, w);
                        let ia = grad_a.index(bi, c, h, w);
                        grad_a.data_mut()[ia] += up * b.at(bi, bc, h, w);
                        let ib = grad_b.index(bi, bc, h, w);
                        grad_b.data_mut()[ib] += up * a.at(bi, c, h, w);
                    }
                }
            }
        }
        Ok((grad_a, grad_b))
    }
}

impl Default for EltwiseMulOp {
    fn default() -> Self {
        Self::new()
    }
}

// ---------------------------------------------------------------------------
// channel concatenation

/// Stack `b`'s channels after `a`'s; batch and spatial sizes must agree.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    if a.batch() != b.batch() || a.height() != b.height() || a.width() != b.width() {
        return Err(TensorError::ShapeMismatch(format!(
            "cannot concatenate {:?} with {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let shape = [a.batch(), a.channels() + b.channels(), a.height(), a.width()];
    let plane = a.height() * a.width();
    let mut data = Vec::with_capacity(shape.iter().product());
    for bi in 0..a.batch() {
        let a_start = bi * a.channels() * plane;
        data.extend_from_slice(&a.data()[a_start..a_start + a.channels() * plane]);
        let b_start = bi * b.channels() * plane;
        data.extend_from_slice(&b.data()[b_start..b_start + b.channels() * plane]);
    }
    Ok(Tensor::from_parts(shape, data))
}

/// Take channels `[start, start + count)`.
pub fn slice_channels(t: &Tensor, start: usize, count: usize) -> Tensor {
    assert!(start + count <= t.channels(), "channel slice out of range");
    let plane = t.height() * t.width();
    let mut data = Vec::with_capacity(t.batch() * count * plane);
    for b in 0..t.batch() {
        let from = (b * t.channels() + start) * plane;
        data.extend_from_slice(&t.data()[from..from + count * plane]);
    }
    Tensor::from_parts([t.batch(), count, t.height(), t.width()], data)
}

pub struct ConcatChannelsOp {
    saved: Option<([usize; 4], [usize; 4])>,
}

impl ConcatChannelsOp {
    pub fn new() -> Self {
        Self { saved: None }
    }

    pub fn forward(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        let out = concat_channels(a, b)?;
        self.saved = Some((a.shape(), b.shape()));
        Ok(out)
    }

    pub fn backward(&self, upstream: &Tensor) -> Result<(Tensor, Tensor), TensorError> {
        let (shape_a, shape_b) = self.saved.ok_or(TensorError::State)?;
        let expected = [shape_a[0], shape_a[1] + shape_b[1], shape_a[2], shape_a[3]];
        if upstream.shape() != expected {
            return Err(TensorError::ShapeMismatch(format!(
                "upstream shape {:?} does not match forward output {:?}",
                upstream.shape(),
                expected
            )));
        }
        let grad_a = slice_channels(upstream, 0, shape_a[1]);
        let grad_b = slice_channels(upstream, shape_a[1], shape_b[1]);
        Ok((grad_a, grad_b))
    }
}

impl Default for ConcatChannelsOp {
    fn default() -> Self {
        Self::new()
    }
}

// ---------------------------------------------------------------------------
// 1x1 convolution (channel projection)

/// Weights of a 1x1 convolution: a dense `out_channels x in_channels`
/// matrix applied at every spatial position, plus a per-output bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1x1Params {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Row-major `[out][in]`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv1x1Params {
    pub fn new(in_channels: usize, out_channels: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self, TensorError> {
        if weight.len() != in_channels * out_channels || bias.len() != out_channels {
            return Err(TensorError::ShapeMismatch(format!(
                "conv1x1 {in_channels}->{out_channels} needs {} weights and {out_channels} biases, got {} and {}",
                in_channels * out_channels,
                weight.len(),
                bias.len()
            )));
        }
        if !weight.iter().chain(bias.iter()).all(|v| v.is_finite()) {
            return Err(TensorError::NonFinite);
        }
        Ok(Self { in_channels, out_channels, weight, bias })
    }

    /// Identity projection (square, unit diagonal, zero bias).
    pub fn identity(channels: usize) -> Self {
        let mut weight = vec![0.0; channels * channels];
        for c in 0..channels {
            weight[c * channels + c] = 1.0;
        }
        Self { in_channels: channels, out_channels: channels, weight, bias: vec![0.0; channels] }
    }

    /// Deterministic pseudo-random weights, uniform in ±1/sqrt(in_channels),
    /// zero bias.
    pub fn seeded(in_channels: usize, out_channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let limit = 1.0 / (in_channels as f64).sqrt();
        let weight = (0..in_channels * out_channels)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Self { in_channels, out_channels, weight, bias: vec![0.0; out_channels] }
    }

    #[inline]
    pub fn weight_at(&self, out: usize, input: usize) -> f64 {
        self.weight[out * self.in_channels + input]
    }
}

/// `out[b,o,h,w] = bias[o] + sum_i weight[o,i] * t[b,i,h,w]`.
pub fn conv1x1(t: &Tensor, p: &Conv1x1Params) -> Result<Tensor, TensorError> {
    if t.channels() != p.in_channels {
        return Err(TensorError::ShapeMismatch(format!(
            "conv1x1 expects {} input channels, tensor has {}",
            p.in_channels,
            t.channels()
        )));
    }
    let [batch, _, h, w] = t.shape();
    let plane = h * w;
    let mut data = vec![0.0; batch * p.out_channels * plane];
    for b in 0..batch {
        for o in 0..p.out_channels {
            let out_start = (b * p.out_channels + o) * plane;
            data[out_start..out_start + plane].fill(p.bias[o]);
            for i in 0..p.in_channels {
                let wv = p.weight_at(o, i);
                let in_start = (b * p.in_channels + i) * plane;
                for k in 0..plane {
                    data[out_start + k] += wv * t.data()[in_start + k];
                }
            }
        }
    }
    Ok(Tensor::from_parts([batch, p.out_channels, h, w], data))
}

/// Gradients for a [`Conv1x1Op`] backward pass.
pub struct Conv1x1Grads {
    pub input: Tensor,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

pub struct Conv1x1Op {
    pub params: Conv1x1Params,
    saved: Option<Tensor>,
}

impl Conv1x1Op {
    pub fn new(params: Conv1x1Params) -> Self {
        Self { params, saved: None }
    }

    pub fn forward(&mut self, t: &Tensor) -> Result<Tensor, TensorError> {
        let out = conv1x1(t, &self.params)?;
        self.saved = Some(t.clone());
        Ok(out)
    }

    pub fn backward(&self, upstream: &Tensor) -> Result<Conv1x1Grads, TensorError> {
        let x = self.saved.as_ref().ok_or(TensorError::State)?;
        let p = &self.params;
        let [batch, _, h, w] = x.shape();
        if upstream.shape() != [batch, p.out_channels, h, w] {
            return Err(TensorError::ShapeMismatch(format!(
                "upstream shape {:?} does not match forward output {:?}",
                upstream.shape(),
                [batch, p.out_channels, h, w]
            )));
        }
        let plane = h * w;
        let mut input = vec![0.0; x.len()];
        let mut weight = vec![0.0; p.weight.len()];
        let mut bias = vec![0.0; p.out_channels];
        for b in 0..batch {
            for o in 0..p.out_channels {
                let up_start = (b * p.out_channels + o) * plane;
                let up = &upstream.data()[up_start..up_start + plane];
                bias[o] += up.iter().sum::<f64>();
                for i in 0..p.in_channels {
                    let in_start = (b * p.in_channels + i) * plane;
                    let xin = &x.data()[in_start..in_start + plane];
                    let wv = p.weight_at(o, i);
                    let mut wgrad = 0.0;
                    for k in 0..plane {
                        input[in_start + k] += wv * up[k];
                        wgrad += up[k] * xin[k];
                    }
                    weight[o * p.in_channels + i] += wgrad;
                }
            }
        }
        Ok(Conv1x1Grads {
            input: Tensor::from_parts(x.shape(), input),
            weight,
            bias,
        })
    }
}
