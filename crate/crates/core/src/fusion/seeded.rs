//! Deterministic toy feature providers: a seeded pyramid backbone and a
//! seeded aggregator. They stand in for the real networks so the fusion
//! mechanism can be exercised and gradient-checked without weights.

use crate::seeds;
use crate::tensor::ops::{bilinear_upsample, conv1x1, Conv1x1Params};
use crate::tensor::Tensor;

use super::FusionError;

/// Per-node hook applied to an aggregation node's input before projection.
pub type TapHook<'a> = &'a mut dyn FnMut(&Tensor, usize) -> Result<Tensor, FusionError>;

/// Strides of the pyramid levels relative to the input.
pub const PYRAMID_STRIDES: [usize; 4] = [4, 8, 16, 32];

/// Toy channel widths per level.
pub const DEFAULT_PYRAMID_WIDTHS: [usize; 4] = [16, 32, 64, 128];

/// Channel width of the aggregated feature map.
pub const AGGREGATE_CHANNELS: usize = 64;

/// Multi-scale features at strides 4, 8, 16 and 32.
#[derive(Debug, Clone)]
pub struct FeaturePyramid {
    pub levels: Vec<Tensor>,
}

/// 2x2 average pooling; both spatial dimensions must be even.
fn avg_pool2(t: &Tensor) -> Tensor {
    let [b, c, h, w] = t.shape();
    debug_assert!(h % 2 == 0 && w % 2 == 0, "pooling needs even dimensions");
    Tensor::from_fn([b, c, h / 2, w / 2], |bi, ci, y, x| {
        0.25 * (t.at(bi, ci, 2 * y, 2 * x)
            + t.at(bi, ci, 2 * y, 2 * x + 1)
            + t.at(bi, ci, 2 * y + 1, 2 * x)
            + t.at(bi, ci, 2 * y + 1, 2 * x + 1))
    })
}

fn add(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.shape(), b.shape());
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Tensor::new(a.shape(), data).expect("finite sum")
}

/// Build the feature pyramid with the default channel widths.
pub fn toy_backbone(image: &Tensor, seed: u64) -> Result<FeaturePyramid, FusionError> {
    toy_backbone_with_widths(image, seed, DEFAULT_PYRAMID_WIDTHS)
}

/// Build the feature pyramid: repeated 2x2 average pooling of the image,
/// with a seeded zero-bias 1x1 conv per level. Same seed, same output,
/// bit for bit.
pub fn toy_backbone_with_widths(
    image: &Tensor,
    seed: u64,
    widths: [usize; 4],
) -> Result<FeaturePyramid, FusionError> {
    let [b, c, h, w] = image.shape();
    if b != 1 || c != 3 {
        return Err(FusionError::Shape(format!("backbone expects a 1x3xHxW image, got {:?}", image.shape())));
    }
    if h % 32 != 0 || w % 32 != 0 || h == 0 || w == 0 {
        return Err(FusionError::Shape(format!("image dimensions {h}x{w} must be divisible by 32")));
    }
    let mut pooled = avg_pool2(&avg_pool2(image)); // stride 4
    let mut levels = Vec::with_capacity(widths.len());
    for (i, &width) in widths.iter().enumerate() {
        if i > 0 {
            pooled = avg_pool2(&pooled);
        }
        let params = Conv1x1Params::seeded(3, width, seeds::derive(seed, i as u64));
        levels.push(conv1x1(&pooled, &params)?);
    }
    Ok(FeaturePyramid { levels })
}

/// Collapse the pyramid to one stride-4 tensor: per node, project to
/// [`AGGREGATE_CHANNELS`] with a seeded zero-bias 1x1 conv, resample to the
/// finest level and sum.
///
/// A tap hook, when supplied, transforms each node's input (at its native
/// scale) before projection; an identity hook leaves the result unchanged.
pub fn toy_aggregate(
    pyramid: &FeaturePyramid,
    seed: u64,
    mut tap: Option<TapHook<'_>>,
) -> Result<Tensor, FusionError> {
    let first = pyramid
        .levels
        .first()
        .ok_or_else(|| FusionError::Shape("pyramid has no levels".into()))?;
    let (out_h, out_w) = (first.height(), first.width());
    let mut acc = Tensor::zeros([1, AGGREGATE_CHANNELS, out_h, out_w]);
    for (i, level) in pyramid.levels.iter().enumerate() {
        let node_input = match tap.as_mut() {
            Some(hook) => hook(level, i)?,
            None => level.clone(),
        };
        let params = Conv1x1Params::seeded(
            node_input.channels(),
            AGGREGATE_CHANNELS,
            seeds::derive(seed, 0x100 + i as u64),
        );
        let projected = conv1x1(&node_input, &params)?;
        let lifted = bilinear_upsample(&projected, out_h, out_w);
        acc = add(&acc, &lifted);
    }
    Ok(acc)
}
