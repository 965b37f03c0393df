//! Paired geometric transforms: one affine resampling pass (flip, crop,
//! scale, resize to the 384x1280 target) applied identically to the RGB
//! image and the prior plane so they stay pixel-aligned.
//!
//! Flip, crop and resize are composed into a single destination-to-source
//! mapping and sampled once bilinearly, so no interpolation blur compounds
//! and the two inputs see literally the same map. Out-of-bounds samples
//! read as zero.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use thiserror::Error;

use crate::kitti::Label3D;
use crate::tensor::Tensor;

/// Fixed network input resolution (height, width).
pub const TARGET_HEIGHT: usize = 384;
pub const TARGET_WIDTH: usize = 1280;

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Parameters of one paired transform.
///
/// The crop center is stored as fractions of the source dimensions rather
/// than pixels: the spec is sampled before the image size is known, and
/// `(0.5, 0.5)` then means "image center" for any input. The crop region
/// spans `crop_scale` times the source size around that center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformSpec {
    pub hflip: bool,
    /// (cx, cy) as fractions of (width, height).
    pub crop_center: (f64, f64),
    /// Region size relative to the source, in [0.5, 2.0].
    pub crop_scale: f64,
    /// Output resolution (height, width); fixed at 384x1280.
    pub target: (usize, usize),
    pub seed: u64,
}

impl TransformSpec {
    pub fn identity(seed: u64) -> Self {
        Self {
            hflip: false,
            crop_center: (0.5, 0.5),
            crop_scale: 1.0,
            target: (TARGET_HEIGHT, TARGET_WIDTH),
            seed,
        }
    }
}

/// Sampling ranges for the augmented case. The crop bounds are documented
/// placeholders; only the [0.5, 2.0] scale envelope is pinned.
const CENTER_RANGE: (f64, f64) = (0.35, 0.65);

/// Draw a transform deterministically from `seed`. With `augment` off the
/// result is the identity configuration (no flip, centered, scale 1).
pub fn sample_transform(seed: u64, augment: bool) -> TransformSpec {
    if !augment {
        return TransformSpec::identity(seed);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hflip = rng.random_bool(0.5);
    let cx = rng.random_range(CENTER_RANGE.0..CENTER_RANGE.1);
    let cy = rng.random_range(CENTER_RANGE.0..CENTER_RANGE.1);
    // log-uniform over [0.5, 2.0]: zoom-in and zoom-out symmetric
    let crop_scale = 2f64.powf(rng.random_range(-1.0..1.0));
    TransformSpec {
        hflip,
        crop_center: (cx, cy),
        crop_scale,
        target: (TARGET_HEIGHT, TARGET_WIDTH),
        seed,
    }
}

/// One destination column/row mapped to up to two source pixels; taps
/// outside the source read as zero.
#[derive(Clone, Copy)]
struct BorderTap {
    lo: Option<usize>,
    hi: Option<usize>,
    frac: f64,
}

fn border_taps(dst_len: usize, src_len: usize, center_frac: f64, scale: f64, flip: bool) -> Vec<BorderTap> {
    let src = src_len as f64;
    let region = src * scale;
    let left = center_frac * src - region / 2.0;
    let step = region / dst_len as f64;
    (0..dst_len)
        .map(|d| {
            // continuous source coordinate, then to pixel-index coords
            let mut s = left + (d as f64 + 0.5) * step - 0.5;
            if flip {
                s = (src - 1.0) - s;
            }
            let lo_i = s.floor();
            let frac = s - lo_i;
            let inside = |i: f64| -> Option<usize> { (i >= 0.0 && i <= src - 1.0).then_some(i as usize) };
            BorderTap { lo: inside(lo_i), hi: inside(lo_i + 1.0), frac }
        })
        .collect()
}

fn resample_plane(src: &Tensor, b: usize, c: usize, taps_y: &[BorderTap], taps_x: &[BorderTap], out: &mut Vec<f64>) {
    for ty in taps_y {
        for tx in taps_x {
            let fetch = |y: Option<usize>, x: Option<usize>| -> f64 {
                match (y, x) {
                    (Some(y), Some(x)) => src.at(b, c, y, x),
                    _ => 0.0,
                }
            };
            let v00 = fetch(ty.lo, tx.lo);
            let v01 = fetch(ty.lo, tx.hi);
            let v10 = fetch(ty.hi, tx.lo);
            let v11 = fetch(ty.hi, tx.hi);
            let top = v00 + tx.frac * (v01 - v00);
            let bot = v10 + tx.frac * (v11 - v10);
            out.push(top + ty.frac * (bot - top));
        }
    }
}

/// Apply the same affine map to a 1x3xHxW image and its 1x1xHxW prior.
/// Both outputs have the spec's target size.
pub fn apply(image: &Tensor, prior: &Tensor, spec: &TransformSpec) -> Result<(Tensor, Tensor), TransformError> {
    if image.batch() != 1 || image.channels() != 3 {
        return Err(TransformError::ShapeMismatch(format!(
            "image must be 1x3xHxW, got {:?}",
            image.shape()
        )));
    }
    if prior.batch() != 1 || prior.channels() != 1 {
        return Err(TransformError::ShapeMismatch(format!(
            "prior must be 1x1xHxW, got {:?}",
            prior.shape()
        )));
    }
    if image.height() != prior.height() || image.width() != prior.width() {
        return Err(TransformError::ShapeMismatch(format!(
            "image {:?} and prior {:?} must share spatial dimensions",
            image.shape(),
            prior.shape()
        )));
    }
    let (out_h, out_w) = spec.target;
    let taps_y = border_taps(out_h, image.height(), spec.crop_center.1, spec.crop_scale, false);
    let taps_x = border_taps(out_w, image.width(), spec.crop_center.0, spec.crop_scale, spec.hflip);

    let mut image_data = Vec::with_capacity(3 * out_h * out_w);
    for c in 0..3 {
        resample_plane(image, 0, c, &taps_y, &taps_x, &mut image_data);
    }
    let mut prior_data = Vec::with_capacity(out_h * out_w);
    resample_plane(prior, 0, 0, &taps_y, &taps_x, &mut prior_data);

    Ok((
        Tensor::new([1, 3, out_h, out_w], image_data).expect("resampling preserves finiteness"),
        Tensor::new([1, 1, out_h, out_w], prior_data).expect("resampling preserves finiteness"),
    ))
}

/// Mirror a label for a horizontally flipped image: the 2D box reflects and
/// the viewing angles negate. Sentinel angles of DontCare records are kept.
pub fn flip_label_horizontal(label: &Label3D, image_width: f64) -> Label3D {
    let mut out = label.clone();
    let [l, t, r, b] = label.bbox2d;
    out.bbox2d = [image_width - r, t, image_width - l, b];
    if !label.is_dont_care() {
        out.alpha = -label.alpha;
        out.rotation_y = -label.rotation_y;
    }
    out
}
