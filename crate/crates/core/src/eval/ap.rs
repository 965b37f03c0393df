//! Average precision at 40 recall points and the per-image AP variance.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ApError {
    #[error("AP is undefined without ground truth")]
    EmptyGt,
    #[error("variance needs at least two images with ground truth")]
    InsufficientData,
}

/// One detection outcome inside a score-ordered ranking. `frame_ord` and
/// `index` break score ties deterministically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedFlag {
    pub score: f64,
    pub frame_ord: usize,
    pub index: usize,
    pub tp: bool,
}

/// Sort by descending score; ties resolve by (frame, record index).
pub fn sort_ranking(flags: &mut [RankedFlag]) {
    flags.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("scores are finite")
            .then(a.frame_ord.cmp(&b.frame_ord))
            .then(a.index.cmp(&b.index))
    });
}

/// Interpolated precision/recall curve sampled at `k / 40`, `k = 1..=40`.
pub type PrCurve = Vec<(f64, f64)>;

/// AP|R40 of a score-ordered ranking pooled over all images.
///
/// Cumulative precision/recall along the ranking; the interpolated
/// precision at recall `r` is the maximum precision at any point with
/// recall >= r; AP is 100 times the mean over the 40 recall points (recall
/// 0 is excluded).
pub fn ap_r40(flags: &[RankedFlag], num_gt: usize) -> Result<(f64, PrCurve), ApError> {
    if num_gt == 0 {
        return Err(ApError::EmptyGt);
    }
    debug_assert!(
        flags.windows(2).all(|p| p[0].score >= p[1].score),
        "ranking must be sorted by descending score"
    );
    // cumulative (recall, precision) points along the ranking
    let mut points = Vec::with_capacity(flags.len());
    let mut tp = 0usize;
    for (i, flag) in flags.iter().enumerate() {
        tp += flag.tp as usize;
        points.push((tp as f64 / num_gt as f64, tp as f64 / (i + 1) as f64));
    }
    // best precision from each point onward (recall is non-decreasing)
    let mut envelope = vec![0.0; points.len()];
    let mut best = 0.0f64;
    for (i, &(_, precision)) in points.iter().enumerate().rev() {
        best = best.max(precision);
        envelope[i] = best;
    }
    let mut curve = Vec::with_capacity(40);
    let mut total = 0.0;
    for k in 1..=40 {
        let r = k as f64 / 40.0;
        // first ranking point reaching recall r
        let found = points.partition_point(|&(recall, _)| recall < r);
        let p = if found < points.len() { envelope[found] } else { 0.0 };
        curve.push((r, p));
        total += p;
    }
    Ok((100.0 * total / 40.0, curve))
}

/// Sample variance (n−1 denominator) of per-image AP values. The caller
/// excludes images without ground truth before calling.
pub fn prediction_variance(per_image_aps: &[f64]) -> Result<f64, ApError> {
    if per_image_aps.len() < 2 {
        return Err(ApError::InsufficientData);
    }
    let n = per_image_aps.len() as f64;
    let mean = per_image_aps.iter().sum::<f64>() / n;
    let ss = per_image_aps.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>();
    Ok(ss / (n - 1.0))
}
