//! The segmentation-prior fusion module and its injection points.
//!
//! Visual features come from a deterministic toy provider (seeded 1x1 convs
//! over 2x2 average-pooled copies of the image, standing in for a real
//! backbone) and a toy aggregator that lifts every pyramid level to stride 4
//! and sums. The fusion step itself is the real mechanism under test:
//!
//! 1. resample the prior plane to the feature resolution,
//! 2. standardize both operands per channel,
//! 3. combine — element-wise multiply, channel concat, or a logistic gate
//!    on the standardized prior,
//! 4. project to a 64-channel space with a 1x1 convolution.
//!
//! The prior can be injected after aggregation, at every aggregation node,
//! or only on the 3D-head branch; [`run_pipeline`] wires the routing and
//! instruments fuse-call counts, per-stage wall time and tensor memory.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::prior::{map_to_tensor, GrayPriorMap};
use crate::seeds;
use crate::tensor::ops::{
    bilinear_upsample, concat_channels, conv1x1, eltwise_mul, standardize, BilinearUpsampleOp,
    ConcatChannelsOp, Conv1x1Op, Conv1x1Params, EltwiseMulOp, StandardizeOp,
};
use crate::tensor::{Tensor, TensorError};

pub use crate::tensor::ops::Conv1x1Params as ProjectionParams;

mod seeded;

pub use seeded::{toy_aggregate, toy_backbone, toy_backbone_with_widths, FeaturePyramid, TapHook,
    AGGREGATE_CHANNELS, DEFAULT_PYRAMID_WIDTHS, PYRAMID_STRIDES};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("bad fusion config: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// How the standardized prior is combined with the standardized features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionStrategy {
    Multiply,
    Concat,
    Attention,
}

impl FusionStrategy {
    pub const ALL: [FusionStrategy; 3] =
        [FusionStrategy::Multiply, FusionStrategy::Concat, FusionStrategy::Attention];

    pub fn as_str(&self) -> &'static str {
        match self {
            FusionStrategy::Multiply => "multiply",
            FusionStrategy::Concat => "concat",
            FusionStrategy::Attention => "attention",
        }
    }
}

impl FromStr for FusionStrategy {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self, FusionError> {
        Self::ALL
            .iter()
            .copied()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| FusionError::Config(format!("unknown strategy `{s}`")))
    }
}

impl fmt::Display for FusionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where in the pipeline the prior is injected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionPoint {
    AfterDla,
    DuringDla,
    HeadsOnly,
}

impl FusionPoint {
    pub const ALL: [FusionPoint; 3] = [FusionPoint::AfterDla, FusionPoint::DuringDla, FusionPoint::HeadsOnly];

    pub fn as_str(&self) -> &'static str {
        match self {
            FusionPoint::AfterDla => "after_dla",
            FusionPoint::DuringDla => "during_dla",
            FusionPoint::HeadsOnly => "heads_only",
        }
    }
}

impl FromStr for FusionPoint {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self, FusionError> {
        Self::ALL
            .iter()
            .copied()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| FusionError::Config(format!("unknown fusion point `{s}`")))
    }
}

impl fmt::Display for FusionPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Full fusion configuration; expressible as flat `key=value` text.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FusionConfig {
    pub strategy: FusionStrategy,
    pub point: FusionPoint,
    pub out_channels: usize,
    pub eps: f64,
    pub seed: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            strategy: FusionStrategy::Multiply,
            point: FusionPoint::AfterDla,
            out_channels: 64,
            eps: 1e-5,
            seed: 0,
        }
    }
}

impl FusionConfig {
    pub fn to_kv_text(&self) -> String {
        format!(
            "strategy={}\npoint={}\nout_channels={}\neps={}\nseed={}\n",
            self.strategy, self.point, self.out_channels, self.eps, self.seed
        )
    }

    /// Parse `key=value` lines. Missing keys keep their defaults; unknown
    /// keys and malformed values are errors.
    pub fn from_kv_text(text: &str) -> Result<Self, FusionError> {
        let mut cfg = FusionConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| FusionError::Config(format!("line {}: expected key=value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "strategy" => cfg.strategy = value.parse()?,
                "point" => cfg.point = value.parse()?,
                "out_channels" => {
                    cfg.out_channels = value
                        .parse()
                        .map_err(|_| FusionError::Config(format!("bad out_channels `{value}`")))?
                }
                "eps" => {
                    cfg.eps = value
                        .parse()
                        .map_err(|_| FusionError::Config(format!("bad eps `{value}`")))?;
                    if !cfg.eps.is_finite() || cfg.eps <= 0.0 {
                        return Err(FusionError::Config("eps must be positive".into()));
                    }
                }
                "seed" => {
                    cfg.seed = value
                        .parse()
                        .map_err(|_| FusionError::Config(format!("bad seed `{value}`")))?
                }
                other => return Err(FusionError::Config(format!("unknown key `{other}`"))),
            }
        }
        Ok(cfg)
    }
}

const SALT_PROJECTION: u64 = 0x50524f4a;
const SALT_GATE: u64 = 0x47415445;
const SALT_BACKBONE: u64 = 0x4242;
const SALT_AGGREGATE: u64 = 0x4147;

/// Seeded projection for the final 1x1 convolution of [`fuse`]. The input
/// width depends on the strategy (concat adds the prior channel).
pub fn projection_params(cfg: &FusionConfig, feature_channels: usize) -> Conv1x1Params {
    let in_channels = match cfg.strategy {
        FusionStrategy::Concat => feature_channels + 1,
        _ => feature_channels,
    };
    Conv1x1Params::seeded(in_channels, cfg.out_channels, seeds::derive(cfg.seed, SALT_PROJECTION))
}

/// Seeded scalars of the attention gate `g = sigmoid(a * prior_std + b)`.
pub fn gate_scalars(seed: u64) -> (f64, f64) {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seeds::derive(seed, SALT_GATE));
    let a = rng.random_range(0.5..1.5);
    let b = rng.random_range(-0.5..0.5);
    (a, b)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check_fuse_shapes(features: &Tensor, prior: &Tensor) -> Result<(), FusionError> {
    if features.batch() != 1 {
        return Err(FusionError::Shape(format!("features must have batch 1, got {:?}", features.shape())));
    }
    if prior.batch() != 1 || prior.channels() != 1 {
        return Err(FusionError::Shape(format!("prior must be 1x1xHxW, got {:?}", prior.shape())));
    }
    Ok(())
}

/// Fuse standardized features with the standardized prior and project to
/// `cfg.out_channels`. The prior is resampled to the feature resolution
/// first; output shape is `(1, out_channels, h, w)`.
pub fn fuse(features: &Tensor, prior: &Tensor, cfg: &FusionConfig) -> Result<Tensor, FusionError> {
    let params = projection_params(cfg, features.channels());
    fuse_with_projection(features, prior, cfg, &params)
}

/// [`fuse`] with explicit projection weights (tests use the identity or
/// hand-zeroed columns).
pub fn fuse_with_projection(
    features: &Tensor,
    prior: &Tensor,
    cfg: &FusionConfig,
    params: &Conv1x1Params,
) -> Result<Tensor, FusionError> {
    check_fuse_shapes(features, prior)?;
    let prior_resized = bilinear_upsample(prior, features.height(), features.width());
    let features_std = standardize(features, cfg.eps);
    let prior_std = standardize(&prior_resized, cfg.eps);
    let combined = match cfg.strategy {
        FusionStrategy::Multiply => eltwise_mul(&features_std, &prior_std)?,
        FusionStrategy::Concat => concat_channels(&features_std, &prior_std)?,
        FusionStrategy::Attention => {
            let (a, b) = gate_scalars(cfg.seed);
            let gate = prior_std.map(|v| sigmoid(a * v + b));
            eltwise_mul(&features_std, &gate)?
        }
    };
    Ok(conv1x1(&combined, params)?)
}

/// Forward pass of [`fuse`] plus analytic gradients of `sum(upstream *
/// output)` with respect to the raw features and the raw prior.
///
/// Returns `(output, grad_features, grad_prior)`.
pub fn fuse_vjp(
    features: &Tensor,
    prior: &Tensor,
    cfg: &FusionConfig,
    upstream: &Tensor,
) -> Result<(Tensor, Tensor, Tensor), FusionError> {
    check_fuse_shapes(features, prior)?;
    let params = projection_params(cfg, features.channels());

    let mut resample = BilinearUpsampleOp::new(features.height(), features.width());
    let prior_resized = resample.forward(prior);
    let mut std_features = StandardizeOp::new(cfg.eps);
    let features_std = std_features.forward(features);
    let mut std_prior = StandardizeOp::new(cfg.eps);
    let prior_std = std_prior.forward(&prior_resized);

    let mut projection = Conv1x1Op::new(params);
    let (output, grad_features_std, grad_prior_std) = match cfg.strategy {
        FusionStrategy::Multiply => {
            let mut mul = EltwiseMulOp::new();
            let combined = mul.forward(&features_std, &prior_std)?;
            let output = projection.forward(&combined)?;
            let grads = projection.backward(upstream)?;
            let (gf, gp) = mul.backward(&grads.input)?;
            (output, gf, gp)
        }
        FusionStrategy::Concat => {
            let mut cat = ConcatChannelsOp::new();
            let combined = cat.forward(&features_std, &prior_std)?;
            let output = projection.forward(&combined)?;
            let grads = projection.backward(upstream)?;
            let (gf, gp) = cat.backward(&grads.input)?;
            (output, gf, gp)
        }
        FusionStrategy::Attention => {
            let (a, b) = gate_scalars(cfg.seed);
            let gate = prior_std.map(|v| sigmoid(a * v + b));
            let mut mul = EltwiseMulOp::new();
            let combined = mul.forward(&features_std, &gate)?;
            let output = projection.forward(&combined)?;
            let grads = projection.backward(upstream)?;
            let (gf, ggate) = mul.backward(&grads.input)?;
            // chain through the gate: dg/ds = a * g * (1 - g)
            let gp_data: Vec<f64> = ggate
                .data()
                .iter()
                .zip(gate.data())
                .map(|(&gg, &g)| gg * a * g * (1.0 - g))
                .collect();
            let gp = Tensor::new(gate.shape(), gp_data)?;
            (output, gf, gp)
        }
    };

    let grad_features = std_features.backward(&grad_features_std)?;
    let grad_prior_resized = std_prior.backward(&grad_prior_std)?;
    let grad_prior = resample.backward(&grad_prior_resized)?;
    Ok((output, grad_features, grad_prior))
}

// ---------------------------------------------------------------------------
// pipeline wiring and instrumentation

/// Tensors routed to the detection-head slots. The heads themselves are out
/// of scope; the slots are the pipeline outputs.
#[derive(Debug, Clone)]
pub struct HeadInputs {
    pub slot_2d: Tensor,
    pub slot_3d: Tensor,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct StageReport {
    pub name: String,
    pub wall_ms: f64,
    /// Running total of tensor bytes produced up to the end of this stage.
    /// Stage outputs are retained for routing, so the running total is the
    /// high-water mark of tensor memory at that point.
    pub peak_bytes: usize,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct TimingProbe {
    pub stages: Vec<StageReport>,
    pub total_ms: f64,
}

impl TimingProbe {
    pub fn stage_sum_ms(&self) -> f64 {
        self.stages.iter().map(|s| s.wall_ms).sum()
    }
}

struct Probe {
    start: Instant,
    bytes: usize,
    stages: Vec<StageReport>,
}

impl Probe {
    fn new() -> Self {
        Self { start: Instant::now(), bytes: 0, stages: Vec::new() }
    }

    fn stage<T>(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut usize) -> Result<T, FusionError>,
    ) -> Result<T, FusionError> {
        let t0 = Instant::now();
        let out = body(&mut self.bytes)?;
        self.stages.push(StageReport {
            name: name.to_string(),
            wall_ms: t0.elapsed().as_secs_f64() * 1000.0,
            peak_bytes: self.bytes,
        });
        Ok(out)
    }

    fn finish(self) -> TimingProbe {
        TimingProbe { stages: self.stages, total_ms: self.start.elapsed().as_secs_f64() * 1000.0 }
    }
}

/// Result of one pipeline run: head inputs, the number of fuse invocations
/// and the timing/memory probe.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub heads: HeadInputs,
    pub fuse_calls: usize,
    pub probe: TimingProbe,
}

/// Run backbone, aggregation and prior fusion per `cfg.point`:
///
/// * `after_dla` — one fuse on the aggregate, routed to both head slots;
/// * `during_dla` — one fuse per aggregation node (the prior is resampled
///   to each node's scale inside [`fuse`]);
/// * `heads_only` — the raw aggregate feeds the 2D slot, a fused copy feeds
///   the 3D slot.
pub fn run_pipeline(image: &Tensor, prior: &GrayPriorMap, cfg: &FusionConfig) -> Result<PipelineRun, FusionError> {
    if image.height() != prior.height || image.width() != prior.width {
        return Err(FusionError::Shape(format!(
            "image {:?} and prior {}x{} must be aligned",
            image.shape(),
            prior.width,
            prior.height
        )));
    }
    let backbone_seed = seeds::derive(cfg.seed, SALT_BACKBONE);
    let aggregate_seed = seeds::derive(cfg.seed, SALT_AGGREGATE);
    let mut probe = Probe::new();
    let mut fuse_calls = 0usize;

    let prior_t = probe.stage("prior_prep", |bytes| {
        let t = map_to_tensor(prior);
        *bytes += t.byte_size();
        Ok(t)
    })?;

    let pyramid = probe.stage("backbone", |bytes| {
        let p = toy_backbone(image, backbone_seed)?;
        *bytes += p.levels.iter().map(Tensor::byte_size).sum::<usize>();
        Ok(p)
    })?;

    let heads = match cfg.point {
        FusionPoint::AfterDla => {
            let aggregate = probe.stage("aggregate", |bytes| {
                let a = toy_aggregate(&pyramid, aggregate_seed, None)?;
                *bytes += a.byte_size();
                Ok(a)
            })?;
            let fused = probe.stage("fuse", |bytes| {
                fuse_calls += 1;
                let f = fuse(&aggregate, &prior_t, cfg)?;
                *bytes += f.byte_size();
                Ok(f)
            })?;
            probe.stage("route", |bytes| {
                *bytes += fused.byte_size();
                Ok(HeadInputs { slot_2d: fused.clone(), slot_3d: fused })
            })?
        }
        FusionPoint::DuringDla => {
            let aggregate = probe.stage("aggregate", |bytes| {
                let mut tap_bytes = 0usize;
                let mut tap = |node: &Tensor, _idx: usize| {
                    fuse_calls += 1;
                    let fused = fuse(node, &prior_t, cfg)?;
                    tap_bytes += fused.byte_size();
                    Ok(fused)
                };
                let a = toy_aggregate(&pyramid, aggregate_seed, Some(&mut tap))?;
                *bytes += tap_bytes + a.byte_size();
                Ok(a)
            })?;
            probe.stage("route", |bytes| {
                *bytes += aggregate.byte_size();
                Ok(HeadInputs { slot_2d: aggregate.clone(), slot_3d: aggregate })
            })?
        }
        FusionPoint::HeadsOnly => {
            let aggregate = probe.stage("aggregate", |bytes| {
                let a = toy_aggregate(&pyramid, aggregate_seed, None)?;
                *bytes += a.byte_size();
                Ok(a)
            })?;
            let fused = probe.stage("fuse", |bytes| {
                fuse_calls += 1;
                let f = fuse(&aggregate, &prior_t, cfg)?;
                *bytes += f.byte_size();
                Ok(f)
            })?;
            probe.stage("route", |bytes| {
                *bytes += aggregate.byte_size();
                Ok(HeadInputs { slot_2d: aggregate, slot_3d: fused })
            })?
        }
    };

    Ok(PipelineRun { heads, fuse_calls, probe: probe.finish() })
}

/// Baseline run without any prior: backbone, aggregation, routing. Both
/// head slots receive the raw aggregate.
pub fn run_pipeline_unfused(image: &Tensor, cfg: &FusionConfig) -> Result<PipelineRun, FusionError> {
    let backbone_seed = seeds::derive(cfg.seed, SALT_BACKBONE);
    let aggregate_seed = seeds::derive(cfg.seed, SALT_AGGREGATE);
    let mut probe = Probe::new();

    let pyramid = probe.stage("backbone", |bytes| {
        let p = toy_backbone(image, backbone_seed)?;
        *bytes += p.levels.iter().map(Tensor::byte_size).sum::<usize>();
        Ok(p)
    })?;
    let aggregate = probe.stage("aggregate", |bytes| {
        let a = toy_aggregate(&pyramid, aggregate_seed, None)?;
        *bytes += a.byte_size();
        Ok(a)
    })?;
    let heads = probe.stage("route", |bytes| {
        *bytes += aggregate.byte_size();
        Ok(HeadInputs { slot_2d: aggregate.clone(), slot_3d: aggregate })
    })?;

    Ok(PipelineRun { heads, fuse_calls: 0, probe: probe.finish() })
}
