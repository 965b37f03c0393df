//! `segfuse gradcheck`: compare every analytic backward pass against
//! central finite differences and fail loudly on disagreement.
//!
//! Gradients are checked along a seeded random upstream direction: a plain
//! output sum is exactly constant in some inputs (standardized channels sum
//! to zero), which would leave finite differences measuring rounding noise.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use segfuse_core::fusion::{fuse, fuse_vjp, FusionConfig, FusionStrategy};
use segfuse_core::tensor::gradcheck::{grad_check, DEFAULT_STEP};
use segfuse_core::tensor::ops::{
    bilinear_upsample, concat_channels, conv1x1, eltwise_mul, standardize, BilinearUpsampleOp, ConcatChannelsOp,
    Conv1x1Op, Conv1x1Params, EltwiseMulOp, StandardizeOp,
};
use segfuse_core::tensor::Tensor;

use super::CliError;

const TOLERANCE: f64 = 1e-4;

/// Test hook: corrupt the first analytic gradient so the failure path can
/// be exercised end to end.
const CORRUPT_ENV: &str = "SEGFUSE_TEST_CORRUPT_GRAD";

fn random_tensor(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| rng.random_range(-2.0..2.0))
}

fn weighted_sum(t: &Tensor, weights: &Tensor) -> f64 {
    t.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
}

fn maybe_corrupt(grads: &mut [Tensor], corrupt: &mut bool) {
    if *corrupt {
        if let Some(first) = grads.first_mut() {
            // any visible offset breaks the comparison
            let perturbed = first.map(|v| v + 0.05);
            *first = perturbed;
            *corrupt = false;
        }
    }
}

fn kernel_worst(name: &str, trials: u64, seed: u64, corrupt: &mut bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let c = 1 + (trial % 2) as usize;
        let h = 2 + (trial % 3) as usize;
        let w = 2 + (trial % 2) as usize;
        let trial_worst = match name {
            "eltwise_mul" => {
                let a = random_tensor([1, c, h, w], &mut rng);
                let b = random_tensor([1, 1, h, w], &mut rng);
                let mut op = EltwiseMulOp::new();
                let out = op.forward(&a, &b).expect("shapes agree");
                let up = random_tensor(out.shape(), &mut rng);
                let (ga, gb) = op.backward(&up).expect("forward recorded");
                let mut grads = vec![ga, gb];
                maybe_corrupt(&mut grads, corrupt);
                grad_check(
                    |i| weighted_sum(&eltwise_mul(&i[0], &i[1]).unwrap(), &up),
                    &[a, b],
                    &grads,
                    DEFAULT_STEP,
                )
            }
            "concat_channels" => {
                let a = random_tensor([1, c, h, w], &mut rng);
                let b = random_tensor([1, 1, h, w], &mut rng);
                let mut op = ConcatChannelsOp::new();
                let out = op.forward(&a, &b).expect("shapes agree");
                let up = random_tensor(out.shape(), &mut rng);
                let (ga, gb) = op.backward(&up).expect("forward recorded");
                let mut grads = vec![ga, gb];
                maybe_corrupt(&mut grads, corrupt);
                grad_check(
                    |i| weighted_sum(&concat_channels(&i[0], &i[1]).unwrap(), &up),
                    &[a, b],
                    &grads,
                    DEFAULT_STEP,
                )
            }
            "conv1x1" => {
                let x = random_tensor([1, c, h, w], &mut rng);
                let params = Conv1x1Params::seeded(c, 3, seed ^ trial);
                let mut op = Conv1x1Op::new(params.clone());
                let out = op.forward(&x).expect("channels agree");
                let up = random_tensor(out.shape(), &mut rng);
                let g = op.backward(&up).expect("forward recorded");
                let mut grads = vec![g.input];
                maybe_corrupt(&mut grads, corrupt);
                grad_check(|i| weighted_sum(&conv1x1(&i[0], &params).unwrap(), &up), &[x], &grads, DEFAULT_STEP)
            }
            "standardize" => {
                let x = random_tensor([1, c, h + 1, w], &mut rng);
                let mut op = StandardizeOp::new(1e-5);
                let out = op.forward(&x);
                let up = random_tensor(out.shape(), &mut rng);
                let g = op.backward(&up).expect("forward recorded");
                let mut grads = vec![g];
                maybe_corrupt(&mut grads, corrupt);
                grad_check(|i| weighted_sum(&standardize(&i[0], 1e-5), &up), &[x], &grads, DEFAULT_STEP)
            }
            "bilinear_upsample" => {
                let x = random_tensor([1, c, h, w], &mut rng);
                let (oh, ow) = (h + 2, w + 1);
                let mut op = BilinearUpsampleOp::new(oh, ow);
                let out = op.forward(&x);
                let up = random_tensor(out.shape(), &mut rng);
                let g = op.backward(&up).expect("forward recorded");
                let mut grads = vec![g];
                maybe_corrupt(&mut grads, corrupt);
                grad_check(|i| weighted_sum(&bilinear_upsample(&i[0], oh, ow), &up), &[x], &grads, DEFAULT_STEP)
            }
            other => unreachable!("unknown kernel {other}"),
        };
        worst = worst.max(trial_worst);
    }
    worst
}

fn fusion_worst(strategy: FusionStrategy, seed: u64, corrupt: &mut bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = random_tensor([1, 8, 4, 4], &mut rng);
    let prior = random_tensor([1, 1, 8, 8], &mut rng);
    let cfg = FusionConfig { strategy, seed, ..Default::default() };
    let out = fuse(&features, &prior, &cfg).expect("shapes agree");
    let up = random_tensor(out.shape(), &mut rng);
    let (_, gf, gp) = fuse_vjp(&features, &prior, &cfg, &up).expect("shapes agree");
    let mut grads = vec![gf, gp];
    maybe_corrupt(&mut grads, corrupt);
    grad_check(
        |i| weighted_sum(&fuse(&i[0], &i[1], &cfg).unwrap(), &up),
        &[features, prior],
        &grads,
        DEFAULT_STEP,
    )
}

pub fn run(trials: u64, seed: u64) -> Result<(), CliError> {
    let mut corrupt = std::env::var(CORRUPT_ENV).is_ok();
    let mut worst_overall = 0.0f64;
    let mut record = |name: &str, worst: f64| {
        let verdict = if worst < TOLERANCE { "ok" } else { "FAIL" };
        println!("{name:<28} worst relative error {worst:.3e}  {verdict}");
        worst_overall = worst_overall.max(worst);
    };

    for kernel in ["eltwise_mul", "concat_channels", "conv1x1", "standardize", "bilinear_upsample"] {
        let worst = kernel_worst(kernel, trials, seed, &mut corrupt);
        record(&format!("kernel {kernel}"), worst);
    }
    for strategy in FusionStrategy::ALL {
        let worst = fusion_worst(strategy, seed, &mut corrupt);
        record(&format!("fusion {strategy}"), worst);
    }

    println!("overall worst relative error {worst_overall:.3e} (tolerance {TOLERANCE:.0e})");
    if worst_overall >= TOLERANCE {
        return Err(CliError::Check(format!(
            "gradient check failed: worst relative error {worst_overall:.3e} >= {TOLERANCE:.0e}"
        )));
    }
    Ok(())
}
