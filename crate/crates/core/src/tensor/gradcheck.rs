//! Central finite-difference gradient verification.

use super::Tensor;

/// Compare analytic gradients against central differences of a scalar
/// function.
///
/// `f` maps the inputs to a scalar (typically the sum of an op's output);
/// `analytic` holds, per input, the gradient of that scalar as computed by
/// the op's backward pass. Every input element is perturbed by ±h and the
/// worst relative error is returned, with the denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(f: F, inputs: &[Tensor], analytic: &[Tensor], h: f64) -> f64
where
    F: Fn(&[Tensor]) -> f64,
{
    assert!(h > 0.0, "step must be positive");
    assert_eq!(inputs.len(), analytic.len(), "one analytic gradient per input");
    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        assert_eq!(analytic[k].shape(), input.shape(), "gradient shape mismatch for input {k}");
        for idx in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[idx] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[idx] -= h;
            let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
            let a = analytic[k].data()[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Default finite-difference step used across the gradient suites.
pub const DEFAULT_STEP: f64 = 1e-5;
