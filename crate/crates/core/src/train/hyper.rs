use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::max_init_scale;

/// Default practical cap on steps per layer.
pub const DEFAULT_STEP_CAP: u64 = 2_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Product distributions: `T > 24 n / (sqrt2 eta Delta^3)`.
    Product,
    /// Distributions with the three structural properties:
    /// `T > 6 n / (sqrt2 eta eps Delta)`.
    Structured,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientSource {
    Sample,
    Population,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub k: usize,
    pub eta: f64,
    pub lambda: f64,
    /// Steps actually allowed per layer.
    pub steps: u64,
    /// Smallest integer step count satisfying the theorem's strict bound.
    pub theorem_steps: u64,
    pub init_scale: f64,
    pub allow_large_init: bool,
    pub seed: u64,
    pub source: GradientSource,
    pub variant: Variant,
    /// Confidence parameter.
    pub delta_confidence: f64,
    pub delta: f64,
    pub epsilon: Option<f64>,
    /// Mean label the regularizer weight was derived from.
    pub mean_label: f64,
    /// Sample size the theorem asks for.
    pub sample_bound: f64,
    /// Scale the step size by the block input width `n_i`.
    #[serde(default)]
    pub per_layer_eta: bool,
    /// Loss is recorded every this many steps.
    pub log_every: u64,
    /// Set by the trainer when labels were negated.
    #[serde(default)]
    pub label_flip_applied: bool,
}

fn in_open_half(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidRange(format!("{name} = {v} must lie in (0, 1/2)")))
    }
}

/// `floor(v) + 1`: the least integer strictly above `v`, saturating.
fn least_integer_above(v: f64) -> u64 {
    if v >= u64::MAX as f64 {
        u64::MAX
    } else {
        v.floor() as u64 + 1
    }
}

/// Minimal width from the confidence requirement.
pub fn min_width(n: usize, d: usize, delta_confidence: f64) -> usize {
    let v = (2.0 * n as f64 * d as f64 / delta_confidence).ln() / (4.0f64 / 3.0).ln();
    v.ceil().max(1.0) as usize
}

/// Largest step size allowed for width `k`.
pub fn max_eta(k: usize) -> f64 {
    1.0 / (16.0 * std::f64::consts::SQRT_2 * k as f64)
}

/// Hyperparameters of the convergence theorems for `n = 2^d` inputs.
///
/// `mean_label` is taken in absolute value: training flips labels to make
/// it nonnegative. The step cap defaults to [`DEFAULT_STEP_CAP`].
pub fn derive_hyperparams(
    n: usize,
    d: usize,
    delta_confidence: f64,
    delta: f64,
    epsilon: Option<f64>,
    mean_label: f64,
    variant: Variant,
) -> Result<TrainConfig> {
    if d == 0 || n != 1usize << d {
        return Err(Error::InvalidRange(format!("n = {n} is not 2^{d}")));
    }
    in_open_half("delta (confidence)", delta_confidence)?;
    in_open_half("Delta", delta)?;
    let ey = mean_label.abs();
    if !(ey < 1.0) {
        return Err(Error::InvalidRange(format!("mean label {mean_label} must be below 1 in magnitude")));
    }
    let lambda = ey + delta / 4.0;
    if lambda > 1.0 {
        return Err(Error::InvalidRange(format!("lambda = {lambda} exceeds 1")));
    }
    let k = min_width(n, d, delta_confidence);
    let eta = max_eta(k);
    let log_term = (8.0 * n as f64 * d as f64 / delta_confidence).ln();
    let nf = n as f64;
    let sqrt2 = std::f64::consts::SQRT_2;
    let (bound, sample_bound) = match variant {
        Variant::Product => (24.0 * nf / (sqrt2 * eta * delta.powi(3)), 2f64.powi(15) / delta.powi(6) * log_term),
        Variant::Structured => {
            let eps = epsilon.ok_or_else(|| Error::InvalidRange("this variant needs epsilon".into()))?;
            in_open_half("epsilon", eps)?;
            (6.0 * nf / (sqrt2 * eta * eps * delta), 2f64.powi(11) / (eps * eps * delta * delta) * log_term)
        }
    };
    let theorem_steps = least_integer_above(bound);
    Ok(TrainConfig {
        k,
        eta,
        lambda,
        steps: theorem_steps.min(DEFAULT_STEP_CAP),
        theorem_steps,
        init_scale: max_init_scale(k),
        allow_large_init: false,
        seed: 0,
        source: GradientSource::Population,
        variant,
        delta_confidence,
        delta,
        epsilon,
        mean_label: ey,
        sample_bound,
        per_layer_eta: false,
        log_every: 10_000,
        label_flip_applied: false,
    })
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.steps == 0 || !(self.eta > 0.0) || self.log_every == 0 {
            return Err(Error::InvalidRange("k, steps, eta and log_every must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidRange(format!("lambda = {} is outside [0, 1]", self.lambda)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_and_rate_for_sixteen_inputs() {
        let cfg = derive_hyperparams(16, 4, 0.1, 0.2, None, 0.0, Variant::Product).unwrap();
        assert_eq!(cfg.k, 25);
        assert!((cfg.eta - 1.7678e-3).abs() < 1e-7);
        assert!((cfg.lambda - 0.05).abs() < 1e-15);
    }

    #[test]
    fn second_variant_step_count() {
        let delta = (2.0f64 / 3.0).powi(4);
        let eps = 1.0 / 256.0;
        let cfg = derive_hyperparams(16, 4, 0.1, delta, Some(eps), 0.0, Variant::Structured).unwrap();
        let oracle = 6.0 * 16.0 / (2f64.sqrt() * cfg.eta * eps * delta);
        assert_eq!(cfg.theorem_steps, oracle.ceil() as u64);
        assert!(cfg.theorem_steps as f64 > oracle);
        assert!(cfg.sample_bound > 1e9);
    }

    #[test]
    fn range_errors() {
        assert!(derive_hyperparams(16, 4, 0.6, 0.2, None, 0.0, Variant::Product).is_err());
        assert!(derive_hyperparams(16, 4, 0.1, 0.0, None, 0.0, Variant::Product).is_err());
        assert!(derive_hyperparams(16, 4, 0.1, 0.2, None, 0.0, Variant::Structured).is_err());
        assert!(derive_hyperparams(12, 4, 0.1, 0.2, None, 0.0, Variant::Product).is_err());
    }
}
