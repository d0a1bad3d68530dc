//! Depth-two ReLU network trained end to end with Adam on k-parity under
//! product input distributions.

mod adam;
mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use mlp::{BaselineLoss, InitScheme, Mlp2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::Bit;
use crate::dist::ProductDistribution;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub n: usize,
    /// Parity over coordinates `0..k`.
    pub k: usize,
    pub hidden: usize,
    /// `P[x_j = +1]` for every coordinate.
    pub p: f64,
    pub iters: u64,
    pub batch: usize,
    pub eval_every: u64,
    pub test_size: usize,
    pub seed: u64,
    pub loss: BaselineLoss,
    pub adam: AdamConfig,
    #[serde(default)]
    pub init: InitScheme,
    /// Train on a fixed sample of this size instead of fresh batches.
    #[serde(default)]
    pub fixed_dataset: Option<usize>,
}

impl BaselineConfig {
    pub fn new(p: f64, seed: u64) -> BaselineConfig {
        BaselineConfig {
            n: 128,
            k: 5,
            hidden: 128,
            p,
            iters: 10_000,
            batch: 50,
            eval_every: 1000,
            test_size: 10_000,
            seed,
            loss: BaselineLoss::Hinge,
            adam: AdamConfig::default(),
            init: InitScheme::default(),
            fixed_dataset: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub config: BaselineConfig,
    /// `(iteration, test accuracy)` at `0, eval_every, ..., iters`.
    pub curve: Vec<(u64, f64)>,
    /// Mean test label, to judge how far from balanced the labels are.
    pub test_mean_label: f64,
}

impl BaselineResult {
    /// `iteration,accuracy` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,accuracy\n");
        for (it, acc) in &self.curve {
            s.push_str(&format!("{it},{acc}\n"));
        }
        s
    }
}

fn parity_sample(cfg: &BaselineConfig, inputs: &ProductDistribution, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
    let x = inputs.sample_x(rng);
    let y = x[..cfg.k].iter().fold(Bit::Pos, |acc, &b| acc * b);
    (x.iter().map(|b| b.to_f64()).collect(), y.to_f64())
}

/// Trains an [`Mlp2`] with Adam and records test accuracy on a fixed test
/// set drawn once at the start. An output of exactly zero counts as `+1`.
pub fn run_baseline(cfg: &BaselineConfig) -> Result<BaselineResult> {
    if !(cfg.p > 0.0 && cfg.p < 1.0) {
        return Err(Error::InvalidRange(format!("p = {} must lie in (0, 1)", cfg.p)));
    }
    if cfg.k == 0 || cfg.k > cfg.n || cfg.batch == 0 || cfg.eval_every == 0 || cfg.test_size == 0 || cfg.hidden == 0 {
        return Err(Error::InvalidRange("k, batch, hidden, eval_every and test_size must be positive, k <= n".into()));
    }
    let inputs = ProductDistribution::constant(cfg.n, cfg.p)?;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut init_rng = ChaCha8Rng::seed_from_u64(master.gen());
    let mut test_rng = ChaCha8Rng::seed_from_u64(master.gen());
    let mut train_rng = ChaCha8Rng::seed_from_u64(master.gen());

    let mut net = Mlp2::init(cfg.n, cfg.hidden, cfg.init, &mut init_rng);
    let test: Vec<(Vec<f64>, f64)> = (0..cfg.test_size).map(|_| parity_sample(cfg, &inputs, &mut test_rng)).collect();
    let test_mean_label = test.iter().map(|t| t.1).sum::<f64>() / test.len() as f64;
    let fixed: Option<Vec<(Vec<f64>, f64)>> = cfg
        .fixed_dataset
        .map(|m| (0..m).map(|_| parity_sample(cfg, &inputs, &mut train_rng)).collect());
    if fixed.as_ref().is_some_and(|f| f.is_empty()) {
        return Err(Error::EmptyBatch);
    }

    let accuracy = |net: &Mlp2| -> Result<f64> {
        let mut right = 0usize;
        for (x, y) in &test {
            let f = net.forward(x)?;
            let pred = if f >= 0.0 { 1.0 } else { -1.0 };
            right += (pred == *y) as usize;
        }
        Ok(right as f64 / test.len() as f64)
    };

    let mut state = AdamState::new(net.params.len(), cfg.adam);
    let mut curve = vec![(0, accuracy(&net)?)];
    let mut xs = Vec::with_capacity(cfg.batch);
    let mut ys = Vec::with_capacity(cfg.batch);
    for it in 1..=cfg.iters {
        xs.clear();
        ys.clear();
        for _ in 0..cfg.batch {
            let (x, y) = match &fixed {
                Some(f) => f[train_rng.gen_range(0..f.len())].clone(),
                None => parity_sample(cfg, &inputs, &mut train_rng),
            };
            xs.push(x);
            ys.push(y);
        }
        let (loss, grad) = net.loss_and_grad(&xs, &ys, cfg.loss)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                layer: 0,
                step: it as usize,
            });
        }
        adam_step(&mut state, &grad, &mut net.params)?;
        if it % cfg.eval_every == 0 {
            curve.push((it, accuracy(&net)?));
        }
    }
    Ok(BaselineResult {
        config: cfg.clone(),
        curve,
        test_mean_label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(p: f64, seed: u64) -> BaselineConfig {
        BaselineConfig {
            n: 16,
            k: 2,
            hidden: 16,
            iters: 300,
            eval_every: 100,
            test_size: 500,
            ..BaselineConfig::new(p, seed)
        }
    }

    #[test]
    fn curve_grid_and_determinism() {
        let a = run_baseline(&small(0.6, 4)).unwrap();
        let b = run_baseline(&small(0.6, 4)).unwrap();
        assert_eq!(a, b);
        let its: Vec<u64> = a.curve.iter().map(|c| c.0).collect();
        assert_eq!(its, vec![0, 100, 200, 300]);
        assert!(a.curve.iter().all(|c| (0.0..=1.0).contains(&c.1)));
        assert!(a.to_csv().starts_with("iteration,accuracy\n0,"));
    }

    #[test]
    fn two_parity_is_learned_quickly() {
        let r = run_baseline(&BaselineConfig {
            iters: 2000,
            eval_every: 1000,
            ..small(0.5, 1)
        })
        .unwrap();
        assert!(r.curve.last().unwrap().1 > 0.95, "{:?}", r.curve);
    }

    #[test]
    fn bad_bias_rejected() {
        assert!(run_baseline(&small(1.0, 0)).is_err());
        assert!(run_baseline(&BaselineConfig {
            fixed_dataset: Some(0),
            ..small(0.5, 0)
        })
        .is_err());
    }
}
