use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{pool, Block};
use crate::circuit::Bit;
use crate::error::{Error, Result};

/// Per-gate gradient: `grad[j][l]` is the derivative with respect to the
/// hidden weights `w_l` of gate `j`.
pub type BlockGradient = Vec<Vec<[f64; 2]>>;

/// Regularizer weight of the pooled loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    pub lambda: f64,
}

impl LossParams {
    pub fn new(lambda: f64) -> Result<LossParams> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidRange(format!("lambda = {lambda} is outside [0, 1]")));
        }
        Ok(LossParams { lambda })
    }
}

/// `max(1 - y P, 0)`.
pub fn hinge(p: f64, y: Bit) -> f64 {
    (1.0 - y.to_f64() * p).max(0.0)
}

/// `lambda |1 + P|`: pulls the pooled output towards `-1`, so its slope
/// on `(-1, 1]` is `+lambda` and the loss slope on the active region is
/// `lambda - y`.
pub fn regularizer(p: f64, lambda: f64) -> f64 {
    lambda * (1.0 + p).abs()
}

/// Per-sample loss of a pooled output.
pub fn sample_loss(p: f64, y: Bit, lp: LossParams) -> f64 {
    hinge(p, y) + regularizer(p, lp.lambda)
}

/// Subgradient of [`sample_loss`] in `P`: the hinge term is inactive at
/// margin `>= 1`, the regularizer at `P = -1`.
pub fn sample_loss_slope(p: f64, y: Bit, lp: LossParams) -> f64 {
    let yv = y.to_f64();
    let h = if yv * p < 1.0 { -yv } else { 0.0 };
    let r = if p > -1.0 { lp.lambda } else { 0.0 };
    h + r
}

/// Weighted inputs to one block (its input level) with labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<Bit>,
    /// Nonnegative, summing to one.
    pub weights: Vec<f64>,
}

impl Batch {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<Bit>, weights: Vec<f64>) -> Result<Batch> {
        if inputs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if labels.len() != inputs.len() || weights.len() != inputs.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} inputs, {} labels, {} weights",
                inputs.len(),
                labels.len(),
                weights.len()
            )));
        }
        let width = inputs[0].len();
        if width == 0 || width % 2 != 0 || inputs.iter().any(|x| x.len() != width) {
            return Err(Error::ShapeMismatch("inputs must share an even width".into()));
        }
        Ok(Batch {
            inputs,
            labels,
            weights,
        })
    }

    /// Equal weights.
    pub fn uniform(inputs: Vec<Vec<f64>>, labels: Vec<Bit>) -> Result<Batch> {
        let w = 1.0 / inputs.len().max(1) as f64;
        let n = inputs.len();
        Batch::new(inputs, labels, vec![w; n])
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn width(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn mean_label(&self) -> f64 {
        self.labels
            .iter()
            .zip(&self.weights)
            .map(|(y, w)| y.to_f64() * w)
            .sum()
    }
}

fn check_block(block: &Block, batch: &Batch) -> Result<()> {
    if batch.width() != 2 * block.gates.len() {
        return Err(Error::DimensionMismatch {
            expected: 2 * block.gates.len(),
            got: batch.width(),
        });
    }
    Ok(())
}

/// Weighted mean of hinge plus regularizer on the pooled block output.
pub fn pooled_loss(block: &Block, batch: &Batch, lp: LossParams) -> Result<f64> {
    check_block(block, batch)?;
    let mut total = 0.0;
    for ((x, &y), &w) in batch.inputs.iter().zip(&batch.labels).zip(&batch.weights) {
        let p = pool(&block.forward(x)?);
        total += w * sample_loss(p, y, lp);
    }
    Ok(total)
}

/// Exact subgradient of [`pooled_loss`], accumulated sample by sample in
/// index order. ReLU and hard-tanh derivatives vanish at their kinks.
pub fn block_gradient(block: &Block, batch: &Batch, lp: LossParams) -> Result<BlockGradient> {
    check_block(block, batch)?;
    let m = block.gates.len() as f64;
    let mut grad: BlockGradient = block.gates.iter().map(|g| vec![[0.0; 2]; g.width()]).collect();
    for ((x, &y), &w) in batch.inputs.iter().zip(&batch.labels).zip(&batch.weights) {
        let p = pool(&block.forward(x)?);
        let outer = w * sample_loss_slope(p, y, lp) / m;
        if outer == 0.0 {
            continue;
        }
        for (j, g) in block.gates.iter().enumerate() {
            let pair = [x[2 * j], x[2 * j + 1]];
            let h = g.hidden(pair);
            if !(h > -1.0 && h < 1.0) {
                continue;
            }
            for l in 0..g.width() {
                if g.preactivation(l, pair) > 0.0 {
                    let c = outer * g.v[l].to_f64();
                    grad[j][l][0] += c * pair[0];
                    grad[j][l][1] += c * pair[1];
                }
            }
        }
    }
    Ok(grad)
}

/// Per-gate pair values with their aggregated weight `sum w (lambda - y)`.
///
/// Wherever the loss slope differs from `lambda - y` the pooled output is
/// `±1`, so every gate is saturated there and contributes nothing; the
/// block gradient therefore depends on the data only through these sums.
#[derive(Clone, Debug, PartialEq)]
pub struct GateCoefficients {
    pub per_gate: Vec<Vec<([f64; 2], f64)>>,
}

impl GateCoefficients {
    pub fn from_batch(batch: &Batch, lp: LossParams) -> GateCoefficients {
        let m = batch.width() / 2;
        let mut maps: Vec<BTreeMap<(u64, u64), f64>> = vec![BTreeMap::new(); m];
        for ((x, &y), &w) in batch.inputs.iter().zip(&batch.labels).zip(&batch.weights) {
            let a = w * (lp.lambda - y.to_f64());
            for (j, map) in maps.iter_mut().enumerate() {
                *map.entry((x[2 * j].to_bits(), x[2 * j + 1].to_bits())).or_insert(0.0) += a;
            }
        }
        GateCoefficients {
            per_gate: maps
                .into_iter()
                .map(|map| {
                    map.into_iter()
                        .map(|((a, b), c)| ([f64::from_bits(a), f64::from_bits(b)], c))
                        .collect()
                })
                .collect(),
        }
    }

    /// The block gradient computed from the aggregated sums.
    pub fn gradient(&self, block: &Block) -> BlockGradient {
        let m = block.gates.len() as f64;
        block
            .gates
            .iter()
            .zip(&self.per_gate)
            .map(|(g, pairs)| {
                let mut gw = vec![[0.0; 2]; g.width()];
                for &(pair, a) in pairs {
                    let h = g.hidden(pair);
                    if !(h > -1.0 && h < 1.0) {
                        continue;
                    }
                    for (l, gl) in gw.iter_mut().enumerate() {
                        if g.preactivation(l, pair) > 0.0 {
                            let c = a * g.v[l].to_f64() / m;
                            gl[0] += c * pair[0];
                            gl[1] += c * pair[1];
                        }
                    }
                }
                gw
            })
            .collect()
    }

    /// One step `w -= eta * grad`. Gates do not share parameters, so each
    /// is updated as soon as its own gradient is known. Returns whether
    /// any weight moved.
    pub fn descend(&self, block: &mut Block, eta: f64) -> bool {
        let m = block.gates.len() as f64;
        let mut moved = false;
        let mut gw: Vec<[f64; 2]> = Vec::new();
        for (g, pairs) in block.gates.iter_mut().zip(&self.per_gate) {
            gw.clear();
            gw.resize(g.width(), [0.0; 2]);
            let mut any = false;
            for &(pair, a) in pairs {
                if a == 0.0 {
                    continue;
                }
                let h = g.hidden(pair);
                if !(h > -1.0 && h < 1.0) {
                    continue;
                }
                for (l, gl) in gw.iter_mut().enumerate() {
                    if g.preactivation(l, pair) > 0.0 {
                        let c = a * g.v[l].to_f64() / m;
                        gl[0] += c * pair[0];
                        gl[1] += c * pair[1];
                        any = true;
                    }
                }
            }
            if any {
                for (w, d) in g.w.iter_mut().zip(&gw) {
                    let new = [w[0] - eta * d[0], w[1] - eta * d[1]];
                    moved |= new != *w;
                    *w = new;
                }
            }
        }
        moved
    }

    /// True when every gate output is `±1` on every pair it sees, so the
    /// gradient is exactly zero from here on.
    pub fn all_saturated(&self, block: &Block) -> bool {
        block.gates.iter().zip(&self.per_gate).all(|(g, pairs)| {
            pairs.iter().all(|&(pair, _)| {
                let h = g.hidden(pair);
                h <= -1.0 || h >= 1.0
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_block, NeuralGate};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use Bit::{Neg as N, Pos as P};

    fn one_gate_block(g: NeuralGate) -> Block {
        Block { layer: 1, gates: vec![g] }
    }

    #[test]
    fn loss_examples() {
        let lp0 = LossParams::new(0.0).unwrap();
        assert_eq!(sample_loss(1.0, P, lp0), 0.0);
        assert_eq!(sample_loss(0.0, P, LossParams::new(0.25).unwrap()), 1.25);
        assert_eq!(sample_loss(-1.0, N, lp0), 0.0);
        let perfect = one_gate_block(NeuralGate::plant(crate::circuit::GateFn::AND));
        let b = Batch::uniform(vec![vec![1.0, 1.0]], vec![P]).unwrap();
        assert_eq!(pooled_loss(&perfect, &b, lp0).unwrap(), 0.0);
        assert!(LossParams::new(1.5).is_err());
    }

    #[test]
    fn empty_batch_rejected() {
        assert!(matches!(Batch::uniform(vec![], vec![]), Err(Error::EmptyBatch)));
    }

    #[test]
    fn zero_weights_give_zero_gradient() {
        let b = one_gate_block(NeuralGate::zeros(4));
        let batch = Batch::uniform(vec![vec![1.0, -1.0], vec![0.3, 0.2]], vec![P, N]).unwrap();
        let g = block_gradient(&b, &batch, LossParams::new(0.3).unwrap()).unwrap();
        assert!(g.iter().flatten().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn saturated_gate_has_zero_gradient() {
        let b = one_gate_block(NeuralGate::plant(crate::circuit::GateFn::XOR));
        let xs: Vec<Vec<f64>> = (0..4).map(|k| crate::net::pattern_vec(k).to_vec()).collect();
        let batch = Batch::uniform(xs, vec![N, P, P, N]).unwrap();
        let g = block_gradient(&b, &batch, LossParams::new(0.1).unwrap()).unwrap();
        assert!(g.iter().flatten().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn compressed_gradient_matches_literal() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..50 {
            let (mut block, _) = init_block(3, 6, 0.05, trial, true).unwrap();
            for g in &mut block.gates {
                for w in &mut g.w {
                    w[0] *= 40.0;
                    w[1] *= 40.0;
                }
            }
            let n = 30;
            let xs: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..8).map(|_| if rng.gen() { 1.0 } else { -1.0 }).collect())
                .collect();
            let ys: Vec<Bit> = (0..n).map(|_| Bit::from_bool(rng.gen())).collect();
            let ws: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let total: f64 = ws.iter().sum();
            let batch = Batch::new(xs, ys, ws.iter().map(|w| w / total).collect()).unwrap();
            let lp = LossParams::new(rng.gen_range(0.0..1.0)).unwrap();
            let literal = block_gradient(&block, &batch, lp).unwrap();
            let compressed = GateCoefficients::from_batch(&batch, lp).gradient(&block);
            for (a, b) in literal.iter().flatten().flatten().zip(compressed.iter().flatten().flatten()) {
                assert!((a - b).abs() <= 1e-14, "{a} vs {b}");
            }
            let coeffs = GateCoefficients::from_batch(&batch, lp);
            let mut stepped = block.clone();
            coeffs.descend(&mut stepped, 0.01);
            for ((g0, g1), gr) in block.gates.iter().zip(&stepped.gates).zip(&compressed) {
                for ((w0, w1), d) in g0.w.iter().zip(&g1.w).zip(gr) {
                    assert!((w0[0] - 0.01 * d[0] - w1[0]).abs() <= 1e-15);
                    assert!((w0[1] - 0.01 * d[1] - w1[1]).abs() <= 1e-15);
                }
            }
        }
    }
}
