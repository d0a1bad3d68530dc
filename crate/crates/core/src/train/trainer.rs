use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::hyper::{GradientSource, TrainConfig};
use super::recovery::{learned_signs, sign_map_from_correlations};
use crate::circuit::{Bit, Circuit, InfluenceMode, InfluenceReading};
use crate::dist::{DiscreteDistribution, LabeledSample};
use crate::error::{Error, Result};
use crate::net::{init_block, pooled_loss, Batch, Block, GateCoefficients, LayeredNet, LossParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Every gate is `±1` on every input pair: the gradient is zero for good.
    Saturated,
    /// The gradient vanished before saturation.
    Stationary,
    StepCap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerTrace {
    pub layer: usize,
    pub seed: u64,
    pub eta: f64,
    pub steps_run: u64,
    pub stop: StopReason,
    /// `(step, loss)` pairs.
    pub loss_curve: Vec<(u64, f64)>,
    /// Distinct (input, label) points the layer was trained on.
    pub distinct_points: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub init_warning: Option<String>,
}

/// What the alignment diagnostic compares against.
#[derive(Clone, Copy, Debug)]
pub struct AlignmentTarget<'a> {
    pub circuit: &'a Circuit,
    pub epsilon: f64,
    pub delta: f64,
    /// Check every this many steps (and at step 0).
    pub every: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub checks: u64,
    pub failures: u64,
    /// Smallest `value - bound` seen.
    pub min_slack: Option<f64>,
    /// Layers whose input level was not recovered, so no check applies.
    pub skipped_layers: Vec<usize>,
    /// Gates skipped because their output node has no correlation sign.
    pub skipped_gates: u64,
    pub first_failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub net: LayeredNet,
    pub config: TrainConfig,
    /// Top layer last.
    pub layers: Vec<LayerTrace>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alignment: Option<AlignmentReport>,
}

/// Per-gate data for the alignment check at one layer.
struct LayerAlignment {
    /// `(gate, learned pattern, gamma~(p), nu)` per seen pattern.
    entries: Vec<(usize, [f64; 2], f64, f64)>,
    bound: f64,
}

/// Layerwise training on the empirical distribution of `samples`.
pub fn train_on_samples(samples: &[LabeledSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let data = DiscreteDistribution::from_samples(samples)?;
    let mut cfg = cfg.clone();
    cfg.source = GradientSource::Sample;
    train_layerwise(&data, &cfg, None)
}

/// Trains blocks `d, d-1, ..., 1` in turn with full-batch gradient descent
/// on the pooled loss over `data`, freezing each before the next.
///
/// Labels are negated first when their mean is negative. Each layer stops
/// at the step cap or as soon as the gradient is zero.
pub fn train_layerwise(
    data: &DiscreteDistribution,
    cfg: &TrainConfig,
    alignment: Option<AlignmentTarget<'_>>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = data.dim();
    if !n.is_power_of_two() || n < 2 {
        return Err(Error::InvalidRange(format!("input dimension {n} is not a power of two")));
    }
    let d = n.trailing_zeros() as usize;
    let flip = data.mean_label() < 0.0;
    let oriented = if flip { data.flip_labels() } else { data.clone() };
    let lp = LossParams::new(cfg.lambda)?;
    let mut cfg = cfg.clone();
    cfg.label_flip_applied = flip;

    let mut diag = match alignment {
        Some(t) => {
            if t.circuit.depth() != d {
                return Err(Error::DimensionMismatch {
                    expected: t.circuit.n_inputs(),
                    got: n,
                });
            }
            let reference = t.circuit.normalize_constant_gates(InfluenceMode::Analytic)?;
            let chain = oriented.chain(&reference)?;
            Some((t, reference, chain, AlignmentReport::default()))
        }
        None => None,
    };

    let xs: Vec<Vec<f64>> = oriented
        .atoms()
        .iter()
        .map(|a| a.x.iter().map(|b| b.to_f64()).collect())
        .collect();
    let masses = oriented.masses_f64();
    let support = oriented.support_x();

    let mut net = LayeredNet::new(d);
    net.label_flipped = flip;
    let mut seeds = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut traces = Vec::new();
    for layer in (1..=d).rev() {
        let seed: u64 = seeds.gen();
        let batch = boundary_batch(&net, &xs, &oriented, &masses)?;
        let eta = if cfg.per_layer_eta {
            cfg.eta * (1u64 << layer) as f64
        } else {
            cfg.eta
        };
        let (mut block, init_warning) = init_block(layer, cfg.k, cfg.init_scale, seed, cfg.allow_large_init)?;
        let coeffs = GateCoefficients::from_batch(&batch, lp);

        let layer_diag = match diag.as_mut() {
            Some((t, reference, chain, rep)) => {
                let la = layer_alignment(&net, reference, chain, &support, layer, t)?;
                match la {
                    Some((la, skipped)) => {
                        rep.skipped_gates += skipped;
                        Some(la)
                    }
                    None => {
                        rep.skipped_layers.push(layer);
                        None
                    }
                }
            }
            None => None,
        };

        let loss_at = |b: &Block, step: u64| -> Result<f64> {
            let l = pooled_loss(b, &batch, lp)?;
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss {
                    layer,
                    step: step as usize,
                });
            }
            Ok(l)
        };
        let mut curve = vec![(0, loss_at(&block, 0)?)];
        let mut step = 0u64;
        let stop = loop {
            if let (Some(la), Some((t, _, _, rep))) = (&layer_diag, diag.as_mut()) {
                if step % t.every == 0 {
                    check_alignment(&block, &coeffs, la, layer, step, rep);
                }
            }
            if step >= cfg.steps {
                break StopReason::StepCap;
            }
            if !coeffs.descend(&mut block, eta) {
                break if coeffs.all_saturated(&block) {
                    StopReason::Saturated
                } else {
                    StopReason::Stationary
                };
            }
            step += 1;
            if step % cfg.log_every == 0 {
                curve.push((step, loss_at(&block, step)?));
            }
        };
        if curve.last().map(|c| c.0) != Some(step) {
            curve.push((step, loss_at(&block, step)?));
        }
        traces.push(LayerTrace {
            layer,
            seed,
            eta,
            steps_run: step,
            stop,
            loss_curve: curve,
            distinct_points: batch.len(),
            init_warning,
        });
        net.push_block(block)?;
    }
    Ok(TrainOutcome {
        net,
        config: cfg,
        layers: traces,
        alignment: diag.map(|(_, _, _, rep)| rep),
    })
}

/// Inputs to the next block with duplicates merged.
fn boundary_batch(
    net: &LayeredNet,
    xs: &[Vec<f64>],
    data: &DiscreteDistribution,
    masses: &[f64],
) -> Result<Batch> {
    let mut merged: BTreeMap<(Vec<u64>, Bit), (Vec<f64>, f64)> = BTreeMap::new();
    for ((x, a), &w) in xs.iter().zip(data.atoms()).zip(masses) {
        let z = net.forward(x)?;
        let key = (z.iter().map(|v| v.to_bits()).collect(), a.y);
        merged.entry(key).or_insert_with(|| (z, 0.0)).1 += w;
    }
    let mut inputs = Vec::with_capacity(merged.len());
    let mut labels = Vec::with_capacity(merged.len());
    let mut weights = Vec::with_capacity(merged.len());
    for ((_, y), (z, w)) in merged {
        inputs.push(z);
        labels.push(y);
        weights.push(w);
    }
    Batch::new(inputs, labels, weights)
}

/// `None` when the input level of `layer` is not recovered yet.
fn layer_alignment(
    net: &LayeredNet,
    reference: &Circuit,
    chain: &[DiscreteDistribution],
    support: &[Vec<Bit>],
    layer: usize,
    t: &AlignmentTarget<'_>,
) -> Result<Option<(LayerAlignment, u64)>> {
    let xi = if layer == net.depth {
        vec![Bit::Pos; 1 << layer]
    } else {
        match learned_signs(net, reference, support, layer)?.all() {
            Some(s) => s,
            None => return Ok(None),
        }
    };
    let out = chain[layer - 1].clone();
    let infl = reference.level_influences(layer - 1, InfluenceMode::Analytic, InfluenceReading::RemainingCircuit)?;
    // Zero-influence gates are constant +1 after normalization and the
    // gradient pushes them to -1, so their effective sign is -1.
    let nu: Vec<Option<f64>> = match sign_map_from_correlations(&out, reference) {
        Ok(sm) => sm
            .signs
            .iter()
            .zip(&infl)
            .map(|(s, e)| Some(if e.is_exact_zero() { -1.0 } else { s.to_f64() }))
            .collect(),
        Err(Error::LcaViolated { .. }) => (0..out.dim())
            .map(|j| {
                let c = out.correlation(j).unwrap_or(0.0);
                if infl[j].is_exact_zero() {
                    Some(-1.0)
                } else if c != 0.0 {
                    Some(c.signum())
                } else {
                    None
                }
            })
            .collect(),
        Err(e) => return Err(e),
    };
    let mut entries = Vec::new();
    let mut skipped = 0;
    for (j, nu_j) in nu.iter().enumerate() {
        let Some(nu_j) = nu_j else {
            skipped += 1;
            continue;
        };
        let gamma = reference.gate(layer, j);
        let table = chain[layer].pair_table(j)?;
        for (q, row) in table.iter().enumerate() {
            if row.iter().all(|w| w == &num_bigint::BigUint::default()) {
                continue;
            }
            let (a, b) = crate::circuit::PATTERNS[q];
            let p = [(xi[2 * j] * a).to_f64(), (xi[2 * j + 1] * b).to_f64()];
            entries.push((j, p, gamma.eval(a, b).to_f64(), *nu_j));
        }
    }
    let n_i = (1u64 << layer) as f64;
    Ok(Some((
        LayerAlignment {
            entries,
            bound: t.epsilon * t.delta / (std::f64::consts::SQRT_2 * n_i),
        },
        skipped,
    )))
}

/// For each unit active on a seen pattern `p` whose gate is not saturated
/// there: `-gamma~(p) v_l nu <dL/dw_l, p>` must exceed the bound.
fn check_alignment(
    block: &Block,
    coeffs: &GateCoefficients,
    la: &LayerAlignment,
    layer: usize,
    step: u64,
    rep: &mut AlignmentReport,
) {
    let grad = coeffs.gradient(block);
    for &(j, p, gamma, nu) in &la.entries {
        let g = &block.gates[j];
        let h = g.hidden(p);
        if !(h > -1.0 && h < 1.0) {
            continue;
        }
        for l in 0..g.width() {
            if g.preactivation(l, p) <= 0.0 {
                continue;
            }
            let inner = grad[j][l][0] * p[0] + grad[j][l][1] * p[1];
            let value = -gamma * g.v[l].to_f64() * nu * inner;
            let slack = value - la.bound;
            rep.checks += 1;
            rep.min_slack = Some(rep.min_slack.map_or(slack, |m: f64| m.min(slack)));
            if slack <= -1e-12 {
                rep.failures += 1;
                if rep.first_failures.len() < 10 {
                    rep.first_failures.push(format!(
                        "layer {layer} gate {j} unit {l} step {step}: {value} <= {}",
                        la.bound
                    ));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::GateFn;
    use crate::dist::{GenerativeDistribution, LabeledProduct, ProductDistribution};
    use crate::train::{derive_hyperparams, verify_recovery, Variant};

    #[test]
    fn and_tree_is_learned_from_generative_population() {
        let c = Circuit::uniform(2, GateFn::AND).unwrap();
        let data = GenerativeDistribution::new(c.clone()).unwrap().enumerate().unwrap();
        let delta = (2.0f64 / 3.0).powi(2);
        let eps = 1.0 / 16.0;
        let mut cfg = derive_hyperparams(4, 2, 0.1, delta, Some(eps), data.mean_label(), Variant::Structured).unwrap();
        cfg.seed = 5;
        let target = AlignmentTarget {
            circuit: &c,
            epsilon: eps,
            delta,
            every: 50,
        };
        let out = train_layerwise(&data, &cfg, Some(target)).unwrap();
        assert!(out.layers.iter().all(|t| t.stop == StopReason::Saturated));
        let r = verify_recovery(&out.net, &c, &data).unwrap();
        assert!(r.recovered(), "{}", r.to_json());
        let a = out.alignment.unwrap();
        assert!(a.checks > 0);
        assert_eq!(a.failures, 0, "{:?}", a.first_failures);
    }

    #[test]
    fn training_is_deterministic() {
        let c = Circuit::uniform(2, GateFn::OR).unwrap();
        let data = LabeledProduct::new(ProductDistribution::constant(4, 0.3).unwrap(), c)
            .unwrap()
            .enumerate()
            .unwrap();
        let mut cfg = derive_hyperparams(4, 2, 0.1, 0.3, None, data.mean_label(), Variant::Product).unwrap();
        cfg.seed = 11;
        cfg.steps = 500;
        let a = train_layerwise(&data, &cfg, None).unwrap();
        let b = train_layerwise(&data, &cfg, None).unwrap();
        assert_eq!(a, b);
        assert!(a.config.label_flip_applied == (data.mean_label() < 0.0));
    }
}
