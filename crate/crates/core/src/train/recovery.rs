use num_bigint::BigUint;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::circuit::{pattern_index, Bit, Circuit, InfluenceMode, InfluenceReading, PATTERNS};
use crate::dist::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::net::{LayeredNet, SATURATION_TOLERANCE};

/// Expected sign of every node at one level: the sign of its correlation
/// with the label, `+1` for nodes that do not influence the output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignMap {
    pub level: usize,
    pub signs: Vec<Bit>,
    /// Per node: false when its influence is zero.
    pub influencing: Vec<bool>,
}

fn level_of(d: &DiscreteDistribution, c: &Circuit) -> Result<usize> {
    let level = d.dim().trailing_zeros() as usize;
    if !d.dim().is_power_of_two() || level > c.depth() {
        return Err(Error::DimensionMismatch {
            expected: c.n_inputs(),
            got: d.dim(),
        });
    }
    Ok(level)
}

/// Sign map of the level `d` lives on. An influencing node with zero
/// correlation has no sign and yields [`Error::LcaViolated`].
pub fn sign_map_from_correlations(d: &DiscreteDistribution, c: &Circuit) -> Result<SignMap> {
    let level = level_of(d, c)?;
    let infl = c.level_influences(level, InfluenceMode::Analytic, InfluenceReading::RemainingCircuit)?;
    let mut signs = Vec::with_capacity(d.dim());
    let mut influencing = Vec::with_capacity(d.dim());
    for (j, est) in infl.iter().enumerate() {
        let corr = d.correlation_exact(j)?;
        let inf = !est.is_exact_zero();
        influencing.push(inf);
        if !inf {
            signs.push(Bit::Pos);
        } else if corr.is_zero() {
            return Err(Error::LcaViolated { level, position: j });
        } else {
            signs.push(Bit::from_bool(corr.is_positive()));
        }
    }
    Ok(SignMap {
        level,
        signs,
        influencing,
    })
}

/// Learned sign `s_k` with `z_k = s_k t_k` on every support input, where
/// `z` is the learned value and `t` the true node value; `None` where a
/// value is not saturated or the relation is not consistent.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct LearnedSigns {
    pub signs: Vec<Option<Bit>>,
    pub witnesses: Vec<String>,
}

impl LearnedSigns {
    pub fn all(&self) -> Option<Vec<Bit>> {
        self.signs.iter().copied().collect()
    }
}

pub(crate) fn learned_signs(
    net: &LayeredNet,
    reference: &Circuit,
    support: &[Vec<Bit>],
    level: usize,
) -> Result<LearnedSigns> {
    let d = net.depth;
    let n_blocks = d - level;
    if n_blocks > net.n_trained() {
        return Err(Error::InvalidRange(format!("level {level} is above the trained prefix")));
    }
    let width = 1usize << level;
    let mut signs: Vec<Option<Bit>> = vec![None; width];
    let mut decided = vec![false; width];
    let mut witnesses = Vec::new();
    for x in support {
        let xf: Vec<f64> = x.iter().map(|b| b.to_f64()).collect();
        let z = net.forward_to(&xf, n_blocks)?;
        let t = reference.propagate(d, level, x)?;
        for k in 0..width {
            if decided[k] && signs[k].is_none() {
                continue;
            }
            let s = if (z[k].abs() - 1.0).abs() <= SATURATION_TOLERANCE {
                Some(Bit::from_bool(z[k] > 0.0) * t[k])
            } else {
                witnesses.push(format!("node ({level}, {k}) outputs {} on {}", z[k], fmt_bits(x)));
                None
            };
            if !decided[k] {
                decided[k] = true;
                signs[k] = s;
            } else if s != signs[k] {
                if s.is_some() {
                    witnesses.push(format!("node ({level}, {k}) changes sign relation on {}", fmt_bits(x)));
                }
                signs[k] = None;
            }
        }
    }
    Ok(LearnedSigns { signs, witnesses })
}

fn fmt_bits(x: &[Bit]) -> String {
    x.iter().map(|b| if b.is_pos() { '+' } else { '-' }).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelCheck {
    pub level: usize,
    pub matches: bool,
    /// `s_k` per node, absent where the learned value is not `±` the true one.
    pub learned: Vec<Option<Bit>>,
    /// Required sign per node; absent where any sign is accepted.
    pub expected: Vec<Option<Bit>>,
    pub witnesses: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateCheck {
    pub layer: usize,
    pub position: usize,
    pub influencing: bool,
    pub matches: bool,
    /// Input patterns seen by the gate, in learned coordinates.
    pub patterns: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detail: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub label_flipped: bool,
    /// Probability of a wrong or unsaturated prediction; absent until the
    /// net is complete.
    pub error: Option<f64>,
    pub levels: Vec<LevelCheck>,
    pub gates: Vec<GateCheck>,
    pub all_levels_match: bool,
    pub all_gates_match: bool,
}

impl RecoveryReport {
    pub fn recovered(&self) -> bool {
        self.all_levels_match && self.all_gates_match && self.error == Some(0.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }
}

/// Compares a (possibly partial) trained net against the circuit on the
/// support of `data` (inputs at level `d`).
///
/// Zero-influence gates are first replaced by constants. Every trained
/// level must then satisfy `z_k = s_k t_k` on the support, with `s_k` the
/// correlation sign for influencing nodes and free otherwise, and each
/// trained gate must agree with `s_j gamma(xi ⊙ p)` on the patterns it sees.
pub fn verify_recovery(net: &LayeredNet, c: &Circuit, data: &DiscreteDistribution) -> Result<RecoveryReport> {
    if net.depth != c.depth() || data.dim() != c.n_inputs() {
        return Err(Error::DimensionMismatch {
            expected: c.n_inputs(),
            got: data.dim(),
        });
    }
    let reference = c.normalize_constant_gates(InfluenceMode::Analytic)?;
    let oriented = if net.label_flipped { data.flip_labels() } else { data.clone() };
    let chain = oriented.chain(&reference)?;
    let support = data.support_x();
    let d = c.depth();

    let mut learned = Vec::new();
    let mut levels = Vec::new();
    for level in (net.boundary_level()..d).rev() {
        let ls = learned_signs(net, &reference, &support, level)?;
        let mut witnesses = ls.witnesses.clone();
        let expected: Vec<Option<Bit>> = match sign_map_from_correlations(&chain[level], &reference) {
            Ok(sm) => sm
                .signs
                .iter()
                .zip(&sm.influencing)
                .map(|(&s, &inf)| inf.then_some(s))
                .collect(),
            Err(Error::LcaViolated { level, position }) => {
                witnesses.push(format!("node ({level}, {position}) influences the output but is uncorrelated"));
                vec![None; 1 << level]
            }
            Err(e) => return Err(e),
        };
        let mut matches = witnesses.len() == ls.witnesses.len();
        for (k, (s, e)) in ls.signs.iter().zip(&expected).enumerate() {
            match (s, e) {
                (None, _) => matches = false,
                (Some(s), Some(e)) if s != e => {
                    matches = false;
                    witnesses.push(format!("node ({level}, {k}) has sign {s} but correlation sign {e}"));
                }
                _ => {}
            }
        }
        levels.push(LevelCheck {
            level,
            matches,
            learned: ls.signs.clone(),
            expected,
            witnesses,
        });
        learned.push((level, ls));
    }
    let signs_at = |level: usize| -> Option<Vec<Option<Bit>>> {
        if level == d {
            Some(vec![Some(Bit::Pos); 1 << d])
        } else {
            learned.iter().find(|(l, _)| *l == level).map(|(_, ls)| ls.signs.clone())
        }
    };

    let mut gates = Vec::new();
    for b in net.blocks() {
        let layer = b.layer;
        let xi = signs_at(layer).expect("input level is trained");
        let out = signs_at(layer - 1).expect("output level is trained");
        let infl = reference.level_influences(layer - 1, InfluenceMode::Analytic, InfluenceReading::RemainingCircuit)?;
        for (j, g) in b.gates.iter().enumerate() {
            let table = chain[layer].pair_table(j)?;
            let seen: Vec<usize> = (0..4)
                .filter(|&q| table[q].iter().any(|w| !w.is_zero()))
                .collect();
            let influencing = !infl[j].is_exact_zero();
            let (matches, patterns, detail) = match (xi[2 * j], xi[2 * j + 1], out[j]) {
                (Some(x0), Some(x1), Some(s)) => {
                    let gamma = reference.gate(layer, j);
                    let mut patterns = Vec::new();
                    let mut expect = Vec::new();
                    for &q in &seen {
                        let (a, bb) = PATTERNS[q];
                        patterns.push(pattern_index(x0 * a, x1 * bb));
                        expect.push(s * gamma.eval(a, bb));
                    }
                    match g.extract_on(&patterns) {
                        Ok(vals) => {
                            let bad: Vec<usize> = patterns
                                .iter()
                                .zip(&expect)
                                .filter(|(p, e)| vals[**p] != Some(**e))
                                .map(|(p, _)| *p)
                                .collect();
                            let detail = (!bad.is_empty()).then(|| format!("wrong output on patterns {bad:?}"));
                            (bad.is_empty(), patterns, detail)
                        }
                        Err(ns) => (false, patterns, Some(ns.to_string())),
                    }
                }
                _ => (false, Vec::new(), Some("input or output level not recovered".into())),
            };
            gates.push(GateCheck {
                layer,
                position: j,
                influencing,
                matches,
                patterns,
                detail,
            });
        }
    }

    let error = if net.is_complete() {
        let mut wrong = BigUint::zero();
        for a in data.atoms() {
            let p = net.predict(&a.x)?;
            if (p - a.y.to_f64()).abs() > SATURATION_TOLERANCE {
                wrong += &a.weight;
            }
        }
        Some(data.ratio(&wrong).to_f64().unwrap_or(f64::NAN))
    } else {
        None
    };
    Ok(RecoveryReport {
        label_flipped: net.label_flipped,
        error,
        all_levels_match: levels.iter().all(|l| l.matches),
        all_gates_match: gates.iter().all(|g| g.matches),
        levels,
        gates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::GateFn;
    use crate::dist::{GenerativeDistribution, LabeledProduct, ProductDistribution};

    #[test]
    fn planted_net_is_recovered() {
        let c = Circuit::uniform(3, GateFn::AND).unwrap();
        let gd = GenerativeDistribution::new(c.clone()).unwrap();
        let data = gd.enumerate().unwrap();
        let r = verify_recovery(&LayeredNet::planted(&c), &c, &data).unwrap();
        assert!(r.recovered(), "{}", r.to_json());
    }

    #[test]
    fn sign_flipped_internal_node_is_rejected() {
        // Negating an internal gate and its consumer keeps the output but
        // flips the sign of an influencing node: the level check rejects it.
        let c = Circuit::uniform(2, GateFn::OR).unwrap();
        let mut net = LayeredNet::new(2);
        let mut b2 = crate::net::Block::plant(&c, 2);
        for v in &mut b2.gates[0].v {
            *v = -*v;
        }
        net.push_block(b2).unwrap();
        let inputs = ProductDistribution::uniform(4);
        let data = LabeledProduct::new(inputs, c.clone()).unwrap().enumerate().unwrap();
        let r = verify_recovery(&net, &c, &data).unwrap();
        assert!(!r.all_levels_match);
        assert_eq!(r.error, None);
    }

    #[test]
    fn zero_correlation_is_reported() {
        let c = Circuit::uniform(2, GateFn::XOR).unwrap();
        let data = LabeledProduct::new(ProductDistribution::uniform(4), c.clone())
            .unwrap()
            .enumerate()
            .unwrap();
        let chain = data.chain(&c).unwrap();
        assert!(matches!(
            sign_map_from_correlations(&chain[1], &c),
            Err(Error::LcaViolated { level: 1, .. })
        ));
        assert_eq!(sign_map_from_correlations(&chain[0], &c).unwrap().signs, vec![Bit::Pos]);
    }
}
