//! Node influence under the uniform distribution on a level.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Bit, Circuit, GateFn, MAX_PACKED_DEPTH};
use crate::error::{Error, Result};

/// Default cap on the number of level inputs enumerated in exact mode.
pub const DEFAULT_EXACT_CAP: u64 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InfluenceMode {
    /// Enumerate every vector at the level; fails above `cap` vectors.
    Exact { cap: u64 },
    /// Product of per-ancestor sensitivities in exact rational arithmetic.
    /// Siblings along the path are independent under the uniform level
    /// distribution, so this equals the enumerated value at any size.
    Analytic,
    MonteCarlo { samples: usize, seed: u64 },
}

impl InfluenceMode {
    pub fn exact() -> InfluenceMode {
        InfluenceMode::Exact {
            cap: DEFAULT_EXACT_CAP,
        }
    }
}

/// Which output the flip is tested against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfluenceReading {
    /// Flip changes the circuit output computed from this level.
    #[default]
    RemainingCircuit,
    /// Flip changes the next level map only (the parent gate).
    SingleLevel,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfluenceEstimate {
    pub value: f64,
    pub std_error: f64,
    pub exact: bool,
}

impl InfluenceEstimate {
    fn exact(value: f64) -> InfluenceEstimate {
        InfluenceEstimate {
            value,
            std_error: 0.0,
            exact: true,
        }
    }

    /// Zero in an exact mode.
    pub fn is_exact_zero(&self) -> bool {
        self.exact && self.value == 0.0
    }
}

impl Circuit {
    /// Influence of node `position` at `level` (`0 <= level <= depth`).
    pub fn node_influence(
        &self,
        level: usize,
        position: usize,
        mode: InfluenceMode,
        reading: InfluenceReading,
    ) -> Result<InfluenceEstimate> {
        if position >= 1 << level.min(63) {
            return Err(Error::IndexOutOfRange {
                index: position,
                len: 1 << level.min(63),
            });
        }
        Ok(self.level_influences(level, mode, reading)?[position])
    }

    /// Influence of the gate at `layer` (1-based), i.e. of its output node.
    pub fn gate_influence(
        &self,
        layer: usize,
        position: usize,
        mode: InfluenceMode,
        reading: InfluenceReading,
    ) -> Result<InfluenceEstimate> {
        if layer == 0 || layer > self.depth() {
            return Err(Error::IndexOutOfRange {
                index: layer,
                len: self.depth() + 1,
            });
        }
        self.node_influence(layer - 1, position, mode, reading)
    }

    /// Influences of every node at `level`.
    pub fn level_influences(
        &self,
        level: usize,
        mode: InfluenceMode,
        reading: InfluenceReading,
    ) -> Result<Vec<InfluenceEstimate>> {
        if level > self.depth() {
            return Err(Error::IndexOutOfRange {
                index: level,
                len: self.depth() + 1,
            });
        }
        if level == 0 {
            return Ok(vec![InfluenceEstimate::exact(1.0)]);
        }
        match mode {
            InfluenceMode::Exact { cap } => self.influences_enumerated(level, cap, reading),
            InfluenceMode::Analytic => Ok(self.influences_analytic(level, reading)),
            InfluenceMode::MonteCarlo { samples, seed } => {
                self.influences_sampled(level, samples, seed, reading)
            }
        }
    }

    fn influences_enumerated(
        &self,
        level: usize,
        cap: u64,
        reading: InfluenceReading,
    ) -> Result<Vec<InfluenceEstimate>> {
        let width = 1usize << level;
        if level > MAX_PACKED_DEPTH || (width < 64 && (1u64 << width) > cap) || width >= 64 {
            return Err(Error::TooLargeForExact { bits: width, cap });
        }
        let total = 1u64 << width;
        let to_level = match reading {
            InfluenceReading::RemainingCircuit => 0,
            InfluenceReading::SingleLevel => level - 1,
        };
        let image: Vec<u64> = (0..total)
            .map(|z| self.propagate_packed(level, to_level, z))
            .collect();
        let counts = (0..width).map(|j| {
            let bit = 1u64 << j;
            (0..total)
                .filter(|&z| image[z as usize] != image[(z ^ bit) as usize])
                .count() as f64
        });
        Ok(counts
            .map(|c| InfluenceEstimate::exact(c / total as f64))
            .collect())
    }

    fn influences_analytic(&self, level: usize, reading: InfluenceReading) -> Vec<InfluenceEstimate> {
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        // prob_pos[l] = P[node = +1] for nodes at level l, uniform at `level`.
        let mut prob_pos: Vec<Vec<BigRational>> = vec![Vec::new(); level + 1];
        prob_pos[level] = vec![half.clone(); 1 << level];
        for l in (0..level).rev() {
            let below = &prob_pos[l + 1];
            prob_pos[l] = (0..1usize << l)
                .map(|pos| {
                    let g = self.node_gate(l, pos);
                    let (pa, pb) = (&below[2 * pos], &below[2 * pos + 1]);
                    let mut p = BigRational::zero();
                    for (idx, (a, b)) in super::PATTERNS.iter().enumerate() {
                        if g.eval_index(idx) {
                            p += side(pa, *a) * side(pb, *b);
                        }
                    }
                    p
                })
                .collect();
        }
        let stop = match reading {
            InfluenceReading::RemainingCircuit => 0,
            InfluenceReading::SingleLevel => level - 1,
        };
        (0..1usize << level)
            .map(|position| {
                let mut infl = BigRational::one();
                let mut pos = position;
                for l in (stop + 1..=level).rev() {
                    let g = self.node_gate(l - 1, pos / 2);
                    let q = &prob_pos[l][pos ^ 1];
                    infl *= sensitivity(g, pos % 2 == 0, q);
                    if infl.is_zero() {
                        break;
                    }
                    pos /= 2;
                }
                InfluenceEstimate::exact(infl.to_f64().unwrap_or(0.0))
            })
            .collect()
    }

    fn influences_sampled(
        &self,
        level: usize,
        samples: usize,
        seed: u64,
        reading: InfluenceReading,
    ) -> Result<Vec<InfluenceEstimate>> {
        if samples == 0 {
            return Err(Error::InvalidRange("Monte Carlo needs at least one sample".into()));
        }
        let width = 1usize << level;
        let to_level = match reading {
            InfluenceReading::RemainingCircuit => 0,
            InfluenceReading::SingleLevel => level - 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut flips = vec![0usize; width];
        let mut z: Vec<Bit> = vec![Bit::Pos; width];
        for _ in 0..samples {
            for b in z.iter_mut() {
                *b = Bit::from_bool(rng.gen());
            }
            let base = self.propagate(level, to_level, &z)?;
            for (j, count) in flips.iter_mut().enumerate() {
                z[j] = -z[j];
                if self.propagate(level, to_level, &z)? != base {
                    *count += 1;
                }
                z[j] = -z[j];
            }
        }
        let n = samples as f64;
        Ok(flips
            .into_iter()
            .map(|c| {
                let p = c as f64 / n;
                InfluenceEstimate {
                    value: p,
                    std_error: (p * (1.0 - p) / n).sqrt(),
                    exact: false,
                }
            })
            .collect())
    }

    /// Replaces every zero-influence gate by the constant `+1` gate.
    ///
    /// The circuit output is unchanged. Requires an exact mode.
    pub fn normalize_constant_gates(&self, mode: InfluenceMode) -> Result<Circuit> {
        if let InfluenceMode::MonteCarlo { .. } = mode {
            return Err(Error::PreconditionViolated(
                "normalization needs exact influences".into(),
            ));
        }
        let mut out = self.clone();
        for level in 1..self.depth() {
            let infl = self.level_influences(level, mode, InfluenceReading::RemainingCircuit)?;
            for (pos, est) in infl.iter().enumerate() {
                if est.is_exact_zero() {
                    out.layers[level][pos] = GateFn::CONST_POS;
                }
            }
        }
        Ok(out)
    }
}

fn side(p_pos: &BigRational, b: Bit) -> BigRational {
    match b {
        Bit::Pos => p_pos.clone(),
        Bit::Neg => BigRational::one() - p_pos,
    }
}

/// Probability that `g` is sensitive to one input when the other input is
/// `+1` with probability `q`.
fn sensitivity(g: GateFn, left: bool, q: &BigRational) -> BigRational {
    use Bit::{Neg as N, Pos as P};
    let differs = |other: Bit| {
        if left {
            g.eval(P, other) != g.eval(N, other)
        } else {
            g.eval(other, P) != g.eval(other, N)
        }
    };
    let mut s = BigRational::zero();
    if differs(P) {
        s += q.clone();
    }
    if differs(N) {
        s += BigRational::one() - q;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::unpack;

    const R: InfluenceReading = InfluenceReading::RemainingCircuit;

    #[test]
    fn full_parity_has_unit_influence_everywhere() {
        let c = Circuit::parity(2, &[0, 1, 2, 3]).unwrap();
        for level in 0..=2 {
            for est in c.level_influences(level, InfluenceMode::exact(), R).unwrap() {
                assert_eq!(est.value, 1.0);
            }
        }
    }

    #[test]
    fn constant_gate_and_its_subtree_have_zero_influence() {
        let mut c = Circuit::uniform(3, GateFn::AND).unwrap();
        c.set_gate(2, 1, GateFn::CONST_POS);
        // the constant node itself is still read by its parent
        let l1 = c.level_influences(1, InfluenceMode::exact(), R).unwrap();
        assert_eq!(l1[1].value, 0.5);
        let l2 = c.level_influences(2, InfluenceMode::exact(), R).unwrap();
        assert_eq!(l2[2].value, 0.0);
        assert_eq!(l2[3].value, 0.0);
        assert!(l2[0].value > 0.0);
    }

    #[test]
    fn top_gate_ignoring_right_child() {
        let mut c = Circuit::uniform(2, GateFn::AND).unwrap();
        c.set_gate(1, 0, GateFn::LEFT);
        let l1 = c.level_influences(1, InfluenceMode::exact(), R).unwrap();
        assert_eq!(l1[0].value, 1.0);
        assert_eq!(l1[1].value, 0.0);
        let norm = c.normalize_constant_gates(InfluenceMode::exact()).unwrap();
        assert_eq!(norm.gate(2, 1), GateFn::CONST_POS);
        assert_eq!(norm.gate(2, 0), GateFn::AND);
        for bits in 0..16 {
            let x = unpack(bits, 4);
            assert_eq!(norm.eval(&x).unwrap(), c.eval(&x).unwrap());
        }
    }

    #[test]
    fn and_tree_influence_values() {
        // Level-1 node of an AND of two ANDs: sibling is +1 w.p. 1/4.
        let c = Circuit::uniform(2, GateFn::AND).unwrap();
        let l1 = c.level_influences(1, InfluenceMode::exact(), R).unwrap();
        assert_eq!(l1[0].value, 0.5);
        let l2 = c.level_influences(2, InfluenceMode::exact(), R).unwrap();
        // bottom AND needs x1 = +1 (1/2), top AND needs the other pair both +1 (1/4)
        assert_eq!(l2[0].value, 0.125);
    }

    #[test]
    fn single_level_reading_only_sees_parent() {
        let mut c = Circuit::uniform(2, GateFn::XOR).unwrap();
        c.set_gate(1, 0, GateFn::CONST_POS);
        let whole = c.level_influences(2, InfluenceMode::exact(), R).unwrap();
        let single = c
            .level_influences(2, InfluenceMode::exact(), InfluenceReading::SingleLevel)
            .unwrap();
        assert!(whole.iter().all(|e| e.value == 0.0));
        assert!(single.iter().all(|e| e.value == 1.0));
    }

    #[test]
    fn exact_cap_enforced() {
        let c = Circuit::uniform(5, GateFn::XOR).unwrap();
        let err = c
            .level_influences(5, InfluenceMode::Exact { cap: 1 << 20 }, R)
            .unwrap_err();
        assert!(matches!(err, Error::TooLargeForExact { bits: 32, .. }));
        assert!(c.level_influences(4, InfluenceMode::exact(), R).is_ok());
    }

    #[test]
    fn monte_carlo_is_close_and_reports_error() {
        let c = Circuit::uniform(3, GateFn::OR).unwrap();
        let exact = c.level_influences(3, InfluenceMode::exact(), R).unwrap();
        let mc = c
            .level_influences(3, InfluenceMode::MonteCarlo { samples: 20_000, seed: 1 }, R)
            .unwrap();
        for (e, m) in exact.iter().zip(&mc) {
            assert!(!m.exact);
            assert!(m.std_error > 0.0);
            assert!((e.value - m.value).abs() < 5.0 * m.std_error + 1e-9);
        }
    }

    #[test]
    fn monte_carlo_rejected_for_normalization() {
        let c = Circuit::uniform(2, GateFn::OR).unwrap();
        assert!(c
            .normalize_constant_gates(InfluenceMode::MonteCarlo { samples: 10, seed: 0 })
            .is_err());
    }

    #[test]
    fn analytic_matches_enumeration_on_random_circuits() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let all: Vec<GateFn> = GateFn::all().collect();
        for depth in 1..=4 {
            for _ in 0..10 {
                let c = Circuit::random(depth, &all, &mut rng).unwrap();
                for level in 0..=depth {
                    for reading in [R, InfluenceReading::SingleLevel] {
                        let e = c.level_influences(level, InfluenceMode::exact(), reading).unwrap();
                        let a = c.level_influences(level, InfluenceMode::Analytic, reading).unwrap();
                        for (x, y) in e.iter().zip(&a) {
                            assert!((x.value - y.value).abs() < 1e-15, "{x:?} vs {y:?}");
                        }
                    }
                }
            }
        }
    }
}
