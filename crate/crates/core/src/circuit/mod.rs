//! Tree-structured Boolean circuits over `{±1}`.
//!
//! A circuit of depth `d` reads `n = 2^d` input bits. Gates are grouped in
//! layers `1..=d`: layer `i` holds `2^(i-1)` gates, layer `d` reads the raw
//! input pairs and layer `1` is the single output gate.
//!
//! Node values are addressed by *level*: level `d` is the input vector,
//! level `i - 1` is the output of layer `i`, and level `0` is the circuit
//! output. All positions are 0-based.

mod build;
mod gate;
mod influence;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use build::{fm_formula, fm_leaf, fm_shape, FmShape};
pub use gate::{parse_bits, pattern_index, Bit, GateFn, PATTERNS};
pub use influence::{InfluenceEstimate, InfluenceMode, InfluenceReading, DEFAULT_EXACT_CAP};

/// Largest depth supported by the packed (`u64`) evaluation path.
pub const MAX_PACKED_DEPTH: usize = 6;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "CircuitFile", into = "CircuitFile")]
pub struct Circuit {
    layers: Vec<Vec<GateFn>>,
}

/// On-disk form: `{"depth": d, "gates": [[layer 1], [layer 2], ...]}`.
#[derive(Serialize, Deserialize)]
struct CircuitFile {
    depth: usize,
    gates: Vec<Vec<GateFn>>,
}

impl TryFrom<CircuitFile> for Circuit {
    type Error = Error;

    fn try_from(f: CircuitFile) -> Result<Circuit> {
        if f.gates.len() != f.depth {
            return Err(Error::Parse(format!(
                "depth {} but {} gate layers",
                f.depth,
                f.gates.len()
            )));
        }
        Circuit::from_layers(f.gates)
    }
}

impl From<Circuit> for CircuitFile {
    fn from(c: Circuit) -> CircuitFile {
        CircuitFile {
            depth: c.depth(),
            gates: c.layers,
        }
    }
}

impl Circuit {
    /// `layers[i - 1]` is layer `i` and must hold `2^(i-1)` gates.
    pub fn from_layers(layers: Vec<Vec<GateFn>>) -> Result<Circuit> {
        if layers.is_empty() {
            return Err(Error::InvalidRange("circuit depth must be positive".into()));
        }
        for (idx, layer) in layers.iter().enumerate() {
            let expected = 1usize << idx;
            if layer.len() != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    got: layer.len(),
                });
            }
        }
        Ok(Circuit { layers })
    }

    /// Every gate set to `g`.
    pub fn uniform(depth: usize, g: GateFn) -> Result<Circuit> {
        Circuit::from_layers((0..depth).map(|i| vec![g; 1 << i]).collect())
    }

    /// Gates drawn uniformly from `choices`.
    pub fn random<R: Rng + ?Sized>(depth: usize, choices: &[GateFn], rng: &mut R) -> Result<Circuit> {
        if choices.is_empty() {
            return Err(Error::InvalidRange("no gate choices".into()));
        }
        Circuit::from_layers(
            (0..depth)
                .map(|i| {
                    (0..1usize << i)
                        .map(|_| choices[rng.gen_range(0..choices.len())])
                        .collect()
                })
                .collect(),
        )
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Number of inputs, `2^depth`.
    pub fn n_inputs(&self) -> usize {
        1 << self.depth()
    }

    /// Gates of layer `layer` (1-based, 1 = output gate).
    pub fn layer(&self, layer: usize) -> &[GateFn] {
        &self.layers[layer - 1]
    }

    pub fn layers(&self) -> &[Vec<GateFn>] {
        &self.layers
    }

    pub fn gate(&self, layer: usize, position: usize) -> GateFn {
        self.layers[layer - 1][position]
    }

    pub fn set_gate(&mut self, layer: usize, position: usize, g: GateFn) {
        self.layers[layer - 1][position] = g;
    }

    /// The gate whose output is node `position` at `level` (`level < depth`).
    pub fn node_gate(&self, level: usize, position: usize) -> GateFn {
        self.layers[level][position]
    }

    /// Applies layer `layer` to a vector of length `2^layer`.
    pub fn level_map(&self, layer: usize, x: &[Bit]) -> Result<Vec<Bit>> {
        if layer == 0 || layer > self.depth() {
            return Err(Error::IndexOutOfRange {
                index: layer,
                len: self.depth() + 1,
            });
        }
        check_len(x, 1 << layer)?;
        Ok(self.apply_layer(layer, x))
    }

    fn apply_layer(&self, layer: usize, x: &[Bit]) -> Vec<Bit> {
        self.layers[layer - 1]
            .iter()
            .zip(x.chunks_exact(2))
            .map(|(g, p)| g.eval(p[0], p[1]))
            .collect()
    }

    /// Maps a vector at level `from_level` up to level `to_level`
    /// (`to_level <= from_level`).
    pub fn propagate(&self, from_level: usize, to_level: usize, x: &[Bit]) -> Result<Vec<Bit>> {
        if from_level > self.depth() || to_level > from_level {
            return Err(Error::InvalidRange(format!(
                "cannot propagate level {from_level} to level {to_level} in depth {}",
                self.depth()
            )));
        }
        check_len(x, 1 << from_level)?;
        let mut cur = x.to_vec();
        for layer in (to_level + 1..=from_level).rev() {
            cur = self.apply_layer(layer, &cur);
        }
        Ok(cur)
    }

    /// The circuit output `h_C(x)`.
    pub fn eval(&self, x: &[Bit]) -> Result<Bit> {
        Ok(self.propagate(self.depth(), 0, x)?[0])
    }

    /// Propagates a packed level vector (bit `k` set iff node `k` is `+1`).
    ///
    /// Requires `from_level <= MAX_PACKED_DEPTH`.
    #[inline]
    pub fn propagate_packed(&self, from_level: usize, to_level: usize, mut bits: u64) -> u64 {
        debug_assert!(from_level <= MAX_PACKED_DEPTH);
        for layer in (to_level + 1..=from_level).rev() {
            let gates = &self.layers[layer - 1];
            let mut out = 0u64;
            for (j, g) in gates.iter().enumerate() {
                let idx = ((bits >> (2 * j) & 1) << 1 | (bits >> (2 * j + 1) & 1)) as usize;
                out |= (g.eval_index(idx) as u64) << j;
            }
            bits = out;
        }
        bits
    }

    #[inline]
    pub fn eval_packed(&self, bits: u64) -> bool {
        self.propagate_packed(self.depth(), 0, bits) & 1 == 1
    }

    /// Gates that are not constant `+1`.
    pub fn count_nonconstant(&self) -> usize {
        self.layers
            .iter()
            .flatten()
            .filter(|g| **g != GateFn::CONST_POS)
            .count()
    }

    /// True when every gate belongs to `{AND, OR, NAND, NOR}`.
    pub fn is_and_or(&self) -> bool {
        self.first_non_and_or().is_none()
    }

    pub(crate) fn first_non_and_or(&self) -> Option<(usize, usize, GateFn)> {
        for (li, layer) in self.layers.iter().enumerate() {
            for (j, g) in layer.iter().enumerate() {
                if ![GateFn::AND, GateFn::OR, GateFn::NAND, GateFn::NOR].contains(g) {
                    return Some((li + 1, j, *g));
                }
            }
        }
        None
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("circuit serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Circuit> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Packs a bit vector (length at most 64) into a mask.
pub fn pack(x: &[Bit]) -> u64 {
    debug_assert!(x.len() <= 64);
    x.iter()
        .enumerate()
        .fold(0u64, |m, (k, b)| m | ((b.is_pos() as u64) << k))
}

pub fn unpack(bits: u64, len: usize) -> Vec<Bit> {
    (0..len).map(|k| Bit::from_bool(bits >> k & 1 == 1)).collect()
}

fn check_len(x: &[Bit], expected: usize) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: x.len(),
        });
    }
    Ok(())
}
