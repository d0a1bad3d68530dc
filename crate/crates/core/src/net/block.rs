use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NeuralGate;
use crate::circuit::{Bit, Circuit};
use crate::error::{Error, Result};

/// The neural gates standing in for circuit layer `layer`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub layer: usize,
    pub gates: Vec<NeuralGate>,
}

/// `1 / (4 sqrt(2) k)`, the largest initialization scale allowed by default.
pub fn max_init_scale(k: usize) -> f64 {
    1.0 / (4.0 * std::f64::consts::SQRT_2 * k as f64)
}

/// Random block for layer `layer`. Scales above [`max_init_scale`] need
/// `allow_large_scale`, in which case a warning is returned.
pub fn init_block(
    layer: usize,
    k: usize,
    scale: f64,
    seed: u64,
    allow_large_scale: bool,
) -> Result<(Block, Option<String>)> {
    if layer == 0 || k == 0 {
        return Err(Error::InvalidRange("layer and width must be positive".into()));
    }
    if !(scale.is_finite() && scale >= 0.0) {
        return Err(Error::InvalidRange(format!("init scale {scale} is invalid")));
    }
    let bound = max_init_scale(k);
    let mut warning = None;
    if scale > bound {
        if !allow_large_scale {
            return Err(Error::ScaleTooLarge { scale, bound });
        }
        warning = Some(format!("init scale {scale} exceeds the bound {bound}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gates = (0..1usize << (layer - 1))
        .map(|_| NeuralGate::random(k, scale, &mut rng))
        .collect();
    Ok((Block { layer, gates }, warning))
}

impl Block {
    pub fn width(&self) -> usize {
        self.gates.first().map_or(0, |g| g.width())
    }

    /// Gate `j` applied to inputs `2j, 2j+1`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != 2 * self.gates.len() {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.gates.len(),
                got: x.len(),
            });
        }
        Ok(self
            .gates
            .iter()
            .zip(x.chunks_exact(2))
            .map(|(g, p)| g.forward([p[0], p[1]]))
            .collect())
    }

    /// Planted gates of one circuit layer.
    pub fn plant(c: &Circuit, layer: usize) -> Block {
        Block {
            layer,
            gates: c.layer(layer).iter().map(|&g| NeuralGate::plant(g)).collect(),
        }
    }
}

/// Average pooling.
pub fn pool(z: &[f64]) -> f64 {
    z.iter().sum::<f64>() / z.len() as f64
}

/// Blocks trained so far, bottom first: `blocks[0]` is layer `depth`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayeredNet {
    pub depth: usize,
    /// Labels were negated before training; predictions undo it.
    #[serde(default)]
    pub label_flipped: bool,
    blocks: Vec<Block>,
}

impl LayeredNet {
    pub fn new(depth: usize) -> LayeredNet {
        LayeredNet {
            depth,
            label_flipped: false,
            blocks: Vec::new(),
        }
    }

    /// Every layer planted from the circuit.
    pub fn planted(c: &Circuit) -> LayeredNet {
        let mut net = LayeredNet::new(c.depth());
        for layer in (1..=c.depth()).rev() {
            net.push_block(Block::plant(c, layer)).expect("layers match");
        }
        net
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn n_trained(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_complete(&self) -> bool {
        self.blocks.len() == self.depth
    }

    /// Level of the current output boundary.
    pub fn boundary_level(&self) -> usize {
        self.depth - self.blocks.len()
    }

    /// Block for circuit layer `layer`, if trained.
    pub fn block(&self, layer: usize) -> Option<&Block> {
        if layer == 0 || layer > self.depth {
            return None;
        }
        self.blocks.get(self.depth - layer)
    }

    /// Appends the block for the next layer up.
    pub fn push_block(&mut self, b: Block) -> Result<()> {
        let level = self.boundary_level();
        if level == 0 {
            return Err(Error::InvalidRange("network is already complete".into()));
        }
        if b.layer != level || b.gates.len() != 1 << (level - 1) {
            return Err(Error::DimensionMismatch {
                expected: 1 << (level - 1),
                got: b.gates.len(),
            });
        }
        self.blocks.push(b);
        Ok(())
    }

    /// Outputs at the current boundary.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != 1 << self.depth {
            return Err(Error::DimensionMismatch {
                expected: 1 << self.depth,
                got: x.len(),
            });
        }
        self.forward_to(x, self.blocks.len())
    }

    /// Outputs after the first `n_blocks` blocks.
    pub fn forward_to(&self, x: &[f64], n_blocks: usize) -> Result<Vec<f64>> {
        let mut cur = x.to_vec();
        for b in &self.blocks[..n_blocks.min(self.blocks.len())] {
            cur = b.forward(&cur)?;
        }
        Ok(cur)
    }

    pub fn forward_bits(&self, x: &[Bit]) -> Result<Vec<f64>> {
        let xf: Vec<f64> = x.iter().map(|b| b.to_f64()).collect();
        self.forward(&xf)
    }

    /// Boundary outputs and their average.
    pub fn forward_pooled(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let z = self.forward(x)?;
        let p = pool(&z);
        Ok((z, p))
    }

    /// Output of the complete net in the original label orientation.
    pub fn predict(&self, x: &[Bit]) -> Result<f64> {
        if !self.is_complete() {
            return Err(Error::PreconditionViolated("network is not fully trained".into()));
        }
        let out = self.forward_bits(x)?[0];
        Ok(if self.label_flipped { -out } else { out })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<LayeredNet> {
        let net: LayeredNet = serde_json::from_str(s)?;
        let mut check = LayeredNet::new(net.depth);
        for b in net.blocks.iter().cloned() {
            if b.gates.iter().any(|g| g.w.len() != g.v.len() || g.w.is_empty()) {
                return Err(Error::Parse("gate with mismatched W and v".into()));
            }
            check.push_block(b)?;
        }
        Ok(net)
    }
}
