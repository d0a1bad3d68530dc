use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{Bit, GateFn, PATTERNS};
use crate::error::{Error, Result};

/// Tolerance for reading a gate output as saturated.
pub const SATURATION_TOLERANCE: f64 = 1e-9;

#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

#[inline]
pub fn hard_tanh(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// `x -> hard_tanh(sum_l v_l relu(<w_l, x>))` on two inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuralGate {
    pub w: Vec<[f64; 2]>,
    pub v: Vec<Bit>,
}

/// Which pattern kept a gate from being read as Boolean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NotSaturated {
    pub pattern: usize,
    pub value: f64,
}

impl std::fmt::Display for NotSaturated {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (a, b) = PATTERNS[self.pattern];
        write!(f, "output {} at pattern ({a}, {b}) is not saturated", self.value)
    }
}

pub fn pattern_vec(k: usize) -> [f64; 2] {
    let (a, b) = PATTERNS[k];
    [a.to_f64(), b.to_f64()]
}

impl NeuralGate {
    pub fn new(w: Vec<[f64; 2]>, v: Vec<Bit>) -> Result<NeuralGate> {
        if w.is_empty() {
            return Err(Error::InvalidRange("a neural gate needs at least one unit".into()));
        }
        if w.len() != v.len() {
            return Err(Error::DimensionMismatch {
                expected: w.len(),
                got: v.len(),
            });
        }
        Ok(NeuralGate { w, v })
    }

    pub fn zeros(k: usize) -> NeuralGate {
        NeuralGate {
            w: vec![[0.0; 2]; k],
            v: vec![Bit::Pos; k],
        }
    }

    /// `W` uniform in `[-scale, scale]`, `v` uniform signs.
    pub fn random<R: Rng + ?Sized>(k: usize, scale: f64, rng: &mut R) -> NeuralGate {
        let mut w = Vec::with_capacity(k);
        let mut v = Vec::with_capacity(k);
        for _ in 0..k {
            w.push([rng.gen_range(-scale..=scale), rng.gen_range(-scale..=scale)]);
            v.push(Bit::from_bool(rng.gen()));
        }
        NeuralGate { w, v }
    }

    /// A width-4 gate realizing `g` with saturated outputs: unit `p` fires
    /// only on pattern `p` (the patterns are pairwise orthogonal or
    /// opposite) and carries the sign `g(p)`.
    pub fn plant(g: GateFn) -> NeuralGate {
        NeuralGate {
            w: (0..4).map(pattern_vec).collect(),
            v: (0..4).map(|k| Bit::from_bool(g.eval_index(k))).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.w.len()
    }

    #[inline]
    pub fn preactivation(&self, l: usize, p: [f64; 2]) -> f64 {
        self.w[l][0] * p[0] + self.w[l][1] * p[1]
    }

    /// Value before the output clamp.
    #[inline]
    pub fn hidden(&self, p: [f64; 2]) -> f64 {
        let mut s = 0.0;
        for l in 0..self.w.len() {
            s += self.v[l].to_f64() * relu(self.preactivation(l, p));
        }
        s
    }

    #[inline]
    pub fn forward(&self, p: [f64; 2]) -> f64 {
        hard_tanh(self.hidden(p))
    }

    /// The Boolean gate read off the four patterns.
    pub fn extract(&self) -> std::result::Result<GateFn, NotSaturated> {
        let outs = self.extract_on(&[0, 1, 2, 3])?;
        Ok(GateFn::from_table(outs.map(|o| o.expect("all patterns read"))))
    }

    /// Outputs on the listed patterns; `None` elsewhere.
    pub fn extract_on(&self, patterns: &[usize]) -> std::result::Result<[Option<Bit>; 4], NotSaturated> {
        let mut out = [None; 4];
        for &k in patterns {
            let value = self.forward(pattern_vec(k));
            if (value.abs() - 1.0).abs() > SATURATION_TOLERANCE {
                return Err(NotSaturated { pattern: k, value });
            }
            out[k] = Some(Bit::from_bool(value > 0.0));
        }
        Ok(out)
    }
}
