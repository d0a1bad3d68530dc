use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineLoss {
    /// `max(0, 1 - y f)`, zero slope at margin exactly 1.
    Hinge,
    /// `ln(1 + exp(-y f))`.
    Logistic,
}

impl BaselineLoss {
    fn value(self, f: f64, y: f64) -> f64 {
        match self {
            BaselineLoss::Hinge => (1.0 - y * f).max(0.0),
            BaselineLoss::Logistic => {
                let z = -y * f;
                if z > 0.0 {
                    z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p()
                }
            }
        }
    }

    fn slope(self, f: f64, y: f64) -> f64 {
        match self {
            BaselineLoss::Hinge => {
                if y * f < 1.0 {
                    -y
                } else {
                    0.0
                }
            }
            BaselineLoss::Logistic => {
                let z = -y * f;
                -y / (1.0 + (-z).exp())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    #[default]
    FanIn,
    /// Weights uniform in `±sqrt(6/(fan_in + fan_out))`, zero biases.
    Glorot,
}

/// `f(x) = W2 · relu(W1 x + b1) + b2`.
///
/// All parameters live in one flat vector: `W1` row-major (`h × n`), then
/// `b1`, `W2`, `b2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp2 {
    pub n: usize,
    pub h: usize,
    pub params: Vec<f64>,
}

impl Mlp2 {
    pub fn n_params(n: usize, h: usize) -> usize {
        h * n + 2 * h + 1
    }

    pub fn zeros(n: usize, h: usize) -> Mlp2 {
        Mlp2 {
            n,
            h,
            params: vec![0.0; Mlp2::n_params(n, h)],
        }
    }

    pub fn init<R: Rng + ?Sized>(n: usize, h: usize, scheme: InitScheme, rng: &mut R) -> Mlp2 {
        let mut m = Mlp2::zeros(n, h);
        let (a1, a2, bias) = match scheme {
            InitScheme::FanIn => (1.0 / (n as f64).sqrt(), 1.0 / (h as f64).sqrt(), true),
            InitScheme::Glorot => ((6.0 / (n + h) as f64).sqrt(), (6.0 / (h + 1) as f64).sqrt(), false),
        };
        let (w1_end, b1_end, w2_end) = (h * n, h * n + h, h * n + 2 * h);
        for (i, p) in m.params.iter_mut().enumerate() {
            let is_bias = (w1_end..b1_end).contains(&i) || i == w2_end;
            let a = if i < b1_end { a1 } else { a2 };
            *p = if is_bias && !bias { 0.0 } else { rng.gen_range(-a..=a) };
        }
        m
    }

    pub fn from_parts(w1: Vec<f64>, b1: Vec<f64>, w2: Vec<f64>, b2: f64) -> Result<Mlp2> {
        let h = b1.len();
        if h == 0 || w2.len() != h || w1.len() % h != 0 {
            return Err(Error::ShapeMismatch(format!(
                "W1 has {} entries, b1 {}, W2 {}",
                w1.len(),
                h,
                w2.len()
            )));
        }
        let n = w1.len() / h;
        let mut params = w1;
        params.extend(b1);
        params.extend(w2);
        params.push(b2);
        Ok(Mlp2 { n, h, params })
    }

    pub fn w1(&self) -> &[f64] {
        &self.params[..self.h * self.n]
    }

    pub fn b1(&self) -> &[f64] {
        &self.params[self.h * self.n..self.h * self.n + self.h]
    }

    pub fn w2(&self) -> &[f64] {
        &self.params[self.h * self.n + self.h..self.h * self.n + 2 * self.h]
    }

    pub fn b2(&self) -> f64 {
        self.params[self.h * self.n + 2 * self.h]
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn preactivations(&self, x: &[f64]) -> Vec<f64> {
        self.w1()
            .chunks_exact(self.n)
            .zip(self.b1())
            .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let pre = self.preactivations(x);
        Ok(pre
            .iter()
            .zip(self.w2())
            .map(|(z, v)| if *z > 0.0 { v * z } else { 0.0 })
            .sum::<f64>()
            + self.b2())
    }

    pub fn loss(&self, xs: &[Vec<f64>], ys: &[f64], loss: BaselineLoss) -> Result<f64> {
        self.check_batch(xs, ys)?;
        let mut total = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            total += loss.value(self.forward(x)?, y);
        }
        Ok(total / xs.len() as f64)
    }

    fn check_batch(&self, xs: &[Vec<f64>], ys: &[f64]) -> Result<()> {
        if xs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if xs.len() != ys.len() {
            return Err(Error::ShapeMismatch(format!("{} inputs, {} labels", xs.len(), ys.len())));
        }
        Ok(())
    }

    /// Mean loss over the batch and its gradient in the flat layout.
    /// ReLU has slope zero at zero.
    pub fn loss_and_grad(&self, xs: &[Vec<f64>], ys: &[f64], loss: BaselineLoss) -> Result<(f64, Vec<f64>)> {
        self.check_batch(xs, ys)?;
        let (n, h) = (self.n, self.h);
        let inv = 1.0 / xs.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut total = 0.0;
        let w2 = self.w2().to_vec();
        for (x, &y) in xs.iter().zip(ys) {
            self.check(x)?;
            let pre = self.preactivations(x);
            let f = pre
                .iter()
                .zip(&w2)
                .map(|(z, v)| if *z > 0.0 { v * z } else { 0.0 })
                .sum::<f64>()
                + self.b2();
            total += loss.value(f, y);
            let s = loss.slope(f, y) * inv;
            if s == 0.0 {
                continue;
            }
            let (gw1, rest) = grad.split_at_mut(h * n);
            let (gb1, rest) = rest.split_at_mut(h);
            let (gw2, gb2) = rest.split_at_mut(h);
            gb2[0] += s;
            for r in 0..h {
                if pre[r] > 0.0 {
                    gw2[r] += s * pre[r];
                    let back = s * w2[r];
                    gb1[r] += back;
                    for (g, xi) in gw1[r * n..(r + 1) * n].iter_mut().zip(x) {
                        *g += back * xi;
                    }
                }
            }
        }
        Ok((total * inv, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_examples() {
        let mut z = Mlp2::zeros(3, 4);
        let last = z.params.len() - 1;
        z.params[last] = 0.7;
        assert_eq!(z.forward(&[1.0, -1.0, 1.0]).unwrap(), 0.7);
        let m = Mlp2::from_parts(vec![1.0, 0.0], vec![0.0], vec![1.0], 0.0).unwrap();
        assert_eq!(m.forward(&[-1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(m.forward(&[2.0, 1.0]).unwrap(), 2.0);
        assert!(m.forward(&[1.0]).is_err());
    }

    #[test]
    fn init_schemes_respect_their_ranges() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let m = Mlp2::init(32, 8, InitScheme::FanIn, &mut rng);
        assert!(m.w1().iter().chain(m.b1()).all(|w| w.abs() <= 1.0 / 32f64.sqrt()));
        assert!(m.w2().iter().all(|w| w.abs() <= 1.0 / 8f64.sqrt()));
        assert!(m.b1().iter().any(|b| *b != 0.0));
        let g = Mlp2::init(32, 8, InitScheme::Glorot, &mut rng);
        assert!(g.b1().iter().all(|b| *b == 0.0) && g.b2() == 0.0);
        assert!(g.w1().iter().all(|w| w.abs() <= (6.0f64 / 40.0).sqrt()));
    }

    #[test]
    fn logistic_is_stable_for_large_margins() {
        assert!(BaselineLoss::Logistic.value(1e3, -1.0).is_finite());
        assert!((BaselineLoss::Logistic.value(1e3, -1.0) - 1e3).abs() < 1e-9);
        assert!(BaselineLoss::Logistic.value(-1e3, -1.0) < 1e-300);
    }
}
