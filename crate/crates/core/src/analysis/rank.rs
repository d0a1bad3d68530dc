use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_integer::Integer;
use num_traits::{FromPrimitive, One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{fm_formula, fm_shape, Bit};
use crate::error::{Error, Result};

/// Largest half-input dimension for value matrices (128 × 128).
pub const MAX_HALF_DIM: usize = 7;
pub const MAX_RANK_WIDTH: usize = 32;
pub const MAX_RANK_B: i64 = 7;
/// Relative singular-value threshold of the numeric rank.
pub const SVD_RELATIVE_THRESHOLD: f64 = 1e-8;

/// `g(x, y) = sum_i u_i relu(<w_i, x> + <v_i, y> + b_i)` with integer
/// first-layer weights in `[-B, B]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizedShallowNet {
    pub half_dim: usize,
    pub bound: i64,
    pub w: Vec<Vec<i64>>,
    pub v: Vec<Vec<i64>>,
    pub b: Vec<i64>,
    pub u: Vec<f64>,
}

impl QuantizedShallowNet {
    pub fn new(half_dim: usize, bound: i64, w: Vec<Vec<i64>>, v: Vec<Vec<i64>>, b: Vec<i64>, u: Vec<f64>) -> Result<Self> {
        let k = u.len();
        if k == 0 || w.len() != k || v.len() != k || b.len() != k {
            return Err(Error::ShapeMismatch("w, v, b and u need one entry per unit".into()));
        }
        if w.iter().chain(&v).any(|r| r.len() != half_dim) {
            return Err(Error::ShapeMismatch(format!("weight rows must have length {half_dim}")));
        }
        if bound < 0 || w.iter().chain(&v).flatten().chain(&b).any(|x| x.abs() > bound) {
            return Err(Error::InvalidRange(format!("first-layer entries must lie in [-{bound}, {bound}]")));
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidRange("output weights must be finite".into()));
        }
        Ok(QuantizedShallowNet { half_dim, bound, w, v, b, u })
    }

    /// Integer weights uniform in `[-B, B]`, output weights uniform in `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(half_dim: usize, k: usize, bound: i64, rng: &mut R) -> QuantizedShallowNet {
        let row = |rng: &mut R| (0..half_dim).map(|_| rng.gen_range(-bound..=bound)).collect::<Vec<i64>>();
        let w = (0..k).map(|_| row(rng)).collect();
        let v = (0..k).map(|_| row(rng)).collect();
        let b = (0..k).map(|_| rng.gen_range(-bound..=bound)).collect();
        let u = (0..k).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        QuantizedShallowNet { half_dim, bound, w, v, b, u }
    }

    pub fn width(&self) -> usize {
        self.u.len()
    }

    /// `4 B k n'`.
    pub fn rank_bound(&self) -> u64 {
        4 * self.bound as u64 * self.width() as u64 * self.half_dim as u64
    }

    /// Pre-activation of unit `i`.
    pub fn preactivation(&self, i: usize, x: &[Bit], y: &[Bit]) -> i64 {
        dot(&self.w[i], x) + dot(&self.v[i], y) + self.b[i]
    }

    pub fn eval(&self, x: &[Bit], y: &[Bit]) -> f64 {
        (0..self.width())
            .map(|i| self.u[i] * self.preactivation(i, x, y).max(0) as f64)
            .sum()
    }

    /// `M_i = [relu(<w_i,x> + <v_i,y> + b_i)]`.
    pub fn unit_matrix(&self, i: usize) -> Result<Vec<Vec<i64>>> {
        let vecs = half_inputs(self.half_dim)?;
        Ok(vecs
            .iter()
            .map(|x| vecs.iter().map(|y| self.preactivation(i, x, y).max(0)).collect())
            .collect())
    }
}

fn dot(w: &[i64], x: &[Bit]) -> i64 {
    w.iter().zip(x).map(|(w, b)| w * b.value() as i64).sum()
}

/// `{±1}^n'` in lexicographic order with `-1 < +1`, first coordinate most
/// significant.
pub fn half_inputs(half_dim: usize) -> Result<Vec<Vec<Bit>>> {
    if half_dim > MAX_HALF_DIM {
        return Err(Error::TooLarge(format!("half dimension {half_dim} exceeds {MAX_HALF_DIM}")));
    }
    Ok((0..1usize << half_dim)
        .map(|idx| {
            (0..half_dim)
                .map(|t| Bit::from_bool(idx >> (half_dim - 1 - t) & 1 == 1))
                .collect()
        })
        .collect())
}

/// `[f(x, y)]` with rows indexed by `x` and columns by `y`.
pub fn build_value_matrix(half_dim: usize, f: impl Fn(&[Bit], &[Bit]) -> f64) -> Result<Vec<Vec<f64>>> {
    let vecs = half_inputs(half_dim)?;
    Ok(vecs.iter().map(|x| vecs.iter().map(|y| f(x, y)).collect()).collect())
}

/// A square `±1` matrix with power-of-two side.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignMatrix {
    pub half_dim: usize,
    pub entries: Vec<Vec<Bit>>,
}

impl SignMatrix {
    pub fn from_fn(half_dim: usize, f: impl Fn(&[Bit], &[Bit]) -> Bit) -> Result<SignMatrix> {
        let vecs = half_inputs(half_dim)?;
        Ok(SignMatrix {
            half_dim,
            entries: vecs.iter().map(|x| vecs.iter().map(|y| f(x, y)).collect()).collect(),
        })
    }

    /// Signs of a real matrix; zero maps to `+1`.
    pub fn from_values(half_dim: usize, m: &[Vec<f64>]) -> Result<SignMatrix> {
        let side = 1usize << half_dim;
        if m.len() != side || m.iter().any(|r| r.len() != side) {
            return Err(Error::ShapeMismatch(format!("expected a {side} × {side} matrix")));
        }
        Ok(SignMatrix {
            half_dim,
            entries: m
                .iter()
                .map(|r| r.iter().map(|v| Bit::from_bool(*v >= 0.0)).collect())
                .collect(),
        })
    }

    /// The matrix of `f_m`, whose inputs have `m^3` bits per side.
    pub fn fm(m: usize) -> Result<SignMatrix> {
        fm_shape(m)?;
        SignMatrix::from_fn(m * m * m, |x, y| fm_formula(m, x, y))
    }

    pub fn to_f64(&self) -> Vec<Vec<f64>> {
        self.entries.iter().map(|r| r.iter().map(|b| b.to_f64()).collect()).collect()
    }
}

/// Rank over the rationals. Each row is scaled to integers by the lcm of
/// its denominators, then eliminated fraction-free.
pub fn exact_rank(m: &[Vec<BigRational>]) -> usize {
    let ints = m
        .iter()
        .map(|row| {
            let l = row.iter().fold(BigInt::one(), |acc, q| acc.lcm(q.denom()));
            row.iter().map(|q| q.numer() * (&l / q.denom())).collect()
        })
        .collect();
    bareiss_rank(ints)
}

/// Fraction-free (Bareiss) elimination; every division is exact.
pub fn bareiss_rank(mut a: Vec<Vec<BigInt>>) -> usize {
    let rows = a.len();
    let cols = a.first().map_or(0, |r| r.len());
    let mut prev = BigInt::one();
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let Some(piv) = (rank..rows).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(rank, piv);
        let (top, rest) = a.split_at_mut(rank + 1);
        let p = &top[rank];
        for row in rest.iter_mut() {
            let f = std::mem::take(&mut row[col]);
            for j in col + 1..cols {
                let v = (&row[j] * &p[col] - &f * &p[j]) / &prev;
                row[j] = v;
            }
        }
        prev = top[rank][col].clone();
        rank += 1;
    }
    rank
}

pub fn exact_rank_i64(m: &[Vec<i64>]) -> usize {
    bareiss_rank(m.iter().map(|r| r.iter().map(|&v| BigInt::from(v)).collect()).collect())
}

/// Every finite `f64` converted exactly.
pub fn exact_rank_f64(m: &[Vec<f64>]) -> Result<usize> {
    let q = m
        .iter()
        .map(|r| {
            r.iter()
                .map(|&v| BigRational::from_f64(v).ok_or_else(|| Error::InvalidRange(format!("{v} is not finite"))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(exact_rank(&q))
}

/// Number of singular values above `SVD_RELATIVE_THRESHOLD · σ_max`.
pub fn numeric_rank(m: &[Vec<f64>]) -> usize {
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 {
        return 0;
    }
    let dm = DMatrix::from_fn(rows, cols, |i, j| m[i][j]);
    let sv = dm.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > SVD_RELATIVE_THRESHOLD * smax).count()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitRankRecord {
    pub unit: usize,
    pub rank: usize,
    /// Constant on every block of rows with equal `<w_i, x>` and columns
    /// with equal `<v_i, y>`.
    pub blockwise_constant: bool,
    /// `<w_i, x> + <v_i, y>` lies in `[-2Bn', 2Bn']`.
    pub argument_in_range: bool,
    pub rank_within_unit_bound: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub half_dim: usize,
    pub width: usize,
    pub bound_b: i64,
    pub rank_exact: usize,
    pub rank_numeric: usize,
    /// `4 B k n'`.
    pub bound: u64,
    pub sum_unit_ranks: usize,
    pub units: Vec<UnitRankRecord>,
    pub ranks_agree: bool,
    pub structure_pass: bool,
    pub pass: bool,
}

/// Rank of the value matrix against `4Bkn'`, with the per-unit structure
/// the bound is built from.
pub fn rank_bound_check(net: &QuantizedShallowNet) -> Result<RankReport> {
    if net.width() > MAX_RANK_WIDTH || net.bound > MAX_RANK_B {
        return Err(Error::TooLarge(format!(
            "width {} and B = {} must not exceed {MAX_RANK_WIDTH} and {MAX_RANK_B}",
            net.width(),
            net.bound
        )));
    }
    let n = net.half_dim;
    let vecs = half_inputs(n)?;
    let two_bn = 2 * net.bound * n as i64;
    let unit_bound = 4 * net.bound as usize * n;
    let mut units = Vec::new();
    let mut unit_mats = Vec::new();
    for i in 0..net.width() {
        let mi = net.unit_matrix(i)?;
        let row_key: Vec<i64> = vecs.iter().map(|x| dot(&net.w[i], x)).collect();
        let col_key: Vec<i64> = vecs.iter().map(|y| dot(&net.v[i], y)).collect();
        let mut blocks: BTreeMap<(i64, i64), i64> = BTreeMap::new();
        let mut constant = true;
        let mut in_range = true;
        for (r, rk) in row_key.iter().enumerate() {
            for (c, ck) in col_key.iter().enumerate() {
                in_range &= (rk + ck).abs() <= two_bn;
                let v = *blocks.entry((*rk, *ck)).or_insert(mi[r][c]);
                constant &= v == mi[r][c];
            }
        }
        let rank = exact_rank_i64(&mi);
        units.push(UnitRankRecord {
            unit: i,
            rank,
            blockwise_constant: constant,
            argument_in_range: in_range,
            rank_within_unit_bound: rank <= unit_bound,
        });
        unit_mats.push(mi);
    }
    let side = 1usize << n;
    let mut exact = vec![vec![BigRational::zero(); side]; side];
    for (i, mi) in unit_mats.iter().enumerate() {
        let ui = BigRational::from_f64(net.u[i]).expect("finite by construction");
        for (er, mr) in exact.iter_mut().zip(mi) {
            for (e, &v) in er.iter_mut().zip(mr) {
                if v != 0 {
                    *e += &ui * BigRational::from_integer(BigInt::from(v));
                }
            }
        }
    }
    let rank_exact = exact_rank(&exact);
    let m = build_value_matrix(n, |x, y| net.eval(x, y))?;
    let rank_numeric = numeric_rank(&m);
    let sum_unit_ranks = units.iter().map(|u| u.rank).sum();
    let structure_pass = units
        .iter()
        .all(|u| u.blockwise_constant && u.argument_in_range && u.rank_within_unit_bound);
    let bound = net.rank_bound();
    Ok(RankReport {
        half_dim: n,
        width: net.width(),
        bound_b: net.bound,
        rank_exact,
        rank_numeric,
        bound,
        sum_unit_ranks,
        ranks_agree: rank_exact == rank_numeric,
        structure_pass,
        pass: rank_exact as u64 <= bound && rank_exact <= sum_unit_ranks,
        units,
    })
}
