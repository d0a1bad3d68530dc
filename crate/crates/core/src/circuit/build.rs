//! Constructions of named circuits.

use std::collections::BTreeSet;

use super::{Bit, Circuit, GateFn};
use crate::error::{Error, Result};

/// Builds a circuit where every node combines its children with `op(level)`
/// when both are live, forwards the live child when only one is, and is the
/// constant `+1` gate when neither is.
fn build_pruned(
    depth: usize,
    live: impl Fn(usize, usize) -> bool,
    op: impl Fn(usize) -> GateFn,
) -> Result<Circuit> {
    let layers = (0..depth)
        .map(|level| {
            (0..1usize << level)
                .map(|pos| match (live(level + 1, 2 * pos), live(level + 1, 2 * pos + 1)) {
                    (true, true) => op(level),
                    (true, false) => GateFn::LEFT,
                    (false, true) => GateFn::RIGHT,
                    (false, false) => GateFn::CONST_POS,
                })
                .collect()
        })
        .collect();
    Circuit::from_layers(layers)
}

impl Circuit {
    /// A circuit computing `prod_{j in relevant} x_j` (0-based indices).
    ///
    /// The bottom layer multiplies or selects the relevant inputs of each
    /// pair. Above it, nodes whose subtree holds no relevant input are the
    /// constant `+1` gate and their parents forward the other child, so
    /// every non-constant node carries a non-empty sub-parity.
    pub fn parity(depth: usize, relevant: &[usize]) -> Result<Circuit> {
        if relevant.is_empty() {
            return Err(Error::EmptyIndexSet);
        }
        let n = 1usize << depth;
        let set: BTreeSet<usize> = relevant.iter().copied().collect();
        if let Some(&bad) = set.iter().find(|&&j| j >= n) {
            return Err(Error::IndexOutOfRange { index: bad, len: n });
        }
        let live = |level: usize, pos: usize| {
            let span = 1usize << (depth - level);
            set.range(pos * span..(pos + 1) * span).next().is_some()
        };
        build_pruned(depth, live, |_| GateFn::XOR)
    }

    /// A tree circuit computing `f_m(x, y) = AND_i OR_j (x_ij AND y_ij)`.
    ///
    /// Input layout is given by [`fm_leaf`]. Unused slots are padded with
    /// constant gates and the nodes above them forward their live child.
    pub fn fm(m: usize) -> Result<Circuit> {
        let shape = fm_shape(m)?;
        let depth = shape.depth;
        let live_slot = |slot: usize| {
            let group = slot >> shape.term_slots_log;
            let local = slot & ((1 << shape.term_slots_log) - 1);
            group < m && local < shape.terms_per_group
        };
        let live = |level: usize, pos: usize| {
            if level == depth {
                live_slot(pos / 2)
            } else {
                live_slot(pos << (depth - 1 - level))
            }
        };
        let op = |level: usize| {
            if level == depth - 1 || level < shape.group_slots_log {
                GateFn::AND
            } else {
                GateFn::OR
            }
        };
        build_pruned(depth, live, op)
    }
}

/// Geometry of the `f_m` circuit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FmShape {
    pub m: usize,
    pub terms_per_group: usize,
    /// `ceil(log2(m^2))`: depth of the OR tree inside one group.
    pub term_slots_log: usize,
    /// `ceil(log2(m))`: depth of the AND tree over groups.
    pub group_slots_log: usize,
    pub depth: usize,
}

pub fn fm_shape(m: usize) -> Result<FmShape> {
    if m == 0 {
        return Err(Error::InvalidRange("m must be positive".into()));
    }
    let ceil_log2 = |v: usize| (usize::BITS - (v - 1).leading_zeros()) as usize;
    let a = if m == 1 { 0 } else { ceil_log2(m * m) };
    let b = if m == 1 { 0 } else { ceil_log2(m) };
    let depth = 1 + a + b;
    if depth > 30 {
        return Err(Error::InvalidRange(format!("m = {m} is too large")));
    }
    Ok(FmShape {
        m,
        terms_per_group: m * m,
        term_slots_log: a,
        group_slots_log: b,
        depth,
    })
}

/// Leaf positions of `(x_ij, y_ij)` in the `f_m` circuit (0-based `i`, `j`).
pub fn fm_leaf(shape: &FmShape, i: usize, j: usize) -> (usize, usize) {
    let slot = (i << shape.term_slots_log) | j;
    (2 * slot, 2 * slot + 1)
}

/// `f_m` evaluated directly; `x` and `y` are indexed by `i * m^2 + j`.
pub fn fm_formula(m: usize, x: &[Bit], y: &[Bit]) -> Bit {
    let mm = m * m;
    Bit::from_bool((0..m).all(|i| (0..mm).any(|j| x[i * mm + j].is_pos() && y[i * mm + j].is_pos())))
}
