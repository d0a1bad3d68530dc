use std::fmt;
use std::ops::{Mul, Neg};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A single `±1` value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(i8)]
pub enum Bit {
    Neg = -1,
    Pos = 1,
}

impl Bit {
    pub fn from_i8(v: i8) -> Option<Bit> {
        match v {
            1 => Some(Bit::Pos),
            -1 => Some(Bit::Neg),
            _ => None,
        }
    }

    pub fn from_i64(v: i64) -> Option<Bit> {
        match v {
            1 => Some(Bit::Pos),
            -1 => Some(Bit::Neg),
            _ => None,
        }
    }

    /// `true` maps to `+1`.
    pub fn from_bool(b: bool) -> Bit {
        if b {
            Bit::Pos
        } else {
            Bit::Neg
        }
    }

    /// Sign of a real number; zero is rejected.
    pub fn from_sign(v: f64) -> Option<Bit> {
        if v > 0.0 {
            Some(Bit::Pos)
        } else if v < 0.0 {
            Some(Bit::Neg)
        } else {
            None
        }
    }

    pub fn value(self) -> i8 {
        self as i8
    }

    pub fn to_f64(self) -> f64 {
        self as i8 as f64
    }

    pub fn is_pos(self) -> bool {
        self == Bit::Pos
    }
}

impl Mul for Bit {
    type Output = Bit;

    fn mul(self, rhs: Bit) -> Bit {
        Bit::from_bool(self == rhs)
    }
}

impl Neg for Bit {
    type Output = Bit;

    fn neg(self) -> Bit {
        match self {
            Bit::Pos => Bit::Neg,
            Bit::Neg => Bit::Pos,
        }
    }
}

/// Serialized as the integer `1` or `-1`.
impl Serialize for Bit {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.value())
    }
}

impl<'de> Deserialize<'de> for Bit {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Bit, D::Error> {
        let v = i64::deserialize(d)?;
        Bit::from_i64(v).ok_or_else(|| serde::de::Error::custom(format!("{v} is not 1 or -1")))
    }
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Parses a comma or whitespace separated list of `1`/`-1` values.
pub fn parse_bits(s: &str) -> Result<Vec<Bit>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.trim()
                .parse::<i64>()
                .ok()
                .and_then(Bit::from_i64)
                .ok_or_else(|| Error::Parse(format!("expected 1 or -1, got {t:?}")))
        })
        .collect()
}

/// The four input patterns of a two-input gate, in canonical order.
pub const PATTERNS: [(Bit, Bit); 4] = [
    (Bit::Neg, Bit::Neg),
    (Bit::Neg, Bit::Pos),
    (Bit::Pos, Bit::Neg),
    (Bit::Pos, Bit::Pos),
];

/// Index of a pattern in the canonical order `(-,-), (-,+), (+,-), (+,+)`.
#[inline]
pub fn pattern_index(a: Bit, b: Bit) -> usize {
    ((a.is_pos() as usize) << 1) | (b.is_pos() as usize)
}

/// A two-input Boolean gate over `{±1}`.
///
/// Stored as a 4-bit mask: bit `k` is set iff the output on the `k`-th
/// canonical pattern is `+1`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GateFn(u8);

impl GateFn {
    pub const CONST_NEG: GateFn = GateFn(0b0000);
    pub const CONST_POS: GateFn = GateFn(0b1111);
    pub const AND: GateFn = GateFn(0b1000);
    pub const OR: GateFn = GateFn(0b1110);
    pub const NAND: GateFn = GateFn(0b0111);
    pub const NOR: GateFn = GateFn(0b0001);
    /// The product gate `z1 * z2`, the parity building block.
    pub const XOR: GateFn = GateFn(0b1001);
    /// `-(z1 * z2)`.
    pub const XNOR: GateFn = GateFn(0b0110);
    /// Passes the left input through.
    pub const LEFT: GateFn = GateFn(0b1100);
    /// Passes the right input through.
    pub const RIGHT: GateFn = GateFn(0b1010);

    /// Builds the gate with the given outputs on `(-,-), (-,+), (+,-), (+,+)`.
    pub fn from_table(table: [Bit; 4]) -> GateFn {
        let mask = table
            .iter()
            .enumerate()
            .fold(0u8, |m, (k, b)| m | ((b.is_pos() as u8) << k));
        GateFn(mask)
    }

    pub fn from_mask(mask: u8) -> GateFn {
        GateFn(mask & 0b1111)
    }

    pub fn mask(self) -> u8 {
        self.0
    }

    /// All 16 gates, ordered by mask.
    pub fn all() -> impl Iterator<Item = GateFn> {
        (0u8..16).map(GateFn)
    }

    pub fn table(self) -> [Bit; 4] {
        [0, 1, 2, 3].map(|k| Bit::from_bool(self.0 >> k & 1 == 1))
    }

    #[inline]
    pub fn eval(self, a: Bit, b: Bit) -> Bit {
        Bit::from_bool(self.eval_index(pattern_index(a, b)))
    }

    #[inline]
    pub fn eval_index(self, idx: usize) -> bool {
        self.0 >> idx & 1 == 1
    }

    pub fn is_constant(self) -> bool {
        self.0 == 0 || self.0 == 0b1111
    }

    /// Output negated on every pattern.
    pub fn negated(self) -> GateFn {
        GateFn(!self.0 & 0b1111)
    }

    /// The gate `(a, b) -> self(sa * a, sb * b)`.
    pub fn with_input_signs(self, sa: Bit, sb: Bit) -> GateFn {
        GateFn::from_table(PATTERNS.map(|(a, b)| self.eval(sa * a, sb * b)))
    }

    /// True when the output depends on the left input for some right input.
    pub fn depends_on_left(self) -> bool {
        self.eval_index(0) != self.eval_index(2) || self.eval_index(1) != self.eval_index(3)
    }

    pub fn depends_on_right(self) -> bool {
        self.eval_index(0) != self.eval_index(1) || self.eval_index(2) != self.eval_index(3)
    }

    pub fn name(self) -> Option<&'static str> {
        Some(match self {
            GateFn::AND => "AND",
            GateFn::OR => "OR",
            GateFn::NAND => "NAND",
            GateFn::NOR => "NOR",
            GateFn::XOR => "XOR",
            GateFn::XNOR => "XNOR",
            GateFn::LEFT => "LEFT",
            GateFn::RIGHT => "RIGHT",
            GateFn::CONST_POS => "ONE",
            GateFn::CONST_NEG => "MINUS_ONE",
            _ => return None,
        })
    }
}

impl fmt::Display for GateFn {
    /// Four characters over `+`/`-` in canonical pattern order.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.table() {
            f.write_str(if b.is_pos() { "+" } else { "-" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for GateFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.name() {
            Some(n) => write!(f, "GateFn({self} {n})"),
            None => write!(f, "GateFn({self})"),
        }
    }
}

impl FromStr for GateFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<GateFn> {
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != 4 {
            return Err(Error::Parse(format!("gate table {s:?} must have 4 characters")));
        }
        let mut table = [Bit::Pos; 4];
        for (slot, c) in table.iter_mut().zip(chars) {
            *slot = match c {
                '+' => Bit::Pos,
                '-' => Bit::Neg,
                _ => return Err(Error::Parse(format!("gate table {s:?} has invalid character {c:?}"))),
            };
        }
        Ok(GateFn::from_table(table))
    }
}

impl Serialize for GateFn {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for GateFn {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<GateFn, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Bit::{Neg as N, Pos as P};

    #[test]
    fn tables_of_named_gates() {
        assert_eq!(GateFn::from_table([N, N, N, P]), GateFn::AND);
        assert_eq!(GateFn::from_table([P, P, P, P]), GateFn::CONST_POS);
        assert_eq!(GateFn::from_table([P, N, N, P]), GateFn::XOR);
        assert_eq!(GateFn::XOR.negated(), GateFn::from_table([N, P, P, N]));
        assert_eq!(GateFn::AND.to_string(), "---+");
        assert_eq!(GateFn::OR.to_string(), "-+++");
    }

    #[test]
    fn eval_examples() {
        assert_eq!(GateFn::AND.eval(P, P), P);
        assert_eq!(GateFn::OR.eval(N, N), N);
        assert_eq!(GateFn::XOR.eval(P, N), N);
        for (a, b) in PATTERNS {
            assert_eq!(GateFn::XOR.eval(a, b), a * b);
            assert_eq!(GateFn::LEFT.eval(a, b), a);
            assert_eq!(GateFn::RIGHT.eval(a, b), b);
            assert_eq!(GateFn::NAND.eval(a, b), -GateFn::AND.eval(a, b));
            assert_eq!(GateFn::NOR.eval(a, b), -GateFn::OR.eval(a, b));
        }
    }

    #[test]
    fn sixteen_distinct_gates_round_trip() {
        let all: Vec<GateFn> = GateFn::all().collect();
        assert_eq!(all.len(), 16);
        for g in all {
            assert_eq!(GateFn::from_table(g.table()), g);
            assert_eq!(g.to_string().parse::<GateFn>().unwrap(), g);
            let json = serde_json::to_string(&g).unwrap();
            assert_eq!(serde_json::from_str::<GateFn>(&json).unwrap(), g);
        }
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!("+-+".parse::<GateFn>().is_err());
        assert!("+-x+".parse::<GateFn>().is_err());
        assert!(parse_bits("1,0").is_err());
        assert_eq!(parse_bits("1, -1 1").unwrap(), vec![P, N, P]);
    }

    #[test]
    fn dependence_flags() {
        assert!(!GateFn::LEFT.depends_on_right());
        assert!(GateFn::LEFT.depends_on_left());
        assert!(!GateFn::CONST_POS.depends_on_left());
        assert!(GateFn::AND.depends_on_left() && GateFn::AND.depends_on_right());
    }
}
