//! Proof-of-work targets, the Bitcoin-style compact encoding, and difficulty.
//!
//! `D = 2^256 / T`. Difficulty is carried as unsigned fixed point with 32
//! fractional bits, which is also the 16-byte weight stored in MMR nodes.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::hash::Hash256;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TargetError {
    #[error("target is zero")]
    Zero,
    #[error("target does not fit in 256 bits")]
    Overflow,
    #[error("compact target has the sign bit set")]
    Negative,
    #[error("target below 2^160 has a difficulty beyond the fixed-point range")]
    DifficultyOverflow,
}

/// 256-bit target, big-endian so that byte order equals numeric order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Target([u8; 32]);

impl Target {
    pub const MAX: Target = Target([0xff; 32]);

    pub fn from_be_bytes(bytes: [u8; 32]) -> Result<Self, TargetError> {
        if bytes == [0u8; 32] {
            return Err(TargetError::Zero);
        }
        Ok(Target(bytes))
    }

    pub fn to_be_bytes(&self) -> [u8; 32] {
        self.0
    }

    pub fn from_biguint(v: &BigUint) -> Result<Self, TargetError> {
        if v.is_zero() {
            return Err(TargetError::Zero);
        }
        let bytes = v.to_bytes_be();
        if bytes.len() > 32 {
            return Err(TargetError::Overflow);
        }
        let mut out = [0u8; 32];
        out[32 - bytes.len()..].copy_from_slice(&bytes);
        Ok(Target(out))
    }

    pub fn to_biguint(&self) -> BigUint {
        BigUint::from_bytes_be(&self.0)
    }

    /// `2^exp`, for `exp < 256`.
    pub fn pow2(exp: u32) -> Self {
        assert!(exp < 256);
        let mut out = [0u8; 32];
        out[31 - (exp / 8) as usize] = 1 << (exp % 8);
        Target(out)
    }

    /// A hash meets the target when, read as a big-endian integer, it is below T.
    pub fn is_met_by(&self, hash: &Hash256) -> bool {
        hash.0 < self.0
    }

    pub fn to_compact(&self) -> CompactTarget {
        encode_compact(self)
    }

    /// Fixed-point `floor(2^288 / T)`, i.e. `D` with 32 fractional bits.
    pub fn difficulty(&self) -> Result<Difficulty, TargetError> {
        let q = (BigUint::one() << 288u32) / self.to_biguint();
        q.to_u128().map(Difficulty).ok_or(TargetError::DifficultyOverflow)
    }

    /// Exact integer part `floor(2^256 / T)`.
    pub fn difficulty_exact(&self) -> BigUint {
        (BigUint::one() << 256u32) / self.to_biguint()
    }

    /// Target whose difficulty is `d`: `floor(2^288 / d_raw)`, capped at the maximum.
    pub fn from_difficulty(d: Difficulty) -> Target {
        if d.0 == 0 {
            return Target::MAX;
        }
        let t = (BigUint::one() << 288u32) / BigUint::from(d.0);
        if t.is_zero() {
            return Target::pow2(0);
        }
        Target::from_biguint(&t).unwrap_or(Target::MAX)
    }

    /// `T · factor`, capped at the maximum target.
    pub fn scaled(&self, factor: u32) -> Target {
        Target::from_biguint(&(self.to_biguint() * BigUint::from(factor))).unwrap_or(Target::MAX)
    }
}

impl fmt::Debug for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Target({})", hex::encode(self.0))
    }
}

/// The 32-bit "bits" form: one exponent byte, a 23-bit mantissa and a sign bit.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct CompactTarget(pub u32);

impl CompactTarget {
    pub fn to_target(self) -> Result<Target, TargetError> {
        decode_compact(self)
    }
}

impl fmt::Display for CompactTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#010x}", self.0)
    }
}

pub fn encode_compact(target: &Target) -> CompactTarget {
    let v = target.to_biguint();
    let mut size = v.to_bytes_be().len() as u32;
    let mut mantissa: u32 = if size <= 3 {
        (v.to_u32().unwrap()) << (8 * (3 - size))
    } else {
        (&v >> (8 * (size - 3))).to_u32().unwrap()
    };
    if mantissa & 0x0080_0000 != 0 {
        mantissa >>= 8;
        size += 1;
    }
    CompactTarget(mantissa | (size << 24))
}

pub fn decode_compact(c: CompactTarget) -> Result<Target, TargetError> {
    let size = c.0 >> 24;
    let mantissa = c.0 & 0x007f_ffff;
    if c.0 & 0x0080_0000 != 0 && mantissa != 0 {
        return Err(TargetError::Negative);
    }
    let v = if size <= 3 {
        BigUint::from(mantissa >> (8 * (3 - size)))
    } else {
        BigUint::from(mantissa) << (8 * (size - 3))
    };
    Target::from_biguint(&v)
}

/// Unsigned fixed point, 32 fractional bits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Difficulty(pub u128);

impl Difficulty {
    pub const FRAC_BITS: u32 = 32;
    pub const ZERO: Difficulty = Difficulty(0);
    pub const ONE: Difficulty = Difficulty(1 << 32);

    pub fn from_raw(raw: u128) -> Self {
        Difficulty(raw)
    }

    pub fn raw(self) -> u128 {
        self.0
    }

    pub fn from_integer(v: u64) -> Self {
        Difficulty((v as u128) << Self::FRAC_BITS)
    }

    pub fn from_f64(v: f64) -> Self {
        assert!(v.is_finite() && v >= 0.0, "difficulty must be finite and non-negative");
        Difficulty((v * (1u64 << Self::FRAC_BITS) as f64).round() as u128)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / (1u64 << Self::FRAC_BITS) as f64
    }

    pub fn to_le_bytes(self) -> [u8; 16] {
        self.0.to_le_bytes()
    }

    pub fn from_le_bytes(b: [u8; 16]) -> Self {
        Difficulty(u128::from_le_bytes(b))
    }

    pub fn checked_add(self, o: Difficulty) -> Option<Difficulty> {
        self.0.checked_add(o.0).map(Difficulty)
    }
}

impl Add for Difficulty {
    type Output = Difficulty;
    fn add(self, o: Difficulty) -> Difficulty {
        Difficulty(self.0.checked_add(o.0).expect("difficulty sum overflow"))
    }
}

impl AddAssign for Difficulty {
    fn add_assign(&mut self, o: Difficulty) {
        *self = *self + o;
    }
}

impl Sub for Difficulty {
    type Output = Difficulty;
    fn sub(self, o: Difficulty) -> Difficulty {
        Difficulty(self.0.checked_sub(o.0).expect("difficulty underflow"))
    }
}

impl Sum for Difficulty {
    fn sum<I: Iterator<Item = Difficulty>>(iter: I) -> Difficulty {
        iter.fold(Difficulty::ZERO, |a, b| a + b)
    }
}

impl fmt::Debug for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Difficulty({})", self.to_f64())
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn bitcoin_genesis_bits() {
        let t = Target::from_biguint(&(big(0xffff) << 208u32)).unwrap();
        assert_eq!(t.to_compact(), CompactTarget(0x1d00ffff));
        assert_eq!(CompactTarget(0x1d00ffff).to_target().unwrap(), t);
        let t224 = Target::from_biguint(&(big(0xffff) << 224u32)).unwrap();
        assert_eq!(t224.to_compact(), CompactTarget(0x1f00ffff));
    }

    // Frozen from an independent arithmetic reimplementation (Python ints).
    #[test]
    fn compact_fixtures() {
        let cases: [(BigUint, u32); 6] = [
            (big(1), 0x01010000),
            (BigUint::one() << 255u32, 0x21008000),
            ((BigUint::one() << 256u32) - 1u32, 0x2100ffff),
            (big(12345678901234567890), 0x0900ab54),
            (big(0x80), 0x02008000),
            (big(1 << 20), 0x03100000),
        ];
        for (v, bits) in cases {
            assert_eq!(Target::from_biguint(&v).unwrap().to_compact(), CompactTarget(bits), "v={v:x}");
        }
    }

    #[test]
    fn small_values_are_exact() {
        for v in [1u64, 2, 0x7f, 0x80, 0xff, 0x1234, 0x7fffff, 0x800000] {
            let t = Target::from_biguint(&big(v)).unwrap();
            assert_eq!(t.to_compact().to_target().unwrap(), t, "v={v:#x}");
        }
        assert_eq!(Target::pow2(0).to_compact(), CompactTarget(0x01010000));
    }

    #[test]
    fn top_of_range_roundtrip() {
        let t = Target::pow2(255);
        let back = t.to_compact().to_target().unwrap().to_biguint();
        assert_eq!(back, t.to_biguint());
        let m = Target::MAX;
        let back = m.to_compact().to_target().unwrap().to_biguint();
        let err = (m.to_biguint() - &back) << 15u32;
        assert!(err < m.to_biguint());
    }

    #[test]
    fn decode_rejects_bad_forms() {
        assert_eq!(CompactTarget(0x01800001).to_target(), Err(TargetError::Negative));
        assert_eq!(CompactTarget(0x22010000).to_target(), Err(TargetError::Overflow));
        assert_eq!(CompactTarget(0x00000000).to_target(), Err(TargetError::Zero));
        assert!(Target::from_biguint(&BigUint::zero()).is_err());
        assert!(Target::from_biguint(&(BigUint::one() << 256u32)).is_err());
    }

    #[test]
    fn difficulty_examples() {
        assert_eq!(Target::pow2(255).difficulty().unwrap(), Difficulty::from_integer(2));
        assert_eq!(Target::pow2(208).difficulty().unwrap(), Difficulty::from_integer(1 << 48));
        assert_eq!(Target::pow2(208).difficulty_exact(), BigUint::one() << 48u32);
        let d = Target::MAX.difficulty().unwrap();
        assert_eq!(d.raw() >> 32, 1);
        assert!((d.to_f64() - 1.0).abs() < 1e-9);
        assert_eq!(Target::pow2(159).difficulty(), Err(TargetError::DifficultyOverflow));
    }

    #[test]
    fn from_difficulty_inverts() {
        for d in [1u64, 2, 15, 600, 4096, 1 << 40] {
            let t = Target::from_difficulty(Difficulty::from_integer(d));
            let back = t.difficulty().unwrap();
            let rel = (back.to_f64() - d as f64).abs() / d as f64;
            assert!(rel < 1e-9, "d={d} back={back}");
        }
        assert_eq!(Target::from_difficulty(Difficulty::ZERO), Target::MAX);
    }

    #[test]
    fn scaled_caps() {
        assert_eq!(Target::pow2(249).scaled(80).to_biguint(), big(80) << 249u32);
        assert_eq!(Target::pow2(252).scaled(80), Target::MAX);
    }

    #[test]
    fn is_met_by_compares_numerically() {
        let t = Target::pow2(248);
        let mut h = [0u8; 32];
        h[0] = 0x00;
        h[1] = 0xff;
        assert!(t.is_met_by(&Hash256(h)));
        h[0] = 0x01;
        assert!(!t.is_met_by(&Hash256(h)));
    }
}
