//! Bit strings, serialized MSB-first with an explicit bit length.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::codec::{Decode, DecodeError, Encode, Reader, Writer};

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitString {
    bits: Vec<bool>,
}

impl BitString {
    pub fn new() -> Self {
        BitString::default()
    }

    pub fn from_bools(bits: Vec<bool>) -> Self {
        BitString { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn push(&mut self, b: bool) {
        self.bits.push(b);
    }

    pub fn get(&self, i: usize) -> Option<bool> {
        self.bits.get(i).copied()
    }

    pub fn flip(&mut self, i: usize) {
        self.bits[i] = !self.bits[i];
    }

    pub fn as_bools(&self) -> &[bool] {
        &self.bits
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().copied()
    }

    pub fn extend(&mut self, other: &BitString) {
        self.bits.extend_from_slice(&other.bits);
    }

    pub fn slice(&self, start: usize, end: usize) -> BitString {
        BitString { bits: self.bits[start..end].to_vec() }
    }

    /// Packs MSB-first, zero-padded to whole bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.bits.len().div_ceil(8)];
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                out[i / 8] |= 0x80 >> (i % 8);
            }
        }
        out
    }

    /// Inverse of [`to_bytes`](Self::to_bytes); padding bits must be zero.
    pub fn from_bytes(bytes: &[u8], bit_len: usize) -> Result<Self, DecodeError> {
        if bytes.len() != bit_len.div_ceil(8) {
            return Err(DecodeError::Invalid("bit string byte length"));
        }
        let bits: Vec<bool> = (0..bit_len).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0).collect();
        for i in bit_len..bytes.len() * 8 {
            if bytes[i / 8] & (0x80 >> (i % 8)) != 0 {
                return Err(DecodeError::Invalid("nonzero bit string padding"));
            }
        }
        Ok(BitString { bits })
    }
}

impl Encode for BitString {
    fn encode_to(&self, w: &mut Writer) {
        w.varint(self.bits.len() as u64);
        w.raw(&self.to_bytes());
    }
}

impl Decode for BitString {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let bit_len = r.varint()?;
        let byte_len = bit_len.div_ceil(8);
        if byte_len > r.remaining() as u64 {
            return Err(DecodeError::UnexpectedEnd);
        }
        BitString::from_bytes(r.take(byte_len as usize)?, bit_len as usize)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString(\"{self}\")")
    }
}

#[derive(Debug, thiserror::Error)]
#[error("bit strings contain only '0' and '1'")]
pub struct ParseBitsError;

impl FromStr for BitString {
    type Err = ParseBitsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(ParseBitsError),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(BitString::from_bools)
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}
