//! 256-bit hashes and the two BLAKE2s flavours used by the protocol.

use std::fmt;
use std::str::FromStr;

use blake2::digest::{Mac, Update};
use blake2::{Blake2s256, Blake2sMac256, Digest};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Key for the mining hash. Keeps mining hashes disjoint from header hashes.
pub const MINING_HASH_KEY: &[u8] = b"shardpow/mining-hash/v1";

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Hash256(pub [u8; 32]);

impl Hash256 {
    /// All-zero value; doubles as the magic hash of the shard tree.
    pub const ZERO: Hash256 = Hash256([0u8; 32]);

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(Hash256(arr))
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0u8; 32]
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Flips one bit; handy for building corrupted fixtures.
    pub fn with_bit_flipped(mut self, bit: usize) -> Self {
        self.0[bit / 8 % 32] ^= 1 << (bit % 8);
        self
    }
}

impl fmt::Display for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash256({})", self.to_hex())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid hash hex: {0}")]
pub struct ParseHashError(String);

impl FromStr for Hash256 {
    type Err = ParseHashError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = hex::decode(s).map_err(|e| ParseHashError(e.to_string()))?;
        Hash256::from_slice(&bytes).ok_or_else(|| ParseHashError(format!("expected 32 bytes, got {}", bytes.len())))
    }
}

impl Serialize for Hash256 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Hash256 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Plain BLAKE2s-256.
pub fn blake2s(data: &[u8]) -> Hash256 {
    Hash256(Blake2s256::digest(data).into())
}

pub fn blake2s_parts(parts: &[&[u8]]) -> Hash256 {
    let mut h = Blake2s256::new();
    for p in parts {
        Digest::update(&mut h, p);
    }
    Hash256(h.finalize().into())
}

/// Merkle leaf hash, `H(0x00 ‖ data)`.
pub fn leaf_hash(data: &[u8]) -> Hash256 {
    blake2s_parts(&[&[0x00], data])
}

/// Merkle interior hash, `H(0x01 ‖ left ‖ right)`.
pub fn node_hash(left: &Hash256, right: &Hash256) -> Hash256 {
    blake2s_parts(&[&[0x01], &left.0, &right.0])
}

/// Keyed BLAKE2s state over a byte prefix. Cloning it lets a grinder hash only
/// the trailing nonce for each attempt.
#[derive(Clone)]
pub struct MiningHasher {
    state: Blake2sMac256,
}

impl MiningHasher {
    pub fn new(prefix: &[u8]) -> Self {
        let mut state = <Blake2sMac256 as Mac>::new_from_slice(MINING_HASH_KEY).expect("key fits blake2s");
        Update::update(&mut state, prefix);
        MiningHasher { state }
    }

    pub fn finish_with(&self, suffix: &[u8]) -> Hash256 {
        let mut s = self.state.clone();
        Update::update(&mut s, suffix);
        Hash256(s.finalize().into_bytes().into())
    }
}

/// Keyed BLAKE2s over arbitrary bytes.
pub fn mining_hash_bytes(data: &[u8]) -> Hash256 {
    MiningHasher::new(data).finish_with(&[])
}
