//! Beacon and shard block records and their canonical byte layouts.
//!
//! BC header layout (little-endian integers):
//!
//! | field            | encoding                         |
//! |------------------|----------------------------------|
//! | version          | u32                              |
//! | prev_commitment  | 32 bytes                         |
//! | tx_merkle_root   | 32 bytes                         |
//! | shard field      | u32, `(shard_count << 1) | vote` |
//! | tree_encoding    | bit-length varint + MSB-first bytes |
//! | shard_tree_root  | 32 bytes                         |
//! | timestamp        | u64                              |
//! | bits             | u32 compact target               |
//! | nonce            | u64 (last, so grinding reuses the prefix state) |
//!
//! SC header: version u32, prev_commitment, tx_merkle_root, mm_number u32,
//! timestamp u64, bits u32. It carries no nonce; its work comes from the
//! container in the body.

use serde::{Deserialize, Serialize};

use crate::amount::Amount;
use crate::bits::BitString;
use crate::codec::{Decode, DecodeError, Encode, Reader, Writer};
use crate::hash::{blake2s, Hash256, MiningHasher};
use crate::merkle::MerkleProof;
use crate::shard_tree::MergedMiningProof;
use crate::target::{CompactTarget, Target};

/// Serialized transactions in one block body may not exceed this.
pub const MAX_TX_BYTES: usize = 24 * 1024;

pub const PROTOCOL_VERSION: u32 = 1;

/// Shard identifier, `1..=N`. Shard `i` occupies leaf `i - 1` of the shard tree.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShardId(pub u32);

impl ShardId {
    pub fn leaf_index(self) -> u32 {
        assert!(self.0 >= 1, "shard ids start at 1");
        self.0 - 1
    }

    pub fn from_leaf_index(i: u32) -> Self {
        ShardId(i + 1)
    }
}

impl std::fmt::Display for ShardId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Shard count with the expansion vote packed into the low bit.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct ShardField {
    pub shard_count: u32,
    pub vote: bool,
}

impl ShardField {
    pub fn new(shard_count: u32, vote: bool) -> Self {
        assert!(shard_count < 1 << 31);
        ShardField { shard_count, vote }
    }

    pub fn pack(self) -> u32 {
        (self.shard_count << 1) | self.vote as u32
    }

    pub fn unpack(v: u32) -> Self {
        ShardField { shard_count: v >> 1, vote: v & 1 == 1 }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct BcHeader {
    pub version: u32,
    pub prev_commitment: Hash256,
    pub tx_merkle_root: Hash256,
    pub shards: ShardField,
    pub tree_encoding: BitString,
    pub shard_tree_root: Hash256,
    pub timestamp: u64,
    pub bits: CompactTarget,
    pub nonce: u64,
}

impl BcHeader {
    pub fn header_hash(&self) -> Hash256 {
        blake2s(&self.encode())
    }

    /// Serialization minus the trailing nonce.
    pub fn mining_prefix(&self) -> Vec<u8> {
        let mut b = self.encode();
        b.truncate(b.len() - 8);
        b
    }

    pub fn mining_hash(&self) -> Hash256 {
        MiningHasher::new(&self.mining_prefix()).finish_with(&self.nonce.to_le_bytes())
    }

    /// Tries nonces `start, start+1, ...` and returns the first whose mining hash
    /// meets `target`, with the number of attempts made.
    pub fn grind(&self, target: &Target, start: u64, max_attempts: u64) -> Option<(u64, Hash256, u64)> {
        let hasher = MiningHasher::new(&self.mining_prefix());
        let mut nonce = start;
        for attempt in 1..=max_attempts {
            let h = hasher.finish_with(&nonce.to_le_bytes());
            if target.is_met_by(&h) {
                return Some((nonce, h, attempt));
            }
            nonce = nonce.wrapping_add(1);
        }
        None
    }
}

impl Encode for BcHeader {
    fn encode_to(&self, w: &mut Writer) {
        w.u32(self.version).hash(&self.prev_commitment).hash(&self.tx_merkle_root).u32(self.shards.pack());
        self.tree_encoding.encode_to(w);
        w.hash(&self.shard_tree_root).u64(self.timestamp).u32(self.bits.0).u64(self.nonce);
    }
}

impl Decode for BcHeader {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(BcHeader {
            version: r.u32()?,
            prev_commitment: r.hash()?,
            tx_merkle_root: r.hash()?,
            shards: ShardField::unpack(r.u32()?),
            tree_encoding: BitString::decode_from(r)?,
            shard_tree_root: r.hash()?,
            timestamp: r.u64()?,
            bits: CompactTarget(r.u32()?),
            nonce: r.u64()?,
        })
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ScHeader {
    pub version: u32,
    pub prev_commitment: Hash256,
    pub tx_merkle_root: Hash256,
    pub mm_number: u32,
    pub timestamp: u64,
    pub bits: CompactTarget,
}

impl ScHeader {
    pub const ENCODED_LEN: usize = 4 + 32 + 32 + 4 + 8 + 4;

    pub fn header_hash(&self) -> Hash256 {
        blake2s(&self.encode())
    }
}

impl Encode for ScHeader {
    fn encode_to(&self, w: &mut Writer) {
        w.u32(self.version)
            .hash(&self.prev_commitment)
            .hash(&self.tx_merkle_root)
            .u32(self.mm_number)
            .u64(self.timestamp)
            .u32(self.bits.0);
    }
}

impl Decode for ScHeader {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(ScHeader {
            version: r.u32()?,
            prev_commitment: r.hash()?,
            tx_merkle_root: r.hash()?,
            mm_number: r.u32()?,
            timestamp: r.u64()?,
            bits: CompactTarget(r.u32()?),
        })
    }
}

/// Simplified transfer; account ids are opaque strings. `shard_id` 0 is the beacon.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Transaction {
    pub sender: String,
    pub receiver: String,
    pub amount: Amount,
    pub fee: Amount,
    pub shard_id: u32,
}

impl Encode for Transaction {
    fn encode_to(&self, w: &mut Writer) {
        w.bytes(self.sender.as_bytes())
            .bytes(self.receiver.as_bytes())
            .u128(self.amount.0)
            .u128(self.fee.0)
            .u32(self.shard_id);
    }
}

impl Decode for Transaction {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let s = |b: &[u8]| String::from_utf8(b.to_vec()).map_err(|_| DecodeError::Invalid("account id utf-8"));
        Ok(Transaction {
            sender: s(r.bytes()?)?,
            receiver: s(r.bytes()?)?,
            amount: Amount(r.u128()?),
            fee: Amount(r.u128()?),
            shard_id: r.u32()?,
        })
    }
}

pub fn encode_transactions(txs: &[Transaction], w: &mut Writer) {
    w.varint(txs.len() as u64);
    for t in txs {
        t.encode_to(w);
    }
}

pub fn decode_transactions(r: &mut Reader<'_>) -> Result<Vec<Transaction>, DecodeError> {
    // smallest transaction: two empty ids, amounts, shard id
    let n = r.len_prefix(2 + 16 + 16 + 4)?;
    (0..n).map(|_| Transaction::decode_from(r)).collect()
}

/// Byte size of the transaction section as it is limited by consensus.
pub fn transactions_size(txs: &[Transaction]) -> usize {
    txs.iter().map(|t| t.encode().len()).sum()
}

/// Merkle root over serialized transactions; an empty list commits to zero.
pub fn transactions_root(txs: &[Transaction]) -> Hash256 {
    if txs.is_empty() {
        return Hash256::ZERO;
    }
    let leaves: Vec<Vec<u8>> = txs.iter().map(|t| t.encode()).collect();
    crate::merkle::MerkleTree::build(&leaves).expect("nonempty").root()
}

#[derive(Clone, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
pub struct BcBody {
    pub transactions: Vec<Transaction>,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct BcBlock {
    pub header: BcHeader,
    pub body: BcBody,
}

impl Encode for BcBlock {
    fn encode_to(&self, w: &mut Writer) {
        self.header.encode_to(w);
        encode_transactions(&self.body.transactions, w);
    }
}

impl Decode for BcBlock {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let header = BcHeader::decode_from(r)?;
        let transactions = decode_transactions(r)?;
        Ok(BcBlock { header, body: BcBody { transactions } })
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ScBody {
    pub bc_container: BcHeader,
    pub shard_proof: MerkleProof,
    pub mm_proof: MergedMiningProof,
    pub transactions: Vec<Transaction>,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ScBlock {
    pub header: ScHeader,
    pub body: ScBody,
}

impl Encode for ScBlock {
    fn encode_to(&self, w: &mut Writer) {
        self.header.encode_to(w);
        self.body.bc_container.encode_to(w);
        self.body.shard_proof.encode_to(w);
        self.body.mm_proof.encode_to(w);
        encode_transactions(&self.body.transactions, w);
    }
}

impl Decode for ScBlock {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let header = ScHeader::decode_from(r)?;
        let bc_container = BcHeader::decode_from(r)?;
        let shard_proof = MerkleProof::decode_from(r)?;
        let mm_proof = MergedMiningProof::decode_from(r)?;
        let transactions = decode_transactions(r)?;
        Ok(ScBlock { header, body: ScBody { bc_container, shard_proof, mm_proof, transactions } })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn fixture_bc() -> BcHeader {
        BcHeader {
            version: 1,
            prev_commitment: Hash256([0x11; 32]),
            tx_merkle_root: Hash256([0x22; 32]),
            shards: ShardField::new(8, true),
            tree_encoding: "101".parse().unwrap(),
            shard_tree_root: Hash256([0x33; 32]),
            timestamp: 1_700_000_000,
            bits: CompactTarget(0x1d00ffff),
            nonce: 42,
        }
    }

    fn fixture_sc() -> ScHeader {
        ScHeader {
            version: 1,
            prev_commitment: Hash256([0x44; 32]),
            tx_merkle_root: Hash256([0x55; 32]),
            mm_number: 4,
            timestamp: 1_700_000_015,
            bits: CompactTarget(0x1f00ffff),
        }
    }

    #[test]
    fn shard_field_packing() {
        assert_eq!(ShardField::new(8, true).pack(), 17);
        assert_eq!(ShardField::unpack(16), ShardField::new(8, false));
    }

    #[test]
    fn header_roundtrip() {
        let h = fixture_bc();
        assert_eq!(BcHeader::decode(&h.encode()).unwrap(), h);
        let s = fixture_sc();
        let b = s.encode();
        assert_eq!(b.len(), ScHeader::ENCODED_LEN);
        assert_eq!(ScHeader::decode(&b).unwrap(), s);
    }

    #[test]
    fn nonce_is_last_and_changes_hashes() {
        let mut h = fixture_bc();
        let a = h.encode();
        assert_eq!(&a[a.len() - 8..], &42u64.to_le_bytes());
        let (hh, mh) = (h.header_hash(), h.mining_hash());
        h.nonce ^= 1;
        assert_ne!(h.header_hash(), hh);
        assert_ne!(h.mining_hash(), mh);
        assert_eq!(fixture_bc().header_hash(), hh);
    }

    #[test]
    fn grind_finds_valid_nonce() {
        let mut h = fixture_bc();
        let t = Target::pow2(250);
        let (nonce, hash, attempts) = h.grind(&t, 0, 100_000).unwrap();
        assert!(attempts >= 1);
        h.nonce = nonce;
        assert_eq!(h.mining_hash(), hash);
        assert!(t.is_met_by(&hash));
    }

    #[test]
    fn transaction_roundtrip() {
        let t = Transaction {
            sender: "alice".into(),
            receiver: "bob".into(),
            amount: Amount(5),
            fee: Amount(1),
            shard_id: 3,
        };
        assert_eq!(Transaction::decode(&t.encode()).unwrap(), t);
    }
}
