//! Binary Merkle trees with domain-separated leaf/node hashing.
//!
//! Leaves are `H(0x00 ‖ data)`, interior nodes `H(0x01 ‖ left ‖ right)`. A tree
//! over `c` leaves has height `⌈log2 c⌉`; missing leaves repeat the last leaf
//! hash. A single leaf gives height 0 and the root is the leaf hash itself.

use serde::{Deserialize, Serialize};

use crate::codec::{Decode, DecodeError, Encode, Reader, Writer};
use crate::hash::{leaf_hash, node_hash, Hash256};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MerkleError {
    #[error("no leaves")]
    Empty,
    #[error("leaf index {index} out of range for {count} leaves")]
    IndexOutOfRange { index: u64, count: u64 },
}

pub fn height_for(count: u64) -> u32 {
    if count <= 1 {
        0
    } else {
        64 - (count - 1).leading_zeros()
    }
}

#[derive(Clone, Debug)]
pub struct MerkleTree {
    /// `levels[0]` holds the padded leaf hashes, the last level the root.
    levels: Vec<Vec<Hash256>>,
    leaf_count: u64,
}

impl MerkleTree {
    pub fn build<T: AsRef<[u8]>>(leaves: &[T]) -> Result<Self, MerkleError> {
        Self::from_leaf_hashes(leaves.iter().map(|l| leaf_hash(l.as_ref())).collect())
    }

    pub fn from_leaf_hashes(mut hashes: Vec<Hash256>) -> Result<Self, MerkleError> {
        let last = *hashes.last().ok_or(MerkleError::Empty)?;
        let leaf_count = hashes.len() as u64;
        let h = height_for(leaf_count);
        hashes.resize(1usize << h, last);
        let mut levels = vec![hashes];
        while levels.last().unwrap().len() > 1 {
            let next = levels.last().unwrap().chunks(2).map(|p| node_hash(&p[0], &p[1])).collect();
            levels.push(next);
        }
        Ok(MerkleTree { levels, leaf_count })
    }

    pub fn root(&self) -> Hash256 {
        self.levels.last().unwrap()[0]
    }

    pub fn height(&self) -> u32 {
        (self.levels.len() - 1) as u32
    }

    pub fn leaf_count(&self) -> u64 {
        self.leaf_count
    }

    pub fn prove(&self, index: u64) -> Result<MerkleProof, MerkleError> {
        if index >= self.leaf_count {
            return Err(MerkleError::IndexOutOfRange { index, count: self.leaf_count });
        }
        let mut i = index as usize;
        let mut path = Vec::with_capacity(self.height() as usize);
        for level in &self.levels[..self.levels.len() - 1] {
            path.push(level[i ^ 1]);
            i >>= 1;
        }
        Ok(MerkleProof { leaf_index: index, path })
    }
}

/// Sibling path, bottom-up. The tree height is the path length.
#[derive(Clone, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
pub struct MerkleProof {
    pub leaf_index: u64,
    pub path: Vec<Hash256>,
}

impl MerkleProof {
    pub fn tree_height(&self) -> u32 {
        self.path.len() as u32
    }

    /// Folds the path over a leaf hash; `None` when the index does not fit the height.
    pub fn compute_root(&self, leaf: Hash256) -> Option<Hash256> {
        let h = self.tree_height();
        if h < 64 && self.leaf_index >> h != 0 {
            return None;
        }
        let mut acc = leaf;
        for (level, sib) in self.path.iter().enumerate() {
            acc = if (self.leaf_index >> level) & 1 == 0 { node_hash(&acc, sib) } else { node_hash(sib, &acc) };
        }
        Some(acc)
    }

    pub fn verify(&self, root: &Hash256, leaf_data: &[u8]) -> bool {
        self.verify_leaf_hash(root, leaf_hash(leaf_data))
    }

    /// For trees whose leaves are precomputed hashes (the shard tree).
    pub fn verify_leaf_hash(&self, root: &Hash256, leaf: Hash256) -> bool {
        self.compute_root(leaf).as_ref() == Some(root)
    }
}

/// Wire form: height byte, index varint, path hashes.
impl Encode for MerkleProof {
    fn encode_to(&self, w: &mut Writer) {
        w.u8(self.path.len() as u8).varint(self.leaf_index);
        for h in &self.path {
            w.hash(h);
        }
    }
}

impl Decode for MerkleProof {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let height = r.u8()? as u32;
        let leaf_index = r.varint()?;
        if height < 64 && leaf_index >> height != 0 {
            return Err(DecodeError::Invalid("merkle proof index exceeds height"));
        }
        let path = (0..height).map(|_| r.hash()).collect::<Result<_, _>>()?;
        Ok(MerkleProof { leaf_index, path })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::blake2s_parts;

    #[test]
    fn degenerate_and_pair() {
        let t = MerkleTree::build(&[b"a"]).unwrap();
        assert_eq!(t.height(), 0);
        assert_eq!(t.root(), leaf_hash(b"a"));
        let p = t.prove(0).unwrap();
        assert!(p.path.is_empty());
        assert!(p.verify(&t.root(), b"a"));

        let t = MerkleTree::build(&[b"a", b"b"]).unwrap();
        let expect = blake2s_parts(&[&[1], &leaf_hash(b"a").0, &leaf_hash(b"b").0]);
        assert_eq!(t.root(), expect);
    }

    #[test]
    fn odd_count_duplicates_last() {
        let t3 = MerkleTree::build(&[b"a", b"b", b"c"]).unwrap();
        let t4 = MerkleTree::build(&[b"a", b"b", b"c", b"c"]).unwrap();
        assert_eq!(t3.root(), t4.root());
        assert!(t3.prove(3).is_err());
    }

    #[test]
    fn empty_rejected() {
        assert_eq!(MerkleTree::build::<&[u8]>(&[]).unwrap_err(), MerkleError::Empty);
    }

    #[test]
    fn cross_index_fails() {
        for n in 1..=8u64 {
            let leaves: Vec<Vec<u8>> = (0..n).map(|i| vec![i as u8; 3]).collect();
            let t = MerkleTree::build(&leaves).unwrap();
            for i in 0..n {
                let p = t.prove(i).unwrap();
                assert_eq!(p.tree_height(), t.height());
                for j in 0..n {
                    // padded duplicates make i and j collide only when the leaf data is equal
                    let ok = p.verify(&t.root(), &leaves[j as usize]);
                    assert_eq!(ok, i == j, "n={n} i={i} j={j}");
                }
            }
        }
    }

    #[test]
    fn wire_roundtrip() {
        let leaves: Vec<Vec<u8>> = (0..5u8).map(|i| vec![i]).collect();
        let t = MerkleTree::build(&leaves).unwrap();
        let p = t.prove(4).unwrap();
        let b = p.encode();
        assert_eq!(b[0], 3);
        assert_eq!(b.len(), 1 + 1 + 3 * 32);
        assert_eq!(MerkleProof::decode(&b).unwrap(), p);
        let mut bad = b.clone();
        bad[1] = 8;
        assert!(MerkleProof::decode(&bad).is_err());
    }
}
