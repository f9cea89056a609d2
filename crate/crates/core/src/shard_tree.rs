//! The shard Merkle tree and merged-mining proofs.
//!
//! Leaf `i` (0-based) holds the header hash of shard `i + 1`'s candidate, or is
//! undefined when the miner did not include that shard. A parent with exactly
//! one undefined child uses the magic hash (all zeros) in its place; a parent
//! of two undefined children is itself undefined.
//!
//! Nodes fall into three kinds: *magic* (undefined, parent mixed), *regular*
//! (every leaf below defined, parent not), and *orange* (mixed). The orange
//! nodes form a full binary tree whose leaves are the magic and regular nodes.
//! A magic node on level `i` certifies `2^i` unmined leaves, which bounds the
//! number of merge-mined shards.

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::codec::{Decode, DecodeError, Encode, Reader, Writer};
use crate::hash::{node_hash, Hash256};
use crate::merkle::MerkleProof;
use crate::tree_encoding::{decode_orange, encode_orange, EncodingError, FullTree, OrangeLeaf, OrangeSubtree};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ShardTreeError {
    #[error("leaf {leaf} out of range for {shard_count} shards")]
    OutOfRange { leaf: u32, shard_count: u32 },
    #[error("no leaf defined")]
    NoLeaves,
    #[error("leaf {0} is not in the mined set")]
    NotMined(u32),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MmProofError {
    #[error("leaf {leaf} out of range for {shard_count} shards")]
    OutOfRange { leaf: u32, shard_count: u32 },
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("orange subtree deeper than the tree height")]
    TooDeep,
    #[error("orange subtree is not canonical (sibling leaves of the same kind)")]
    NotCanonical,
    #[error("expected {expected} regular hashes, got {got}")]
    HashCount { expected: usize, got: usize },
    #[error("root mismatch")]
    RootMismatch,
    #[error("root is the magic hash: nothing was merge-mined")]
    MagicRoot,
    #[error("empty proof needs a power-of-two shard count")]
    EmptyProofNotAllowed,
    #[error("leaf is not below a regular node")]
    NotUnderRegular,
    #[error("mm_number {claimed} differs from the proven bound {bound}")]
    WrongMmNumber { claimed: u32, bound: u64 },
    #[error("proof carries mm_number {proof}, header says {header}")]
    ClaimMismatch { proof: u32, header: u32 },
}

/// `⌈log2 N⌉`.
pub fn tree_height(shard_count: u32) -> u32 {
    crate::merkle::height_for(shard_count as u64)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShardMerkleTree {
    shard_count: u32,
    /// `levels[0]` are the `2^h` leaves, `levels[h]` the root.
    levels: Vec<Vec<Option<Hash256>>>,
    full: Vec<Vec<bool>>,
}

impl ShardMerkleTree {
    /// Builds from `(leaf index, header hash)` pairs.
    pub fn build(leaves: &[(u32, Hash256)], shard_count: u32) -> Result<Self, ShardTreeError> {
        if shard_count == 0 || leaves.is_empty() {
            return Err(ShardTreeError::NoLeaves);
        }
        let h = tree_height(shard_count);
        let mut base = vec![None; 1usize << h];
        for &(leaf, hash) in leaves {
            if leaf >= shard_count {
                return Err(ShardTreeError::OutOfRange { leaf, shard_count });
            }
            base[leaf as usize] = Some(hash);
        }
        let mut t = ShardMerkleTree { shard_count, levels: vec![base], full: Vec::new() };
        t.full.push(t.levels[0].iter().map(Option::is_some).collect());
        for _ in 0..h {
            let (hs, fs) = {
                let below = t.levels.last().unwrap();
                let fb = t.full.last().unwrap();
                let hs: Vec<_> = below.chunks(2).map(|p| combine(p[0], p[1])).collect();
                let fs: Vec<_> = fb.chunks(2).map(|p| p[0] && p[1]).collect();
                (hs, fs)
            };
            t.levels.push(hs);
            t.full.push(fs);
        }
        Ok(t)
    }

    pub fn height(&self) -> u32 {
        (self.levels.len() - 1) as u32
    }

    pub fn shard_count(&self) -> u32 {
        self.shard_count
    }

    pub fn root(&self) -> Hash256 {
        self.levels.last().unwrap()[0].expect("built trees have a defined leaf")
    }

    pub fn leaf(&self, leaf: u32) -> Option<Hash256> {
        self.levels[0].get(leaf as usize).copied().flatten()
    }

    pub fn mined_leaves(&self) -> Vec<u32> {
        (0..self.shard_count).filter(|&i| self.levels[0][i as usize].is_some()).collect()
    }

    fn is_mixed(&self, level: usize, idx: usize) -> bool {
        self.levels[level][idx].is_some() && !self.full[level][idx]
    }

    /// `m_i`: magic nodes on each level `i`.
    pub fn magic_counts(&self) -> Vec<u32> {
        let h = self.height() as usize;
        let mut m = vec![0u32; h + 1];
        for level in 0..h {
            for (idx, node) in self.levels[level].iter().enumerate() {
                if node.is_none() && self.is_mixed(level + 1, idx / 2) {
                    m[level] += 1;
                }
            }
        }
        m
    }

    /// `Σ m_i · 2^i`.
    pub fn not_mined_count(&self) -> u64 {
        self.magic_counts().iter().enumerate().map(|(i, &m)| (m as u64) << i).sum()
    }

    /// `min(2^h − Σ m_i·2^i, N)`.
    pub fn mined_upper_bound(&self) -> u64 {
        ((1u64 << self.height()) - self.not_mined_count()).min(self.shard_count as u64)
    }

    pub fn update_leaf(&self, leaf: u32, hash: Hash256) -> Result<Self, ShardTreeError> {
        if leaf >= self.shard_count {
            return Err(ShardTreeError::OutOfRange { leaf, shard_count: self.shard_count });
        }
        if self.levels[0][leaf as usize].is_none() {
            return Err(ShardTreeError::NotMined(leaf));
        }
        let mut t = self.clone();
        let mut i = leaf as usize;
        t.levels[0][i] = Some(hash);
        for level in 1..t.levels.len() {
            i /= 2;
            t.levels[level][i] = combine(t.levels[level - 1][2 * i], t.levels[level - 1][2 * i + 1]);
        }
        Ok(t)
    }

    /// Plain Merkle path from a mined leaf to the root, magic hashes included.
    pub fn prove_leaf(&self, leaf: u32) -> Result<MerkleProof, ShardTreeError> {
        if leaf >= self.shard_count {
            return Err(ShardTreeError::OutOfRange { leaf, shard_count: self.shard_count });
        }
        if self.levels[0][leaf as usize].is_none() {
            return Err(ShardTreeError::NotMined(leaf));
        }
        let mut i = leaf as usize;
        let mut path = Vec::new();
        for level in &self.levels[..self.levels.len() - 1] {
            path.push(level[i ^ 1].unwrap_or(Hash256::ZERO));
            i >>= 1;
        }
        Ok(MerkleProof { leaf_index: leaf as u64, path })
    }

    pub fn orange_subtree(&self) -> OrangeSubtree {
        let h = self.height() as usize;
        if self.full[h][0] {
            return OrangeSubtree::Empty;
        }
        OrangeSubtree::Tree(self.orange_at(h, 0))
    }

    fn orange_at(&self, level: usize, idx: usize) -> FullTree<OrangeLeaf> {
        if self.levels[level][idx].is_none() {
            FullTree::Leaf(OrangeLeaf::Magic)
        } else if self.full[level][idx] {
            FullTree::Leaf(OrangeLeaf::Regular)
        } else {
            FullTree::node(self.orange_at(level - 1, 2 * idx), self.orange_at(level - 1, 2 * idx + 1))
        }
    }

    fn regular_hashes(&self, level: usize, idx: usize, out: &mut Vec<Hash256>) {
        match self.levels[level][idx] {
            None => {}
            Some(h) if self.full[level][idx] => out.push(h),
            Some(_) => {
                self.regular_hashes(level - 1, 2 * idx, out);
                self.regular_hashes(level - 1, 2 * idx + 1, out);
            }
        }
    }

    /// The proof is the same for every mined leaf of the tree.
    pub fn prove_merged_mining(&self) -> Result<MergedMiningProof, ShardTreeError> {
        let h = self.height();
        let orange = self.orange_subtree();
        let encoding = encode_orange(&orange, h)?.to_bits();
        let mut regular_hashes = Vec::new();
        if orange != OrangeSubtree::Empty {
            self.regular_hashes(h as usize, 0, &mut regular_hashes);
        }
        Ok(MergedMiningProof { encoding, regular_hashes, claimed_mm_number: self.mined_upper_bound() as u32 })
    }
}

fn combine(l: Option<Hash256>, r: Option<Hash256>) -> Option<Hash256> {
    match (l, r) {
        (None, None) => None,
        (l, r) => Some(node_hash(&l.unwrap_or(Hash256::ZERO), &r.unwrap_or(Hash256::ZERO))),
    }
}

/// Orange-subtree encoding, the regular-node hashes left to right, and the
/// claimed MM number.
#[derive(Clone, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
pub struct MergedMiningProof {
    pub encoding: BitString,
    pub regular_hashes: Vec<Hash256>,
    pub claimed_mm_number: u32,
}

/// Wire form: encoding bit-length varint, encoding bytes, hash-count varint,
/// hashes, claimed MM number varint.
impl Encode for MergedMiningProof {
    fn encode_to(&self, w: &mut Writer) {
        self.encoding.encode_to(w);
        w.varint(self.regular_hashes.len() as u64);
        for h in &self.regular_hashes {
            w.hash(h);
        }
        w.varint(self.claimed_mm_number as u64);
    }
}

impl Decode for MergedMiningProof {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let encoding = BitString::decode_from(r)?;
        let n = r.len_prefix(32)?;
        let regular_hashes = (0..n).map(|_| r.hash()).collect::<Result<_, _>>()?;
        let claimed = r.varint()?;
        let claimed_mm_number = u32::try_from(claimed).map_err(|_| DecodeError::Invalid("mm number"))?;
        Ok(MergedMiningProof { encoding, regular_hashes, claimed_mm_number })
    }
}

/// What a verified proof establishes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MmProofSummary {
    pub orange: OrangeSubtree,
    pub not_mined: u64,
    pub mined_upper_bound: u64,
}

/// Reconstructs the root from the proof and checks it against `root`, that
/// `leaf` sits under a regular node, and that `mm_number` equals the bound the
/// encoding proves.
pub fn verify_merged_mining(
    root: &Hash256,
    proof: &MergedMiningProof,
    leaf: u32,
    mm_number: u32,
    shard_count: u32,
) -> Result<MmProofSummary, MmProofError> {
    if shard_count == 0 || leaf >= shard_count {
        return Err(MmProofError::OutOfRange { leaf, shard_count });
    }
    if proof.claimed_mm_number != mm_number {
        return Err(MmProofError::ClaimMismatch { proof: proof.claimed_mm_number, header: mm_number });
    }
    let h = tree_height(shard_count);
    let orange = decode_orange(&proof.encoding, h)?;
    let (not_mined, computed_root) = match &orange {
        OrangeSubtree::Empty => {
            if root.is_zero() {
                return Err(MmProofError::MagicRoot);
            }
            if shard_count != 1 << h {
                return Err(MmProofError::EmptyProofNotAllowed);
            }
            if !proof.regular_hashes.is_empty() {
                return Err(MmProofError::HashCount { expected: 0, got: proof.regular_hashes.len() });
            }
            (0, *root)
        }
        OrangeSubtree::Tree(t) => {
            if t.height() > h as usize {
                return Err(MmProofError::TooDeep);
            }
            if let FullTree::Leaf(OrangeLeaf::Magic) = t {
                return Err(MmProofError::MagicRoot);
            }
            let expected = t.leaves().iter().filter(|l| ***l == OrangeLeaf::Regular).count();
            if expected != proof.regular_hashes.len() {
                return Err(MmProofError::HashCount { expected, got: proof.regular_hashes.len() });
            }
            if !canonical(t) {
                return Err(MmProofError::NotCanonical);
            }
            if !under_regular(t, leaf, h) {
                return Err(MmProofError::NotUnderRegular);
            }
            let mut hashes = proof.regular_hashes.iter();
            let mut not_mined = 0u64;
            let r = reconstruct(t, h, &mut hashes, &mut not_mined);
            if let FullTree::Leaf(OrangeLeaf::Regular) = t {
                if shard_count != 1 << h {
                    return Err(MmProofError::EmptyProofNotAllowed);
                }
            }
            (not_mined, r)
        }
    };
    if computed_root != *root {
        return Err(MmProofError::RootMismatch);
    }
    let bound = ((1u64 << h) - not_mined).min(shard_count as u64);
    if mm_number as u64 != bound {
        return Err(MmProofError::WrongMmNumber { claimed: mm_number, bound });
    }
    Ok(MmProofSummary { orange, not_mined, mined_upper_bound: bound })
}

/// No interior node may have two leaf children of the same kind: those would
/// be a single regular or magic node in an honest tree.
fn canonical(t: &FullTree<OrangeLeaf>) -> bool {
    match t {
        FullTree::Leaf(_) => true,
        FullTree::Node(l, r) => match (l.as_ref(), r.as_ref()) {
            (FullTree::Leaf(a), FullTree::Leaf(b)) => a != b,
            _ => canonical(l) && canonical(r),
        },
    }
}

fn under_regular(t: &FullTree<OrangeLeaf>, leaf: u32, h: u32) -> bool {
    let mut node = t;
    let mut depth = 0;
    loop {
        match node {
            FullTree::Leaf(kind) => return *kind == OrangeLeaf::Regular,
            FullTree::Node(l, r) => {
                let bit = (leaf >> (h - 1 - depth)) & 1;
                node = if bit == 0 { l } else { r };
                depth += 1;
            }
        }
    }
}

fn reconstruct<'a>(
    t: &FullTree<OrangeLeaf>,
    level: u32,
    hashes: &mut impl Iterator<Item = &'a Hash256>,
    not_mined: &mut u64,
) -> Hash256 {
    match t {
        FullTree::Leaf(OrangeLeaf::Magic) => {
            *not_mined += 1u64 << level;
            Hash256::ZERO
        }
        FullTree::Leaf(OrangeLeaf::Regular) => *hashes.next().expect("hash count checked"),
        FullTree::Node(l, r) => {
            let a = reconstruct(l, level - 1, hashes, not_mined);
            let b = reconstruct(r, level - 1, hashes, not_mined);
            node_hash(&a, &b)
        }
    }
}

/// Shard proof and merged-mining proof together, for a shard header at its
/// prescribed leaf.
pub fn verify_shard_placement(
    root: &Hash256,
    header_hash: Hash256,
    shard_proof: &MerkleProof,
    mm_proof: &MergedMiningProof,
    leaf: u32,
    mm_number: u32,
    shard_count: u32,
) -> Result<MmProofSummary, MmProofError> {
    if shard_proof.leaf_index != leaf as u64 || shard_proof.tree_height() != tree_height(shard_count) {
        return Err(MmProofError::NotUnderRegular);
    }
    if !shard_proof.verify_leaf_hash(root, header_hash) {
        return Err(MmProofError::RootMismatch);
    }
    verify_merged_mining(root, mm_proof, leaf, mm_number, shard_count)
}
