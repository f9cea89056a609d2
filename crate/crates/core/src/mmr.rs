//! Merkle mountain range whose nodes carry subchain weight.
//!
//! Every node is `(hash, weight)`. A leaf's weight is its block's difficulty
//! and an interior node hashes `0x01 ‖ l.hash ‖ l.weight ‖ r.hash ‖ r.weight`
//! (weights as 16-byte little-endian fixed point) with weight `l + r`. The
//! root bags the peaks right to left with the same rule, so one leaf's root is
//! its own hash and the root weight is the total chain weight.
//!
//! Chain-weight proofs sample points `u` uniformly in `[0, total weight)` from
//! `H(root ‖ claimed weight ‖ counter)` and open the leaf whose weight interval
//! contains `u`.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::block::{BcHeader, ScHeader};
use crate::codec::{Decode, DecodeError, Encode, Reader, Writer};
use crate::hash::{blake2s, blake2s_parts, Hash256};
use crate::target::Difficulty;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct WeightedNode {
    pub hash: Hash256,
    pub weight: Difficulty,
}

impl WeightedNode {
    pub fn combine(l: &WeightedNode, r: &WeightedNode) -> WeightedNode {
        WeightedNode {
            hash: blake2s_parts(&[&[0x01], &l.hash.0, &l.weight.to_le_bytes(), &r.hash.0, &r.weight.to_le_bytes()]),
            weight: l.weight + r.weight,
        }
    }
}

/// Leaf hash of a shard block: `H(ser(header) ‖ container hash)`.
pub fn shard_leaf_hash(header: &ScHeader, container_hash: &Hash256) -> Hash256 {
    blake2s_parts(&[&header.encode(), &container_hash.0])
}

/// Leaf hash of a beacon block: its header hash.
pub fn beacon_leaf_hash(header: &BcHeader) -> Hash256 {
    blake2s(&header.encode())
}

fn bag(peaks: &[WeightedNode]) -> Option<WeightedNode> {
    let (last, rest) = peaks.split_last()?;
    Some(rest.iter().rev().fold(*last, |acc, p| WeightedNode::combine(p, &acc)))
}

/// Heights of the mountains for `leaf_count` leaves, left to right.
pub fn mountain_heights(leaf_count: u64) -> Vec<u32> {
    (0..64).rev().filter(|b| leaf_count >> b & 1 == 1).collect()
}

/// Full MMR keeping every level, for proving.
#[derive(Clone, Debug, Default)]
pub struct WeightedMmr {
    levels: Vec<Vec<WeightedNode>>,
}

impl WeightedMmr {
    pub fn new() -> Self {
        WeightedMmr::default()
    }

    pub fn leaf_count(&self) -> u64 {
        self.levels.first().map_or(0, |l| l.len() as u64)
    }

    pub fn append(&mut self, hash: Hash256, weight: Difficulty) {
        let mut node = WeightedNode { hash, weight };
        let mut level = 0;
        loop {
            if self.levels.len() == level {
                self.levels.push(Vec::new());
            }
            self.levels[level].push(node);
            let len = self.levels[level].len();
            if len % 2 == 1 {
                break;
            }
            node = WeightedNode::combine(&self.levels[level][len - 2], &self.levels[level][len - 1]);
            level += 1;
        }
    }

    pub fn append_shard(&mut self, header: &ScHeader, container_hash: &Hash256, difficulty: Difficulty) {
        self.append(shard_leaf_hash(header, container_hash), difficulty);
    }

    pub fn leaf(&self, index: u64) -> Option<WeightedNode> {
        self.levels.first()?.get(index as usize).copied()
    }

    pub fn peaks(&self) -> Vec<WeightedNode> {
        let n = self.leaf_count();
        mountain_heights(n)
            .into_iter()
            .map(|h| {
                let covered_before = n >> (h + 1) << (h + 1);
                self.levels[h as usize][(covered_before >> h) as usize]
            })
            .collect()
    }

    pub fn root_node(&self) -> Option<WeightedNode> {
        bag(&self.peaks())
    }

    /// Zero for an empty range.
    pub fn root(&self) -> Hash256 {
        self.root_node().map_or(Hash256::ZERO, |n| n.hash)
    }

    pub fn total_weight(&self) -> Difficulty {
        self.root_node().map_or(Difficulty::ZERO, |n| n.weight)
    }

    pub fn frontier(&self) -> MmrFrontier {
        let mut f = MmrFrontier::new();
        let heights = mountain_heights(self.leaf_count());
        let peaks = self.peaks();
        for (h, p) in heights.into_iter().zip(peaks) {
            f = f.push_peak(h, p);
        }
        f.leaf_count = self.leaf_count();
        f
    }

    pub fn prove_inclusion(&self, index: u64) -> Option<InclusionProof> {
        let n = self.leaf_count();
        if index >= n {
            return None;
        }
        let heights = mountain_heights(n);
        let mut start = 0u64;
        let mut own = 0;
        for (k, &h) in heights.iter().enumerate() {
            if index < start + (1 << h) {
                own = k;
                break;
            }
            start += 1 << h;
        }
        let mut i = index as usize;
        let siblings = (0..heights[own] as usize)
            .map(|level| {
                let s = self.levels[level][i ^ 1];
                i >>= 1;
                s
            })
            .collect();
        let peaks = self.peaks();
        let other_peaks = peaks.iter().enumerate().filter(|(k, _)| *k != own).map(|(_, p)| *p).collect();
        Some(InclusionProof { leaf_index: index, leaf_count: n, leaf: self.levels[0][index as usize], siblings, other_peaks })
    }

    /// Leaf whose weight interval `[offset, offset + w)` contains `u`.
    fn leaf_at_weight(&self, prefix: &[u128], u: u128) -> u64 {
        // prefix[i] = weight of leaves before i
        (prefix.partition_point(|&p| p <= u) - 1) as u64
    }

    pub fn prove_chain_weight(&self, sample_count: usize) -> Vec<InclusionProof> {
        let root = match self.root_node() {
            Some(r) => r,
            None => return Vec::new(),
        };
        let mut prefix = Vec::with_capacity(self.leaf_count() as usize);
        let mut acc = 0u128;
        for l in &self.levels[0] {
            prefix.push(acc);
            acc += l.weight.raw();
        }
        sample_points(&root.hash, root.weight, sample_count)
            .into_iter()
            .map(|u| self.prove_inclusion(self.leaf_at_weight(&prefix, u)).expect("index in range"))
            .collect()
    }

    pub fn leaves(&self) -> &[WeightedNode] {
        self.levels.first().map_or(&[], |v| v.as_slice())
    }
}

/// Export form: leaf-count varint, then 32-byte hash and 16-byte weight per leaf.
impl Encode for WeightedMmr {
    fn encode_to(&self, w: &mut Writer) {
        w.varint(self.leaf_count());
        for l in self.leaves() {
            w.hash(&l.hash).u128(l.weight.raw());
        }
    }
}

impl Decode for WeightedMmr {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let n = r.len_prefix(48)?;
        let mut m = WeightedMmr::new();
        let mut total = Difficulty::ZERO;
        for _ in 0..n {
            let h = r.hash()?;
            let w = Difficulty::from_raw(r.u128()?);
            total = total.checked_add(w).ok_or(DecodeError::Invalid("total weight overflows"))?;
            m.append(h, w);
        }
        Ok(m)
    }
}

/// Append-only peaks with structural sharing, enough to extend and commit.
#[derive(Clone, Debug, Default)]
pub struct MmrFrontier {
    peaks: Option<Rc<PeakLink>>,
    leaf_count: u64,
}

#[derive(Debug)]
struct PeakLink {
    height: u32,
    node: WeightedNode,
    prev: Option<Rc<PeakLink>>,
}

impl MmrFrontier {
    pub fn new() -> Self {
        MmrFrontier::default()
    }

    pub fn leaf_count(&self) -> u64 {
        self.leaf_count
    }

    fn push_peak(&self, height: u32, node: WeightedNode) -> Self {
        MmrFrontier {
            peaks: Some(Rc::new(PeakLink { height, node, prev: self.peaks.clone() })),
            leaf_count: self.leaf_count,
        }
    }

    pub fn append(&self, hash: Hash256, weight: Difficulty) -> Self {
        let mut node = WeightedNode { hash, weight };
        let mut height = 0;
        let mut link = self.peaks.clone();
        while let Some(top) = link.clone().filter(|t| t.height == height) {
            node = WeightedNode::combine(&top.node, &node);
            height += 1;
            link = top.prev.clone();
        }
        MmrFrontier { peaks: Some(Rc::new(PeakLink { height, node, prev: link })), leaf_count: self.leaf_count + 1 }
    }

    /// Peaks left to right.
    pub fn peaks(&self) -> Vec<WeightedNode> {
        let mut out = Vec::new();
        let mut link = self.peaks.as_ref();
        while let Some(l) = link {
            out.push(l.node);
            link = l.prev.as_ref();
        }
        out.reverse();
        out
    }

    pub fn root_node(&self) -> Option<WeightedNode> {
        bag(&self.peaks())
    }

    pub fn root(&self) -> Hash256 {
        self.root_node().map_or(Hash256::ZERO, |n| n.hash)
    }

    pub fn total_weight(&self) -> Difficulty {
        self.root_node().map_or(Difficulty::ZERO, |n| n.weight)
    }
}

/// Opening of one leaf: its mountain path and every other peak.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct InclusionProof {
    pub leaf_index: u64,
    pub leaf_count: u64,
    pub leaf: WeightedNode,
    /// Bottom-up within the leaf's mountain.
    pub siblings: Vec<WeightedNode>,
    /// All peaks except the leaf's own, left to right.
    pub other_peaks: Vec<WeightedNode>,
}

impl InclusionProof {
    pub fn node_count(&self) -> usize {
        self.siblings.len() + self.other_peaks.len()
    }

    /// Root node implied by the proof, and the cumulative weight of every leaf
    /// before this one. `None` when the shape does not match `leaf_count`.
    pub fn evaluate(&self) -> Option<(WeightedNode, u128)> {
        if self.leaf_index >= self.leaf_count {
            return None;
        }
        let heights = mountain_heights(self.leaf_count);
        let mut start = 0u64;
        let mut own = None;
        for (k, &h) in heights.iter().enumerate() {
            if self.leaf_index < start + (1 << h) {
                own = Some((k, h));
                break;
            }
            start += 1 << h;
        }
        let (own, h) = own?;
        if self.siblings.len() != h as usize || self.other_peaks.len() != heights.len() - 1 {
            return None;
        }
        let local = self.leaf_index - start;
        let mut offset: u128 = 0;
        let mut acc = self.leaf;
        for (level, s) in self.siblings.iter().enumerate() {
            acc.weight.checked_add(s.weight)?;
            if local >> level & 1 == 0 {
                acc = WeightedNode::combine(&acc, s);
            } else {
                offset = offset.checked_add(s.weight.raw())?;
                acc = WeightedNode::combine(s, &acc);
            }
        }
        for p in &self.other_peaks[..own] {
            offset = offset.checked_add(p.weight.raw())?;
        }
        let mut peaks = self.other_peaks.clone();
        peaks.insert(own, acc);
        // bagging adds the same weights, so checking the sum once suffices
        peaks.iter().try_fold(0u128, |t, p| t.checked_add(p.weight.raw()))?;
        Some((bag(&peaks)?, offset))
    }
}

pub fn verify_inclusion(root: &Hash256, total_weight: Difficulty, proof: &InclusionProof) -> bool {
    matches!(proof.evaluate(), Some((node, _)) if node.hash == *root && node.weight == total_weight)
}

/// `H("chain-weight" ‖ root ‖ weight ‖ counter)` reduced into `[0, weight)`.
pub fn sample_points(root: &Hash256, weight: Difficulty, count: usize) -> Vec<u128> {
    if weight.raw() == 0 {
        return Vec::new();
    }
    (0..count as u64)
        .map(|i| {
            let h = blake2s_parts(&[b"chain-weight", &root.0, &weight.to_le_bytes(), &i.to_le_bytes()]);
            u128::from_le_bytes(h.0[..16].try_into().unwrap()) % weight.raw()
        })
        .collect()
}

/// Payload opened by a chain-weight sample so the verifier can check its work.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum LeafPayload {
    Beacon(BcHeader),
    Shard { header: ScHeader, container: BcHeader },
}

impl LeafPayload {
    pub fn leaf_hash(&self) -> Hash256 {
        match self {
            LeafPayload::Beacon(h) => beacon_leaf_hash(h),
            LeafPayload::Shard { header, container } => shard_leaf_hash(header, &container.header_hash()),
        }
    }

    /// Difficulty the block commits to, if its mining hash meets that target.
    pub fn proven_difficulty(&self) -> Option<Difficulty> {
        let (bits, container) = match self {
            LeafPayload::Beacon(h) => (h.bits, h),
            LeafPayload::Shard { header, container } => (header.bits, container),
        };
        let target = bits.to_target().ok()?;
        if !target.is_met_by(&container.mining_hash()) {
            return None;
        }
        target.difficulty().ok()
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct WeightProofSample {
    pub payload: LeafPayload,
    pub proof: InclusionProof,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WeightProofError {
    #[error("expected {expected} samples, got {got}")]
    SampleCount { expected: usize, got: usize },
    #[error("sample {0}: inclusion proof does not reproduce the root and claimed weight")]
    Inclusion(usize),
    #[error("sample {0}: opened leaf does not contain the sampled weight point")]
    WrongLeaf(usize),
    #[error("sample {0}: payload does not hash to the opened leaf")]
    PayloadMismatch(usize),
    #[error("sample {0}: proof of work invalid or leaf weight differs from the block difficulty")]
    BadWork(usize),
}

/// Verifier policy. The genesis leaf carries no work and is accepted by hash.
#[derive(Clone, Debug)]
pub struct ChainWeightVerifier {
    pub sample_count: usize,
    pub genesis_leaf: Hash256,
}

impl ChainWeightVerifier {
    pub fn verify(&self, root: &Hash256, claimed_weight: Difficulty, samples: &[WeightProofSample]) -> Result<(), WeightProofError> {
        if samples.len() != self.sample_count {
            return Err(WeightProofError::SampleCount { expected: self.sample_count, got: samples.len() });
        }
        let points = sample_points(root, claimed_weight, self.sample_count);
        for (i, (s, u)) in samples.iter().zip(points).enumerate() {
            let (node, offset) = s.proof.evaluate().ok_or(WeightProofError::Inclusion(i))?;
            if node.hash != *root || node.weight != claimed_weight {
                return Err(WeightProofError::Inclusion(i));
            }
            let w = s.proof.leaf.weight.raw();
            if !(offset <= u && u - offset < w) {
                return Err(WeightProofError::WrongLeaf(i));
            }
            if s.payload.leaf_hash() != s.proof.leaf.hash {
                return Err(WeightProofError::PayloadMismatch(i));
            }
            if s.proof.leaf_index == 0 && s.proof.leaf.hash == self.genesis_leaf {
                continue;
            }
            if s.payload.proven_difficulty() != Some(s.proof.leaf.weight) {
                return Err(WeightProofError::BadWork(i));
            }
        }
        Ok(())
    }
}

/// Pairs each sampled opening with its payload. `payload_of` returns the block
/// behind a leaf index.
pub fn prove_chain_weight(
    mmr: &WeightedMmr,
    sample_count: usize,
    mut payload_of: impl FnMut(u64) -> LeafPayload,
) -> Vec<WeightProofSample> {
    mmr.prove_chain_weight(sample_count)
        .into_iter()
        .map(|proof| WeightProofSample { payload: payload_of(proof.leaf_index), proof })
        .collect()
}

pub fn verify_chain_weight(
    root: &Hash256,
    claimed_weight: Difficulty,
    samples: &[WeightProofSample],
    verifier: &ChainWeightVerifier,
) -> bool {
    verifier.verify(root, claimed_weight, samples).is_ok()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("rule 1 window is empty")]
pub struct EmptyWindow;

/// `sc_difficulty ≤ (num/den) · max(window)`, evaluated exactly.
pub fn rule1_check(sc_difficulty: Difficulty, window: &[Difficulty], c: (u64, u64)) -> Result<bool, EmptyWindow> {
    let max = window.iter().max().ok_or(EmptyWindow)?;
    let lhs = num_bigint::BigUint::from(sc_difficulty.raw()) * c.1;
    let rhs = num_bigint::BigUint::from(max.raw()) * c.0;
    Ok(lhs <= rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(v: u64) -> Difficulty {
        Difficulty::from_integer(v)
    }

    fn build(n: u64) -> WeightedMmr {
        let mut m = WeightedMmr::new();
        for i in 0..n {
            m.append(blake2s(&i.to_le_bytes()), d(i % 7 + 1));
        }
        m
    }

    #[test]
    fn single_leaf_root_is_leaf() {
        let mut m = WeightedMmr::new();
        assert_eq!(m.root(), Hash256::ZERO);
        m.append(blake2s(b"x"), d(5));
        assert_eq!(m.root(), blake2s(b"x"));
        assert_eq!(m.total_weight(), d(5));
    }

    #[test]
    fn three_leaves_two_peaks() {
        let m = build(3);
        assert_eq!(mountain_heights(3), vec![1, 0]);
        let l = m.leaves().to_vec();
        let p0 = WeightedNode::combine(&l[0], &l[1]);
        assert_eq!(m.peaks(), vec![p0, l[2]]);
        assert_eq!(m.root(), WeightedNode::combine(&p0, &l[2]).hash);
        assert_eq!(m.total_weight(), d(1) + d(2) + d(3));
    }

    #[test]
    fn frontier_matches_full() {
        let mut f = MmrFrontier::new();
        let mut m = WeightedMmr::new();
        for i in 0..40u64 {
            let h = blake2s(&i.to_le_bytes());
            f = f.append(h, d(i + 1));
            m.append(h, d(i + 1));
            assert_eq!(f.root(), m.root());
            assert_eq!(f.peaks(), m.peaks());
            assert_eq!(m.frontier().root(), m.root());
        }
    }

    #[test]
    fn all_indices_37() {
        let m = build(37);
        for i in 0..37 {
            let p = m.prove_inclusion(i).unwrap();
            assert!(verify_inclusion(&m.root(), m.total_weight(), &p));
            assert!(p.node_count() <= 6 + 3);
            let mut bad = p.clone();
            bad.leaf.weight = Difficulty::from_raw(bad.leaf.weight.raw() + 1);
            assert!(!verify_inclusion(&m.root(), m.total_weight(), &bad));
        }
        assert!(m.prove_inclusion(37).is_none());
    }

    #[test]
    fn export_roundtrip() {
        let m = build(11);
        let b = m.encode();
        assert_eq!(b.len(), 1 + 11 * 48);
        assert_eq!(WeightedMmr::decode(&b).unwrap().root(), m.root());
    }

    #[test]
    fn rule1_examples() {
        assert_eq!(rule1_check(d(100), &[d(2000), d(5)], (1, 20)), Ok(true));
        assert_eq!(rule1_check(d(101), &[d(2000)], (1, 20)), Ok(false));
        assert_eq!(rule1_check(Difficulty::ZERO, &[d(2000)], (1, 20)), Ok(true));
        assert_eq!(rule1_check(d(1), &[], (1, 20)), Err(EmptyWindow));
    }
}
