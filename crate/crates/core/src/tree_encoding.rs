//! Succinct encoding of full binary trees and of the orange subtree.
//!
//! A full binary tree with `n` internal nodes maps to the Dyck word
//! `D(node) = 1 D(left) 0 D(right)`, `D(leaf) = ε`, of length `2n`. The last
//! symbol is always `0` and is dropped, leaving `2n − 1` shape bits.
//!
//! The orange encoding appends one position bit per leaf of the orange tree,
//! left to right: `1` for a regular node, `0` for a magic node. That is
//! `n + 1` bits, `3n` in total. Special cases: the empty orange subtree (every
//! leaf mined) is 0 bits, and a lone leaf is a single position bit.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::bits::BitString;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodingError {
    #[error("malformed tree encoding: {0}")]
    Malformed(&'static str),
    #[error("orange subtree has {n} internal nodes, limit is {limit}")]
    SizeLimit { n: usize, limit: usize },
}

/// Full binary tree with labelled leaves.
#[derive(Clone, PartialEq, Eq, Debug, Hash, Serialize, Deserialize)]
pub enum FullTree<L> {
    Leaf(L),
    Node(Box<FullTree<L>>, Box<FullTree<L>>),
}

/// Unlabelled shape.
pub type Shape = FullTree<()>;

impl<L> FullTree<L> {
    pub fn node(l: FullTree<L>, r: FullTree<L>) -> Self {
        FullTree::Node(Box::new(l), Box::new(r))
    }

    pub fn internal_count(&self) -> usize {
        match self {
            FullTree::Leaf(_) => 0,
            FullTree::Node(l, r) => 1 + l.internal_count() + r.internal_count(),
        }
    }

    /// Edges on the longest root-to-leaf path.
    pub fn height(&self) -> usize {
        match self {
            FullTree::Leaf(_) => 0,
            FullTree::Node(l, r) => 1 + l.height().max(r.height()),
        }
    }

    /// Leaf labels, left to right.
    pub fn leaves(&self) -> Vec<&L> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a L>) {
        match self {
            FullTree::Leaf(l) => out.push(l),
            FullTree::Node(a, b) => {
                a.collect_leaves(out);
                b.collect_leaves(out);
            }
        }
    }

    pub fn shape(&self) -> Shape {
        match self {
            FullTree::Leaf(_) => FullTree::Leaf(()),
            FullTree::Node(l, r) => FullTree::node(l.shape(), r.shape()),
        }
    }

    fn relabel<M>(&self, labels: &mut impl Iterator<Item = M>) -> FullTree<M> {
        match self {
            FullTree::Leaf(_) => FullTree::Leaf(labels.next().expect("enough labels")),
            FullTree::Node(l, r) => {
                let l = l.relabel(labels);
                FullTree::node(l, r.relabel(labels))
            }
        }
    }
}

impl Shape {
    /// Every shape with exactly `n` internal nodes.
    pub fn all(n: usize) -> Vec<Shape> {
        let mut memo: Vec<Vec<Shape>> = vec![vec![FullTree::Leaf(())]];
        for k in 1..=n {
            let mut v = Vec::new();
            for i in 0..k {
                for l in &memo[i] {
                    for r in &memo[k - 1 - i] {
                        v.push(FullTree::node(l.clone(), r.clone()));
                    }
                }
            }
            memo.push(v);
        }
        memo.swap_remove(n)
    }
}

fn dyck(t: &Shape, out: &mut Vec<bool>) {
    if let FullTree::Node(l, r) = t {
        out.push(true);
        dyck(l, out);
        out.push(false);
        dyck(r, out);
    }
}

/// `2n − 1` bits for `n ≥ 1`; empty for the single-leaf shape.
pub fn encode_shape(t: &Shape) -> BitString {
    let mut bits = Vec::with_capacity(2 * t.internal_count());
    dyck(t, &mut bits);
    bits.pop();
    BitString::from_bools(bits)
}

pub fn decode_shape(bits: &BitString, max_internal: usize) -> Result<Shape, EncodingError> {
    if bits.is_empty() {
        return Ok(FullTree::Leaf(()));
    }
    if bits.len() % 2 == 0 {
        return Err(EncodingError::Malformed("shape bit count must be odd"));
    }
    let n = bits.len().div_ceil(2);
    if n > max_internal {
        return Err(EncodingError::SizeLimit { n, limit: max_internal });
    }
    let mut word: Vec<bool> = bits.as_bools().to_vec();
    word.push(false);
    let mut pos = 0;
    let t = parse(&word, &mut pos)?;
    if pos != word.len() {
        return Err(EncodingError::Malformed("unbalanced shape bits"));
    }
    Ok(t)
}

fn parse(word: &[bool], pos: &mut usize) -> Result<Shape, EncodingError> {
    if *pos >= word.len() || !word[*pos] {
        return Ok(FullTree::Leaf(()));
    }
    *pos += 1;
    let l = parse(word, pos)?;
    if *pos >= word.len() || word[*pos] {
        return Err(EncodingError::Malformed("unbalanced shape bits"));
    }
    *pos += 1;
    let r = parse(word, pos)?;
    Ok(FullTree::node(l, r))
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash, Serialize, Deserialize)]
pub enum OrangeLeaf {
    /// Empty subtree whose hash is replaced by zeros.
    Magic,
    /// Fully mined subtree; its hash is listed in the proof.
    Regular,
}

/// Orange subtree of a shard Merkle tree. `Empty` means the root itself is
/// regular (every leaf is mined) and nothing needs encoding.
#[derive(Clone, PartialEq, Eq, Debug, Hash, Serialize, Deserialize)]
pub enum OrangeSubtree {
    Empty,
    Tree(FullTree<OrangeLeaf>),
}

impl OrangeSubtree {
    pub fn internal_count(&self) -> usize {
        match self {
            OrangeSubtree::Empty => 0,
            OrangeSubtree::Tree(t) => t.internal_count(),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
pub struct OrangeEncoding {
    pub shape_bits: BitString,
    pub position_bits: BitString,
}

impl OrangeEncoding {
    pub fn to_bits(&self) -> BitString {
        let mut b = self.shape_bits.clone();
        b.extend(&self.position_bits);
        b
    }

    pub fn len(&self) -> usize {
        self.shape_bits.len() + self.position_bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Splits a concatenated encoding; the internal-node count follows from the length.
    pub fn split(bits: &BitString) -> Result<Self, EncodingError> {
        let len = bits.len();
        let shape_len = match len {
            0 | 1 => 0,
            l if l % 3 == 0 => 2 * (l / 3) - 1,
            _ => return Err(EncodingError::Malformed("orange encoding length is not 0, 1 or 3n")),
        };
        Ok(OrangeEncoding { shape_bits: bits.slice(0, shape_len), position_bits: bits.slice(shape_len, len) })
    }
}

/// Maximum internal nodes of an orange subtree for tree height `h`.
pub fn orange_limit(h: u32) -> usize {
    6 * h as usize
}

pub fn encode_orange(orange: &OrangeSubtree, h: u32) -> Result<OrangeEncoding, EncodingError> {
    let t = match orange {
        OrangeSubtree::Empty => return Ok(OrangeEncoding::default()),
        OrangeSubtree::Tree(t) => t,
    };
    let n = t.internal_count();
    if n > orange_limit(h) {
        return Err(EncodingError::SizeLimit { n, limit: orange_limit(h) });
    }
    let position_bits = BitString::from_bools(t.leaves().into_iter().map(|l| *l == OrangeLeaf::Regular).collect());
    Ok(OrangeEncoding { shape_bits: encode_shape(&t.shape()), position_bits })
}

pub fn decode_orange(bits: &BitString, h: u32) -> Result<OrangeSubtree, EncodingError> {
    if bits.is_empty() {
        return Ok(OrangeSubtree::Empty);
    }
    let enc = OrangeEncoding::split(bits)?;
    let shape = decode_shape(&enc.shape_bits, orange_limit(h))?;
    if shape.internal_count() + 1 != enc.position_bits.len() {
        return Err(EncodingError::Malformed("position bit count"));
    }
    let mut labels = enc.position_bits.iter().map(|b| if b { OrangeLeaf::Regular } else { OrangeLeaf::Magic });
    Ok(OrangeSubtree::Tree(shape.relabel(&mut labels)))
}

pub fn catalan(n: u64) -> BigUint {
    num_integer::binomial(BigUint::from(2 * n), BigUint::from(n)) / BigUint::from(n + 1)
}

/// Number of full binary trees with `n` internal nodes and height at most `h`.
pub fn count_bounded_trees(n: usize, h: usize) -> BigUint {
    // by_height[k] = counts for height ≤ k, indexed by internal-node count
    let mut prev: Vec<BigUint> = (0..=n).map(|i| if i == 0 { BigUint::one() } else { BigUint::zero() }).collect();
    for _ in 0..h {
        let mut cur = vec![BigUint::zero(); n + 1];
        cur[0] = BigUint::one();
        for (m, slot) in cur.iter_mut().enumerate().skip(1) {
            let mut acc = BigUint::zero();
            for i in 0..m {
                acc += &prev[i] * &prev[m - 1 - i];
            }
            *slot = acc;
        }
        prev = cur;
    }
    prev.swap_remove(n)
}

/// The reflection-principle expression
/// `C(12h,6h) − C(12h,6h−1) + C(12h,8h) − C(12h,8h−1)` for trees with `6h`
/// internal nodes. It tracks `C_{6h}` only asymptotically and is negative for
/// small `h`; use [`count_bounded_trees`] for exact counts.
pub fn reflection_estimate(h: u64) -> BigInt {
    let b = |n: u64, k: u64| BigInt::from(num_integer::binomial(BigUint::from(n), BigUint::from(k)));
    b(12 * h, 6 * h) - b(12 * h, 6 * h - 1) + b(12 * h, 8 * h) - b(12 * h, 8 * h - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf<L>(l: L) -> FullTree<L> {
        FullTree::Leaf(l)
    }

    #[test]
    fn small_shapes() {
        assert!(encode_shape(&leaf(())).is_empty());
        let one = FullTree::node(leaf(()), leaf(()));
        assert_eq!(encode_shape(&one).to_string(), "1");
        assert_eq!(decode_shape(&"1".parse().unwrap(), 8).unwrap(), one);
        assert_eq!(decode_shape(&BitString::new(), 8).unwrap(), leaf(()));
        assert!(matches!(decode_shape(&"11".parse().unwrap(), 8), Err(EncodingError::Malformed(_))));
        assert!(decode_shape(&"110".parse().unwrap(), 8).is_ok());
        assert!(decode_shape(&"011".parse().unwrap(), 8).is_err());
    }

    #[test]
    fn n3_codes_distinct() {
        let codes: std::collections::HashSet<String> = Shape::all(3).iter().map(|s| encode_shape(s).to_string()).collect();
        assert_eq!(codes.len(), 5);
        assert!(codes.iter().all(|c| c.len() == 5));
    }

    #[test]
    fn orange_lengths() {
        assert!(encode_orange(&OrangeSubtree::Empty, 3).unwrap().is_empty());
        let t = OrangeSubtree::Tree(FullTree::node(leaf(OrangeLeaf::Magic), leaf(OrangeLeaf::Regular)));
        let e = encode_orange(&t, 3).unwrap();
        assert_eq!(e.to_bits().to_string(), "101");
        assert_eq!(decode_orange(&e.to_bits(), 3).unwrap(), t);
        let single = OrangeSubtree::Tree(leaf(OrangeLeaf::Regular));
        let e = encode_orange(&single, 3).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(decode_orange(&e.to_bits(), 3).unwrap(), single);
    }

    #[test]
    fn size_limit() {
        // h = 1 allows 6 internal nodes
        let mut t = leaf(OrangeLeaf::Magic);
        for _ in 0..7 {
            t = FullTree::node(t, leaf(OrangeLeaf::Regular));
        }
        let o = OrangeSubtree::Tree(t);
        assert!(matches!(encode_orange(&o, 1), Err(EncodingError::SizeLimit { n: 7, limit: 6 })));
        let bits = encode_orange(&o, 2).unwrap().to_bits();
        assert!(matches!(decode_orange(&bits, 1), Err(EncodingError::SizeLimit { .. })));
    }

    #[test]
    fn bad_lengths() {
        assert!(decode_orange(&"10".parse().unwrap(), 3).is_err());
        assert!(decode_orange(&"1111".parse().unwrap(), 3).is_err());
    }

    #[test]
    fn reflection_expression_small_values() {
        assert_eq!(reflection_estimate(1), BigInt::from(-165));
        assert_eq!(reflection_estimate(2), BigInt::from(-364021));
    }

    #[test]
    fn bounded_count_basics() {
        assert_eq!(count_bounded_trees(0, 0), BigUint::one());
        assert_eq!(count_bounded_trees(1, 0), BigUint::zero());
        assert_eq!(count_bounded_trees(3, 2), BigUint::one());
        assert_eq!(count_bounded_trees(2, 2), BigUint::from(2u32));
        assert_eq!(count_bounded_trees(5, 5), catalan(5));
    }
}
