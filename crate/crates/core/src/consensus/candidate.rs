//! Assembling a merge-mined container from candidate headers.
//!
//! The `mm_number` in each shard header depends only on which leaves are
//! mined, so it is fixed first; the headers are then hashed into the shard
//! tree and the container commits to the tree root and encoding. One nonce
//! search covers every chain: a mining hash below a chain's target makes a
//! valid block for that chain.

use crate::block::{transactions_root, BcBlock, BcBody, BcHeader, ScBlock, ScBody, ScHeader, ShardId, Transaction};
use crate::hash::Hash256;
use crate::shard_tree::{MergedMiningProof, ShardMerkleTree, ShardTreeError};
use crate::tree_encoding::{encode_orange, EncodingError};

#[derive(Clone, Debug, PartialEq)]
pub struct ShardCandidate {
    pub shard: ShardId,
    /// `mm_number` and `tx_merkle_root` are overwritten during assembly.
    pub header: ScHeader,
    pub transactions: Vec<Transaction>,
}

#[derive(Clone, Debug)]
pub struct MergedCandidate {
    /// Nonce 0; see [`MergedCandidate::container`].
    pub container: BcHeader,
    pub beacon_transactions: Vec<Transaction>,
    pub tree: ShardMerkleTree,
    pub mm_proof: MergedMiningProof,
    pub shards: Vec<ShardCandidate>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CandidateError {
    #[error(transparent)]
    Tree(#[from] ShardTreeError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("shard {0} appears twice")]
    Duplicate(ShardId),
}

/// `beacon` supplies version, commitment, shard field, timestamp and bits; its
/// tree fields, transaction root and nonce are filled in here.
pub fn assemble(
    beacon: BcHeader,
    beacon_transactions: Vec<Transaction>,
    mut shards: Vec<ShardCandidate>,
) -> Result<MergedCandidate, CandidateError> {
    let count = beacon.shards.shard_count;
    shards.sort_by_key(|s| s.shard);
    for w in shards.windows(2) {
        if w[0].shard == w[1].shard {
            return Err(CandidateError::Duplicate(w[0].shard));
        }
    }
    let placeholder: Vec<_> = shards.iter().map(|s| (s.shard.leaf_index(), Hash256::ZERO)).collect();
    let tree = if placeholder.is_empty() {
        None
    } else {
        Some(ShardMerkleTree::build(&placeholder, count)?)
    };
    let mm = tree.as_ref().map_or(0, |t| t.mined_upper_bound() as u32);
    for s in &mut shards {
        s.header.mm_number = mm;
        s.header.tx_merkle_root = transactions_root(&s.transactions);
    }
    let mut container = BcHeader {
        tx_merkle_root: transactions_root(&beacon_transactions),
        nonce: 0,
        ..beacon
    };
    let (tree, mm_proof) = if shards.is_empty() {
        // No shard is mined: only the beacon chain can use this container.
        container.tree_encoding = crate::bits::BitString::new();
        container.shard_tree_root = Hash256::ZERO;
        let t = ShardMerkleTree::build(&[(0, Hash256::ZERO)], count)?;
        (t, MergedMiningProof::default())
    } else {
        let leaves: Vec<_> = shards.iter().map(|s| (s.shard.leaf_index(), s.header.header_hash())).collect();
        let t = ShardMerkleTree::build(&leaves, count)?;
        let proof = t.prove_merged_mining()?;
        container.tree_encoding = encode_orange(&t.orange_subtree(), t.height())?.to_bits();
        container.shard_tree_root = t.root();
        (t, proof)
    };
    Ok(MergedCandidate { container, beacon_transactions, tree, mm_proof, shards })
}

impl MergedCandidate {
    pub fn container(&self, nonce: u64) -> BcHeader {
        BcHeader { nonce, ..self.container.clone() }
    }

    pub fn beacon_block(&self, nonce: u64) -> BcBlock {
        BcBlock { header: self.container(nonce), body: BcBody { transactions: self.beacon_transactions.clone() } }
    }

    pub fn shard_ids(&self) -> impl Iterator<Item = ShardId> + '_ {
        self.shards.iter().map(|s| s.shard)
    }

    pub fn shard_block(&self, shard: ShardId, nonce: u64) -> Option<ScBlock> {
        let s = self.shards.iter().find(|s| s.shard == shard)?;
        let shard_proof = self.tree.prove_leaf(shard.leaf_index()).ok()?;
        Some(ScBlock {
            header: s.header.clone(),
            body: ScBody {
                bc_container: self.container(nonce),
                shard_proof,
                mm_proof: self.mm_proof.clone(),
                transactions: s.transactions.clone(),
            },
        })
    }
}
