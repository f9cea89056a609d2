//! Block verification, reporting the first failing step.
//!
//! Shard blocks:
//! 1. structure, size, version, commitment, timestamp, `mm_number ≥ 1`
//! 2. bits as expected and `mining_hash(container) < shard target`
//! 3. `mm_number ≤ container shard count ≤ current shard count`
//! 4. the shard proof links the header into the container's shard tree root
//! 5. the MM proof matches the container's encoding, reconstructs the root,
//!    puts the header at its prescribed leaf, and proves `mm_number`
//! 6. transactions: root, amounts, minimum fee, shard id
//!
//! Beacon blocks use the same numbering: 1 structure and encoding size,
//! 2 work, 3 shard count per the expansion rule, 5 encoding decodes,
//! 6 transactions.

use serde::{Deserialize, Serialize};

use super::NetworkParams;
use crate::block::{transactions_root, transactions_size, BcBlock, BcHeader, ScBlock, ShardId, Transaction, MAX_TX_BYTES, PROTOCOL_VERSION};
use crate::chain::{validate_timestamp, DifficultyParams};
use crate::hash::Hash256;
use crate::shard_tree::{tree_height, verify_merged_mining};
use crate::target::CompactTarget;
use crate::tree_encoding::{decode_orange, orange_limit};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("step {step}: {detail}")]
pub struct VerificationError {
    pub step: u8,
    pub detail: String,
}

fn fail<T>(step: u8, detail: impl Into<String>) -> Result<T, VerificationError> {
    Err(VerificationError { step, detail: detail.into() })
}

/// What a verifier knows about the parent of a beacon block.
#[derive(Clone, Debug)]
pub struct BcContext<'a> {
    pub params: &'a NetworkParams,
    pub expected_prev: Hash256,
    pub expected_bits: CompactTarget,
    /// Recent ancestor timestamps, oldest first.
    pub recent_timestamps: &'a [u64],
    pub network_time: u64,
    /// Shard count the expansion rule prescribes for this height.
    pub expected_shard_count: u32,
    /// When false the mining hash is not compared with the target (blocks
    /// from a sampled simulation carry no real work). Bits are still checked.
    pub check_work: bool,
}

#[derive(Clone, Debug)]
pub struct ScContext<'a> {
    pub params: &'a NetworkParams,
    pub shard: ShardId,
    /// Shards with a chain, i.e. past activation.
    pub active_shards: u32,
    pub expected_prev: Hash256,
    pub expected_bits: CompactTarget,
    pub recent_timestamps: &'a [u64],
    pub network_time: u64,
    /// Shard count of the beacon block being extended.
    pub current_shard_count: u32,
    pub check_work: bool,
}

fn check_encoding_size(container: &BcHeader, step: u8) -> Result<(), VerificationError> {
    let count = container.shards.shard_count;
    if count == 0 {
        return fail(step, "shard count is zero");
    }
    let limit = 3 * orange_limit(tree_height(count));
    if container.tree_encoding.len() > limit {
        return fail(step, format!("tree encoding has {} bits, limit {limit}", container.tree_encoding.len()));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn check_structure(
    version: u32,
    txs: &[Transaction],
    prev: &Hash256,
    expected_prev: &Hash256,
    timestamp: u64,
    recent: &[u64],
    network_time: u64,
    dp: &DifficultyParams,
) -> Result<(), VerificationError> {
    if version != PROTOCOL_VERSION {
        return fail(1, format!("unknown version {version}"));
    }
    let size = transactions_size(txs);
    if size > MAX_TX_BYTES {
        return fail(1, format!("transactions take {size} bytes, limit {MAX_TX_BYTES}"));
    }
    if prev != expected_prev {
        return fail(1, "previous-blocks commitment does not match the parent");
    }
    if let Err(e) = validate_timestamp(timestamp, recent, network_time, dp) {
        return fail(1, e.to_string());
    }
    Ok(())
}

fn check_work(container: &BcHeader, bits: CompactTarget, expected: CompactTarget, hash: bool) -> Result<(), VerificationError> {
    if bits != expected {
        return fail(2, format!("bits {bits} differ from expected {expected}"));
    }
    let target = match bits.to_target() {
        Ok(t) => t,
        Err(e) => return fail(2, e.to_string()),
    };
    if hash && !target.is_met_by(&container.mining_hash()) {
        return fail(2, "mining hash does not meet the target");
    }
    Ok(())
}

fn check_transactions(txs: &[Transaction], root: &Hash256, shard_id: u32, params: &NetworkParams) -> Result<(), VerificationError> {
    if transactions_root(txs) != *root {
        return fail(6, "transaction root mismatch");
    }
    for (i, t) in txs.iter().enumerate() {
        if t.amount.units() == 0 {
            return fail(6, format!("transaction {i} has zero amount"));
        }
        if t.fee < params.min_fee {
            return fail(6, format!("transaction {i} fee {} below minimum {}", t.fee, params.min_fee));
        }
        if t.shard_id != shard_id {
            return fail(6, format!("transaction {i} is for shard {}, block is {shard_id}", t.shard_id));
        }
    }
    Ok(())
}

pub fn verify_bc_block(ctx: &BcContext<'_>, block: &BcBlock) -> Result<(), VerificationError> {
    let h = &block.header;
    check_structure(
        h.version,
        &block.body.transactions,
        &h.prev_commitment,
        &ctx.expected_prev,
        h.timestamp,
        ctx.recent_timestamps,
        ctx.network_time,
        &ctx.params.beacon,
    )?;
    check_encoding_size(h, 1)?;
    check_work(h, h.bits, ctx.expected_bits, ctx.check_work)?;
    if h.shards.shard_count != ctx.expected_shard_count {
        return fail(
            3,
            format!("shard count {} but the expansion rule gives {}", h.shards.shard_count, ctx.expected_shard_count),
        );
    }
    if let Err(e) = decode_orange(&h.tree_encoding, tree_height(h.shards.shard_count)) {
        return fail(5, e.to_string());
    }
    check_transactions(&block.body.transactions, &h.tx_merkle_root, 0, ctx.params)
}

pub fn verify_sc_block(ctx: &ScContext<'_>, block: &ScBlock) -> Result<(), VerificationError> {
    let h = &block.header;
    let c = &block.body.bc_container;
    if ctx.shard.0 == 0 || ctx.shard.0 > ctx.active_shards {
        return fail(1, format!("shard {} is not active", ctx.shard));
    }
    check_structure(
        h.version,
        &block.body.transactions,
        &h.prev_commitment,
        &ctx.expected_prev,
        h.timestamp,
        ctx.recent_timestamps,
        ctx.network_time,
        &ctx.params.shard,
    )?;
    if h.mm_number == 0 {
        return fail(1, "mm_number is zero");
    }
    check_encoding_size(c, 1)?;
    check_work(c, h.bits, ctx.expected_bits, ctx.check_work)?;

    let count = c.shards.shard_count;
    if !(h.mm_number <= count && count <= ctx.current_shard_count) {
        return fail(
            3,
            format!("need mm_number {} ≤ container shard count {count} ≤ current {}", h.mm_number, ctx.current_shard_count),
        );
    }
    if ctx.shard.0 > count {
        return fail(3, format!("shard {} outside the container's {count} shards", ctx.shard));
    }

    let proof = &block.body.shard_proof;
    if proof.tree_height() != tree_height(count) || !proof.verify_leaf_hash(&c.shard_tree_root, h.header_hash()) {
        return fail(4, "shard proof does not link the header to the shard tree root");
    }

    let leaf = ctx.shard.leaf_index();
    if proof.leaf_index != leaf as u64 {
        return fail(5, format!("header sits at leaf {}, shard {} belongs at leaf {leaf}", proof.leaf_index, ctx.shard));
    }
    if block.body.mm_proof.encoding != c.tree_encoding {
        return fail(5, "merged-mining proof encoding differs from the container's");
    }
    if let Err(e) = verify_merged_mining(&c.shard_tree_root, &block.body.mm_proof, leaf, h.mm_number, count) {
        return fail(5, e.to_string());
    }
    check_transactions(&block.body.transactions, &h.tx_merkle_root, ctx.shard.0, ctx.params)
}
