//! Shard-count expansion by beacon vote.
//!
//! Each beacon header carries a vote bit next to the shard count. When more
//! than 768 of the previous 1024 beacon blocks voted and the shard count was
//! constant over that window, the next block (the trigger, height `n`)
//! carries `N + dN`. Shards `N+1 ..= N+dN` get genesis blocks referencing
//! beacon block `n + 9` and become mineable from height `n + 10`.

use serde::{Deserialize, Serialize};

use crate::block::ShardField;
use crate::target::Target;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpansionParams {
    pub window: u64,
    /// Votes must strictly exceed this.
    pub threshold: u64,
    pub activation_delay: u64,
    pub genesis_target_multiplier: u32,
}

impl Default for ExpansionParams {
    fn default() -> Self {
        ExpansionParams { window: 1024, threshold: 768, activation_delay: 10, genesis_target_multiplier: 80 }
    }
}

/// `dN = max(1, 2^(⌈log2 N⌉ − 9))`.
pub fn expansion_step(shard_count: u32) -> u32 {
    let h = crate::shard_tree::tree_height(shard_count);
    if h <= 9 {
        1
    } else {
        1 << (h - 9)
    }
}

/// Whether the block at `height` must raise the shard count, given the shard
/// fields of every earlier beacon block (`fields[i]` is block `i`'s).
pub fn expansion_check(fields: &[ShardField], height: u64, params: &ExpansionParams) -> Option<u32> {
    if height < params.window || (fields.len() as u64) < height {
        return None;
    }
    let window = &fields[(height - params.window) as usize..height as usize];
    let n = window[0].shard_count;
    if window.iter().any(|f| f.shard_count != n) {
        return None;
    }
    let votes = window.iter().filter(|f| f.vote).count() as u64;
    (votes > params.threshold).then(|| expansion_step(n))
}

/// Genesis target of an expansion shard: beacon target of block `n + 9` times
/// the multiplier, capped at the maximum.
pub fn expansion_genesis_target(beacon_target: &Target, params: &ExpansionParams) -> Target {
    beacon_target.scaled(params.genesis_target_multiplier)
}
