//! Per-chain state: block records, commitment MMR, retargeting and supply.

pub mod daa;
pub mod epoch;
pub mod params;
pub mod reward;
pub mod timestamp;

use serde::{Deserialize, Serialize};

pub use daa::{adjust_difficulty, Adjustment, DaaMode};
pub use epoch::{mining_epoch_beacon, mining_epoch_shard, next_coefficient, CoefficientSchedule};
pub use params::{desired_timestamp, ChainKind, DifficultyParams};
pub use reward::block_reward;
pub use timestamp::{validate_timestamp, TimestampError};

use crate::amount::Amount;
use crate::block::{ShardField, ShardId};
use crate::hash::Hash256;
use crate::mmr::WeightedMmr;
use crate::target::{CompactTarget, Difficulty, Target};

/// What the chain remembers about each accepted block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub height: u64,
    pub header_hash: Hash256,
    pub timestamp: u64,
    pub bits: CompactTarget,
    pub difficulty: Difficulty,
    pub mm_number: u32,
    pub mining_epoch: u64,
    pub reward: Amount,
    pub supply_after: Amount,
    /// Beacon only.
    pub shard_field: Option<ShardField>,
}

/// Input for [`ChainState::push`].
#[derive(Clone, Debug)]
pub struct NewBlock {
    pub header_hash: Hash256,
    pub leaf_hash: Hash256,
    pub timestamp: u64,
    pub bits: CompactTarget,
    pub mm_number: u32,
    pub reward: Amount,
    pub shard_field: Option<ShardField>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MonetaryError {
    #[error("need n < m, got n = {n}, m = {m}")]
    Order { n: u64, m: u64 },
    #[error("height {0} beyond the chain tip")]
    Height(u64),
    #[error("zero supply at height {0}")]
    ZeroSupply(u64),
}

#[derive(Clone, Debug)]
pub struct ChainState {
    pub kind: ChainKind,
    pub shard: Option<ShardId>,
    /// Beacon height referenced by a shard's genesis (`m` in `t_n = 600m + 15n`).
    pub genesis_bc_height: u64,
    /// Network genesis time; desired timestamps are offsets from it.
    pub origin: u64,
    pub params: DifficultyParams,
    pub mode: DaaMode,
    records: Vec<BlockRecord>,
    mmr: WeightedMmr,
    next_bits: CompactTarget,
    adjustments: Vec<(u64, Adjustment)>,
}

impl ChainState {
    /// Starts a chain from its genesis block, which mints nothing.
    pub fn new(
        kind: ChainKind,
        shard: Option<ShardId>,
        genesis_bc_height: u64,
        origin: u64,
        params: DifficultyParams,
        mode: DaaMode,
        genesis: NewBlock,
    ) -> Self {
        let mut c = ChainState {
            kind,
            shard,
            genesis_bc_height,
            origin,
            params,
            mode,
            records: Vec::new(),
            mmr: WeightedMmr::new(),
            next_bits: genesis.bits,
            adjustments: Vec::new(),
        };
        c.push(NewBlock { reward: Amount::ZERO, ..genesis });
        c
    }

    pub fn height(&self) -> u64 {
        self.records.len() as u64 - 1
    }

    pub fn tip(&self) -> &BlockRecord {
        self.records.last().unwrap()
    }

    pub fn records(&self) -> &[BlockRecord] {
        &self.records
    }

    pub fn record(&self, height: u64) -> Option<&BlockRecord> {
        self.records.get(height as usize)
    }

    pub fn mmr(&self) -> &WeightedMmr {
        &self.mmr
    }

    /// Commitment the next block must reference.
    pub fn commitment(&self) -> Hash256 {
        self.mmr.root()
    }

    pub fn total_weight(&self) -> Difficulty {
        self.mmr.total_weight()
    }

    pub fn next_bits(&self) -> CompactTarget {
        self.next_bits
    }

    pub fn supply(&self) -> Amount {
        self.tip().supply_after
    }

    pub fn adjustments(&self) -> &[(u64, Adjustment)] {
        &self.adjustments
    }

    pub fn desired_timestamp(&self, n: u64) -> u64 {
        self.origin + desired_timestamp(self.kind, n, self.genesis_bc_height)
    }

    pub fn mining_epoch(&self, height: u64) -> u64 {
        match self.kind {
            ChainKind::Beacon => mining_epoch_beacon(height, epoch::MINING_EPOCH_LENGTH),
            ChainKind::Shard => mining_epoch_shard(height, self.genesis_bc_height, epoch::MINING_EPOCH_LENGTH),
        }
    }

    /// Up to `k` most recent timestamps, oldest first.
    pub fn recent_timestamps(&self, k: usize) -> Vec<u64> {
        self.records[self.records.len().saturating_sub(k)..].iter().map(|r| r.timestamp).collect()
    }

    pub fn push(&mut self, b: NewBlock) {
        let height = self.records.len() as u64;
        let difficulty = b.bits.to_target().and_then(|t| t.difficulty()).expect("validated bits");
        let supply_after = self.records.last().map_or(Amount::ZERO, |r| r.supply_after) + b.reward;
        self.mmr.append(b.leaf_hash, difficulty);
        self.records.push(BlockRecord {
            height,
            header_hash: b.header_hash,
            timestamp: b.timestamp,
            bits: b.bits,
            difficulty,
            mm_number: b.mm_number,
            mining_epoch: self.mining_epoch(height),
            reward: b.reward,
            supply_after,
            shard_field: b.shard_field,
        });
        if (height + 1) % self.params.epoch_length == 0 {
            let start = (height + 1 - self.params.epoch_length) as usize;
            let ts: Vec<u64> = self.records[start..].iter().map(|r| r.timestamp).collect();
            let adj = adjust_difficulty(&ts, self.desired_timestamp(height), difficulty, &self.params, self.mode);
            self.next_bits = retarget_bits(b.bits, &adj);
            self.adjustments.push((height + 1, adj));
        }
    }

    /// `M_S(n, m) = supply(m) / supply(n) − 1`.
    pub fn monetary_creation(&self, n: u64, m: u64) -> Result<f64, MonetaryError> {
        if n >= m {
            return Err(MonetaryError::Order { n, m });
        }
        let sm = self.record(m).ok_or(MonetaryError::Height(m))?.supply_after;
        let sn = self.record(n).ok_or(MonetaryError::Height(n))?.supply_after;
        if sn.units() == 0 {
            return Err(MonetaryError::ZeroSupply(n));
        }
        Ok(sm.units() as f64 / sn.units() as f64 - 1.0)
    }
}

/// Compact bits for an adjustment; a kept difficulty keeps the exact bits.
pub fn retarget_bits(prev_bits: CompactTarget, adj: &Adjustment) -> CompactTarget {
    let prev = prev_bits.to_target().and_then(|t| t.difficulty()).ok();
    if adj.degenerate || prev == Some(adj.difficulty) {
        return prev_bits;
    }
    Target::from_difficulty(adj.difficulty).to_compact()
}
