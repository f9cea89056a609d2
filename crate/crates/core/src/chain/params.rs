use serde::{Deserialize, Serialize};

use crate::target::Difficulty;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    Beacon,
    Shard,
}

/// Per-chain-kind timing and retargeting constants.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifficultyParams {
    /// Target block spacing `T` in seconds.
    pub target_spacing: u64,
    /// Blocks per difficulty epoch.
    pub epoch_length: u64,
    /// Blocks in the median-past-time window.
    pub median_window: usize,
    /// A timestamp at or beyond network time plus this is rejected.
    pub future_window: u64,
    /// `D_0`, the floor for retargeting.
    pub min_difficulty: Difficulty,
}

impl DifficultyParams {
    pub fn beacon() -> Self {
        DifficultyParams {
            target_spacing: 600,
            epoch_length: 2048,
            median_window: 11,
            future_window: 7200,
            min_difficulty: Difficulty::ONE,
        }
    }

    pub fn shard() -> Self {
        DifficultyParams {
            target_spacing: 15,
            epoch_length: 5760,
            median_window: 23,
            future_window: 360,
            min_difficulty: Difficulty::ONE,
        }
    }

    pub fn for_kind(kind: ChainKind) -> Self {
        match kind {
            ChainKind::Beacon => Self::beacon(),
            ChainKind::Shard => Self::shard(),
        }
    }
}

/// `t_n = 600 n` on the beacon; `t_n = 600 m + 15 n` on a shard whose genesis
/// references beacon block `m`.
pub fn desired_timestamp(kind: ChainKind, n: u64, genesis_bc_height: u64) -> u64 {
    match kind {
        ChainKind::Beacon => 600 * n,
        ChainKind::Shard => 600 * genesis_bc_height + 15 * n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desired_examples() {
        assert_eq!(desired_timestamp(ChainKind::Beacon, 0, 0), 0);
        assert_eq!(desired_timestamp(ChainKind::Beacon, 7, 0), 4200);
        assert_eq!(desired_timestamp(ChainKind::Shard, 4, 10), 6060);
    }
}
