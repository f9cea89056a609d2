//! Block rewards: `R = D · ∏_{i<m} k_i` base units (one unit is 2^-48 coin),
//! divided by the MM number on shards.

use num_bigint::BigUint;
use num_traits::ToPrimitive;

use super::epoch::CoefficientSchedule;
use super::params::ChainKind;
use crate::amount::Amount;
use crate::target::Difficulty;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RewardError {
    #[error("shard block with mm_number 0")]
    ZeroMmNumber,
    #[error("epoch index must be at least 1")]
    ZeroEpoch,
}

/// A coefficient product in `(0, 1]` as a 64-bit binary fraction.
pub fn coefficient_q64(product: f64) -> u128 {
    assert!(product > 0.0 && product <= 1.0, "coefficient product out of range");
    (product * 18446744073709551616.0).round() as u128
}

pub fn reward_units(difficulty: Difficulty, coefficient_q64: u128, mm_number: u32) -> u128 {
    // Q96.32 · Q64 → shift out 96 fractional bits
    let p = BigUint::from(difficulty.raw()) * BigUint::from(coefficient_q64);
    let units = (p >> 96u32).to_u128().expect("reward fits in u128");
    units / mm_number.max(1) as u128
}

pub fn block_reward(
    kind: ChainKind,
    difficulty: Difficulty,
    mm_number: u32,
    epoch: u64,
    schedule: &CoefficientSchedule,
) -> Result<Amount, RewardError> {
    if epoch == 0 {
        return Err(RewardError::ZeroEpoch);
    }
    let n = match kind {
        ChainKind::Beacon => 1,
        ChainKind::Shard if mm_number == 0 => return Err(RewardError::ZeroMmNumber),
        ChainKind::Shard => mm_number,
    };
    Ok(Amount::from_units(reward_units(difficulty, coefficient_q64(schedule.product_before(epoch)), n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::epoch::{first_coefficient, MINING_EPOCH_LENGTH};

    #[test]
    fn examples() {
        let s = CoefficientSchedule::new(MINING_EPOCH_LENGTH);
        let r = block_reward(ChainKind::Beacon, Difficulty::from_integer(1 << 48), 1, 1, &s).unwrap();
        assert_eq!(r.to_coins(), 1.0);
        let r = block_reward(ChainKind::Shard, Difficulty::from_integer(1 << 49), 4, 1, &s).unwrap();
        assert_eq!(r.to_coins(), 0.5);
        let r = block_reward(ChainKind::Beacon, Difficulty::from_integer(1 << 48), 1, 2, &s).unwrap();
        assert!((r.to_coins() - first_coefficient()).abs() < 1e-12);
        assert_eq!(
            block_reward(ChainKind::Shard, Difficulty::ONE, 0, 1, &s),
            Err(RewardError::ZeroMmNumber)
        );
    }
}
