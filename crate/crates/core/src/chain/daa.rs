//! Epoch difficulty adjustment.
//!
//! At the end of an epoch of `N` blocks the average hash rate is
//! `AHR = (N − 5) · D_prev / (τ̃₂ − τ̃₁)`, where `τ̃₁`, `τ̃₂` are the medians of the
//! first and last five timestamps. The next expected block time `T_next`
//! compensates the schedule drift `d_n = τ_n − t_n` of the last block and is
//! clamped to `[0.8 T, 1.2 T]`; then `D_next = max(AHR · T_next, D_0)`.
//!
//! All arithmetic is exact: `T_next` is a rational and the product is done in
//! big integers, so every node computes the same bits.

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use super::params::DifficultyParams;
use crate::target::Difficulty;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DaaMode {
    /// `T_next = (d_n + N·T) / N`, as the formula is written.
    #[default]
    Literal,
    /// `T_next = (N·T − d_n) / N`, steering the last block back onto schedule.
    GoalConsistent,
    /// No retargeting; difficulty stays at its genesis value.
    Off,
}

#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct Adjustment {
    pub difficulty: Difficulty,
    /// `T_next` in seconds.
    pub block_time: f64,
    pub average_hash_rate: f64,
    /// Timestamps gave no usable hash-rate estimate; difficulty kept.
    pub degenerate: bool,
}

fn median5(ts: &[u64]) -> u64 {
    let mut v = ts.to_vec();
    v.sort_unstable();
    v[v.len() / 2]
}

/// `timestamps` are the epoch's blocks in chain order; `desired_last` is `t_n`
/// for the last of them.
pub fn adjust_difficulty(
    timestamps: &[u64],
    desired_last: u64,
    prev: Difficulty,
    params: &DifficultyParams,
    mode: DaaMode,
) -> Adjustment {
    let t = params.target_spacing as i128;
    let keep = |degenerate| Adjustment {
        difficulty: prev,
        block_time: t as f64,
        average_hash_rate: 0.0,
        degenerate,
    };
    if mode == DaaMode::Off {
        return keep(false);
    }
    if timestamps.len() < 10 {
        return keep(true);
    }
    let n = timestamps.len() as i128;
    let first = median5(&timestamps[..5]);
    let last = median5(&timestamps[timestamps.len() - 5..]);
    if last <= first {
        return keep(true);
    }
    let span = (last - first) as i128;
    let d_n = *timestamps.last().unwrap() as i128 - desired_last as i128;
    let p = match mode {
        DaaMode::Literal => d_n + n * t,
        DaaMode::GoalConsistent => n * t - d_n,
        DaaMode::Off => unreachable!(),
    };
    // T_next = num / den
    let (num, den) = if 5 * p < 4 * n * t {
        (4 * t, 5)
    } else if 5 * p > 6 * n * t {
        (6 * t, 5)
    } else {
        (p, n)
    };
    let prod = BigInt::from(prev.raw()) * (n - 5) * num;
    let q = prod / (BigInt::from(den) * span);
    let raw = q.to_biguint().unwrap_or_default();
    let raw = raw.to_u128().unwrap_or(u128::MAX);
    let difficulty = Difficulty::from_raw(raw).max(params.min_difficulty);
    let ahr = (n - 5) as f64 * prev.to_f64() / span as f64;
    Adjustment { difficulty, block_time: num as f64 / den as f64, average_hash_rate: ahr, degenerate: false }
}
