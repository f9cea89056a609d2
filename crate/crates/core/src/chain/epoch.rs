//! Mining epochs and the issuance adjustment coefficients `k_i`.
//!
//! Beacon mining epoch `m` ends with block `L·m` (genesis is in epoch 1).
//! A shard block at height `h` whose genesis references beacon block `g` sits
//! at position `40·g + h`, with epochs of `40·L` positions. Rewards in epoch
//! `m` are scaled by `∏_{i<m} k_i`, where the `k_i` are computed from beacon
//! epoch difficulties.

use serde::{Deserialize, Serialize};

use crate::target::Difficulty;

pub const MINING_EPOCH_LENGTH: u64 = 4096;
pub const SHARD_BLOCKS_PER_BEACON: u64 = 40;

/// `λ = exp(ln 0.8 / 144)`.
pub fn lambda() -> f64 {
    (0.8f64.ln() / 144.0).exp()
}

/// `k_1 = λ^12`.
pub fn first_coefficient() -> f64 {
    (12.0 * 0.8f64.ln() / 144.0).exp()
}

pub fn mining_epoch_beacon(height: u64, l: u64) -> u64 {
    if height == 0 {
        1
    } else {
        (height - 1) / l + 1
    }
}

pub fn mining_epoch_shard(height: u64, genesis_bc_height: u64, l: u64) -> u64 {
    mining_epoch_beacon(SHARD_BLOCKS_PER_BEACON * genesis_bc_height + height, SHARD_BLOCKS_PER_BEACON * l)
}

/// `k_i` from `k_{i−1}`, the running aggregate `D = Σ_{j≤i} D_j` and `D_i`.
/// Between the two thresholds the coefficient is kept.
pub fn next_coefficient(k_prev: f64, d_total: Difficulty, d_epoch: Difficulty) -> f64 {
    if k_prev >= 1.0 {
        return 1.0;
    }
    let lam = lambda();
    let ratio = (d_total.raw() - d_epoch.raw()) as f64 / d_total.raw() as f64;
    let k15 = k_prev * k_prev.sqrt();
    if ratio >= lam * lam * k15 {
        (k_prev / (lam * lam)).min(1.0)
    } else {
        k_prev
    }
}

/// Running coefficient state fed with beacon blocks in height order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoefficientSchedule {
    epoch_length: u64,
    /// `k[i-1] = k_i`.
    k: Vec<f64>,
    epoch_difficulty: Vec<Difficulty>,
    total: Difficulty,
    open: Difficulty,
}

impl CoefficientSchedule {
    pub fn new(epoch_length: u64) -> Self {
        CoefficientSchedule {
            epoch_length,
            k: vec![first_coefficient()],
            epoch_difficulty: Vec::new(),
            total: Difficulty::ZERO,
            open: Difficulty::ZERO,
        }
    }

    pub fn epoch_length(&self) -> u64 {
        self.epoch_length
    }

    pub fn record_beacon_block(&mut self, height: u64, difficulty: Difficulty) {
        self.open += difficulty;
        let m = mining_epoch_beacon(height, self.epoch_length);
        if height == self.epoch_length * m {
            let d_m = std::mem::take(&mut self.open);
            self.total += d_m;
            self.epoch_difficulty.push(d_m);
            if m >= 2 {
                let k = next_coefficient(*self.k.last().unwrap(), self.total, d_m);
                self.k.push(k);
            }
        }
    }

    /// Known coefficients `k_1, k_2, ...`.
    pub fn coefficients(&self) -> &[f64] {
        &self.k
    }

    pub fn epoch_difficulties(&self) -> &[Difficulty] {
        &self.epoch_difficulty
    }

    /// `k_i`, repeating the last known value for epochs not yet closed.
    pub fn coefficient(&self, i: u64) -> f64 {
        assert!(i >= 1);
        self.k.get(i as usize - 1).copied().unwrap_or(*self.k.last().unwrap())
    }

    /// `∏_{i=1}^{m−1} k_i`.
    pub fn product_before(&self, m: u64) -> f64 {
        (1..m).map(|i| self.coefficient(i)).product()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants() {
        assert!((lambda() - 0.99845159).abs() < 1e-8);
        assert!((first_coefficient() - lambda().powi(12)).abs() < 1e-12);
        assert!((first_coefficient() - 0.9815765298737517).abs() < 1e-12);
    }

    #[test]
    fn epochs() {
        let l = MINING_EPOCH_LENGTH;
        assert_eq!(mining_epoch_beacon(0, l), 1);
        assert_eq!(mining_epoch_beacon(1, l), 1);
        assert_eq!(mining_epoch_beacon(4096, l), 1);
        assert_eq!(mining_epoch_beacon(4097, l), 2);
        assert_eq!(mining_epoch_shard(163_840, 0, l), 1);
        assert_eq!(mining_epoch_shard(163_841, 0, l), 2);
        assert_eq!(mining_epoch_shard(1, 4096, l), 2);
    }

    #[test]
    fn coefficient_rules() {
        assert_eq!(next_coefficient(1.0, Difficulty::from_integer(10), Difficulty::from_integer(1)), 1.0);
        let d = Difficulty::from_integer(1000);
        let di = Difficulty::from_integer(1);
        let k = next_coefficient(0.99, d, di);
        assert!((k - 0.99 / (lambda() * lambda())).abs() < 1e-12);
        assert!((k - 0.99307).abs() < 1e-5);
        // a dominant last epoch keeps the coefficient
        assert_eq!(next_coefficient(0.99, d, Difficulty::from_integer(500)), 0.99);
    }

    #[test]
    fn schedule_closes_epochs() {
        let mut s = CoefficientSchedule::new(4);
        for h in 0..=12 {
            s.record_beacon_block(h, Difficulty::ONE);
        }
        assert_eq!(s.epoch_difficulties().len(), 3);
        assert_eq!(s.epoch_difficulties()[0], Difficulty::from_integer(5));
        assert_eq!(s.coefficients().len(), 3);
        assert_eq!(s.product_before(1), 1.0);
        assert_eq!(s.product_before(2), first_coefficient());
        assert_eq!(s.coefficient(10), *s.coefficients().last().unwrap());
    }
}
