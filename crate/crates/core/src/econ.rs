//! Fee expectations, security factor, supply gap and the log-linear
//! efficiency fit. Plain `f64` in coin units.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EconError {
    #[error("miner hash rate must be positive")]
    ZeroMinerHashRate,
    #[error("negative or non-finite input: {0}")]
    BadInput(&'static str),
    #[error("no shard {0}")]
    NoShard(usize),
    #[error("capitalization must be positive")]
    ZeroCapitalization,
    #[error("gamma {0} below 1")]
    GammaBelowOne(f64),
    #[error("need at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("efficiency at point {0} is not positive")]
    NonPositiveEfficiency(usize),
    #[error("times must be strictly increasing (point {0})")]
    TimesNotIncreasing(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShardFees {
    /// Aggregate fees `TF_i`.
    pub fees: f64,
    /// Hash rate of the other miners, `SHR_i`.
    pub others_hash_rate: f64,
    /// Processing cost `ε_i`.
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeeScenario {
    pub miner_hash_rate: f64,
    pub shards: Vec<ShardFees>,
}

impl FeeScenario {
    pub fn validate(&self) -> Result<(), EconError> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !ok(self.miner_hash_rate) {
            return Err(EconError::BadInput("miner hash rate"));
        }
        if self.miner_hash_rate == 0.0 {
            return Err(EconError::ZeroMinerHashRate);
        }
        for s in &self.shards {
            if !ok(s.fees) || !ok(s.others_hash_rate) || !ok(s.cost) {
                return Err(EconError::BadInput("shard fees"));
            }
        }
        Ok(())
    }

    fn share(&self, s: &ShardFees) -> f64 {
        s.fees * self.miner_hash_rate / (s.others_hash_rate + self.miner_hash_rate)
    }
}

/// `E = Σ TF_i · MHR / (SHR_i + MHR)`.
pub fn expected_fee_reward(sc: &FeeScenario) -> Result<f64, EconError> {
    sc.validate()?;
    Ok(sc.shards.iter().map(|s| sc.share(s)).sum())
}

/// `Δ_i = TF_i / (1 + SHR_i/MHR) − ε_i`; may be negative.
pub fn marginal_profit(sc: &FeeScenario, shard: usize) -> Result<f64, EconError> {
    sc.validate()?;
    let s = sc.shards.get(shard).ok_or(EconError::NoShard(shard))?;
    Ok(sc.share(s) - s.cost)
}

pub fn security_factor(budget: f64, capitalization: f64) -> Result<f64, EconError> {
    if !(capitalization > 0.0) {
        return Err(EconError::ZeroCapitalization);
    }
    Ok(budget / capitalization)
}

/// Coins minted beyond the value they back: `(γ − 1)·V`.
pub fn supply_gap(gamma: f64, value: f64) -> Result<f64, EconError> {
    if !(gamma >= 1.0) {
        return Err(EconError::GammaBelowOne(gamma));
    }
    if !(value >= 0.0) {
        return Err(EconError::BadInput("V"));
    }
    Ok((gamma - 1.0) * value)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    /// Per year, in natural-log units.
    pub slope: f64,
    pub intercept: f64,
    /// `exp(slope) − 1`.
    pub annual_rate: f64,
}

/// Ordinary least squares of `ln(efficiency)` on time in years.
pub fn loglinear_fit(points: &[(f64, f64)]) -> Result<GrowthFit, EconError> {
    if points.len() < 2 {
        return Err(EconError::TooFewPoints(points.len()));
    }
    for (i, &(t, e)) in points.iter().enumerate() {
        if !(e > 0.0) || !e.is_finite() {
            return Err(EconError::NonPositiveEfficiency(i));
        }
        if !t.is_finite() || (i > 0 && t <= points[i - 1].0) {
            return Err(EconError::TimesNotIncreasing(i));
        }
    }
    let n = points.len() as f64;
    let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, e) in points {
        sxy += (t - mt) * (e.ln() - my);
        sxx += (t - mt) * (t - mt);
    }
    let slope = sxy / sxx;
    Ok(GrowthFit { slope, intercept: my - slope * mt, annual_rate: slope.exp_m1() })
}

pub fn loglinear_growth(points: &[(f64, f64)]) -> Result<f64, EconError> {
    loglinear_fit(points).map(|f| f.annual_rate)
}
