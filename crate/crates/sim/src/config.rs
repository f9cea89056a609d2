//! Scenario files.
//!
//! A scenario is a TOML document. Every field except `seed`, `stop` and
//! `miners` has a default:
//!
//! ```toml
//! seed = 7
//! initial_shards = 4
//! mode = "sampled"          # or "real": grind every attempt
//! seal = true               # sampled mode: grind a nonce for each success
//! daa_mode = "literal"      # "goal-consistent", "off"
//! hash_space_bits = 32      # unit for `genesis.beacon_target_scaled`
//!
//! [stop]
//! bc_blocks = 20000         # and/or `seconds = 1e6`
//!
//! [genesis]
//! beacon_difficulty = 600.0 # default: 600 s worth of the initial hash rate
//!
//! [[miners]]
//! id = "a"
//! hash_rate = 1.0           # hashes per second
//! shards = "all"            # "none", or a list such as [1, 3]
//! latency_ms = 0.0
//! vote = "never"            # "always", or { probability = 0.5 }
//!
//! [[hash_rate_changes]]
//! miner = "a"
//! at_bc_height = 4096       # or `at_time` in seconds
//! hash_rate = 4.0
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use shardpow::chain::DaaMode;
use shardpow::consensus::ExpansionParams;

use crate::SimError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub stop: Stop,
    #[serde(default = "default_initial_shards")]
    pub initial_shards: u32,
    #[serde(default = "default_hash_space_bits")]
    pub hash_space_bits: u32,
    #[serde(default)]
    pub mode: MiningMode,
    #[serde(default = "yes")]
    pub seal: bool,
    #[serde(default)]
    pub daa_mode: DaaMode,
    #[serde(default)]
    pub genesis: GenesisConfig,
    #[serde(default)]
    pub expansion: ExpansionParams,
    pub miners: Vec<MinerConfig>,
    #[serde(default)]
    pub hash_rate_changes: Vec<HashRateChange>,
    /// Keep the event log in memory (large runs may turn it off).
    #[serde(default = "yes")]
    pub record_events: bool,
    /// Keep the accepted blocks as a binary stream.
    #[serde(default)]
    pub export_stream: bool,
    /// Beacon blocks between supply samples.
    #[serde(default = "default_stats_interval")]
    pub stats_interval: u64,
}

fn default_initial_shards() -> u32 {
    4
}

fn default_hash_space_bits() -> u32 {
    32
}

fn default_stats_interval() -> u64 {
    144
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiningMode {
    /// Success times drawn from exponential clocks.
    #[default]
    Sampled,
    /// Every attempt is a real hash of the candidate container.
    Real,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stop {
    pub bc_blocks: Option<u64>,
    pub seconds: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenesisConfig {
    #[serde(default)]
    pub time: u64,
    pub beacon_difficulty: Option<f64>,
    /// Beacon target in a `2^hash_space_bits` space.
    pub beacon_target_scaled: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinerConfig {
    pub id: String,
    pub hash_rate: f64,
    #[serde(default)]
    pub shards: ShardSubset,
    #[serde(default)]
    pub latency_ms: f64,
    /// A dishonest miner claims `mm_number = 1` on every shard block.
    #[serde(default = "yes")]
    pub honest: bool,
    #[serde(default)]
    pub vote: VotePolicy,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SubsetRepr", into = "SubsetRepr")]
pub enum ShardSubset {
    #[default]
    All,
    List(BTreeSet<u32>),
}

impl ShardSubset {
    pub fn contains(&self, shard: u32) -> bool {
        match self {
            ShardSubset::All => true,
            ShardSubset::List(s) => s.contains(&shard),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SubsetRepr {
    Named(String),
    List(Vec<u32>),
}

impl TryFrom<SubsetRepr> for ShardSubset {
    type Error = String;

    fn try_from(r: SubsetRepr) -> Result<Self, String> {
        match r {
            SubsetRepr::Named(s) if s == "all" => Ok(ShardSubset::All),
            SubsetRepr::Named(s) if s == "none" => Ok(ShardSubset::List(BTreeSet::new())),
            SubsetRepr::Named(s) => Err(format!("unknown shard subset {s:?}")),
            SubsetRepr::List(v) => Ok(ShardSubset::List(v.into_iter().collect())),
        }
    }
}

impl From<ShardSubset> for SubsetRepr {
    fn from(s: ShardSubset) -> Self {
        match s {
            ShardSubset::All => SubsetRepr::Named("all".into()),
            ShardSubset::List(v) => SubsetRepr::List(v.into_iter().collect()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VotePolicy {
    #[default]
    Never,
    Always,
    Probability(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HashRateChange {
    pub miner: String,
    pub at_time: Option<f64>,
    pub at_bc_height: Option<u64>,
    pub hash_rate: f64,
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let c: SimConfig = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.miners.is_empty() {
            return bad("at least one miner is required".into());
        }
        if self.stop.bc_blocks.is_none() && self.stop.seconds.is_none() {
            return bad("stop needs bc_blocks or seconds".into());
        }
        if let Some(s) = self.stop.seconds {
            if !(s.is_finite() && s > 0.0) {
                return bad(format!("stop.seconds must be positive, got {s}"));
            }
        }
        if self.initial_shards == 0 || self.initial_shards >= 1 << 30 {
            return bad(format!("initial_shards out of range: {}", self.initial_shards));
        }
        if self.hash_space_bits == 0 || self.hash_space_bits > 256 {
            return bad(format!("hash_space_bits must be in 1..=256, got {}", self.hash_space_bits));
        }
        if self.stats_interval == 0 {
            return bad("stats_interval must be positive".into());
        }
        if let Some(d) = self.genesis.beacon_difficulty {
            if !(d.is_finite() && d >= 1.0) {
                return bad(format!("genesis.beacon_difficulty must be at least 1, got {d}"));
            }
        }
        if let Some(t) = self.genesis.beacon_target_scaled {
            if !(t.is_finite() && t >= 1.0 && t <= 2f64.powi(self.hash_space_bits as i32)) {
                return bad(format!("genesis.beacon_target_scaled out of range: {t}"));
            }
        }
        if self.genesis.beacon_difficulty.is_some() && self.genesis.beacon_target_scaled.is_some() {
            return bad("give genesis.beacon_difficulty or genesis.beacon_target_scaled, not both".into());
        }
        let can_expand = self.miners.iter().any(|m| m.vote != VotePolicy::Never);
        let mut ids = BTreeSet::new();
        for m in &self.miners {
            if !ids.insert(m.id.as_str()) {
                return bad(format!("duplicate miner id {:?}", m.id));
            }
            if !(m.hash_rate.is_finite() && m.hash_rate > 0.0) {
                return bad(format!("miner {:?}: hash_rate must be positive", m.id));
            }
            if !(m.latency_ms.is_finite() && m.latency_ms >= 0.0) {
                return bad(format!("miner {:?}: latency_ms must be non-negative", m.id));
            }
            if let VotePolicy::Probability(p) = m.vote {
                if !(0.0..=1.0).contains(&p) {
                    return bad(format!("miner {:?}: vote probability {p} outside [0, 1]", m.id));
                }
            }
            if let ShardSubset::List(s) = &m.shards {
                for &id in s {
                    if id == 0 || (id > self.initial_shards && !can_expand) {
                        return bad(format!("miner {:?}: shard {id} does not exist", m.id));
                    }
                }
            }
        }
        for c in &self.hash_rate_changes {
            if !ids.contains(c.miner.as_str()) {
                return bad(format!("hash_rate_changes: unknown miner {:?}", c.miner));
            }
            if c.at_time.is_some() == c.at_bc_height.is_some() {
                return bad("hash_rate_changes: give exactly one of at_time, at_bc_height".into());
            }
            if !(c.hash_rate.is_finite() && c.hash_rate > 0.0) {
                return bad("hash_rate_changes: hash_rate must be positive".into());
            }
        }
        if self.expansion.window == 0 || self.expansion.threshold >= self.expansion.window || self.expansion.activation_delay == 0
        {
            return bad("expansion parameters are inconsistent".into());
        }
        Ok(())
    }

    pub fn total_hash_rate(&self) -> f64 {
        self.miners.iter().map(|m| m.hash_rate).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        seed = 1
        [stop]
        bc_blocks = 10
        [[miners]]
        id = "a"
        hash_rate = 2.0
    "#;

    #[test]
    fn defaults() {
        let c = SimConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.initial_shards, 4);
        assert_eq!(c.mode, MiningMode::Sampled);
        assert!(c.seal);
        assert_eq!(c.miners[0].shards, ShardSubset::All);
        assert_eq!(c.miners[0].vote, VotePolicy::Never);
        assert_eq!(SimConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn subsets_and_votes() {
        let c = SimConfig::from_toml(&format!("{MINIMAL}shards = [1, 3]\nvote = {{ probability = 0.25 }}\n")).unwrap();
        assert!(c.miners[0].shards.contains(3) && !c.miners[0].shards.contains(2));
        assert_eq!(c.miners[0].vote, VotePolicy::Probability(0.25));
        let none = SimConfig::from_toml(&format!("{MINIMAL}shards = \"none\"\n")).unwrap();
        assert!(!none.miners[0].shards.contains(1));
    }

    #[test]
    fn rejects() {
        for extra in ["shards = [9]\n", "shards = \"some\"\n", "latency_ms = -1.0\n", "vote = { probability = 2.0 }\n", "bogus = 1\n"] {
            assert!(SimConfig::from_toml(&format!("{MINIMAL}{extra}")).is_err(), "{extra}");
        }
        assert!(SimConfig::from_toml("seed = 1\n[stop]\n[[miners]]\nid = \"a\"\nhash_rate = 1.0\n").is_err());
        assert!(SimConfig::from_toml("seed = -1\n").is_err());
    }
}
