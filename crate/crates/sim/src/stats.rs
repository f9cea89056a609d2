//! Run summaries and the event log.

use serde::{Deserialize, Serialize};
use shardpow::consensus::ExpansionEvent;

/// One entry of the event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SimEvent {
    Block { time: f64, chain: String, height: u64, miner: String, node: u32, difficulty: f64 },
    Reorg { time: f64, miner: String, chain: String, depth: u64 },
    Expansion { time: f64, trigger_height: u64, old_count: u32, new_count: u32 },
    HashRate { time: f64, miner: String, hash_rate: f64 },
}

impl SimEvent {
    pub fn time(&self) -> f64 {
        match self {
            SimEvent::Block { time, .. }
            | SimEvent::Reorg { time, .. }
            | SimEvent::Expansion { time, .. }
            | SimEvent::HashRate { time, .. } => *time,
        }
    }
}

/// One difficulty epoch of a main chain. Epoch `k` holds heights
/// `kL .. kL+L−1`, all mined at the same difficulty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: u64,
    pub start_height: u64,
    pub blocks: u64,
    pub complete: bool,
    pub difficulty: f64,
    /// Mean emission interval of the epoch's blocks.
    pub mean_block_time: f64,
    /// Difficulty over the hash rate mining the chain at the epoch start.
    pub expected_block_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub chain: String,
    pub height: u64,
    pub blocks_created: u64,
    pub orphans: u64,
    pub reorgs: u64,
    pub mean_block_time: f64,
    pub supply_units: u128,
    pub epochs: Vec<EpochStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinerStats {
    pub id: String,
    pub hash_rate: f64,
    pub beacon_blocks: u64,
    pub shard_blocks: u64,
    pub earned_units: u128,
    pub coins: f64,
    /// Fraction of all issuance.
    pub share: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupplyPoint {
    pub beacon_height: u64,
    pub time: f64,
    pub beacon_units: u128,
    pub shard_units: u128,
    /// Everything credited to miners so far.
    pub earned_units: u128,
    /// Relative beacon supply growth since the previous point.
    pub beacon_creation: Option<f64>,
    pub shard_creation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttemptStats {
    pub successes: u64,
    pub attempts: u64,
    pub mean_attempts: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayStats {
    pub blocks: u64,
    pub failures: u64,
    pub first_failure: Option<String>,
    pub work_checked: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub seed: u64,
    pub duration: f64,
    pub success_events: u64,
    pub beacon: ChainStats,
    pub shards: Vec<ChainStats>,
    pub miners: Vec<MinerStats>,
    pub total_issuance_units: u128,
    pub beacon_supply_units: u128,
    pub shard_supply_units: u128,
    /// Beacon supply over the summed shard supply.
    pub supply_ratio: Option<f64>,
    pub supply_series: Vec<SupplyPoint>,
    pub expansions: Vec<ExpansionEvent>,
    pub replay: ReplayStats,
    pub attempts: Option<AttemptStats>,
}

impl SimStats {
    pub fn miner(&self, id: &str) -> Option<&MinerStats> {
        self.miners.iter().find(|m| m.id == id)
    }

    pub fn orphans(&self) -> u64 {
        self.beacon.orphans + self.shards.iter().map(|s| s.orphans).sum::<u64>()
    }
}

/// Column header of the per-miner CSV.
pub const MINER_CSV_HEADER: [&str; 7] = ["miner", "hash_rate", "beacon_blocks", "shard_blocks", "earned_units", "coins", "share"];

/// Column header of the event CSV.
pub const EVENT_CSV_HEADER: [&str; 7] = ["time", "type", "chain", "height", "miner", "value", "detail"];

pub fn miners_csv(stats: &SimStats) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(MINER_CSV_HEADER)?;
    for m in &stats.miners {
        w.write_record([
            m.id.clone(),
            m.hash_rate.to_string(),
            m.beacon_blocks.to_string(),
            m.shard_blocks.to_string(),
            m.earned_units.to_string(),
            m.coins.to_string(),
            m.share.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8"))
}

pub fn events_csv(events: &[SimEvent]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EVENT_CSV_HEADER)?;
    for e in events {
        let row = match e {
            SimEvent::Block { time, chain, height, miner, node, difficulty } => {
                [time.to_string(), "block".into(), chain.clone(), height.to_string(), miner.clone(), difficulty.to_string(), node.to_string()]
            }
            SimEvent::Reorg { time, miner, chain, depth } => {
                [time.to_string(), "reorg".into(), chain.clone(), String::new(), miner.clone(), depth.to_string(), String::new()]
            }
            SimEvent::Expansion { time, trigger_height, old_count, new_count } => [
                time.to_string(),
                "expansion".into(),
                "beacon".into(),
                trigger_height.to_string(),
                String::new(),
                new_count.to_string(),
                format!("from {old_count}"),
            ],
            SimEvent::HashRate { time, miner, hash_rate } => {
                [time.to_string(), "hash_rate".into(), String::new(), String::new(), miner.clone(), hash_rate.to_string(), String::new()]
            }
        };
        w.write_record(row)?;
    }
    Ok(String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8"))
}

pub fn events_jsonl(events: &[SimEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("event serializes"));
        out.push('\n');
    }
    out
}
