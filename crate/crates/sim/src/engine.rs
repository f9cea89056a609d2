//! The event loop.
//!
//! Every block ever mined lives in a per-chain tree shared by all miners;
//! a miner's view is the arrival time of each block at that miner plus its
//! chosen tips. Blocks reach a peer `latency` after emission, and never
//! before their parent does, so no orphan buffering is needed.
//!
//! In sampled mode each miner's next success is an exponential clock with
//! rate `hash_rate / D_easiest`, where `D_easiest` is the lowest difficulty
//! among the chains it mines. The success is a hash below the easiest target;
//! which other targets it also clears is decided by that hash, so one success
//! can make a beacon block and several shard blocks from the same container.
//! With `seal` the nonce is actually ground; otherwise the hash is drawn
//! uniformly below the easiest target and the blocks carry no work.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;

use num_bigint::BigUint;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use shardpow::block::{BcBlock, BcBody, BcHeader, ScHeader, ShardField, ShardId, PROTOCOL_VERSION};
use shardpow::chain::timestamp::median_past_time;
use shardpow::chain::{adjust_difficulty, desired_timestamp, retarget_bits, BlockRecord, ChainKind, DifficultyParams};
use shardpow::consensus::stream::{StreamItem, StreamRecord, StreamWriter};
use shardpow::consensus::{
    assemble, expansion_check, shard_genesis_leaf, MergedCandidate, NetworkParams, NetworkState,
    ShardCandidate,
};
use shardpow::hash::Hash256;
use shardpow::mmr::{beacon_leaf_hash, shard_leaf_hash, MmrFrontier};
use shardpow::shard_tree::{verify_merged_mining, ShardMerkleTree};
use shardpow::{Amount, BitString, CompactTarget, Difficulty, Target};

use crate::config::{MiningMode, ShardSubset, SimConfig, VotePolicy};
use crate::stats::{
    AttemptStats, ChainStats, EpochStats, MinerStats, ReplayStats, SimEvent, SimStats, SupplyPoint,
};
use crate::SimError;

pub type NodeId = u32;

/// Real-mode grinding gives up after this many attempts per candidate.
const MAX_GRIND: u64 = 1 << 36;

#[derive(Clone, Copy, PartialEq, Eq, Debug, PartialOrd, Ord)]
pub enum ChainRef {
    Beacon,
    Shard(u32),
}

impl ChainRef {
    pub fn label(self) -> String {
        match self {
            ChainRef::Beacon => "beacon".into(),
            ChainRef::Shard(s) => format!("shard-{s}"),
        }
    }
}

/// A successful container and its nonce; shard blocks are cut from it on demand.
pub struct Mined {
    pub candidate: MergedCandidate,
    pub nonce: u64,
}

struct BcNode {
    parent: Option<NodeId>,
    height: u64,
    header: BcHeader,
    emitted: f64,
    seq: u64,
    miner: Option<usize>,
    cum: u128,
    difficulty: Difficulty,
    frontier: MmrFrontier,
    next_bits: CompactTarget,
    next_difficulty: f64,
    next_shard_count: u32,
    /// Genesis node of each shard on this branch, `[s − 1]`.
    shard_roots: Rc<Vec<NodeId>>,
    arrivals: Option<Box<[f64]>>,
    valid: bool,
}

struct ScNode {
    parent: Option<NodeId>,
    root: NodeId,
    height: u64,
    timestamp: u64,
    emitted: f64,
    seq: u64,
    miner: Option<usize>,
    cum: u128,
    difficulty: Difficulty,
    frontier: MmrFrontier,
    next_bits: CompactTarget,
    next_difficulty: f64,
    genesis_bc_height: u64,
    block: Option<Rc<Mined>>,
    arrivals: Option<Box<[f64]>>,
    valid: bool,
}

struct Template {
    candidate: MergedCandidate,
    bc_parent: NodeId,
    shard_parents: Vec<(u32, NodeId)>,
    easiest: Target,
}

struct RealJob {
    template: Template,
    nonce: u64,
    hash: Hash256,
    attempts: u64,
    started: f64,
}

struct MinerState {
    id: String,
    hash_rate: f64,
    latency: f64,
    honest: bool,
    shards: ShardSubset,
    vote: VotePolicy,
    bc_tip: NodeId,
    shard_tips: Vec<Option<NodeId>>,
    token: u64,
    job: Option<RealJob>,
}

enum Kind {
    Success { miner: usize, token: u64 },
    Deliver { miner: usize, chain: ChainRef, node: NodeId },
    RateChange { miner: usize, hash_rate: f64 },
}

struct Queued {
    time: f64,
    seq: u64,
    kind: Kind,
}

impl PartialEq for Queued {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Queued {
    // min-heap on (time, seq)
    fn cmp(&self, o: &Self) -> Ordering {
        o.time.total_cmp(&self.time).then(o.seq.cmp(&self.seq))
    }
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct SimOutput {
    pub stats: SimStats,
    pub events: Vec<SimEvent>,
    /// Accepted main-chain blocks in replay order, when requested.
    pub stream: Option<Vec<u8>>,
    pub params: NetworkParams,
}

/// Network parameters a scenario implies.
pub fn network_params(cfg: &SimConfig) -> NetworkParams {
    let bits = if let Some(t) = cfg.genesis.beacon_target_scaled {
        let scaled = BigUint::from(t.round() as u128) << (256 - cfg.hash_space_bits);
        Target::from_biguint(&scaled).unwrap_or(Target::MAX).to_compact()
    } else {
        let d = cfg.genesis.beacon_difficulty.unwrap_or(600.0 * cfg.total_hash_rate()).max(1.0);
        Target::from_difficulty(Difficulty::from_f64(d)).to_compact()
    };
    NetworkParams {
        initial_shard_count: cfg.initial_shards,
        genesis_time: cfg.genesis.time,
        beacon_genesis_bits: bits,
        daa_mode: cfg.daa_mode,
        expansion: cfg.expansion.clone(),
        ..NetworkParams::default()
    }
}

fn difficulty_of(bits: CompactTarget) -> Difficulty {
    bits.to_target().and_then(|t| t.difficulty()).expect("simulated bits are valid")
}

pub struct Sim {
    cfg: SimConfig,
    params: NetworkParams,
    rng: ChaCha8Rng,
    now: f64,
    node_seq: u64,
    queue_seq: u64,
    queue: BinaryHeap<Queued>,
    bc: Vec<BcNode>,
    sc: Vec<Vec<ScNode>>,
    miners: Vec<MinerState>,
    any_latency: bool,
    events: Vec<SimEvent>,
    successes: u64,
    attempts: u64,
    height_changes: Vec<(u64, usize, f64)>,
    rate_timeline: Vec<(f64, usize, f64)>,
    max_bc_height: u64,
    reorgs: Vec<u64>,
    dirty: Vec<bool>,
}

impl Sim {
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let params = network_params(&cfg);
        let any_latency = cfg.miners.iter().any(|m| m.latency_ms > 0.0);
        let miners = cfg
            .miners
            .iter()
            .map(|m| MinerState {
                id: m.id.clone(),
                hash_rate: m.hash_rate,
                latency: m.latency_ms / 1000.0,
                honest: m.honest,
                shards: m.shards.clone(),
                vote: m.vote,
                bc_tip: 0,
                shard_tips: Vec::new(),
                token: 0,
                job: None,
            })
            .collect();
        let mut height_changes = Vec::new();
        let mut queue = BinaryHeap::new();
        let mut queue_seq = 0;
        for c in &cfg.hash_rate_changes {
            let m = cfg.miners.iter().position(|x| x.id == c.miner).expect("validated");
            if let Some(h) = c.at_bc_height {
                height_changes.push((h, m, c.hash_rate));
            } else {
                queue.push(Queued {
                    time: c.at_time.unwrap(),
                    seq: queue_seq,
                    kind: Kind::RateChange { miner: m, hash_rate: c.hash_rate },
                });
                queue_seq += 1;
            }
        }
        let rate_timeline = cfg.miners.iter().enumerate().map(|(i, m)| (0.0, i, m.hash_rate)).collect();
        let n = cfg.miners.len();
        let mut sim = Sim {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            params,
            now: 0.0,
            node_seq: 0,
            queue_seq,
            queue,
            bc: Vec::new(),
            sc: Vec::new(),
            miners,
            any_latency,
            events: Vec::new(),
            successes: 0,
            attempts: 0,
            height_changes,
            rate_timeline,
            max_bc_height: 0,
            reorgs: vec![0],
            dirty: vec![false; n],
            cfg,
        };
        sim.create_genesis();
        for m in 0..n {
            sim.resample(m)?;
        }
        Ok(sim)
    }

    fn abs_time(&self, t: f64) -> u64 {
        self.params.genesis_time + t.floor() as u64
    }

    fn next_seq(&mut self) -> u64 {
        self.node_seq += 1;
        self.node_seq
    }

    fn push_event(&mut self, time: f64, kind: Kind) {
        self.queue_seq += 1;
        self.queue.push(Queued { time, seq: self.queue_seq, kind });
    }

    fn log(&mut self, e: SimEvent) {
        if self.cfg.record_events {
            self.events.push(e);
        }
    }

    fn create_genesis(&mut self) {
        let header = self.params.beacon_genesis();
        let difficulty = difficulty_of(header.bits);
        let mut roots = Vec::new();
        for s in 1..=self.params.initial_shard_count {
            let g = self.params.initial_shard_genesis(ShardId(s));
            roots.push(self.add_shard_genesis(s, g, 0, 0.0, true));
        }
        let field = header.shards;
        let node = BcNode {
            parent: None,
            height: 0,
            frontier: MmrFrontier::new().append(beacon_leaf_hash(&header), difficulty),
            next_bits: header.bits,
            next_difficulty: difficulty.to_f64(),
            next_shard_count: field.shard_count,
            emitted: 0.0,
            seq: 0,
            miner: None,
            cum: difficulty.raw(),
            difficulty,
            shard_roots: Rc::new(roots),
            arrivals: None,
            valid: true,
            header,
        };
        self.bc.push(node);
        let n = self.bc[0].shard_roots.len();
        for m in &mut self.miners {
            m.shard_tips = self.bc[0].shard_roots.iter().map(|&r| Some(r)).collect();
            m.shard_tips.resize(n, None);
        }
    }

    fn add_shard_genesis(&mut self, shard: u32, g: ScHeader, genesis_bc_height: u64, emitted: f64, valid: bool) -> NodeId {
        let difficulty = difficulty_of(g.bits);
        while self.sc.len() < shard as usize {
            self.sc.push(Vec::new());
            self.reorgs.push(0);
        }
        let tree = &mut self.sc[shard as usize - 1];
        let id = tree.len() as NodeId;
        self.node_seq += 1;
        tree.push(ScNode {
            parent: None,
            root: id,
            height: 0,
            timestamp: g.timestamp,
            emitted,
            seq: self.node_seq,
            miner: None,
            cum: difficulty.raw(),
            difficulty,
            frontier: MmrFrontier::new().append(shard_genesis_leaf(&g), difficulty),
            next_bits: g.bits,
            next_difficulty: difficulty.to_f64(),
            genesis_bc_height,
            block: None,
            arrivals: None,
            valid,
        });
        id
    }

    fn bc_timestamps(&self, tip: NodeId, count: usize) -> Vec<u64> {
        let mut out = Vec::with_capacity(count);
        let mut cur = Some(tip);
        while let Some(i) = cur {
            if out.len() == count {
                break;
            }
            let n = &self.bc[i as usize];
            out.push(n.header.timestamp);
            cur = n.parent;
        }
        out.reverse();
        out
    }

    fn sc_timestamps(&self, shard: u32, tip: NodeId, count: usize) -> Vec<u64> {
        let tree = &self.sc[shard as usize - 1];
        let mut out = Vec::with_capacity(count);
        let mut cur = Some(tip);
        while let Some(i) = cur {
            if out.len() == count {
                break;
            }
            let n = &tree[i as usize];
            out.push(n.timestamp);
            cur = n.parent;
        }
        out.reverse();
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn retarget(
        &self,
        kind: ChainKind,
        params: &DifficultyParams,
        height: u64,
        genesis_bc_height: u64,
        epoch_ts: impl FnOnce(usize) -> Vec<u64>,
        bits: CompactTarget,
        difficulty: Difficulty,
        parent_next: CompactTarget,
    ) -> CompactTarget {
        if (height + 1) % params.epoch_length != 0 {
            return parent_next;
        }
        let ts = epoch_ts(params.epoch_length as usize);
        let desired = self.params.genesis_time + desired_timestamp(kind, height, genesis_bc_height);
        let adj = adjust_difficulty(&ts, desired, difficulty, params, self.params.daa_mode);
        retarget_bits(bits, &adj)
    }

    /// Shard count the child of `node` must carry.
    fn child_shard_count(&self, node: NodeId) -> u32 {
        let n = &self.bc[node as usize];
        let p = &self.params.expansion;
        let count = n.header.shards.shard_count;
        if n.height + 1 < p.window {
            return count;
        }
        let mut fields: Vec<ShardField> = Vec::with_capacity(p.window as usize);
        let mut cur = Some(node);
        while let Some(i) = cur {
            if fields.len() as u64 == p.window {
                break;
            }
            fields.push(self.bc[i as usize].header.shards);
            cur = self.bc[i as usize].parent;
        }
        fields.reverse();
        count + expansion_check(&fields, p.window, p).unwrap_or(0)
    }

    fn ancestor(&self, mut node: NodeId, height: u64) -> NodeId {
        while self.bc[node as usize].height > height {
            node = self.bc[node as usize].parent.expect("height above genesis");
        }
        node
    }

    fn arrival_bc(&self, node: NodeId, miner: usize) -> f64 {
        let n = &self.bc[node as usize];
        n.arrivals.as_ref().map_or(n.emitted, |a| a[miner])
    }

    fn arrival_sc(&self, shard: u32, node: NodeId, miner: usize) -> f64 {
        let n = &self.sc[shard as usize - 1][node as usize];
        n.arrivals.as_ref().map_or(n.emitted, |a| a[miner])
    }

    fn arrivals_for(&self, sender: usize, emitted: f64, parent: impl Fn(usize) -> f64) -> Option<Box<[f64]>> {
        if !self.any_latency {
            return None;
        }
        let lat = self.miners[sender].latency;
        Some(
            (0..self.miners.len())
                .map(|r| {
                    let own = if r == sender { emitted } else { emitted + lat };
                    own.max(parent(r))
                })
                .collect(),
        )
    }

    fn template(&mut self, m: usize) -> Result<Template, SimError> {
        let now = self.abs_time(self.now);
        let tip = self.miners[m].bc_tip;
        let vote = match self.miners[m].vote {
            VotePolicy::Never => false,
            VotePolicy::Always => true,
            VotePolicy::Probability(p) => self.rng.random_bool(p),
        };
        let b = &self.bc[tip as usize];
        let recent = self.bc_timestamps(tip, self.params.beacon.median_window);
        let ts = now.max(median_past_time(&recent, self.params.beacon.median_window).map_or(0, |t| t + 1));
        let beacon = BcHeader {
            version: PROTOCOL_VERSION,
            prev_commitment: b.frontier.root(),
            tx_merkle_root: Hash256::ZERO,
            shards: ShardField::new(b.next_shard_count, vote),
            tree_encoding: BitString::new(),
            shard_tree_root: Hash256::ZERO,
            timestamp: ts,
            bits: b.next_bits,
            nonce: 0,
        };
        let mut easiest = (b.next_difficulty, b.next_bits);
        let mut shards = Vec::new();
        let mut shard_parents = Vec::new();
        let active = b.shard_roots.len() as u32;
        for s in 1..=active.min(b.next_shard_count) {
            if !self.miners[m].shards.contains(s) {
                continue;
            }
            let Some(t) = self.miners[m].shard_tips[s as usize - 1] else { continue };
            let node = &self.sc[s as usize - 1][t as usize];
            let recent = self.sc_timestamps(s, t, self.params.shard.median_window);
            let ts = now.max(median_past_time(&recent, self.params.shard.median_window).map_or(0, |x| x + 1));
            if node.next_difficulty < easiest.0 {
                easiest = (node.next_difficulty, node.next_bits);
            }
            shards.push(ShardCandidate {
                shard: ShardId(s),
                header: ScHeader {
                    version: PROTOCOL_VERSION,
                    prev_commitment: node.frontier.root(),
                    tx_merkle_root: Hash256::ZERO,
                    mm_number: 0,
                    timestamp: ts,
                    bits: node.next_bits,
                },
                transactions: Vec::new(),
            });
            shard_parents.push((s, t));
        }
        let mut candidate = assemble(beacon, Vec::new(), shards).map_err(|e| SimError::Runtime(e.to_string()))?;
        if !self.miners[m].honest {
            inflate_claims(&mut candidate).map_err(|e| SimError::Runtime(e.to_string()))?;
        }
        let easiest = easiest.1.to_target().map_err(|e| SimError::Runtime(e.to_string()))?;
        Ok(Template { candidate, bc_parent: tip, shard_parents, easiest })
    }

    fn easiest_difficulty(&self, m: usize) -> f64 {
        let miner = &self.miners[m];
        let b = &self.bc[miner.bc_tip as usize];
        let mut d = b.next_difficulty;
        for s in 1..=(b.shard_roots.len() as u32).min(b.next_shard_count) {
            if miner.shards.contains(s) {
                if let Some(t) = miner.shard_tips[s as usize - 1] {
                    d = d.min(self.sc[s as usize - 1][t as usize].next_difficulty);
                }
            }
        }
        d
    }

    fn resample(&mut self, m: usize) -> Result<(), SimError> {
        self.miners[m].token += 1;
        let token = self.miners[m].token;
        let rate = self.miners[m].hash_rate;
        match self.cfg.mode {
            MiningMode::Sampled => {
                let lambda = rate / self.easiest_difficulty(m);
                let dt = Exp::new(lambda).map_err(|e| SimError::Runtime(e.to_string()))?.sample(&mut self.rng);
                self.push_event(self.now + dt, Kind::Success { miner: m, token });
            }
            MiningMode::Real => {
                if let Some(job) = self.miners[m].job.take() {
                    let done = ((self.now - job.started) * rate) as u64;
                    self.attempts += done.min(job.attempts);
                }
                let template = self.template(m)?;
                let start = self.rng.next_u64();
                let (nonce, hash, attempts) = template
                    .candidate
                    .container
                    .grind(&template.easiest, start, MAX_GRIND)
                    .ok_or_else(|| SimError::Runtime("real mode: target too hard to grind".into()))?;
                let at = self.now + attempts as f64 / rate;
                self.miners[m].job = Some(RealJob { template, nonce, hash, attempts, started: self.now });
                self.push_event(at, Kind::Success { miner: m, token });
            }
        }
        Ok(())
    }

    fn on_success(&mut self, m: usize) -> Result<(), SimError> {
        self.successes += 1;
        let (template, nonce, hash) = match self.cfg.mode {
            MiningMode::Real => {
                let job = self.miners[m].job.take().expect("pending job");
                self.attempts += job.attempts;
                (job.template, job.nonce, job.hash)
            }
            MiningMode::Sampled => {
                let t = self.template(m)?;
                if self.cfg.seal {
                    let start = self.rng.next_u64();
                    let (nonce, hash, _) = t
                        .candidate
                        .container
                        .grind(&t.easiest, start, MAX_GRIND)
                        .ok_or_else(|| SimError::Runtime("sealing: target too hard to grind".into()))?;
                    (t, nonce, hash)
                } else {
                    let hash = uniform_below(&t.easiest, &mut self.rng);
                    (t, 0, hash)
                }
            }
        };
        self.emit(m, template, nonce, &hash)
    }

    fn emit(&mut self, m: usize, t: Template, nonce: u64, hash: &Hash256) -> Result<(), SimError> {
        let cleared = cleared_chains(&t.candidate, hash);
        let mined = Rc::new(Mined { candidate: t.candidate, nonce });
        let honest = self.miners[m].honest;
        let now = self.now;
        if cleared.beacon {
            let id = self.add_bc_node(m, t.bc_parent, mined.candidate.container(nonce));
            self.deliver(m, ChainRef::Beacon, id);
        }
        let container_hash = mined.candidate.container(nonce).header_hash();
        for (s, parent) in t.shard_parents {
            if !cleared.shards.contains(&ShardId(s)) {
                continue;
            }
            let sc = mined.candidate.shards.iter().find(|c| c.shard.0 == s).expect("candidate shard");
            let header = sc.header.clone();
            let own_valid = honest || {
                let c = &mined.candidate.container;
                verify_merged_mining(&c.shard_tree_root, &mined.candidate.mm_proof, s - 1, header.mm_number, c.shards.shard_count)
                    .is_ok()
            };
            let id = self.add_sc_node(m, s, parent, &header, &container_hash, mined.clone(), own_valid, now);
            self.deliver(m, ChainRef::Shard(s), id);
        }
        Ok(())
    }

    fn add_bc_node(&mut self, m: usize, parent: NodeId, header: BcHeader) -> NodeId {
        let seq = self.next_seq();
        let p = &self.bc[parent as usize];
        let height = p.height + 1;
        let difficulty = difficulty_of(header.bits);
        let frontier = p.frontier.append(beacon_leaf_hash(&header), difficulty);
        let cum = p.cum + difficulty.raw();
        let (valid, parent_next, roots) = (p.valid, p.next_bits, p.shard_roots.clone());
        let old_count = p.header.shards.shard_count;
        let ts = header.timestamp;
        let next_bits = self.retarget(
            ChainKind::Beacon,
            &self.params.beacon,
            height,
            0,
            |k| {
                let mut v = self.bc_timestamps(parent, k - 1);
                v.push(ts);
                v
            },
            header.bits,
            difficulty,
            parent_next,
        );
        let arrivals = self.arrivals_for(m, self.now, |r| self.arrival_bc(parent, r));
        let id = self.bc.len() as NodeId;
        let new_count = header.shards.shard_count;
        self.bc.push(BcNode {
            parent: Some(parent),
            height,
            emitted: self.now,
            seq,
            miner: Some(m),
            cum,
            difficulty,
            frontier,
            next_bits,
            next_difficulty: difficulty_of(next_bits).to_f64(),
            next_shard_count: 0,
            shard_roots: roots,
            arrivals,
            valid,
            header,
        });
        self.bc[id as usize].next_shard_count = self.child_shard_count(id);
        if new_count > old_count {
            self.log(SimEvent::Expansion { time: self.now, trigger_height: height, old_count, new_count });
        }
        // Shards triggered at n get their genesis at n + delay − 1.
        let delay = self.params.expansion.activation_delay;
        if height >= delay {
            let trigger = self.ancestor(id, height + 1 - delay);
            let before = self.bc[trigger as usize].parent.map(|p| self.bc[p as usize].header.shards.shard_count);
            let after = self.bc[trigger as usize].header.shards.shard_count;
            if let Some(before) = before.filter(|&b| after > b) {
                let node = &self.bc[id as usize];
                let reference = BlockRecord {
                    height,
                    header_hash: node.header.header_hash(),
                    timestamp: node.header.timestamp,
                    bits: node.header.bits,
                    difficulty,
                    mm_number: 1,
                    mining_epoch: 0,
                    reward: Amount::ZERO,
                    supply_after: Amount::ZERO,
                    shard_field: Some(node.header.shards),
                };
                let mut roots = (*node.shard_roots).clone();
                for s in before + 1..=after {
                    let g = self.params.expansion_shard_genesis(ShardId(s), &reference);
                    let r = self.add_shard_genesis(s, g, height, self.now, valid);
                    roots.push(r);
                }
                self.bc[id as usize].shard_roots = Rc::new(roots);
                for miner in &mut self.miners {
                    if miner.shard_tips.len() < after as usize {
                        miner.shard_tips.resize(after as usize, None);
                    }
                }
            }
        }
        let miner = self.miners[m].id.clone();
        self.log(SimEvent::Block {
            time: self.now,
            chain: "beacon".into(),
            height,
            miner,
            node: id,
            difficulty: difficulty.to_f64(),
        });
        if height > self.max_bc_height {
            self.max_bc_height = height;
            let due: Vec<_> = self.height_changes.iter().filter(|c| c.0 == height).map(|c| (c.1, c.2)).collect();
            for (miner, rate) in due {
                self.set_rate(miner, rate);
            }
        }
        id
    }

    #[allow(clippy::too_many_arguments)]
    fn add_sc_node(
        &mut self,
        m: usize,
        shard: u32,
        parent: NodeId,
        header: &ScHeader,
        container_hash: &Hash256,
        mined: Rc<Mined>,
        own_valid: bool,
        now: f64,
    ) -> NodeId {
        let seq = self.next_seq();
        let tree = &self.sc[shard as usize - 1];
        let p = &tree[parent as usize];
        let height = p.height + 1;
        let difficulty = difficulty_of(header.bits);
        let frontier = p.frontier.append(shard_leaf_hash(header, container_hash), difficulty);
        let (root, cum, valid, parent_next, g) = (p.root, p.cum + difficulty.raw(), p.valid && own_valid, p.next_bits, p.genesis_bc_height);
        let ts = header.timestamp;
        let next_bits = self.retarget(
            ChainKind::Shard,
            &self.params.shard,
            height,
            g,
            |k| {
                let mut v = self.sc_timestamps(shard, parent, k - 1);
                v.push(ts);
                v
            },
            header.bits,
            difficulty,
            parent_next,
        );
        let arrivals = self.arrivals_for(m, now, |r| self.arrival_sc(shard, parent, r));
        let tree = &mut self.sc[shard as usize - 1];
        let id = tree.len() as NodeId;
        tree.push(ScNode {
            parent: Some(parent),
            root,
            height,
            timestamp: ts,
            emitted: now,
            seq,
            miner: Some(m),
            cum,
            difficulty,
            frontier,
            next_bits,
            next_difficulty: difficulty_of(next_bits).to_f64(),
            genesis_bc_height: g,
            block: Some(mined),
            arrivals,
            valid,
        });
        if self.cfg.record_events {
            let miner = self.miners[m].id.clone();
            self.log(SimEvent::Block {
                time: now,
                chain: ChainRef::Shard(shard).label(),
                height,
                miner,
                node: id,
                difficulty: difficulty.to_f64(),
            });
        }
        id
    }

    fn deliver(&mut self, sender: usize, chain: ChainRef, node: NodeId) {
        for r in 0..self.miners.len() {
            let at = match chain {
                ChainRef::Beacon => self.arrival_bc(node, r),
                ChainRef::Shard(s) => self.arrival_sc(s, node, r),
            };
            if at <= self.now || r == sender {
                self.receive(r, chain, node);
            } else {
                self.push_event(at, Kind::Deliver { miner: r, chain, node });
            }
        }
    }

    fn receive(&mut self, r: usize, chain: ChainRef, node: NodeId) {
        let honest = self.miners[r].honest;
        match chain {
            ChainRef::Beacon => {
                let n = &self.bc[node as usize];
                let tip = self.miners[r].bc_tip;
                if (honest && !n.valid) || n.cum <= self.bc[tip as usize].cum {
                    return;
                }
                if n.parent != Some(tip) {
                    let depth = self.bc_reorg_depth(tip, node);
                    self.reorgs[0] += 1;
                    let miner = self.miners[r].id.clone();
                    self.log(SimEvent::Reorg { time: self.now, miner, chain: "beacon".into(), depth });
                }
                self.miners[r].bc_tip = node;
                self.sync_shard_tips(r);
                self.dirty[r] = true;
            }
            ChainRef::Shard(s) => {
                let idx = s as usize - 1;
                let Some(&root) = self.bc[self.miners[r].bc_tip as usize].shard_roots.get(idx) else { return };
                let n = &self.sc[idx][node as usize];
                if n.root != root || (honest && !n.valid) {
                    return;
                }
                let tip = self.miners[r].shard_tips[idx];
                if let Some(t) = tip {
                    if n.cum <= self.sc[idx][t as usize].cum {
                        return;
                    }
                    if n.parent != Some(t) {
                        let depth = self.sc_reorg_depth(s, t, node);
                        self.reorgs[s as usize] += 1;
                        let miner = self.miners[r].id.clone();
                        self.log(SimEvent::Reorg { time: self.now, miner, chain: ChainRef::Shard(s).label(), depth });
                    }
                }
                self.miners[r].shard_tips[idx] = Some(node);
                if self.miners[r].shards.contains(s) {
                    self.dirty[r] = true;
                }
            }
        }
    }

    /// After a beacon tip change, point each shard tip into the genesis that
    /// the new branch activated.
    fn sync_shard_tips(&mut self, r: usize) {
        let roots = self.bc[self.miners[r].bc_tip as usize].shard_roots.clone();
        let honest = self.miners[r].honest;
        for (idx, &root) in roots.iter().enumerate() {
            let current = self.miners[r].shard_tips[idx];
            if current.is_some_and(|t| self.sc[idx][t as usize].root == root) {
                continue;
            }
            let s = idx as u32 + 1;
            let mut best = root;
            for (i, n) in self.sc[idx].iter().enumerate() {
                if n.root == root
                    && (n.valid || !honest)
                    && n.cum > self.sc[idx][best as usize].cum
                    && self.arrival_sc(s, i as NodeId, r) <= self.now
                {
                    best = i as NodeId;
                }
            }
            self.miners[r].shard_tips[idx] = Some(best);
        }
        for idx in roots.len()..self.miners[r].shard_tips.len() {
            self.miners[r].shard_tips[idx] = None;
        }
    }

    fn bc_reorg_depth(&self, old: NodeId, new: NodeId) -> u64 {
        let (mut a, mut b) = (old, new);
        let mut depth = 0;
        while a != b {
            let (ha, hb) = (self.bc[a as usize].height, self.bc[b as usize].height);
            if ha >= hb {
                a = self.bc[a as usize].parent.unwrap();
                depth += 1;
            } else {
                b = self.bc[b as usize].parent.unwrap();
            }
        }
        depth
    }

    fn sc_reorg_depth(&self, shard: u32, old: NodeId, new: NodeId) -> u64 {
        let tree = &self.sc[shard as usize - 1];
        let (mut a, mut b) = (old, new);
        let mut depth = 0;
        while a != b {
            let (ha, hb) = (tree[a as usize].height, tree[b as usize].height);
            if ha >= hb {
                a = tree[a as usize].parent.unwrap();
                depth += 1;
            } else {
                b = tree[b as usize].parent.unwrap();
            }
        }
        depth
    }

    fn set_rate(&mut self, m: usize, rate: f64) {
        self.miners[m].hash_rate = rate;
        self.rate_timeline.push((self.now, m, rate));
        let miner = self.miners[m].id.clone();
        self.log(SimEvent::HashRate { time: self.now, miner, hash_rate: rate });
        self.dirty[m] = true;
    }

    fn done(&self) -> bool {
        self.cfg.stop.bc_blocks.is_some_and(|n| self.max_bc_height >= n)
    }

    /// Runs the event loop to the stop condition.
    pub fn run_loop(&mut self) -> Result<(), SimError> {
        while !self.done() {
            let Some(ev) = self.queue.pop() else { break };
            if self.cfg.stop.seconds.is_some_and(|s| ev.time > s) {
                self.now = self.cfg.stop.seconds.unwrap();
                break;
            }
            self.now = ev.time;
            match ev.kind {
                Kind::Success { miner, token } => {
                    if token != self.miners[miner].token {
                        continue;
                    }
                    self.on_success(miner)?;
                    self.dirty[miner] = true;
                }
                Kind::Deliver { miner, chain, node } => self.receive(miner, chain, node),
                Kind::RateChange { miner, hash_rate } => self.set_rate(miner, hash_rate),
            }
            for m in 0..self.miners.len() {
                if std::mem::take(&mut self.dirty[m]) {
                    self.resample(m)?;
                }
            }
        }
        Ok(())
    }

    fn best_bc(&self) -> NodeId {
        let mut best = 0;
        for (i, n) in self.bc.iter().enumerate() {
            if n.valid && n.cum > self.bc[best].cum {
                best = i;
            }
        }
        best as NodeId
    }

    fn best_sc(&self, shard: u32, root: NodeId) -> NodeId {
        let tree = &self.sc[shard as usize - 1];
        let mut best = root as usize;
        for (i, n) in tree.iter().enumerate() {
            if n.root == root && n.valid && n.cum > tree[best].cum {
                best = i;
            }
        }
        best as NodeId
    }

    fn bc_path(&self, tip: NodeId) -> Vec<NodeId> {
        let mut v = Vec::new();
        let mut cur = Some(tip);
        while let Some(i) = cur {
            v.push(i);
            cur = self.bc[i as usize].parent;
        }
        v.reverse();
        v
    }

    fn sc_path(&self, shard: u32, tip: NodeId) -> Vec<NodeId> {
        let tree = &self.sc[shard as usize - 1];
        let mut v = Vec::new();
        let mut cur = Some(tip);
        while let Some(i) = cur {
            v.push(i);
            cur = tree[i as usize].parent;
        }
        v.reverse();
        v
    }

    fn hash_rate_at(&self, t: f64, mines: impl Fn(usize) -> bool) -> f64 {
        let mut rates: Vec<f64> = vec![0.0; self.miners.len()];
        for &(at, m, r) in &self.rate_timeline {
            if at <= t {
                rates[m] = r;
            }
        }
        rates.iter().enumerate().filter(|(m, _)| mines(*m)).map(|(_, r)| r).sum()
    }

    fn epoch_stats(
        &self,
        emitted: &[f64],
        difficulty: &[Difficulty],
        l: u64,
        mines: impl Fn(usize) -> bool + Copy,
    ) -> Vec<EpochStats> {
        let height = emitted.len() as u64 - 1;
        let mut out = Vec::new();
        let mut k = 0;
        while k * l <= height {
            let start = k * l;
            let end = ((k + 1) * l - 1).min(height);
            let first = start.max(1);
            if end >= first {
                let blocks = end - first + 1;
                let mean = (emitted[end as usize] - emitted[first as usize - 1]) / blocks as f64;
                let d = difficulty[first as usize].to_f64();
                let h = self.hash_rate_at(emitted[first as usize - 1], mines);
                out.push(EpochStats {
                    epoch: k,
                    start_height: start,
                    blocks,
                    complete: end == (k + 1) * l - 1,
                    difficulty: d,
                    mean_block_time: mean,
                    expected_block_time: if h > 0.0 { d / h } else { f64::INFINITY },
                });
            }
            k += 1;
        }
        out
    }

    /// Replays the main chains cold and summarises the run.
    pub fn finish(self) -> SimOutput {
        let bc_tip = self.best_bc();
        let bc_main = self.bc_path(bc_tip);
        let roots = self.bc[bc_tip as usize].shard_roots.clone();
        let mut sc_main: Vec<Vec<NodeId>> = Vec::new();
        for (idx, &root) in roots.iter().enumerate() {
            let s = idx as u32 + 1;
            sc_main.push(self.sc_path(s, self.best_sc(s, root)));
        }

        // Replay in emission order; the beacon block of a container precedes
        // its shard blocks.
        let mut order: Vec<(f64, u64, ChainRef, NodeId)> = Vec::new();
        for &i in &bc_main[1..] {
            let n = &self.bc[i as usize];
            order.push((n.emitted, n.seq, ChainRef::Beacon, i));
        }
        for (idx, path) in sc_main.iter().enumerate() {
            for &i in &path[1..] {
                let n = &self.sc[idx][i as usize];
                order.push((n.emitted, n.seq, ChainRef::Shard(idx as u32 + 1), i));
            }
        }
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let sealed = self.cfg.mode == MiningMode::Real || self.cfg.seal;
        let mut state = NetworkState::genesis(self.params.clone());
        if !sealed {
            state = state.without_work_check();
        }
        let mut writer = self.cfg.export_stream.then(|| StreamWriter::new(&self.params, sealed));
        let n_miners = self.miners.len();
        let mut earned = vec![0u128; n_miners];
        let mut bc_blocks = vec![0u64; n_miners];
        let mut sc_blocks = vec![0u64; n_miners];
        let mut failures = 0u64;
        let mut first_failure = None;
        let mut series: Vec<SupplyPoint> = Vec::new();
        for &(emitted, _, chain, id) in &order {
            let network_time = self.params.genesis_time + emitted.ceil() as u64;
            let (item, miner) = match chain {
                ChainRef::Beacon => {
                    let n = &self.bc[id as usize];
                    (StreamItem::Beacon(BcBlock { header: n.header.clone(), body: BcBody::default() }), n.miner.unwrap())
                }
                ChainRef::Shard(s) => {
                    let n = &self.sc[s as usize - 1][id as usize];
                    let mined = n.block.as_ref().unwrap();
                    let block = mined.candidate.shard_block(ShardId(s), mined.nonce).expect("mined shard");
                    (StreamItem::Shard(ShardId(s), block), n.miner.unwrap())
                }
            };
            let result = match &item {
                StreamItem::Beacon(b) => state.apply_bc(b, network_time),
                StreamItem::Shard(s, b) => state.apply_sc(*s, b, network_time),
            };
            match result {
                Ok(a) => {
                    earned[miner] += a.reward.units();
                    match chain {
                        ChainRef::Beacon => {
                            bc_blocks[miner] += 1;
                            if a.height % self.cfg.stats_interval == 0 {
                                let (b, s) = state.supplies();
                                let prev = series.last();
                                let rel = |now: u128, before: Option<u128>| {
                                    before.filter(|&x| x > 0).map(|x| now as f64 / x as f64 - 1.0)
                                };
                                series.push(SupplyPoint {
                                    beacon_height: a.height,
                                    time: emitted,
                                    beacon_units: b.units(),
                                    shard_units: s.units(),
                                    earned_units: earned.iter().sum(),
                                    beacon_creation: rel(b.units(), prev.map(|p| p.beacon_units)),
                                    shard_creation: rel(s.units(), prev.map(|p| p.shard_units)),
                                });
                            }
                        }
                        ChainRef::Shard(_) => sc_blocks[miner] += 1,
                    }
                }
                Err(e) => {
                    failures += 1;
                    if first_failure.is_none() {
                        first_failure = Some(format!("{} block at {emitted:.3}s: {e}", chain.label()));
                    }
                }
            }
            if let Some(w) = writer.as_mut() {
                w.push(&StreamRecord { network_time, item });
            }
        }

        let (beacon_supply, shard_supply) = state.supplies();
        let total: u128 = earned.iter().sum();
        let miners = self
            .miners
            .iter()
            .enumerate()
            .map(|(i, m)| MinerStats {
                id: m.id.clone(),
                hash_rate: self.cfg.miners[i].hash_rate,
                beacon_blocks: bc_blocks[i],
                shard_blocks: sc_blocks[i],
                earned_units: earned[i],
                coins: Amount(earned[i]).to_coins(),
                share: if total > 0 { earned[i] as f64 / total as f64 } else { 0.0 },
            })
            .collect();

        let bc_emitted: Vec<f64> = bc_main.iter().map(|&i| self.bc[i as usize].emitted).collect();
        let bc_diff: Vec<Difficulty> = bc_main.iter().map(|&i| self.bc[i as usize].difficulty).collect();
        let bc_height = bc_main.len() as u64 - 1;
        let beacon = ChainStats {
            chain: "beacon".into(),
            height: bc_height,
            blocks_created: self.bc.len() as u64 - 1,
            orphans: self.bc.len() as u64 - 1 - bc_height,
            reorgs: self.reorgs[0],
            mean_block_time: if bc_height > 0 { bc_emitted[bc_height as usize] / bc_height as f64 } else { 0.0 },
            supply_units: beacon_supply.units(),
            epochs: self.epoch_stats(&bc_emitted, &bc_diff, self.params.beacon.epoch_length, |_| true),
        };
        let mut shards = Vec::new();
        for (idx, tree) in self.sc.iter().enumerate() {
            let s = idx as u32 + 1;
            let path = sc_main.get(idx).cloned().unwrap_or_default();
            let roots_created = tree.iter().filter(|n| n.parent.is_none()).count() as u64;
            let created = tree.len() as u64 - roots_created;
            let height = path.len().saturating_sub(1) as u64;
            let emitted: Vec<f64> = path.iter().map(|&i| tree[i as usize].emitted).collect();
            let diff: Vec<Difficulty> = path.iter().map(|&i| tree[i as usize].difficulty).collect();
            let mines = |m: usize| self.miners[m].shards.contains(s);
            shards.push(ChainStats {
                chain: ChainRef::Shard(s).label(),
                height,
                blocks_created: created,
                orphans: created - height,
                reorgs: self.reorgs.get(s as usize).copied().unwrap_or(0),
                mean_block_time: if height > 0 { (emitted[height as usize] - emitted[0]) / height as f64 } else { 0.0 },
                supply_units: state.shard(ShardId(s)).map_or(0, |c| c.supply().units()),
                epochs: if emitted.is_empty() {
                    Vec::new()
                } else {
                    self.epoch_stats(&emitted, &diff, self.params.shard.epoch_length, mines)
                },
            });
        }
        let stats = SimStats {
            seed: self.cfg.seed,
            duration: self.now,
            success_events: self.successes,
            beacon,
            shards,
            miners,
            total_issuance_units: total,
            beacon_supply_units: beacon_supply.units(),
            shard_supply_units: shard_supply.units(),
            supply_ratio: (shard_supply.units() > 0).then(|| beacon_supply.units() as f64 / shard_supply.units() as f64),
            supply_series: series,
            expansions: state.expansions().to_vec(),
            replay: ReplayStats { blocks: order.len() as u64, failures, first_failure, work_checked: sealed },
            attempts: (self.cfg.mode == MiningMode::Real).then(|| AttemptStats {
                successes: self.successes,
                attempts: self.attempts,
                mean_attempts: self.attempts as f64 / self.successes.max(1) as f64,
            }),
        };
        SimOutput { stats, events: self.events, stream: writer.map(|w| w.finish()), params: self.params }
    }
}

/// Which chains a hash satisfies for this container.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Cleared {
    pub beacon: bool,
    pub shards: Vec<ShardId>,
}

pub fn cleared_chains(candidate: &MergedCandidate, hash: &Hash256) -> Cleared {
    let meets = |bits: CompactTarget| bits.to_target().is_ok_and(|t| t.is_met_by(hash));
    Cleared {
        beacon: meets(candidate.container.bits),
        shards: candidate.shards.iter().filter(|s| meets(s.header.bits)).map(|s| s.shard).collect(),
    }
}

/// Blocks one mining hash produces from a candidate: a beacon block when it
/// clears the beacon target and a shard block for every shard target it
/// clears, all sharing the container.
pub fn mine_step(
    candidate: &MergedCandidate,
    nonce: u64,
    hash: &Hash256,
) -> (Option<BcBlock>, Vec<(ShardId, shardpow::ScBlock)>) {
    let c = cleared_chains(candidate, hash);
    let beacon = c.beacon.then(|| candidate.beacon_block(nonce));
    let shards = c.shards.iter().filter_map(|&s| candidate.shard_block(s, nonce).map(|b| (s, b))).collect();
    (beacon, shards)
}

/// A hash uniformly distributed below `target`.
pub fn uniform_below(target: &Target, rng: &mut impl RngCore) -> Hash256 {
    let mut bytes = [0u8; 32];
    rng.fill_bytes(&mut bytes);
    let v = (BigUint::from_bytes_be(&bytes) * target.to_biguint()) >> 256u32;
    let raw = v.to_bytes_be();
    let mut out = [0u8; 32];
    out[32 - raw.len()..].copy_from_slice(&raw);
    Hash256(out)
}

/// Makes every shard header claim `mm_number = 1` and recommits the tree, as
/// a miner inflating its shard rewards would.
fn inflate_claims(c: &mut MergedCandidate) -> Result<(), shardpow::shard_tree::ShardTreeError> {
    if c.shards.is_empty() {
        return Ok(());
    }
    for s in &mut c.shards {
        s.header.mm_number = 1;
    }
    let leaves: Vec<_> = c.shards.iter().map(|s| (s.shard.leaf_index(), s.header.header_hash())).collect();
    c.tree = ShardMerkleTree::build(&leaves, c.container.shards.shard_count)?;
    c.mm_proof.claimed_mm_number = 1;
    c.mm_proof.regular_hashes = c.tree.prove_merged_mining()?.regular_hashes;
    c.container.shard_tree_root = c.tree.root();
    Ok(())
}

pub fn run(cfg: SimConfig) -> Result<SimOutput, SimError> {
    let mut sim = Sim::new(cfg)?;
    sim.run_loop()?;
    Ok(sim.finish())
}

/// Independent runs on up to `jobs` threads; results keep the input order.
pub fn run_many(configs: Vec<SimConfig>, jobs: usize) -> Vec<Result<SimOutput, SimError>> {
    let jobs = jobs.max(1);
    let n = configs.len();
    let mut slots: Vec<Option<Result<SimOutput, SimError>>> = (0..n).map(|_| None).collect();
    let work: Vec<(usize, SimConfig)> = configs.into_iter().enumerate().collect();
    let chunks: Vec<Vec<(usize, SimConfig)>> = {
        let mut c: Vec<Vec<_>> = (0..jobs).map(|_| Vec::new()).collect();
        for (k, w) in work.into_iter().enumerate() {
            c[k % jobs].push(w);
        }
        c
    };
    std::thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|chunk| scope.spawn(move || chunk.into_iter().map(|(i, c)| (i, run(c))).collect::<Vec<_>>()))
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("simulation thread panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every run reports")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> SimConfig {
        SimConfig::from_toml(
            r#"
            seed = 4
            initial_shards = 2
            [stop]
            bc_blocks = 40
            [genesis]
            beacon_difficulty = 200.0
            [[miners]]
            id = "a"
            hash_rate = 1.0
            latency_ms = 3000.0
            [[miners]]
            id = "b"
            hash_rate = 1.0
            latency_ms = 3000.0
            "#,
        )
        .unwrap()
    }

    #[test]
    fn duplicate_delivery_is_ignored() {
        let mut sim = Sim::new(config()).unwrap();
        sim.run_loop().unwrap();
        let tips: Vec<_> = sim.miners.iter().map(|m| (m.bc_tip, m.shard_tips.clone())).collect();
        let events = sim.events.len();
        for r in 0..sim.miners.len() {
            let tip = sim.miners[r].bc_tip;
            sim.receive(r, ChainRef::Beacon, tip);
            for (idx, t) in sim.miners[r].shard_tips.clone().into_iter().enumerate() {
                sim.receive(r, ChainRef::Shard(idx as u32 + 1), t.unwrap());
            }
        }
        let after: Vec<_> = sim.miners.iter().map(|m| (m.bc_tip, m.shard_tips.clone())).collect();
        assert_eq!(tips, after);
        assert_eq!(sim.events.len(), events);
    }

    #[test]
    fn arrivals_never_precede_parents() {
        let mut sim = Sim::new(config()).unwrap();
        sim.run_loop().unwrap();
        for (i, n) in sim.bc.iter().enumerate().skip(1) {
            for r in 0..2 {
                assert!(sim.arrival_bc(i as NodeId, r) >= sim.arrival_bc(n.parent.unwrap(), r));
                assert!(sim.arrival_bc(i as NodeId, r) >= n.emitted);
            }
        }
    }

    #[test]
    fn uniform_below_stays_below() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for e in [1u32, 8, 100, 255] {
            let t = Target::pow2(e);
            for _ in 0..200 {
                assert!(t.is_met_by(&uniform_below(&t, &mut rng)));
            }
        }
    }
}
