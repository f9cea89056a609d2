//! Network-wide rules: genesis construction, verification, expansion, and a
//! single-view [`NetworkState`] that applies blocks in arrival order.

pub mod candidate;
pub mod expansion;
pub mod fork_choice;
pub mod mutation;
pub mod stream;
pub mod verify;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use candidate::{assemble, CandidateError, MergedCandidate, ShardCandidate};
pub use expansion::{expansion_check, expansion_step, ExpansionParams};
pub use fork_choice::{fork_choice, TipCandidate};
pub use verify::{verify_bc_block, verify_sc_block, BcContext, ScContext, VerificationError};

use crate::amount::Amount;
use crate::bits::BitString;
use crate::block::{BcBlock, BcHeader, ScBlock, ScHeader, ShardField, ShardId, Transaction, PROTOCOL_VERSION};
use crate::chain::epoch::{CoefficientSchedule, MINING_EPOCH_LENGTH};
use crate::chain::{block_reward, BlockRecord, ChainKind, ChainState, DaaMode, DifficultyParams, NewBlock};
use crate::hash::{blake2s_parts, Hash256};
use crate::mmr::{beacon_leaf_hash, shard_leaf_hash};
use crate::target::CompactTarget;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub initial_shard_count: u32,
    pub genesis_time: u64,
    pub beacon_genesis_bits: CompactTarget,
    pub beacon: DifficultyParams,
    pub shard: DifficultyParams,
    pub daa_mode: DaaMode,
    pub min_fee: Amount,
    pub expansion: ExpansionParams,
}

impl Default for NetworkParams {
    fn default() -> Self {
        NetworkParams {
            initial_shard_count: 4,
            genesis_time: 0,
            beacon_genesis_bits: CompactTarget(0x1d00ffff),
            beacon: DifficultyParams::beacon(),
            shard: DifficultyParams::shard(),
            daa_mode: DaaMode::Literal,
            min_fee: Amount::from_coins(0.0001),
            expansion: ExpansionParams::default(),
        }
    }
}

impl NetworkParams {
    pub fn beacon_genesis(&self) -> BcHeader {
        BcHeader {
            version: PROTOCOL_VERSION,
            prev_commitment: Hash256::ZERO,
            tx_merkle_root: Hash256::ZERO,
            shards: ShardField::new(self.initial_shard_count, false),
            tree_encoding: BitString::new(),
            shard_tree_root: Hash256::ZERO,
            timestamp: self.genesis_time,
            bits: self.beacon_genesis_bits,
            nonce: 0,
        }
    }

    /// Shards present from the start run at half the beacon genesis difficulty.
    pub fn initial_shard_genesis(&self, shard: ShardId) -> ScHeader {
        let bc = self.beacon_genesis();
        let target = self.beacon_genesis_bits.to_target().expect("valid genesis bits").scaled(2);
        shard_genesis(shard, bc.header_hash(), target.to_compact(), bc.timestamp)
    }

    /// Expansion shards reference beacon block `n + 9` and start at 80× its target.
    pub fn expansion_shard_genesis(&self, shard: ShardId, reference: &BlockRecord) -> ScHeader {
        let t = reference.bits.to_target().expect("valid bits");
        let target = expansion::expansion_genesis_target(&t, &self.expansion);
        shard_genesis(shard, reference.header_hash, target.to_compact(), reference.timestamp)
    }
}

fn shard_genesis(shard: ShardId, reference: Hash256, bits: CompactTarget, timestamp: u64) -> ScHeader {
    ScHeader {
        version: PROTOCOL_VERSION,
        prev_commitment: reference,
        tx_merkle_root: blake2s_parts(&[b"shard-genesis", &shard.0.to_le_bytes()]),
        mm_number: 1,
        timestamp,
        bits,
    }
}

/// MMR leaf of a shard genesis block (no container).
pub fn shard_genesis_leaf(header: &ScHeader) -> Hash256 {
    shard_leaf_hash(header, &Hash256::ZERO)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionEvent {
    pub trigger_height: u64,
    pub activation_height: u64,
    pub old_count: u32,
    pub new_count: u32,
}

/// Result of applying one block.
#[derive(Clone, Debug, PartialEq)]
pub struct Applied {
    pub height: u64,
    pub reward: Amount,
}

/// One node's view of all chains, extended block by block.
#[derive(Clone, Debug)]
pub struct NetworkState {
    pub params: NetworkParams,
    beacon: ChainState,
    shards: BTreeMap<ShardId, ChainState>,
    schedule: CoefficientSchedule,
    fields: Vec<ShardField>,
    expansions: Vec<ExpansionEvent>,
    check_work: bool,
}

impl NetworkState {
    pub fn genesis(params: NetworkParams) -> Self {
        let bc = params.beacon_genesis();
        let beacon = ChainState::new(
            ChainKind::Beacon,
            None,
            0,
            params.genesis_time,
            params.beacon.clone(),
            params.daa_mode,
            NewBlock {
                header_hash: bc.header_hash(),
                leaf_hash: beacon_leaf_hash(&bc),
                timestamp: bc.timestamp,
                bits: bc.bits,
                mm_number: 1,
                reward: Amount::ZERO,
                shard_field: Some(bc.shards),
            },
        );
        let mut schedule = CoefficientSchedule::new(MINING_EPOCH_LENGTH);
        schedule.record_beacon_block(0, beacon.tip().difficulty);
        let mut s = NetworkState {
            beacon,
            shards: BTreeMap::new(),
            schedule,
            fields: vec![bc.shards],
            expansions: Vec::new(),
            check_work: true,
            params,
        };
        for id in 1..=s.params.initial_shard_count {
            let g = s.params.initial_shard_genesis(ShardId(id));
            s.add_shard(ShardId(id), g, 0);
        }
        s
    }

    fn add_shard(&mut self, id: ShardId, g: ScHeader, genesis_bc_height: u64) {
        let chain = ChainState::new(
            ChainKind::Shard,
            Some(id),
            genesis_bc_height,
            self.params.genesis_time,
            self.params.shard.clone(),
            self.params.daa_mode,
            NewBlock {
                header_hash: g.header_hash(),
                leaf_hash: shard_genesis_leaf(&g),
                timestamp: g.timestamp,
                bits: g.bits,
                mm_number: 1,
                reward: Amount::ZERO,
                shard_field: None,
            },
        );
        self.shards.insert(id, chain);
    }

    /// Disables the mining-hash comparison, for replaying sampled simulations.
    pub fn without_work_check(mut self) -> Self {
        self.check_work = false;
        self
    }

    pub fn checks_work(&self) -> bool {
        self.check_work
    }

    pub fn beacon(&self) -> &ChainState {
        &self.beacon
    }

    pub fn shard(&self, id: ShardId) -> Option<&ChainState> {
        self.shards.get(&id)
    }

    pub fn shards(&self) -> impl Iterator<Item = (&ShardId, &ChainState)> {
        self.shards.iter()
    }

    pub fn schedule(&self) -> &CoefficientSchedule {
        &self.schedule
    }

    pub fn expansions(&self) -> &[ExpansionEvent] {
        &self.expansions
    }

    pub fn active_shards(&self) -> u32 {
        self.shards.len() as u32
    }

    /// Shard count a beacon block at `height` must carry.
    pub fn expected_shard_count(&self, height: u64) -> u32 {
        assert!(height >= 1 && height as usize <= self.fields.len());
        let prev = self.fields[height as usize - 1].shard_count;
        prev + expansion_check(&self.fields, height, &self.params.expansion).unwrap_or(0)
    }

    pub fn bc_context<'a>(&'a self, recent: &'a [u64], network_time: u64) -> BcContext<'a> {
        BcContext {
            params: &self.params,
            expected_prev: self.beacon.commitment(),
            expected_bits: self.beacon.next_bits(),
            recent_timestamps: recent,
            network_time,
            expected_shard_count: self.expected_shard_count(self.beacon.height() + 1),
            check_work: self.check_work,
        }
    }

    pub fn verify_bc(&self, block: &BcBlock, network_time: u64) -> Result<(), VerificationError> {
        let recent = self.beacon.recent_timestamps(self.params.beacon.median_window);
        verify_bc_block(&self.bc_context(&recent, network_time), block)
    }

    pub fn sc_context<'a>(&'a self, shard: ShardId, recent: &'a [u64], network_time: u64) -> Option<ScContext<'a>> {
        let chain = self.shards.get(&shard)?;
        Some(ScContext {
            params: &self.params,
            shard,
            active_shards: self.active_shards(),
            expected_prev: chain.commitment(),
            expected_bits: chain.next_bits(),
            recent_timestamps: recent,
            network_time,
            current_shard_count: self.expected_shard_count(self.beacon.height() + 1),
            check_work: self.check_work,
        })
    }

    pub fn verify_sc(&self, shard: ShardId, block: &ScBlock, network_time: u64) -> Result<(), VerificationError> {
        let Some(chain) = self.shards.get(&shard) else {
            return Err(VerificationError { step: 1, detail: format!("shard {shard} is not active") });
        };
        let recent = chain.recent_timestamps(self.params.shard.median_window);
        verify_sc_block(&self.sc_context(shard, &recent, network_time).unwrap(), block)
    }

    pub fn apply_bc(&mut self, block: &BcBlock, network_time: u64) -> Result<Applied, VerificationError> {
        self.verify_bc(block, network_time)?;
        let h = &block.header;
        let height = self.beacon.height() + 1;
        let difficulty = h.bits.to_target().and_then(|t| t.difficulty()).expect("verified bits");
        let epoch = self.beacon.mining_epoch(height);
        let reward = block_reward(ChainKind::Beacon, difficulty, 1, epoch, &self.schedule).expect("beacon reward");
        self.beacon.push(NewBlock {
            header_hash: h.header_hash(),
            leaf_hash: beacon_leaf_hash(h),
            timestamp: h.timestamp,
            bits: h.bits,
            mm_number: 1,
            reward,
            shard_field: Some(h.shards),
        });
        self.schedule.record_beacon_block(height, difficulty);
        let old = self.fields.last().unwrap().shard_count;
        self.fields.push(h.shards);
        if h.shards.shard_count > old {
            self.expansions.push(ExpansionEvent {
                trigger_height: height,
                activation_height: height + self.params.expansion.activation_delay,
                old_count: old,
                new_count: h.shards.shard_count,
            });
        }
        for ev in self.expansions.clone() {
            if ev.activation_height == height + 1 {
                let reference = self.beacon.tip().clone();
                for id in ev.old_count + 1..=ev.new_count {
                    let g = self.params.expansion_shard_genesis(ShardId(id), &reference);
                    self.add_shard(ShardId(id), g, height);
                }
            }
        }
        Ok(Applied { height, reward })
    }

    pub fn apply_sc(&mut self, shard: ShardId, block: &ScBlock, network_time: u64) -> Result<Applied, VerificationError> {
        self.verify_sc(shard, block, network_time)?;
        let h = &block.header;
        let schedule = &self.schedule;
        let chain = self.shards.get_mut(&shard).expect("verified shard");
        let height = chain.height() + 1;
        let difficulty = h.bits.to_target().and_then(|t| t.difficulty()).expect("verified bits");
        let epoch = chain.mining_epoch(height);
        let reward = block_reward(ChainKind::Shard, difficulty, h.mm_number, epoch, schedule).expect("mm_number ≥ 1");
        chain.push(NewBlock {
            header_hash: h.header_hash(),
            leaf_hash: shard_leaf_hash(h, &block.body.bc_container.header_hash()),
            timestamp: h.timestamp,
            bits: h.bits,
            mm_number: h.mm_number,
            reward,
            shard_field: None,
        });
        Ok(Applied { height, reward })
    }

    /// A container extending every tip, with one candidate per active shard.
    pub fn candidate(
        &self,
        timestamp: u64,
        vote: bool,
        beacon_transactions: Vec<Transaction>,
        mut shard_transactions: impl FnMut(ShardId) -> Vec<Transaction>,
    ) -> Result<MergedCandidate, CandidateError> {
        let count = self.expected_shard_count(self.beacon.height() + 1);
        let beacon = BcHeader {
            version: PROTOCOL_VERSION,
            prev_commitment: self.beacon.commitment(),
            tx_merkle_root: Hash256::ZERO,
            shards: ShardField::new(count, vote),
            tree_encoding: BitString::new(),
            shard_tree_root: Hash256::ZERO,
            timestamp,
            bits: self.beacon.next_bits(),
            nonce: 0,
        };
        let shards = self
            .shards
            .iter()
            .map(|(&id, chain)| ShardCandidate {
                shard: id,
                header: ScHeader {
                    version: PROTOCOL_VERSION,
                    prev_commitment: chain.commitment(),
                    tx_merkle_root: Hash256::ZERO,
                    mm_number: 0,
                    timestamp,
                    bits: chain.next_bits(),
                },
                transactions: shard_transactions(id),
            })
            .collect();
        assemble(beacon, beacon_transactions, shards)
    }

    /// Beacon supply and the sum over shards.
    pub fn supplies(&self) -> (Amount, Amount) {
        (self.beacon.supply(), self.shards.values().map(|c| c.supply()).sum())
    }
}
