//! Single-field mutations of honest blocks and the verification step each
//! must fail at.
//!
//! Where a mutation touches the container, the nonce is ground again so that
//! the block still carries valid work and the failure comes from the mutated
//! field itself. Mutations that leave the work invalid by construction (nonce,
//! vote flag) are expected to fail the work step.

use super::{MergedCandidate, NetworkParams, NetworkState, ShardCandidate, VerificationError};
use crate::amount::Amount;
use crate::block::{BcBlock, BcHeader, ScBlock, ShardId, Transaction};
use crate::chain::DifficultyParams;
use crate::target::{Difficulty, Target};

#[derive(Clone, Debug)]
pub struct MutationOutcome {
    pub name: &'static str,
    pub designated_step: u8,
    pub result: Result<(), VerificationError>,
}

impl MutationOutcome {
    pub fn passed(&self) -> bool {
        matches!(&self.result, Err(e) if e.step == self.designated_step)
    }
}

/// Network used by the catalog: four shards, beacon difficulty 4096.
pub fn catalog_params() -> NetworkParams {
    NetworkParams {
        initial_shard_count: 4,
        genesis_time: 1_700_000_000,
        beacon_genesis_bits: Target::from_difficulty(Difficulty::from_integer(4096)).to_compact(),
        beacon: DifficultyParams::beacon(),
        shard: DifficultyParams::shard(),
        ..NetworkParams::default()
    }
}

fn tx(shard: u32, fee: Amount) -> Transaction {
    Transaction { sender: format!("alice-{shard}"), receiver: "bob".into(), amount: Amount::from_coins(1.0), fee, shard_id: shard }
}

fn grind(header: &BcHeader, target: &Target) -> u64 {
    header.grind(target, 0, u64::MAX).expect("target reachable").0
}

fn beacon_target(state: &NetworkState) -> Target {
    state.beacon().next_bits().to_target().unwrap()
}

fn shard_target(state: &NetworkState, id: ShardId) -> Target {
    state.shard(id).unwrap().next_bits().to_target().unwrap()
}

/// Mines `n` beacon blocks merge-mining every shard.
pub fn extend_honestly(state: &mut NetworkState, n: usize) {
    for _ in 0..n {
        let ts = state.beacon().tip().timestamp + 600;
        let fee = state.params.min_fee;
        let c = state.candidate(ts, false, vec![tx(0, fee)], |id| vec![tx(id.0, fee)]).unwrap();
        let nonce = grind(&c.container, &beacon_target(state));
        state.apply_bc(&c.beacon_block(nonce), ts).unwrap();
        for id in c.shard_ids().collect::<Vec<_>>() {
            state.apply_sc(id, &c.shard_block(id, nonce).unwrap(), ts).unwrap();
        }
    }
}

/// Candidate that mines shards 1..=3 of 4, leaving a magic node.
fn partial_candidate(state: &NetworkState, ts: u64, edit: impl FnOnce(&mut Vec<ShardCandidate>)) -> MergedCandidate {
    let fee = state.params.min_fee;
    let full = state.candidate(ts, false, vec![tx(0, fee)], |id| vec![tx(id.0, fee)]).unwrap();
    let mut shards: Vec<_> = full.shards.into_iter().filter(|s| s.shard.0 != 4).collect();
    edit(&mut shards);
    let beacon = BcHeader { tree_encoding: Default::default(), ..full.container };
    super::assemble(beacon, full.beacon_transactions, shards).unwrap()
}

fn sc_block(state: &NetworkState, c: &MergedCandidate, id: ShardId) -> ScBlock {
    let nonce = grind(&c.container, &shard_target(state, id));
    c.shard_block(id, nonce).unwrap()
}

/// Honest blocks at the next height, all of which must verify.
pub struct Honest {
    pub state: NetworkState,
    pub time: u64,
    pub beacon: BcBlock,
    pub shards: Vec<(ShardId, ScBlock)>,
}

pub fn honest_fixture() -> Honest {
    let mut state = NetworkState::genesis(catalog_params());
    extend_honestly(&mut state, 3);
    let time = state.beacon().tip().timestamp + 600;
    let c = partial_candidate(&state, time, |_| {});
    let nonce = grind(&c.container, &beacon_target(&state));
    let beacon = c.beacon_block(nonce);
    let shards = c.shard_ids().map(|id| (id, c.shard_block(id, nonce).unwrap())).collect();
    Honest { state, time, beacon, shards }
}

fn regrind_sc(state: &NetworkState, id: ShardId, mut b: ScBlock) -> ScBlock {
    b.body.bc_container.nonce = grind(&b.body.bc_container, &shard_target(state, id));
    b
}

pub fn run_catalog() -> (Honest, Vec<MutationOutcome>) {
    let h = honest_fixture();
    let s = &h.state;
    let t = h.time;
    let one = ShardId(1);
    let sc1 = h.shards.iter().find(|(id, _)| *id == one).unwrap().1.clone();
    let verify_sc = |id: ShardId, b: &ScBlock| s.verify_sc(id, b, t);
    let mut out = Vec::new();
    let mut push = |name, step, result| out.push(MutationOutcome { name, designated_step: step, result });

    let mut b = sc1.clone();
    let target = shard_target(s, one);
    b.body.bc_container.nonce = (1..)
        .map(|d| sc1.body.bc_container.nonce.wrapping_add(d))
        .find(|&n| !target.is_met_by(&BcHeader { nonce: n, ..sc1.body.bc_container.clone() }.mining_hash()))
        .unwrap();
    push("nonce", 2, verify_sc(one, &b));

    let mut b = sc1.clone();
    b.header.bits = target.scaled(2).to_compact();
    push("target", 2, verify_sc(one, &b));

    let mut b = sc1.clone();
    b.header.mm_number = b.body.bc_container.shards.shard_count + 1;
    push("mm_number", 3, verify_sc(one, &b));

    let mut b = sc1.clone();
    b.body.mm_proof.encoding.flip(0);
    push("encoding_bit", 5, verify_sc(one, &b));

    let mut b = sc1.clone();
    b.body.shard_proof.path[0] = b.body.shard_proof.path[0].with_bit_flipped(0);
    push("proof_hash", 4, verify_sc(one, &b));

    let mut b = sc1.clone();
    b.header.timestamp = t + s.params.shard.future_window + 1;
    push("timestamp", 1, verify_sc(one, &b));

    let c = partial_candidate(s, t, |_| {});
    let mut header = c.container(0);
    header.shards.shard_count += 1;
    header.nonce = grind(&header, &beacon_target(s));
    let b = BcBlock { header, body: h.beacon.body.clone() };
    push("shard_count", 3, s.verify_bc(&b, t));

    // Shard 2's header placed at shard 1's leaf.
    let c = partial_candidate(s, t, |v| {
        v.retain(|c| c.shard.0 != 1);
        v.iter_mut().find(|c| c.shard.0 == 2).unwrap().shard = one;
    });
    let b = sc_block(s, &c, one);
    push("leaf_position", 5, verify_sc(ShardId(2), &b));

    let min_fee = s.params.min_fee;
    let c = partial_candidate(s, t, |v| v[0].transactions[0].fee = Amount(min_fee.0 - 1));
    push("fee", 6, verify_sc(one, &sc_block(s, &c, one)));

    let c = partial_candidate(s, t, |v| v[0].transactions = (0..600).map(|_| tx(1, min_fee)).collect());
    push("body_size", 1, verify_sc(one, &sc_block(s, &c, one)));

    let mut b = h.beacon.clone();
    b.header.shards.vote = !b.header.shards.vote;
    push("vote_flag", 2, s.verify_bc(&b, t));

    let mut b = sc1.clone();
    b.body.bc_container.shard_tree_root = b.body.bc_container.shard_tree_root.with_bit_flipped(7);
    let b = regrind_sc(s, one, b);
    push("container_root", 4, verify_sc(one, &b));

    (h, out)
}
