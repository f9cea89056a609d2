use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shardpow::bits::BitString;
use shardpow::block::{BcHeader, ShardField};
use shardpow::codec::{Decode, Encode};
use shardpow::hash::{blake2s, Hash256};
use shardpow::mmr::*;
use shardpow::target::{CompactTarget, Difficulty, Target};

fn bits_for(d: u64) -> CompactTarget {
    Target::from_difficulty(Difficulty::from_integer(d)).to_compact()
}

fn header(i: u64, bits: CompactTarget) -> BcHeader {
    BcHeader {
        version: 1,
        prev_commitment: blake2s(&i.to_le_bytes()),
        tx_merkle_root: Hash256::ZERO,
        shards: ShardField::new(1, false),
        tree_encoding: BitString::new(),
        shard_tree_root: Hash256::ZERO,
        timestamp: i,
        bits,
        nonce: 0,
    }
}

/// Header with valid work at `bits`.
fn mined(i: u64, bits: CompactTarget) -> BcHeader {
    let mut h = header(i, bits);
    h.nonce = h.grind(&bits.to_target().unwrap(), 0, u64::MAX).unwrap().0;
    h
}

/// Header claiming `bits` whose work does not meet them.
fn unmined(i: u64, bits: CompactTarget) -> BcHeader {
    let t = bits.to_target().unwrap();
    let mut h = header(i, bits);
    while t.is_met_by(&h.mining_hash()) {
        h.nonce += 1;
    }
    h
}

fn weight(h: &BcHeader) -> Difficulty {
    h.bits.to_target().unwrap().difficulty().unwrap()
}

fn build(headers: &[BcHeader]) -> WeightedMmr {
    let mut m = WeightedMmr::new();
    for h in headers {
        m.append(beacon_leaf_hash(h), weight(h));
    }
    m
}

fn honest_chain(n: u64, rng: &mut ChaCha8Rng) -> Vec<BcHeader> {
    (0..n).map(|i| mined(i, bits_for(rng.random_range(2..=16)))).collect()
}

#[test]
fn inclusion_for_every_index_at_1000_leaves() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let chain = honest_chain(1000, &mut rng);
    let m = build(&chain);
    let (root, w) = (m.root(), m.total_weight());
    let bound = 2 * 10 + 1;
    for i in 0..1000 {
        let p = m.prove_inclusion(i).unwrap();
        assert!(verify_inclusion(&root, w, &p), "index {i}");
        assert!(p.node_count() <= bound, "index {i}: {} nodes", p.node_count());
    }
    assert!(m.prove_inclusion(1000).is_none());
}

#[test]
fn any_single_perturbation_fails() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let chain = honest_chain(1000, &mut rng);
    let m = build(&chain);
    let (root, w) = (m.root(), m.total_weight());
    let one = Difficulty::from_raw(1);
    for i in (0..1000).step_by(7) {
        let p = m.prove_inclusion(i).unwrap();
        let mut variants = Vec::new();
        let mut q = p.clone();
        q.leaf.hash = q.leaf.hash.with_bit_flipped(3);
        variants.push(q);
        let mut q = p.clone();
        q.leaf.weight += one;
        variants.push(q);
        for k in 0..p.siblings.len() {
            let mut q = p.clone();
            q.siblings[k].hash = q.siblings[k].hash.with_bit_flipped(k);
            variants.push(q);
            let mut q = p.clone();
            q.siblings[k].weight += one;
            variants.push(q);
        }
        for k in 0..p.other_peaks.len() {
            let mut q = p.clone();
            q.other_peaks[k].hash = q.other_peaks[k].hash.with_bit_flipped(200);
            variants.push(q);
            let mut q = p.clone();
            q.other_peaks[k].weight = Difficulty::from_raw(q.other_peaks[k].weight.raw() - 1);
            variants.push(q);
        }
        let mut q = p.clone();
        q.leaf_index ^= 1;
        variants.push(q);
        for q in &variants {
            assert!(!verify_inclusion(&root, w, q), "index {i}: {q:?}");
        }
        assert!(!verify_inclusion(&root, w + one, &p));
        assert!(!verify_inclusion(&root.with_bit_flipped(0), w, &p));
    }
}

#[test]
fn honest_weight_proofs_verify() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let chain = honest_chain(1000, &mut rng);
    let m = build(&chain);
    let v = ChainWeightVerifier { sample_count: 50, genesis_leaf: beacon_leaf_hash(&chain[0]) };
    let samples = prove_chain_weight(&m, 50, |i| LeafPayload::Beacon(chain[i as usize].clone()));
    assert_eq!(samples.len(), 50);
    v.verify(&m.root(), m.total_weight(), &samples).unwrap();
    for s in &samples {
        assert!(s.proof.node_count() <= 21);
    }
    // Claiming a different weight moves the sample points and breaks every opening.
    let bigger = m.total_weight() + Difficulty::from_integer(1);
    assert!(!verify_chain_weight(&m.root(), bigger, &samples, &v));
    // Wrong payload for one sample.
    let mut bad = samples.clone();
    bad[3].payload = LeafPayload::Beacon(chain[(bad[3].proof.leaf_index as usize + 1) % 1000].clone());
    assert!(v.verify(&m.root(), m.total_weight(), &bad).is_err());
}

/// An adversary holds real work for 70% of the weight it claims and fills the
/// rest with blocks whose proof of work does not meet their stated targets.
#[test]
fn weight_proof_catches_thirty_percent_deficit() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let bits = bits_for(8);
    let real: Vec<_> = (0..700).map(|i| mined(i, bits)).collect();
    let fake: Vec<_> = (0..300).map(|i| unmined(10_000 + i, bits)).collect();
    let trials = 1000;
    let mut detected = 0;
    for _ in 0..trials {
        let mut chain: Vec<(BcHeader, bool)> = real.iter().map(|h| (h.clone(), true)).chain(fake.iter().map(|h| (h.clone(), false))).collect();
        chain[1..].shuffle(&mut rng);
        // genesis is always real
        if !chain[0].1 {
            let k = chain.iter().position(|c| c.1).unwrap();
            chain.swap(0, k);
        }
        let headers: Vec<_> = chain.iter().map(|c| c.0.clone()).collect();
        let m = build(&headers);
        let v = ChainWeightVerifier { sample_count: 50, genesis_leaf: beacon_leaf_hash(&headers[0]) };
        let samples = prove_chain_weight(&m, 50, |i| LeafPayload::Beacon(headers[i as usize].clone()));
        if !verify_chain_weight(&m.root(), m.total_weight(), &samples, &v) {
            detected += 1;
        }
    }
    assert!(detected as f64 / trials as f64 >= 0.999, "detected {detected}/{trials}");
}

#[test]
fn frontier_and_export_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut m = WeightedMmr::new();
    let mut f = MmrFrontier::new();
    for i in 0..300u64 {
        let h = blake2s(&i.to_le_bytes());
        let w = Difficulty::from_raw(rng.random_range(1..1u128 << 60));
        m.append(h, w);
        f = f.append(h, w);
        assert_eq!(m.root(), f.root());
        assert_eq!(m.total_weight(), f.total_weight());
    }
    let back = WeightedMmr::decode(&m.encode()).unwrap();
    assert_eq!(back.root(), m.root());
    let mut overflow = WeightedMmr::new();
    overflow.append(Hash256::ZERO, Difficulty::from_raw(u128::MAX));
    let mut bytes = overflow.encode();
    bytes[0] = 2;
    bytes.extend_from_slice(&[0u8; 32]);
    bytes.extend_from_slice(&1u128.to_le_bytes());
    assert!(WeightedMmr::decode(&bytes).is_err());
}

#[test]
fn rule_one_window() {
    let w = [Difficulty::from_integer(100), Difficulty::from_integer(250)];
    assert!(rule1_check(Difficulty::from_integer(500), &w, (2, 1)).unwrap());
    assert!(!rule1_check(Difficulty::from_integer(501), &w, (2, 1)).unwrap());
    assert!(rule1_check(Difficulty::from_integer(1), &[], (2, 1)).is_err());
}
