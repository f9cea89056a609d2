use proptest::prelude::*;
use shardpow::chain::epoch::{first_coefficient, lambda, MINING_EPOCH_LENGTH};
use shardpow::chain::*;
use shardpow::consensus::{expansion_step, fork_choice, TipCandidate};
use shardpow::target::Difficulty;
use shardpow::Amount;

#[test]
fn first_coefficient_value() {
    let k1 = (12.0 * 0.8f64.ln() / 144.0).exp();
    assert!((first_coefficient() - k1).abs() < 1e-9);
    assert!((lambda().powi(144) - 0.8).abs() < 1e-12);
}

#[test]
fn reward_examples() {
    let s = CoefficientSchedule::new(MINING_EPOCH_LENGTH);
    let d48 = Difficulty::from_integer(1 << 48);
    assert_eq!(block_reward(ChainKind::Beacon, d48, 1, 1, &s).unwrap().to_coins(), 1.0);
    let d49 = Difficulty::from_integer(1 << 49);
    assert_eq!(block_reward(ChainKind::Shard, d49, 4, 1, &s).unwrap().to_coins(), 0.5);
    let r = block_reward(ChainKind::Beacon, d48, 1, 2, &s).unwrap().to_coins();
    assert!((r - first_coefficient()).abs() < 1e-12, "{r}");
    assert!(block_reward(ChainKind::Shard, d49, 0, 1, &s).is_err());
}

fn trace(epochs: usize, l: u64, diffs: &[u64]) -> CoefficientSchedule {
    let mut s = CoefficientSchedule::new(l);
    s.record_beacon_block(0, Difficulty::from_integer(diffs[0]));
    for h in 1..=(epochs as u64 * l) {
        let d = diffs[(h as usize) % diffs.len()];
        s.record_beacon_block(h, Difficulty::from_integer(d));
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Randomised difficulty traces over 50 epochs.
    #[test]
    fn coefficients_nondecreasing_bounded_absorbing(
        diffs in proptest::collection::vec(1u64..1_000_000, 1..40),
        l in 1u64..6,
    ) {
        let s = trace(50, l, &diffs);
        let k = s.coefficients();
        prop_assert_eq!(k.len(), 50);
        prop_assert!((k[0] - first_coefficient()).abs() < 1e-15);
        for w in k.windows(2) {
            prop_assert!(w[1] >= w[0]);
            if w[0] >= 1.0 {
                prop_assert_eq!(w[1], 1.0);
            }
        }
        prop_assert!(k.iter().all(|&x| x > 0.0 && x <= 1.0));
    }

    #[test]
    fn growing_difficulty_keeps_coefficient(growth in 2u64..50) {
        // each epoch far heavier than everything before: ratio stays small
        let l = 2;
        let mut s = CoefficientSchedule::new(l);
        let mut d = 1u64;
        s.record_beacon_block(0, Difficulty::from_integer(1));
        for h in 1..=20 * l {
            if h % l == 1 { d = d.saturating_mul(growth * 4); }
            s.record_beacon_block(h, Difficulty::from_integer(d.min(1 << 50)));
        }
        let k = s.coefficients();
        prop_assert_eq!(k[1], k[0]);
    }

    #[test]
    fn daa_clamp_and_floor(
        spacing in 1u64..3000,
        jitter in proptest::collection::vec(0u64..50, 64),
        prev in 1u64..1_000_000,
        drift in -100_000i64..100_000,
        goal in any::<bool>(),
    ) {
        let p = DifficultyParams { epoch_length: 64, ..DifficultyParams::beacon() };
        let mut ts = Vec::with_capacity(64);
        let mut t = 1_000_000u64;
        for j in &jitter {
            t += spacing + j;
            ts.push(t);
        }
        let desired = (*ts.last().unwrap() as i64 - drift) as u64;
        let mode = if goal { DaaMode::GoalConsistent } else { DaaMode::Literal };
        let a = adjust_difficulty(&ts, desired, Difficulty::from_integer(prev), &p, mode);
        prop_assert!(!a.degenerate);
        prop_assert!(a.block_time >= 480.0 && a.block_time <= 720.0);
        prop_assert!(a.difficulty >= p.min_difficulty);
        let off = adjust_difficulty(&ts, desired, Difficulty::from_integer(prev), &p, DaaMode::Off);
        prop_assert_eq!(off.difficulty, Difficulty::from_integer(prev));
    }

    /// Supply always equals the independently summed rewards.
    #[test]
    fn supply_conservation(rewards in proptest::collection::vec(0u128..1 << 60, 1..200)) {
        let bits = shardpow::target::Target::from_difficulty(Difficulty::from_integer(10)).to_compact();
        let nb = |i: u64, r: u128| NewBlock {
            header_hash: shardpow::hash::blake2s(&i.to_le_bytes()),
            leaf_hash: shardpow::hash::blake2s(&i.to_le_bytes()),
            timestamp: 600 * i,
            bits,
            mm_number: 1,
            reward: Amount(r),
            shard_field: None,
        };
        let mut c = ChainState::new(ChainKind::Beacon, None, 0, 0, DifficultyParams::beacon(), DaaMode::Off, nb(0, 0));
        for (i, r) in rewards.iter().enumerate() {
            c.push(nb(i as u64 + 1, *r));
        }
        let sum: u128 = rewards.iter().sum();
        prop_assert_eq!(c.supply(), Amount(sum));
        prop_assert_eq!(c.mmr().leaf_count(), rewards.len() as u64 + 1);
    }

    /// Fork choice equals an independent max-weight scan with first-seen ties.
    #[test]
    fn fork_choice_matches_scan(ws in proptest::collection::vec(0u64..20, 1..30)) {
        let tips: Vec<_> = ws.iter().enumerate().map(|(i, &w)| TipCandidate { total_weight: Difficulty::from_integer(w), first_seen: i as u64 }).collect();
        let max = *ws.iter().max().unwrap();
        let expected = ws.iter().position(|&w| w == max).unwrap();
        prop_assert_eq!(fork_choice(&tips), Some(expected));
    }
}

#[test]
fn expansion_steps() {
    for (n, dn) in [(3, 1), (512, 1), (513, 2), (1024, 2), (1025, 4)] {
        assert_eq!(expansion_step(n), dn, "N={n}");
    }
}

#[test]
fn daa_mode_signs_differ_off_schedule() {
    let p = DifficultyParams { epoch_length: 100, ..DifficultyParams::beacon() };
    let ts: Vec<u64> = (0..100u64).map(|i| 600 * i).collect();
    // last block 3000 s behind schedule
    let lit = adjust_difficulty(&ts, 600 * 99 - 3000, Difficulty::from_integer(100), &p, DaaMode::Literal);
    let goal = adjust_difficulty(&ts, 600 * 99 - 3000, Difficulty::from_integer(100), &p, DaaMode::GoalConsistent);
    assert_eq!(lit.block_time, 630.0);
    assert_eq!(goal.block_time, 570.0);
}
