use proptest::prelude::*;
use shardpow::econ::*;

fn scenario(mhr: f64, shards: &[(f64, f64, f64)]) -> FeeScenario {
    FeeScenario {
        miner_hash_rate: mhr,
        shards: shards.iter().map(|&(fees, others_hash_rate, cost)| ShardFees { fees, others_hash_rate, cost }).collect(),
    }
}

#[test]
fn spec_examples() {
    assert_eq!(expected_fee_reward(&scenario(1.0, &[(10.0, 3.0, 0.0)])).unwrap(), 2.5);
    assert_eq!(expected_fee_reward(&scenario(1.0, &[(10.0, 3.0, 0.0), (20.0, 1.0, 0.0)])).unwrap(), 12.5);
    assert_eq!(marginal_profit(&scenario(1.0, &[(10.0, 3.0, 1.0)]), 0).unwrap(), 1.5);
    assert_eq!(marginal_profit(&scenario(2.0, &[(10.0, 0.0, 0.0)]), 0).unwrap(), 10.0);
}

proptest! {
    #[test]
    fn fee_reward_is_scale_free(
        mhr in 0.01f64..1e6,
        shards in proptest::collection::vec((0.0f64..1e6, 0.0f64..1e6, 0.0f64..1e3), 0..8),
        c in 0.01f64..1e3,
    ) {
        let a = expected_fee_reward(&scenario(mhr, &shards)).unwrap();
        let scaled: Vec<_> = shards.iter().map(|&(f, s, e)| (f, s * c, e)).collect();
        let b = expected_fee_reward(&scenario(mhr * c, &scaled)).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        for (i, &(f, s, e)) in shards.iter().enumerate() {
            let d = marginal_profit(&scenario(mhr, &shards), i).unwrap();
            let term = f * mhr / (s + mhr);
            prop_assert!((d + e - term).abs() <= 1e-9 * term.max(1.0));
        }
    }

    #[test]
    fn marginal_profit_grows_with_hash_rate(m1 in 0.01f64..1e3, dm in 0.01f64..1e3, f in 0.1f64..1e3, s in 0.1f64..1e3) {
        let a = marginal_profit(&scenario(m1, &[(f, s, 0.0)]), 0).unwrap();
        let b = marginal_profit(&scenario(m1 + dm, &[(f, s, 0.0)]), 0).unwrap();
        prop_assert!(b > a);
    }

    #[test]
    fn growth_ignores_uniform_scaling(
        effs in proptest::collection::vec(0.1f64..1e6, 2..20),
        c in 1e-3f64..1e3,
    ) {
        let pts: Vec<_> = effs.iter().enumerate().map(|(i, &e)| (i as f64 * 0.25, e)).collect();
        let scaled: Vec<_> = pts.iter().map(|&(t, e)| (t, e * c)).collect();
        let a = loglinear_growth(&pts).unwrap();
        let b = loglinear_growth(&scaled).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }
}
