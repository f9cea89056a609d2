use proptest::prelude::*;
use shardpow::hash::{blake2s, Hash256};
use shardpow::shard_tree::*;

fn leaves(mask: u32, n: u32) -> Vec<(u32, Hash256)> {
    (0..n).filter(|i| mask >> i & 1 == 1).map(|i| (i, blake2s(&[i as u8, mask as u8, (mask >> 8) as u8]))).collect()
}

/// Magic nodes counted straight from the definition: an empty subtree whose
/// sibling subtree has a mined leaf.
fn brute_not_mined(mask: u32, h: u32) -> u64 {
    let mined = |level: u32, idx: u32| {
        let span = 1u32 << level;
        (idx * span..(idx + 1) * span).any(|leaf| mask >> leaf & 1 == 1)
    };
    let mut total = 0u64;
    for level in 0..h {
        for idx in 0..(1u32 << (h - level)) {
            if !mined(level, idx) && mined(level, idx ^ 1) {
                total += 1 << level;
            }
        }
    }
    total
}

#[test]
fn counts_for_all_subsets_up_to_height_three() {
    for h in 0..=3u32 {
        let n = 1u32 << h;
        for mask in 1u32..(1 << n) {
            let t = ShardMerkleTree::build(&leaves(mask, n), n).unwrap();
            assert_eq!(t.not_mined_count(), brute_not_mined(mask, h), "h={h} mask={mask:b}");
            assert_eq!(t.mined_upper_bound() + t.not_mined_count(), 1 << h);
            assert!(t.mined_upper_bound() >= mask.count_ones() as u64);
        }
    }
}

#[test]
fn honest_proofs_verify_for_every_mined_leaf() {
    for h in 0..=3u32 {
        for n in ((1u32 << h) / 2 + 1).max(1)..=(1 << h) {
            for mask in 1u32..(1 << n) {
                let t = ShardMerkleTree::build(&leaves(mask, n), n).unwrap();
                let mm = t.prove_merged_mining().unwrap();
                let bound = t.mined_upper_bound() as u32;
                for leaf in t.mined_leaves() {
                    let sp = t.prove_leaf(leaf).unwrap();
                    let s = verify_shard_placement(&t.root(), t.leaf(leaf).unwrap(), &sp, &mm, leaf, bound, n)
                        .unwrap_or_else(|e| panic!("n={n} mask={mask:b} leaf={leaf}: {e}"));
                    assert_eq!(s.mined_upper_bound, bound as u64);
                    assert!(verify_merged_mining(&t.root(), &mm, leaf, bound + 1, n).is_err());
                    if bound > 1 {
                        assert!(verify_merged_mining(&t.root(), &mm, leaf, bound - 1, n).is_err());
                    }
                }
            }
        }
    }
}

/// A proof made for one shard never verifies at another shard's position,
/// whether the leaf index is left alone or re-targeted.
#[test]
fn positional_soundness_up_to_height_four() {
    for h in 1..=4u32 {
        let n = 1u32 << h;
        for mask in 1u32..(1 << n) {
            let t = ShardMerkleTree::build(&leaves(mask, n), n).unwrap();
            let mm = t.prove_merged_mining().unwrap();
            let bound = t.mined_upper_bound() as u32;
            let root = t.root();
            for i in t.mined_leaves() {
                let sp = t.prove_leaf(i).unwrap();
                let header = t.leaf(i).unwrap();
                for j in (0..n).filter(|&j| j != i) {
                    assert!(verify_shard_placement(&root, header, &sp, &mm, j, bound, n).is_err());
                    let mut moved = sp.clone();
                    moved.leaf_index = j as u64;
                    assert!(
                        verify_shard_placement(&root, header, &moved, &mm, j, bound, n).is_err(),
                        "h={h} mask={mask:b} i={i} j={j}"
                    );
                }
            }
        }
    }
}

#[test]
fn unmined_position_is_not_under_a_regular_node() {
    let n = 8;
    let t = ShardMerkleTree::build(&leaves(0b0000_0101, n), n).unwrap();
    let mm = t.prove_merged_mining().unwrap();
    let bound = t.mined_upper_bound() as u32;
    assert_eq!(verify_merged_mining(&t.root(), &mm, 1, bound, n), Err(MmProofError::NotUnderRegular));
    assert!(verify_merged_mining(&t.root(), &mm, 0, bound, n).is_ok());
}

#[test]
fn eight_shard_example_configuration() {
    // shards 2, 3, 5, 6 of 8 (leaves 1, 2, 4, 5)
    let t = ShardMerkleTree::build(&leaves(0b0011_0110, 8), 8).unwrap();
    assert_eq!(t.magic_counts(), vec![2, 1, 0, 0]);
    assert_eq!(t.not_mined_count(), 4);
    assert_eq!(t.mined_upper_bound(), 4);
}

#[test]
fn non_power_of_two_bound_is_capped() {
    let n = 5;
    let t = ShardMerkleTree::build(&leaves(0b11111, n), n).unwrap();
    assert_eq!(t.not_mined_count(), 3);
    assert_eq!(t.mined_upper_bound(), 5);
}

proptest! {
    #[test]
    fn tampered_regular_hash_fails(mask in 1u32..(1 << 16), which in any::<prop::sample::Index>(), bit in 0usize..256) {
        let n = 16;
        let t = ShardMerkleTree::build(&leaves(mask, n), n).unwrap();
        let mut mm = t.prove_merged_mining().unwrap();
        let bound = t.mined_upper_bound() as u32;
        let leaf = t.mined_leaves()[0];
        prop_assume!(!mm.regular_hashes.is_empty());
        let k = which.index(mm.regular_hashes.len());
        mm.regular_hashes[k] = mm.regular_hashes[k].with_bit_flipped(bit);
        prop_assert!(verify_merged_mining(&t.root(), &mm, leaf, bound, n).is_err());
    }

    #[test]
    fn tampered_encoding_fails(mask in 1u32..(1 << 16), bit in any::<prop::sample::Index>()) {
        let n = 16;
        let t = ShardMerkleTree::build(&leaves(mask, n), n).unwrap();
        let mut mm = t.prove_merged_mining().unwrap();
        prop_assume!(!mm.encoding.is_empty());
        let bound = t.mined_upper_bound() as u32;
        let leaf = t.mined_leaves()[0];
        mm.encoding.flip(bit.index(mm.encoding.len()));
        prop_assert!(verify_merged_mining(&t.root(), &mm, leaf, bound, n).is_err());
    }
}
