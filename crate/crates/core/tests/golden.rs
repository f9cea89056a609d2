//! Digests frozen from an independent Python (hashlib) reimplementation of
//! the byte layouts.

use shardpow::block::{BcHeader, ScHeader, ShardField};
use shardpow::codec::Encode;
use shardpow::hash::Hash256;
use shardpow::merkle::MerkleTree;
use shardpow::target::CompactTarget;

fn hex(h: Hash256) -> String {
    h.to_hex()
}

#[test]
fn beacon_header_digests() {
    let h = BcHeader {
        version: 1,
        prev_commitment: Hash256([0x11; 32]),
        tx_merkle_root: Hash256([0x22; 32]),
        shards: ShardField::new(8, true),
        tree_encoding: "101".parse().unwrap(),
        shard_tree_root: Hash256([0x33; 32]),
        timestamp: 1_700_000_000,
        bits: CompactTarget(0x1d00ffff),
        nonce: 42,
    };
    assert_eq!(h.encode().len(), 126);
    assert_eq!(hex(h.header_hash()), "99ec60146a78009b30b704d21eb49c54f4756e96c6250a447902077c3e4ea3f2");
    assert_eq!(hex(h.mining_hash()), "044645a6ba0713e68907e6f1591effe8f6f1fc5a549c62c5c0495a8735888798");
}

#[test]
fn shard_header_digest() {
    let h = ScHeader {
        version: 1,
        prev_commitment: Hash256([0x44; 32]),
        tx_merkle_root: Hash256([0x55; 32]),
        mm_number: 4,
        timestamp: 1_700_000_015,
        bits: CompactTarget(0x1f00ffff),
    };
    assert_eq!(h.encode().len(), ScHeader::ENCODED_LEN);
    assert_eq!(hex(h.header_hash()), "8e9c5c241cfb787642b74139686641b7de228bba179a563e3a8898e0e67c9770");
}

#[test]
fn merkle_roots() {
    let four = MerkleTree::build(&[b"a", b"b", b"c", b"d"]).unwrap();
    assert_eq!(hex(four.root()), "47c32c2f701fb6272be2a4eb2fcfe5d46cdbd551ff3e0573f9e9fe1a6f4c78e2");
    let three = MerkleTree::build(&[b"a", b"b", b"c"]).unwrap();
    assert_eq!(hex(three.root()), "ed42d6b67aa4077562a64a2b883c86a872e00296f240efb11ee4f11ce4efd351");
    for i in 0..4 {
        let p = four.prove(i).unwrap();
        assert!(p.verify(&four.root(), [b"a", b"b", b"c", b"d"][i as usize]));
    }
}
