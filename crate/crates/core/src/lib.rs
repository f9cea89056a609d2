//! Protocol engine for a merge-mined, sharded proof-of-work blockchain.
//!
//! A beacon chain (BC) coordinates a growing set of shard chains (SC). Shard
//! blocks are merge-mined: a miner commits candidate shard headers into a
//! shard Merkle tree whose root sits in a BC-shaped header (the "container"),
//! and one mining hash over that container can satisfy several targets at once.
//! Each chain commits to its history through a weighted Merkle mountain range.

pub mod amount;
pub mod bits;
pub mod block;
pub mod chain;
pub mod codec;
pub mod consensus;
pub mod econ;
pub mod hash;
pub mod merkle;
pub mod mmr;
pub mod shard_tree;
pub mod target;
pub mod tree_encoding;

pub use amount::Amount;
pub use bits::BitString;
pub use block::{BcBlock, BcBody, BcHeader, ScBlock, ScBody, ScHeader, ShardField, ShardId, Transaction};
pub use hash::Hash256;
pub use target::{CompactTarget, Difficulty, Target};
