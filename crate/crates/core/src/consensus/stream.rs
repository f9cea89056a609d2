//! Binary block stream: what a simulation accepted, in arrival order, so a
//! cold verifier can replay it.
//!
//! ```text
//! "SPWS" | version u8 | flags u8 | params_len varint | params (JSON)
//! record*: tag u8 (0 beacon, 1 shard) | shard u32 (tag 1 only)
//!          | network_time u64 | len varint | block bytes
//! ```
//!
//! Flag bit 0 marks an unsealed stream: its blocks come from a sampled
//! simulation and carry no real work, so replay skips the hash comparison.

use serde::{Deserialize, Serialize};

use super::{NetworkParams, NetworkState, VerificationError};
use crate::block::{BcBlock, ScBlock, ShardId};
use crate::codec::{DecodeError, Decode, Encode, Reader, Writer};

pub const STREAM_MAGIC: &[u8; 4] = b"SPWS";
pub const STREAM_VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum StreamItem {
    Beacon(BcBlock),
    Shard(ShardId, ScBlock),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamRecord {
    pub network_time: u64,
    pub item: StreamItem,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stream {
    pub params: NetworkParams,
    pub sealed: bool,
    pub records: Vec<StreamRecord>,
}

const FLAG_UNSEALED: u8 = 1;

/// Appends records to an in-memory stream.
pub struct StreamWriter {
    w: Writer,
}

impl StreamWriter {
    pub fn new(params: &NetworkParams, sealed: bool) -> Self {
        let mut w = Writer::new();
        w.raw(STREAM_MAGIC);
        w.u8(STREAM_VERSION);
        w.u8(if sealed { 0 } else { FLAG_UNSEALED });
        w.bytes(&serde_json::to_vec(params).expect("params serialize"));
        StreamWriter { w }
    }

    pub fn push(&mut self, record: &StreamRecord) {
        match &record.item {
            StreamItem::Beacon(b) => {
                self.w.u8(0);
                self.w.u64(record.network_time);
                self.w.bytes(&b.encode());
            }
            StreamItem::Shard(id, b) => {
                self.w.u8(1);
                self.w.u32(id.0);
                self.w.u64(record.network_time);
                self.w.bytes(&b.encode());
            }
        }
    }

    pub fn finish(self) -> Vec<u8> {
        self.w.into_bytes()
    }
}

pub fn write_stream(params: &NetworkParams, records: &[StreamRecord]) -> Vec<u8> {
    let mut s = StreamWriter::new(params, true);
    for r in records {
        s.push(r);
    }
    s.finish()
}

pub fn read_stream(bytes: &[u8]) -> Result<Stream, DecodeError> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != STREAM_MAGIC {
        return Err(DecodeError::Invalid("bad stream magic"));
    }
    if r.u8()? != STREAM_VERSION {
        return Err(DecodeError::Invalid("unsupported stream version"));
    }
    let flags = r.u8()?;
    if flags & !FLAG_UNSEALED != 0 {
        return Err(DecodeError::Invalid("unknown stream flags"));
    }
    let params: NetworkParams =
        serde_json::from_slice(r.bytes()?).map_err(|_| DecodeError::Invalid("bad stream parameters"))?;
    let mut records = Vec::new();
    while !r.is_empty() {
        let item = match r.u8()? {
            0 => {
                let network_time = r.u64()?;
                StreamRecord { network_time, item: StreamItem::Beacon(BcBlock::decode(r.bytes()?)?) }
            }
            1 => {
                let id = ShardId(r.u32()?);
                let network_time = r.u64()?;
                StreamRecord { network_time, item: StreamItem::Shard(id, ScBlock::decode(r.bytes()?)?) }
            }
            _ => return Err(DecodeError::Invalid("unknown record tag")),
        };
        records.push(item);
    }
    Ok(Stream { params, sealed: flags & FLAG_UNSEALED == 0, records })
}

/// Per-block replay outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub index: usize,
    /// `"beacon"` or `"shard-<id>"`.
    pub chain: String,
    pub height: Option<u64>,
    pub error: Option<VerificationError>,
}

#[derive(Clone, Debug)]
pub struct Replay {
    pub entries: Vec<ReplayEntry>,
    pub state: NetworkState,
}

impl Replay {
    pub fn failures(&self) -> usize {
        self.entries.iter().filter(|e| e.error.is_some()).count()
    }
}

/// Applies every record to a fresh state. Rejected blocks are reported and skipped.
pub fn replay(params: NetworkParams, records: &[StreamRecord]) -> Replay {
    replay_from(NetworkState::genesis(params), records)
}

pub fn replay_stream(stream: &Stream) -> Replay {
    let state = NetworkState::genesis(stream.params.clone());
    replay_from(if stream.sealed { state } else { state.without_work_check() }, &stream.records)
}

fn replay_from(mut state: NetworkState, records: &[StreamRecord]) -> Replay {
    let mut entries = Vec::with_capacity(records.len());
    for (index, rec) in records.iter().enumerate() {
        let (chain, result) = match &rec.item {
            StreamItem::Beacon(b) => ("beacon".to_string(), state.apply_bc(b, rec.network_time)),
            StreamItem::Shard(id, b) => (format!("shard-{}", id.0), state.apply_sc(*id, b, rec.network_time)),
        };
        let (height, error) = match result {
            Ok(a) => (Some(a.height), None),
            Err(e) => (None, Some(e)),
        };
        entries.push(ReplayEntry { index, chain, height, error });
    }
    Replay { entries, state }
}
