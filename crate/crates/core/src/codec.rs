//! Canonical binary encoding: little-endian fixed-width integers, LEB128
//! varints, length-prefixed variable fields.

use integer_encoding::VarInt;

use crate::hash::Hash256;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("{0} trailing bytes")]
    TrailingBytes(usize),
    #[error("bad varint")]
    BadVarint,
    #[error("invalid {0}")]
    Invalid(&'static str),
}

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer::default()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u128(&mut self, v: u128) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn hash(&mut self, h: &Hash256) -> &mut Self {
        self.buf.extend_from_slice(&h.0);
        self
    }

    pub fn varint(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.encode_var_vec());
        self
    }

    pub fn raw(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    /// Varint length followed by the bytes.
    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        self.varint(bytes.len() as u64);
        self.raw(bytes)
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.remaining() == 0
    }

    pub fn finish(&self) -> Result<(), DecodeError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(DecodeError::TrailingBytes(n)),
        }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.remaining() < n {
            return Err(DecodeError::UnexpectedEnd);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn u128(&mut self) -> Result<u128, DecodeError> {
        Ok(u128::from_le_bytes(self.array()?))
    }

    pub fn hash(&mut self) -> Result<Hash256, DecodeError> {
        Ok(Hash256(self.array()?))
    }

    pub fn varint(&mut self) -> Result<u64, DecodeError> {
        let rest = &self.buf[self.pos..];
        if rest.is_empty() {
            return Err(DecodeError::UnexpectedEnd);
        }
        let (v, n) = u64::decode_var(rest).ok_or(DecodeError::BadVarint)?;
        // Reject non-minimal encodings so that the byte form stays canonical.
        if n != v.required_space() {
            return Err(DecodeError::BadVarint);
        }
        self.pos += n;
        Ok(v)
    }

    /// A varint used as a length or count, bounded by what could possibly remain.
    pub fn len_prefix(&mut self, item_size: usize) -> Result<usize, DecodeError> {
        let n = self.varint()?;
        if n.saturating_mul(item_size.max(1) as u64) > self.remaining() as u64 {
            return Err(DecodeError::UnexpectedEnd);
        }
        Ok(n as usize)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let n = self.len_prefix(1)?;
        self.take(n)
    }
}

/// Types with one canonical byte form.
pub trait Encode {
    fn encode_to(&self, w: &mut Writer);

    fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode_to(&mut w);
        w.into_bytes()
    }
}

pub trait Decode: Sized {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError>;

    /// Decodes the whole buffer, rejecting trailing bytes.
    fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let v = Self::decode_from(&mut r)?;
        r.finish()?;
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn varint_roundtrip_and_minimality() {
        for v in [0u64, 1, 127, 128, 300, u32::MAX as u64, u64::MAX] {
            let mut w = Writer::new();
            w.varint(v);
            let b = w.into_bytes();
            let mut r = Reader::new(&b);
            assert_eq!(r.varint().unwrap(), v);
            r.finish().unwrap();
        }
        assert_eq!(Reader::new(&[0x80, 0x00]).varint(), Err(DecodeError::BadVarint));
        assert_eq!(Reader::new(&[0x80]).varint(), Err(DecodeError::BadVarint));
    }

    #[test]
    fn fixed_width_little_endian() {
        let mut w = Writer::new();
        w.u32(0x01020304).u64(5);
        assert_eq!(w.into_bytes(), vec![4, 3, 2, 1, 5, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn short_input() {
        let mut r = Reader::new(&[1, 2]);
        assert_eq!(r.u32(), Err(DecodeError::UnexpectedEnd));
        let mut r = Reader::new(&[10, 1, 2]);
        assert_eq!(r.bytes(), Err(DecodeError::UnexpectedEnd));
    }
}
