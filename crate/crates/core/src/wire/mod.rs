//! Canonical byte formats for every persisted or transmitted object.
//!
//! A top-level object is
//!
//! ```text
//! "ATMC" | version: u8 | type tag: u8 | body length: u32 | body
//! ```
//!
//! and a body is a sequence of fields `tag: u8 | length: u32 | value`, with
//! field tags numbered from 1 in declaration order. Integers are big-endian,
//! scalars are 32-byte big-endian, group elements are 48-byte compressed
//! points. Nested objects are stored as complete top-level encodings.
//! Decoders reject unknown tags, out-of-order fields, non-canonical values
//! and trailing bytes.

use std::ops::Range;

use thiserror::Error;

use crate::blindsig::BlindSignature;
use crate::group::{scalar_from_bytes, scalar_to_bytes, CyclicGroup, GroupElement, Scalar};
use crate::nizk::Proof;
use crate::primitives::{Digest, Nonce, Signature};

mod records;
mod types;

pub use records::*;
pub use types::*;

pub const MAGIC: &[u8; 4] = b"ATMC";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("malformed encoding: {0}")]
    Malformed(&'static str),
    #[error("non-canonical value in field {0}")]
    NonCanonical(u8),
    #[error("unknown type tag {0:#04x}")]
    UnknownTag(u8),
    #[error("expected type {expected:#04x}, found {found:#04x}")]
    UnexpectedType { expected: u8, found: u8 },
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
}

/// Type tags of top-level objects.
pub mod tag {
    pub const COIN: u8 = 0x01;
    pub const VOUCHER: u8 = 0x02;
    pub const TRANSACTION: u8 = 0x03;
    pub const COMPACT_COIN: u8 = 0x04;
    pub const COMPACT_VOUCHER: u8 = 0x05;
    pub const PROMISE: u8 = 0x06;
    pub const RECEIPT: u8 = 0x07;
    pub const ABORT_RECORD: u8 = 0x08;
    pub const WITHDRAW_REQUEST: u8 = 0x09;
    pub const CERTIFICATE: u8 = 0x0a;
    pub const PURSE_ENTRY: u8 = 0x10;
    pub const KS_RECORD: u8 = 0x11;
    pub const SPENT_ENTRY: u8 = 0x12;
    pub const ACCOUNT: u8 = 0x13;
    pub const APPLIED_RECEIPT: u8 = 0x14;
    pub const RATE: u8 = 0x15;
    pub const VOIDED: u8 = 0x16;
    pub const FILTER: u8 = 0x17;

    pub const ALL: [u8; 18] = [
        COIN, VOUCHER, TRANSACTION, COMPACT_COIN, COMPACT_VOUCHER, PROMISE, RECEIPT, ABORT_RECORD,
        WITHDRAW_REQUEST, CERTIFICATE, PURSE_ENTRY, KS_RECORD, SPENT_ENTRY, ACCOUNT, APPLIED_RECEIPT,
        RATE, VOIDED, FILTER,
    ];
}

pub trait WireObject: Sized {
    const TAG: u8;

    fn write_fields(&self, w: &mut FieldWriter);
    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, WireError>;

    fn encode(&self) -> Vec<u8> {
        let mut w = FieldWriter::default();
        self.write_fields(&mut w);
        frame(Self::TAG, &w.buf)
    }

    fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let body = unframe(bytes, Some(Self::TAG))?.1;
        let mut r = FieldReader::new(body);
        let v = Self::read_fields(&mut r)?;
        r.finish()?;
        Ok(v)
    }
}

fn frame(tag: u8, body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(tag);
    out.extend((body.len() as u32).to_be_bytes());
    out.extend_from_slice(body);
    out
}

/// Checks the header and returns `(type tag, body)`.
pub fn unframe(bytes: &[u8], expected: Option<u8>) -> Result<(u8, &[u8]), WireError> {
    if bytes.len() < HEADER_LEN {
        return Err(WireError::Malformed("short header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(WireError::BadMagic);
    }
    if bytes[4] != VERSION {
        return Err(WireError::UnsupportedVersion(bytes[4]));
    }
    let found = bytes[5];
    if !tag::ALL.contains(&found) {
        return Err(WireError::UnknownTag(found));
    }
    if let Some(expected) = expected {
        if expected != found {
            return Err(WireError::UnexpectedType { expected, found });
        }
    }
    let len = u32::from_be_bytes(bytes[6..10].try_into().unwrap()) as usize;
    if bytes.len() != HEADER_LEN + len {
        return Err(WireError::Malformed("body length"));
    }
    Ok((found, &bytes[HEADER_LEN..]))
}

/// Byte range of one field's value inside a top-level encoding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldSpan {
    pub tag: u8,
    pub value: Range<usize>,
}

/// Locates every field value of a top-level object, for targeted mutation.
pub fn field_spans(bytes: &[u8]) -> Result<Vec<FieldSpan>, WireError> {
    unframe(bytes, None)?;
    let mut pos = HEADER_LEN;
    let mut spans = Vec::new();
    while pos < bytes.len() {
        if bytes.len() - pos < 5 {
            return Err(WireError::Malformed("short field header"));
        }
        let len = u32::from_be_bytes(bytes[pos + 1..pos + 5].try_into().unwrap()) as usize;
        let start = pos + 5;
        if bytes.len() - start < len {
            return Err(WireError::Malformed("field length"));
        }
        spans.push(FieldSpan { tag: bytes[pos], value: start..start + len });
        pos = start + len;
    }
    Ok(spans)
}

#[derive(Default)]
pub struct FieldWriter {
    buf: Vec<u8>,
    next: u8,
}

impl FieldWriter {
    pub fn bytes(&mut self, value: &[u8]) -> &mut Self {
        self.next += 1;
        self.buf.push(self.next);
        self.buf.extend((value.len() as u32).to_be_bytes());
        self.buf.extend_from_slice(value);
        self
    }

    pub fn element(&mut self, e: &GroupElement) -> &mut Self {
        self.bytes(&e.to_bytes())
    }

    pub fn scalar(&mut self, s: &Scalar) -> &mut Self {
        self.bytes(&scalar_to_bytes(s))
    }

    pub fn proof(&mut self, p: &Proof<GroupElement>) -> &mut Self {
        self.bytes(&p.to_bytes())
    }

    pub fn signature(&mut self, s: &Signature<Scalar>) -> &mut Self {
        self.bytes(&s.to_bytes())
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_be_bytes())
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.bytes(&[v])
    }

    pub fn nested<T: WireObject>(&mut self, v: &T) -> &mut Self {
        self.bytes(&v.encode())
    }
}

pub struct FieldReader<'a> {
    rest: &'a [u8],
    next: u8,
}

impl<'a> FieldReader<'a> {
    fn new(body: &'a [u8]) -> Self {
        FieldReader { rest: body, next: 0 }
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], WireError> {
        self.next += 1;
        if self.rest.len() < 5 {
            return Err(WireError::Malformed("missing field"));
        }
        if self.rest[0] != self.next {
            return Err(WireError::Malformed("unexpected field tag"));
        }
        let len = u32::from_be_bytes(self.rest[1..5].try_into().unwrap()) as usize;
        if self.rest.len() - 5 < len {
            return Err(WireError::Malformed("field overruns body"));
        }
        let value = &self.rest[5..5 + len];
        self.rest = &self.rest[5 + len..];
        Ok(value)
    }

    fn current(&self) -> u8 {
        self.next
    }

    pub fn element(&mut self) -> Result<GroupElement, WireError> {
        let b = self.bytes()?;
        GroupElement::from_bytes(b).map_err(|_| WireError::NonCanonical(self.current()))
    }

    pub fn scalar(&mut self) -> Result<Scalar, WireError> {
        let b = self.bytes()?;
        if b.len() != 32 {
            return Err(WireError::Malformed("scalar width"));
        }
        scalar_from_bytes(b).map_err(|_| WireError::NonCanonical(self.current()))
    }

    pub fn fixed32(&mut self) -> Result<[u8; 32], WireError> {
        self.bytes()?
            .try_into()
            .map_err(|_| WireError::Malformed("expected 32 bytes"))
    }

    pub fn proof(&mut self) -> Result<Proof<GroupElement>, WireError> {
        let b = self.bytes()?;
        Proof::from_bytes(b).map_err(|_| WireError::NonCanonical(self.current()))
    }

    pub fn signature(&mut self) -> Result<Signature<Scalar>, WireError> {
        let b = self.bytes()?;
        Signature::from_bytes(b).map_err(|_| WireError::NonCanonical(self.current()))
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        let b: [u8; 8] = self.bytes()?.try_into().map_err(|_| WireError::Malformed("u64 width"))?;
        Ok(u64::from_be_bytes(b))
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        match self.bytes()? {
            [v] => Ok(*v),
            _ => Err(WireError::Malformed("u8 width")),
        }
    }

    pub fn bool(&mut self) -> Result<bool, WireError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(WireError::NonCanonical(self.current())),
        }
    }

    pub fn nested<T: WireObject>(&mut self) -> Result<T, WireError> {
        T::decode(self.bytes()?)
    }

    fn finish(&self) -> Result<(), WireError> {
        if self.rest.is_empty() {
            Ok(())
        } else {
            Err(WireError::Malformed("trailing bytes"))
        }
    }
}

fn blind_sig(bytes: &[u8]) -> Result<BlindSignature, WireError> {
    if bytes.is_empty() {
        return Err(WireError::Malformed("empty signature"));
    }
    Ok(BlindSignature(bytes.to_vec()))
}

fn digest(bytes: &[u8]) -> Result<Digest, WireError> {
    bytes.try_into().map_err(|_| WireError::Malformed("digest width"))
}

fn nonce(bytes: &[u8]) -> Result<Nonce, WireError> {
    bytes.try_into().map_err(|_| WireError::Malformed("nonce width"))
}

#[cfg(test)]
mod tests;
