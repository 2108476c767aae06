//! Canonical binary encoding shared by every persisted record.
//!
//! Byte-string fields are written as a `u32` big-endian length followed by
//! the bytes. Integers are fixed-width big-endian with no prefix. Fields are
//! written in their declared order, so equal values always encode to equal
//! bytes and digests over encodings are stable.

use thiserror::Error;

use crate::crypto::{Digest, Envelope, PublicKey, Signature, DIGEST_LEN};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("unexpected end of input at offset {offset}")]
    UnexpectedEof { offset: usize },
    #[error("field at offset {offset} has length {found}, expected {expected}")]
    BadLength {
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("{0} trailing bytes after record")]
    TrailingBytes(usize),
    #[error("invalid utf-8 in string field")]
    BadUtf8,
    #[error("bad magic header")]
    BadMagic,
    #[error("invalid value for {0}")]
    InvalidValue(&'static str),
}

#[derive(Debug, Default, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn raw(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        let len = u32::try_from(bytes.len()).expect("field longer than u32::MAX");
        self.u32(len);
        self.raw(bytes)
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn digest(&mut self, d: &Digest) -> &mut Self {
        self.bytes(d.as_bytes())
    }

    pub fn envelope(&mut self, env: &Envelope) -> &mut Self {
        self.bytes(&env.ephemeral_public)
            .bytes(&env.nonce)
            .bytes(&env.ciphertext)
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Strict reader: every length is checked and [`Reader::finish`] rejects
/// trailing input.
#[derive(Debug, Clone)]
pub struct Reader<'a> {
    input: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        Self { input, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.input.len() - self.pos
    }

    pub fn raw(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.remaining() < n {
            return Err(CodecError::UnexpectedEof { offset: self.pos });
        }
        let out = &self.input[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.raw(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        let b = self.raw(4)?;
        Ok(u32::from_be_bytes(b.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        let b = self.raw(8)?;
        Ok(u64::from_be_bytes(b.try_into().unwrap()))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], CodecError> {
        let len = self.u32()? as usize;
        self.raw(len)
    }

    pub fn fixed<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        let offset = self.pos;
        let b = self.bytes()?;
        b.try_into().map_err(|_| CodecError::BadLength {
            offset,
            expected: N,
            found: b.len(),
        })
    }

    pub fn string(&mut self) -> Result<String, CodecError> {
        let b = self.bytes()?;
        String::from_utf8(b.to_vec()).map_err(|_| CodecError::BadUtf8)
    }

    pub fn digest(&mut self) -> Result<Digest, CodecError> {
        Ok(Digest(self.fixed::<DIGEST_LEN>()?))
    }

    pub fn public_key(&mut self) -> Result<PublicKey, CodecError> {
        Ok(PublicKey(self.fixed::<32>()?))
    }

    pub fn signature(&mut self) -> Result<Signature, CodecError> {
        Ok(Signature(self.fixed::<64>()?))
    }

    pub fn envelope(&mut self) -> Result<Envelope, CodecError> {
        let ephemeral_public = self.fixed::<32>()?;
        let nonce = self.fixed::<12>()?;
        let ciphertext = self.bytes()?.to_vec();
        Ok(Envelope {
            ephemeral_public,
            nonce,
            ciphertext,
        })
    }

    pub fn finish(self) -> Result<(), CodecError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(CodecError::TrailingBytes(n)),
        }
    }
}
