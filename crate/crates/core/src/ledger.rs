//! Public commitment ledger.
//!
//! Transactions carry only digests: fingerprints of the two parties' public
//! keys, a commitment to the purchased content and a commitment to the
//! consumer's secret block. Blocks are sealed with a small proof-of-work and
//! linked by `prev_hash`. [`Chain::verify`] checks everything from public
//! data alone.
//!
//! Canonical block record, in order:
//!
//! ```text
//! header   height u64 | prev_hash | tx_root | timestamp u64 | difficulty u32 | nonce u64
//! block_hash
//! tx_ids   u32 count | digest*
//! txs      u32 count | tx_record*
//! ```
//!
//! Digests are length-prefixed (`u32` 32 then the bytes). A transaction
//! record is its `tx_id`, the signed body, the provider public key and the
//! signature.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fs::{self, OpenOptions};
use std::io::{self, Write as _};
use std::path::Path;

use thiserror::Error;

use crate::codec::{CodecError, Reader, Writer};
use crate::crypto::{sign, verify, Digest, KeyPair, PublicKey, Signature};

pub const DEFAULT_DIFFICULTY: u32 = 8;
pub const MAX_CLOCK_SKEW: u64 = 900;
pub const CHAIN_MAGIC: &[u8; 8] = b"SKVCHN01";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("transaction signature does not verify")]
    BadSignature,
    #[error("transaction timestamp {tx} is more than {MAX_CLOCK_SKEW}s from chain clock {now}")]
    StaleTimestamp { tx: u64, now: u64 },
    #[error("transaction {0} already submitted")]
    DuplicateTransaction(Digest),
    #[error("malformed transaction: {0}")]
    MalformedTransaction(String),
    #[error("no pending transactions to mine")]
    NothingToMine,
    #[error("unknown transaction {0}")]
    UnknownTransaction(Digest),
    #[error("corrupt chain record: {0}")]
    Codec(#[from] CodecError),
    #[error("io: {0}")]
    Io(String),
}

impl From<io::Error> for LedgerError {
    fn from(e: io::Error) -> Self {
        LedgerError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionBody {
    pub consumer_key_fingerprint: Digest,
    pub provider_key_fingerprint: Digest,
    pub content_commitment: Digest,
    pub secret_commitment: Digest,
    pub timestamp: u64,
}

impl TransactionBody {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.digest(&self.consumer_key_fingerprint)
            .digest(&self.provider_key_fingerprint)
            .digest(&self.content_commitment)
            .digest(&self.secret_commitment)
            .u64(self.timestamp);
        w.finish()
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(TransactionBody {
            consumer_key_fingerprint: r.digest()?,
            provider_key_fingerprint: r.digest()?,
            content_commitment: r.digest()?,
            secret_commitment: r.digest()?,
            timestamp: r.u64()?,
        })
    }

    pub fn id(&self) -> Digest {
        Digest::of(&self.to_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub tx_id: Digest,
    pub body: TransactionBody,
    /// Signer key; its digest must equal `body.provider_key_fingerprint`.
    pub provider_public_key: PublicKey,
    pub provider_signature: Signature,
}

impl Transaction {
    pub fn new_signed(body: TransactionBody, provider: &KeyPair) -> Self {
        let bytes = body.to_bytes();
        Transaction {
            tx_id: Digest::of(&bytes),
            provider_signature: sign(&provider.secret, &bytes),
            provider_public_key: provider.public,
            body,
        }
    }

    /// Id recomputes, signer matches the fingerprint, signature verifies.
    pub fn check(&self) -> Result<(), LedgerError> {
        let bytes = self.body.to_bytes();
        if Digest::of(&bytes) != self.tx_id {
            return Err(LedgerError::MalformedTransaction(
                "tx_id does not match body".into(),
            ));
        }
        if self.provider_public_key.fingerprint() != self.body.provider_key_fingerprint {
            return Err(LedgerError::BadSignature);
        }
        if !verify(&self.provider_public_key, &bytes, &self.provider_signature) {
            return Err(LedgerError::BadSignature);
        }
        Ok(())
    }

    pub fn write(&self, w: &mut Writer) {
        w.digest(&self.tx_id)
            .raw(&self.body.to_bytes())
            .bytes(self.provider_public_key.as_bytes())
            .bytes(&self.provider_signature.0);
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(Transaction {
            tx_id: r.digest()?,
            body: TransactionBody::read(r)?,
            provider_public_key: r.public_key()?,
            provider_signature: r.signature()?,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let tx = Self::read(&mut r)?;
        r.finish()?;
        Ok(tx)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest,
    pub tx_ids: Vec<Digest>,
    pub tx_root: Digest,
    pub timestamp: u64,
    pub difficulty: u32,
    pub nonce: u64,
    pub block_hash: Digest,
    pub transactions: Vec<Transaction>,
}

pub fn tx_root(tx_ids: &[Digest]) -> Digest {
    let parts: Vec<&[u8]> = tx_ids.iter().map(|d| d.as_bytes().as_slice()).collect();
    Digest::of_parts(&parts)
}

fn header_bytes(
    height: u64,
    prev_hash: &Digest,
    tx_root: &Digest,
    timestamp: u64,
    difficulty: u32,
    nonce: u64,
) -> Vec<u8> {
    let mut w = Writer::new();
    w.u64(height)
        .digest(prev_hash)
        .digest(tx_root)
        .u64(timestamp)
        .u32(difficulty)
        .u64(nonce);
    w.finish()
}

impl Block {
    pub fn header_hash(&self) -> Digest {
        Digest::of(&header_bytes(
            self.height,
            &self.prev_hash,
            &self.tx_root,
            self.timestamp,
            self.difficulty,
            self.nonce,
        ))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&header_bytes(
            self.height,
            &self.prev_hash,
            &self.tx_root,
            self.timestamp,
            self.difficulty,
            self.nonce,
        ));
        w.digest(&self.block_hash);
        w.u32(self.tx_ids.len() as u32);
        for id in &self.tx_ids {
            w.digest(id);
        }
        w.u32(self.transactions.len() as u32);
        for tx in &self.transactions {
            tx.write(&mut w);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let height = r.u64()?;
        let prev_hash = r.digest()?;
        let tx_root = r.digest()?;
        let timestamp = r.u64()?;
        let difficulty = r.u32()?;
        let nonce = r.u64()?;
        let block_hash = r.digest()?;
        let n = r.u32()? as usize;
        if n > r.remaining() / 36 {
            return Err(CodecError::InvalidValue("tx_id count"));
        }
        let tx_ids = (0..n).map(|_| r.digest()).collect::<Result<Vec<_>, _>>()?;
        let m = r.u32()? as usize;
        if m > r.remaining() {
            return Err(CodecError::InvalidValue("transaction count"));
        }
        let transactions = (0..m)
            .map(|_| Transaction::read(&mut r))
            .collect::<Result<Vec<_>, _>>()?;
        r.finish()?;
        Ok(Block {
            height,
            prev_hash,
            tx_ids,
            tx_root,
            timestamp,
            difficulty,
            nonce,
            block_hash,
            transactions,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainVerdict {
    Ok,
    FirstBadHeight(u64),
    /// The serialized form is not a chain file at all.
    Unreadable,
}

impl ChainVerdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, ChainVerdict::Ok)
    }
}

#[derive(Debug, Clone)]
pub struct Chain {
    blocks: Vec<Block>,
    difficulty: u32,
    pending: VecDeque<Transaction>,
    pending_ids: HashSet<Digest>,
    index: HashMap<Digest, (u64, u32)>,
}

impl Default for Chain {
    fn default() -> Self {
        Chain::new(DEFAULT_DIFFICULTY)
    }
}

impl Chain {
    pub fn new(difficulty: u32) -> Self {
        Chain {
            blocks: Vec::new(),
            difficulty,
            pending: VecDeque::new(),
            pending_ids: HashSet::new(),
            index: HashMap::new(),
        }
    }

    /// Wrap existing blocks without validating them; see [`Chain::verify`].
    pub fn from_blocks(blocks: Vec<Block>, difficulty: u32) -> Self {
        let mut chain = Chain::new(difficulty);
        for block in &blocks {
            for (pos, id) in block.tx_ids.iter().enumerate() {
                chain.index.insert(*id, (block.height, pos as u32));
            }
        }
        chain.blocks = blocks;
        chain
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn difficulty(&self) -> u32 {
        self.difficulty
    }

    pub fn pending(&self) -> impl Iterator<Item = &Transaction> {
        self.pending.iter()
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    /// Hash of the newest block, or all zeroes before genesis.
    pub fn tip_hash(&self) -> Digest {
        self.blocks.last().map_or(Digest::ZERO, |b| b.block_hash)
    }

    pub fn submit_transaction(
        &mut self,
        tx: Transaction,
        provider_public: &PublicKey,
        now: u64,
    ) -> Result<Digest, LedgerError> {
        if tx.body.id() != tx.tx_id {
            return Err(LedgerError::MalformedTransaction(
                "tx_id does not match body".into(),
            ));
        }
        if tx.provider_public_key != *provider_public {
            return Err(LedgerError::BadSignature);
        }
        tx.check()?;
        if tx.body.timestamp.abs_diff(now) > MAX_CLOCK_SKEW {
            return Err(LedgerError::StaleTimestamp {
                tx: tx.body.timestamp,
                now,
            });
        }
        if self.pending_ids.contains(&tx.tx_id) || self.index.contains_key(&tx.tx_id) {
            return Err(LedgerError::DuplicateTransaction(tx.tx_id));
        }
        let id = tx.tx_id;
        self.pending_ids.insert(id);
        self.pending.push_back(tx);
        Ok(id)
    }

    /// Drain the pending queue into a new block, searching nonces from 0.
    pub fn mine_block(&mut self, now: u64) -> Result<Block, LedgerError> {
        if self.pending.is_empty() {
            return Err(LedgerError::NothingToMine);
        }
        let transactions: Vec<Transaction> = self.pending.drain(..).collect();
        self.pending_ids.clear();
        let tx_ids: Vec<Digest> = transactions.iter().map(|t| t.tx_id).collect();
        let root = tx_root(&tx_ids);
        let height = self.height();
        let prev_hash = self.tip_hash();

        let mut nonce = 0u64;
        let block_hash = loop {
            let h = Digest::of(&header_bytes(
                height,
                &prev_hash,
                &root,
                now,
                self.difficulty,
                nonce,
            ));
            if h.leading_zero_bits() >= self.difficulty {
                break h;
            }
            nonce += 1;
        };

        for (pos, id) in tx_ids.iter().enumerate() {
            self.index.insert(*id, (height, pos as u32));
        }
        let block = Block {
            height,
            prev_hash,
            tx_ids,
            tx_root: root,
            timestamp: now,
            difficulty: self.difficulty,
            nonce,
            block_hash,
            transactions,
        };
        self.blocks.push(block.clone());
        Ok(block)
    }

    /// Check linkage, proof-of-work, roots and every transaction signature.
    pub fn verify(&self) -> ChainVerdict {
        let mut prev = Digest::ZERO;
        for (i, block) in self.blocks.iter().enumerate() {
            if !block_is_valid(block, i as u64, &prev, self.difficulty) {
                return ChainVerdict::FirstBadHeight(i as u64);
            }
            prev = block.block_hash;
        }
        ChainVerdict::Ok
    }

    pub fn prove_inclusion(&self, tx_id: &Digest) -> Result<(u64, u32), LedgerError> {
        self.index
            .get(tx_id)
            .copied()
            .ok_or(LedgerError::UnknownTransaction(*tx_id))
    }

    pub fn transaction(&self, tx_id: &Digest) -> Result<&Transaction, LedgerError> {
        let (h, p) = self.prove_inclusion(tx_id)?;
        self.blocks
            .get(h as usize)
            .and_then(|b| b.transactions.get(p as usize))
            .ok_or(LedgerError::UnknownTransaction(*tx_id))
    }

    /// Whether `secret_block` is exactly the block committed by `tx_id`.
    pub fn confirm_secret(&self, tx_id: &Digest, secret_block: &[u8]) -> Result<bool, LedgerError> {
        let tx = self.transaction(tx_id)?;
        Ok(Digest::of(secret_block) == tx.body.secret_commitment)
    }

    // -- serialization ------------------------------------------------------

    /// Magic followed by `u32`-length-prefixed block records.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = CHAIN_MAGIC.to_vec();
        for b in &self.blocks {
            append_record(&mut out, b);
        }
        out
    }

    /// Decode a chain file. Records are not validated here.
    pub fn from_bytes(bytes: &[u8], difficulty: u32) -> Result<Self, (CodecError, u64)> {
        let body = bytes
            .strip_prefix(CHAIN_MAGIC.as_slice())
            .ok_or((CodecError::BadMagic, 0))?;
        let mut r = Reader::new(body);
        let mut blocks = Vec::new();
        while r.remaining() > 0 {
            let height = blocks.len() as u64;
            let record = r.bytes().map_err(|e| (e, height))?;
            blocks.push(Block::from_bytes(record).map_err(|e| (e, height))?);
        }
        Ok(Chain::from_blocks(blocks, difficulty))
    }

    pub fn save(&self, path: &Path) -> Result<(), LedgerError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path, difficulty: u32) -> Result<Self, LedgerError> {
        if !path.exists() {
            return Ok(Chain::new(difficulty));
        }
        Chain::from_bytes(&fs::read(path)?, difficulty).map_err(|(e, _)| LedgerError::Codec(e))
    }
}

fn append_record(out: &mut Vec<u8>, block: &Block) {
    let rec = block.to_bytes();
    out.extend_from_slice(&(rec.len() as u32).to_be_bytes());
    out.extend_from_slice(&rec);
}

/// Append one block record to a chain file, creating it if needed.
pub fn append_block(path: &Path, block: &Block) -> Result<(), LedgerError> {
    let mut buf = Vec::new();
    let fresh = !path.exists() || fs::metadata(path)?.len() == 0;
    if fresh {
        buf.extend_from_slice(CHAIN_MAGIC);
    }
    append_record(&mut buf, block);
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(&buf)?;
    f.sync_data()?;
    Ok(())
}

/// Verify a serialized chain. Undecodable record `k` reports height `k`.
pub fn verify_serialized(bytes: &[u8], difficulty: u32) -> ChainVerdict {
    match Chain::from_bytes(bytes, difficulty) {
        Ok(chain) => chain.verify(),
        Err((CodecError::BadMagic, _)) => ChainVerdict::Unreadable,
        Err((_, height)) => ChainVerdict::FirstBadHeight(height),
    }
}

fn block_is_valid(block: &Block, height: u64, prev: &Digest, difficulty: u32) -> bool {
    block.height == height
        && block.prev_hash == *prev
        && block.difficulty == difficulty
        && block.header_hash() == block.block_hash
        && block.block_hash.leading_zero_bits() >= difficulty
        && tx_root(&block.tx_ids) == block.tx_root
        && block.tx_ids.len() == block.transactions.len()
        && block
            .transactions
            .iter()
            .zip(&block.tx_ids)
            .all(|(tx, id)| tx.tx_id == *id && tx.check().is_ok())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::digest;

    const NOW: u64 = 1_700_000_000;

    fn provider() -> KeyPair {
        KeyPair::from_seed(&[4u8; 32]).unwrap()
    }

    fn tx(n: u8, ts: u64) -> Transaction {
        let p = provider();
        Transaction::new_signed(
            TransactionBody {
                consumer_key_fingerprint: digest(&[n, 1]),
                provider_key_fingerprint: p.public.fingerprint(),
                content_commitment: digest(&[n, 2]),
                secret_commitment: digest(&[n, 3]),
                timestamp: ts,
            },
            &p,
        )
    }

    fn chain_of(blocks: u8) -> Chain {
        let mut c = Chain::default();
        for i in 0..blocks {
            c.submit_transaction(tx(i, NOW), &provider().public, NOW).unwrap();
            c.mine_block(NOW + i as u64).unwrap();
        }
        c
    }

    #[test]
    fn submit_and_duplicate() {
        let mut c = Chain::default();
        let t = tx(1, NOW);
        let id = c.submit_transaction(t.clone(), &provider().public, NOW).unwrap();
        assert_eq!(c.pending().next().unwrap().tx_id, id);
        assert_eq!(
            c.submit_transaction(t.clone(), &provider().public, NOW),
            Err(LedgerError::DuplicateTransaction(id))
        );
        c.mine_block(NOW).unwrap();
        assert_eq!(
            c.submit_transaction(t, &provider().public, NOW),
            Err(LedgerError::DuplicateTransaction(id))
        );
    }

    #[test]
    fn submit_rejections() {
        let mut c = Chain::default();
        assert!(matches!(
            c.submit_transaction(tx(1, NOW - 901), &provider().public, NOW),
            Err(LedgerError::StaleTimestamp { .. })
        ));
        assert!(c.submit_transaction(tx(2, NOW + 900), &provider().public, NOW).is_ok());
        let other = KeyPair::generate();
        assert_eq!(
            c.submit_transaction(tx(3, NOW), &other.public, NOW),
            Err(LedgerError::BadSignature)
        );
        let mut forged = tx(4, NOW);
        forged.provider_signature.0[5] ^= 1;
        assert_eq!(
            c.submit_transaction(forged, &provider().public, NOW),
            Err(LedgerError::BadSignature)
        );
    }

    #[test]
    fn body_bit_flips_are_rejected() {
        let t = tx(9, NOW);
        let bytes = t.to_bytes();
        // Skip the tx_id field itself (4 + 32 bytes); flip each body bit.
        let body_len = t.body.to_bytes().len();
        for bit in (36 * 8)..((36 + body_len) * 8) {
            let mut b = bytes.clone();
            b[bit / 8] ^= 1 << (bit % 8);
            let Ok(flipped) = Transaction::from_bytes(&b) else {
                continue;
            };
            let mut c = Chain::default();
            let err = c
                .submit_transaction(flipped, &provider().public, NOW)
                .unwrap_err();
            assert!(
                matches!(
                    err,
                    LedgerError::BadSignature | LedgerError::MalformedTransaction(_)
                ),
                "bit {bit}: {err:?}"
            );
        }
    }

    #[test]
    fn mining() {
        let mut c = Chain::default();
        assert_eq!(c.mine_block(NOW).unwrap_err(), LedgerError::NothingToMine);
        let a = c.submit_transaction(tx(1, NOW), &provider().public, NOW).unwrap();
        let b = c.submit_transaction(tx(2, NOW), &provider().public, NOW).unwrap();
        let block = c.mine_block(NOW).unwrap();
        assert_eq!(block.block_hash.as_bytes()[0], 0);
        assert_eq!(block.tx_ids, vec![a, b]);
        assert_eq!(block.prev_hash, Digest::ZERO);
        assert!(block.nonce < 1_000_000);
        assert_eq!(c.prove_inclusion(&b).unwrap(), (0, 1));
    }

    #[test]
    fn verify_detects_tampering() {
        let c = chain_of(5);
        assert_eq!(c.verify(), ChainVerdict::Ok);

        let mut blocks = c.blocks().to_vec();
        blocks[3].tx_ids[0] = digest(b"other");
        assert_eq!(
            Chain::from_blocks(blocks, 8).verify(),
            ChainVerdict::FirstBadHeight(3)
        );

        let mut blocks = c.blocks().to_vec();
        blocks.swap(2, 3);
        assert_eq!(
            Chain::from_blocks(blocks, 8).verify(),
            ChainVerdict::FirstBadHeight(2)
        );
    }

    #[test]
    fn confirm_secret_and_unknown() {
        let c = chain_of(2);
        let id = c.blocks()[1].tx_ids[0];
        assert!(c.confirm_secret(&id, &[1, 3]).unwrap());
        assert!(!c.confirm_secret(&id, &[1, 4]).unwrap());
        let unknown = digest(b"none");
        assert_eq!(
            c.confirm_secret(&unknown, b"x"),
            Err(LedgerError::UnknownTransaction(unknown))
        );
    }

    #[test]
    fn serialization_round_trip_and_append() {
        let c = chain_of(3);
        let bytes = c.to_bytes();
        let back = Chain::from_bytes(&bytes, 8).unwrap();
        assert_eq!(back.blocks(), c.blocks());
        assert_eq!(verify_serialized(&bytes, 8), ChainVerdict::Ok);
        assert_eq!(verify_serialized(b"nonsense", 8), ChainVerdict::Unreadable);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.log");
        for b in c.blocks() {
            append_block(&path, b).unwrap();
        }
        assert_eq!(fs::read(&path).unwrap(), bytes);
        assert_eq!(Chain::load(&path, 8).unwrap().blocks(), c.blocks());
    }
}
