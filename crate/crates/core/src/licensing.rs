//! Licenses, secret blocks and the purchase flow.
//!
//! A [`License`] binds one consumer to one piece of content. The content key
//! travels inside it sealed to the consumer's public key, so only that
//! consumer can redeem it. A [`SecretBlock`] records the purchase for the
//! consumer alone; the public chain only stores its digest.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{CodecError, Reader, Writer};
use crate::crypto::{
    b64_decode, b64_encode, open, random_bytes, seal, CryptoError, Digest, Envelope, KeyPair,
    PublicKey, SecretKey, SymKey,
};
use crate::identity::{Account, IdentityService, Token};
use crate::ledger::{Chain, LedgerError, Transaction, TransactionBody};
use crate::storage::{SkyLink, StorageError, StorageNetwork};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LicenseError {
    #[error("key rules are invalid: not_before is after not_after")]
    InvalidRules,
    #[error("rights must allow at least one action")]
    EmptyRights,
    #[error("license hash or fingerprint does not recompute")]
    InvalidLicense,
    #[error("rights denied: {0}")]
    RightsDenied(Denial),
    #[error("license key envelope could not be opened")]
    OpenFailed,
    #[error("session is not authenticated for this consumer")]
    NotAuthenticated,
    #[error("unknown content {0}")]
    UnknownContent(String),
    #[error("provider cannot open the content key")]
    NotContentOwner,
    #[error("ledger rejected the transaction: {0}")]
    LedgerRejected(LedgerError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("corrupt record: {0}")]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Stream,
    Download,
    Relicense,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Stream, Action::Download, Action::Relicense];

    fn code(self) -> u8 {
        match self {
            Action::Stream => 0,
            Action::Download => 1,
            Action::Relicense => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        Action::ALL.into_iter().find(|a| a.code() == c)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Stream => "stream",
            Action::Download => "download",
            Action::Relicense => "re-license",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown action {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rights {
    pub allowed_actions: BTreeSet<Action>,
}

impl Rights {
    pub fn new(actions: impl IntoIterator<Item = Action>) -> Result<Self, LicenseError> {
        let allowed_actions: BTreeSet<_> = actions.into_iter().collect();
        if allowed_actions.is_empty() {
            return Err(LicenseError::EmptyRights);
        }
        Ok(Rights { allowed_actions })
    }

    pub fn allows(&self, action: Action) -> bool {
        self.allowed_actions.contains(&action)
    }
}

/// Stream and download; re-licensing is opt-in.
impl Default for Rights {
    fn default() -> Self {
        Rights {
            allowed_actions: [Action::Stream, Action::Download].into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRules {
    pub not_before: u64,
    pub not_after: u64,
    /// `None` means unlimited.
    pub max_uses: Option<u32>,
    pub offline_allowed: bool,
}

impl KeyRules {
    pub fn validate(&self) -> Result<(), LicenseError> {
        if self.not_before > self.not_after {
            return Err(LicenseError::InvalidRules);
        }
        Ok(())
    }

    fn write(&self, w: &mut Writer) {
        w.u64(self.not_before).u64(self.not_after);
        match self.max_uses {
            None => w.u8(0).u32(0),
            Some(n) => w.u8(1).u32(n),
        };
        w.u8(self.offline_allowed as u8);
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let not_before = r.u64()?;
        let not_after = r.u64()?;
        let max_uses = match (r.u8()?, r.u32()?) {
            (0, 0) => None,
            (1, n) => Some(n),
            _ => return Err(CodecError::InvalidValue("max_uses")),
        };
        let offline_allowed = match r.u8()? {
            0 => false,
            1 => true,
            _ => return Err(CodecError::InvalidValue("offline_allowed")),
        };
        Ok(KeyRules {
            not_before,
            not_after,
            max_uses,
            offline_allowed,
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LicenseId(pub [u8; 16]);

impl LicenseId {
    pub fn random() -> Self {
        LicenseId(random_bytes::<16>())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(text: &str) -> Result<Self, CryptoError> {
        let mut out = [0u8; 16];
        hex::decode_to_slice(text, &mut out).map_err(|e| CryptoError::Encoding(e.to_string()))?;
        Ok(LicenseId(out))
    }
}

impl fmt::Debug for LicenseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LicenseId({})", self.to_hex())
    }
}

impl Serialize for LicenseId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&b64_encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for LicenseId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let v = b64_decode(&String::deserialize(d)?).map_err(D::Error::custom)?;
        Ok(LicenseId(v.try_into().map_err(|_| D::Error::custom("license id must be 16 bytes"))?))
    }
}

/// `H(consumer_id ‖ content_id)`, used to trace a leaked license.
pub fn consumer_fingerprint(consumer_id: &str, content_id: &Digest) -> Digest {
    Digest::of_parts(&[consumer_id.as_bytes(), content_id.as_bytes()])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct License {
    pub license_id: LicenseId,
    pub consumer_id: String,
    pub consumer_public_key: PublicKey,
    pub content_id: Digest,
    pub enveloped_content_key: Envelope,
    pub key_rules: KeyRules,
    pub rights: Rights,
    pub consumer_fingerprint: Digest,
    pub issued_at: u64,
    pub license_hash: Digest,
}

impl License {
    /// Canonical encoding of every field before `license_hash`.
    pub fn body_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(&self.license_id.0)
            .str(&self.consumer_id)
            .bytes(self.consumer_public_key.as_bytes())
            .digest(&self.content_id)
            .envelope(&self.enveloped_content_key);
        self.key_rules.write(&mut w);
        w.u32(self.rights.allowed_actions.len() as u32);
        for a in &self.rights.allowed_actions {
            w.u8(a.code());
        }
        w.digest(&self.consumer_fingerprint).u64(self.issued_at);
        w.finish()
    }

    pub fn compute_hash(&self) -> Digest {
        Digest::of(&self.body_bytes())
    }

    pub fn is_intact(&self) -> bool {
        self.license_hash == self.compute_hash()
            && self.consumer_fingerprint == consumer_fingerprint(&self.consumer_id, &self.content_id)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.body_bytes()).digest(&self.license_hash);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let license_id = LicenseId(r.fixed::<16>()?);
        let consumer_id = r.string()?;
        let consumer_public_key = r.public_key()?;
        let content_id = r.digest()?;
        let enveloped_content_key = r.envelope()?;
        let key_rules = KeyRules::read(&mut r)?;
        let n = r.u32()?;
        let mut allowed_actions = BTreeSet::new();
        for _ in 0..n {
            let a = Action::from_code(r.u8()?).ok_or(CodecError::InvalidValue("action"))?;
            allowed_actions.insert(a);
        }
        let consumer_fingerprint = r.digest()?;
        let issued_at = r.u64()?;
        let license_hash = r.digest()?;
        r.finish()?;
        Ok(License {
            license_id,
            consumer_id,
            consumer_public_key,
            content_id,
            enveloped_content_key,
            key_rules,
            rights: Rights { allowed_actions },
            consumer_fingerprint,
            issued_at,
            license_hash,
        })
    }
}

pub fn issue_license(
    consumer: &Account,
    content_id: Digest,
    content_key: &SymKey,
    rules: KeyRules,
    rights: Rights,
    now: u64,
) -> Result<License, LicenseError> {
    rules.validate()?;
    if rights.allowed_actions.is_empty() {
        return Err(LicenseError::EmptyRights);
    }
    let mut license = License {
        license_id: LicenseId::random(),
        consumer_id: consumer.id.clone(),
        consumer_public_key: consumer.public_key,
        content_id,
        enveloped_content_key: seal(&consumer.public_key, content_key.as_bytes())?,
        key_rules: rules,
        rights,
        consumer_fingerprint: consumer_fingerprint(&consumer.id, &content_id),
        issued_at: now,
        license_hash: Digest::ZERO,
    };
    license.license_hash = license.compute_hash();
    Ok(license)
}

/// Locate the license a leaked `(consumer_id, content_id)` pair was issued under.
pub fn find_by_fingerprint<'a>(
    licenses: impl IntoIterator<Item = &'a License>,
    consumer_id: &str,
    content_id: &Digest,
) -> Option<&'a License> {
    let fp = consumer_fingerprint(consumer_id, content_id);
    licenses.into_iter().find(|l| l.consumer_fingerprint == fp)
}

// ---------------------------------------------------------------------------
// Rights evaluation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Denial {
    ActionForbidden,
    NotYetValid,
    Expired,
    UsesExhausted,
}

impl fmt::Display for Denial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny(Denial),
}

/// Pure evaluation given the number of uses already consumed. Reasons are
/// checked in the order: action, window start, window end, use count.
pub fn evaluate(rules: &KeyRules, rights: &Rights, action: Action, now: u64, used: u32) -> Decision {
    if !rights.allows(action) {
        Decision::Deny(Denial::ActionForbidden)
    } else if now < rules.not_before {
        Decision::Deny(Denial::NotYetValid)
    } else if now > rules.not_after {
        Decision::Deny(Denial::Expired)
    } else if rules.max_uses.is_some_and(|max| used >= max) {
        Decision::Deny(Denial::UsesExhausted)
    } else {
        Decision::Allow
    }
}

/// Consumer-side use counters, one per license.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageTracker {
    uses: HashMap<String, u32>,
}

impl UsageTracker {
    pub fn uses(&self, id: &LicenseId) -> u32 {
        self.uses.get(&id.to_hex()).copied().unwrap_or(0)
    }

    pub fn set_uses(&mut self, id: &LicenseId, n: u32) {
        self.uses.insert(id.to_hex(), n);
    }

    /// Evaluate and, on allow, count one use.
    pub fn check_rights(&mut self, license: &License, action: Action, now: u64) -> Decision {
        let used = self.uses(&license.license_id);
        let d = evaluate(&license.key_rules, &license.rights, action, now, used);
        if d == Decision::Allow {
            self.set_uses(&license.license_id, used.saturating_add(1));
        }
        d
    }
}

/// Release the content key if the rules allow `action` now.
pub fn redeem_license(
    consumer: &SecretKey,
    license: &License,
    action: Action,
    now: u64,
    tracker: &mut UsageTracker,
) -> Result<SymKey, LicenseError> {
    let used = tracker.uses(&license.license_id);
    if let Decision::Deny(reason) = evaluate(&license.key_rules, &license.rights, action, now, used) {
        return Err(LicenseError::RightsDenied(reason));
    }
    let raw = open(consumer, &license.enveloped_content_key).map_err(|_| LicenseError::OpenFailed)?;
    let key = SymKey::from_slice(&raw).map_err(|_| LicenseError::OpenFailed)?;
    tracker.set_uses(&license.license_id, used.saturating_add(1));
    Ok(key)
}

// ---------------------------------------------------------------------------
// Secret blocks

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecretBlock {
    pub block_hash: Digest,
    pub prev_public_hash: Digest,
    pub time: u64,
    pub auth_info: Digest,
    pub provider_info: String,
    pub encrypted_content_info: Envelope,
    pub license_info: Digest,
}

/// `H(session_token ‖ consumer_id)`.
pub fn auth_info(session: &Token, consumer_id: &str) -> Digest {
    Digest::of_parts(&[&session.0, consumer_id.as_bytes()])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContentInfo {
    pub title: String,
    pub skylink: String,
}

impl ContentInfo {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.str(&self.title).str(&self.skylink);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let info = ContentInfo {
            title: r.string()?,
            skylink: r.string()?,
        };
        r.finish()?;
        Ok(info)
    }
}

impl SecretBlock {
    pub fn body_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.digest(&self.prev_public_hash)
            .u64(self.time)
            .digest(&self.auth_info)
            .str(&self.provider_info)
            .envelope(&self.encrypted_content_info)
            .digest(&self.license_info);
        w.finish()
    }

    pub fn compute_hash(&self) -> Digest {
        Digest::of(&self.body_bytes())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.digest(&self.block_hash).raw(&self.body_bytes());
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let block = SecretBlock {
            block_hash: r.digest()?,
            prev_public_hash: r.digest()?,
            time: r.u64()?,
            auth_info: r.digest()?,
            provider_info: r.string()?,
            encrypted_content_info: r.envelope()?,
            license_info: r.digest()?,
        };
        r.finish()?;
        Ok(block)
    }

    /// Open the content title and skylink with the consumer's key.
    pub fn content_info(&self, consumer: &SecretKey) -> Result<ContentInfo, LicenseError> {
        let raw = open(consumer, &self.encrypted_content_info).map_err(|_| LicenseError::OpenFailed)?;
        Ok(ContentInfo::from_bytes(&raw)?)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SecretBlockInput<'a> {
    pub session_token: &'a Token,
    pub provider_name: &'a str,
    pub chain_tip_hash: Digest,
    pub content_title: &'a str,
    pub skylink: &'a SkyLink,
    pub now: u64,
}

/// Build the consumer's secret block and seal its canonical bytes to them.
pub fn build_secret_block(
    license: &License,
    input: SecretBlockInput<'_>,
    consumer_public: &PublicKey,
) -> Result<(SecretBlock, Envelope), LicenseError> {
    if !license.is_intact() {
        return Err(LicenseError::InvalidLicense);
    }
    let info = ContentInfo {
        title: input.content_title.to_owned(),
        skylink: input.skylink.to_string(),
    };
    let mut block = SecretBlock {
        block_hash: Digest::ZERO,
        prev_public_hash: input.chain_tip_hash,
        time: input.now,
        auth_info: auth_info(input.session_token, &license.consumer_id),
        provider_info: input.provider_name.to_owned(),
        encrypted_content_info: seal(consumer_public, &info.to_bytes())?,
        license_info: license.license_hash,
    };
    block.block_hash = block.compute_hash();
    let sealed = seal(consumer_public, &block.to_bytes())?;
    Ok((block, sealed))
}

// ---------------------------------------------------------------------------
// Purchase

#[derive(Debug, Clone, Copy)]
pub struct Provider<'a> {
    pub name: &'a str,
    pub keys: &'a KeyPair,
}

#[derive(Debug, Clone)]
pub struct PurchaseRequest<'a> {
    pub session_token: &'a Token,
    pub content_id: Digest,
    pub content_title: &'a str,
    pub rules: KeyRules,
    pub rights: Rights,
    pub now: u64,
}

#[derive(Debug, Clone)]
pub struct Purchase {
    pub license: License,
    pub sealed_secret_block: Envelope,
    pub tx_id: Digest,
}

/// `H(content_id ‖ license_id)`; binds the transaction to the content without
/// making the content id itself searchable on chain.
pub fn content_commitment(content_id: &Digest, license_id: &LicenseId) -> Digest {
    Digest::of_parts(&[content_id.as_bytes(), &license_id.0])
}

/// Issue a license, build the secret block and submit the committing
/// transaction. Only the final ledger submission mutates state, so any
/// earlier failure leaves nothing behind.
pub fn execute_purchase(
    identity: &IdentityService,
    network: &StorageNetwork,
    chain: &mut Chain,
    provider: Provider<'_>,
    consumer: &Account,
    req: PurchaseRequest<'_>,
) -> Result<Purchase, LicenseError> {
    match identity.validate_session(req.session_token, req.now) {
        Ok(id) if id == consumer.id => {}
        _ => return Err(LicenseError::NotAuthenticated),
    }
    let link = SkyLink(req.content_id);
    let content_key = match network.file_key(&link, &provider.keys.secret) {
        Ok(k) => k,
        Err(StorageError::UnknownSkylink(s)) => return Err(LicenseError::UnknownContent(s)),
        Err(_) => return Err(LicenseError::NotContentOwner),
    };

    let license = issue_license(
        consumer,
        req.content_id,
        &content_key,
        req.rules,
        req.rights,
        req.now,
    )?;
    let (block, sealed_secret_block) = build_secret_block(
        &license,
        SecretBlockInput {
            session_token: req.session_token,
            provider_name: provider.name,
            chain_tip_hash: chain.tip_hash(),
            content_title: req.content_title,
            skylink: &link,
            now: req.now,
        },
        &consumer.public_key,
    )?;

    let tx = Transaction::new_signed(
        TransactionBody {
            consumer_key_fingerprint: consumer.public_key.fingerprint(),
            provider_key_fingerprint: provider.keys.public.fingerprint(),
            content_commitment: content_commitment(&req.content_id, &license.license_id),
            secret_commitment: Digest::of(&block.to_bytes()),
            timestamp: req.now,
        },
        provider.keys,
    );
    let tx_id = chain
        .submit_transaction(tx, &provider.keys.public, req.now)
        .map_err(LicenseError::LedgerRejected)?;
    Ok(Purchase {
        license,
        sealed_secret_block,
        tx_id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::digest;
    use crate::identity::respond;

    const NOW: u64 = 1_700_000_000;

    fn consumer() -> (Account, KeyPair) {
        let kp = KeyPair::from_seed(&[21u8; 32]).unwrap();
        let acc = Account {
            id: "carol".into(),
            verifier: digest(b"v"),
            public_key: kp.public,
            created_at: NOW,
        };
        (acc, kp)
    }

    fn rules(max: Option<u32>) -> KeyRules {
        KeyRules {
            not_before: NOW,
            not_after: NOW + 100,
            max_uses: max,
            offline_allowed: false,
        }
    }

    fn license(max: Option<u32>) -> (License, KeyPair, SymKey) {
        let (acc, kp) = consumer();
        let key = SymKey([9u8; 32]);
        let l = issue_license(&acc, digest(b"content"), &key, rules(max), Rights::default(), NOW).unwrap();
        (l, kp, key)
    }

    #[test]
    fn issue_and_redeem() {
        let (l, kp, key) = license(None);
        let mut t = UsageTracker::default();
        assert_eq!(
            redeem_license(&kp.secret, &l, Action::Stream, NOW, &mut t).unwrap(),
            key
        );
        let provider = KeyPair::from_seed(&[22u8; 32]).unwrap();
        assert_eq!(
            redeem_license(&provider.secret, &l, Action::Stream, NOW, &mut t),
            Err(LicenseError::OpenFailed)
        );
    }

    #[test]
    fn license_hash_recomputes_independently() {
        let (l, _, _) = license(Some(3));
        assert!(l.is_intact());
        // Hash the canonical record minus its trailing length-prefixed hash.
        let full = l.to_bytes();
        assert_eq!(digest(&full[..full.len() - 36]), l.license_hash);
        assert_eq!(License::from_bytes(&full).unwrap(), l);
        let json = serde_json::to_string(&l).unwrap();
        assert_eq!(serde_json::from_str::<License>(&json).unwrap(), l);
    }

    #[test]
    fn issue_rejects_bad_inputs() {
        let (acc, _) = consumer();
        let mut r = rules(None);
        r.not_before = r.not_after + 1;
        assert_eq!(
            issue_license(&acc, digest(b"c"), &SymKey([0; 32]), r, Rights::default(), NOW),
            Err(LicenseError::InvalidRules)
        );
        assert_eq!(Rights::new([]), Err(LicenseError::EmptyRights));
        let empty = Rights {
            allowed_actions: BTreeSet::new(),
        };
        assert_eq!(
            issue_license(&acc, digest(b"c"), &SymKey([0; 32]), rules(None), empty, NOW),
            Err(LicenseError::EmptyRights)
        );
    }

    #[test]
    fn check_rights_counts_uses() {
        let (l, _, _) = license(Some(2));
        let mut t = UsageTracker::default();
        assert_eq!(t.check_rights(&l, Action::Stream, NOW), Decision::Allow);
        assert_eq!(t.check_rights(&l, Action::Stream, NOW + 1), Decision::Allow);
        assert_eq!(
            t.check_rights(&l, Action::Stream, NOW + 2),
            Decision::Deny(Denial::UsesExhausted)
        );
        assert_eq!(
            t.check_rights(&l, Action::Stream, NOW + 101),
            Decision::Deny(Denial::Expired)
        );
        assert_eq!(
            t.check_rights(&l, Action::Stream, NOW - 1),
            Decision::Deny(Denial::NotYetValid)
        );
        assert_eq!(
            t.check_rights(&l, Action::Relicense, NOW),
            Decision::Deny(Denial::ActionForbidden)
        );
    }

    #[test]
    fn redeem_denied_never_releases() {
        let (l, kp, _) = license(None);
        let mut t = UsageTracker::default();
        assert_eq!(
            redeem_license(&kp.secret, &l, Action::Stream, NOW + 101, &mut t),
            Err(LicenseError::RightsDenied(Denial::Expired))
        );
        assert_eq!(t.uses(&l.license_id), 0);
    }

    #[test]
    fn tampered_envelope_fails_to_open() {
        let (l, kp, _) = license(None);
        let bytes = l.enveloped_content_key.to_bytes();
        for bit in 0..bytes.len() * 8 {
            let mut b = bytes.clone();
            b[bit / 8] ^= 1 << (bit % 8);
            let mut tampered = l.clone();
            tampered.enveloped_content_key = Envelope::from_bytes(&b).unwrap();
            let mut t = UsageTracker::default();
            assert_eq!(
                redeem_license(&kp.secret, &tampered, Action::Stream, NOW, &mut t),
                Err(LicenseError::OpenFailed),
                "bit {bit}"
            );
        }
    }

    #[test]
    fn every_field_mutation_changes_hash() {
        let (l, _, _) = license(Some(1));
        let h = l.compute_hash();
        let mut muts: Vec<License> = Vec::new();
        let mut m = l.clone();
        m.license_id.0[0] ^= 1;
        muts.push(m);
        let mut m = l.clone();
        m.consumer_id.push('x');
        muts.push(m);
        let mut m = l.clone();
        m.consumer_public_key = KeyPair::generate().public;
        muts.push(m);
        let mut m = l.clone();
        m.content_id = digest(b"other");
        muts.push(m);
        let mut m = l.clone();
        m.enveloped_content_key.nonce[0] ^= 1;
        muts.push(m);
        let mut m = l.clone();
        m.key_rules.not_after += 1;
        muts.push(m);
        let mut m = l.clone();
        m.key_rules.max_uses = None;
        muts.push(m);
        let mut m = l.clone();
        m.key_rules.offline_allowed = true;
        muts.push(m);
        let mut m = l.clone();
        m.rights.allowed_actions.insert(Action::Relicense);
        muts.push(m);
        let mut m = l.clone();
        m.consumer_fingerprint = digest(b"fp");
        muts.push(m);
        let mut m = l.clone();
        m.issued_at += 1;
        muts.push(m);
        for (i, m) in muts.iter().enumerate() {
            assert_ne!(m.compute_hash(), h, "mutation {i}");
            assert!(!m.is_intact(), "mutation {i}");
        }
    }

    #[test]
    fn fingerprint_lookup() {
        let (acc, _) = consumer();
        let key = SymKey([1; 32]);
        let a = issue_license(&acc, digest(b"a"), &key, rules(None), Rights::default(), NOW).unwrap();
        let b = issue_license(&acc, digest(b"b"), &key, rules(None), Rights::default(), NOW).unwrap();
        let all = [a.clone(), b.clone()];
        assert_eq!(find_by_fingerprint(&all, "carol", &digest(b"b")), Some(&b));
        assert_eq!(find_by_fingerprint(&all, "dave", &digest(b"b")), None);
    }

    #[test]
    fn secret_block_round_trip() {
        let (l, kp, _) = license(None);
        let token = Token([5; 32]);
        let link = SkyLink(digest(b"content"));
        let tip = digest(b"tip");
        let (block, sealed) = build_secret_block(
            &l,
            SecretBlockInput {
                session_token: &token,
                provider_name: "studio",
                chain_tip_hash: tip,
                content_title: "Film",
                skylink: &link,
                now: NOW,
            },
            &kp.public,
        )
        .unwrap();
        let opened = SecretBlock::from_bytes(&open(&kp.secret, &sealed).unwrap()).unwrap();
        assert_eq!(opened, block);
        assert_eq!(opened.compute_hash(), opened.block_hash);
        assert_eq!(opened.prev_public_hash, tip);
        assert_eq!(opened.auth_info, auth_info(&token, "carol"));
        assert_eq!(opened.content_info(&kp.secret).unwrap().title, "Film");
        assert!(open(&KeyPair::generate().secret, &sealed).is_err());
    }

    #[test]
    fn purchase_flow() {
        let identity = IdentityService::default();
        let network = StorageNetwork::new(3, 3).unwrap();
        let mut chain = Chain::default();
        let provider_keys = KeyPair::from_seed(&[30u8; 32]).unwrap();
        let (link, _) = network.upload(b"the film bytes", &provider_keys, 4).unwrap();

        let consumer_keys = KeyPair::from_seed(&[31u8; 32]).unwrap();
        let acc = identity
            .register("carol", "correct horse", consumer_keys.public, NOW)
            .unwrap();
        let ch = identity.begin_auth("carol", NOW).unwrap();
        let resp = respond(&ch, &consumer_keys.secret, "correct horse").unwrap();
        let session = identity.complete_auth(&ch.challenge_id, &resp, NOW).unwrap();

        let provider = Provider {
            name: "studio",
            keys: &provider_keys,
        };
        let req = |token, content_id, now| PurchaseRequest {
            session_token: token,
            content_id,
            content_title: "Film",
            rules: rules(None),
            rights: Rights::default(),
            now,
        };

        let p = execute_purchase(&identity, &network, &mut chain, provider, &acc, req(&session.token, link.0, NOW))
            .unwrap();
        chain.mine_block(NOW).unwrap();
        let bytes = open(&consumer_keys.secret, &p.sealed_secret_block).unwrap();
        assert!(chain.confirm_secret(&p.tx_id, &bytes).unwrap());

        let mut t = UsageTracker::default();
        let key = redeem_license(&consumer_keys.secret, &p.license, Action::Stream, NOW, &mut t).unwrap();
        assert_eq!(network.download_with_key(&link, &key).unwrap(), b"the film bytes");

        let expired = NOW + 3600;
        assert_eq!(
            execute_purchase(&identity, &network, &mut chain, provider, &acc, req(&session.token, link.0, expired))
                .unwrap_err(),
            LicenseError::NotAuthenticated
        );
        assert!(matches!(
            execute_purchase(&identity, &network, &mut chain, provider, &acc, req(&session.token, digest(b"?"), NOW))
                .unwrap_err(),
            LicenseError::UnknownContent(_)
        ));
        assert_eq!(chain.pending().count(), 0);
    }
}
