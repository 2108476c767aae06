//! Off-chain authentication authority.
//!
//! Registration stores `(id, H(password ‖ H(id)), public_key)`. Login is a
//! three-message exchange:
//!
//! 1. the client asks to authenticate as `id`;
//! 2. the server answers with a fresh 32-byte nonce sealed to the account's
//!    public key;
//! 3. the client opens the nonce and returns `H(nonce ‖ verifier)`.
//!
//! A correct response therefore needs both the private key and the password.
//! All time is passed in explicitly as unix seconds.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{
    b64_decode, b64_encode, derive_credential, open, random_bytes, seal, CryptoError,
    Digest, Envelope, PublicKey, SecretKey,
};

pub const DEFAULT_CHALLENGE_TTL: u64 = 120;
pub const DEFAULT_SESSION_TTL: u64 = 3600;
pub const MIN_PASSWORD_LEN: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdentityError {
    #[error("account {0:?} already exists")]
    DuplicateId(String),
    #[error("password must be at least {MIN_PASSWORD_LEN} characters")]
    WeakPassword,
    #[error("account identifier must not be empty")]
    EmptyIdentifier,
    #[error("unknown account {0:?}")]
    UnknownId(String),
    #[error("unknown or already used challenge")]
    UnknownChallenge,
    #[error("expired")]
    Expired,
    #[error("challenge response does not match")]
    ResponseMismatch,
    #[error("invalid session token")]
    InvalidToken,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentityConfig {
    pub challenge_ttl: u64,
    pub session_ttl: u64,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        IdentityConfig {
            challenge_ttl: DEFAULT_CHALLENGE_TTL,
            session_ttl: DEFAULT_SESSION_TTL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub id: String,
    pub verifier: Digest,
    pub public_key: PublicKey,
    pub created_at: u64,
}

macro_rules! b64_token {
    ($name:ident, $len:expr) => {
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub fn random() -> Self {
                $name(random_bytes::<$len>())
            }

            pub fn to_b64(&self) -> String {
                b64_encode(&self.0)
            }

            pub fn from_b64(text: &str) -> Result<Self, CryptoError> {
                let v = b64_decode(text)?;
                let len = v.len();
                v.try_into()
                    .map($name)
                    .map_err(|_| CryptoError::Encoding(format!("expected {} bytes, got {len}", $len)))
            }
        }

        impl std::fmt::Debug for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                write!(f, concat!(stringify!($name), "({})"), self.to_b64())
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_b64())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                $name::from_b64(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

b64_token!(ChallengeId, 16);
b64_token!(Token, 32);

/// Server-side challenge state. The nonce never leaves the server in the
/// clear; clients receive an [`IssuedChallenge`].
#[derive(Debug, Clone)]
pub struct Challenge {
    pub challenge_id: ChallengeId,
    pub account_id: String,
    nonce: [u8; 32],
    pub sealed_nonce: Envelope,
    pub issued_at: u64,
    pub ttl_seconds: u64,
}

impl Challenge {
    pub fn issued(&self) -> IssuedChallenge {
        IssuedChallenge {
            challenge_id: self.challenge_id,
            account_id: self.account_id.clone(),
            sealed_nonce: self.sealed_nonce.clone(),
            issued_at: self.issued_at,
            ttl_seconds: self.ttl_seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuedChallenge {
    pub challenge_id: ChallengeId,
    pub account_id: String,
    pub sealed_nonce: Envelope,
    pub issued_at: u64,
    pub ttl_seconds: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionToken {
    pub token: Token,
    pub account_id: String,
    pub expires_at: u64,
}

/// `H(nonce ‖ verifier)`.
pub fn challenge_response(nonce: &[u8], verifier: &Digest) -> Digest {
    Digest::of_parts(&[nonce, verifier.as_bytes()])
}

/// Client side of step 3: open the sealed nonce and bind it to the password.
pub fn respond(
    challenge: &IssuedChallenge,
    secret: &SecretKey,
    password: &str,
) -> Result<Digest, CryptoError> {
    let nonce = open(secret, &challenge.sealed_nonce)?;
    let cred = derive_credential(&challenge.account_id, password)?;
    Ok(challenge_response(&nonce, &cred.verifier))
}

/// Persistable view of the store. Outstanding challenges are not part of it;
/// they die with the process.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentitySnapshot {
    pub accounts: Vec<Account>,
    pub sessions: Vec<SessionToken>,
}

#[derive(Debug, Default)]
struct State {
    accounts: BTreeMap<String, Account>,
    challenges: HashMap<ChallengeId, Challenge>,
    sessions: HashMap<Token, SessionToken>,
}

/// The account, challenge and session store. Every operation takes the one
/// internal lock, so requests are applied one at a time.
#[derive(Debug, Default)]
pub struct IdentityService {
    config: IdentityConfig,
    state: Mutex<State>,
}

impl IdentityService {
    pub fn new(config: IdentityConfig) -> Self {
        IdentityService {
            config,
            state: Mutex::default(),
        }
    }

    pub fn config(&self) -> IdentityConfig {
        self.config
    }

    pub fn register(
        &self,
        id: &str,
        password: &str,
        public_key: PublicKey,
        now: u64,
    ) -> Result<Account, IdentityError> {
        if id.is_empty() {
            return Err(IdentityError::EmptyIdentifier);
        }
        if password.chars().count() < MIN_PASSWORD_LEN {
            return Err(IdentityError::WeakPassword);
        }
        let mut st = self.state.lock().unwrap();
        if st.accounts.contains_key(id) {
            return Err(IdentityError::DuplicateId(id.to_owned()));
        }
        let cred = derive_credential(id, password)?;
        let account = Account {
            id: id.to_owned(),
            verifier: cred.verifier,
            public_key,
            created_at: now,
        };
        st.accounts.insert(id.to_owned(), account.clone());
        Ok(account)
    }

    pub fn account(&self, id: &str) -> Result<Account, IdentityError> {
        self.state
            .lock()
            .unwrap()
            .accounts
            .get(id)
            .cloned()
            .ok_or_else(|| IdentityError::UnknownId(id.to_owned()))
    }

    pub fn begin_auth(&self, id: &str, now: u64) -> Result<IssuedChallenge, IdentityError> {
        let mut st = self.state.lock().unwrap();
        let account = st
            .accounts
            .get(id)
            .ok_or_else(|| IdentityError::UnknownId(id.to_owned()))?;
        let nonce = random_bytes::<32>();
        let sealed_nonce = seal(&account.public_key, &nonce)?;
        let challenge = Challenge {
            challenge_id: ChallengeId::random(),
            account_id: id.to_owned(),
            nonce,
            sealed_nonce,
            issued_at: now,
            ttl_seconds: self.config.challenge_ttl,
        };
        let issued = challenge.issued();
        st.challenges.insert(challenge.challenge_id, challenge);
        Ok(issued)
    }

    /// Consumes the challenge whatever the outcome.
    pub fn complete_auth(
        &self,
        challenge_id: &ChallengeId,
        response: &Digest,
        now: u64,
    ) -> Result<SessionToken, IdentityError> {
        let mut st = self.state.lock().unwrap();
        let challenge = st
            .challenges
            .remove(challenge_id)
            .ok_or(IdentityError::UnknownChallenge)?;
        if now > challenge.issued_at.saturating_add(challenge.ttl_seconds) {
            return Err(IdentityError::Expired);
        }
        let account = st
            .accounts
            .get(&challenge.account_id)
            .ok_or_else(|| IdentityError::UnknownId(challenge.account_id.clone()))?;
        let expected = challenge_response(&challenge.nonce, &account.verifier);
        if !constant_time_eq(expected.as_bytes(), response.as_bytes()) {
            return Err(IdentityError::ResponseMismatch);
        }
        let session = SessionToken {
            token: Token::random(),
            account_id: challenge.account_id,
            expires_at: now.saturating_add(self.config.session_ttl),
        };
        st.sessions.insert(session.token, session.clone());
        Ok(session)
    }

    pub fn validate_session(&self, token: &Token, now: u64) -> Result<String, IdentityError> {
        let st = self.state.lock().unwrap();
        let session = st.sessions.get(token).ok_or(IdentityError::InvalidToken)?;
        if now >= session.expires_at {
            return Err(IdentityError::Expired);
        }
        Ok(session.account_id.clone())
    }

    pub fn snapshot(&self) -> IdentitySnapshot {
        let st = self.state.lock().unwrap();
        let mut sessions: Vec<_> = st.sessions.values().cloned().collect();
        sessions.sort_by_key(|s| s.token);
        IdentitySnapshot {
            accounts: st.accounts.values().cloned().collect(),
            sessions,
        }
    }

    pub fn restore(config: IdentityConfig, snapshot: IdentitySnapshot) -> Self {
        let svc = IdentityService::new(config);
        {
            let mut st = svc.state.lock().unwrap();
            for a in snapshot.accounts {
                st.accounts.insert(a.id.clone(), a);
            }
            for s in snapshot.sessions {
                st.sessions.insert(s.token, s);
            }
        }
        svc
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::KeyPair;

    const NOW: u64 = 1_700_000_000;

    fn setup() -> (IdentityService, KeyPair) {
        let svc = IdentityService::default();
        let kp = KeyPair::from_seed(&[1u8; 32]).unwrap();
        svc.register("alice", "hunter2abc", kp.public, NOW).unwrap();
        (svc, kp)
    }

    fn login(svc: &IdentityService, kp: &KeyPair, pw: &str, now: u64) -> Result<SessionToken, IdentityError> {
        let ch = svc.begin_auth("alice", now)?;
        let resp = respond(&ch, &kp.secret, pw)?;
        svc.complete_auth(&ch.challenge_id, &resp, now)
    }

    #[test]
    fn register_stores_verifier() {
        let (svc, kp) = setup();
        let acc = svc.account("alice").unwrap();
        // H("hunter2abc" ‖ H("alice")) computed independently of derive_credential.
        let inner = crate::crypto::digest(b"alice");
        let mut buf = b"hunter2abc".to_vec();
        buf.extend_from_slice(inner.as_bytes());
        assert_eq!(acc.verifier, crate::crypto::digest(&buf));
        assert_eq!(acc.public_key, kp.public);
        assert_eq!(acc.created_at, NOW);
    }

    #[test]
    fn register_errors() {
        let (svc, kp) = setup();
        assert_eq!(
            svc.register("alice", "hunter2abc", kp.public, NOW),
            Err(IdentityError::DuplicateId("alice".into()))
        );
        assert_eq!(
            svc.register("bob", "short", kp.public, NOW),
            Err(IdentityError::WeakPassword)
        );
        assert_eq!(
            svc.register("", "longenough", kp.public, NOW),
            Err(IdentityError::EmptyIdentifier)
        );
    }

    #[test]
    fn full_login() {
        let (svc, kp) = setup();
        let session = login(&svc, &kp, "hunter2abc", NOW).unwrap();
        assert_eq!(session.expires_at, NOW + DEFAULT_SESSION_TTL);
        assert_eq!(svc.validate_session(&session.token, NOW + 10).unwrap(), "alice");
        assert_eq!(
            svc.validate_session(&session.token, NOW + DEFAULT_SESSION_TTL),
            Err(IdentityError::Expired)
        );
        assert_eq!(
            svc.validate_session(&Token::random(), NOW),
            Err(IdentityError::InvalidToken)
        );
    }

    #[test]
    fn begin_auth_cases() {
        let (svc, kp) = setup();
        let a = svc.begin_auth("alice", NOW).unwrap();
        let b = svc.begin_auth("alice", NOW).unwrap();
        let na = open(&kp.secret, &a.sealed_nonce).unwrap();
        let nb = open(&kp.secret, &b.sealed_nonce).unwrap();
        assert_ne!(na, nb);
        assert_eq!(na.len(), 32);
        assert!(open(&KeyPair::generate().secret, &a.sealed_nonce).is_err());
        assert_eq!(
            svc.begin_auth("nobody", NOW).unwrap_err(),
            IdentityError::UnknownId("nobody".into())
        );
    }

    #[test]
    fn wrong_password_and_replay() {
        let (svc, kp) = setup();
        assert_eq!(
            login(&svc, &kp, "hunter2abd", NOW).unwrap_err(),
            IdentityError::ResponseMismatch
        );

        let ch = svc.begin_auth("alice", NOW).unwrap();
        let resp = respond(&ch, &kp.secret, "hunter2abc").unwrap();
        svc.complete_auth(&ch.challenge_id, &resp, NOW).unwrap();
        assert_eq!(
            svc.complete_auth(&ch.challenge_id, &resp, NOW).unwrap_err(),
            IdentityError::UnknownChallenge
        );
    }

    #[test]
    fn mismatch_consumes_challenge() {
        let (svc, kp) = setup();
        let ch = svc.begin_auth("alice", NOW).unwrap();
        let good = respond(&ch, &kp.secret, "hunter2abc").unwrap();
        assert_eq!(
            svc.complete_auth(&ch.challenge_id, &Digest::ZERO, NOW),
            Err(IdentityError::ResponseMismatch)
        );
        assert_eq!(
            svc.complete_auth(&ch.challenge_id, &good, NOW),
            Err(IdentityError::UnknownChallenge)
        );
    }

    #[test]
    fn challenge_expiry() {
        let (svc, kp) = setup();
        let ch = svc.begin_auth("alice", NOW).unwrap();
        let resp = respond(&ch, &kp.secret, "hunter2abc").unwrap();
        assert_eq!(
            svc.complete_auth(&ch.challenge_id, &resp, NOW + DEFAULT_CHALLENGE_TTL + 1),
            Err(IdentityError::Expired)
        );
        // Exactly at the TTL boundary is still accepted.
        assert!(login(&svc, &kp, "hunter2abc", NOW).is_ok());
        let ch = svc.begin_auth("alice", NOW).unwrap();
        let resp = respond(&ch, &kp.secret, "hunter2abc").unwrap();
        assert!(svc
            .complete_auth(&ch.challenge_id, &resp, NOW + DEFAULT_CHALLENGE_TTL)
            .is_ok());
    }

    #[test]
    fn snapshot_never_contains_password() {
        let (svc, kp) = setup();
        login(&svc, &kp, "hunter2abc", NOW).unwrap();
        let snap = svc.snapshot();
        let json = serde_json::to_string(&snap).unwrap();
        assert!(!json.contains("hunter2abc"));
        let restored = IdentityService::restore(IdentityConfig::default(), snap.clone());
        assert_eq!(restored.snapshot(), snap);
    }
}
