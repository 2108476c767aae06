//! Cryptographic primitives used across the crate.
//!
//! * Digests are SHA-256.
//! * A [`KeyPair`] is an Ed25519 key. The same key is used for signatures and,
//!   through the birational map to Curve25519, as the recipient key of a
//!   sealed [`Envelope`], so an account needs exactly one public key.
//! * Sealing is ephemeral X25519 agreement followed by ChaCha20-Poly1305.
//! * Symmetric chunk encryption is ChaCha20-Poly1305 under a 32-byte [`SymKey`].

use std::fmt;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use curve25519_dalek::montgomery::MontgomeryPoint;
use ed25519_dalek::{Signer as _, SigningKey, VerifyingKey};
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub const DIGEST_LEN: usize = 32;
pub const KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;
pub const SYM_NONCE_LEN: usize = 12;

const SEAL_KDF_LABEL: &[u8] = b"skyvault/seal/v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("identifier must not be empty")]
    EmptyIdentifier,
    #[error("password must not be empty")]
    EmptyPassword,
    #[error("seed must be 32 bytes, got {0}")]
    BadSeedLength(usize),
    #[error("public key is not a valid curve point")]
    InvalidPublicKey,
    #[error("envelope could not be opened")]
    OpenFailed,
    #[error("symmetric ciphertext failed authentication")]
    AuthFailed,
    #[error("malformed encoding: {0}")]
    Encoding(String),
}

/// Lowercase base64url without padding.
pub fn b64_encode(bytes: &[u8]) -> String {
    URL_SAFE_NO_PAD.encode(bytes)
}

pub fn b64_decode(text: &str) -> Result<Vec<u8>, CryptoError> {
    URL_SAFE_NO_PAD
        .decode(text)
        .map_err(|e| CryptoError::Encoding(e.to_string()))
}

fn b64_decode_fixed<const N: usize>(text: &str) -> Result<[u8; N], CryptoError> {
    let v = b64_decode(text)?;
    let len = v.len();
    v.try_into()
        .map_err(|_| CryptoError::Encoding(format!("expected {N} bytes, got {len}")))
}

// ---------------------------------------------------------------------------
// Digest

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; DIGEST_LEN]);

    pub fn of(data: &[u8]) -> Self {
        Digest(Sha256::digest(data).into())
    }

    /// Digest of the plain concatenation of `parts`.
    pub fn of_parts(parts: &[&[u8]]) -> Self {
        let mut h = Sha256::new();
        for p in parts {
            h.update(p);
        }
        Digest(h.finalize().into())
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(text: &str) -> Result<Self, CryptoError> {
        let mut out = [0u8; DIGEST_LEN];
        hex::decode_to_slice(text, &mut out).map_err(|e| CryptoError::Encoding(e.to_string()))?;
        Ok(Digest(out))
    }

    pub fn leading_zero_bits(&self) -> u32 {
        let mut n = 0;
        for b in self.0 {
            if b == 0 {
                n += 8;
            } else {
                n += b.leading_zeros();
                break;
            }
        }
        n
    }
}

pub fn digest(data: &[u8]) -> Digest {
    Digest::of(data)
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Credentials

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credential {
    pub id: String,
    pub verifier: Digest,
}

/// `verifier = H(password ‖ H(id))`.
pub fn derive_credential(id: &str, password: &str) -> Result<Credential, CryptoError> {
    if id.is_empty() {
        return Err(CryptoError::EmptyIdentifier);
    }
    if password.is_empty() {
        return Err(CryptoError::EmptyPassword);
    }
    let id_hash = Digest::of(id.as_bytes());
    Ok(Credential {
        id: id.to_owned(),
        verifier: Digest::of_parts(&[password.as_bytes(), id_hash.as_bytes()]),
    })
}

// ---------------------------------------------------------------------------
// Keys and signatures

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicKey(pub [u8; KEY_LEN]);

impl PublicKey {
    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; KEY_LEN] = bytes.try_into().map_err(|_| {
            CryptoError::Encoding(format!("public key must be 32 bytes, got {}", bytes.len()))
        })?;
        Ok(PublicKey(arr))
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    pub fn fingerprint(&self) -> Digest {
        Digest::of(&self.0)
    }

    pub fn to_b64(&self) -> String {
        b64_encode(&self.0)
    }

    pub fn from_b64(text: &str) -> Result<Self, CryptoError> {
        Ok(PublicKey(b64_decode_fixed(text)?))
    }

    fn montgomery(&self) -> Result<MontgomeryPoint, CryptoError> {
        let vk = VerifyingKey::from_bytes(&self.0).map_err(|_| CryptoError::InvalidPublicKey)?;
        Ok(vk.to_montgomery())
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_b64())
    }
}

impl Serialize for PublicKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_b64())
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        PublicKey::from_b64(&s).map_err(serde::de::Error::custom)
    }
}

/// Ed25519 seed. Never printed by `Debug`.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey([u8; KEY_LEN]);

impl SecretKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        SecretKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.signing_key().verifying_key().to_bytes())
    }

    pub fn to_b64(&self) -> String {
        b64_encode(&self.0)
    }

    pub fn from_b64(text: &str) -> Result<Self, CryptoError> {
        Ok(SecretKey(b64_decode_fixed(text)?))
    }

    fn signing_key(&self) -> SigningKey {
        SigningKey::from_bytes(&self.0)
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyPair {
    pub public: PublicKey,
    pub secret: SecretKey,
}

impl KeyPair {
    pub fn generate() -> Self {
        let mut seed = [0u8; KEY_LEN];
        OsRng.fill_bytes(&mut seed);
        Self::from_secret(SecretKey(seed))
    }

    pub fn from_seed(seed: &[u8]) -> Result<Self, CryptoError> {
        let seed: [u8; KEY_LEN] = seed
            .try_into()
            .map_err(|_| CryptoError::BadSeedLength(seed.len()))?;
        Ok(Self::from_secret(SecretKey(seed)))
    }

    pub fn from_secret(secret: SecretKey) -> Self {
        KeyPair {
            public: secret.public_key(),
            secret,
        }
    }
}

/// Seeded generation is deterministic; `None` draws from the OS CSPRNG.
pub fn generate_keypair(seed: Option<&[u8]>) -> Result<KeyPair, CryptoError> {
    match seed {
        Some(seed) => KeyPair::from_seed(seed),
        None => Ok(KeyPair::generate()),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", b64_encode(&self.0))
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&b64_encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Signature(
            b64_decode_fixed(&s).map_err(serde::de::Error::custom)?,
        ))
    }
}

pub fn sign(secret: &SecretKey, message: &[u8]) -> Signature {
    Signature(secret.signing_key().sign(message).to_bytes())
}

/// Strict Ed25519 verification. Malformed keys verify as `false`.
pub fn verify(public: &PublicKey, message: &[u8], sig: &Signature) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(&public.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
    vk.verify_strict(message, &sig).is_ok()
}

// ---------------------------------------------------------------------------
// Sealed envelopes

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Envelope {
    pub ephemeral_public: [u8; 32],
    pub nonce: [u8; SYM_NONCE_LEN],
    /// Ciphertext with the 16-byte Poly1305 tag appended.
    pub ciphertext: Vec<u8>,
}

impl Envelope {
    /// `ephemeral_public ‖ nonce ‖ ciphertext`, the compact wire form.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + SYM_NONCE_LEN + self.ciphertext.len());
        out.extend_from_slice(&self.ephemeral_public);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.ciphertext);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < 32 + SYM_NONCE_LEN + 16 {
            return Err(CryptoError::Encoding("envelope too short".into()));
        }
        Ok(Envelope {
            ephemeral_public: bytes[..32].try_into().unwrap(),
            nonce: bytes[32..32 + SYM_NONCE_LEN].try_into().unwrap(),
            ciphertext: bytes[32 + SYM_NONCE_LEN..].to_vec(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct EnvelopeWire {
    ephemeral_public: String,
    nonce: String,
    ciphertext: String,
}

impl Serialize for Envelope {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        EnvelopeWire {
            ephemeral_public: b64_encode(&self.ephemeral_public),
            nonce: b64_encode(&self.nonce),
            ciphertext: b64_encode(&self.ciphertext),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Envelope {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let w = EnvelopeWire::deserialize(d)?;
        Ok(Envelope {
            ephemeral_public: b64_decode_fixed(&w.ephemeral_public).map_err(D::Error::custom)?,
            nonce: b64_decode_fixed(&w.nonce).map_err(D::Error::custom)?,
            ciphertext: b64_decode(&w.ciphertext).map_err(D::Error::custom)?,
        })
    }
}

fn seal_key(shared: &MontgomeryPoint, ephemeral: &[u8; 32], recipient: &MontgomeryPoint) -> Key {
    let d = Digest::of_parts(&[
        SEAL_KDF_LABEL,
        shared.as_bytes(),
        ephemeral,
        recipient.as_bytes(),
    ]);
    Key::from(d.0)
}

/// Encrypt `plaintext` so that only the holder of `recipient`'s secret key
/// can recover it. Randomized: sealing the same message twice differs.
pub fn seal(recipient: &PublicKey, plaintext: &[u8]) -> Result<Envelope, CryptoError> {
    let recipient_mont = recipient.montgomery()?;
    let mut eph_scalar = [0u8; 32];
    OsRng.fill_bytes(&mut eph_scalar);
    let ephemeral_public = MontgomeryPoint::mul_base_clamped(eph_scalar).to_bytes();
    let shared = recipient_mont.mul_clamped(eph_scalar);

    let mut nonce = [0u8; SYM_NONCE_LEN];
    OsRng.fill_bytes(&mut nonce);
    let cipher = ChaCha20Poly1305::new(&seal_key(&shared, &ephemeral_public, &recipient_mont));
    let ciphertext = cipher
        .encrypt(Nonce::from_slice(&nonce), plaintext)
        .map_err(|_| CryptoError::OpenFailed)?;
    Ok(Envelope {
        ephemeral_public,
        nonce,
        ciphertext,
    })
}

pub fn open(recipient: &SecretKey, env: &Envelope) -> Result<Vec<u8>, CryptoError> {
    let signing = recipient.signing_key();
    let recipient_mont = signing.verifying_key().to_montgomery();
    let shared = MontgomeryPoint(env.ephemeral_public).mul_clamped(signing.to_scalar_bytes());
    if shared.as_bytes() == &[0u8; 32] {
        return Err(CryptoError::OpenFailed);
    }
    let cipher = ChaCha20Poly1305::new(&seal_key(&shared, &env.ephemeral_public, &recipient_mont));
    cipher
        .decrypt(Nonce::from_slice(&env.nonce), env.ciphertext.as_slice())
        .map_err(|_| CryptoError::OpenFailed)
}

// ---------------------------------------------------------------------------
// Symmetric encryption

#[derive(Clone, PartialEq, Eq)]
pub struct SymKey(pub [u8; KEY_LEN]);

impl SymKey {
    pub fn generate() -> Self {
        let mut k = [0u8; KEY_LEN];
        OsRng.fill_bytes(&mut k);
        SymKey(k)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; KEY_LEN] = bytes.try_into().map_err(|_| {
            CryptoError::Encoding(format!("symmetric key must be 32 bytes, got {}", bytes.len()))
        })?;
        Ok(SymKey(arr))
    }
}

impl fmt::Debug for SymKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymKey(..)")
    }
}

pub fn sym_encrypt(key: &SymKey, nonce: &[u8; SYM_NONCE_LEN], plaintext: &[u8]) -> Vec<u8> {
    ChaCha20Poly1305::new(Key::from_slice(&key.0))
        .encrypt(Nonce::from_slice(nonce), plaintext)
        .expect("chacha20poly1305 encryption is infallible for in-memory buffers")
}

pub fn sym_decrypt(
    key: &SymKey,
    nonce: &[u8; SYM_NONCE_LEN],
    ciphertext: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    ChaCha20Poly1305::new(Key::from_slice(&key.0))
        .decrypt(Nonce::from_slice(nonce), ciphertext)
        .map_err(|_| CryptoError::AuthFailed)
}

pub fn random_bytes<const N: usize>() -> [u8; N] {
    let mut out = [0u8; N];
    OsRng.fill_bytes(&mut out);
    out
}
