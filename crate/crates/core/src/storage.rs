//! Simulated decentralized storage: files are chunked, each chunk is
//! encrypted under a per-file key, and ciphertexts are replicated across
//! hosts. A [`SkyLink`] addresses the immutable upload.
//!
//! Hosts only ever hold ciphertext, keyed by the ciphertext digest. Download
//! verifies every fetched fragment against the manifest and fails over to the
//! next replica on a bad or missing copy.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Mutex, RwLock};

use rayon::prelude::*;
use thiserror::Error;

use crate::codec::{CodecError, Reader, Writer};
use crate::crypto::{
    b64_decode, b64_encode, open, seal, sym_decrypt, sym_encrypt, Digest, Envelope,
    KeyPair, SecretKey, SymKey, SYM_NONCE_LEN,
};

pub const DEFAULT_CHUNK_SIZE: usize = 262_144;
pub const DEFAULT_REPLICATION: usize = 3;
pub const SKYLINK_PREFIX: &str = "sia://";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StorageError {
    #[error("chunk size must be at least 1")]
    BadChunkSize,
    #[error("cannot upload an empty file")]
    EmptyFile,
    #[error("replication factor {needed} needs that many live hosts, {live} available")]
    InsufficientHosts { needed: usize, live: usize },
    #[error("replication factor must be at least 1")]
    BadReplication,
    #[error("unknown skylink {0}")]
    UnknownSkylink(String),
    #[error("invalid skylink {0:?}")]
    InvalidSkylink(String),
    #[error("integrity failure on chunk {chunk} from host {host}")]
    IntegrityFailure { chunk: u64, host: String },
    #[error("reassembled file does not match the manifest digest")]
    ManifestMismatch,
    #[error("all replicas of chunk {chunk} are unavailable")]
    AllReplicasDown { chunk: u64 },
    #[error("requester cannot open the file key")]
    KeyAccessDenied,
    #[error("unknown host {0}")]
    UnknownHost(String),
    #[error("corrupt manifest: {0}")]
    Codec(#[from] CodecError),
    #[error("io: {0}")]
    Io(String),
}

impl From<io::Error> for StorageError {
    fn from(e: io::Error) -> Self {
        StorageError::Io(e.to_string())
    }
}

/// Split `data` into `chunk_size` pieces; the last may be short.
pub fn chunk_file(data: &[u8], chunk_size: usize) -> Result<Vec<&[u8]>, StorageError> {
    if chunk_size == 0 {
        return Err(StorageError::BadChunkSize);
    }
    Ok(data.chunks(chunk_size).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub index: u64,
    pub plaintext_digest: Digest,
    pub ciphertext: Vec<u8>,
    pub ciphertext_digest: Digest,
}

fn chunk_nonce(index: u64) -> [u8; SYM_NONCE_LEN] {
    let mut n = [0u8; SYM_NONCE_LEN];
    n[4..].copy_from_slice(&index.to_be_bytes());
    n
}

/// Deterministic per-(uploader, content) key: `H(uploader_secret ‖ file_digest)`.
pub fn derive_file_key(uploader: &SecretKey, file_digest: &Digest) -> SymKey {
    SymKey(Digest::of_parts(&[uploader.as_bytes(), file_digest.as_bytes()]).0)
}

pub fn encrypt_chunks(
    data: &[u8],
    key: &SymKey,
    chunk_size: usize,
) -> Result<Vec<Chunk>, StorageError> {
    let pieces = chunk_file(data, chunk_size)?;
    Ok(pieces
        .par_iter()
        .enumerate()
        .map(|(i, piece)| {
            let index = i as u64;
            let ciphertext = sym_encrypt(key, &chunk_nonce(index), piece);
            Chunk {
                index,
                plaintext_digest: Digest::of(piece),
                ciphertext_digest: Digest::of(&ciphertext),
                ciphertext,
            }
        })
        .collect())
}

pub fn decrypt_chunk(key: &SymKey, index: u64, ciphertext: &[u8]) -> Result<Vec<u8>, StorageError> {
    sym_decrypt(key, &chunk_nonce(index), ciphertext).map_err(|_| StorageError::KeyAccessDenied)
}

// ---------------------------------------------------------------------------
// Manifest and skylink

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkRecord {
    pub index: u64,
    pub ciphertext_digest: Digest,
    pub host_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileManifest {
    pub file_digest: Digest,
    pub file_size: u64,
    pub chunk_size: u64,
    pub chunk_records: Vec<ChunkRecord>,
    /// File key sealed to the uploader.
    pub encrypted_file_key: Envelope,
}

fn write_address(w: &mut Writer, file_digest: &Digest, file_size: u64, chunk_size: u64, chunks: &[(u64, Digest)]) {
    w.digest(file_digest).u64(file_size).u64(chunk_size);
    w.u32(chunks.len() as u32);
    for (index, d) in chunks {
        w.u64(*index).digest(d);
    }
}

impl FileManifest {
    /// The content-determined part of the manifest. Host placement and the
    /// sealed key are excluded because both vary between identical uploads.
    pub fn address_bytes(&self) -> Vec<u8> {
        let chunks: Vec<_> = self
            .chunk_records
            .iter()
            .map(|r| (r.index, r.ciphertext_digest))
            .collect();
        let mut w = Writer::new();
        write_address(&mut w, &self.file_digest, self.file_size, self.chunk_size, &chunks);
        w.finish()
    }

    pub fn skylink(&self) -> SkyLink {
        SkyLink(Digest::of(&self.address_bytes()))
    }

    /// Full canonical record: address fields, then placement, then key.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.digest(&self.file_digest)
            .u64(self.file_size)
            .u64(self.chunk_size)
            .u32(self.chunk_records.len() as u32);
        for r in &self.chunk_records {
            w.u64(r.index).digest(&r.ciphertext_digest);
            w.u32(r.host_ids.len() as u32);
            for h in &r.host_ids {
                w.str(h);
            }
        }
        w.envelope(&self.encrypted_file_key);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let file_digest = r.digest()?;
        let file_size = r.u64()?;
        let chunk_size = r.u64()?;
        let n = r.u32()?;
        let mut chunk_records = Vec::new();
        for expected in 0..n as u64 {
            let index = r.u64()?;
            if index != expected {
                return Err(CodecError::InvalidValue("chunk index"));
            }
            let ciphertext_digest = r.digest()?;
            let hosts = r.u32()?;
            if hosts == 0 {
                return Err(CodecError::InvalidValue("chunk host list"));
            }
            let host_ids = (0..hosts).map(|_| r.string()).collect::<Result<_, _>>()?;
            chunk_records.push(ChunkRecord {
                index,
                ciphertext_digest,
                host_ids,
            });
        }
        let encrypted_file_key = r.envelope()?;
        r.finish()?;
        Ok(FileManifest {
            file_digest,
            file_size,
            chunk_size,
            chunk_records,
            encrypted_file_key,
        })
    }
}

/// `sia://` followed by the unpadded base64url manifest address digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SkyLink(pub Digest);

impl SkyLink {
    pub fn digest(&self) -> Digest {
        self.0
    }
}

impl fmt::Display for SkyLink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{SKYLINK_PREFIX}{}", b64_encode(self.0.as_bytes()))
    }
}

impl fmt::Debug for SkyLink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SkyLink({self})")
    }
}

impl FromStr for SkyLink {
    type Err = StorageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || StorageError::InvalidSkylink(s.to_owned());
        let body = s.strip_prefix(SKYLINK_PREFIX).ok_or_else(bad)?;
        let bytes = b64_decode(body).map_err(|_| bad())?;
        let arr: [u8; 32] = bytes.try_into().map_err(|_| bad())?;
        Ok(SkyLink(Digest(arr)))
    }
}

/// True iff `data` uploaded by `uploader` with `chunk_size` yields `skylink`.
pub fn verify_skylink(skylink: &SkyLink, data: &[u8], uploader: &KeyPair, chunk_size: usize) -> bool {
    match compute_skylink(data, uploader, chunk_size) {
        Ok(link) => link == *skylink,
        Err(_) => false,
    }
}

pub fn compute_skylink(
    data: &[u8],
    uploader: &KeyPair,
    chunk_size: usize,
) -> Result<SkyLink, StorageError> {
    let file_digest = Digest::of(data);
    let key = derive_file_key(&uploader.secret, &file_digest);
    let chunks: Vec<_> = encrypt_chunks(data, &key, chunk_size)?
        .into_iter()
        .map(|c| (c.index, c.ciphertext_digest))
        .collect();
    let mut w = Writer::new();
    write_address(&mut w, &file_digest, data.len() as u64, chunk_size as u64, &chunks);
    Ok(SkyLink(Digest::of(&w.finish())))
}

// ---------------------------------------------------------------------------
// Hosts

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum HostError {
    #[error("host is down")]
    Down,
    #[error("fragment not held")]
    Missing,
}

#[derive(Debug)]
pub struct Host {
    id: String,
    fragments: Mutex<HashMap<Digest, Vec<u8>>>,
    alive: AtomicBool,
}

impl Host {
    pub fn new(id: impl Into<String>) -> Self {
        Host {
            id: id.into(),
            fragments: Mutex::new(HashMap::new()),
            alive: AtomicBool::new(true),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn is_alive(&self) -> bool {
        self.alive.load(Ordering::SeqCst)
    }

    pub fn fetch(&self, key: &Digest) -> Result<Vec<u8>, HostError> {
        if !self.is_alive() {
            return Err(HostError::Down);
        }
        self.fragments
            .lock()
            .unwrap()
            .get(key)
            .cloned()
            .ok_or(HostError::Missing)
    }

    pub fn store(&self, key: Digest, fragment: Vec<u8>) -> Result<(), HostError> {
        if !self.is_alive() {
            return Err(HostError::Down);
        }
        self.fragments.lock().unwrap().insert(key, fragment);
        Ok(())
    }

    pub fn fragment_count(&self) -> usize {
        self.fragments.lock().unwrap().len()
    }

    /// Copy of every stored fragment, sorted by key.
    pub fn fragments(&self) -> Vec<(Digest, Vec<u8>)> {
        let mut v: Vec<_> = self
            .fragments
            .lock()
            .unwrap()
            .iter()
            .map(|(k, v)| (*k, v.clone()))
            .collect();
        v.sort_by_key(|e| e.0);
        v
    }

    /// Failure injection: flip one byte of a stored fragment in place.
    /// Returns false if the fragment is not held.
    pub fn corrupt_fragment(&self, key: &Digest, byte: usize) -> bool {
        let mut frags = self.fragments.lock().unwrap();
        match frags.get_mut(key) {
            Some(f) if !f.is_empty() => {
                let i = byte % f.len();
                f[i] ^= 0xff;
                true
            }
            _ => false,
        }
    }
}

// ---------------------------------------------------------------------------
// Network

#[derive(Debug)]
pub struct StorageNetwork {
    hosts: Vec<Host>,
    replication_factor: usize,
    manifests: RwLock<BTreeMap<Digest, FileManifest>>,
}

impl StorageNetwork {
    /// `host_count` hosts named `host-0` .. `host-{n-1}`.
    pub fn new(host_count: usize, replication_factor: usize) -> Result<Self, StorageError> {
        Self::with_hosts(
            (0..host_count).map(|i| Host::new(format!("host-{i}"))).collect(),
            replication_factor,
        )
    }

    pub fn with_hosts(hosts: Vec<Host>, replication_factor: usize) -> Result<Self, StorageError> {
        if replication_factor == 0 {
            return Err(StorageError::BadReplication);
        }
        Ok(StorageNetwork {
            hosts,
            replication_factor,
            manifests: RwLock::new(BTreeMap::new()),
        })
    }

    pub fn replication_factor(&self) -> usize {
        self.replication_factor
    }

    pub fn hosts(&self) -> &[Host] {
        &self.hosts
    }

    pub fn host(&self, id: &str) -> Result<&Host, StorageError> {
        self.hosts
            .iter()
            .find(|h| h.id == id)
            .ok_or_else(|| StorageError::UnknownHost(id.to_owned()))
    }

    pub fn fail_host(&self, id: &str) -> Result<(), StorageError> {
        self.host(id)?.alive.store(false, Ordering::SeqCst);
        Ok(())
    }

    pub fn revive_host(&self, id: &str) -> Result<(), StorageError> {
        self.host(id)?.alive.store(true, Ordering::SeqCst);
        Ok(())
    }

    pub fn manifest(&self, link: &SkyLink) -> Result<FileManifest, StorageError> {
        self.manifests
            .read()
            .unwrap()
            .get(&link.0)
            .cloned()
            .ok_or_else(|| StorageError::UnknownSkylink(link.to_string()))
    }

    pub fn skylinks(&self) -> Vec<SkyLink> {
        self.manifests.read().unwrap().keys().map(|d| SkyLink(*d)).collect()
    }

    pub fn upload(
        &self,
        data: &[u8],
        uploader: &KeyPair,
        chunk_size: usize,
    ) -> Result<(SkyLink, FileManifest), StorageError> {
        if chunk_size == 0 {
            return Err(StorageError::BadChunkSize);
        }
        if data.is_empty() {
            return Err(StorageError::EmptyFile);
        }
        let live: Vec<&Host> = self.hosts.iter().filter(|h| h.is_alive()).collect();
        let r = self.replication_factor;
        if live.len() < r {
            return Err(StorageError::InsufficientHosts {
                needed: r,
                live: live.len(),
            });
        }

        let file_digest = Digest::of(data);
        let key = derive_file_key(&uploader.secret, &file_digest);
        let chunks = encrypt_chunks(data, &key, chunk_size)?;

        let mut chunk_records = Vec::with_capacity(chunks.len());
        for chunk in chunks {
            let start = chunk.index as usize % live.len();
            let targets: Vec<&Host> = (0..r).map(|j| live[(start + j) % live.len()]).collect();
            for host in &targets {
                host.store(chunk.ciphertext_digest, chunk.ciphertext.clone())
                    .map_err(|_| StorageError::InsufficientHosts {
                        needed: r,
                        live: live.len() - 1,
                    })?;
            }
            chunk_records.push(ChunkRecord {
                index: chunk.index,
                ciphertext_digest: chunk.ciphertext_digest,
                host_ids: targets.iter().map(|h| h.id.clone()).collect(),
            });
        }

        let encrypted_file_key = seal(&uploader.public, key.as_bytes())
            .map_err(|_| StorageError::KeyAccessDenied)?;
        let manifest = FileManifest {
            file_digest,
            file_size: data.len() as u64,
            chunk_size: chunk_size as u64,
            chunk_records,
            encrypted_file_key,
        };
        let link = manifest.skylink();
        self.manifests
            .write()
            .unwrap()
            .insert(link.0, manifest.clone());
        Ok((link, manifest))
    }

    /// Open the file key from the manifest envelope, then download.
    pub fn download(&self, link: &SkyLink, requester: &SecretKey) -> Result<Vec<u8>, StorageError> {
        let key = self.file_key(link, requester)?;
        self.download_with_key(link, &key)
    }

    pub fn file_key(&self, link: &SkyLink, requester: &SecretKey) -> Result<SymKey, StorageError> {
        let manifest = self.manifest(link)?;
        let raw = open(requester, &manifest.encrypted_file_key)
            .map_err(|_| StorageError::KeyAccessDenied)?;
        SymKey::from_slice(&raw).map_err(|_| StorageError::KeyAccessDenied)
    }

    /// Download with a file key obtained out of band, e.g. from a license.
    pub fn download_with_key(&self, link: &SkyLink, key: &SymKey) -> Result<Vec<u8>, StorageError> {
        let manifest = self.manifest(link)?;
        let pieces: Vec<Result<Vec<u8>, StorageError>> = manifest
            .chunk_records
            .par_iter()
            .map(|rec| self.fetch_chunk(rec, key))
            .collect();
        let mut out = Vec::with_capacity(manifest.file_size as usize);
        for piece in pieces {
            out.extend_from_slice(&piece?);
        }
        if out.len() as u64 != manifest.file_size || Digest::of(&out) != manifest.file_digest {
            return Err(StorageError::ManifestMismatch);
        }
        Ok(out)
    }

    fn fetch_chunk(&self, rec: &ChunkRecord, key: &SymKey) -> Result<Vec<u8>, StorageError> {
        let mut integrity = None;
        for host_id in &rec.host_ids {
            let Ok(host) = self.host(host_id) else {
                continue;
            };
            let Ok(ciphertext) = host.fetch(&rec.ciphertext_digest) else {
                continue;
            };
            if Digest::of(&ciphertext) != rec.ciphertext_digest {
                integrity.get_or_insert(StorageError::IntegrityFailure {
                    chunk: rec.index,
                    host: host_id.clone(),
                });
                continue;
            }
            return decrypt_chunk(key, rec.index, &ciphertext);
        }
        Err(integrity.unwrap_or(StorageError::AllReplicasDown { chunk: rec.index }))
    }

    // -- persistence --------------------------------------------------------

    /// Writes `hosts/<host_id>/{status,<hex digest>}` and
    /// `manifests/<hex skylink digest>.manifest` under `root`.
    pub fn save(&self, root: &Path) -> Result<(), StorageError> {
        let hosts_dir = root.join("hosts");
        for host in &self.hosts {
            let dir = hosts_dir.join(&host.id);
            fs::create_dir_all(&dir)?;
            fs::write(
                dir.join("status"),
                if host.is_alive() { "alive\n" } else { "dead\n" },
            )?;
            for (key, frag) in host.fragments() {
                let path = dir.join(key.to_hex());
                if !path.exists() {
                    fs::write(path, frag)?;
                }
            }
        }
        let man_dir = root.join("manifests");
        fs::create_dir_all(&man_dir)?;
        for (d, m) in self.manifests.read().unwrap().iter() {
            let path = man_dir.join(format!("{}.manifest", d.to_hex()));
            if !path.exists() {
                fs::write(path, m.to_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(root: &Path, replication_factor: usize) -> Result<Self, StorageError> {
        let mut hosts = Vec::new();
        let hosts_dir = root.join("hosts");
        if hosts_dir.is_dir() {
            let mut names: Vec<String> = fs::read_dir(&hosts_dir)?
                .filter_map(|e| e.ok())
                .filter(|e| e.path().is_dir())
                .filter_map(|e| e.file_name().into_string().ok())
                .collect();
            names.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
            for name in names {
                let dir = hosts_dir.join(&name);
                let host = Host::new(name);
                let status = fs::read_to_string(dir.join("status")).unwrap_or_default();
                host.alive.store(status.trim() != "dead", Ordering::SeqCst);
                let mut frags = host.fragments.lock().unwrap();
                for entry in fs::read_dir(&dir)? {
                    let entry = entry?;
                    let fname = entry.file_name();
                    let Some(fname) = fname.to_str() else { continue };
                    if let Ok(d) = Digest::from_hex(fname) {
                        frags.insert(d, fs::read(entry.path())?);
                    }
                }
                drop(frags);
                hosts.push(host);
            }
        }
        let net = Self::with_hosts(hosts, replication_factor)?;
        let man_dir = root.join("manifests");
        if man_dir.is_dir() {
            let mut map = net.manifests.write().unwrap();
            for entry in fs::read_dir(&man_dir)? {
                let path = entry?.path();
                if path.extension().and_then(|e| e.to_str()) != Some("manifest") {
                    continue;
                }
                let m = FileManifest::from_bytes(&fs::read(&path)?)?;
                map.insert(m.skylink().0, m);
            }
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uploader() -> KeyPair {
        KeyPair::from_seed(&[11u8; 32]).unwrap()
    }

    #[test]
    fn chunking_arithmetic() {
        let lens: Vec<_> = chunk_file(&[0u8; 10], 4).unwrap().iter().map(|c| c.len()).collect();
        assert_eq!(lens, [4, 4, 2]);
        assert!(chunk_file(&[], 4).unwrap().is_empty());
        assert_eq!(chunk_file(b"x", 0), Err(StorageError::BadChunkSize));
    }

    #[test]
    fn upload_places_on_distinct_hosts() {
        let net = StorageNetwork::new(3, 3).unwrap();
        let (_, m) = net.upload(&[5u8; 100], &uploader(), 16).unwrap();
        assert_eq!(m.chunk_records.len(), 7);
        for rec in &m.chunk_records {
            let mut ids = rec.host_ids.clone();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), 3);
        }
        let total: u64 = chunk_file(&[5u8; 100], 16).unwrap().iter().map(|c| c.len() as u64).sum();
        assert_eq!(total, m.file_size);
    }

    #[test]
    fn upload_errors() {
        let net = StorageNetwork::new(2, 3).unwrap();
        assert_eq!(
            net.upload(b"abc", &uploader(), 4).unwrap_err(),
            StorageError::InsufficientHosts { needed: 3, live: 2 }
        );
        let net = StorageNetwork::new(3, 3).unwrap();
        assert_eq!(net.upload(b"", &uploader(), 4).unwrap_err(), StorageError::EmptyFile);
        assert!(StorageNetwork::new(3, 0).is_err());
    }

    #[test]
    fn skylink_text_round_trip() {
        let net = StorageNetwork::new(3, 3).unwrap();
        let (link, _) = net.upload(b"hello world", &uploader(), 4).unwrap();
        let text = link.to_string();
        assert!(text.starts_with("sia://"));
        assert_eq!(text.len(), 6 + 43);
        assert_eq!(text.parse::<SkyLink>().unwrap(), link);
        assert!("http://abc".parse::<SkyLink>().is_err());
        assert!("sia://abc".parse::<SkyLink>().is_err());
    }

    #[test]
    fn same_upload_twice_is_deterministic() {
        let a = StorageNetwork::new(3, 3).unwrap();
        let b = StorageNetwork::new(4, 2).unwrap();
        let data = b"identical bytes, identical uploader";
        let (la, _) = a.upload(data, &uploader(), 8).unwrap();
        let (lb, _) = b.upload(data, &uploader(), 8).unwrap();
        assert_eq!(la, lb);
        let other = KeyPair::from_seed(&[12u8; 32]).unwrap();
        let (lc, _) = b.upload(data, &other, 8).unwrap();
        assert_ne!(la, lc);
    }

    #[test]
    fn verify_skylink_cases() {
        let net = StorageNetwork::new(3, 3).unwrap();
        let data = b"0123456789abcdef".repeat(8);
        let (link, _) = net.upload(&data, &uploader(), 32).unwrap();
        assert!(verify_skylink(&link, &data, &uploader(), 32));
        let mut edited = data.clone();
        edited[3] ^= 1;
        assert!(!verify_skylink(&link, &edited, &uploader(), 32));
        assert!(!verify_skylink(&link, &data, &uploader(), 16));
    }

    #[test]
    fn host_failure_toggles() {
        let net = StorageNetwork::new(3, 3).unwrap();
        let (_, m) = net.upload(b"payload", &uploader(), 4).unwrap();
        let d = m.chunk_records[0].ciphertext_digest;
        net.fail_host("host-0").unwrap();
        assert_eq!(net.host("host-0").unwrap().fetch(&d), Err(HostError::Down));
        net.revive_host("host-0").unwrap();
        assert!(net.host("host-0").unwrap().fetch(&d).is_ok());
        assert_eq!(
            net.fail_host("host-9").unwrap_err(),
            StorageError::UnknownHost("host-9".into())
        );
    }

    #[test]
    fn download_failure_modes() {
        let net = StorageNetwork::new(3, 3).unwrap();
        let up = uploader();
        let data = vec![42u8; 40];
        let (link, m) = net.upload(&data, &up, 16).unwrap();
        assert_eq!(net.download(&link, &up.secret).unwrap(), data);

        let stranger = KeyPair::generate();
        assert_eq!(
            net.download(&link, &stranger.secret).unwrap_err(),
            StorageError::KeyAccessDenied
        );

        let unknown = SkyLink(Digest::of(b"nothing"));
        assert!(matches!(
            net.download(&unknown, &up.secret),
            Err(StorageError::UnknownSkylink(_))
        ));

        for h in ["host-0", "host-1", "host-2"] {
            net.fail_host(h).unwrap();
        }
        assert_eq!(
            net.download(&link, &up.secret).unwrap_err(),
            StorageError::AllReplicasDown { chunk: 0 }
        );
        for h in ["host-0", "host-1", "host-2"] {
            net.revive_host(h).unwrap();
        }

        let rec = &m.chunk_records[1];
        for h in &rec.host_ids {
            assert!(net.host(h).unwrap().corrupt_fragment(&rec.ciphertext_digest, 3));
        }
        assert_eq!(
            net.download(&link, &up.secret).unwrap_err(),
            StorageError::IntegrityFailure {
                chunk: 1,
                host: rec.host_ids[0].clone()
            }
        );
    }

    #[test]
    fn manifest_codec_round_trip() {
        let net = StorageNetwork::new(4, 2).unwrap();
        let (link, m) = net.upload(&[1u8; 33], &uploader(), 8).unwrap();
        let back = FileManifest::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.skylink(), link);
    }
}
