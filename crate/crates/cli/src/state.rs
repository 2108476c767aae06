//! On-disk state directory.
//!
//! ```text
//! <root>/config              key=value settings
//! <root>/accounts/<id>.json  identity accounts
//! <root>/sessions.json       live session tokens
//! <root>/hosts/<host>/...    simulated host fragments and status
//! <root>/manifests/          file manifests, one per skylink
//! <root>/chain.log           length-prefixed block records
//! <root>/licenses/<id>.lic   canonical license record (+ .json rendering, .uses counter)
//! <root>/secrets/<tx>.secret sealed secret block envelope
//! <root>/catalog/<link>.json published content listing
//! <root>/keys/<id>.key       local wallet: account secret key
//! <root>/keys/<id>.session   local wallet: current session token
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use skyvault_core::crypto::{Envelope, SecretKey};
use skyvault_core::identity::{Account, IdentityService, IdentitySnapshot, SessionToken, Token};
use skyvault_core::ledger::Chain;
use skyvault_core::licensing::{License, LicenseId, UsageTracker};
use skyvault_core::storage::{SkyLink, StorageNetwork};

use crate::config::Config;
use crate::error::CliError;

pub const STATE_ENV: &str = "SKYVAULT_STATE";
pub const NOW_ENV: &str = "SKYVAULT_NOW";
pub const DEFAULT_STATE_DIR: &str = ".skyvault";

/// Wall-clock seconds, overridable through `SKYVAULT_NOW`.
pub fn now() -> u64 {
    if let Some(t) = std::env::var(NOW_ENV).ok().and_then(|v| v.parse().ok()) {
        return t;
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Account ids double as file names, so keep them to a portable alphabet.
pub fn check_id(id: &str) -> Result<(), CliError> {
    let ok = !id.is_empty()
        && id.len() <= 64
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-' | '@'));
    if ok {
        Ok(())
    } else {
        Err(CliError::new(
            "invalid_id",
            format!("account id {id:?} must be 1-64 chars of [A-Za-z0-9._@-] and not start with '.'"),
        ))
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn sorted_entries(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, CliError> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some(ext))
        .collect();
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub skylink: String,
    pub title: String,
    pub provider: String,
    pub published_at: u64,
}

#[derive(Debug)]
pub struct StateDirectory {
    root: PathBuf,
    pub config: Config,
    pub identity: Arc<IdentityService>,
    pub network: StorageNetwork,
    pub chain: Chain,
    pub licenses: BTreeMap<String, License>,
    pub usage: UsageTracker,
    pub catalog: BTreeMap<String, CatalogEntry>,
}

impl StateDirectory {
    /// Resolve the root from an explicit path, then `SKYVAULT_STATE`, then `./.skyvault`.
    pub fn resolve_root(explicit: Option<&Path>) -> PathBuf {
        if let Some(p) = explicit {
            return p.to_path_buf();
        }
        match std::env::var_os(STATE_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => PathBuf::from(DEFAULT_STATE_DIR),
        }
    }

    pub fn init(root: &Path, config: Config) -> Result<Self, CliError> {
        config.validate()?;
        if root.join("config").exists() {
            return Err(CliError::new(
                "already_initialised",
                format!("{} already holds a state directory", root.display()),
            ));
        }
        for d in ["accounts", "hosts", "manifests", "licenses", "secrets", "catalog", "keys"] {
            fs::create_dir_all(root.join(d))?;
        }
        let state = StateDirectory {
            root: root.to_path_buf(),
            config,
            identity: Arc::new(IdentityService::new(config.identity())),
            network: StorageNetwork::new(config.host_count, config.replication_factor)?,
            chain: Chain::new(config.pow_difficulty),
            licenses: BTreeMap::new(),
            usage: UsageTracker::default(),
            catalog: BTreeMap::new(),
        };
        state.save()?;
        write_atomic(&root.join("config"), config.to_text().as_bytes())?;
        Ok(state)
    }

    pub fn open(root: &Path) -> Result<Self, CliError> {
        let cfg_path = root.join("config");
        if !cfg_path.is_file() {
            return Err(CliError::new(
                "not_initialised",
                format!("no state directory at {}; run `skyvault init`", root.display()),
            ));
        }
        let config = Config::parse(&fs::read_to_string(cfg_path)?)?;

        let mut snapshot = IdentitySnapshot::default();
        for p in sorted_entries(&root.join("accounts"), "json")? {
            snapshot.accounts.push(serde_json::from_slice::<Account>(&fs::read(p)?)?);
        }
        let sessions = root.join("sessions.json");
        if sessions.is_file() {
            snapshot.sessions = serde_json::from_slice::<Vec<SessionToken>>(&fs::read(sessions)?)?;
        }
        let identity = Arc::new(IdentityService::restore(config.identity(), snapshot));

        let network = StorageNetwork::load(root, config.replication_factor)?;
        let chain = Chain::load(&root.join("chain.log"), config.pow_difficulty)?;

        let mut licenses = BTreeMap::new();
        let mut usage = UsageTracker::default();
        for p in sorted_entries(&root.join("licenses"), "lic")? {
            let lic = License::from_bytes(&fs::read(&p)?)?;
            let uses_path = p.with_extension("uses");
            if uses_path.is_file() {
                let n = fs::read_to_string(&uses_path)?
                    .trim()
                    .parse()
                    .map_err(|_| CliError::new("corrupt_record", format!("bad use counter in {}", uses_path.display())))?;
                usage.set_uses(&lic.license_id, n);
            }
            licenses.insert(lic.license_id.to_hex(), lic);
        }

        let mut catalog = BTreeMap::new();
        for p in sorted_entries(&root.join("catalog"), "json")? {
            let e: CatalogEntry = serde_json::from_slice(&fs::read(p)?)?;
            catalog.insert(e.skylink.clone(), e);
        }

        Ok(StateDirectory {
            root: root.to_path_buf(),
            config,
            identity,
            network,
            chain,
            licenses,
            usage,
            catalog,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn save(&self) -> Result<(), CliError> {
        persist_identity(&self.root, &self.identity)?;
        self.network.save(&self.root)?;
        write_atomic(&self.root.join("chain.log"), &self.chain.to_bytes())?;

        let lic_dir = self.root.join("licenses");
        fs::create_dir_all(&lic_dir)?;
        for (hex, lic) in &self.licenses {
            let base = lic_dir.join(hex);
            let bin = base.with_extension("lic");
            if !bin.exists() {
                write_atomic(&bin, &lic.to_bytes())?;
                write_atomic(&base.with_extension("json"), &serde_json::to_vec_pretty(lic)?)?;
            }
            let uses = self.usage.uses(&lic.license_id);
            write_atomic(&base.with_extension("uses"), format!("{uses}\n").as_bytes())?;
        }

        let cat_dir = self.root.join("catalog");
        fs::create_dir_all(&cat_dir)?;
        for e in self.catalog.values() {
            let link: SkyLink = e.skylink.parse()?;
            write_atomic(
                &cat_dir.join(format!("{}.json", link.digest().to_hex())),
                &serde_json::to_vec_pretty(e)?,
            )?;
        }
        Ok(())
    }

    // -- local wallet -------------------------------------------------------

    fn key_path(&self, id: &str, ext: &str) -> Result<PathBuf, CliError> {
        check_id(id)?;
        Ok(self.root.join("keys").join(format!("{id}.{ext}")))
    }

    pub fn store_secret_key(&self, id: &str, key: &SecretKey) -> Result<(), CliError> {
        let path = self.key_path(id, "key")?;
        fs::create_dir_all(path.parent().unwrap())?;
        write_atomic(&path, format!("{}\n", key.to_b64()).as_bytes())?;
        restrict_permissions(&path)
    }

    pub fn secret_key(&self, id: &str) -> Result<SecretKey, CliError> {
        let path = self.key_path(id, "key")?;
        let text = fs::read_to_string(&path)
            .map_err(|_| CliError::new("no_wallet_key", format!("no local key for account {id:?}")))?;
        Ok(SecretKey::from_b64(text.trim())?)
    }

    pub fn store_session(&self, id: &str, token: &Token) -> Result<(), CliError> {
        let path = self.key_path(id, "session")?;
        write_atomic(&path, format!("{}\n", token.to_b64()).as_bytes())?;
        restrict_permissions(&path)
    }

    pub fn session(&self, id: &str) -> Result<Option<Token>, CliError> {
        let path = self.key_path(id, "session")?;
        match fs::read_to_string(&path) {
            Ok(text) => Ok(Some(Token::from_b64(text.trim())?)),
            Err(_) => Ok(None),
        }
    }

    // -- secret blocks ------------------------------------------------------

    pub fn secret_path(&self, tx_hex: &str) -> PathBuf {
        self.root.join("secrets").join(format!("{tx_hex}.secret"))
    }

    pub fn store_secret_block(&self, tx_hex: &str, env: &Envelope) -> Result<(), CliError> {
        fs::create_dir_all(self.root.join("secrets"))?;
        write_atomic(&self.secret_path(tx_hex), &env.to_bytes())
    }

    pub fn secret_block(&self, tx_hex: &str) -> Result<Envelope, CliError> {
        let bytes = fs::read(self.secret_path(tx_hex))
            .map_err(|_| CliError::new("unknown_transaction", format!("no secret block for {tx_hex}")))?;
        Ok(Envelope::from_bytes(&bytes)?)
    }

    pub fn license(&self, id: &str) -> Result<&License, CliError> {
        let id = LicenseId::from_hex(id)?.to_hex();
        self.licenses
            .get(&id)
            .ok_or_else(|| CliError::new("unknown_license", format!("no license {id}")))
    }
}

/// Write accounts and sessions. Account files are immutable once written.
pub fn persist_identity(root: &Path, identity: &IdentityService) -> Result<(), CliError> {
    let snap = identity.snapshot();
    let acc_dir = root.join("accounts");
    fs::create_dir_all(&acc_dir)?;
    for a in &snap.accounts {
        check_id(&a.id)?;
        let path = acc_dir.join(format!("{}.json", a.id));
        if !path.exists() {
            write_atomic(&path, &serde_json::to_vec_pretty(a)?)?;
        }
    }
    write_atomic(&root.join("sessions.json"), &serde_json::to_vec_pretty(&snap.sessions)?)
}

#[cfg(unix)]
fn restrict_permissions(path: &Path) -> Result<(), CliError> {
    use std::os::unix::fs::PermissionsExt;
    fs::set_permissions(path, fs::Permissions::from_mode(0o600))?;
    Ok(())
}

#[cfg(not(unix))]
fn restrict_permissions(_: &Path) -> Result<(), CliError> {
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_alphabet() {
        for ok in ["alice", "bob.smith", "a_b-c@d", "X1"] {
            check_id(ok).unwrap();
        }
        for bad in ["", ".hidden", "a/b", "..", "sp ace", "é"] {
            assert!(check_id(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn init_then_open_twice_fails_once() {
        let dir = tempfile::tempdir().unwrap();
        StateDirectory::init(dir.path(), Config::default()).unwrap();
        let e = StateDirectory::init(dir.path(), Config::default()).unwrap_err();
        assert_eq!(e.code, "already_initialised");
        let s = StateDirectory::open(dir.path()).unwrap();
        assert_eq!(s.network.hosts().len(), 5);
        assert_eq!(s.chain.height(), 0);
    }

    #[test]
    fn open_missing_dir() {
        let dir = tempfile::tempdir().unwrap();
        let e = StateDirectory::open(&dir.path().join("nope")).unwrap_err();
        assert_eq!(e.code, "not_initialised");
    }
}
