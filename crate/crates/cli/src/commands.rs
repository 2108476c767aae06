use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use skyvault_core::crypto::{b64_encode, Digest, KeyPair, SymKey};
use skyvault_core::hls::{
    self, hls_key_from_content_key, license_key_uri, HlsPackage, PackageOptions, LICENSE_KEY_URI_PREFIX,
};
use skyvault_core::identity::respond;
use skyvault_core::ledger::{verify_serialized, ChainVerdict};
use skyvault_core::licensing::{
    execute_purchase, redeem_license, Action, KeyRules, LicenseError, Provider, PurchaseRequest, Rights,
    SecretBlock,
};
use skyvault_core::storage::SkyLink;

use crate::config::Config;
use crate::error::CliError;
use crate::server::{self, AppState};
use crate::state::{check_id, now, StateDirectory};

pub const DEFAULT_LICENSE_SECONDS: u64 = 30 * 24 * 3600;

#[derive(Debug, Parser)]
#[command(name = "skyvault", version, about = "Decentralized storage with ledger-backed DRM licensing")]
pub struct Cli {
    /// State directory (default: $SKYVAULT_STATE, then ./.skyvault)
    #[arg(long, global = true, value_name = "DIR")]
    pub state: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a state directory with its simulated hosts
    Init(InitArgs),
    /// Create an account and store its key pair in the local wallet
    Register {
        id: String,
        #[arg(long, env = "SKYVAULT_PASSWORD", hide_env_values = true)]
        password: String,
    },
    /// Run the challenge-response login and keep the session token
    Login {
        id: String,
        #[arg(long, env = "SKYVAULT_PASSWORD", hide_env_values = true)]
        password: String,
    },
    /// Encrypt, chunk and replicate a file; prints its skylink
    Upload {
        file: PathBuf,
        #[arg(long = "as", value_name = "ID")]
        owner: String,
    },
    /// Fetch a file you uploaded and write it to OUT
    Download {
        skylink: String,
        out: PathBuf,
        #[arg(long = "as", value_name = "ID")]
        owner: String,
    },
    /// List uploaded content for sale
    Publish {
        skylink: String,
        #[arg(long)]
        title: String,
        #[arg(long = "as", value_name = "ID")]
        provider: String,
    },
    /// Purchase a license for published content and mine the transaction
    Buy(BuyArgs),
    /// Show a purchase's secret block and check it against the chain
    Confirm {
        tx_id: String,
        #[arg(long = "as", value_name = "ID")]
        consumer: String,
    },
    /// Redeem a license and write the decrypted content to OUT
    Play {
        license: String,
        out: PathBuf,
        #[arg(long = "as", value_name = "ID")]
        consumer: String,
        #[arg(long, default_value = "stream")]
        action: Action,
        /// Also print the redeemed content key
        #[arg(long)]
        debug_key: bool,
    },
    /// Package a media file as encrypted HLS
    HlsPackage(HlsPackageArgs),
    /// Decrypt an HLS package directory back to the original bytes
    HlsUnpackage {
        dir: PathBuf,
        out: PathBuf,
        #[arg(long = "as", value_name = "ID")]
        consumer: Option<String>,
        /// 16-byte AES key in hex, for packages not bound to a license
        #[arg(long)]
        key_hex: Option<String>,
    },
    /// Check every block of the ledger
    VerifyChain,
    /// Inspect or inject failures into simulated hosts
    Host {
        #[command(subcommand)]
        action: HostAction,
    },
    /// Run the identity service over HTTP
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub replication_factor: Option<usize>,
    #[arg(long)]
    pub chunk_size: Option<usize>,
    #[arg(long)]
    pub pow_difficulty: Option<u32>,
    #[arg(long)]
    pub challenge_ttl: Option<u64>,
    #[arg(long)]
    pub session_ttl: Option<u64>,
    #[arg(long)]
    pub host_count: Option<usize>,
    #[arg(long)]
    pub segment_bytes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BuyArgs {
    pub skylink: String,
    #[arg(long = "as", value_name = "ID")]
    pub consumer: String,
    /// Comma-separated subset of stream, download, re-license
    #[arg(long, value_delimiter = ',', default_values_t = [Action::Stream, Action::Download])]
    pub rights: Vec<Action>,
    #[arg(long)]
    pub not_before: Option<u64>,
    #[arg(long)]
    pub not_after: Option<u64>,
    #[arg(long)]
    pub max_uses: Option<u32>,
    #[arg(long)]
    pub offline: bool,
}

#[derive(Debug, Args)]
pub struct HlsPackageArgs {
    pub input: PathBuf,
    pub outdir: PathBuf,
    /// Derive the key from this license's content key
    #[arg(long, conflicts_with = "key_hex")]
    pub license: Option<String>,
    #[arg(long = "as", value_name = "ID", requires = "license")]
    pub consumer: Option<String>,
    /// Caller-supplied 16-byte key in hex
    #[arg(long, requires = "key_uri")]
    pub key_hex: Option<String>,
    #[arg(long)]
    pub key_uri: Option<String>,
    #[arg(long)]
    pub segment_bytes: Option<usize>,
    #[arg(long, default_value_t = hls::DEFAULT_SEGMENT_DURATION)]
    pub segment_duration: f64,
}

#[derive(Debug, Subcommand)]
pub enum HostAction {
    List,
    Fail { id: String },
    Revive { id: String },
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))
}

fn parse_key16(text: &str) -> Result<[u8; 16], CliError> {
    let mut key = [0u8; 16];
    hex::decode_to_slice(text.trim(), &mut key)
        .map_err(|_| CliError::new("bad_key_length", "key must be 32 hex characters"))?;
    Ok(key)
}

fn parse_skylink(text: &str) -> Result<SkyLink, CliError> {
    Ok(text.parse::<SkyLink>()?)
}

fn wallet_keys(state: &StateDirectory, id: &str) -> Result<KeyPair, CliError> {
    Ok(KeyPair::from_secret(state.secret_key(id)?))
}

/// Redeem a license held by `consumer`, returning the content key. The use
/// is counted in memory; callers persist by saving the state.
fn redeem(
    state: &mut StateDirectory,
    license: &str,
    consumer: &str,
    action: Action,
) -> Result<(SymKey, String), CliError> {
    let lic = state.license(license)?.clone();
    if lic.consumer_id != consumer {
        return Err(CliError::new(
            "not_license_holder",
            format!("license {} was not issued to {consumer:?}", lic.license_id.to_hex()),
        ));
    }
    let secret = state.secret_key(consumer)?;
    let key = redeem_license(&secret, &lic, action, now(), &mut state.usage)?;
    Ok((key, lic.license_id.to_hex()))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let root = StateDirectory::resolve_root(cli.state.as_deref());
    match cli.command {
        Command::Init(a) => {
            let d = Config::default();
            let config = Config {
                replication_factor: a.replication_factor.unwrap_or(d.replication_factor),
                chunk_size: a.chunk_size.unwrap_or(d.chunk_size),
                pow_difficulty: a.pow_difficulty.unwrap_or(d.pow_difficulty),
                challenge_ttl: a.challenge_ttl.unwrap_or(d.challenge_ttl),
                session_ttl: a.session_ttl.unwrap_or(d.session_ttl),
                host_count: a.host_count.unwrap_or(d.host_count),
                segment_bytes: a.segment_bytes.unwrap_or(d.segment_bytes),
            };
            StateDirectory::init(&root, config)?;
            writeln!(
                out,
                "Initialised {} with {} hosts, replication factor {}",
                root.display(),
                config.host_count,
                config.replication_factor
            )?;
        }

        Command::Register { id, password } => {
            check_id(&id)?;
            let state = StateDirectory::open(&root)?;
            let keys = KeyPair::generate();
            state.identity.register(&id, &password, keys.public, now())?;
            state.store_secret_key(&id, &keys.secret)?;
            state.save()?;
            writeln!(
                out,
                "Registered account {id} (key fingerprint {})",
                &keys.public.fingerprint().to_hex()[..16]
            )?;
        }

        Command::Login { id, password } => {
            let state = StateDirectory::open(&root)?;
            let secret = state.secret_key(&id)?;
            let t = now();
            let challenge = state.identity.begin_auth(&id, t)?;
            let response = respond(&challenge, &secret, &password)?;
            let session = state.identity.complete_auth(&challenge.challenge_id, &response, t)?;
            state.store_session(&id, &session.token)?;
            state.save()?;
            writeln!(out, "Logged in as {id}; session valid until {}", session.expires_at)?;
        }

        Command::Upload { file, owner } => {
            let state = StateDirectory::open(&root)?;
            state.identity.account(&owner)?;
            let keys = wallet_keys(&state, &owner)?;
            let data = read_input(&file)?;
            let (link, _) = state.network.upload(&data, &keys, state.config.chunk_size)?;
            state.save()?;
            writeln!(out, "Successfully uploaded file! Skylink: {link}")?;
        }

        Command::Download { skylink, out: path, owner } => {
            let state = StateDirectory::open(&root)?;
            let link = parse_skylink(&skylink)?;
            let secret = state.secret_key(&owner)?;
            let data = state.network.download(&link, &secret)?;
            write_output(&path, &data)?;
            writeln!(out, "Successfully downloaded skylink!")?;
        }

        Command::Publish { skylink, title, provider } => {
            let mut state = StateDirectory::open(&root)?;
            let link = parse_skylink(&skylink)?;
            let secret = state.secret_key(&provider)?;
            // Only the uploader can open the file key, so this proves ownership.
            state.network.file_key(&link, &secret)?;
            state.catalog.insert(
                link.to_string(),
                crate::state::CatalogEntry {
                    skylink: link.to_string(),
                    title: title.clone(),
                    provider: provider.clone(),
                    published_at: now(),
                },
            );
            state.save()?;
            writeln!(out, "Published {title:?} by {provider}: {link}")?;
        }

        Command::Buy(a) => {
            let mut state = StateDirectory::open(&root)?;
            let t = now();
            let link = parse_skylink(&a.skylink)?;
            let consumer = state.identity.account(&a.consumer)?;
            let token = state
                .session(&a.consumer)?
                .ok_or(CliError::from(LicenseError::NotAuthenticated))?;
            let entry = state
                .catalog
                .get(&link.to_string())
                .cloned()
                .ok_or_else(|| CliError::from(LicenseError::UnknownContent(link.to_string())))?;
            if !state.chain.verify().is_ok() {
                return Err(CliError::new("chain_invalid", "refusing to extend an invalid chain"));
            }
            let provider_keys = wallet_keys(&state, &entry.provider)?;
            let rules = KeyRules {
                not_before: a.not_before.unwrap_or(t),
                not_after: a.not_after.unwrap_or(t + DEFAULT_LICENSE_SECONDS),
                max_uses: a.max_uses,
                offline_allowed: a.offline,
            };
            let rights = Rights::new(a.rights)?;
            let purchase = execute_purchase(
                &state.identity,
                &state.network,
                &mut state.chain,
                Provider {
                    name: &entry.provider,
                    keys: &provider_keys,
                },
                &consumer,
                PurchaseRequest {
                    session_token: &token,
                    content_id: link.digest(),
                    content_title: &entry.title,
                    rules,
                    rights,
                    now: t,
                },
            )?;
            let block = state.chain.mine_block(t)?;
            let tx_hex = purchase.tx_id.to_hex();
            let lic_hex = purchase.license.license_id.to_hex();
            state.store_secret_block(&tx_hex, &purchase.sealed_secret_block)?;
            state.licenses.insert(lic_hex.clone(), purchase.license);
            state.save()?;
            writeln!(out, "Purchased license {lic_hex}")?;
            writeln!(out, "Transaction {tx_hex} mined in block {}", block.height)?;
        }

        Command::Confirm { tx_id, consumer } => {
            let state = StateDirectory::open(&root)?;
            let tx = Digest::from_hex(&tx_id)?;
            let sealed = state.secret_block(&tx.to_hex())?;
            let secret = state.secret_key(&consumer)?;
            let raw = skyvault_core::crypto::open(&secret, &sealed)
                .map_err(|_| CliError::from(LicenseError::OpenFailed))?;
            let block = SecretBlock::from_bytes(&raw)?;
            let info = block.content_info(&secret)?;
            if block.compute_hash() != block.block_hash || !state.chain.confirm_secret(&tx, &raw)? {
                return Err(CliError::new("secret_mismatch", "secret block does not match the chain commitment"));
            }
            writeln!(out, "confirmed: {:?} from {} at {}", info.title, block.provider_info, block.time)?;
        }

        Command::Play {
            license,
            out: path,
            consumer,
            action,
            debug_key,
        } => {
            let mut state = StateDirectory::open(&root)?;
            let (key, lic_hex) = redeem(&mut state, &license, &consumer, action)?;
            let content = state.license(&lic_hex)?.content_id;
            let data = state.network.download_with_key(&SkyLink(content), &key)?;
            write_output(&path, &data)?;
            state.save()?;
            writeln!(out, "Redeemed license {lic_hex} for {action}; wrote {} bytes", data.len())?;
            if debug_key {
                writeln!(out, "content key: {}", b64_encode(key.as_bytes()))?;
            }
        }

        Command::HlsPackage(a) => {
            let media = read_input(&a.input)?;
            let (key, key_uri, mut state) = match (&a.license, &a.key_hex) {
                (Some(lic), _) => {
                    let consumer = a
                        .consumer
                        .as_deref()
                        .ok_or_else(|| CliError::new("usage", "--license needs --as <consumer>"))?;
                    let mut state = StateDirectory::open(&root)?;
                    let (content_key, lic_hex) = redeem(&mut state, lic, consumer, Action::Stream)?;
                    (hls_key_from_content_key(&content_key), license_key_uri(&lic_hex), Some(state))
                }
                (None, Some(k)) => (parse_key16(k)?, a.key_uri.clone().unwrap_or_default(), None),
                (None, None) => {
                    return Err(CliError::new("usage", "give either --license or --key-hex with --key-uri"));
                }
            };
            let segment_bytes = match (a.segment_bytes, &state) {
                (Some(n), _) => n,
                (None, Some(s)) => s.config.segment_bytes,
                (None, None) => StateDirectory::open(&root)
                    .map(|s| s.config.segment_bytes)
                    .unwrap_or(hls::DEFAULT_SEGMENT_BYTES),
            };
            let pkg = hls::package(
                &media,
                &key,
                &key_uri,
                &PackageOptions {
                    segment_bytes,
                    segment_duration_hint: a.segment_duration,
                },
            )?;
            pkg.write_dir(&a.outdir)?;
            if let Some(s) = state.as_mut() {
                s.save()?;
            }
            writeln!(
                out,
                "Packaged {} segments into {} (key URI {key_uri})",
                pkg.segments.len(),
                a.outdir.display()
            )?;
        }

        Command::HlsUnpackage {
            dir,
            out: path,
            consumer,
            key_hex,
        } => {
            let pkg = HlsPackage::read_dir(&dir)?;
            let mut state = None;
            let key = match (key_hex, pkg.key_uri.strip_prefix(LICENSE_KEY_URI_PREFIX)) {
                (Some(k), _) => parse_key16(&k)?,
                (None, Some(lic)) => {
                    let consumer = consumer.ok_or_else(|| {
                        CliError::new("usage", "package is bound to a license; pass --as <consumer>")
                    })?;
                    let mut s = StateDirectory::open(&root)?;
                    let (content_key, _) = redeem(&mut s, lic, &consumer, Action::Stream)?;
                    state = Some(s);
                    hls_key_from_content_key(&content_key)
                }
                (None, None) => return Err(CliError::new("usage", "package key URI is external; pass --key-hex")),
            };
            let media = hls::unpackage(&pkg, &key)?;
            write_output(&path, &media)?;
            if let Some(s) = state {
                s.save()?;
            }
            writeln!(out, "Unpackaged {} segments; wrote {} bytes", pkg.segments.len(), media.len())?;
        }

        Command::VerifyChain => {
            let cfg_path = root.join("config");
            if !cfg_path.is_file() {
                return Err(StateDirectory::open(&root).unwrap_err());
            }
            let config = Config::parse(&fs::read_to_string(cfg_path)?)?;
            let bytes = match fs::read(root.join("chain.log")) {
                Ok(b) => b,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
                Err(e) => return Err(e.into()),
            };
            let verdict = if bytes.is_empty() {
                ChainVerdict::Ok
            } else {
                verify_serialized(&bytes, config.pow_difficulty)
            };
            match verdict {
                ChainVerdict::Ok => writeln!(out, "ok")?,
                ChainVerdict::FirstBadHeight(h) => {
                    return Err(CliError::new("chain_invalid", format!("first bad block at height {h}")));
                }
                ChainVerdict::Unreadable => {
                    return Err(CliError::new("chain_invalid", "chain file header is unreadable"));
                }
            }
        }

        Command::Host { action } => {
            let state = StateDirectory::open(&root)?;
            match action {
                HostAction::List => {
                    for h in state.network.hosts() {
                        let status = if h.is_alive() { "alive" } else { "down" };
                        writeln!(out, "{} {status} {} fragments", h.id(), h.fragment_count())?;
                    }
                }
                HostAction::Fail { id } => {
                    state.network.fail_host(&id)?;
                    state.save()?;
                    writeln!(out, "{id} marked down")?;
                }
                HostAction::Revive { id } => {
                    state.network.revive_host(&id)?;
                    state.save()?;
                    writeln!(out, "{id} marked alive")?;
                }
            }
        }

        Command::Serve { bind } => {
            let state = StateDirectory::open(&root)?;
            let app = AppState::new(state.identity.clone(), Some(root.clone()));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(&bind).await?;
                writeln!(out, "listening on {}", listener.local_addr()?)?;
                out.flush()?;
                server::serve(listener, app, async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await?;
                Ok::<_, CliError>(())
            })?;
            state.save()?;
        }
    }
    Ok(())
}

/// Parse arguments, run, and render failures as JSON on stderr.
pub fn main_with_args(args: impl IntoIterator<Item = std::ffi::OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let msg = e.render().to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", CliError::new("usage", first).to_json());
            return 2;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            1
        }
    }
}
