use std::fmt::Write as _;

use skyvault_core::hls::DEFAULT_SEGMENT_BYTES;
use skyvault_core::identity::{IdentityConfig, DEFAULT_CHALLENGE_TTL, DEFAULT_SESSION_TTL};
use skyvault_core::ledger::DEFAULT_DIFFICULTY;
use skyvault_core::storage::{DEFAULT_CHUNK_SIZE, DEFAULT_REPLICATION};

use crate::error::CliError;

pub const DEFAULT_HOST_COUNT: usize = 5;

/// Line-based `key=value` settings. Blank lines and `#` comments are ignored;
/// keys left out take their defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Config {
    pub replication_factor: usize,
    pub chunk_size: usize,
    pub pow_difficulty: u32,
    pub challenge_ttl: u64,
    pub session_ttl: u64,
    pub host_count: usize,
    pub segment_bytes: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            replication_factor: DEFAULT_REPLICATION,
            chunk_size: DEFAULT_CHUNK_SIZE,
            pow_difficulty: DEFAULT_DIFFICULTY,
            challenge_ttl: DEFAULT_CHALLENGE_TTL,
            session_ttl: DEFAULT_SESSION_TTL,
            host_count: DEFAULT_HOST_COUNT,
            segment_bytes: DEFAULT_SEGMENT_BYTES,
        }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::new("bad_config", msg)
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| bad(format!("{key}: {value:?} is not a non-negative integer")))
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut c = Config::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: expected key=value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "replication_factor" => c.replication_factor = num(k, v)?,
                "chunk_size" => c.chunk_size = num(k, v)?,
                "pow_difficulty" => c.pow_difficulty = num(k, v)?,
                "challenge_ttl" => c.challenge_ttl = num(k, v)?,
                "session_ttl" => c.session_ttl = num(k, v)?,
                "host_count" => c.host_count = num(k, v)?,
                "segment_bytes" => c.segment_bytes = num(k, v)?,
                other => return Err(bad(format!("line {}: unknown key {other:?}", n + 1))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fields = [
            ("replication_factor", self.replication_factor as u64),
            ("chunk_size", self.chunk_size as u64),
            ("pow_difficulty", self.pow_difficulty as u64),
            ("challenge_ttl", self.challenge_ttl),
            ("session_ttl", self.session_ttl),
            ("host_count", self.host_count as u64),
            ("segment_bytes", self.segment_bytes as u64),
        ];
        if let Some((k, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(bad(format!("{k} must be positive")));
        }
        if self.pow_difficulty > 256 {
            return Err(bad("pow_difficulty cannot exceed 256 bits"));
        }
        if self.replication_factor > self.host_count {
            return Err(bad(format!(
                "replication_factor {} exceeds host_count {}",
                self.replication_factor, self.host_count
            )));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "replication_factor={}", self.replication_factor);
        let _ = writeln!(s, "chunk_size={}", self.chunk_size);
        let _ = writeln!(s, "pow_difficulty={}", self.pow_difficulty);
        let _ = writeln!(s, "challenge_ttl={}", self.challenge_ttl);
        let _ = writeln!(s, "session_ttl={}", self.session_ttl);
        let _ = writeln!(s, "host_count={}", self.host_count);
        let _ = writeln!(s, "segment_bytes={}", self.segment_bytes);
        s
    }

    pub fn identity(&self) -> IdentityConfig {
        IdentityConfig {
            challenge_ttl: self.challenge_ttl,
            session_ttl: self.session_ttl,
        }
    }
}
