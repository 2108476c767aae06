use std::io;

use serde::Serialize;
use skyvault_core::codec::CodecError;
use skyvault_core::crypto::CryptoError;
use skyvault_core::hls::HlsError;
use skyvault_core::identity::IdentityError;
use skyvault_core::ledger::LedgerError;
use skyvault_core::licensing::LicenseError;
use skyvault_core::storage::StorageError;
use thiserror::Error;

/// A failure with a stable machine-readable code.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{message}")]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

#[derive(Serialize)]
struct Rendered<'a> {
    error: Body<'a>,
}

#[derive(Serialize)]
struct Body<'a> {
    code: &'a str,
    message: &'a str,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    /// `{"error":{"code":…,"message":…}}`
    pub fn to_json(&self) -> String {
        serde_json::to_string(&Rendered {
            error: Body {
                code: self.code,
                message: &self.message,
            },
        })
        .expect("plain strings serialize")
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::new("io", e.to_string())
    }
}

impl From<CodecError> for CliError {
    fn from(e: CodecError) -> Self {
        CliError::new("corrupt_record", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::new("corrupt_record", e.to_string())
    }
}

impl From<CryptoError> for CliError {
    fn from(e: CryptoError) -> Self {
        let code = match e {
            CryptoError::EmptyIdentifier => "invalid_id",
            CryptoError::EmptyPassword => "weak_password",
            CryptoError::BadSeedLength(_) | CryptoError::InvalidPublicKey => "invalid_key",
            CryptoError::OpenFailed | CryptoError::AuthFailed => "decrypt_failed",
            CryptoError::Encoding(_) => "bad_encoding",
        };
        CliError::new(code, e.to_string())
    }
}

impl From<IdentityError> for CliError {
    fn from(e: IdentityError) -> Self {
        let code = match &e {
            IdentityError::DuplicateId(_) => "duplicate_id",
            IdentityError::WeakPassword => "weak_password",
            IdentityError::EmptyIdentifier => "invalid_id",
            IdentityError::UnknownId(_) => "unknown_account",
            IdentityError::UnknownChallenge => "unknown_challenge",
            IdentityError::Expired => "expired",
            IdentityError::ResponseMismatch => "auth_failed",
            IdentityError::InvalidToken => "invalid_token",
            IdentityError::Crypto(c) => return c.clone().into(),
        };
        CliError::new(code, e.to_string())
    }
}

impl From<StorageError> for CliError {
    fn from(e: StorageError) -> Self {
        let code = match &e {
            StorageError::BadChunkSize => "bad_chunk_size",
            StorageError::EmptyFile => "empty_file",
            StorageError::InsufficientHosts { .. } => "insufficient_hosts",
            StorageError::BadReplication => "bad_replication",
            StorageError::UnknownSkylink(_) => "unknown_skylink",
            StorageError::InvalidSkylink(_) => "invalid_skylink",
            StorageError::IntegrityFailure { .. } => "integrity_failure",
            StorageError::ManifestMismatch => "manifest_mismatch",
            StorageError::AllReplicasDown { .. } => "all_replicas_down",
            StorageError::KeyAccessDenied => "key_access_denied",
            StorageError::UnknownHost(_) => "unknown_host",
            StorageError::Codec(_) => "corrupt_record",
            StorageError::Io(_) => "io",
        };
        CliError::new(code, e.to_string())
    }
}

impl From<LedgerError> for CliError {
    fn from(e: LedgerError) -> Self {
        let code = match &e {
            LedgerError::BadSignature => "bad_signature",
            LedgerError::StaleTimestamp { .. } => "stale_timestamp",
            LedgerError::DuplicateTransaction(_) => "duplicate_transaction",
            LedgerError::MalformedTransaction(_) => "malformed_transaction",
            LedgerError::NothingToMine => "nothing_to_mine",
            LedgerError::UnknownTransaction(_) => "unknown_transaction",
            LedgerError::Codec(_) => "corrupt_chain",
            LedgerError::Io(_) => "io",
        };
        CliError::new(code, e.to_string())
    }
}

impl From<LicenseError> for CliError {
    fn from(e: LicenseError) -> Self {
        let code = match &e {
            LicenseError::InvalidRules => "invalid_rules",
            LicenseError::EmptyRights => "empty_rights",
            LicenseError::InvalidLicense => "invalid_license",
            LicenseError::RightsDenied(_) => "rights_denied",
            LicenseError::OpenFailed => "open_failed",
            LicenseError::NotAuthenticated => "not_authenticated",
            LicenseError::UnknownContent(_) => "unknown_content",
            LicenseError::NotContentOwner => "not_content_owner",
            LicenseError::LedgerRejected(_) => "ledger_rejected",
            LicenseError::Crypto(c) => return c.clone().into(),
            LicenseError::Codec(c) => return c.clone().into(),
        };
        CliError::new(code, e.to_string())
    }
}

impl From<HlsError> for CliError {
    fn from(e: HlsError) -> Self {
        let code = match &e {
            HlsError::EmptyMedia => "empty_media",
            HlsError::BadKeyLength(_) => "bad_key_length",
            HlsError::BadSegmentSize => "bad_segment_size",
            HlsError::MissingSegment(_) => "missing_segment",
            HlsError::PaddingError(_) => "padding_error",
            HlsError::MalformedPlaylist(_) => "malformed_playlist",
            HlsError::NoRenditions => "no_renditions",
            HlsError::DuplicateBandwidth(_) => "duplicate_bandwidth",
            HlsError::Io(_) => "io",
        };
        CliError::new(code, e.to_string())
    }
}
