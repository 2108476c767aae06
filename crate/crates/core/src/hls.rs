//! HLS packaging with AES-128 segment encryption.
//!
//! Media is treated as opaque bytes and cut into fixed-size segments. Segment
//! `i` is encrypted with AES-128-CBC and PKCS#7 padding under the IV formed
//! by the 16-byte big-endian media sequence number, which is what players
//! assume when `#EXT-X-KEY` carries no `IV` attribute.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::Path;

use cbc::cipher::block_padding::Pkcs7;
use cbc::cipher::{BlockDecryptMut, BlockEncryptMut, KeyIvInit};
use rayon::prelude::*;
use thiserror::Error;

use crate::crypto::{Digest, SymKey};

type Aes128CbcEnc = cbc::Encryptor<aes::Aes128>;
type Aes128CbcDec = cbc::Decryptor<aes::Aes128>;

pub const DEFAULT_SEGMENT_BYTES: usize = 1_048_576;
pub const DEFAULT_SEGMENT_DURATION: f64 = 6.0;
pub const PLAYLIST_FILE: &str = "playlist.m3u8";
pub const MASTER_FILE: &str = "master.m3u8";
pub const LICENSE_KEY_URI_PREFIX: &str = "skydrm://license/";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HlsError {
    #[error("media is empty")]
    EmptyMedia,
    #[error("AES-128 key must be 16 bytes, got {0}")]
    BadKeyLength(usize),
    #[error("segment size must be at least 1 byte")]
    BadSegmentSize,
    #[error("segment {0} is missing")]
    MissingSegment(String),
    #[error("segment {0} failed to decrypt (bad padding)")]
    PaddingError(String),
    #[error("malformed playlist: {0}")]
    MalformedPlaylist(String),
    #[error("at least one rendition is required")]
    NoRenditions,
    #[error("bandwidth {0} listed twice")]
    DuplicateBandwidth(u64),
    #[error("io: {0}")]
    Io(String),
}

impl From<io::Error> for HlsError {
    fn from(e: io::Error) -> Self {
        HlsError::Io(e.to_string())
    }
}

/// 16-byte big-endian sequence number.
pub fn sequence_iv(sequence: u64) -> [u8; 16] {
    let mut iv = [0u8; 16];
    iv[8..].copy_from_slice(&sequence.to_be_bytes());
    iv
}

pub fn segment_name(i: usize) -> String {
    format!("seg{i}.ts")
}

pub fn license_key_uri(license_id_hex: &str) -> String {
    format!("{LICENSE_KEY_URI_PREFIX}{license_id_hex}")
}

/// The AES-128 key for HLS output derived from a 32-byte content key, so the
/// playlist key is reachable only through whoever can redeem the content key.
pub fn hls_key_from_content_key(content_key: &SymKey) -> [u8; 16] {
    let d = Digest::of_parts(&[b"skyvault/hls-key/v1", content_key.as_bytes()]);
    d.0[..16].try_into().unwrap()
}

fn check_key(key: &[u8]) -> Result<[u8; 16], HlsError> {
    key.try_into().map_err(|_| HlsError::BadKeyLength(key.len()))
}

pub fn encrypt_segment(key: &[u8; 16], sequence: u64, plaintext: &[u8]) -> Vec<u8> {
    Aes128CbcEnc::new(key.into(), &sequence_iv(sequence).into())
        .encrypt_padded_vec_mut::<Pkcs7>(plaintext)
}

pub fn decrypt_segment(key: &[u8; 16], iv: &[u8; 16], ciphertext: &[u8]) -> Option<Vec<u8>> {
    Aes128CbcDec::new(key.into(), iv.into())
        .decrypt_padded_vec_mut::<Pkcs7>(ciphertext)
        .ok()
}

#[derive(Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub ciphertext: Vec<u8>,
}

impl std::fmt::Debug for Segment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Segment")
            .field("name", &self.name)
            .field("len", &self.ciphertext.len())
            .finish()
    }
}

/// A packaged rendition. The key itself is never part of the package.
#[derive(Debug, Clone, PartialEq)]
pub struct HlsPackage {
    pub media_playlist: String,
    pub segments: Vec<Segment>,
    pub key_uri: String,
    pub segment_duration_hint: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackageOptions {
    pub segment_bytes: usize,
    pub segment_duration_hint: f64,
}

impl Default for PackageOptions {
    fn default() -> Self {
        PackageOptions {
            segment_bytes: DEFAULT_SEGMENT_BYTES,
            segment_duration_hint: DEFAULT_SEGMENT_DURATION,
        }
    }
}

pub fn package(
    media: &[u8],
    key: &[u8],
    key_uri: &str,
    opts: &PackageOptions,
) -> Result<HlsPackage, HlsError> {
    if media.is_empty() {
        return Err(HlsError::EmptyMedia);
    }
    let key = check_key(key)?;
    if opts.segment_bytes == 0 {
        return Err(HlsError::BadSegmentSize);
    }
    let pieces: Vec<&[u8]> = media.chunks(opts.segment_bytes).collect();
    let segments: Vec<Segment> = pieces
        .par_iter()
        .enumerate()
        .map(|(i, p)| Segment {
            name: segment_name(i),
            ciphertext: encrypt_segment(&key, i as u64, p),
        })
        .collect();

    let dur = opts.segment_duration_hint;
    let mut text = String::new();
    text.push_str("#EXTM3U\n#EXT-X-VERSION:3\n");
    text.push_str(&format!("#EXT-X-TARGETDURATION:{}\n", dur.ceil() as u64));
    text.push_str("#EXT-X-MEDIA-SEQUENCE:0\n");
    text.push_str(&format!("#EXT-X-KEY:METHOD=AES-128,URI=\"{key_uri}\"\n"));
    for s in &segments {
        text.push_str(&format!("#EXTINF:{dur:.3},\n{}\n", s.name));
    }
    text.push_str("#EXT-X-ENDLIST\n");

    Ok(HlsPackage {
        media_playlist: text,
        segments,
        key_uri: key_uri.to_owned(),
        segment_duration_hint: dur,
    })
}

pub fn unpackage(pkg: &HlsPackage, key: &[u8]) -> Result<Vec<u8>, HlsError> {
    let key = check_key(key)?;
    let playlist = parse_media_playlist(&pkg.media_playlist)?;
    let by_name: BTreeMap<&str, &Segment> =
        pkg.segments.iter().map(|s| (s.name.as_str(), s)).collect();

    let mut work = Vec::with_capacity(playlist.segments.len());
    for (j, entry) in playlist.segments.iter().enumerate() {
        let seg = by_name
            .get(entry.uri.as_str())
            .ok_or_else(|| HlsError::MissingSegment(entry.uri.clone()))?;
        let iv = match playlist.key.as_ref().and_then(|k| k.iv) {
            Some(iv) => iv,
            None => sequence_iv(playlist.media_sequence + j as u64),
        };
        work.push((seg, iv));
    }
    let plain: Vec<Result<Vec<u8>, HlsError>> = work
        .par_iter()
        .map(|(seg, iv)| {
            decrypt_segment(&key, iv, &seg.ciphertext)
                .ok_or_else(|| HlsError::PaddingError(seg.name.clone()))
        })
        .collect();
    let mut out = Vec::new();
    for p in plain {
        out.extend_from_slice(&p?);
    }
    Ok(out)
}

impl HlsPackage {
    /// Writes `playlist.m3u8` and `seg{i}.ts`; never the key.
    pub fn write_dir(&self, dir: &Path) -> Result<(), HlsError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(PLAYLIST_FILE), &self.media_playlist)?;
        for s in &self.segments {
            fs::write(dir.join(&s.name), &s.ciphertext)?;
        }
        Ok(())
    }

    /// Read a package back. Segments the playlist names but the directory
    /// lacks are simply absent, and surface from [`unpackage`].
    pub fn read_dir(dir: &Path) -> Result<Self, HlsError> {
        let text = fs::read_to_string(dir.join(PLAYLIST_FILE))?;
        let playlist = parse_media_playlist(&text)?;
        let mut segments = Vec::new();
        for entry in &playlist.segments {
            let path = dir.join(&entry.uri);
            if entry.uri.contains('/') || !path.is_file() {
                continue;
            }
            segments.push(Segment {
                name: entry.uri.clone(),
                ciphertext: fs::read(path)?,
            });
        }
        Ok(HlsPackage {
            key_uri: playlist.key.map(|k| k.uri.unwrap_or_default()).unwrap_or_default(),
            segment_duration_hint: playlist
                .segments
                .first()
                .map_or(DEFAULT_SEGMENT_DURATION, |s| s.duration),
            media_playlist: text,
            segments,
        })
    }
}

// ---------------------------------------------------------------------------
// Master playlists

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendition {
    pub bandwidth: u64,
    pub media_playlist_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MasterPlaylist {
    pub text: String,
    pub renditions: Vec<Rendition>,
}

pub fn master_playlist(renditions: &[Rendition]) -> Result<MasterPlaylist, HlsError> {
    if renditions.is_empty() {
        return Err(HlsError::NoRenditions);
    }
    let mut seen = BTreeSet::new();
    for r in renditions {
        if !seen.insert(r.bandwidth) {
            return Err(HlsError::DuplicateBandwidth(r.bandwidth));
        }
    }
    let mut sorted = renditions.to_vec();
    sorted.sort_by_key(|r| r.bandwidth);
    let mut text = String::from("#EXTM3U\n#EXT-X-VERSION:3\n");
    for r in &sorted {
        text.push_str(&format!(
            "#EXT-X-STREAM-INF:BANDWIDTH={}\n{}\n",
            r.bandwidth, r.media_playlist_name
        ));
    }
    Ok(MasterPlaylist {
        text,
        renditions: sorted,
    })
}

// ---------------------------------------------------------------------------
// Parsing and grammar checks

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttrValue {
    Quoted(String),
    Plain(String),
}

impl AttrValue {
    pub fn as_str(&self) -> &str {
        match self {
            AttrValue::Quoted(s) | AttrValue::Plain(s) => s,
        }
    }
}

/// Parse an attribute list: `NAME=VALUE` pairs separated by commas, where a
/// value is either a double-quoted string or an unquoted token.
pub fn parse_attributes(list: &str) -> Result<Vec<(String, AttrValue)>, String> {
    let mut out = Vec::new();
    let mut rest = list;
    while !rest.is_empty() {
        let eq = rest.find('=').ok_or_else(|| format!("attribute without '=': {rest:?}"))?;
        let name = &rest[..eq];
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '-') {
            return Err(format!("bad attribute name {name:?}"));
        }
        rest = &rest[eq + 1..];
        let value = if let Some(q) = rest.strip_prefix('"') {
            let end = q.find('"').ok_or("unterminated quoted string")?;
            let v = &q[..end];
            if v.contains('\n') || v.contains('\r') {
                return Err("line break inside quoted string".into());
            }
            rest = &q[end + 1..];
            AttrValue::Quoted(v.to_owned())
        } else {
            let end = rest.find(',').unwrap_or(rest.len());
            let v = &rest[..end];
            if v.is_empty() {
                return Err(format!("empty value for {name}"));
            }
            rest = &rest[end..];
            AttrValue::Plain(v.to_owned())
        };
        if out.iter().any(|(n, _): &(String, AttrValue)| n == name) {
            return Err(format!("duplicate attribute {name}"));
        }
        out.push((name.to_owned(), value));
        if let Some(r) = rest.strip_prefix(',') {
            rest = r;
            if rest.is_empty() {
                return Err("trailing comma in attribute list".into());
            }
        } else if !rest.is_empty() {
            return Err(format!("garbage after attribute {name}: {rest:?}"));
        }
    }
    Ok(out)
}

fn attr<'a>(attrs: &'a [(String, AttrValue)], name: &str) -> Option<&'a AttrValue> {
    attrs.iter().find(|(n, _)| n == name).map(|(_, v)| v)
}

fn decimal_integer(s: &str) -> Option<u64> {
    if s.is_empty() || s.len() > 20 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

fn decimal_float(s: &str) -> Option<f64> {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if s.ends_with('.') {
        return None;
    }
    s.parse().ok()
}

fn hex_iv(s: &str) -> Option<[u8; 16]> {
    let h = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X"))?;
    let mut out = [0u8; 16];
    hex::decode_to_slice(h, &mut out).ok()?;
    Some(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyTag {
    pub method: String,
    pub uri: Option<String>,
    pub iv: Option<[u8; 16]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentEntry {
    pub duration: f64,
    pub uri: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MediaPlaylist {
    pub version: Option<u64>,
    pub target_duration: u64,
    pub media_sequence: u64,
    pub key: Option<KeyTag>,
    pub segments: Vec<SegmentEntry>,
    pub ended: bool,
}

const MASTER_ONLY_TAGS: &[&str] = &[
    "#EXT-X-STREAM-INF",
    "#EXT-X-I-FRAME-STREAM-INF",
    "#EXT-X-MEDIA:",
    "#EXT-X-SESSION-DATA",
    "#EXT-X-SESSION-KEY",
];
const MEDIA_ONLY_TAGS: &[&str] = &[
    "#EXTINF",
    "#EXT-X-TARGETDURATION",
    "#EXT-X-MEDIA-SEQUENCE",
    "#EXT-X-KEY",
    "#EXT-X-ENDLIST",
    "#EXT-X-BYTERANGE",
    "#EXT-X-DISCONTINUITY",
    "#EXT-X-PLAYLIST-TYPE",
];

fn playlist_lines(text: &str) -> Result<Vec<&str>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some("#EXTM3U") => {}
        _ => return Err("first line must be #EXTM3U".into()),
    }
    Ok(lines.map(|l| l.trim_end_matches('\r')).collect())
}

fn parse_key_tag(value: &str) -> Result<KeyTag, String> {
    let attrs = parse_attributes(value)?;
    let method = match attr(&attrs, "METHOD") {
        Some(AttrValue::Plain(m)) => m.clone(),
        _ => return Err("#EXT-X-KEY requires an enumerated METHOD".into()),
    };
    if !matches!(method.as_str(), "NONE" | "AES-128" | "SAMPLE-AES") {
        return Err(format!("unknown key METHOD {method}"));
    }
    let uri = match attr(&attrs, "URI") {
        Some(AttrValue::Quoted(u)) => Some(u.clone()),
        Some(AttrValue::Plain(_)) => return Err("key URI must be a quoted string".into()),
        None => None,
    };
    if method == "NONE" && (uri.is_some() || attr(&attrs, "IV").is_some()) {
        return Err("METHOD=NONE must not carry URI or IV".into());
    }
    if method != "NONE" && uri.is_none() {
        return Err(format!("METHOD={method} requires URI"));
    }
    let iv = match attr(&attrs, "IV") {
        Some(AttrValue::Plain(v)) => Some(hex_iv(v).ok_or("IV must be a 128-bit hexadecimal sequence")?),
        Some(AttrValue::Quoted(_)) => return Err("IV must not be quoted".into()),
        None => None,
    };
    Ok(KeyTag { method, uri, iv })
}

/// Parse and check a media playlist against the mandatory RFC 8216 rules
/// enforced here (see the HLS chapter of the guide for the list).
pub fn parse_media_playlist(text: &str) -> Result<MediaPlaylist, HlsError> {
    parse_media_inner(text).map_err(HlsError::MalformedPlaylist)
}

fn parse_media_inner(text: &str) -> Result<MediaPlaylist, String> {
    let lines = playlist_lines(text)?;
    let mut version = None;
    let mut target = None;
    let mut sequence = None;
    let mut key = None;
    let mut segments = Vec::new();
    let mut pending_inf: Option<f64> = None;
    let mut ended = false;

    for (n, line) in lines.iter().enumerate() {
        let lineno = n + 2;
        if line.is_empty() {
            continue;
        }
        if ended && !line.starts_with('#') {
            return Err(format!("line {lineno}: segment after #EXT-X-ENDLIST"));
        }
        if MASTER_ONLY_TAGS.iter().any(|t| line.starts_with(t)) {
            return Err(format!("line {lineno}: master playlist tag in media playlist"));
        }
        if let Some(v) = line.strip_prefix("#EXT-X-VERSION:") {
            if version.replace(decimal_integer(v).ok_or(format!("line {lineno}: bad version"))?).is_some() {
                return Err(format!("line {lineno}: duplicate #EXT-X-VERSION"));
            }
        } else if let Some(v) = line.strip_prefix("#EXT-X-TARGETDURATION:") {
            let d = decimal_integer(v).ok_or(format!("line {lineno}: bad target duration"))?;
            if target.replace(d).is_some() {
                return Err(format!("line {lineno}: duplicate #EXT-X-TARGETDURATION"));
            }
        } else if let Some(v) = line.strip_prefix("#EXT-X-MEDIA-SEQUENCE:") {
            if !segments.is_empty() || pending_inf.is_some() {
                return Err(format!("line {lineno}: #EXT-X-MEDIA-SEQUENCE after first segment"));
            }
            let s = decimal_integer(v).ok_or(format!("line {lineno}: bad media sequence"))?;
            if sequence.replace(s).is_some() {
                return Err(format!("line {lineno}: duplicate #EXT-X-MEDIA-SEQUENCE"));
            }
        } else if let Some(v) = line.strip_prefix("#EXT-X-KEY:") {
            let tag = parse_key_tag(v).map_err(|e| format!("line {lineno}: {e}"))?;
            if tag.iv.is_some() && version.is_some_and(|v| v < 2) {
                return Err(format!("line {lineno}: IV attribute needs version 2 or later"));
            }
            key = Some(tag);
        } else if let Some(v) = line.strip_prefix("#EXTINF:") {
            if pending_inf.is_some() {
                return Err(format!("line {lineno}: #EXTINF without a URI"));
            }
            let dur = v.split_once(',').map_or(v, |(d, _)| d);
            let d = decimal_float(dur).ok_or(format!("line {lineno}: bad #EXTINF duration"))?;
            if version.unwrap_or(1) < 3 && dur.contains('.') {
                return Err(format!("line {lineno}: float durations need version 3"));
            }
            pending_inf = Some(d);
        } else if line == &"#EXT-X-ENDLIST" {
            if ended {
                return Err(format!("line {lineno}: duplicate #EXT-X-ENDLIST"));
            }
            ended = true;
        } else if line.starts_with('#') {
            // Comment or a tag this checker does not model.
        } else {
            let duration = pending_inf
                .take()
                .ok_or(format!("line {lineno}: URI without preceding #EXTINF"))?;
            segments.push(SegmentEntry {
                duration,
                uri: line.to_string(),
            });
        }
    }
    if pending_inf.is_some() {
        return Err("final #EXTINF has no URI".into());
    }
    let target_duration = target.ok_or("missing #EXT-X-TARGETDURATION")?;
    for s in &segments {
        if s.duration.round() as u64 > target_duration {
            return Err(format!("segment {} exceeds target duration", s.uri));
        }
    }
    Ok(MediaPlaylist {
        version,
        target_duration,
        media_sequence: sequence.unwrap_or(0),
        key,
        segments,
        ended,
    })
}

/// Check a master playlist: `#EXTM3U` first, every `#EXT-X-STREAM-INF`
/// carries a decimal BANDWIDTH and is followed by a URI line, and no media
/// segment tags appear.
pub fn validate_master_playlist(text: &str) -> Result<Vec<Rendition>, HlsError> {
    validate_master_inner(text).map_err(HlsError::MalformedPlaylist)
}

fn validate_master_inner(text: &str) -> Result<Vec<Rendition>, String> {
    let lines = playlist_lines(text)?;
    let mut out = Vec::new();
    let mut pending: Option<u64> = None;
    let mut version_seen = false;
    for (n, line) in lines.iter().enumerate() {
        let lineno = n + 2;
        if line.is_empty() {
            continue;
        }
        if MEDIA_ONLY_TAGS.iter().any(|t| line.starts_with(t)) {
            return Err(format!("line {lineno}: media segment tag in master playlist"));
        }
        if let Some(v) = line.strip_prefix("#EXT-X-VERSION:") {
            decimal_integer(v).ok_or(format!("line {lineno}: bad version"))?;
            if version_seen {
                return Err(format!("line {lineno}: duplicate #EXT-X-VERSION"));
            }
            version_seen = true;
        } else if let Some(v) = line.strip_prefix("#EXT-X-STREAM-INF:") {
            if pending.is_some() {
                return Err(format!("line {lineno}: #EXT-X-STREAM-INF without a URI"));
            }
            let attrs = parse_attributes(v).map_err(|e| format!("line {lineno}: {e}"))?;
            let bw = match attr(&attrs, "BANDWIDTH") {
                Some(AttrValue::Plain(b)) => decimal_integer(b),
                _ => None,
            }
            .ok_or(format!("line {lineno}: STREAM-INF requires decimal BANDWIDTH"))?;
            pending = Some(bw);
        } else if line.starts_with('#') {
        } else {
            let bandwidth = pending
                .take()
                .ok_or(format!("line {lineno}: URI without #EXT-X-STREAM-INF"))?;
            out.push(Rendition {
                bandwidth,
                media_playlist_name: line.to_string(),
            });
        }
    }
    if pending.is_some() {
        return Err("final #EXT-X-STREAM-INF has no URI".into());
    }
    if out.is_empty() {
        return Err("master playlist lists no variant streams".into());
    }
    Ok(out)
}
