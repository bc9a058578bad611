use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use md5::{Digest, Md5};
use thiserror::Error;

use super::embedded;
use crate::challenge::ChallengeSpec;

/// The three salt parts mixed into every progress hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SaltTriple {
    salt1: Vec<u8>,
    salt2: Vec<u8>,
    salt3: Vec<u8>,
}

impl SaltTriple {
    pub fn new(salt1: &[u8], salt2: &[u8], salt3: &[u8]) -> Result<Self, ProgressError> {
        if salt1.is_empty() || salt2.is_empty() || salt3.is_empty() {
            return Err(ProgressError::BadSalts("salt parts must be non-empty"));
        }
        if salt1 == salt2 || salt2 == salt3 || salt1 == salt3 {
            return Err(ProgressError::BadSalts("salt parts must be pairwise distinct"));
        }
        Ok(Self {
            salt1: salt1.to_vec(),
            salt2: salt2.to_vec(),
            salt3: salt3.to_vec(),
        })
    }

    /// The salts compiled into this build.
    pub fn embedded() -> Self {
        Self::new(embedded::SALT1, embedded::SALT2, embedded::SALT3)
            .expect("build script validates embedded salts")
    }
}

/// `md5(salt1 || challenge || salt2 || level || salt3 || home)` over the
/// UTF-8 bytes of each part.
pub fn compute_progress_hash(salts: &SaltTriple, challenge: &str, level: &str, home: &str) -> [u8; 16] {
    let mut h = Md5::new();
    h.update(&salts.salt1);
    h.update(challenge.as_bytes());
    h.update(&salts.salt2);
    h.update(level.as_bytes());
    h.update(&salts.salt3);
    h.update(home.as_bytes());
    h.finalize().into()
}

/// Level string hashed to mark a completed adventure whose last level was `leaf`.
pub fn finished_marker(leaf: &str) -> String {
    format!("{leaf}\u{0}finished")
}

#[derive(Debug, Error)]
pub enum ProgressError {
    #[error("invalid salts: {0}")]
    BadSalts(&'static str),
    #[error("progress record is corrupted: {0}")]
    Corrupt(String),
    #[error("progress hash matches more than one level ({0:?}); salts or challenge are misconfigured")]
    Ambiguous(Vec<String>),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A stored progress digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgressRecord {
    pub hash_hex: String,
    pub stored_at: PathBuf,
}

impl ProgressRecord {
    pub fn new(digest: &[u8; 16], stored_at: impl Into<PathBuf>) -> Self {
        Self {
            hash_hex: hex::encode(digest),
            stored_at: stored_at.into(),
        }
    }

    /// Parses file contents: 32 lowercase hex digits, optionally followed by a newline.
    pub fn parse(text: &str, stored_at: impl Into<PathBuf>) -> Result<Self, ProgressError> {
        let line = text.strip_suffix('\n').unwrap_or(text);
        let valid = line.len() == 32 && line.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
        if !valid {
            return Err(ProgressError::Corrupt(format!("expected 32 hex digits, got {line:?}")));
        }
        Ok(Self {
            hash_hex: line.to_string(),
            stored_at: stored_at.into(),
        })
    }

    pub fn digest(&self) -> [u8; 16] {
        let mut out = [0u8; 16];
        hex::decode_to_slice(&self.hash_hex, &mut out).expect("validated on construction");
        out
    }
}

/// `$HOME/.ta/progress/<challenge>`
pub fn progress_path(home: &Path, challenge: &str) -> PathBuf {
    home.join(".ta").join("progress").join(challenge)
}

/// Atomically replaces the record at `path` (write to a sibling temp file, then rename).
pub fn save_progress(path: &Path, digest: &[u8; 16]) -> Result<ProgressRecord, ProgressError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    writeln!(tmp, "{}", hex::encode(digest))?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(ProgressRecord::new(digest, path))
}

/// `Ok(None)` when no record exists yet.
pub fn load_progress(path: &Path) -> Result<Option<ProgressRecord>, ProgressError> {
    match fs::read_to_string(path) {
        Ok(text) => ProgressRecord::parse(&text, path).map(Some),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Finds the level whose hash equals the record by hashing every level of
/// the challenge. `Ok(None)` means no level matches.
pub fn resolve_level_from_hash(
    record: &ProgressRecord,
    spec: &ChallengeSpec,
    salts: &SaltTriple,
    home: &str,
) -> Result<Option<String>, ProgressError> {
    let wanted = record.digest();
    let matches: Vec<String> = spec
        .levels()
        .iter()
        .filter(|l| compute_progress_hash(salts, spec.challenge_name(), &l.name, home) == wanted)
        .map(|l| l.name.clone())
        .collect();
    match matches.len() {
        0 => Ok(None),
        1 => Ok(matches.into_iter().next()),
        _ => Err(ProgressError::Ambiguous(matches)),
    }
}
