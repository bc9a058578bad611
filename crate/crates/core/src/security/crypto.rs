use aes::Aes192;
use aes_gcm::aead::consts::U12;
use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes128Gcm, Aes256Gcm, AesGcm};
use rand::rngs::OsRng;
use rand::RngCore;
use thiserror::Error;

use super::embedded;

type Aes192Gcm = AesGcm<Aes192, U12>;

/// Container layout: `TAC1 | key length (1 byte) | nonce (12) | ciphertext | tag (16)`.
/// The first five bytes are authenticated as associated data.
pub const MAGIC: &[u8; 4] = b"TAC1";
const NONCE_LEN: usize = 12;
const TAG_LEN: usize = 16;
const HEADER_LEN: usize = MAGIC.len() + 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("challenge key must be 16, 24 or 32 bytes, got {0}")]
    BadKeyLength(usize),
    #[error("not an encrypted challenge container")]
    BadMagic,
    #[error("container is truncated")]
    Truncated,
    #[error("container was sealed with a {found}-byte key, this key has {expected} bytes")]
    KeySizeMismatch { found: usize, expected: usize },
    #[error("integrity check failed: wrong key or corrupted container")]
    Integrity,
}

/// AES key selecting AES-128, AES-192 or AES-256 by its length.
#[derive(Clone, PartialEq, Eq)]
pub struct ChallengeKey(Vec<u8>);

impl std::fmt::Debug for ChallengeKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ChallengeKey(AES-{})", self.0.len() * 8)
    }
}

impl ChallengeKey {
    pub fn new(key_bytes: &[u8]) -> Result<Self, CryptoError> {
        match key_bytes.len() {
            16 | 24 | 32 => Ok(Self(key_bytes.to_vec())),
            n => Err(CryptoError::BadKeyLength(n)),
        }
    }

    pub fn embedded() -> Self {
        Self::new(embedded::CHALLENGE_KEY).expect("build script validates the embedded key")
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub fn is_encrypted(bytes: &[u8]) -> bool {
    bytes.starts_with(MAGIC)
}

pub fn encrypt_challenge(plaintext: &[u8], key: &ChallengeKey) -> Vec<u8> {
    let mut nonce = [0u8; NONCE_LEN];
    OsRng.fill_bytes(&mut nonce);
    let mut out = Vec::with_capacity(HEADER_LEN + NONCE_LEN + plaintext.len() + TAG_LEN);
    out.extend_from_slice(MAGIC);
    out.push(key.len() as u8);
    let aad = out.clone();
    let payload = Payload { msg: plaintext, aad: &aad };
    let sealed = match key.len() {
        16 => Aes128Gcm::new_from_slice(&key.0).unwrap().encrypt(&nonce.into(), payload),
        24 => Aes192Gcm::new_from_slice(&key.0).unwrap().encrypt(&nonce.into(), payload),
        _ => Aes256Gcm::new_from_slice(&key.0).unwrap().encrypt(&nonce.into(), payload),
    }
    .expect("AES-GCM encryption does not fail for in-memory buffers");
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&sealed);
    out
}

pub fn decrypt_challenge(container: &[u8], key: &ChallengeKey) -> Result<Vec<u8>, CryptoError> {
    if container.len() < MAGIC.len() || &container[..MAGIC.len()] != MAGIC {
        return Err(CryptoError::BadMagic);
    }
    if container.len() < HEADER_LEN + NONCE_LEN + TAG_LEN {
        return Err(CryptoError::Truncated);
    }
    let found = container[MAGIC.len()] as usize;
    if found != key.len() {
        return Err(CryptoError::KeySizeMismatch {
            found,
            expected: key.len(),
        });
    }
    let (aad, rest) = container.split_at(HEADER_LEN);
    let (nonce, sealed) = rest.split_at(NONCE_LEN);
    let nonce = aes_gcm::Nonce::<U12>::from_slice(nonce);
    let payload = Payload { msg: sealed, aad };
    match key.len() {
        16 => Aes128Gcm::new_from_slice(&key.0).unwrap().decrypt(nonce, payload),
        24 => Aes192Gcm::new_from_slice(&key.0).unwrap().decrypt(nonce, payload),
        _ => Aes256Gcm::new_from_slice(&key.0).unwrap().decrypt(nonce, payload),
    }
    .map_err(|_| CryptoError::Integrity)
}
