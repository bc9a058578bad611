//! Progress persistence and challenge-file encryption.
//!
//! None of this is real security. The progress hash only stops a learner
//! from editing a plain level name in a dotfile, and the challenge key ships
//! inside the binary. The aim is to make reverse-engineering an assignment
//! more work than solving it.

mod crypto;
mod progress;

pub use crypto::{decrypt_challenge, encrypt_challenge, is_encrypted, ChallengeKey, CryptoError, MAGIC};
pub use progress::{
    compute_progress_hash, finished_marker, load_progress, progress_path, resolve_level_from_hash,
    save_progress, ProgressError, ProgressRecord, SaltTriple,
};

/// Values compiled in from the build configuration (see `build.rs`).
pub mod embedded {
    include!(concat!(env!("OUT_DIR"), "/embedded.rs"));
}
