use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::challenge::Level;

/// Picks one successor uniformly at random. `None` for a leaf.
pub fn select_next_level<'a, R: rand::Rng + ?Sized>(level: &'a Level, rng: &mut R) -> Option<&'a str> {
    level.next.choose(rng).map(String::as_str)
}

/// 64-bit FNV-1a. Stable across platforms and releases, unlike `DefaultHasher`.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Default session seed: fixed per (user, challenge) so a restarted session
/// walks the same branches and the stored progress stays on its path.
pub fn session_seed(user: &str, challenge: &str) -> u64 {
    let mut key = Vec::with_capacity(user.len() + challenge.len() + 1);
    key.extend_from_slice(user.as_bytes());
    key.push(0);
    key.extend_from_slice(challenge.as_bytes());
    fnv1a(&key)
}

/// Generator used when leaving `level`. Depends only on the session seed and
/// the level, so the branch taken never depends on how many ticks came before.
pub fn level_rng(seed: u64, level: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(level.as_bytes()))
}
