//! Named, independently seeded random streams.
//!
//! Every consumer of randomness (initialization, Turing-test pairing,
//! channel shuffles, fold assignment, batch order, phantoms) draws from its
//! own ChaCha stream derived from the run seed and a label, so changing one
//! consumer never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Mix a run seed with a stream label (FNV-1a over the label, then a
/// splitmix64 finalizer).
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, label: &str) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, label))
}

/// Serialized generator position: 32-byte key, stream id, word position.
pub fn save_state(rng: &Rng) -> Vec<u8> {
    let mut out = Vec::with_capacity(56);
    out.extend_from_slice(&rng.get_seed());
    out.extend_from_slice(&rng.get_stream().to_le_bytes());
    out.extend_from_slice(&rng.get_word_pos().to_le_bytes());
    out
}

pub fn restore_state(bytes: &[u8]) -> Option<Rng> {
    if bytes.len() != 56 {
        return None;
    }
    let mut key = [0u8; 32];
    key.copy_from_slice(&bytes[..32]);
    let stream = u64::from_le_bytes(bytes[32..40].try_into().ok()?);
    let pos = u128::from_le_bytes(bytes[40..56].try_into().ok()?);
    let mut rng = Rng::from_seed(key);
    rng.set_stream(stream);
    rng.set_word_pos(pos);
    Some(rng)
}
