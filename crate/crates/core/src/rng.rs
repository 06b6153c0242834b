//! Counter-based, seed-addressed random draws.
//!
//! Training-time noise (Gumbel perturbations, ensemble weight samples,
//! per-example encoding seeds) is addressed by a key rather than drawn from a
//! sequential stream, so results do not depend on scheduling or worker count.

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    z
}

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Hash a seed plus key words into a uniformly mixed u64.
pub fn keyed_u64(seed: u64, words: &[u64]) -> u64 {
    let mut h = mix64(seed.wrapping_add(GAMMA));
    for &w in words {
        h = mix64(h.wrapping_add(GAMMA).wrapping_add(w));
    }
    h
}

/// Uniform draw in [0, 1) addressed by (seed, words).
pub fn keyed_uniform(seed: u64, words: &[u64]) -> f64 {
    (keyed_u64(seed, words) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Derive a child seed for a named stream.
pub fn derive_seed(seed: u64, words: &[u64]) -> u64 {
    keyed_u64(seed, words)
}

/// Standard normal draw addressed by (seed, words), via Box-Muller on two
/// derived uniforms. The first uniform is reflected into (0, 1] so the log
/// stays finite.
pub fn keyed_normal(seed: u64, words: &[u64]) -> f64 {
    let mut w = Vec::with_capacity(words.len() + 1);
    w.extend_from_slice(words);
    w.push(0);
    let u1 = 1.0 - keyed_uniform(seed, &w);
    *w.last_mut().expect("nonempty") = 1;
    let u2 = keyed_uniform(seed, &w);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

// Stream tags keep independent uses of the same base seed from colliding.
pub mod stream {
    pub const READOUT: u64 = 1;
    pub const WEIGHT_INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const GUMBEL: u64 = 4;
    pub const ENSEMBLE: u64 = 5;
    pub const ENCODE: u64 = 6;
    pub const GRID: u64 = 7;
}
