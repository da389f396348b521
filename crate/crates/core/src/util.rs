//! Small shared helpers: stable hashing, seed derivation, sampling.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// FNV-1a over a byte slice. Stable across platforms and releases, which is
/// what vocabulary fingerprints and config hashes need.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Running FNV-1a hasher for incremental input.
pub struct Fnv1a(u64);

impl Fnv1a {
    pub fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn update_u64(&mut self, v: u64) {
        self.update(&v.to_le_bytes());
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv1a {
    fn default() -> Self {
        Self::new()
    }
}

/// Derives an independent seed from a root seed and a label, so that every
/// stage and every per-item RNG stream is a pure function of the experiment
/// seed.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut h = Fnv1a::new();
    h.update_u64(root);
    h.update(label.as_bytes());
    h.finish()
}

/// Seed derivation with an index, for per-item streams.
pub fn derive_seed_indexed(root: u64, label: &str, index: u64) -> u64 {
    let mut h = Fnv1a::new();
    h.update_u64(root);
    h.update(label.as_bytes());
    h.update_u64(index);
    h.finish()
}

/// The deterministic RNG used throughout. ChaCha keeps streams identical
/// across platforms for a fixed seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal draw via Box-Muller; avoids pulling in a distributions
/// crate for one function.
pub fn sample_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u1: f64 = rng.random::<f64>();
        let u2: f64 = rng.random::<f64>();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

/// Nearest-rank percentile of a sample; `q` in [0,1]. Panics on empty input.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample value"));
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_known_vector() {
        // FNV-1a("") is the offset basis; "a" is a published test vector.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn derived_seeds_differ_by_label_and_index() {
        assert_ne!(derive_seed(1, "corpus"), derive_seed(1, "tasks"));
        assert_ne!(derive_seed_indexed(1, "x", 0), derive_seed_indexed(1, "x", 1));
        assert_eq!(derive_seed(7, "corpus"), derive_seed(7, "corpus"));
    }

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(percentile(&v, 0.95), 95.0);
        assert_eq!(percentile(&v, 1.0), 100.0);
        assert_eq!(percentile(&[3.0], 0.95), 3.0);
    }

    #[test]
    fn normal_sampler_moments() {
        let mut rng = rng_from_seed(11);
        let n = 20_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = sample_normal(&mut rng);
            s += x;
            s2 += x * x;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
