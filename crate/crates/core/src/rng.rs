//! Seeded randomness plumbing.
//!
//! Every random decision in the crate funnels through one master seed
//! that is fanned out with a splitmix64 counter, so independent
//! consumers (schedules, negative samplers, initializers) draw from
//! decorrelated streams that reproduce exactly across runs and
//! platforms.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Salt namespaces for the seed splitter. Keeping them in one place
/// avoids accidental stream collisions between modules.
pub mod salt {
    pub const EMBED_INIT: u64 = 0x01;
    pub const SCHEDULE: u64 = 0x02;
    pub const NEGATIVES: u64 = 0x03;
    pub const DIVERSITY_INIT: u64 = 0x04;
    pub const DIVERSITY_PAIRS: u64 = 0x05;
    pub const DIVERSITY_EPOCH: u64 = 0x06;
    pub const SYNTHETIC: u64 = 0x07;
    pub const SPLIT: u64 = 0x08;
    pub const SIGMA_SAMPLE: u64 = 0x09;
    pub const BASELINE: u64 = 0x0a;
    pub const TREND: u64 = 0x0b;
    pub const VERIFY: u64 = 0x0c;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a ChaCha8 stream from a master seed and a salt path.
///
/// The same `(master, salts)` pair always yields the same stream; any
/// change to either yields an unrelated one.
pub fn derive_rng(master: u64, salts: &[u64]) -> ChaCha8Rng {
    let mut state = master ^ 0x6a09_e667_f3bc_c908;
    for &s in salts {
        state ^= splitmix64(&mut state) ^ s.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Standard normal draw via Box-Muller. Two uniforms per call; the
/// second variate is discarded to keep the stream layout simple.
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_is_deterministic() {
        let mut a = derive_rng(7, &[salt::SCHEDULE, 3]);
        let mut b = derive_rng(7, &[salt::SCHEDULE, 3]);
        let xs: Vec<u64> = (0..8).map(|_| a.gen()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.gen()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn salts_change_the_stream() {
        let mut a = derive_rng(7, &[salt::SCHEDULE, 3]);
        let mut b = derive_rng(7, &[salt::SCHEDULE, 4]);
        let xs: Vec<u64> = (0..8).map(|_| a.gen()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.gen()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn normal_moments_are_sane() {
        let mut rng = derive_rng(11, &[salt::EMBED_INIT]);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let x = standard_normal(&mut rng);
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }
}
