//! Deterministic seed derivation and hash-based value noise.
//!
//! Every random draw in the crate flows from a caller seed through
//! [`splitmix64`]-style mixing into either a ChaCha stream (bulk sampling)
//! or a counter-based hash (noise fields). Derived seeds depend only on the
//! inputs, never on call order or thread count, which is what makes whole
//! pipeline runs reproducible byte for byte.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// The splitmix64 finalizer: a cheap, well-mixed u64 -> u64 bijection.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Derive an independent stream seed from a base seed and a label such as
/// an epoch, sample index, or purpose tag. Mixing is asymmetric in the
/// arguments, so `mix(a, b) != mix(b, a)` in general.
pub fn mix(seed: u64, label: u64) -> u64 {
    splitmix64(seed ^ splitmix64(label.wrapping_add(0xA5A5_A5A5_5A5A_5A5A)))
}

/// Three-way derivation for (seed, epoch, sample)-style streams.
pub fn mix3(seed: u64, a: u64, b: u64) -> u64 {
    mix(mix(seed, a), b)
}

/// Seeded ChaCha stream for bulk sampling (shuffles, parameter init).
pub fn chacha(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Hash a lattice point of a noise octave to a uniform value in [0, 1).
fn lattice_value(seed: u64, octave: u32, xi: i64, yi: i64) -> f64 {
    let h = splitmix64(
        seed ^ splitmix64((octave as u64) << 48 ^ (xi as u64).wrapping_mul(0x8DA6_B343))
            ^ splitmix64((yi as u64).wrapping_mul(0xD816_3841)),
    );
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Fractal value noise in [0, 1]: `octaves` layers of smoothly interpolated
/// lattice hashes, each octave at twice the frequency and `persistence`
/// times the amplitude of the previous one. `cell` is the base lattice
/// spacing in pixels. Pure function of its arguments.
pub fn value_noise(seed: u64, x: f64, y: f64, cell: f64, octaves: u32, persistence: f64) -> f64 {
    debug_assert!(octaves >= 1 && cell > 0.0);
    let mut total = 0.0;
    let mut amplitude = 1.0;
    let mut norm = 0.0;
    let mut freq = 1.0 / cell;
    for o in 0..octaves {
        let fx = x * freq;
        let fy = y * freq;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let tx = smoothstep(fx - x0);
        let ty = smoothstep(fy - y0);
        let (xi, yi) = (x0 as i64, y0 as i64);
        let v00 = lattice_value(seed, o, xi, yi);
        let v10 = lattice_value(seed, o, xi + 1, yi);
        let v01 = lattice_value(seed, o, xi, yi + 1);
        let v11 = lattice_value(seed, o, xi + 1, yi + 1);
        let top = v00 + (v10 - v00) * tx;
        let bot = v01 + (v11 - v01) * tx;
        total += amplitude * (top + (bot - top) * ty);
        norm += amplitude;
        amplitude *= persistence;
        freq *= 2.0;
    }
    total / norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn splitmix_reference_values() {
        // The reference splitmix64 generator seeded with 0 emits
        // 0xE220A8397B1DCDAF then 0x6E789E6AA1B965F4; our function is its
        // finalizer applied to the advanced state, so feeding consecutive
        // states reproduces the published sequence.
        const STEP: u64 = 0x9E3779B97F4A7C15;
        assert_eq!(splitmix64(0), 0xE220A8397B1DCDAF);
        assert_eq!(splitmix64(STEP), 0x6E789E6AA1B965F4);
        assert_eq!(splitmix64(STEP.wrapping_mul(2)), 0x06C45D188009454F);
    }

    #[test]
    fn mix_is_order_sensitive_and_deterministic() {
        assert_eq!(mix(42, 7), mix(42, 7));
        assert_ne!(mix(42, 7), mix(7, 42));
        assert_ne!(mix3(1, 2, 3), mix3(1, 3, 2));
    }

    #[test]
    fn chacha_streams_are_reproducible() {
        let mut a = chacha(99);
        let mut b = chacha(99);
        for _ in 0..16 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = chacha(100);
        assert_ne!(chacha(99).next_u64(), c.next_u64());
    }

    #[test]
    fn noise_is_deterministic_seeded_and_bounded() {
        for &(x, y) in &[(0.0, 0.0), (3.7, 12.2), (100.1, 0.5)] {
            let a = value_noise(5, x, y, 8.0, 4, 0.5);
            let b = value_noise(5, x, y, 8.0, 4, 0.5);
            assert_eq!(a, b);
            assert!((0.0..=1.0).contains(&a));
            let other = value_noise(6, x, y, 8.0, 4, 0.5);
            assert_ne!(a, other);
        }
    }

    #[test]
    fn noise_is_spatially_smooth() {
        // Neighboring pixels differ far less than distant ones on average.
        let mut near = 0.0;
        let mut far = 0.0;
        let n = 200;
        for i in 0..n {
            let x = i as f64 * 0.37;
            let y = i as f64 * 0.61;
            let v = value_noise(11, x, y, 16.0, 4, 0.5);
            near += (value_noise(11, x + 1.0, y, 16.0, 4, 0.5) - v).abs();
            far += (value_noise(11, x + 40.0, y + 40.0, 16.0, 4, 0.5) - v).abs();
        }
        assert!(near / n as f64 * 3.0 < far / n as f64, "near {} far {}", near, far);
    }
}
