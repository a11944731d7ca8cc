//! Counter-keyed random streams.
//!
//! Every random quantity in a run is drawn from a stream identified by
//! `(master seed, label, sample index, domain)`. Labels are stored as reduced
//! fractions so that particle `i` of an `N`-particle system and particle `2i`
//! of a `2N`-particle system (both at label `i/N`) read the same stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A particle label in `[0, 1]`, kept as an exact reduced fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Label {
    num: u64,
    den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Label {
    /// `num / den`, reduced. Panics if `den == 0` or `num > den`.
    pub fn new(num: u64, den: u64) -> Self {
        assert!(den > 0 && num <= den, "label {num}/{den} outside [0,1]");
        let g = gcd(num, den).max(1);
        Label {
            num: num / g,
            den: den / g,
        }
    }

    /// Right endpoint `i/n` of the `i`-th cell (1-based).
    pub fn right_endpoint(i: usize, n: usize) -> Self {
        Label::new(i as u64, n as u64)
    }

    /// Midpoint `(a - 1/2)/n` of the `a`-th cell (1-based).
    pub fn midpoint(a: usize, n: usize) -> Self {
        Label::new(2 * a as u64 - 1, 2 * n as u64)
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn parts(self) -> (u64, u64) {
        (self.num, self.den)
    }
}

/// What a stream is used for. Distinct domains never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Brownian = 1,
    Initial = 2,
    Exogenous = 3,
    Resample = 4,
    Probe = 5,
    Replication = 6,
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fold(words: &[u64]) -> [u8; 32] {
    let mut state = 0x6A09_E667_F3BC_C908u64;
    for &w in words {
        state = mix64(state ^ w);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        state = mix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    seed
}

/// Stream for one `(label, sample)` pair in a given domain.
pub fn stream(seed: u64, label: Label, sample: u64, domain: Domain) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(fold(&[seed, domain as u64, label.num, label.den, sample]))
}

/// Stream keyed by plain integers, for things that have no label
/// (resampling, probes, restarts).
pub fn aux_stream(seed: u64, domain: Domain, ids: &[u64]) -> ChaCha8Rng {
    let mut words = vec![seed, domain as u64];
    words.extend_from_slice(ids);
    ChaCha8Rng::from_seed(fold(&words))
}

/// Seed of replication `r` under master seed `seed`.
pub fn replication_seed(seed: u64, r: u64) -> u64 {
    mix64(mix64(seed ^ (Domain::Replication as u64).rotate_left(32)) ^ r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn labels_reduce() {
        assert_eq!(Label::right_endpoint(2, 8), Label::right_endpoint(1, 4));
        assert_eq!(Label::right_endpoint(4, 4).parts(), (1, 1));
        assert_eq!(Label::midpoint(1, 2).value(), 0.25);
        assert_eq!(Label::right_endpoint(0, 5).parts(), (0, 1));
    }

    #[test]
    fn coinciding_labels_share_streams() {
        let a: f64 = stream(7, Label::right_endpoint(3, 4), 0, Domain::Brownian).gen();
        let b: f64 = stream(7, Label::right_endpoint(6, 8), 0, Domain::Brownian).gen();
        let c: f64 = stream(7, Label::right_endpoint(5, 8), 0, Domain::Brownian).gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn domains_and_samples_separate() {
        let l = Label::right_endpoint(1, 2);
        let a: u64 = stream(1, l, 0, Domain::Brownian).gen();
        let b: u64 = stream(1, l, 0, Domain::Initial).gen();
        let c: u64 = stream(1, l, 1, Domain::Brownian).gen();
        assert!(a != b && a != c && b != c);
    }
}
