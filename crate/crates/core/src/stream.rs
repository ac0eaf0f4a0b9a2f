//! Counter-based derivation of independent random-number streams.
//!
//! Every random draw in this crate comes from a `ChaCha8Rng` whose seed is
//! derived by hashing a base seed together with a fixed label path
//! (e.g. `(seed, scenario, condition, replication, subject)`). Streams are
//! therefore independent of execution order and thread schedule: the same
//! labels always produce the same generator.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Labels for top-level stream partitions.
pub mod tag {
    pub const RCT: u64 = 0x01;
    pub const EXTERNAL: u64 = 0x02;
    pub const BOOTSTRAP: u64 = 0x03;
    pub const STUDY: u64 = 0x04;
}

/// A derivable stream key. `derive` folds labels into the key with a
/// splitmix64-style finalizer; `rng` instantiates the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    state: u64,
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        Self { state: mix64(seed) }
    }

    /// Child key for a label path. Labels are order-sensitive.
    pub fn derive(&self, labels: &[u64]) -> Self {
        let mut state = self.state;
        for &label in labels {
            state = mix64(state ^ mix64(label));
        }
        Self { state }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_labels_same_stream() {
        let a = StreamKey::new(7).derive(&[tag::RCT, 42]);
        let b = StreamKey::new(7).derive(&[tag::RCT, 42]);
        let xs: Vec<f64> = a.rng().random_iter().take(8).collect();
        let ys: Vec<f64> = b.rng().random_iter().take(8).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn different_labels_diverge() {
        let base = StreamKey::new(7);
        let a: f64 = base.derive(&[tag::RCT, 1]).rng().random();
        let b: f64 = base.derive(&[tag::RCT, 2]).rng().random();
        let c: f64 = base.derive(&[tag::EXTERNAL, 1]).rng().random();
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn label_order_matters() {
        let base = StreamKey::new(9);
        assert_ne!(base.derive(&[1, 2]), base.derive(&[2, 1]));
    }
}
