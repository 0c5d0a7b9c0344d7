//! Small numeric helpers: an order-independent label accumulator, percentile
//! intervals, and seed derivation.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Sums values in `[0, 1]` so that the result depends only on the multiset of
/// values added, never on the order they arrived in.
///
/// Exact 0s and 1s are counted; anything else is tallied per bit pattern and
/// summed in ascending order at the end.
#[derive(Debug, Clone, Default)]
pub struct LabelSum {
    count: u64,
    ones: u64,
    others: BTreeMap<u64, u64>,
}

impl LabelSum {
    #[inline]
    pub fn add(&mut self, value: f64) {
        self.count += 1;
        if value == 1.0 {
            self.ones += 1;
        } else if value != 0.0 {
            *self.others.entry(value.to_bits()).or_insert(0) += 1;
        }
    }

    pub fn merge(&mut self, other: &LabelSum) {
        self.count += other.count;
        self.ones += other.ones;
        for (&bits, &c) in &other.others {
            *self.others.entry(bits).or_insert(0) += c;
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sum(&self) -> f64 {
        // Non-negative floats order the same as their bit patterns.
        self.others.iter().fold(self.ones as f64, |acc, (&bits, &c)| {
            acc + f64::from_bits(bits) * c as f64
        })
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.count as f64
    }
}

/// Linear-interpolated quantile of an ascending slice (Hyndman-Fan type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Central percentile interval at `confidence` over bootstrap replicates.
pub fn percentile_interval(mut replicates: Vec<f64>, confidence: f64) -> (f64, f64) {
    replicates.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence) / 2.0;
    (
        quantile_sorted(&replicates, tail),
        quantile_sorted(&replicates, 1.0 - tail),
    )
}

/// Derives an independent child seed from `seed` and a label. Stable across
/// platforms and releases.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Hex sha256 of arbitrary bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_sum_is_order_independent() {
        let vals = [0.1, 0.7, 1.0, 0.0, 0.3, 0.1, 1.0, 0.25];
        let mut fwd = LabelSum::default();
        vals.iter().for_each(|&v| fwd.add(v));
        let mut rev = LabelSum::default();
        vals.iter().rev().for_each(|&v| rev.add(v));
        assert_eq!(fwd.sum().to_bits(), rev.sum().to_bits());
        assert_eq!(fwd.count(), 8);

        let mut left = LabelSum::default();
        vals[..3].iter().for_each(|&v| left.add(v));
        let mut right = LabelSum::default();
        vals[3..].iter().for_each(|&v| right.add(v));
        left.merge(&right);
        assert_eq!(left.sum().to_bits(), fwd.sum().to_bits());
    }

    #[test]
    fn quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 0.5), 3.0);
        assert_eq!(quantile_sorted(&s, 1.0), 5.0);
        assert_eq!(quantile_sorted(&s, 0.125), 1.5);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, "pairs"), derive_seed(1, "online"));
        assert_ne!(derive_seed(1, "pairs"), derive_seed(2, "pairs"));
        assert_eq!(derive_seed(1, "pairs"), derive_seed(1, "pairs"));
    }
}
