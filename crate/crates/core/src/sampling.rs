//! Padding-and-sampling for key-value records.
//!
//! A record is conceptually padded to `ℓ` pairs with dummy keys
//! `d+1..=d+ℓ` carrying value 0, and one pair is drawn. A held pair is
//! therefore picked with probability `1 / max{|S|, ℓ}`. The drawn value is
//! then discretized to `±1` with `P(+1) = (1 + v*) / 2`, which keeps it
//! unbiased.

use std::collections::BTreeMap;

use rand::Rng;

use crate::model::{KvPair, UserRecord};

/// Probability that a held (non-dummy) pair is sampled, `|S| / max{|S|, ℓ}`.
pub fn real_pair_rate(record_len: usize, ell: usize) -> f64 {
    if record_len == 0 {
        0.0
    } else {
        record_len as f64 / record_len.max(ell) as f64
    }
}

/// Draw a key and its raw value `v*` (0 for dummy keys).
pub fn sample_raw<R: Rng + ?Sized>(record: &UserRecord, ell: usize, d: usize, rng: &mut R) -> (u32, f64) {
    let s = record.len();
    let slots = s.max(ell);
    // one uniform draw over max{|S|, ℓ} slots covers both branches
    let slot = rng.random_range(0..slots);
    if slot < s {
        let p = record.pairs()[slot];
        (p.key, p.value)
    } else {
        let dummy = rng.random_range(0..ell);
        ((d + 1 + dummy) as u32, 0.0)
    }
}

/// `+1` with probability `(1 + v) / 2`, otherwise `-1`.
pub fn discretize<R: Rng + ?Sized>(value: f64, rng: &mut R) -> i8 {
    if rng.random::<f64>() < (1.0 + value) / 2.0 {
        1
    } else {
        -1
    }
}

/// Sample one pair and discretize its value.
pub fn pad_and_sample<R: Rng + ?Sized>(record: &UserRecord, ell: usize, d: usize, rng: &mut R) -> KvPair {
    let (key, raw) = sample_raw(record, ell, d, rng);
    KvPair::new(key, f64::from(discretize(raw, rng)))
}

/// Every key that can be sampled, with its raw value and sampling weight.
pub fn sampling_weights(record: &UserRecord, ell: usize, d: usize) -> Vec<(u32, f64, f64)> {
    let s = record.len();
    let eta = real_pair_rate(s, ell);
    let mut out = Vec::with_capacity(s + ell);
    for p in record.pairs() {
        out.push((p.key, p.value, eta / s as f64));
    }
    if eta < 1.0 {
        let w = (1.0 - eta) / ell as f64;
        out.extend((1..=ell).map(|j| ((d + j) as u32, 0.0, w)));
    }
    out
}

/// Exact distribution of `(key, ±1)` outcomes of [`pad_and_sample`].
pub fn sample_distribution(record: &UserRecord, ell: usize, d: usize) -> BTreeMap<(u32, i8), f64> {
    let mut dist = BTreeMap::new();
    for (key, v, w) in sampling_weights(record, ell, d) {
        let up = w * (1.0 + v) / 2.0;
        let down = w * (1.0 - v) / 2.0;
        if up > 0.0 {
            *dist.entry((key, 1)).or_insert(0.0) += up;
        }
        if down > 0.0 {
            *dist.entry((key, -1)).or_insert(0.0) += down;
        }
    }
    dist
}
