//! Records, datasets and ground-truth statistics.
//!
//! Keys are dense integers starting at 1. Real keys occupy `1..=d`; the
//! padding protocol adds dummy keys `d+1..=d+ℓ` which never appear in a
//! [`UserRecord`].

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KvPair {
    pub key: u32,
    pub value: f64,
}

impl KvPair {
    pub fn new(key: u32, value: f64) -> Self {
        Self { key, value }
    }
}

/// The pairs held by one user. Keys are pairwise distinct; the record may be empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pairs: Vec<KvPair>,
}

impl UserRecord {
    pub fn new(pairs: Vec<KvPair>) -> Result<Self> {
        for (i, p) in pairs.iter().enumerate() {
            if p.key == 0 {
                return Err(invalid("keys start at 1"));
            }
            if !(-1.0..=1.0).contains(&p.value) {
                return Err(invalid(format!(
                    "value {} of key {} outside [-1, 1]",
                    p.value, p.key
                )));
            }
            if pairs[..i].iter().any(|q| q.key == p.key) {
                return Err(invalid(format!("duplicate key {} in one record", p.key)));
            }
        }
        Ok(Self { pairs })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Shorthand for tests and examples: `UserRecord::from_pairs(&[(1, 0.5)])`.
    pub fn from_pairs(pairs: &[(u32, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(k, v)| KvPair::new(k, v)).collect())
    }

    pub fn pairs(&self) -> &[KvPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn value_of(&self, key: u32) -> Option<f64> {
        self.pairs.iter().find(|p| p.key == key).map(|p| p.value)
    }

    pub fn max_key(&self) -> u32 {
        self.pairs.iter().map(|p| p.key).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    users: Vec<UserRecord>,
    d: usize,
}

impl Dataset {
    pub fn new(users: Vec<UserRecord>, d: usize) -> Result<Self> {
        if users.is_empty() {
            return Err(invalid("a dataset needs at least one user"));
        }
        if d == 0 {
            return Err(invalid("key domain must be non-empty"));
        }
        if let Some(u) = users.iter().position(|u| u.max_key() as usize > d) {
            return Err(invalid(format!(
                "user {u} holds key {} outside 1..={d}",
                users[u].max_key()
            )));
        }
        Ok(Self { users, d })
    }

    pub fn users(&self) -> &[UserRecord] {
        &self.users
    }

    pub fn n(&self) -> usize {
        self.users.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn max_record_len(&self) -> usize {
        self.users.iter().map(UserRecord::len).max().unwrap_or(0)
    }

    pub fn total_pairs(&self) -> usize {
        self.users.iter().map(UserRecord::len).sum()
    }
}

/// Per-key frequency and value mean. `mean[k-1]` is `None` when no user holds `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueStats {
    pub freq: Vec<f64>,
    pub mean: Vec<Option<f64>>,
}

impl TrueStats {
    pub fn d(&self) -> usize {
        self.freq.len()
    }

    pub fn freq_of(&self, key: u32) -> f64 {
        self.freq[key as usize - 1]
    }

    pub fn mean_of(&self, key: u32) -> Option<f64> {
        self.mean[key as usize - 1]
    }
}

pub fn true_stats(data: &Dataset) -> TrueStats {
    let d = data.d();
    let mut count = vec![0u64; d];
    let mut sum = vec![0.0f64; d];
    for user in data.users() {
        for p in user.pairs() {
            let i = p.key as usize - 1;
            count[i] += 1;
            sum[i] += p.value;
        }
    }
    let n = data.n() as f64;
    let freq = count.iter().map(|&c| c as f64 / n).collect();
    let mean = count
        .iter()
        .zip(&sum)
        .map(|(&c, &s)| (c > 0).then(|| (s / c as f64).clamp(-1.0, 1.0)))
        .collect();
    TrueStats { freq, mean }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(users: &[&[(u32, f64)]], d: usize) -> Dataset {
        let users = users
            .iter()
            .map(|u| UserRecord::from_pairs(u).unwrap())
            .collect();
        Dataset::new(users, d).unwrap()
    }

    #[test]
    fn two_users_same_pair() {
        let t = true_stats(&ds(&[&[(1, 0.5)], &[(1, 0.5)]], 1));
        assert_eq!(t.freq, vec![1.0]);
        assert_eq!(t.mean, vec![Some(0.5)]);
    }

    #[test]
    fn symmetric_values_average_to_zero() {
        let t = true_stats(&ds(&[&[(1, 1.0)], &[(1, -1.0)], &[(2, 0.0)]], 2));
        assert!((t.freq[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((t.freq[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(t.mean, vec![Some(0.0), Some(0.0)]);
    }

    #[test]
    fn partial_possession() {
        let vals = [0.2, 0.4, -0.6, 0.8];
        let mut users: Vec<Vec<(u32, f64)>> = vals.iter().map(|&v| vec![(3, v)]).collect();
        users.extend((0..6).map(|_| vec![]));
        let refs: Vec<&[(u32, f64)]> = users.iter().map(Vec::as_slice).collect();
        let t = true_stats(&ds(&refs, 3));
        assert!((t.freq[2] - 0.4).abs() < 1e-15);
        assert!((t.mean[2].unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(t.freq[0], 0.0);
        assert_eq!(t.mean[0], None);
    }

    #[test]
    fn frequency_mass_counts_each_pair_once() {
        let data = ds(&[&[(1, 0.1), (2, 0.2)], &[(2, -0.3)], &[]], 4);
        let t = true_stats(&data);
        let total: f64 = t.freq.iter().sum();
        assert!((total - data.total_pairs() as f64 / data.n() as f64).abs() < 1e-15);
    }

    #[test]
    fn record_validation() {
        assert!(UserRecord::from_pairs(&[(1, 0.1), (1, 0.2)]).is_err());
        assert!(UserRecord::from_pairs(&[(1, 1.5)]).is_err());
        assert!(UserRecord::from_pairs(&[(0, 0.0)]).is_err());
        assert!(UserRecord::from_pairs(&[]).unwrap().is_empty());
        assert!(Dataset::new(vec![], 3).is_err());
        let r = UserRecord::from_pairs(&[(5, 0.0)]).unwrap();
        assert!(Dataset::new(vec![r], 4).is_err());
    }
}
