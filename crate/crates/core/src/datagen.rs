//! Synthetic datasets and rating-file ingestion.
//!
//! Synthetic users hold `pairs_per_user` distinct keys. Every user holding
//! key `k` gets the key's generated mean `m*_k` as its value (optionally
//! jittered), so the ground truth equals the generator's parameters.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{true_stats, Dataset, KvPair, TrueStats, UserRecord};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyDistribution {
    Uniform,
    Gaussian,
}

impl std::str::FromStr for KeyDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Self::Uniform),
            "gaussian" | "normal" => Ok(Self::Gaussian),
            other => Err(invalid(format!("unknown distribution `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub d: usize,
    pub distribution: KeyDistribution,
    pub sigma_key: f64,
    pub sigma_mean: f64,
    pub pairs_per_user: usize,
    pub seed: u64,
    /// Half-width of uniform jitter added to each user's value; 0 keeps values exact.
    pub value_noise: f64,
}

impl SynthConfig {
    pub fn uniform(n: usize, d: usize, seed: u64) -> Self {
        Self {
            n,
            d,
            distribution: KeyDistribution::Uniform,
            sigma_key: 50.0,
            sigma_mean: 1.0,
            pairs_per_user: 1,
            seed,
            value_noise: 0.0,
        }
    }

    pub fn gaussian(n: usize, d: usize, seed: u64) -> Self {
        Self { distribution: KeyDistribution::Gaussian, ..Self::uniform(n, d, seed) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n must be at least 1"));
        }
        if self.d < 2 {
            return Err(invalid(format!("d must be at least 2, got {}", self.d)));
        }
        if !(self.sigma_key > 0.0 && self.sigma_mean > 0.0) {
            return Err(invalid("sigmas must be positive"));
        }
        if self.pairs_per_user == 0 || self.pairs_per_user > self.d {
            return Err(invalid(format!(
                "pairs_per_user must lie in 1..={}, got {}",
                self.d, self.pairs_per_user
            )));
        }
        if !(0.0..=1.0).contains(&self.value_noise) {
            return Err(invalid("value_noise must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// A generated dataset with its ground truth and the per-key generator means.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub data: Dataset,
    pub truth: TrueStats,
    pub key_means: Vec<f64>,
}

/// Per-key means: `U[-1, 1]` for uniform data, `N(0, σ_mean)` redrawn into `[-1, 1]` otherwise.
fn key_means(cfg: &SynthConfig) -> Vec<f64> {
    let mut rng = stream(cfg.seed, Purpose::DataMeans, 0);
    match cfg.distribution {
        KeyDistribution::Uniform => (0..cfg.d).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        KeyDistribution::Gaussian => {
            let normal = Normal::new(0.0, cfg.sigma_mean).expect("positive sigma");
            (0..cfg.d)
                .map(|_| loop {
                    let x: f64 = normal.sample(&mut rng);
                    if (-1.0..=1.0).contains(&x) {
                        break x;
                    }
                })
                .collect()
        }
    }
}

/// Centered Gaussian over `1..=d`: `round(z)` must land in `[-d/2, d - d/2 - 1]`, key `= round(z) + d/2 + 1`.
fn gaussian_key<R: Rng + ?Sized>(normal: &Normal<f64>, d: usize, rng: &mut R) -> u32 {
    let half = (d / 2) as i64;
    let lo = -half;
    let hi = d as i64 - half - 1;
    loop {
        let z = normal.sample(rng).round();
        if z >= lo as f64 && z <= hi as f64 {
            return (z as i64 + half + 1) as u32;
        }
    }
}

pub fn gen_synthetic(cfg: &SynthConfig) -> Result<Synthetic> {
    cfg.validate()?;
    let means = key_means(cfg);
    let normal = Normal::new(0.0, cfg.sigma_key).expect("positive sigma");
    let users = (0..cfg.n)
        .map(|u| {
            let mut rng = stream(cfg.seed, Purpose::DataKeys, u as u64);
            let mut pairs: Vec<KvPair> = Vec::with_capacity(cfg.pairs_per_user);
            while pairs.len() < cfg.pairs_per_user {
                let key = match cfg.distribution {
                    KeyDistribution::Uniform => rng.random_range(1..=cfg.d as u32),
                    KeyDistribution::Gaussian => gaussian_key(&normal, cfg.d, &mut rng),
                };
                if pairs.iter().any(|p| p.key == key) {
                    continue;
                }
                let mut value = means[key as usize - 1];
                if cfg.value_noise > 0.0 {
                    value = (value + rng.random_range(-cfg.value_noise..=cfg.value_noise)).clamp(-1.0, 1.0);
                }
                pairs.push(KvPair::new(key, value));
            }
            UserRecord::new(pairs)
        })
        .collect::<Result<Vec<_>>>()?;
    let data = Dataset::new(users, cfg.d)?;
    let mut truth = true_stats(&data);
    if cfg.value_noise == 0.0 {
        // exact generator means rather than re-averaged floats
        for (m, &g) in truth.mean.iter_mut().zip(&means) {
            if m.is_some() {
                *m = Some(g);
            }
        }
    }
    Ok(Synthetic { data, truth, key_means: means })
}

/// Linear map of a rating from `[min, max]` onto `[-1, 1]`.
pub fn normalize_rating(v: f64, min: f64, max: f64) -> f64 {
    (2.0 * (v - min) / (max - min) - 1.0).clamp(-1.0, 1.0)
}

/// A loaded rating file with the original identifiers of the encoded users and keys.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub data: Dataset,
    pub user_ids: Vec<String>,
    pub key_ids: Vec<String>,
}

pub fn load_csv(path: impl AsRef<Path>, rating_min: f64, rating_max: f64) -> Result<Loaded> {
    let file = std::fs::File::open(path)?;
    read_ratings(std::io::BufReader::new(file), rating_min, rating_max)
}

/// Parse header-less `user_id,key,value` lines. Users and keys are numbered
/// in order of first appearance; repeated `(user, key)` ratings are averaged.
pub fn read_ratings<R: BufRead>(reader: R, rating_min: f64, rating_max: f64) -> Result<Loaded> {
    if rating_min.is_nan() || rating_max.is_nan() || rating_min >= rating_max {
        return Err(invalid(format!("rating range [{rating_min}, {rating_max}] is empty")));
    }
    let mut user_index: HashMap<String, usize> = HashMap::new();
    let mut key_index: HashMap<String, u32> = HashMap::new();
    let mut user_ids = Vec::new();
    let mut key_ids = Vec::new();
    // per user: key -> (sum, count)
    let mut sums: Vec<Vec<(u32, f64, u32)>> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let value: f64 = fields[2].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("value `{}` is not a number", fields[2]),
        })?;
        if !(value >= rating_min && value <= rating_max) {
            return Err(Error::Range { line: line_no, value, min: rating_min, max: rating_max });
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::Parse { line: line_no, message: "empty identifier".into() });
        }
        let u = *user_index.entry(fields[0].to_string()).or_insert_with(|| {
            user_ids.push(fields[0].to_string());
            sums.push(Vec::new());
            user_ids.len() - 1
        });
        let k = *key_index.entry(fields[1].to_string()).or_insert_with(|| {
            key_ids.push(fields[1].to_string());
            key_ids.len() as u32
        });
        let v = normalize_rating(value, rating_min, rating_max);
        match sums[u].iter_mut().find(|e| e.0 == k) {
            Some(e) => {
                e.1 += v;
                e.2 += 1;
            }
            None => sums[u].push((k, v, 1)),
        }
    }
    if user_ids.is_empty() {
        return Err(invalid("rating file holds no records"));
    }
    let users = sums
        .into_iter()
        .map(|s| {
            UserRecord::new(
                s.into_iter()
                    .map(|(k, sum, c)| KvPair::new(k, (sum / f64::from(c)).clamp(-1.0, 1.0)))
                    .collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let d = key_ids.len();
    Ok(Loaded { data: Dataset::new(users, d)?, user_ids, key_ids })
}
