//! Server-side aggregation and estimation.
//!
//! For every key the server tallies `n1` (reports supporting `⟨k, +1⟩`)
//! and `n2` (supporting `⟨k, -1⟩`). The frequency estimator rescales
//! `n1 + n2` by the key-perturbation probabilities and the padding length.
//! The corrected pipeline clips the frequency into `[1/n, 1]`, inverts the
//! 2×2 perturbation map to recover the sampled `(+1, -1)` counts, clips
//! those into `[0, n·f̂/ℓ]` and takes their normalized difference as the
//! mean, which therefore stays inside `[-1, 1]`.

use serde::{Deserialize, Serialize};

use crate::budget::PerturbProbs;
use crate::error::{invalid, Error, Result};
use crate::mechanisms::{privkv_keep_prob, GrrReport, PrivKvReport, Report, SparseUeReport, UeReport};
use crate::model::TrueStats;

const DEGENERATE_TOL: f64 = 1e-15;

/// Per-key `(n1, n2)` tallies over the padded domain `1..=d'`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportCounts {
    pub d: usize,
    pub n: u64,
    pub n1: Vec<u64>,
    pub n2: Vec<u64>,
}

impl SupportCounts {
    pub fn new(d: usize, d_prime: usize) -> Self {
        Self { d, n: 0, n1: vec![0; d_prime], n2: vec![0; d_prime] }
    }

    pub fn d_prime(&self) -> usize {
        self.n1.len()
    }

    pub fn get(&self, key: u32) -> (u64, u64) {
        let i = key as usize - 1;
        (self.n1[i], self.n2[i])
    }

    /// Tallies of the dummy keys `d+1..=d'`; diagnostics only.
    pub fn dummy_counts(&self) -> (&[u64], &[u64]) {
        (&self.n1[self.d..], &self.n2[self.d..])
    }

    fn bump(&mut self, key: u32, sign: i8) {
        let i = key as usize - 1;
        if sign > 0 {
            self.n1[i] += 1;
        } else if sign < 0 {
            self.n2[i] += 1;
        }
    }

    pub fn add_ue(&mut self, report: &UeReport) {
        debug_assert_eq!(report.d_prime(), self.d_prime());
        for (i, &s) in report.bits.iter().enumerate() {
            self.bump(i as u32 + 1, s);
        }
        self.n += 1;
    }

    pub fn add_ue_sparse(&mut self, report: &SparseUeReport) {
        debug_assert_eq!(report.d_prime, self.d_prime());
        for &(k, s) in &report.entries {
            self.bump(k, s);
        }
        self.n += 1;
    }

    pub fn add_grr(&mut self, report: &GrrReport) {
        self.bump(report.key, report.value);
        self.n += 1;
    }

    /// Combine tallies of two disjoint groups of users.
    pub fn merge(&mut self, other: &SupportCounts) -> Result<()> {
        if self.d != other.d || self.d_prime() != other.d_prime() {
            return Err(invalid("cannot merge counts over different domains"));
        }
        self.n += other.n;
        for (x, y) in self.n1.iter_mut().zip(&other.n1) {
            *x += y;
        }
        for (x, y) in self.n2.iter_mut().zip(&other.n2) {
            *x += y;
        }
        Ok(())
    }
}

/// Tally unary-encoding or randomized-response reports.
pub fn aggregate(reports: &[Report], d: usize, d_prime: usize) -> Result<SupportCounts> {
    let mut counts = SupportCounts::new(d, d_prime);
    let kind = match reports.first() {
        Some(r) => r.kind(),
        None => return Ok(counts),
    };
    for r in reports {
        if r.kind() != kind {
            return Err(Error::MixedReports);
        }
        match r {
            Report::Ue(y) => {
                if y.d_prime() != d_prime {
                    return Err(invalid(format!(
                        "unary report of length {} in a domain of size {d_prime}",
                        y.d_prime()
                    )));
                }
                counts.add_ue(y);
            }
            Report::Grr(y) => {
                if y.key == 0 || y.key as usize > d_prime {
                    return Err(invalid(format!("report key {} outside 1..={d_prime}", y.key)));
                }
                counts.add_grr(y);
            }
            Report::PrivKv(_) => {
                return Err(invalid("PrivKV reports are tallied with aggregate_privkv"));
            }
        }
    }
    Ok(counts)
}

fn check_frequency_probs(probs: &PerturbProbs) -> Result<()> {
    if probs.a - probs.b <= DEGENERATE_TOL {
        return Err(Error::Degenerate(format!("a = b = {}", probs.a)));
    }
    Ok(())
}

/// `f̂ = ((n1+n2)/n − b)/(a − b) · ℓ` for the real keys `1..=d`; may fall outside `[0, 1]`.
pub fn estimate_frequency(counts: &SupportCounts, probs: &PerturbProbs, ell: usize) -> Result<Vec<f64>> {
    check_frequency_probs(probs)?;
    if counts.n == 0 {
        return Err(invalid("no reports"));
    }
    let n = counts.n as f64;
    Ok((0..counts.d)
        .map(|i| raw_frequency((counts.n1[i] + counts.n2[i]) as f64, n, probs, ell))
        .collect())
}

fn raw_frequency(support: f64, n: f64, probs: &PerturbProbs, ell: usize) -> f64 {
    (support / n - probs.b) / (probs.a - probs.b) * ell as f64
}

/// `m̂ = (n1 − n2)(a − b) / (a(2p − 1)(n1 + n2 − nb))`; may fall outside `[-1, 1]`,
/// and is NaN when `n1 + n2 = nb` exactly.
pub fn estimate_mean_baseline(counts: &SupportCounts, probs: &PerturbProbs, _ell: usize) -> Result<Vec<f64>> {
    check_frequency_probs(probs)?;
    check_value_probs(probs)?;
    let n = counts.n as f64;
    Ok((0..counts.d)
        .map(|i| raw_mean(counts.n1[i] as f64, counts.n2[i] as f64, n, probs))
        .collect())
}

fn check_value_probs(probs: &PerturbProbs) -> Result<()> {
    if 2.0 * probs.p - 1.0 <= DEGENERATE_TOL {
        return Err(Error::Degenerate("p = 1/2 carries no value information".into()));
    }
    Ok(())
}

fn raw_mean(n1: f64, n2: f64, n: f64, probs: &PerturbProbs) -> f64 {
    let PerturbProbs { a, b, p } = *probs;
    let den = a * (2.0 * p - 1.0) * (n1 + n2 - n * b);
    if den == 0.0 {
        return f64::NAN;
    }
    (n1 - n2) * (a - b) / den
}

/// Unbiased estimates of the sampled `(⟨k,+1⟩, ⟨k,-1⟩)` counts from observed `(n1, n2)`.
pub fn calibrate_pair(n1: f64, n2: f64, n: f64, probs: &PerturbProbs) -> Result<(f64, f64)> {
    let PerturbProbs { a, b, p } = *probs;
    let det = a * (a - b) * (2.0 * p - 1.0);
    if det <= DEGENERATE_TOL {
        return Err(Error::Degenerate(format!("calibration matrix determinant {det}")));
    }
    let keep = a * p - b / 2.0;
    let flip = a * (1.0 - p) - b / 2.0;
    let x1 = n1 - n * b / 2.0;
    let x2 = n2 - n * b / 2.0;
    // keep² − flip² factors as a(a−b)(2p−1)
    Ok(((keep * x1 - flip * x2) / det, (keep * x2 - flip * x1) / det))
}

/// [`calibrate_pair`] for every real key.
pub fn calibrate_counts(counts: &SupportCounts, probs: &PerturbProbs) -> Result<Vec<(f64, f64)>> {
    let n = counts.n as f64;
    (0..counts.d)
        .map(|i| calibrate_pair(counts.n1[i] as f64, counts.n2[i] as f64, n, probs))
        .collect()
}

/// Per-key estimates for the real keys `1..=d`, corrected and raw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub f_hat: Vec<f64>,
    pub m_hat: Vec<f64>,
    pub f_hat_raw: Vec<f64>,
    pub m_hat_raw: Vec<f64>,
}

impl Estimates {
    pub fn d(&self) -> usize {
        self.f_hat.len()
    }

    pub fn rows(&self, truth: Option<&TrueStats>) -> Vec<EstimateRow> {
        (0..self.d())
            .map(|i| EstimateRow {
                key: i as u32 + 1,
                f_true: truth.map(|t| t.freq[i]),
                m_true: truth.and_then(|t| t.mean[i]),
                f_hat: self.f_hat[i],
                m_hat: self.m_hat[i],
                f_hat_raw: self.f_hat_raw[i],
                m_hat_raw: finite_or_none(self.m_hat_raw[i]),
            })
            .collect()
    }
}

fn finite_or_none(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// One output row; absent truth fields are omitted from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub key: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_true: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_true: Option<f64>,
    pub f_hat: f64,
    pub m_hat: f64,
    pub f_hat_raw: f64,
    pub m_hat_raw: Option<f64>,
}

/// Frequency clipped into `[1/n, 1]`, calibrated counts clipped into `[0, n·f̂/ℓ]`,
/// mean `ℓ(n̂1 − n̂2)/(n·f̂)`.
pub fn estimate_corrected(counts: &SupportCounts, probs: &PerturbProbs, ell: usize) -> Result<Estimates> {
    check_frequency_probs(probs)?;
    check_value_probs(probs)?;
    if counts.n == 0 {
        return Err(invalid("no reports"));
    }
    let n = counts.n as f64;
    let l = ell as f64;
    let d = counts.d;
    let mut est = Estimates {
        f_hat: Vec::with_capacity(d),
        m_hat: Vec::with_capacity(d),
        f_hat_raw: Vec::with_capacity(d),
        m_hat_raw: Vec::with_capacity(d),
    };
    for i in 0..d {
        let (n1, n2) = (counts.n1[i] as f64, counts.n2[i] as f64);
        let f_raw = raw_frequency(n1 + n2, n, probs, ell);
        let f = f_raw.clamp(1.0 / n, 1.0);
        let (c1, c2) = calibrate_pair(n1, n2, n, probs)?;
        let cap = n * f / l;
        let (c1, c2) = (c1.clamp(0.0, cap), c2.clamp(0.0, cap));
        est.f_hat.push(f);
        est.m_hat.push((l * (c1 - c2) / (n * f)).clamp(-1.0, 1.0));
        est.f_hat_raw.push(f_raw);
        est.m_hat_raw.push(raw_mean(n1, n2, n, probs));
    }
    Ok(est)
}

/// PrivKV tallies per sampled index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivKvCounts {
    pub n: u64,
    /// Users whose sampled index is `k`.
    pub sampled: Vec<u64>,
    /// Of those, reports with `(key_bit, value) = (1, +1)` and `(1, -1)`.
    pub pos: Vec<u64>,
    pub neg: Vec<u64>,
}

impl PrivKvCounts {
    pub fn new(d: usize) -> Self {
        Self { n: 0, sampled: vec![0; d], pos: vec![0; d], neg: vec![0; d] }
    }

    pub fn add(&mut self, report: &PrivKvReport) {
        let i = report.index as usize - 1;
        self.sampled[i] += 1;
        match (report.key_bit, report.value) {
            (1, 1) => self.pos[i] += 1,
            (1, -1) => self.neg[i] += 1,
            _ => {}
        }
        self.n += 1;
    }

    pub fn merge(&mut self, other: &PrivKvCounts) -> Result<()> {
        if self.sampled.len() != other.sampled.len() {
            return Err(invalid("cannot merge counts over different domains"));
        }
        self.n += other.n;
        for (dst, src) in [
            (&mut self.sampled, &other.sampled),
            (&mut self.pos, &other.pos),
            (&mut self.neg, &other.neg),
        ] {
            for (x, y) in dst.iter_mut().zip(src) {
                *x += y;
            }
        }
        Ok(())
    }
}

pub fn aggregate_privkv(reports: &[PrivKvReport], d: usize) -> Result<PrivKvCounts> {
    let mut counts = PrivKvCounts::new(d);
    for r in reports {
        if r.index == 0 || r.index as usize > d {
            return Err(invalid(format!("sampled index {} outside 1..={d}", r.index)));
        }
        counts.add(r);
    }
    Ok(counts)
}

/// Single-iteration PrivKV estimates.
///
/// Frequency: randomized-response calibration of the possession bit among
/// the users that sampled the key. Mean: calibrated `(+1, -1)` counts among
/// reports with bit 1, clipped into `[0, #bit-1 reports]`, divided by that
/// count. Fake values from non-holders are not removed, which biases the
/// mean toward 0.
pub fn estimate_privkv(counts: &PrivKvCounts, eps_total: f64) -> Result<Estimates> {
    if counts.n == 0 {
        return Err(invalid("no reports"));
    }
    let keep = privkv_keep_prob(eps_total);
    let gain = 2.0 * keep - 1.0;
    if gain <= DEGENERATE_TOL {
        return Err(Error::Degenerate("randomized response keeps with probability 1/2".into()));
    }
    let n = counts.n as f64;
    let d = counts.sampled.len();
    let mut est = Estimates {
        f_hat: Vec::with_capacity(d),
        m_hat: Vec::with_capacity(d),
        f_hat_raw: Vec::with_capacity(d),
        m_hat_raw: Vec::with_capacity(d),
    };
    for i in 0..d {
        let nk = counts.sampled[i] as f64;
        let (pos, neg) = (counts.pos[i] as f64, counts.neg[i] as f64);
        let ones = pos + neg;
        let f_raw = if nk > 0.0 { (ones / nk - (1.0 - keep)) / gain } else { 0.0 };
        let (m_raw, m) = if ones > 0.0 {
            let up = ((keep * pos - (1.0 - keep) * neg) / gain).clamp(0.0, ones);
            let down = ((keep * neg - (1.0 - keep) * pos) / gain).clamp(0.0, ones);
            ((pos - neg) / (gain * ones), ((up - down) / ones).clamp(-1.0, 1.0))
        } else {
            (0.0, 0.0)
        };
        est.f_hat.push(f_raw.clamp(1.0 / n, 1.0));
        est.m_hat.push(m);
        est.f_hat_raw.push(f_raw);
        est.m_hat_raw.push(m_raw);
    }
    Ok(est)
}
