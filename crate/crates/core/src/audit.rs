//! Exhaustive privacy audit on small domains.
//!
//! For every pair of input records `S1, S2` drawn from a finite family and
//! every output `y`, the auditor evaluates `Pr(y | S1) / Pr(y | S2)` from
//! the exact output distributions and reports the largest ratio next to
//! the composed budget the mechanism claims. The family holds all records
//! of at most `max(ℓ, 3)` distinct keys with values from a grid
//! (by default the vertices `{-1, +1}`).

use num_rational::BigRational;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::budget::{compose, Mechanism, PerturbProbs};
use crate::error::{invalid, Error, Result};
use crate::mechanisms::{grr_output_probs, ue_output_probs, GrrReport, Prob, UeReport};
use crate::model::UserRecord;

/// Largest padded domain for exact rational arithmetic.
pub const EXACT_LIMIT: usize = 5;
/// Largest number of input records the auditor will enumerate.
pub const MAX_RECORDS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub s1: Vec<(u32, f64)>,
    pub s2: Vec<(u32, f64)>,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditResult {
    pub mechanism: Mechanism,
    pub d: usize,
    pub ell: usize,
    pub eps_key: f64,
    pub eps_value: f64,
    pub max_ratio: f64,
    pub ln_max_ratio: f64,
    pub achieved_at: Witness,
    pub theoretical_eps: f64,
    /// `theoretical_eps − ln(max_ratio)`.
    pub slack: f64,
    /// Randomized response only: the key-only ratio `1 + (a/b − 1)/ℓ`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub key_only_ratio: Option<f64>,
    pub records: usize,
    pub exact: bool,
}

impl AuditResult {
    pub fn is_sound(&self, tol: f64) -> bool {
        self.ln_max_ratio <= self.theoretical_eps + tol
    }

    pub fn is_tight(&self, tol: f64) -> bool {
        (self.ln_max_ratio - self.theoretical_eps).abs() <= tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditOptions {
    pub exact: bool,
    pub value_grid: Vec<f64>,
    /// Largest record size; defaults to `max(ℓ, 3)`.
    pub max_set_size: Option<usize>,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self { exact: false, value_grid: vec![-1.0, 1.0], max_set_size: None }
    }
}

fn choose(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// All records over keys `1..=d` with at most `max_size` keys and values from `grid`.
pub fn enumerate_records(d: usize, max_size: usize, grid: &[f64]) -> Result<Vec<UserRecord>> {
    let max_size = max_size.min(d);
    let total: usize = (0..=max_size)
        .map(|k| choose(d, k).saturating_mul(grid.len().saturating_pow(k as u32)))
        .fold(0usize, usize::saturating_add);
    if total > MAX_RECORDS {
        return Err(invalid(format!("{total} input records exceed the audit limit of {MAX_RECORDS}")));
    }
    let mut out = Vec::with_capacity(total);
    let mut keys = Vec::with_capacity(max_size);
    fn subsets(start: u32, d: u32, left: usize, keys: &mut Vec<u32>, grid: &[f64], out: &mut Vec<UserRecord>) {
        // emit every value assignment of the current key set
        let k = keys.len();
        let combos = grid.len().pow(k as u32);
        for mut c in 0..combos {
            let pairs: Vec<(u32, f64)> = keys
                .iter()
                .map(|&key| {
                    let v = grid[c % grid.len()];
                    c /= grid.len();
                    (key, v)
                })
                .collect();
            out.push(UserRecord::from_pairs(&pairs).expect("valid grid record"));
        }
        if left == 0 {
            return;
        }
        for key in start..=d {
            keys.push(key);
            subsets(key + 1, d, left - 1, keys, grid, out);
            keys.pop();
        }
    }
    subsets(1, d as u32, max_size, &mut keys, grid, &mut out);
    debug_assert_eq!(out.len(), total);
    Ok(out)
}

fn output_label(mechanism: Mechanism, index: usize, d_prime: usize) -> String {
    match mechanism {
        Mechanism::Ue => UeReport::from_index(index, d_prime).to_string(),
        Mechanism::Grr => {
            let key = (index / 2 + 1) as u32;
            let value = if index.is_multiple_of(2) { 1 } else { -1 };
            GrrReport { key, value }.to_string()
        }
    }
}

fn pairs_of(r: &UserRecord) -> Vec<(u32, f64)> {
    r.pairs().iter().map(|p| (p.key, p.value)).collect()
}

/// Largest `max_S Pr(y|S) / min_S Pr(y|S)` over outputs: `(ratio, output, argmax record, argmin record)`.
fn worst_ratio<T: Prob + Send + Sync>(
    mechanism: Mechanism,
    records: &[UserRecord],
    probs: &PerturbProbs,
    ell: usize,
    d: usize,
) -> Result<(f64, usize, usize, usize)> {
    let tables: Vec<Vec<T>> = records
        .par_iter()
        .map(|r| match mechanism {
            Mechanism::Ue => ue_output_probs::<T>(r, probs, ell, d),
            Mechanism::Grr => grr_output_probs::<T>(r, probs, ell, d),
        })
        .collect::<Result<_>>()?;
    let outputs = tables[0].len();
    let mut best: Option<(T, usize, usize, usize)> = None;
    for y in 0..outputs {
        let (mut hi, mut lo) = (0usize, 0usize);
        for (i, t) in tables.iter().enumerate() {
            if t[y] > tables[hi][y] {
                hi = i;
            }
            if t[y] < tables[lo][y] {
                lo = i;
            }
        }
        let (num, den) = (tables[hi][y].clone(), tables[lo][y].clone());
        if den.is_zero() {
            if num.is_zero() {
                continue;
            }
            return Ok((f64::INFINITY, y, hi, lo));
        }
        let ratio = num / den;
        if best.as_ref().is_none_or(|b| ratio > b.0) {
            best = Some((ratio, y, hi, lo));
        }
    }
    let (ratio, y, hi, lo) = best.ok_or_else(|| Error::Degenerate("every output has probability zero".into()))?;
    Ok((ratio.to_f64(), y, hi, lo))
}

pub fn audit(mechanism: Mechanism, d: usize, ell: usize, probs: &PerturbProbs, opts: &AuditOptions) -> Result<AuditResult> {
    if d == 0 || ell == 0 {
        return Err(invalid("need d >= 1 and ell >= 1"));
    }
    if opts.value_grid.is_empty() || opts.value_grid.iter().any(|v| !(-1.0..=1.0).contains(v)) {
        return Err(invalid("value grid must be a non-empty subset of [-1, 1]"));
    }
    let d_prime = d + ell;
    if opts.exact && d_prime > EXACT_LIMIT {
        return Err(Error::DomainTooLarge { d_prime, limit: EXACT_LIMIT });
    }
    let (eps_key, eps_value) = match mechanism {
        Mechanism::Ue => (probs.eps_key_ue(), probs.eps_value()),
        Mechanism::Grr => {
            if !probs.is_grr_consistent(d_prime) {
                return Err(invalid("b must equal (1 - a)/(d' - 1) for randomized response"));
            }
            (probs.eps_key_grr(), probs.eps_value())
        }
    };
    let theoretical_eps = compose(mechanism, eps_key, eps_value, ell)?;
    let records = enumerate_records(d, opts.max_set_size.unwrap_or(ell.max(3)), &opts.value_grid)?;
    let (max_ratio, y, hi, lo) = if opts.exact {
        worst_ratio::<BigRational>(mechanism, &records, probs, ell, d)?
    } else {
        worst_ratio::<f64>(mechanism, &records, probs, ell, d)?
    };
    let ln_max_ratio = max_ratio.ln();
    let key_only_ratio = (mechanism == Mechanism::Grr).then(|| 1.0 + (probs.a / probs.b - 1.0) / ell as f64);
    Ok(AuditResult {
        mechanism,
        d,
        ell,
        eps_key,
        eps_value,
        max_ratio,
        ln_max_ratio,
        achieved_at: Witness {
            s1: pairs_of(&records[hi]),
            s2: pairs_of(&records[lo]),
            output: output_label(mechanism, y, d_prime),
        },
        theoretical_eps,
        slack: theoretical_eps - ln_max_ratio,
        key_only_ratio,
        records: records.len(),
        exact: opts.exact,
    })
}

pub fn audit_ue(d: usize, ell: usize, probs: &PerturbProbs) -> Result<AuditResult> {
    audit(Mechanism::Ue, d, ell, probs, &AuditOptions::default())
}

pub fn audit_grr(d: usize, ell: usize, probs: &PerturbProbs) -> Result<AuditResult> {
    audit(Mechanism::Grr, d, ell, probs, &AuditOptions::default())
}
