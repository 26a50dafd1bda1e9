use rand::Rng;
use rand_distr::{Distribution, Geometric};

use super::report::{SparseUeReport, UeReport};
use crate::budget::PerturbProbs;
use crate::error::{invalid, Result};
use crate::model::UserRecord;
use crate::sampling::{discretize, sample_raw};

/// Unary-encoding perturbation with fixed probabilities and padded domain.
#[derive(Debug, Clone)]
pub struct UeMechanism {
    probs: PerturbProbs,
    ell: usize,
    d: usize,
    // gap between consecutive non-zero positions outside the sampled key
    gap: Option<Geometric>,
}

impl UeMechanism {
    pub fn new(probs: PerturbProbs, ell: usize, d: usize) -> Result<Self> {
        if ell == 0 || d == 0 {
            return Err(invalid("need ell >= 1 and d >= 1"));
        }
        let gap = if probs.b > 0.0 {
            Some(Geometric::new(probs.b).map_err(|e| invalid(e.to_string()))?)
        } else {
            None
        };
        Ok(Self { probs, ell, d, gap })
    }

    pub fn d_prime(&self) -> usize {
        self.d + self.ell
    }

    pub fn probs(&self) -> PerturbProbs {
        self.probs
    }

    fn sampled_symbol<R: Rng + ?Sized>(&self, v: i8, rng: &mut R) -> i8 {
        let u: f64 = rng.random();
        let PerturbProbs { a, p, .. } = self.probs;
        if u < a * p {
            v
        } else if u < a {
            -v
        } else {
            0
        }
    }

    fn other_symbol<R: Rng + ?Sized>(&self, rng: &mut R) -> i8 {
        let u: f64 = rng.random();
        let b = self.probs.b;
        if u < b / 2.0 {
            1
        } else if u < b {
            -1
        } else {
            0
        }
    }

    /// Full report; every position is drawn independently.
    pub fn perturb<R: Rng + ?Sized>(&self, record: &UserRecord, rng: &mut R) -> UeReport {
        let (k, raw) = sample_raw(record, self.ell, self.d, rng);
        let v = discretize(raw, rng);
        let bits = (1..=self.d_prime() as u32)
            .map(|i| {
                if i == k {
                    self.sampled_symbol(v, rng)
                } else {
                    self.other_symbol(rng)
                }
            })
            .collect();
        UeReport { bits }
    }

    /// Same distribution as [`perturb`](Self::perturb), listing only non-zero positions.
    ///
    /// Positions other than the sampled key are non-zero independently with
    /// probability `b`, so the gaps between them are geometric.
    pub fn perturb_sparse<R: Rng + ?Sized>(&self, record: &UserRecord, rng: &mut R) -> SparseUeReport {
        let d_prime = self.d_prime();
        let (k, raw) = sample_raw(record, self.ell, self.d, rng);
        let v = discretize(raw, rng);
        let own = self.sampled_symbol(v, rng);
        let mut entries = Vec::new();
        if let Some(gap) = &self.gap {
            // walk the d'-1 other positions, indexed 0..d'-1 with k removed
            let others = d_prime as u64 - 1;
            let mut pos = gap.sample(rng);
            while pos < others {
                let key = if pos + 1 < u64::from(k) { pos + 1 } else { pos + 2 } as u32;
                let sign = if rng.random::<bool>() { 1 } else { -1 };
                entries.push((key, sign));
                pos = pos.saturating_add(1).saturating_add(gap.sample(rng));
            }
        }
        if own != 0 {
            let at = entries.partition_point(|&(key, _)| key < k);
            entries.insert(at, (k, own));
        }
        SparseUeReport { d_prime, entries }
    }
}

pub fn perturb_ue<R: Rng + ?Sized>(
    record: &UserRecord,
    probs: PerturbProbs,
    ell: usize,
    d: usize,
    rng: &mut R,
) -> Result<UeReport> {
    Ok(UeMechanism::new(probs, ell, d)?.perturb(record, rng))
}
