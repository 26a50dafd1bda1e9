use rand::Rng;

use super::report::GrrReport;
use crate::budget::PerturbProbs;
use crate::error::{invalid, Result};
use crate::model::UserRecord;
use crate::sampling::{discretize, sample_raw};

/// Randomized-response perturbation over the padded domain.
#[derive(Debug, Clone)]
pub struct GrrMechanism {
    probs: PerturbProbs,
    ell: usize,
    d: usize,
}

impl GrrMechanism {
    /// Rejects probabilities that violate `b = (1-a)/(d'-1)`.
    pub fn new(probs: PerturbProbs, ell: usize, d: usize) -> Result<Self> {
        if ell == 0 || d == 0 {
            return Err(invalid("need ell >= 1 and d >= 1"));
        }
        if !probs.is_grr_consistent(d + ell) {
            return Err(invalid(format!(
                "b = {} is inconsistent with a = {} over d' = {}",
                probs.b,
                probs.a,
                d + ell
            )));
        }
        Ok(Self { probs, ell, d })
    }

    pub fn d_prime(&self) -> usize {
        self.d + self.ell
    }

    pub fn probs(&self) -> PerturbProbs {
        self.probs
    }

    pub fn perturb<R: Rng + ?Sized>(&self, record: &UserRecord, rng: &mut R) -> GrrReport {
        let (k, raw) = sample_raw(record, self.ell, self.d, rng);
        let v = discretize(raw, rng);
        let PerturbProbs { a, p, .. } = self.probs;
        if rng.random::<f64>() < a {
            let value = if rng.random::<f64>() < p { v } else { -v };
            GrrReport { key: k, value }
        } else {
            let other = rng.random_range(1..self.d_prime() as u32);
            let key = if other >= k { other + 1 } else { other };
            let value = if rng.random::<bool>() { 1 } else { -1 };
            GrrReport { key, value }
        }
    }
}

pub fn perturb_grr<R: Rng + ?Sized>(
    record: &UserRecord,
    probs: PerturbProbs,
    ell: usize,
    d: usize,
    rng: &mut R,
) -> Result<GrrReport> {
    Ok(GrrMechanism::new(probs, ell, d)?.perturb(record, rng))
}
