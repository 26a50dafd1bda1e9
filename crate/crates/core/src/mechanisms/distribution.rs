//! Exact output distributions, marginalized over padding-and-sampling.
//!
//! Generic over [`Prob`] so the auditor can run the same arithmetic in
//! `f64` or in exact rationals.

use std::ops::{Add, Div, Mul, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use super::report::{GrrReport, UeReport};
use crate::budget::PerturbProbs;
use crate::error::{invalid, Error, Result};
use crate::model::UserRecord;
use crate::sampling::sampling_weights;

/// Largest padded domain for which unary-encoding outputs are enumerated (`3^10` outputs).
pub const UE_ENUMERATION_LIMIT: usize = 10;

/// Field operations needed to evaluate output probabilities.
pub trait Prob:
    Clone
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
{
    /// Exact conversion for finite inputs (every `f64` is a dyadic rational).
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn from_ratio(num: i64, den: i64) -> Self;
}

impl Prob for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
}

impl Prob for BigRational {
    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).expect("finite probability")
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or_else(|| {
            // very large numerators/denominators: fall back to a log-space quotient
            let n = self.numer().to_f64().unwrap_or(f64::MAX);
            let d = self.denom().to_f64().unwrap_or(f64::MAX);
            n / d
        })
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
}

/// Sampling weights lifted into `T`, with raw values kept exact.
fn weights<T: Prob>(record: &UserRecord, ell: usize, d: usize) -> Vec<(u32, T, T)> {
    let s = record.len();
    let mut out: Vec<(u32, T, T)> = Vec::with_capacity(s + ell);
    let slots = s.max(ell) as i64;
    for p in record.pairs() {
        out.push((p.key, T::from_f64(p.value), T::from_ratio(1, slots)));
    }
    if s < ell {
        // (1 - η)/ℓ = (ℓ - |S|) / ℓ²
        let w = T::from_ratio((ell - s) as i64, (ell * ell) as i64);
        out.extend((1..=ell).map(|j| ((d + j) as u32, T::zero(), w.clone())));
    }
    debug_assert_eq!(out.len(), sampling_weights(record, ell, d).len());
    out
}

/// Probability of each symbol at the sampled position: `(+1, -1, 0)`.
fn sampled_row<T: Prob>(probs: &[T; 3], raw: &T) -> [T; 3] {
    let [a, _, p] = probs;
    let two = T::one() + T::one();
    let tilt = (two.clone() * p.clone() - T::one()) * raw.clone();
    let up = a.clone() * (T::one() + tilt.clone()) / two.clone();
    let down = a.clone() * (T::one() - tilt) / two;
    [up, down, T::one() - a.clone()]
}

fn symbol_slot(s: i8) -> usize {
    match s {
        1 => 0,
        -1 => 1,
        _ => 2,
    }
}

/// `Pr(y | S)` for every `y ∈ {+1,-1,0}^{d'}`, indexed by [`UeReport::index`].
pub fn ue_output_probs<T: Prob>(
    record: &UserRecord,
    probs: &PerturbProbs,
    ell: usize,
    d: usize,
) -> Result<Vec<T>> {
    let d_prime = d + ell;
    if d_prime > UE_ENUMERATION_LIMIT {
        return Err(Error::DomainTooLarge { d_prime, limit: UE_ENUMERATION_LIMIT });
    }
    if record.max_key() as usize > d {
        return Err(invalid("record holds keys outside the domain"));
    }
    let pr = [T::from_f64(probs.a), T::from_f64(probs.b), T::from_f64(probs.p)];
    let two = T::one() + T::one();
    let half_b = pr[1].clone() / two;
    let other = [half_b.clone(), half_b, T::one() - pr[1].clone()];
    let rows: Vec<(usize, [T; 3], T)> = weights::<T>(record, ell, d)
        .into_iter()
        .map(|(k, raw, w)| (k as usize - 1, sampled_row(&pr, &raw), w))
        .collect();

    let total = 3usize.pow(d_prime as u32);
    let mut out = Vec::with_capacity(total);
    let mut slots = vec![0usize; d_prime];
    let mut prefix = vec![T::one(); d_prime + 1];
    let mut suffix = vec![T::one(); d_prime + 1];
    for index in 0..total {
        let y = UeReport::from_index(index, d_prime);
        for (i, &s) in y.bits.iter().enumerate() {
            slots[i] = symbol_slot(s);
        }
        for i in 0..d_prime {
            prefix[i + 1] = prefix[i].clone() * other[slots[i]].clone();
        }
        for i in (0..d_prime).rev() {
            suffix[i] = suffix[i + 1].clone() * other[slots[i]].clone();
        }
        let mut total_p = T::zero();
        for (k, row, w) in &rows {
            let rest = prefix[*k].clone() * suffix[k + 1].clone();
            total_p = total_p + w.clone() * row[slots[*k]].clone() * rest;
        }
        out.push(total_p);
    }
    Ok(out)
}

/// Exact unary-encoding output distribution as `(report, probability)` pairs.
pub fn output_distribution_ue(
    record: &UserRecord,
    probs: &PerturbProbs,
    ell: usize,
    d: usize,
) -> Result<Vec<(UeReport, f64)>> {
    let d_prime = d + ell;
    let probs = ue_output_probs::<f64>(record, probs, ell, d)?;
    Ok(probs
        .into_iter()
        .enumerate()
        .map(|(i, p)| (UeReport::from_index(i, d_prime), p))
        .collect())
}

/// `Pr(⟨k', v'⟩ | S)` laid out as `[(1,+1), (1,-1), (2,+1), …]`.
pub fn grr_output_probs<T: Prob>(
    record: &UserRecord,
    probs: &PerturbProbs,
    ell: usize,
    d: usize,
) -> Result<Vec<T>> {
    let d_prime = d + ell;
    if d_prime < 2 {
        return Err(invalid("padded domain must have at least 2 keys"));
    }
    if record.max_key() as usize > d {
        return Err(invalid("record holds keys outside the domain"));
    }
    let pr = [T::from_f64(probs.a), T::from_f64(probs.b), T::from_f64(probs.p)];
    let half_b = pr[1].clone() / (T::one() + T::one());
    let w = weights::<T>(record, ell, d);
    let mass: T = w.iter().fold(T::zero(), |acc, (_, _, x)| acc + x.clone());
    // start every outcome at "some other key was sampled", then correct the sampled ones
    let mut out = vec![mass * half_b.clone(); 2 * d_prime];
    for (k, raw, wk) in &w {
        let row = sampled_row(&pr, raw);
        let i = 2 * (*k as usize - 1);
        out[i] = out[i].clone() + wk.clone() * (row[0].clone() - half_b.clone());
        out[i + 1] = out[i + 1].clone() + wk.clone() * (row[1].clone() - half_b.clone());
    }
    Ok(out)
}

/// Exact randomized-response output distribution as `(report, probability)` pairs.
pub fn output_distribution_grr(
    record: &UserRecord,
    probs: &PerturbProbs,
    ell: usize,
    d: usize,
) -> Result<Vec<(GrrReport, f64)>> {
    let probs = grr_output_probs::<f64>(record, probs, ell, d)?;
    Ok(probs
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let key = (i / 2 + 1) as u32;
            let value = if i % 2 == 0 { 1 } else { -1 };
            (GrrReport { key, value }, p)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::budget::probs_grr;

    fn rec(pairs: &[(u32, f64)]) -> UserRecord {
        UserRecord::from_pairs(pairs).unwrap()
    }

    #[test]
    fn ue_single_position_row() {
        let probs = PerturbProbs::new(0.5, 1.0 / 3.0, 0.75).unwrap();
        // d = 1, ℓ = 1: position 1 is the held key, position 2 the dummy (never sampled)
        let dist = output_distribution_ue(&rec(&[(1, 1.0)]), &probs, 1, 1).unwrap();
        let marginal = |s: i8| -> f64 { dist.iter().filter(|(y, _)| y.at(1) == s).map(|(_, p)| p).sum() };
        assert!((marginal(1) - 0.375).abs() < 1e-12);
        assert!((marginal(-1) - 0.125).abs() < 1e-12);
        assert!((marginal(0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ue_normalized() {
        let probs = PerturbProbs::new(0.5, 0.2, 0.8).unwrap();
        for r in [rec(&[]), rec(&[(1, 1.0)]), rec(&[(1, -1.0), (3, 1.0)]), rec(&[(2, 0.3)])] {
            for ell in 1..=3 {
                let total: f64 = ue_output_probs::<f64>(&r, &probs, ell, 3).unwrap().iter().sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ue_rejects_large_domain() {
        let probs = PerturbProbs::new(0.5, 0.2, 0.8).unwrap();
        assert!(matches!(
            ue_output_probs::<f64>(&rec(&[]), &probs, 2, 9),
            Err(Error::DomainTooLarge { .. })
        ));
    }

    #[test]
    fn grr_table_example() {
        let probs = PerturbProbs::new(0.5, 0.25, 0.75).unwrap();
        // d = 2, ℓ = 1, held ⟨1, +1⟩ is always sampled
        let dist = output_distribution_grr(&rec(&[(1, 1.0)]), &probs, 1, 2).unwrap();
        let get = |k: u32, v: i8| dist.iter().find(|(y, _)| y.key == k && y.value == v).unwrap().1;
        assert!((get(1, 1) - 3.0 / 8.0).abs() < 1e-15);
        assert!((get(1, -1) - 1.0 / 8.0).abs() < 1e-15);
        for k in [2, 3] {
            for v in [1, -1] {
                assert!((get(k, v) - 1.0 / 8.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn grr_normalized() {
        for &(e1, e2, ell, d) in &[(1.0, 1.0, 1, 2), (0.3, 2.0, 3, 5), (2.0, 0.0, 2, 40)] {
            let probs = probs_grr(e1, e2, d + ell).unwrap();
            for r in [rec(&[]), rec(&[(1, 0.5)]), rec(&[(1, -1.0), (2, 1.0)])] {
                let total: f64 = grr_output_probs::<f64>(&r, &probs, ell, d).unwrap().iter().sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rational_and_float_agree() {
        let probs = PerturbProbs::new(0.5, 0.2, 0.8).unwrap();
        let r = rec(&[(1, 1.0), (2, -1.0)]);
        let f = ue_output_probs::<f64>(&r, &probs, 3, 2).unwrap();
        let q = ue_output_probs::<BigRational>(&r, &probs, 3, 2).unwrap();
        let total = q.iter().fold(BigRational::zero(), |acc, x| acc + x.clone());
        assert!(total.is_one());
        for (x, y) in f.iter().zip(&q) {
            assert!((x - Prob::to_f64(y)).abs() < 1e-15);
        }
    }
}
