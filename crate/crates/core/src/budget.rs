//! Budget composition, allocation and perturbation probabilities.
//!
//! The key is perturbed with budget `ε1` and the value with `ε2`. Because
//! the value perturbation is correlated with the key perturbation (a fake
//! key always carries a uniformly random value) the composed budget is
//! smaller than `ε1 + ε2`. The unary-encoding composition does not depend
//! on the padding length; the randomized-response composition shrinks as
//! the padding length grows.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    /// Unary encoding: the report is a length-`d'` vector over `{+1, -1, 0}`.
    Ue,
    /// Generalized randomized response: the report is a single `⟨key, ±1⟩` pair.
    Grr,
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mechanism::Ue => "ue",
            Mechanism::Grr => "grr",
        })
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ue" | "pckv-ue" => Ok(Mechanism::Ue),
            "grr" | "pckv-grr" => Ok(Mechanism::Grr),
            _ => Err(Error::UnknownMechanism(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Error-minimizing split; depends on `ℓ` for the randomized-response mechanism.
    Optimized,
    /// Sequential composition with an equal split `(ε/2, ε/2)`.
    Naive,
    /// `ε2 = ε/2` and the largest `ε1` the tight composition allows.
    NonOptimized,
    /// User-chosen `(ε1, ε2)`; the composed total is reported.
    Manual,
}

impl Strategy {
    pub const ALLOCATING: [Strategy; 3] =
        [Strategy::Optimized, Strategy::NonOptimized, Strategy::Naive];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Optimized => "optimized",
            Strategy::Naive => "naive",
            Strategy::NonOptimized => "non-optimized",
            Strategy::Manual => "manual",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "optimized" => Ok(Strategy::Optimized),
            "naive" => Ok(Strategy::Naive),
            "non-optimized" | "nonoptimized" => Ok(Strategy::NonOptimized),
            "manual" => Ok(Strategy::Manual),
            _ => Err(Error::UnknownStrategy(s.to_string())),
        }
    }
}

/// Perturbation probabilities.
///
/// `a`: a sampled key is reported as held. `b`: any other key is reported
/// as held. `p`: a reported held key keeps its value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbProbs {
    pub a: f64,
    pub b: f64,
    pub p: f64,
}

impl PerturbProbs {
    /// Accepts the closed limits `b = 0`, `a = 1`, `p = 1` so that noiseless
    /// configurations can be expressed; the key must stay more likely to be
    /// reported than a non-key (`a > b`).
    pub fn new(a: f64, b: f64, p: f64) -> Result<Self> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(unit(a) && unit(b) && unit(p)) {
            return Err(invalid(format!("probabilities must lie in [0, 1]: a={a}, b={b}, p={p}")));
        }
        if b > 0.5 || p < 0.5 {
            return Err(invalid(format!("need b <= 1/2 and p >= 1/2: b={b}, p={p}")));
        }
        if a < b {
            return Err(invalid(format!("need a >= b: a={a}, b={b}")));
        }
        Ok(Self { a, b, p })
    }

    /// `ε1` of a unary-encoding key perturbation, `ln[a(1-b) / (b(1-a))]`.
    pub fn eps_key_ue(&self) -> f64 {
        (self.a * (1.0 - self.b) / (self.b * (1.0 - self.a))).ln()
    }

    /// `ε1` of a randomized-response key perturbation, `ln(a / b)`.
    pub fn eps_key_grr(&self) -> f64 {
        (self.a / self.b).ln()
    }

    /// `ε2 = ln[p / (1-p)]`.
    pub fn eps_value(&self) -> f64 {
        (self.p / (1.0 - self.p)).ln()
    }

    /// Whether `b = (1-a)/(d'-1)` holds, as randomized response requires.
    pub fn is_grr_consistent(&self, d_prime: usize) -> bool {
        d_prime >= 2 && (self.b - (1.0 - self.a) / (d_prime as f64 - 1.0)).abs() <= 1e-12
    }
}

fn check_budgets(eps_key: f64, eps_value: f64) -> Result<()> {
    if eps_key.is_nan() || eps_value.is_nan() || eps_key < 0.0 || eps_value < 0.0 {
        return Err(invalid(format!(
            "budgets must be non-negative: eps_key={eps_key}, eps_value={eps_value}"
        )));
    }
    Ok(())
}

/// Composed budget of the unary-encoding mechanism:
/// `max{ε2, ε1 + ln[2 / (1 + e^{-ε2})]}`.
pub fn compose_ue(eps_key: f64, eps_value: f64) -> Result<f64> {
    check_budgets(eps_key, eps_value)?;
    let fake_value_cost = (2.0 / (1.0 + (-eps_value).exp())).ln();
    Ok(eps_value.max(eps_key + fake_value_cost))
}

/// Composed budget of the randomized-response mechanism with padding length `ell`:
/// `ln[(e^{ε1+ε2} + λ) / (min{e^{ε1}, (e^{ε2}+1)/2} + λ)]`, `λ = (ℓ-1)(e^{ε2}+1)/2`.
pub fn compose_grr(eps_key: f64, eps_value: f64, ell: usize) -> Result<f64> {
    check_budgets(eps_key, eps_value)?;
    if ell == 0 {
        return Err(invalid("padding length must be at least 1"));
    }
    let half = (eps_value.exp() + 1.0) / 2.0;
    let lambda = (ell as f64 - 1.0) * half;
    let num = (eps_key + eps_value).exp() + lambda;
    let den = eps_key.exp().min(half) + lambda;
    Ok((num / den).ln())
}

pub fn compose(mechanism: Mechanism, eps_key: f64, eps_value: f64, ell: usize) -> Result<f64> {
    match mechanism {
        Mechanism::Ue => compose_ue(eps_key, eps_value),
        Mechanism::Grr => compose_grr(eps_key, eps_value, ell),
    }
}

/// The one-parameter family of unary-encoding splits that compose to exactly `ε`:
/// `ε1 = ln θ`, `ε2 = ln[1 / (2θe^{-ε} - 1)]` for `θ ∈ [(e^ε+1)/2, e^ε)`.
pub fn theta_split(eps: f64, theta: f64) -> Result<(f64, f64)> {
    let (lo, hi) = theta_range(eps)?;
    if !(theta >= lo * (1.0 - 1e-15) && theta < hi) {
        return Err(invalid(format!("theta {theta} outside [{lo}, {hi})")));
    }
    let eps_value = (1.0 / (2.0 * theta * (-eps).exp() - 1.0)).ln().max(0.0);
    Ok((theta.ln(), eps_value))
}

/// `[(e^ε+1)/2, e^ε)`, the admissible range of `θ = e^{ε1}`.
pub fn theta_range(eps: f64) -> Result<(f64, f64)> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid(format!("total budget must be positive and finite, got {eps}")));
    }
    Ok(((eps.exp() + 1.0) / 2.0, eps.exp()))
}

/// Split a total budget into `(ε1, ε2)`.
pub fn allocate(
    eps_total: f64,
    ell: usize,
    mechanism: Mechanism,
    strategy: Strategy,
) -> Result<(f64, f64)> {
    if !(eps_total > 0.0 && eps_total.is_finite()) {
        return Err(invalid(format!("total budget must be positive and finite, got {eps_total}")));
    }
    if ell == 0 {
        return Err(invalid("padding length must be at least 1"));
    }
    let e = eps_total.exp();
    match strategy {
        Strategy::Optimized if mechanism == Mechanism::Ue || ell == 1 => {
            Ok((((e + 1.0) / 2.0).ln(), eps_total))
        }
        Strategy::Optimized => {
            let l = ell as f64;
            Ok(((l * (e - 1.0) / 2.0 + 1.0).ln(), (l * (e - 1.0) + 1.0).ln()))
        }
        Strategy::Naive => Ok((eps_total / 2.0, eps_total / 2.0)),
        Strategy::NonOptimized => Ok((((e + (eps_total / 2.0).exp()) / 2.0).ln(), eps_total / 2.0)),
        Strategy::Manual => Err(invalid(
            "the manual strategy takes explicit budgets; use BudgetSpec::manual",
        )),
    }
}

/// Unary-encoding probabilities with the variance-optimal `a = 1/2`.
pub fn probs_ue(eps_key: f64, eps_value: f64) -> Result<PerturbProbs> {
    check_budgets(eps_key, eps_value)?;
    if eps_key == 0.0 && eps_value == 0.0 {
        return Err(Error::Degenerate("both budgets are zero".into()));
    }
    let b = 1.0 / (eps_key.exp() + 1.0);
    let p = value_keep_prob(eps_value);
    PerturbProbs::new(0.5, b, p)
}

/// Randomized-response probabilities over the padded domain of size `d_prime`.
pub fn probs_grr(eps_key: f64, eps_value: f64, d_prime: usize) -> Result<PerturbProbs> {
    check_budgets(eps_key, eps_value)?;
    if d_prime < 2 {
        return Err(invalid(format!("padded domain must have at least 2 keys, got {d_prime}")));
    }
    let ek = eps_key.exp();
    let a = if ek.is_infinite() { 1.0 } else { ek / (ek + d_prime as f64 - 1.0) };
    // at ε1 = 0 rounding can push b a hair above a
    let b = ((1.0 - a) / (d_prime as f64 - 1.0)).min(a);
    PerturbProbs::new(a, b, value_keep_prob(eps_value))
}

/// Closed-form randomized-response probabilities under the optimized split.
pub fn probs_grr_optimized(eps_total: f64, ell: usize, d_prime: usize) -> Result<PerturbProbs> {
    if d_prime < 2 || ell == 0 {
        return Err(invalid("need d' >= 2 and ell >= 1"));
    }
    let t = ell as f64 * (eps_total.exp() - 1.0);
    let a = (t + 2.0) / (t + 2.0 * d_prime as f64);
    let b = (1.0 - a) / (d_prime as f64 - 1.0);
    let p = (t + 1.0) / (t + 2.0);
    PerturbProbs::new(a, b, p)
}

fn value_keep_prob(eps_value: f64) -> f64 {
    if eps_value.is_infinite() {
        1.0
    } else {
        eps_value.exp() / (eps_value.exp() + 1.0)
    }
}

/// A fully resolved budget: the split, the padded domain and the strategy that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSpec {
    pub eps_total: f64,
    pub eps_key: f64,
    pub eps_value: f64,
    pub ell: usize,
    pub d: usize,
    pub d_prime: usize,
    pub mechanism: Mechanism,
    pub strategy: Strategy,
}

impl BudgetSpec {
    pub fn allocate(
        eps_total: f64,
        ell: usize,
        d: usize,
        mechanism: Mechanism,
        strategy: Strategy,
    ) -> Result<Self> {
        check_domain(d)?;
        let (eps_key, eps_value) = allocate(eps_total, ell, mechanism, strategy)?;
        Ok(Self {
            eps_total,
            eps_key,
            eps_value,
            ell,
            d,
            d_prime: d + ell,
            mechanism,
            strategy,
        })
    }

    /// Explicit `(ε1, ε2)`; `eps_total` is the composed budget they achieve.
    pub fn manual(
        eps_key: f64,
        eps_value: f64,
        ell: usize,
        d: usize,
        mechanism: Mechanism,
    ) -> Result<Self> {
        check_domain(d)?;
        if ell == 0 {
            return Err(invalid("padding length must be at least 1"));
        }
        let eps_total = compose(mechanism, eps_key, eps_value, ell)?;
        Ok(Self {
            eps_total,
            eps_key,
            eps_value,
            ell,
            d,
            d_prime: d + ell,
            mechanism,
            strategy: Strategy::Manual,
        })
    }

    /// Composed budget of this split under its mechanism.
    pub fn composed(&self) -> Result<f64> {
        compose(self.mechanism, self.eps_key, self.eps_value, self.ell)
    }

    pub fn probs(&self) -> Result<PerturbProbs> {
        match self.mechanism {
            Mechanism::Ue => probs_ue(self.eps_key, self.eps_value),
            Mechanism::Grr => probs_grr(self.eps_key, self.eps_value, self.d_prime),
        }
    }
}

fn check_domain(d: usize) -> Result<()> {
    if d < 2 {
        return Err(invalid(format!("key domain must have at least 2 keys, got {d}")));
    }
    Ok(())
}
