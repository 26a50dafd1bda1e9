//! Closed-form error predictions and allocation analysis.
//!
//! With `δ = (a−b)f*/ℓ` and `γ = a(2p−1)f*/ℓ` the baseline estimators satisfy
//!
//! - `Var[f̂] = ℓ²b(1−b)/(n(a−b)²) + ℓf*(1−a−b)/(n(a−b))`
//! - `E[m̂] ≈ m*[1 + (1−b−δ)b/(nδ²)]`
//! - `Var[m̂] ≲ (b+δ)/(nγ²) + (b(1−b)−δ)/(nδ²)·m*²`
//!
//! Dropping lower-order terms gives `MSE_f ≈ ℓ²h/n` and
//! `MSE_m ≈ µ(g + h·m*²)` with `µ = ℓ²/(nf*²)`, `g = b/(a²(2p−1)²)` and
//! `h = (1−b)b/(a−b)²`.

use serde::{Deserialize, Serialize};

use crate::budget::{probs_grr, probs_ue, theta_range, theta_split, Mechanism, PerturbProbs};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorPrediction {
    pub var_f: f64,
    /// Second-order approximation of `E[m̂]`.
    pub e_m_approx: f64,
    /// Approximate upper bound on `Var[m̂]`.
    pub var_m_bound_approx: f64,
    pub delta: f64,
    pub gamma: f64,
    pub mu: f64,
    pub g: f64,
    pub h: f64,
    pub mse_f_approx: f64,
    pub mse_m_approx: f64,
}

/// `(g, h)` for arbitrary perturbation probabilities.
pub fn gh(probs: &PerturbProbs) -> (f64, f64) {
    let PerturbProbs { a, b, p } = *probs;
    let g = b / (a * a * (2.0 * p - 1.0).powi(2));
    let h = (1.0 - b) * b / (a - b).powi(2);
    (g, h)
}

pub fn predict_errors(probs: &PerturbProbs, ell: usize, n: usize, f_star: f64, m_star: f64) -> Result<ErrorPrediction> {
    if !(f_star > 0.0 && f_star <= 1.0) {
        return Err(invalid(format!("true frequency must lie in (0, 1], got {f_star}")));
    }
    if n == 0 || ell == 0 {
        return Err(invalid("need n >= 1 and ell >= 1"));
    }
    let PerturbProbs { a, b, p } = *probs;
    if a - b <= 0.0 || 2.0 * p - 1.0 <= 0.0 {
        return Err(Error::Degenerate("a = b or p = 1/2".into()));
    }
    let (l, nf) = (ell as f64, n as f64);
    let var_f = l * l * b * (1.0 - b) / (nf * (a - b).powi(2)) + l * f_star * (1.0 - a - b) / (nf * (a - b));
    let delta = (a - b) * f_star / l;
    let gamma = a * (2.0 * p - 1.0) * f_star / l;
    let e_m_approx = m_star * (1.0 + (1.0 - b - delta) * b / (nf * delta * delta));
    let var_m_bound_approx =
        (b + delta) / (nf * gamma * gamma) + (b * (1.0 - b) - delta) / (nf * delta * delta) * m_star * m_star;
    let mu = l * l / (nf * f_star * f_star);
    let (g, h) = gh(probs);
    Ok(ErrorPrediction {
        var_f,
        e_m_approx,
        var_m_bound_approx,
        delta,
        gamma,
        mu,
        g,
        h,
        mse_f_approx: l * l * h / nf,
        mse_m_approx: mu * (g + h * m_star * m_star),
    })
}

/// `(g, h)` of the unary-encoding mechanism for a split `(ε1, ε2)`.
pub fn gh_ue(eps_key: f64, eps_value: f64) -> Result<(f64, f64)> {
    Ok(gh(&probs_ue(eps_key, eps_value)?))
}

/// `(g, h)` of the randomized-response mechanism:
/// `g = (e^{-ε1} + (d'−1)e^{-2ε1}) / (2/(1+e^{-ε2}) − 1)²`, `h = (e^{ε1} + d' − 2)/(e^{ε1} − 1)²`.
pub fn gh_grr(eps_key: f64, eps_value: f64, d_prime: usize) -> Result<(f64, f64)> {
    if d_prime < 2 {
        return Err(invalid("padded domain must have at least 2 keys"));
    }
    let dp = d_prime as f64;
    let gain = 2.0 / (1.0 + (-eps_value).exp()) - 1.0;
    let g = ((-eps_key).exp() + (dp - 1.0) * (-2.0 * eps_key).exp()) / (gain * gain);
    let h = (eps_key.exp() + dp - 2.0) / (eps_key.exp() - 1.0).powi(2);
    Ok((g, h))
}

/// `(g, h)` along the tight unary-encoding family, `θ = e^{ε1}`:
/// `g = 4/((θ+1)(e^ε/θ − 1)²)`, `h = 4θ/(θ−1)²`.
pub fn gh_theta_ue(eps: f64, theta: f64) -> (f64, f64) {
    let g = 4.0 / ((theta + 1.0) * (eps.exp() / theta - 1.0).powi(2));
    let h = 4.0 * theta / (theta - 1.0).powi(2);
    (g, h)
}

/// `(g, h)` along the tight randomized-response family at `ℓ = 1`:
/// `g = (θ + d' − 1)/(e^ε − θ)²`, `h = (θ + d' − 2)/(θ − 1)²`.
pub fn gh_theta_grr(eps: f64, theta: f64, d_prime: usize) -> (f64, f64) {
    let dp = d_prime as f64;
    let g = (theta + dp - 1.0) / (eps.exp() - theta).powi(2);
    let h = (theta + dp - 2.0) / (theta - 1.0).powi(2);
    (g, h)
}

/// `Ψ(ε) = (e^ε+1)(3e^{2ε}+12e^ε+1)/(e^ε+3)³`; the left endpoint of the θ range
/// minimizes `Φ` whenever `Ψ(ε) ≥ m*²`.
pub fn psi(eps: f64) -> f64 {
    let e = eps.exp();
    (e + 1.0) * (3.0 * e * e + 12.0 * e + 1.0) / (e + 3.0).powi(3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectivePoint {
    pub theta: f64,
    pub eps_key: f64,
    pub eps_value: f64,
    pub g: f64,
    pub h: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveScan {
    pub eps: f64,
    pub m_star_sq: f64,
    pub points: Vec<ObjectivePoint>,
    pub argmin: ObjectivePoint,
}

impl ObjectiveScan {
    /// Ratio spacing of the logarithmic grid.
    pub fn step_ratio(&self) -> f64 {
        match self.points.as_slice() {
            [a, b, ..] => b.theta / a.theta,
            _ => 1.0,
        }
    }
}

pub const DEFAULT_GRID: usize = 10_000;

fn scan(eps: f64, m_star_sq: f64, grid_size: usize, gh_at: impl Fn(f64) -> (f64, f64)) -> Result<ObjectiveScan> {
    if grid_size < 2 {
        return Err(invalid("grid needs at least 2 points"));
    }
    if !(0.0..=1.0).contains(&m_star_sq) {
        return Err(invalid(format!("m*² must lie in [0, 1], got {m_star_sq}")));
    }
    let (lo, hi) = theta_range(eps)?;
    let ratio = (hi / lo).ln() / grid_size as f64;
    let points: Vec<ObjectivePoint> = (0..grid_size)
        .map(|i| {
            let theta = if i == 0 { lo } else { lo * (ratio * i as f64).exp() };
            let (eps_key, eps_value) = theta_split(eps, theta).unwrap_or((theta.ln(), 0.0));
            let (g, h) = gh_at(theta);
            ObjectivePoint { theta, eps_key, eps_value, g, h, phi: g + h * m_star_sq }
        })
        .collect();
    let argmin = *points
        .iter()
        .filter(|p| p.phi.is_finite())
        .min_by(|x, y| x.phi.total_cmp(&y.phi))
        .ok_or_else(|| Error::Degenerate("objective is infinite on the whole grid".into()))?;
    Ok(ObjectiveScan { eps, m_star_sq, points, argmin })
}

/// `Φ(θ) = g(θ) + h(θ)·m*²` for the unary-encoding mechanism on a
/// logarithmic grid over `[(e^ε+1)/2, e^ε)`.
pub fn allocation_objective_scan(eps: f64, m_star_sq: f64, grid_size: usize) -> Result<ObjectiveScan> {
    scan(eps, m_star_sq, grid_size, |t| gh_theta_ue(eps, t))
}

/// Same scan for the randomized-response mechanism at `ℓ = 1`.
pub fn allocation_objective_scan_grr(eps: f64, m_star_sq: f64, d_prime: usize, grid_size: usize) -> Result<ObjectiveScan> {
    if d_prime < 2 {
        return Err(invalid("padded domain must have at least 2 keys"));
    }
    scan(eps, m_star_sq, grid_size, |t| gh_theta_grr(eps, t, d_prime))
}

/// `Φ` for an arbitrary split; splits off the tight family are allowed.
pub fn objective_for_split(
    mechanism: Mechanism,
    eps_key: f64,
    eps_value: f64,
    d_prime: usize,
    m_star_sq: f64,
) -> Result<f64> {
    let (g, h) = match mechanism {
        Mechanism::Ue => gh_ue(eps_key, eps_value)?,
        Mechanism::Grr => gh(&probs_grr(eps_key, eps_value, d_prime)?),
    };
    Ok(g + h * m_star_sq)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Frequency,
    Mean,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "frequency" | "freq" => Ok(Self::Frequency),
            "mean" => Ok(Self::Mean),
            other => Err(invalid(format!("unknown objective `{other}`"))),
        }
    }
}

/// Which mechanism has the smaller approximate error.
///
/// Frequency: unary encoding iff `2(d−1) > ℓ(4ℓ−1)(e^ε+1)`.
/// Mean: unary encoding iff `2d > ℓ(4ℓ(e^ε+1)/(e^ε+3) − 1)(e^ε+1)`.
pub fn choose_mechanism(d: usize, ell: usize, eps: f64, objective: Objective) -> Mechanism {
    let (d, l, e) = (d as f64, ell as f64, eps.exp());
    let ue = match objective {
        Objective::Frequency => 2.0 * (d - 1.0) > l * (4.0 * l - 1.0) * (e + 1.0),
        Objective::Mean => 2.0 * d > l * (4.0 * l * (e + 1.0) / (e + 3.0) - 1.0) * (e + 1.0),
    };
    if ue {
        Mechanism::Ue
    } else {
        Mechanism::Grr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::budget::allocate;
    use crate::budget::Strategy;
    use proptest::prelude::*;

    #[test]
    fn prediction_example() {
        let pr = PerturbProbs::new(0.5, 0.25, 0.75).unwrap();
        let e = predict_errors(&pr, 1, 1000, 0.1, 0.3).unwrap();
        assert!((e.var_f - 0.0031).abs() < 1e-12);
        assert!((e.delta - 0.025).abs() < 1e-15);
        assert!((e.gamma - 0.025).abs() < 1e-15);
        assert!(predict_errors(&pr, 1, 1000, 0.0, 0.3).is_err());
    }

    #[test]
    fn prediction_limits() {
        let pr = PerturbProbs::new(0.5, 0.0, 0.75).unwrap();
        let e = predict_errors(&pr, 1, 1000, 0.1, 0.4).unwrap();
        assert!((e.e_m_approx - 0.4).abs() < 1e-15);
        let pr = PerturbProbs::new(0.5, 0.25, 0.75).unwrap();
        let e = predict_errors(&pr, 2, 1000, 0.1, 0.0).unwrap();
        assert!((e.var_m_bound_approx - (0.25 + e.delta) / (1000.0 * e.gamma * e.gamma)).abs() < 1e-15);
    }

    #[test]
    fn left_endpoint_values() {
        let theta0 = (1f64.exp() + 1.0) / 2.0;
        let (g, h) = gh_theta_ue(1.0, theta0);
        assert!((g - 6.55).abs() < 0.01, "{g}");
        assert!((h - 10.07).abs() < 0.01, "{h}");
        assert!((psi(0.85) - 1.0).abs() < 0.01);
    }

    #[test]
    fn theta_forms_match_probability_forms() {
        for &eps in &[0.3, 1.0, 2.5] {
            let (lo, hi) = theta_range(eps).unwrap();
            for i in 0..5 {
                let theta = lo + (hi - lo) * i as f64 / 5.0;
                let (e1, e2) = theta_split(eps, theta).unwrap();
                let (g, h) = gh_ue(e1, e2).unwrap();
                let (gt, ht) = gh_theta_ue(eps, theta);
                assert!((g / gt - 1.0).abs() < 1e-9 && (h / ht - 1.0).abs() < 1e-9);
                for dp in [3, 10, 200] {
                    let (g, h) = gh_grr(e1, e2, dp).unwrap();
                    let (g2, h2) = gh(&probs_grr(e1, e2, dp).unwrap());
                    let (gt, ht) = gh_theta_grr(eps, theta, dp);
                    assert!((g / gt - 1.0).abs() < 1e-9 && (h / ht - 1.0).abs() < 1e-9);
                    assert!((g / g2 - 1.0).abs() < 1e-9 && (h / h2 - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn scan_argmin_is_left_endpoint_when_condition_holds() {
        for &eps in &[0.85, 1.0, 2.0, 4.0] {
            for &m2 in &[0.0, 0.25, 0.5] {
                let s = allocation_objective_scan(eps, m2, 2000).unwrap();
                assert_eq!(s.argmin.theta, s.points[0].theta, "eps={eps} m2={m2}");
            }
        }
    }

    #[test]
    fn optimized_beats_naive_and_non_optimized() {
        for &eps in &[0.5, 1.0, 2.0, 4.0] {
            let phi = |s| {
                let (e1, e2) = allocate(eps, 1, Mechanism::Ue, s).unwrap();
                objective_for_split(Mechanism::Ue, e1, e2, 0, 1.0).unwrap()
            };
            let opt = phi(Strategy::Optimized);
            assert!(opt <= phi(Strategy::Naive));
            assert!(opt <= phi(Strategy::NonOptimized));
        }
    }

    #[test]
    fn mechanism_choice_examples() {
        assert_eq!(choose_mechanism(26_744, 100, 1.0, Objective::Frequency), Mechanism::Grr);
        assert_eq!(choose_mechanism(26_744, 100, 1.0, Objective::Mean), Mechanism::Grr);
        assert_eq!(choose_mechanism(2, 1, 1.0, Objective::Frequency), Mechanism::Grr);
        assert_eq!(choose_mechanism(10_000_000, 3, 2.0, Objective::Frequency), Mechanism::Ue);
        assert_eq!(choose_mechanism(10_000_000, 3, 2.0, Objective::Mean), Mechanism::Ue);
    }

    proptest! {
        #[test]
        fn predictions_are_non_negative(
            e1 in 0.05f64..5.0, e2 in 0.05f64..5.0,
            ell in 1usize..10, n in 1usize..1_000_000, f in 0.001f64..1.0, m in -1.0f64..1.0,
        ) {
            let pr = probs_ue(e1, e2).unwrap();
            let e = predict_errors(&pr, ell, n, f, m).unwrap();
            prop_assert!(e.var_f >= 0.0 && e.mse_f_approx >= 0.0 && e.mse_m_approx >= 0.0);
            prop_assert!(e.g > 0.0 && e.h > 0.0);
        }

        #[test]
        fn large_domain_prefers_unary_encoding(ell in 1usize..20, eps in 0.1f64..6.0) {
            let d = 1usize << 40;
            prop_assert_eq!(choose_mechanism(d, ell, eps, Objective::Frequency), Mechanism::Ue);
            prop_assert_eq!(choose_mechanism(d, ell, eps, Objective::Mean), Mechanism::Ue);
        }
    }
}
