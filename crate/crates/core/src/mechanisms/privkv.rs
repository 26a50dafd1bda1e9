use rand::Rng;

use super::report::PrivKvReport;
use crate::error::{invalid, Result};
use crate::model::UserRecord;
use crate::sampling::discretize;

/// Keep probability of each of the two randomized-response steps, `e^{ε/2} / (e^{ε/2} + 1)`.
pub fn privkv_keep_prob(eps_total: f64) -> f64 {
    let h = (eps_total / 2.0).exp();
    if h.is_infinite() {
        1.0
    } else {
        h / (h + 1.0)
    }
}

/// Single-iteration PrivKV: sample an index uniformly from the key domain,
/// report the possession bit through randomized response and, when the
/// reported bit is 1, a randomized-response copy of the discretized value
/// (0 for keys the user does not hold). Key and value each spend `ε/2`.
pub fn perturb_privkv<R: Rng + ?Sized>(
    record: &UserRecord,
    eps_total: f64,
    d: usize,
    rng: &mut R,
) -> Result<PrivKvReport> {
    if eps_total.is_nan() || eps_total <= 0.0 {
        return Err(invalid(format!("total budget must be positive, got {eps_total}")));
    }
    if d == 0 {
        return Err(invalid("key domain must be non-empty"));
    }
    let keep = privkv_keep_prob(eps_total);
    let index = rng.random_range(1..=d as u32);
    let held = record.value_of(index);
    let true_bit = u8::from(held.is_some());
    let key_bit = if rng.random::<f64>() < keep { true_bit } else { 1 - true_bit };
    let v = discretize(held.unwrap_or(0.0), rng);
    let v = if rng.random::<f64>() < keep { v } else { -v };
    let value = if key_bit == 1 { v } else { 0 };
    Ok(PrivKvReport { index, key_bit, value })
}
