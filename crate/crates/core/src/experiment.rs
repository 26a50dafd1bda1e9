//! End-to-end runs: perturb every user, aggregate, estimate and score.
//!
//! Each repeat derives its own seed from the experiment seed, and every
//! user draws from an independent stream keyed by its index, so results do
//! not depend on the thread count. Users are processed in fixed-size
//! chunks whose counts are merged in chunk order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::budget::{BudgetSpec, Mechanism, PerturbProbs, Strategy};
use crate::datagen::{gen_synthetic, load_csv, SynthConfig};
use crate::error::{invalid, Error, Result};
use crate::estimation::{estimate_corrected, estimate_privkv, Estimates, PrivKvCounts, SupportCounts};
use crate::mechanisms::{perturb_privkv, GrrMechanism, UeMechanism};
use crate::model::{true_stats, Dataset, TrueStats};
use crate::rng::{derive_seed, stream, Purpose};
use crate::theory::{predict_errors, ErrorPrediction};

const CHUNK: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    PckvUe,
    PckvGrr,
    PrivKv,
}

impl Protocol {
    pub fn mechanism(self) -> Option<Mechanism> {
        match self {
            Protocol::PckvUe => Some(Mechanism::Ue),
            Protocol::PckvGrr => Some(Mechanism::Grr),
            Protocol::PrivKv => None,
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Protocol::PckvUe => "pckv-ue",
            Protocol::PckvGrr => "pckv-grr",
            Protocol::PrivKv => "privkv",
        })
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pckv-ue" | "ue" => Ok(Protocol::PckvUe),
            "pckv-grr" | "grr" => Ok(Protocol::PckvGrr),
            "privkv" => Ok(Protocol::PrivKv),
            other => Err(Error::UnknownMechanism(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    Synthetic(SynthConfig),
    Csv { path: String, rating_min: f64, rating_max: f64 },
}

impl DataSource {
    pub fn load(&self) -> Result<(Dataset, TrueStats)> {
        match self {
            DataSource::Synthetic(cfg) => {
                let s = gen_synthetic(cfg)?;
                Ok((s.data, s.truth))
            }
            DataSource::Csv { path, rating_min, rating_max } => {
                let data = load_csv(path, *rating_min, *rating_max)?.data;
                let truth = true_stats(&data);
                Ok((data, truth))
            }
        }
    }
}

/// Mechanism parameters of a run, independent of the data source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub protocol: Protocol,
    pub eps: f64,
    pub ell: usize,
    pub strategy: Strategy,
    /// Explicit `(ε1, ε2)` for the manual strategy.
    pub manual: Option<(f64, f64)>,
    pub repeats: usize,
    pub top_n: Option<usize>,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(protocol: Protocol, eps: f64, ell: usize) -> Self {
        Self { protocol, eps, ell, strategy: Strategy::Optimized, manual: None, repeats: 1, top_n: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub run: RunConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "n")]
pub enum Scope {
    AllKeys,
    TopNTrue(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyMetrics {
    pub key: u32,
    pub f_true: f64,
    pub m_true: Option<f64>,
    /// Averages over repeats.
    pub f_hat: f64,
    pub m_hat: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted: Option<ErrorPrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub protocol: Protocol,
    pub eps: f64,
    pub ell: usize,
    pub strategy: Strategy,
    pub eps_key: f64,
    pub eps_value: f64,
    pub probs: Option<PerturbProbs>,
    pub n: usize,
    pub d: usize,
    pub repeats: usize,
    pub scope: Scope,
    pub mse_freq: f64,
    /// Over keys in scope whose true mean is defined.
    pub mse_mean: f64,
    pub mean_keys: usize,
    pub precision_top_n: Option<f64>,
    pub per_key: Vec<KeyMetrics>,
}

/// Budget split and probabilities of a run; `None` probabilities for PrivKV.
pub fn resolve_budget(run: &RunConfig, d: usize) -> Result<(f64, f64, Option<PerturbProbs>)> {
    match run.protocol.mechanism() {
        None => Ok((run.eps / 2.0, run.eps / 2.0, None)),
        Some(mech) => {
            let spec = match (run.strategy, run.manual) {
                (Strategy::Manual, Some((e1, e2))) => BudgetSpec::manual(e1, e2, run.ell, d, mech)?,
                (Strategy::Manual, None) => return Err(invalid("manual strategy needs explicit budgets")),
                (s, _) => BudgetSpec::allocate(run.eps, run.ell, d, mech, s)?,
            };
            Ok((spec.eps_key, spec.eps_value, Some(spec.probs()?)))
        }
    }
}

fn chunks(n: usize) -> Vec<std::ops::Range<usize>> {
    (0..n).step_by(CHUNK).map(|s| s..(s + CHUNK).min(n)).collect()
}

/// Perturb every user with a PCKV mechanism and tally the reports.
pub fn collect_counts(data: &Dataset, mechanism: Mechanism, probs: PerturbProbs, ell: usize, seed: u64) -> Result<SupportCounts> {
    let d = data.d();
    let users = data.users();
    let parts: Vec<SupportCounts> = match mechanism {
        Mechanism::Ue => {
            let m = UeMechanism::new(probs, ell, d)?;
            chunks(users.len())
                .into_par_iter()
                .map(|range| {
                    let mut c = SupportCounts::new(d, d + ell);
                    for u in range {
                        let mut rng = stream(seed, Purpose::Perturb, u as u64);
                        c.add_ue_sparse(&m.perturb_sparse(&users[u], &mut rng));
                    }
                    c
                })
                .collect()
        }
        Mechanism::Grr => {
            let m = GrrMechanism::new(probs, ell, d)?;
            chunks(users.len())
                .into_par_iter()
                .map(|range| {
                    let mut c = SupportCounts::new(d, d + ell);
                    for u in range {
                        let mut rng = stream(seed, Purpose::Perturb, u as u64);
                        c.add_grr(&m.perturb(&users[u], &mut rng));
                    }
                    c
                })
                .collect()
        }
    };
    let mut total = SupportCounts::new(d, d + ell);
    for p in &parts {
        total.merge(p)?;
    }
    Ok(total)
}

pub fn collect_privkv(data: &Dataset, eps: f64, seed: u64) -> Result<PrivKvCounts> {
    let d = data.d();
    let users = data.users();
    let parts: Vec<PrivKvCounts> = chunks(users.len())
        .into_par_iter()
        .map(|range| {
            let mut c = PrivKvCounts::new(d);
            for u in range {
                let mut rng = stream(seed, Purpose::Perturb, u as u64);
                c.add(&perturb_privkv(&users[u], eps, d, &mut rng)?);
            }
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let mut total = PrivKvCounts::new(d);
    for p in &parts {
        total.merge(p)?;
    }
    Ok(total)
}

/// One repeat of a run: corrected estimates for keys `1..=d`.
pub fn estimate_once(data: &Dataset, run: &RunConfig, repeat: usize) -> Result<Estimates> {
    let seed = derive_seed(run.seed, repeat as u64);
    let (_, _, probs) = resolve_budget(run, data.d())?;
    match (run.protocol.mechanism(), probs) {
        (Some(mech), Some(probs)) => {
            let counts = collect_counts(data, mech, probs, run.ell, seed)?;
            estimate_corrected(&counts, &probs, run.ell)
        }
        _ => estimate_privkv(&collect_privkv(data, run.eps, seed)?, run.eps),
    }
}

/// Keys ranked by descending score, ties by ascending key.
pub fn top_keys(scores: &[f64], n: usize) -> Vec<u32> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    idx.into_iter().take(n).map(|i| i as u32 + 1).collect()
}

/// `|top-N by estimate ∩ top-N by truth| / N`.
pub fn precision_top_n(estimates: &[f64], truth: &[f64], n: usize) -> Result<f64> {
    if n == 0 || n > truth.len() || estimates.len() != truth.len() {
        return Err(invalid(format!("top-N needs 1 <= N <= d, got N = {n}")));
    }
    let want = top_keys(truth, n);
    let got = top_keys(estimates, n);
    let hits = got.iter().filter(|k| want.contains(k)).count();
    Ok(hits as f64 / n as f64)
}

fn squared_errors(est: &Estimates, truth: &TrueStats, keys: &[u32]) -> (f64, f64, usize) {
    let mut sf = 0.0;
    let mut sm = 0.0;
    let mut nm = 0;
    for &k in keys {
        let i = k as usize - 1;
        sf += (est.f_hat[i] - truth.freq[i]).powi(2);
        if let Some(m) = truth.mean[i] {
            sm += (est.m_hat[i] - m).powi(2);
            nm += 1;
        }
    }
    let mf = sf / keys.len() as f64;
    let mm = if nm > 0 { sm / nm as f64 } else { 0.0 };
    (mf, mm, nm)
}

pub fn run_on(data: &Dataset, truth: &TrueStats, run: &RunConfig) -> Result<MetricsReport> {
    if run.repeats == 0 {
        return Err(invalid("repeats must be at least 1"));
    }
    if run.ell == 0 {
        return Err(invalid("ell must be at least 1"));
    }
    let d = data.d();
    if truth.d() != d {
        return Err(invalid("ground truth does not match the dataset domain"));
    }
    let (eps_key, eps_value, probs) = resolve_budget(run, d)?;
    let scope = match run.top_n {
        Some(n) if n == 0 || n > d => return Err(invalid(format!("top-N needs 1 <= N <= {d}"))),
        Some(n) => Scope::TopNTrue(n),
        None => Scope::AllKeys,
    };
    let keys: Vec<u32> = match scope {
        Scope::AllKeys => (1..=d as u32).collect(),
        Scope::TopNTrue(n) => top_keys(&truth.freq, n),
    };
    let mut mse_f = 0.0;
    let mut mse_m = 0.0;
    let mut mean_keys = 0;
    let mut precision = 0.0;
    let mut f_sum = vec![0.0; d];
    let mut m_sum = vec![0.0; d];
    for r in 0..run.repeats {
        let est = estimate_once(data, run, r)?;
        let (mf, mm, nm) = squared_errors(&est, truth, &keys);
        mse_f += mf;
        mse_m += mm;
        mean_keys = nm;
        if let Some(n) = run.top_n {
            precision += precision_top_n(&est.f_hat, &truth.freq, n)?;
        }
        for i in 0..d {
            f_sum[i] += est.f_hat[i];
            m_sum[i] += est.m_hat[i];
        }
    }
    let reps = run.repeats as f64;
    let per_key = (0..d)
        .map(|i| {
            let predicted = match (probs, truth.mean[i]) {
                (Some(pr), Some(m)) if truth.freq[i] > 0.0 => {
                    predict_errors(&pr, run.ell, data.n(), truth.freq[i], m).ok()
                }
                _ => None,
            };
            KeyMetrics {
                key: i as u32 + 1,
                f_true: truth.freq[i],
                m_true: truth.mean[i],
                f_hat: f_sum[i] / reps,
                m_hat: m_sum[i] / reps,
                predicted,
            }
        })
        .collect();
    Ok(MetricsReport {
        protocol: run.protocol,
        eps: run.eps,
        ell: run.ell,
        strategy: run.strategy,
        eps_key,
        eps_value,
        probs,
        n: data.n(),
        d,
        repeats: run.repeats,
        scope,
        mse_freq: mse_f / reps,
        mse_mean: mse_m / reps,
        mean_keys,
        precision_top_n: run.top_n.map(|_| precision / reps),
        per_key,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    let (data, truth) = cfg.source.load()?;
    run_on(&data, &truth, &cfg.run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationRow {
    pub eps: f64,
    pub strategy: Strategy,
    pub eps_key: f64,
    pub eps_value: f64,
    pub mse_freq: f64,
    pub mse_mean: f64,
}

/// Run the optimized, naive and non-optimized splits under identical seeds.
pub fn compare_allocations(data: &Dataset, truth: &TrueStats, eps_list: &[f64], base: &RunConfig) -> Result<Vec<AllocationRow>> {
    if base.protocol == Protocol::PrivKv {
        return Err(invalid("allocation strategies apply to the PCKV mechanisms only"));
    }
    let mut rows = Vec::new();
    for &eps in eps_list {
        for strategy in Strategy::ALLOCATING {
            let run = RunConfig { eps, strategy, manual: None, ..base.clone() };
            let m = run_on(data, truth, &run)?;
            rows.push(AllocationRow {
                eps,
                strategy,
                eps_key: m.eps_key,
                eps_value: m.eps_value,
                mse_freq: m.mse_freq,
                mse_mean: m.mse_mean,
            });
        }
    }
    Ok(rows)
}

/// Padding lengths of the rating datasets, plus the synthetic default.
pub const ELL_PRESETS: [(&str, usize); 5] =
    [("synthetic", 1), ("ecommerce", 1), ("clothing", 2), ("amazon", 2), ("movie", 100)];

pub fn ell_preset(name: &str) -> Option<usize> {
    let name = name.to_ascii_lowercase();
    ELL_PRESETS.iter().find(|(k, _)| *k == name).map(|&(_, l)| l)
}
