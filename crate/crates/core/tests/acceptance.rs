//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Pass criterion numbers as arguments to
//! run a subset, e.g. `cargo test -p pckv --test acceptance -- 1 2 6`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use pckv::audit::{audit_grr, audit_ue};
use pckv::budget::{allocate, compose, compose_grr, compose_ue, probs_grr, probs_ue, Mechanism, PerturbProbs, Strategy};
use pckv::datagen::{gen_synthetic, SynthConfig};
use pckv::estimation::{calibrate_pair, estimate_frequency, estimate_mean_baseline};
use pckv::experiment::{collect_counts, compare_allocations, run_on, Protocol, RunConfig};
use pckv::rng::{derive_seed, stream, Purpose};
use pckv::theory::{allocation_objective_scan, choose_mechanism, gh_theta_ue, predict_errors, psi, Objective};
use rand::Rng;

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "composition tightness", limit: secs(1), run: c1_composition },
        Criterion { id: 2, name: "exact privacy audit", limit: secs(30), run: c2_audit },
        Criterion { id: 3, name: "frequency unbiasedness and variance", limit: secs(120), run: c3_frequency },
        Criterion { id: 4, name: "mean estimator consistency", limit: secs(180), run: c4_mean },
        Criterion { id: 5, name: "count calibration", limit: secs(5), run: c5_calibration },
        Criterion { id: 6, name: "allocation optimality", limit: secs(5), run: c6_allocation },
        Criterion { id: 7, name: "mechanisms beat PrivKV", limit: secs(600), run: c7_vs_privkv },
        Criterion { id: 8, name: "allocation ordering", limit: secs(600), run: c8_allocations },
        Criterion { id: 9, name: "top-10 precision", limit: secs(600), run: c9_precision },
        Criterion { id: 10, name: "mechanism-choice rule", limit: secs(900), run: c10_choice },
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria.iter().filter(|c| wanted.is_empty() || wanted.contains(&c.id)) {
        let start = Instant::now();
        let outcome = (c.run)();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if took <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; runtime over {:.0} s limit", c.limit.as_secs_f64())),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {} [{:.1} s] {}",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            took.as_secs_f64(),
            detail
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c1_composition() -> Outcome {
    let mut rng = stream(1, Purpose::Perturb, 0);
    for _ in 0..100 {
        let e1 = 4.0 * (1.0 - rng.random::<f64>());
        let e2 = 4.0 * (1.0 - rng.random::<f64>());
        let ue = compose_ue(e1, e2).unwrap();
        ensure(ue <= e1 + e2 + 1e-12, || format!("compose_ue({e1}, {e2}) = {ue} exceeds the sum"))?;
        for ell in [1, 2, 5, 20] {
            let grr = compose_grr(e1, e2, ell).unwrap();
            ensure(grr <= ue + 1e-12, || format!("compose_grr({e1}, {e2}, {ell}) = {grr} > {ue}"))?;
        }
    }
    let mut worst: f64 = 0.0;
    for i in 1..=80 {
        let eps = i as f64 * 0.1;
        for ell in [1, 2, 10, 100] {
            for mech in [Mechanism::Ue, Mechanism::Grr] {
                let (e1, e2) = allocate(eps, ell, mech, Strategy::Optimized).unwrap();
                let err = (compose(mech, e1, e2, ell).unwrap() - eps).abs();
                worst = worst.max(err);
                ensure(err <= 1e-12, || format!("{mech} round trip at eps={eps}, ell={ell} off by {err:e}"))?;
            }
        }
    }
    Ok(format!("worst round-trip error {worst:.1e}"))
}

fn c2_audit() -> Outcome {
    let mut problems = Vec::new();
    let mut checked = 0;
    for eps in [0.5, 1.0, 2.0] {
        for d in [2usize, 3] {
            for ell in [1usize, 2, 3] {
                let (e1, e2) = allocate(eps, ell, Mechanism::Ue, Strategy::Optimized).unwrap();
                let ue = audit_ue(d, ell, &probs_ue(e1, e2).unwrap()).map_err(|e| e.to_string())?;
                let (g1, g2) = allocate(eps, ell, Mechanism::Grr, Strategy::Optimized).unwrap();
                let grr = audit_grr(d, ell, &probs_grr(g1, g2, d + ell).unwrap()).map_err(|e| e.to_string())?;
                checked += 2;
                for r in [&ue, &grr] {
                    if r.ln_max_ratio > eps + 1e-9 {
                        problems.push(format!("{} unsound at eps={eps} d={d} ell={ell}: {}", r.mechanism, r.ln_max_ratio));
                    }
                }
                if (ue.ln_max_ratio - eps).abs() > 1e-9 {
                    problems.push(format!(
                        "ue not tight at eps={eps} d={d} ell={ell}: ln ratio {:.6}",
                        ue.ln_max_ratio
                    ));
                }
            }
            // ℓ-dependence at a fixed split (the ℓ = 1 optimum)
            let (e1, e2) = allocate(eps, 1, Mechanism::Ue, Strategy::Optimized).unwrap();
            let ue: Vec<f64> = (1..=3)
                .map(|ell| audit_ue(d, ell, &probs_ue(e1, e2).unwrap()).unwrap().max_ratio)
                .collect();
            let grr: Vec<f64> = (1..=3)
                .map(|ell| audit_grr(d, ell, &probs_grr(e1, e2, d + ell).unwrap()).unwrap().max_ratio)
                .collect();
            if ue.iter().any(|r| (r - ue[0]).abs() > 1e-9) {
                problems.push(format!("ue ratio varies with ell at eps={eps} d={d}: {ue:.6?}"));
            }
            if !(grr[0] > grr[1] && grr[1] > grr[2]) {
                problems.push(format!("grr ratio not decreasing at eps={eps} d={d}: {grr:.6?}"));
            }
        }
    }
    if problems.is_empty() {
        Ok(format!("{checked} audits sound, unary encoding tight"))
    } else {
        Err(problems.join("; "))
    }
}

const C3_N: usize = 200_000;
const C3_D: usize = 20;
const C3_REPEATS: usize = 50;

fn c3_frequency() -> Outcome {
    let s = gen_synthetic(&SynthConfig::uniform(C3_N, C3_D, 3)).map_err(|e| e.to_string())?;
    let (e1, e2) = allocate(1.0, 1, Mechanism::Ue, Strategy::Optimized).unwrap();
    let probs = probs_ue(e1, e2).unwrap();
    let runs: Vec<Vec<f64>> = (0..C3_REPEATS)
        .map(|r| {
            let c = collect_counts(&s.data, Mechanism::Ue, probs, 1, derive_seed(30, r as u64)).unwrap();
            estimate_frequency(&c, &probs, 1).unwrap()
        })
        .collect();
    let reps = C3_REPEATS as f64;
    let mut worst_z: f64 = 0.0;
    let (mut emp, mut pred) = (0.0, 0.0);
    for k in 0..C3_D {
        let f = s.truth.freq[k];
        let var = predict_errors(&probs, 1, C3_N, f, 0.0).unwrap().var_f;
        let mean = runs.iter().map(|r| r[k]).sum::<f64>() / reps;
        let sample_var = runs.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / (reps - 1.0);
        worst_z = worst_z.max((mean - f).abs() / (var / reps).sqrt());
        emp += sample_var;
        pred += var;
    }
    let ratio = emp / pred;
    ensure(worst_z <= 4.0, || format!("a key mean is {worst_z:.2} sigma from truth"))?;
    ensure((1.0 / 1.3..=1.3).contains(&ratio), || format!("empirical/predicted variance {ratio:.3}"))?;
    Ok(format!("max |z| {worst_z:.2}, pooled variance ratio {ratio:.3}"))
}

/// Mean over keys of the empirical MSE of the baseline mean estimator, and of its prediction.
fn mean_mse(n: usize, seed: u64) -> (f64, f64) {
    let s = gen_synthetic(&SynthConfig::uniform(n, C3_D, seed)).unwrap();
    let (e1, e2) = allocate(3.0, 1, Mechanism::Ue, Strategy::Optimized).unwrap();
    let probs = probs_ue(e1, e2).unwrap();
    let runs: Vec<Vec<f64>> = (0..C3_REPEATS)
        .map(|r| {
            let c = collect_counts(&s.data, Mechanism::Ue, probs, 1, derive_seed(seed + 40, r as u64)).unwrap();
            estimate_mean_baseline(&c, &probs, 1).unwrap()
        })
        .collect();
    let (mut emp, mut pred) = (0.0, 0.0);
    for k in 0..C3_D {
        let m = s.truth.mean[k].unwrap();
        emp += runs.iter().map(|r| (r[k] - m).powi(2)).sum::<f64>() / C3_REPEATS as f64;
        pred += predict_errors(&probs, 1, n, s.truth.freq[k], m).unwrap().mse_m_approx;
    }
    (emp / C3_D as f64, pred / C3_D as f64)
}

fn c4_mean() -> Outcome {
    let (emp, pred) = mean_mse(C3_N, 4);
    let (emp4, _) = mean_mse(4 * C3_N, 4);
    let ratio = emp / pred;
    let shrink = emp / emp4;
    ensure((0.5..=2.0).contains(&ratio), || format!("empirical/predicted MSE {ratio:.3}"))?;
    ensure((3.0..=5.0).contains(&shrink), || format!("4x users shrink MSE by {shrink:.3}"))?;
    Ok(format!("MSE ratio to prediction {ratio:.3}, shrink factor {shrink:.3}"))
}

fn c5_calibration() -> Outcome {
    let probs = PerturbProbs::new(0.5, 0.25, 0.75).unwrap();
    let (holders_up, n) = (600usize, 1000usize);
    let trials = 500;
    let mut rng = stream(5, Purpose::Perturb, 0);
    let mut est = Vec::with_capacity(trials);
    for _ in 0..trials {
        let (mut n1, mut n2) = (0u32, 0u32);
        for u in 0..n {
            let x: f64 = rng.random();
            if u < holders_up {
                // sampled ⟨k, +1⟩
                if x < probs.a * probs.p {
                    n1 += 1;
                } else if x < probs.a {
                    n2 += 1;
                }
            } else if x < probs.b / 2.0 {
                n1 += 1;
            } else if x < probs.b {
                n2 += 1;
            }
        }
        est.push(calibrate_pair(f64::from(n1), f64::from(n2), n as f64, &probs).unwrap());
    }
    let t = trials as f64;
    let mut zs = Vec::new();
    for (pick, truth) in [(0usize, holders_up as f64), (1, 0.0)] {
        let xs: Vec<f64> = est.iter().map(|e| if pick == 0 { e.0 } else { e.1 }).collect();
        let mean = xs.iter().sum::<f64>() / t;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (t - 1.0)).sqrt();
        let z = (mean - truth) / (sd / t.sqrt());
        ensure(z.abs() <= 4.0, || format!("count {} mean {mean:.2} is {z:.2} sigma from {truth}", pick + 1))?;
        zs.push(z);
    }
    Ok(format!("z scores {:.2}, {:.2}", zs[0], zs[1]))
}

fn c6_allocation() -> Outcome {
    let mut worst: f64 = 0.0;
    for eps in [1.0, 2.0, 4.0] {
        for m2 in [0.0, 0.5, 1.0] {
            if !(eps >= 0.85 || m2 <= 0.5) || psi(eps) < m2 {
                continue;
            }
            let scan = allocation_objective_scan(eps, m2, 10_000).map_err(|e| e.to_string())?;
            let theta0 = (eps.exp() + 1.0) / 2.0;
            let (g, h) = gh_theta_ue(eps, theta0);
            let ratio = (g + h * m2) / scan.argmin.phi;
            worst = worst.max(ratio);
            ensure(ratio <= 1.05, || format!("eps={eps} m*^2={m2}: Phi(theta0)/min = {ratio:.4}"))?;
        }
    }
    Ok(format!("worst Phi(theta0)/grid min {worst:.4}"))
}

fn uniform_million(seed: u64) -> (pckv::Dataset, pckv::TrueStats) {
    let s = gen_synthetic(&SynthConfig::uniform(1_000_000, 100, seed)).unwrap();
    (s.data, s.truth)
}

fn c7_vs_privkv() -> Outcome {
    let (data, truth) = uniform_million(7);
    let mut notes = Vec::new();
    for eps in [2.0, 5.0] {
        let run = |p| {
            let mut cfg = RunConfig::new(p, eps, 1);
            cfg.seed = 70;
            run_on(&data, &truth, &cfg).unwrap()
        };
        let base = run(Protocol::PrivKv);
        for p in [Protocol::PckvUe, Protocol::PckvGrr] {
            let m = run(p);
            ensure(m.mse_freq < base.mse_freq && m.mse_mean < base.mse_mean, || {
                format!(
                    "{p} at eps={eps}: freq {:.2e} vs {:.2e}, mean {:.2e} vs {:.2e}",
                    m.mse_freq, base.mse_freq, m.mse_mean, base.mse_mean
                )
            })?;
            notes.push(format!(
                "{p}@{eps}: freq x{:.0}, mean x{:.0}",
                base.mse_freq / m.mse_freq,
                base.mse_mean / m.mse_mean
            ));
        }
    }
    Ok(format!("PrivKV/PCKV MSE ratios: {}", notes.join(", ")))
}

fn c8_allocations() -> Outcome {
    let (data, truth) = uniform_million(8);
    let mut base = RunConfig::new(Protocol::PckvUe, 1.0, 1);
    base.seed = 80;
    base.repeats = 2;
    let rows = compare_allocations(&data, &truth, &[0.5, 1.0, 2.0, 4.0], &base).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for chunk in rows.chunks(3) {
        let get = |s: Strategy| chunk.iter().find(|r| r.strategy == s).unwrap().mse_mean;
        let (opt, non, naive) = (get(Strategy::Optimized), get(Strategy::NonOptimized), get(Strategy::Naive));
        let eps = chunk[0].eps;
        ensure(opt <= non * 1.05 && non <= naive * 1.05, || {
            format!("eps={eps}: optimized {opt:.4}, non-optimized {non:.4}, naive {naive:.4}")
        })?;
        notes.push(format!("{eps}: {opt:.4}/{non:.4}/{naive:.4}"));
    }
    Ok(format!("mse_mean opt/non/naive {}", notes.join(", ")))
}

fn c9_precision() -> Outcome {
    let mut notes = Vec::new();
    let mut low = Vec::new();
    for d in [100usize, 500, 1000, 2000] {
        let s = gen_synthetic(&SynthConfig::gaussian(1_000_000, d, 9)).unwrap();
        let mut cfg = RunConfig::new(Protocol::PckvUe, 3.0, 1);
        cfg.top_n = Some(10);
        cfg.repeats = 3;
        cfg.seed = 90;
        let p = run_on(&s.data, &s.truth, &cfg).unwrap().precision_top_n.unwrap();
        notes.push(format!("d={d}: {p:.2}"));
        if p < 0.6 {
            low.push(d);
        }
    }
    let detail = format!("precision {}", notes.join(", "));
    if low.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; below 0.6 at d in {low:?}"))
    }
}

fn c10_choice() -> Outcome {
    let mut notes = Vec::new();
    let mut bad = Vec::new();
    for (d, ell, n) in [(100usize, 1usize, 200_000usize), (50_000, 2, 200_000), (25_000, 100, 50_000)] {
        let mut cfg = SynthConfig::uniform(n, d, 10);
        cfg.pairs_per_user = ell;
        let s = gen_synthetic(&cfg).unwrap();
        for eps in [1.0, 5.0] {
            let run = |p| {
                let mut c = RunConfig::new(p, eps, ell);
                c.seed = 100;
                run_on(&s.data, &s.truth, &c).unwrap()
            };
            let ue = run(Protocol::PckvUe);
            let grr = run(Protocol::PckvGrr);
            for (objective, u, g) in [
                (Objective::Frequency, ue.mse_freq, grr.mse_freq),
                (Objective::Mean, ue.mse_mean, grr.mse_mean),
            ] {
                let rule = choose_mechanism(d, ell, eps, objective);
                let better = if u <= g { Mechanism::Ue } else { Mechanism::Grr };
                let gap = (u - g).abs() / u.max(g);
                let tag = format!("({d},{ell},{eps},{objective:?}) rule {rule} ue {u:.3e} grr {g:.3e}");
                if rule != better && gap >= 0.2 {
                    bad.push(tag);
                } else {
                    notes.push(tag);
                }
            }
        }
    }
    if bad.is_empty() {
        Ok(format!("{} comparisons agree", notes.len()))
    } else {
        Err(format!("disagreements: {}", bad.join("; ")))
    }
}
