use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use pckv::audit::{audit, AuditOptions};
use pckv::budget::{BudgetSpec, Mechanism, Strategy};
use pckv::datagen::{gen_synthetic, load_csv, KeyDistribution, SynthConfig};
use pckv::estimation::{aggregate, aggregate_privkv, estimate_corrected, estimate_privkv};
use pckv::experiment::{compare_allocations, ell_preset, run_on, Protocol, RunConfig, ELL_PRESETS};
use pckv::mechanisms::{perturb_privkv, GrrMechanism, Report, ReportKind, UeMechanism};
use pckv::model::{true_stats, Dataset, TrueStats};
use pckv::rng::{derive_seed, stream, Purpose};
use pckv::theory::{
    allocation_objective_scan, allocation_objective_scan_grr, choose_mechanism, predict_errors, Objective,
    DEFAULT_GRID,
};

#[derive(Parser)]
#[command(name = "pckv", version, about = "Key-value collection under local differential privacy")]
struct Cli {
    /// Master seed for data generation and perturbation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as `user,key,value` lines.
    Gen(SynthArgs),
    /// Per-key frequency and mean of a dataset.
    Stats(DataArgs),
    /// Split a budget and derive perturbation probabilities.
    Allocate(AllocateArgs),
    /// Perturb, estimate and score against the ground truth.
    Run(RunArgs),
    /// Exhaustively check the privacy-ratio bound on a small domain.
    Audit(AuditArgs),
    /// Allocation objective over the admissible key budgets.
    Scan(ScanArgs),
    /// Compare the optimized, non-optimized and naive splits.
    Compare(CompareArgs),
    /// Closed-form error predictions for one key.
    Predict(PredictArgs),
    /// Mechanism with the smaller predicted error.
    Choose(ChooseArgs),
    /// Perturb every user of a dataset and print one report per line.
    Perturb(PerturbArgs),
    /// Estimate frequencies and means from a file of reports.
    Estimate(EstimateArgs),
}

#[derive(Args, Clone)]
struct SynthArgs {
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    d: usize,
    #[arg(long, default_value = "uniform")]
    distribution: KeyDistribution,
    #[arg(long, default_value_t = 50.0)]
    sigma_key: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_mean: f64,
    #[arg(long, default_value_t = 1)]
    pairs_per_user: usize,
    /// Half-width of uniform jitter on each user's value.
    #[arg(long, default_value_t = 0.0)]
    value_noise: f64,
}

impl SynthArgs {
    fn config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            n: self.n,
            d: self.d,
            distribution: self.distribution,
            sigma_key: self.sigma_key,
            sigma_mean: self.sigma_mean,
            pairs_per_user: self.pairs_per_user,
            seed,
            value_noise: self.value_noise,
        }
    }
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Header-less `user,key,value` file; omit to generate synthetic data.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    rating_min: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    rating_max: f64,
    #[command(flatten)]
    synth: SynthArgs,
}

impl DataArgs {
    fn load(&self, seed: u64) -> Result<(Dataset, TrueStats)> {
        match &self.input {
            Some(path) => {
                let data = load_csv(path, self.rating_min, self.rating_max)
                    .with_context(|| format!("reading {}", path.display()))?
                    .data;
                let truth = true_stats(&data);
                Ok((data, truth))
            }
            None => {
                let s = gen_synthetic(&self.synth.config(derive_seed(seed, 0)))?;
                Ok((s.data, s.truth))
            }
        }
    }
}

#[derive(Args, Clone)]
struct BudgetArgs {
    #[arg(long)]
    eps: Option<f64>,
    /// Padding length; defaults to the preset or 1.
    #[arg(long)]
    ell: Option<usize>,
    /// Padding-length preset: synthetic, ecommerce, clothing, amazon, movie.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value = "optimized")]
    strategy: Strategy,
    /// Key budget for the manual strategy.
    #[arg(long)]
    eps_key: Option<f64>,
    /// Value budget for the manual strategy.
    #[arg(long)]
    eps_value: Option<f64>,
}

impl BudgetArgs {
    fn ell(&self) -> Result<usize> {
        match (&self.ell, &self.preset) {
            (Some(l), _) => Ok(*l),
            (None, Some(p)) => ell_preset(p).ok_or_else(|| {
                let names: Vec<&str> = ELL_PRESETS.iter().map(|(n, _)| *n).collect();
                anyhow!(pckv::Error::InvalidParameter(format!("unknown preset `{p}`; expected one of {names:?}")))
            }),
            (None, None) => Ok(1),
        }
    }

    fn manual(&self) -> Result<Option<(f64, f64)>> {
        match (self.strategy, self.eps_key, self.eps_value) {
            (Strategy::Manual, Some(k), Some(v)) => Ok(Some((k, v))),
            (Strategy::Manual, _, _) => Err(invalid("the manual strategy needs --eps-key and --eps-value")),
            _ => Ok(None),
        }
    }

    fn spec(&self, mechanism: Mechanism, d: usize) -> Result<BudgetSpec> {
        let ell = self.ell()?;
        Ok(match self.manual()? {
            Some((k, v)) => BudgetSpec::manual(k, v, ell, d, mechanism)?,
            None => BudgetSpec::allocate(self.eps()?, ell, d, mechanism, self.strategy)?,
        })
    }

    fn eps(&self) -> Result<f64> {
        self.eps.ok_or_else(|| invalid("--eps is required"))
    }
}

fn invalid(msg: &str) -> anyhow::Error {
    anyhow!(pckv::Error::InvalidParameter(msg.to_string()))
}

#[derive(Args)]
struct AllocateArgs {
    #[arg(long, default_value = "ue")]
    mechanism: Mechanism,
    /// Key domain size `d`.
    #[arg(long)]
    domain: usize,
    #[command(flatten)]
    budget: BudgetArgs,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "pckv-ue")]
    mechanism: Protocol,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Score only the N most frequent keys and report top-N precision.
    #[arg(long)]
    top_n: Option<usize>,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long, default_value = "ue")]
    mechanism: Mechanism,
    #[arg(long)]
    d: usize,
    #[command(flatten)]
    budget: BudgetArgs,
    /// Exact rational arithmetic (d + ell <= 5).
    #[arg(long)]
    exact: bool,
    /// Include value 0 in the input grid.
    #[arg(long)]
    with_zero: bool,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long)]
    eps: f64,
    /// Squared true mean `m*²`.
    #[arg(long, default_value_t = 0.0)]
    m2: f64,
    #[arg(long, default_value_t = DEFAULT_GRID)]
    grid: usize,
    #[arg(long, default_value = "ue")]
    mechanism: Mechanism,
    /// Padded domain size for the randomized-response scan.
    #[arg(long)]
    d_prime: Option<usize>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, default_value = "pckv-ue")]
    mechanism: Protocol,
    /// Comma-separated budgets.
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,4")]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    ell: usize,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long, default_value = "ue")]
    mechanism: Mechanism,
    #[arg(long)]
    domain: usize,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long)]
    n: usize,
    /// True frequency `f*`.
    #[arg(long)]
    f: f64,
    /// True mean `m*`.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    m: f64,
}

#[derive(Args)]
struct ChooseArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    ell: usize,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value = "mean")]
    objective: Objective,
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long, default_value = "pckv-ue")]
    mechanism: Protocol,
    #[command(flatten)]
    budget: BudgetArgs,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct EstimateArgs {
    /// One report per line, as printed by `perturb`.
    #[arg(long)]
    reports: PathBuf,
    #[arg(long, default_value = "pckv-ue")]
    mechanism: Protocol,
    /// Real key domain size `d`.
    #[arg(long)]
    d: usize,
    #[command(flatten)]
    budget: BudgetArgs,
}

struct Output {
    sink: Box<dyn Write>,
    format: Format,
}

impl Output {
    fn json<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer_pretty(&mut self.sink, value)?;
        writeln!(self.sink)?;
        Ok(())
    }

    fn csv(&mut self, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        writeln!(self.sink, "{}", header.join(","))?;
        for r in rows {
            writeln!(self.sink, "{}", r.join(","))?;
        }
        Ok(())
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.sink, "{s}")?;
        Ok(())
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn stats_rows(t: &TrueStats) -> Vec<Vec<String>> {
    (0..t.d())
        .map(|i| vec![(i + 1).to_string(), t.freq[i].to_string(), opt(t.mean[i])])
        .collect()
}

fn execute(cli: Cli) -> Result<()> {
    let sink: Box<dyn Write> = match &cli.out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    };
    let mut out = Output { sink, format: cli.format };
    let seed = cli.seed;
    match cli.command {
        Command::Gen(args) => {
            let s = gen_synthetic(&args.config(derive_seed(seed, 0)))?;
            match out.format {
                Format::Csv => {
                    for (u, rec) in s.data.users().iter().enumerate() {
                        for p in rec.pairs() {
                            out.line(&format!("{},{},{}", u + 1, p.key, p.value))?;
                        }
                    }
                }
                Format::Json => out.json(&json!({
                    "d": s.data.d(),
                    "users": s.data.users(),
                    "key_means": s.key_means,
                }))?,
            }
        }
        Command::Stats(args) => {
            let (data, truth) = args.load(seed)?;
            match out.format {
                Format::Csv => out.csv(&["key", "freq", "mean"], stats_rows(&truth))?,
                Format::Json => out.json(&json!({
                    "n": data.n(),
                    "d": data.d(),
                    "pairs": data.total_pairs(),
                    "max_record_len": data.max_record_len(),
                    "freq": truth.freq,
                    "mean": truth.mean,
                }))?,
            }
        }
        Command::Allocate(args) => {
            let spec = args.budget.spec(args.mechanism, args.domain)?;
            let probs = spec.probs()?;
            let row = json!({
                "mechanism": spec.mechanism,
                "strategy": spec.strategy,
                "eps": spec.eps_total,
                "composed": spec.composed()?,
                "ell": spec.ell,
                "d": spec.d,
                "d_prime": spec.d_prime,
                "eps_key": spec.eps_key,
                "eps_value": spec.eps_value,
                "a": probs.a,
                "b": probs.b,
                "p": probs.p,
            });
            match out.format {
                Format::Json => out.json(&row)?,
                Format::Csv => out.csv(
                    &["eps", "eps_key", "eps_value", "a", "b", "p"],
                    [vec![spec.eps_total, spec.eps_key, spec.eps_value, probs.a, probs.b, probs.p]
                        .into_iter()
                        .map(|x| x.to_string())
                        .collect()],
                )?,
            }
        }
        Command::Run(args) => {
            let (data, truth) = args.data.load(seed)?;
            let manual = args.budget.manual()?;
            let eps = match (manual, args.mechanism.mechanism()) {
                (Some(_), Some(mech)) => args.budget.spec(mech, data.d())?.eps_total,
                _ => args.budget.eps()?,
            };
            let run = RunConfig {
                protocol: args.mechanism,
                eps,
                ell: args.budget.ell()?,
                strategy: args.budget.strategy,
                manual,
                repeats: args.repeats,
                top_n: args.top_n,
                seed: derive_seed(seed, 1),
            };
            let report = run_on(&data, &truth, &run)?;
            match out.format {
                Format::Json => out.json(&report)?,
                Format::Csv => out.csv(
                    &["key", "f_true", "m_true", "f_hat", "m_hat", "var_f_pred", "mse_m_pred"],
                    report.per_key.iter().map(|k| {
                        vec![
                            k.key.to_string(),
                            k.f_true.to_string(),
                            opt(k.m_true),
                            k.f_hat.to_string(),
                            k.m_hat.to_string(),
                            opt(k.predicted.map(|p| p.var_f)),
                            opt(k.predicted.map(|p| p.mse_m_approx)),
                        ]
                    }),
                )?,
            }
        }
        Command::Audit(args) => {
            let spec = args.budget.spec(args.mechanism, args.d.max(2))?;
            let mut opts = AuditOptions { exact: args.exact, ..AuditOptions::default() };
            if args.with_zero {
                opts.value_grid = vec![-1.0, 0.0, 1.0];
            }
            let r = audit(args.mechanism, args.d, spec.ell, &spec.probs()?, &opts)?;
            match out.format {
                Format::Json => out.json(&r)?,
                Format::Csv => out.csv(
                    &["mechanism", "d", "ell", "ln_max_ratio", "theoretical_eps", "slack"],
                    [vec![
                        r.mechanism.to_string(),
                        r.d.to_string(),
                        r.ell.to_string(),
                        r.ln_max_ratio.to_string(),
                        r.theoretical_eps.to_string(),
                        r.slack.to_string(),
                    ]],
                )?,
            }
        }
        Command::Scan(args) => {
            let scan = match args.mechanism {
                Mechanism::Ue => allocation_objective_scan(args.eps, args.m2, args.grid)?,
                Mechanism::Grr => {
                    let dp = args.d_prime.ok_or_else(|| invalid("--d-prime is required for grr"))?;
                    allocation_objective_scan_grr(args.eps, args.m2, dp, args.grid)?
                }
            };
            match out.format {
                Format::Json => out.json(&scan)?,
                Format::Csv => out.csv(
                    &["theta", "eps_key", "eps_value", "phi", "g", "h"],
                    scan.points.iter().map(|p| {
                        [p.theta, p.eps_key, p.eps_value, p.phi, p.g, p.h].iter().map(|x| x.to_string()).collect()
                    }),
                )?,
            }
        }
        Command::Compare(args) => {
            let (data, truth) = args.data.load(seed)?;
            let mut base = RunConfig::new(args.mechanism, 1.0, args.ell);
            base.repeats = args.repeats;
            base.seed = derive_seed(seed, 1);
            let rows = compare_allocations(&data, &truth, &args.eps, &base)?;
            match out.format {
                Format::Json => out.json(&rows)?,
                Format::Csv => out.csv(
                    &["eps", "strategy", "eps_key", "eps_value", "mse_freq", "mse_mean"],
                    rows.iter().map(|r| {
                        vec![
                            r.eps.to_string(),
                            r.strategy.to_string(),
                            r.eps_key.to_string(),
                            r.eps_value.to_string(),
                            r.mse_freq.to_string(),
                            r.mse_mean.to_string(),
                        ]
                    }),
                )?,
            }
        }
        Command::Predict(args) => {
            let spec = args.budget.spec(args.mechanism, args.domain)?;
            let p = predict_errors(&spec.probs()?, spec.ell, args.n, args.f, args.m)?;
            match out.format {
                Format::Json => out.json(&p)?,
                Format::Csv => out.csv(
                    &["var_f", "e_m_approx", "var_m_bound_approx", "mu", "g", "h", "mse_f_approx", "mse_m_approx"],
                    [[p.var_f, p.e_m_approx, p.var_m_bound_approx, p.mu, p.g, p.h, p.mse_f_approx, p.mse_m_approx]
                        .iter()
                        .map(|x| x.to_string())
                        .collect()],
                )?,
            }
        }
        Command::Choose(args) => {
            let m = choose_mechanism(args.d, args.ell, args.eps, args.objective);
            match out.format {
                Format::Json => out.json(&json!({ "mechanism": m, "objective": args.objective }))?,
                Format::Csv => out.line(&m.to_string())?,
            }
        }
        Command::Perturb(args) => {
            let (data, _) = args.data.load(seed)?;
            let d = data.d();
            let seed = derive_seed(seed, 1);
            let users = data.users();
            match args.mechanism {
                Protocol::PckvUe => {
                    let spec = args.budget.spec(Mechanism::Ue, d)?;
                    let m = UeMechanism::new(spec.probs()?, spec.ell, d)?;
                    for (u, rec) in users.iter().enumerate() {
                        let mut rng = stream(seed, Purpose::Perturb, u as u64);
                        out.line(&m.perturb(rec, &mut rng).to_string())?;
                    }
                }
                Protocol::PckvGrr => {
                    let spec = args.budget.spec(Mechanism::Grr, d)?;
                    let m = GrrMechanism::new(spec.probs()?, spec.ell, d)?;
                    for (u, rec) in users.iter().enumerate() {
                        let mut rng = stream(seed, Purpose::Perturb, u as u64);
                        out.line(&m.perturb(rec, &mut rng).to_string())?;
                    }
                }
                Protocol::PrivKv => {
                    let eps = args.budget.eps()?;
                    for (u, rec) in users.iter().enumerate() {
                        let mut rng = stream(seed, Purpose::Perturb, u as u64);
                        out.line(&perturb_privkv(rec, eps, d, &mut rng)?.to_string())?;
                    }
                }
            }
        }
        Command::Estimate(args) => {
            let reader = BufReader::new(File::open(&args.reports).with_context(|| format!("reading {}", args.reports.display()))?);
            let kind = match args.mechanism {
                Protocol::PckvUe => ReportKind::Ue,
                Protocol::PckvGrr => ReportKind::Grr,
                Protocol::PrivKv => ReportKind::PrivKv,
            };
            let mut reports = Vec::new();
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                reports.push(Report::parse_line(kind, line.trim(), i + 1)?);
            }
            if reports.is_empty() {
                bail!(pckv::Error::InvalidParameter("no reports".into()));
            }
            let est = match args.mechanism.mechanism() {
                Some(mech) => {
                    let spec = args.budget.spec(mech, args.d)?;
                    let probs = spec.probs()?;
                    let counts = aggregate(&reports, args.d, spec.d_prime)?;
                    estimate_corrected(&counts, &probs, spec.ell)?
                }
                None => {
                    let pk: Vec<_> = reports
                        .into_iter()
                        .map(|r| match r {
                            Report::PrivKv(p) => p,
                            _ => unreachable!("parsed as PrivKV"),
                        })
                        .collect();
                    estimate_privkv(&aggregate_privkv(&pk, args.d)?, args.budget.eps()?)?
                }
            };
            let rows = est.rows(None);
            match out.format {
                Format::Json => out.json(&rows)?,
                Format::Csv => out.csv(
                    &["key", "f_hat", "m_hat", "f_hat_raw", "m_hat_raw"],
                    rows.iter().map(|r| {
                        vec![
                            r.key.to_string(),
                            r.f_hat.to_string(),
                            r.m_hat.to_string(),
                            r.f_hat_raw.to_string(),
                            opt(r.m_hat_raw),
                        ]
                    }),
                )?,
            }
        }
    }
    out.sink.flush()?;
    Ok(())
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    if let Some(pe) = e.downcast_ref::<pckv::Error>() {
        pe.kind()
    } else if e.downcast_ref::<io::Error>().is_some() || e.chain().any(|c| c.is::<io::Error>()) {
        "io"
    } else {
        "error"
    }
}

fn report_error(kind: &str, message: String) {
    let obj = json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{obj}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            report_error("usage", e.to_string().trim().to_string());
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(error_kind(&e), format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}
