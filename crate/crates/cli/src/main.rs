use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use carr_core::attack::Norm;
use carr_core::audit::{run_audit, Suite};
use carr_core::bounds::{bound_table, min_samples, BoundCase, BoundInputs, IdealThreshold, DEFAULT_C};
use carr_core::data::{synth_width, write_synthetic_csv};
use carr_core::objective::Method;
use carr_core::scm::{generate, SynthConfig};
use carr_core::trainer::{
    aggregate, run_experiment, sweep, sweep_csv, train, write_json, Checkpoint, RunConfig, TrainingMode, METRIC_NAMES,
};

const SEED_ENV: &str = "CARR_SEED";

/// Bad flags, unreadable or invalid configuration. Maps to exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl fmt::Display) -> anyhow::Error {
    UsageError(msg.to_string()).into()
}

#[derive(Parser)]
#[command(name = "carr", version, about = "Causal representation learning workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Synth(SynthArgs),
    /// Train and evaluate one run.
    Train(TrainArgs),
    /// Run several seeds in parallel and aggregate.
    Sweep(SweepArgs),
    /// Run a randomised property suite.
    Audit(AuditArgs),
    /// Print generalisation bounds over a grid of sample counts.
    Bound(BoundArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Noise variance.
    #[arg(long, allow_negative_numbers = true)]
    beta: f64,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    nc_cols: usize,
    #[arg(long)]
    shared_noise: bool,
    #[arg(long, default_value_t = 0)]
    weight_seed: u64,
}

/// Flags that override fields of the run config.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    neg_weight: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    latent_dim: Option<usize>,
    /// Training attack norm (2 or inf).
    #[arg(long)]
    p: Option<String>,
    /// Training attack radius.
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long)]
    eval_p: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    eval_beta: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    no_early_stopping: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Report path.
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    /// Also write the trained parameters.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Number of seeds, starting at the config's seed.
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    #[arg(long, default_value = "sweep")]
    out_dir: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct AuditArgs {
    /// dpi, lemma1, lemma2, pns or gradcheck.
    #[arg(long)]
    what: String,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long, default_value_t = 2.0)]
    card_y: f64,
    #[arg(long, default_value_t = 64.0)]
    card_z: f64,
    #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
    beta: f64,
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    delta: f64,
    #[arg(long = "C", default_value_t = DEFAULT_C)]
    c: f64,
    /// Comma-separated sample counts.
    #[arg(long, value_delimiter = ',')]
    m_grid: Option<Vec<f64>>,
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| usage(format!("{SEED_ENV} must be an unsigned integer, got '{v}'"))),
        Err(_) => Ok(None),
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    Ok(flag.or(env_seed()?).unwrap_or(0))
}

fn parse<T: std::str::FromStr<Err = carr_core::Error>>(raw: &str) -> Result<T> {
    raw.parse().map_err(usage)
}

/// Reads a run config, applies flag overrides and validates it.
/// The seed falls back to `CARR_SEED` when neither the file nor a flag sets it.
fn load_config(path: &Path, o: &Overrides) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| usage(format!("config {} is not valid JSON: {e}", path.display())))?;
    let has_seed = value.get("seed").is_some();
    let mut c: RunConfig =
        serde_json::from_value(value).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?;

    if let Some(m) = &o.method {
        c.method = parse::<Method>(m)?;
    }
    if let Some(m) = &o.mode {
        c.training_mode = parse::<TrainingMode>(m)?;
    }
    match (o.seed, has_seed) {
        (Some(s), _) => c = c.with_seed(s),
        (None, false) => {
            if let Some(s) = env_seed()? {
                c = c.with_seed(s);
            }
        }
        _ => {}
    }
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = o.$field { c.$field = v; } )* };
    }
    set!(epochs, lr, lambda, b, neg_weight, batch_size, latent_dim);
    if let Some(p) = &o.p {
        c.attack.p = parse::<Norm>(p)?;
    }
    if let Some(beta) = o.beta {
        c.attack.beta = beta;
    }
    if let Some(p) = &o.eval_p {
        c.eval_attack.p = parse::<Norm>(p)?;
    }
    if let Some(beta) = o.eval_beta {
        c.eval_attack.beta = beta;
    }
    if let Some(p) = o.patience {
        c.patience = Some(p);
    }
    if o.no_early_stopping {
        c.patience = None;
    }
    c.validate().map_err(usage)?;
    Ok(c)
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        beta: a.beta,
        n: a.n,
        seed: resolve_seed(a.seed)?,
        weight_seed: a.weight_seed,
        shared_noise: a.shared_noise,
        nc_cols: a.nc_cols,
        ..SynthConfig::default()
    };
    cfg.validate().map_err(usage)?;
    let samples = generate(&cfg)?;
    write_synthetic_csv(&a.out, &samples)?;
    let meta = meta_path(&a.out);
    write_json(&meta, &cfg)?;
    let rate = samples.iter().filter(|s| s.y == 1).count() as f64 / samples.len() as f64;
    println!(
        "wrote {} samples ({} features) to {}; label rate {rate:.4}; config in {}",
        samples.len(),
        synth_width(cfg.nc_cols),
        a.out.display(),
        meta.display()
    );
    Ok(())
}

fn meta_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let config = load_config(&a.config, &a.overrides)?;
    let report = run_experiment(&config, None)?;
    if let Some(path) = &a.checkpoint {
        // retrain deterministically rather than threading parameters through the report
        let data = carr_core::data::load(&config.dataset, config.seed)?;
        let outcome = train(&config, &data)?;
        write_json(path, &Checkpoint { config: config.clone(), params: outcome.params })?;
    }
    write_json(&a.out, &report)?;
    let t = &report.test;
    println!(
        "{} ({}, p={}) seed {}: auc {:.4} acc {:.4} adv_auc {:.4} adv_acc {:.4}{} [{} epochs, best {}]",
        report.method,
        report.mode.name(),
        report.p,
        report.seed,
        t.auc,
        t.acc,
        t.adv_auc,
        t.adv_acc,
        t.dcor_pa
            .map(|v| format!(
                " dcor pa/nd/dc {v:.4}/{:.4}/{:.4}",
                t.dcor_nd.unwrap_or(f64::NAN),
                t.dcor_dc.unwrap_or(f64::NAN)
            ))
            .unwrap_or_default(),
        report.history.len(),
        report.best_epoch
    );
    println!("report written to {}", a.out.display());
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    if a.seeds == 0 {
        bail!(usage("--seeds must be >= 1"));
    }
    let config = load_config(&a.config, &a.overrides)?;
    let seeds: Vec<u64> = (0..a.seeds as u64).map(|i| config.seed + i).collect();
    let reports = sweep(&config, &seeds)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    for r in &reports {
        write_json(&a.out_dir.join(format!("run_seed{}.json", r.seed)), r)?;
    }
    fs::write(a.out_dir.join("aggregate.csv"), sweep_csv(&reports))
        .with_context(|| format!("writing {}", a.out_dir.display()))?;
    let agg = aggregate(&reports);
    write_json(
        &a.out_dir.join("aggregate.json"),
        &serde_json::json!({ "config": config, "seeds": seeds, "aggregate": agg }),
    )?;
    println!("{} runs of {} ({}) written to {}", reports.len(), config.method, config.training_mode.name(), a.out_dir.display());
    for (k, name) in METRIC_NAMES.iter().enumerate() {
        if let (Some(m), Some(s)) = (agg.mean[k], agg.std[k]) {
            println!("  {name:<8} {m:.4} ± {s:.4}");
        }
    }
    Ok(())
}

fn cmd_audit(a: &AuditArgs) -> Result<bool> {
    let suite: Suite = parse(&a.what)?;
    let seed = resolve_seed(a.seed)?;
    let report = run_audit(suite, a.trials, seed)?;
    for c in &report.cases {
        println!(
            "{:<40} {:>5}/{:<5} hold  worst margin {:+.3e}",
            c.label,
            c.checked - c.violations,
            c.checked,
            c.worst_margin
        );
    }
    println!(
        "{}: {} / {} checks hold, worst margin {:+.3e}",
        a.what,
        report.checked() - report.violations(),
        report.checked(),
        report.worst_margin()
    );
    if let Some(path) = &a.json {
        write_json(path, &report)?;
    }
    Ok(report.passed())
}

fn default_grid() -> Vec<f64> {
    (4..=12).map(|e| 10f64.powi(e)).collect()
}

fn cmd_bound(a: &BoundArgs) -> Result<()> {
    let inp = BoundInputs { m: 1.0, card_y: a.card_y, card_z: a.card_z, beta: a.beta, delta: a.delta, c: a.c };
    inp.validate().map_err(usage)?;
    let grid = a.m_grid.clone().unwrap_or_else(default_grid);
    let rows = bound_table(&inp, &grid)?;
    println!(
        "thresholds: general {}  ideal {}  ideal (quarter constant) {}",
        min_samples(BoundCase::General, IdealThreshold::Full, &inp)?,
        min_samples(BoundCase::Ideal, IdealThreshold::Full, &inp)?,
        min_samples(BoundCase::Ideal, IdealThreshold::Quarter, &inp)?
    );
    println!("m,bound_general,bound_ideal");
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| x.to_string());
    for r in rows {
        println!("{},{},{}", r.m, cell(r.bound_general), cell(r.bound_ideal));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a).map(|_| true),
        Command::Train(a) => cmd_train(a).map(|_| true),
        Command::Sweep(a) => cmd_sweep(a).map(|_| true),
        Command::Audit(a) => cmd_audit(a),
        Command::Bound(a) => cmd_bound(a).map(|_| true),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<carr_core::Error>() {
        Some(carr_core::Error::Config(_) | carr_core::Error::Domain(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
