//! Training loop, evaluation, experiment runs and seed sweeps.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::attack::{ball_offsets, pgd_attack, pgd_delta, AttackSpec, Norm};
use crate::data::{load, Batch, Dataset, DatasetSpec};
use crate::error::{Error, Result};
use crate::info::{acc, auc, distance_correlation, ScoredLabels};
use crate::model::{positive_probabilities, standard_normal, ModelParams, DEFAULT_LATENT_DIM};
use crate::numkit::{Matrix, Rng};
use crate::objective::{batch_objective, Method, ObjectiveSettings, Perturbations};

const BALL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// Representations are not perturbed during training.
    Standard,
    /// The positive term is fitted on PGD-attacked representations.
    Robust,
}

impl TrainingMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainingMode::Standard => "standard",
            TrainingMode::Robust => "robust",
        }
    }
}

impl std::str::FromStr for TrainingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(TrainingMode::Standard),
            "robust" => Ok(TrainingMode::Robust),
            _ => Err(Error::config(format!("unknown training mode '{s}' (expected standard or robust)"))),
        }
    }
}

fn no_attack() -> AttackSpec {
    AttackSpec::new(Norm::L2, 0.0)
}

fn default_eval_attack() -> AttackSpec {
    AttackSpec::new(Norm::L2, 0.3)
}

fn default_lambda() -> f64 {
    0.001
}

fn default_b() -> f64 {
    0.8
}

fn default_true() -> bool {
    true
}

fn default_one() -> f64 {
    1.0
}

fn default_lr() -> f64 {
    5e-2
}

fn default_min_epochs() -> usize {
    50
}

fn default_momentum() -> f64 {
    0.9
}

fn default_batch_size() -> usize {
    64
}

fn default_epochs() -> usize {
    100
}

fn default_patience() -> Option<usize> {
    Some(10)
}

fn default_latent_dim() -> usize {
    DEFAULT_LATENT_DIM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub training_mode: TrainingMode,
    /// Training-time attack; its radius must be 0 exactly when the mode is standard.
    #[serde(default = "no_attack")]
    pub attack: AttackSpec,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default = "default_one")]
    pub neg_weight: f64,
    #[serde(default)]
    pub stop_grad_negative: bool,
    /// Keep the negative term from rewarding confidently wrong predictions.
    #[serde(default = "default_true")]
    pub floor_negative: bool,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Early-stopping patience in epochs on validation AUC; `null` disables it.
    #[serde(default = "default_patience")]
    pub patience: Option<usize>,
    /// Early stopping never ends a run before this many epochs.
    #[serde(default = "default_min_epochs")]
    pub min_epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default = "default_eval_attack")]
    pub eval_attack: AttackSpec,
}

impl RunConfig {
    pub fn new(method: Method, training_mode: TrainingMode) -> Self {
        serde_json::from_value(serde_json::json!({
            "method": method,
            "training_mode": training_mode,
        }))
        .expect("defaults deserialize")
    }

    /// Every problem with the config, in field order. Empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, r) in [
            ("attack", self.attack.validate()),
            ("eval_attack", self.eval_attack.validate()),
            ("dataset", self.dataset.validate()),
        ] {
            if let Err(e) = r {
                out.push(format!("{name}: {e}"));
            }
        }
        match (self.training_mode, self.attack.beta > 0.0) {
            (TrainingMode::Standard, true) => out.push(format!(
                "standard training does not perturb representations; attack.beta must be 0, got {}",
                self.attack.beta
            )),
            (TrainingMode::Robust, false) => out.push("robust training needs attack.beta > 0".into()),
            _ => {}
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            out.push(format!("lr must be finite and > 0, got {}", self.lr));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            out.push(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if !(self.neg_weight.is_finite() && self.neg_weight >= 0.0) {
            out.push(format!("neg_weight must be finite and >= 0, got {}", self.neg_weight));
        }
        if !self.b.is_finite() {
            out.push("b must be finite".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            out.push(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        for (name, v) in [("batch_size", self.batch_size), ("epochs", self.epochs), ("latent_dim", self.latent_dim)] {
            if v == 0 {
                out.push(format!("{name} must be >= 1"));
            }
        }
        if self.patience == Some(0) {
            out.push("patience must be >= 1 or null".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::config(problems.join("; ")))
        }
    }

    fn settings(&self) -> ObjectiveSettings {
        ObjectiveSettings {
            method: self.method,
            lambda: self.lambda,
            b: self.b,
            neg_weight: self.neg_weight,
            stop_grad_negative: self.stop_grad_negative,
            floor_negative: self.floor_negative,
        }
    }

    /// Same config with the run seed (and a synthetic dataset's sample seed) replaced.
    pub fn with_seed(&self, seed: u64) -> RunConfig {
        let mut c = self.clone();
        c.seed = seed;
        if let DatasetSpec::Synthetic { synth } = &mut c.dataset {
            synth.seed = seed;
        }
        c
    }
}

/// Mean loss terms over the batches of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub positive_ll: f64,
    pub kl: f64,
    pub negative_ll: f64,
    pub total: f64,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch (last epoch without early stopping).
    pub params: ModelParams,
    /// One record per epoch actually run.
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

// sub-stream ids derived from the run seed
const STREAM_INIT: u64 = 10;
const STREAM_SHUFFLE: u64 = 11;
const STREAM_NOISE: u64 = 12;
const STREAM_BALL: u64 = 13;

fn check_ball(delta: &Matrix, p: Norm, beta: f64) -> std::result::Result<(), String> {
    for (r, row) in delta.iter_rows().enumerate() {
        let n = p.of(row);
        if n > beta + BALL_TOLERANCE {
            return Err(format!("perturbation of row {r} has norm {n} > {beta}"));
        }
    }
    Ok(())
}

/// Minmax training with SGD and momentum.
pub fn train(config: &RunConfig, data: &Dataset) -> Result<TrainOutcome> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(Error::config("training data is empty"));
    }
    let mut params = ModelParams::init(
        data.input_spec,
        config.latent_dim,
        &mut Rng::substream(config.seed, STREAM_INIT),
    )?;
    let mut velocity = params.zeros_like();
    let mut shuffle_rng = Rng::substream(config.seed, STREAM_SHUFFLE);
    let mut noise_rng = Rng::substream(config.seed, STREAM_NOISE);
    let mut ball_rng = Rng::substream(config.seed, STREAM_BALL);
    let settings = config.settings();
    let robust = config.training_mode == TrainingMode::Robust;

    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut since_best = 0;

    for epoch in 0..config.epochs {
        let batches = crate::data::batch_indices(data.train.len(), config.batch_size, &mut shuffle_rng);
        let mut sums = [0.0; 4];
        for (bi, idx) in batches.iter().enumerate() {
            let batch = data.train.select(idx);
            let diverged = |msg: String| Error::Training { epoch, batch: bi, msg };
            let noise = standard_normal(&mut noise_rng, batch.len(), config.latent_dim);
            let (loss, grads) = batch_objective(&params, &batch.input, &batch.labels, &settings, Some(&noise), |z| {
                let mut p = Perturbations::default();
                if robust {
                    let delta = pgd_delta(&params, z, &batch.labels, &config.attack)?;
                    check_ball(&delta, config.attack.p, config.attack.beta).map_err(diverged)?;
                    p.attack = Some(delta);
                }
                if config.method.uses_negative() && config.attack.beta > 0.0 {
                    p.ball = Some(ball_offsets(z.rows(), z.cols(), config.attack.p, config.attack.beta, &mut ball_rng));
                }
                Ok(p)
            })
            .map_err(|e| match e {
                Error::Numeric(msg) => diverged(msg),
                other => other,
            })?;
            if !grads.all_finite() {
                return Err(diverged("non-finite gradient".into()));
            }
            for (slot, v) in sums.iter_mut().zip([loss.positive_ll, loss.kl, loss.negative_ll, loss.total]) {
                *slot += v;
            }
            sgd_step(&mut params, &mut velocity, &grads, config.lr, config.momentum);
            if !params.all_finite() {
                return Err(diverged("parameters became non-finite".into()));
            }
        }
        let nb = batches.len() as f64;
        let val_auc = match &data.val {
            Some(val) if has_both_classes(&val.labels) => Some(clean_auc(&params, val)?),
            _ => None,
        };
        history.push(EpochRecord {
            epoch,
            positive_ll: sums[0] / nb,
            kl: sums[1] / nb,
            negative_ll: sums[2] / nb,
            total: sums[3] / nb,
            val_auc,
        });

        if let (Some(patience), Some(score)) = (config.patience, val_auc) {
            let improved = best.as_ref().is_none_or(|(b, _, _)| score > *b);
            if improved {
                best = Some((score, epoch, params.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience && epoch + 1 >= config.min_epochs {
                    break;
                }
            }
        }
    }

    let last = history.len() - 1;
    let (params, best_epoch) = match best {
        Some((_, e, p)) => (p, e),
        None => (params, last),
    };
    Ok(TrainOutcome { params, history, best_epoch })
}

fn sgd_step(params: &mut ModelParams, velocity: &mut ModelParams, grads: &ModelParams, lr: f64, momentum: f64) {
    for (v, g) in velocity.tensors_mut().into_iter().zip(grads.tensors()) {
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi = momentum * *vi + gi;
        }
    }
    params.axpy(-lr, velocity);
}

fn has_both_classes(labels: &[u8]) -> bool {
    labels.contains(&0) && labels.contains(&1)
}

fn clean_auc(params: &ModelParams, data: &Batch) -> Result<f64> {
    let (enc, _) = params.encode_with_noise(&data.input, None)?;
    let probs = positive_probabilities(&params.predict(&enc.z)?);
    auc(&ScoredLabels::new(probs, data.labels.clone())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub auc: f64,
    pub acc: f64,
    pub adv_auc: f64,
    pub adv_acc: f64,
    pub dcor_pa: Option<f64>,
    pub dcor_nd: Option<f64>,
    pub dcor_dc: Option<f64>,
}

/// Clean metrics on `z = mean`, adversarial metrics on PGD-attacked `z`,
/// and distance correlations with the true partition when it is known.
pub fn evaluate(params: &ModelParams, data: &Batch, eval_attack: &AttackSpec) -> Result<EvalMetrics> {
    if data.is_empty() {
        return Err(Error::Metric("evaluation data is empty".into()));
    }
    let (enc, _) = params.encode_with_noise(&data.input, None)?;
    let z = enc.z;
    let clean = ScoredLabels::new(positive_probabilities(&params.predict(&z)?), data.labels.clone())?;
    let z_adv = pgd_attack(params, &z, &data.labels, eval_attack)?;
    let adv = ScoredLabels::new(positive_probabilities(&params.predict(&z_adv)?), data.labels.clone())?;
    let dcor = |m: Option<&Matrix>| m.map(|t| distance_correlation(&z, t)).transpose();
    let truth = data.truth.as_ref();
    Ok(EvalMetrics {
        auc: auc(&clean)?,
        acc: acc(&clean, 0.5)?,
        adv_auc: auc(&adv)?,
        adv_acc: acc(&adv, 0.5)?,
        dcor_pa: dcor(truth.map(|t| &t.pa))?,
        dcor_nd: dcor(truth.map(|t| &t.nd))?,
        dcor_dc: dcor(truth.map(|t| &t.dc))?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: Method,
    pub mode: TrainingMode,
    /// Norm of the training-time ball.
    pub p: Norm,
    pub seed: u64,
    /// Metrics on the i.i.d. test split.
    pub test: EvalMetrics,
    /// Metrics on the out-of-distribution test split, when one is supplied.
    pub test_ood: Option<EvalMetrics>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub config: RunConfig,
    pub wall_clock_secs: f64,
}

impl MetricsReport {
    /// The report with the wall clock zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> MetricsReport {
        MetricsReport { wall_clock_secs: 0.0, ..self.clone() }
    }
}

/// Loads data, trains, evaluates on the test split(s) and optionally writes the report.
pub fn run_experiment(config: &RunConfig, out: Option<&Path>) -> Result<MetricsReport> {
    let started = Instant::now();
    config.validate()?;
    let data = load(&config.dataset, config.seed)?;
    let outcome = train(config, &data)?;
    let test = data.test.as_ref().ok_or_else(|| Error::config("dataset has no i.i.d. test split"))?;
    let test_metrics = evaluate(&outcome.params, test, &config.eval_attack)?;
    let test_ood = data
        .test_ood
        .as_ref()
        .map(|t| evaluate(&outcome.params, t, &config.eval_attack))
        .transpose()?;
    let report = MetricsReport {
        method: config.method,
        mode: config.training_mode,
        p: config.attack.p,
        seed: config.seed,
        test: test_metrics,
        test_ood,
        history: outcome.history,
        best_epoch: outcome.best_epoch,
        config: config.clone(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    if let Some(path) = out {
        write_json(path, &report)?;
    }
    Ok(report)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Trained parameters with the config that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub params: ModelParams,
}

/// Runs one experiment per seed on parallel threads; results are in seed order.
pub fn sweep(config: &RunConfig, seeds: &[u64]) -> Result<Vec<MetricsReport>> {
    config.validate()?;
    let configs: Vec<RunConfig> = seeds.iter().map(|&s| config.with_seed(s)).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs.iter().map(|c| scope.spawn(move || run_experiment(c, None))).collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    })
}

pub const METRIC_NAMES: [&str; 7] = ["auc", "acc", "adv_auc", "adv_acc", "dcor_pa", "dcor_nd", "dcor_dc"];

fn metric_values(m: &EvalMetrics) -> [Option<f64>; 7] {
    [Some(m.auc), Some(m.acc), Some(m.adv_auc), Some(m.adv_acc), m.dcor_pa, m.dcor_nd, m.dcor_dc]
}

/// Mean and sample standard deviation of each test metric across reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub mean: Vec<Option<f64>>,
    pub std: Vec<Option<f64>>,
}

pub fn aggregate(reports: &[MetricsReport]) -> Aggregate {
    let mut mean = Vec::new();
    let mut std = Vec::new();
    for k in 0..METRIC_NAMES.len() {
        let vals: Option<Vec<f64>> = reports.iter().map(|r| metric_values(&r.test)[k]).collect();
        match vals {
            Some(v) if !v.is_empty() => {
                let (m, s) = mean_std(&v);
                mean.push(Some(m));
                std.push(Some(s));
            }
            _ => {
                mean.push(None);
                std.push(None);
            }
        }
    }
    Aggregate { runs: reports.len(), mean, std }
}

/// Mean and sample (n − 1) standard deviation; the deviation of one value is 0.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

/// CSV with one row per run followed by `mean` and `std` rows.
pub fn sweep_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from("method,mode,p,seed,");
    out.push_str(&METRIC_NAMES.join(","));
    out.push('\n');
    let lead = |r: &MetricsReport, seed: &str| format!("{},{},{},{}", r.method, r.mode.name(), r.p, seed);
    for r in reports {
        let vals: Vec<String> = metric_values(&r.test).iter().map(|v| fmt_opt(*v)).collect();
        out.push_str(&format!("{},{}\n", lead(r, &r.seed.to_string()), vals.join(",")));
    }
    if let Some(first) = reports.first() {
        let agg = aggregate(reports);
        for (label, row) in [("mean", &agg.mean), ("std", &agg.std)] {
            let vals: Vec<String> = row.iter().map(|v| fmt_opt(*v)).collect();
            out.push_str(&format!("{},{}\n", lead(first, label), vals.join(",")));
        }
    }
    out
}
