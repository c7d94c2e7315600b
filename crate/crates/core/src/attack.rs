//! Projected gradient attacks and uniform ball sampling in representation space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{softmax2, ModelParams};
use crate::numkit::{l2_norm, Matrix, Rng};

/// Norm of the perturbation ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Norm {
    #[serde(rename = "2")]
    L2,
    #[serde(rename = "inf")]
    Linf,
}

impl Norm {
    pub fn name(self) -> &'static str {
        match self {
            Norm::L2 => "2",
            Norm::Linf => "inf",
        }
    }

    pub fn of(self, v: &[f64]) -> f64 {
        match self {
            Norm::L2 => l2_norm(v),
            Norm::Linf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }
}

impl std::fmt::Display for Norm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2" | "l2" => Ok(Norm::L2),
            "inf" | "linf" => Ok(Norm::Linf),
            _ => Err(Error::config(format!("unknown norm '{s}' (expected 2 or inf)"))),
        }
    }
}

pub const DEFAULT_STEPS: usize = 10;

fn default_steps() -> usize {
    DEFAULT_STEPS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub p: Norm,
    pub beta: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Defaults to `2.5 · beta / steps`.
    #[serde(default)]
    pub step_size: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl AttackSpec {
    pub fn new(p: Norm, beta: f64) -> Self {
        Self { p, beta, steps: DEFAULT_STEPS, step_size: None, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::config(format!("attack radius must be finite and >= 0, got {}", self.beta)));
        }
        if let Some(s) = self.step_size {
            if self.steps > 0 && !(s.is_finite() && s > 0.0) {
                return Err(Error::config(format!("attack step size must be > 0, got {s}")));
            }
        }
        Ok(())
    }

    pub fn effective_step_size(&self) -> f64 {
        match self.step_size {
            Some(s) => s,
            None if self.steps == 0 => 0.0,
            None => 2.5 * self.beta / self.steps as f64,
        }
    }
}

/// Projects `delta` onto the `p`-ball of radius `beta`.
pub fn project(delta: &[f64], p: Norm, beta: f64) -> Vec<f64> {
    match p {
        Norm::Linf => delta.iter().map(|d| d.clamp(-beta, beta)).collect(),
        Norm::L2 => {
            let n = l2_norm(delta);
            if n > beta {
                let s = beta / n;
                delta.iter().map(|d| d * s).collect()
            } else {
                delta.to_vec()
            }
        }
    }
}

/// A classifier on representations that can report per-row cross-entropy
/// and its gradient w.r.t. the representation.
pub trait LatentClassifier {
    fn xent_grad(&self, z: &Matrix, y: &[u8]) -> Result<(Vec<f64>, Matrix)>;
}

impl LatentClassifier for ModelParams {
    fn xent_grad(&self, z: &Matrix, y: &[u8]) -> Result<(Vec<f64>, Matrix)> {
        if y.len() != z.rows() {
            return Err(Error::config(format!("{} labels for {} rows", y.len(), z.rows())));
        }
        let (logits, cache) = self.predict_cached(z)?;
        let mut losses = Vec::with_capacity(y.len());
        let mut d_logits = Matrix::zeros(z.rows(), 2);
        for (r, &label) in y.iter().enumerate() {
            let row = logits.row(r);
            let m = row[0].max(row[1]);
            let lse = m + ((row[0] - m).exp() + (row[1] - m).exp()).ln();
            losses.push(lse - row[label as usize]);
            let p = softmax2(row);
            for k in 0..2 {
                d_logits.row_mut(r)[k] = p[k] - if k == label as usize { 1.0 } else { 0.0 };
            }
        }
        let grad = self.predictor_backward(&cache, &d_logits, None)?;
        Ok((losses, grad))
    }
}

/// Offsets found by PGD, one row per input row; `z0 + delta` is the attacked point.
pub fn pgd_delta<C: LatentClassifier + ?Sized>(model: &C, z0: &Matrix, y: &[u8], spec: &AttackSpec) -> Result<Matrix> {
    spec.validate()?;
    let mut best = Matrix::zeros(z0.rows(), z0.cols());
    if spec.steps == 0 || spec.beta == 0.0 {
        return Ok(best);
    }
    let alpha = spec.effective_step_size();
    let (mut best_loss, mut grad) = model.xent_grad(z0, y)?;
    let mut delta = best.clone();
    for _ in 0..spec.steps {
        if !grad.all_finite() {
            return Err(Error::Numeric("non-finite gradient during PGD".into()));
        }
        for r in 0..z0.rows() {
            let g = grad.row(r);
            let step: Vec<f64> = match spec.p {
                Norm::Linf => g.iter().map(|v| alpha * sign(*v)).collect(),
                Norm::L2 => {
                    let n = l2_norm(g);
                    if n > 0.0 {
                        g.iter().map(|v| alpha * v / n).collect()
                    } else {
                        vec![0.0; g.len()]
                    }
                }
            };
            let moved: Vec<f64> = delta.row(r).iter().zip(&step).map(|(d, s)| d + s).collect();
            delta.row_mut(r).copy_from_slice(&project(&moved, spec.p, spec.beta));
        }
        let (loss, g) = model.xent_grad(&z0.add(&delta)?, y)?;
        for r in 0..z0.rows() {
            if loss[r] > best_loss[r] {
                best_loss[r] = loss[r];
                best.row_mut(r).copy_from_slice(delta.row(r));
            }
        }
        grad = g;
    }
    Ok(best)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Attacked representations `z0 + delta` with the best cross-entropy found per row.
pub fn pgd_attack<C: LatentClassifier + ?Sized>(model: &C, z0: &Matrix, y: &[u8], spec: &AttackSpec) -> Result<Matrix> {
    z0.add(&pgd_delta(model, z0, y, spec)?)
}

/// Uniform draws from the `p`-ball of radius `beta`, one per row.
pub fn ball_offsets(rows: usize, cols: usize, p: Norm, beta: f64, rng: &mut Rng) -> Matrix {
    let mut out = Matrix::zeros(rows, cols);
    if beta == 0.0 || cols == 0 {
        return out;
    }
    for r in 0..rows {
        let row = out.row_mut(r);
        match p {
            Norm::Linf => row.iter_mut().for_each(|v| *v = rng.uniform(-beta, beta)),
            Norm::L2 => {
                let dir: Vec<f64> = (0..cols).map(|_| rng.normal()).collect();
                let n = l2_norm(&dir);
                let radius = beta * rng.unit().powf(1.0 / cols as f64);
                for (v, d) in row.iter_mut().zip(dir) {
                    *v = radius * d / n;
                }
            }
        }
    }
    out
}

/// Adds a uniform point of the `p`-ball of radius `beta` to each row.
pub fn random_ball(z: &Matrix, p: Norm, beta: f64, rng: &mut Rng) -> Matrix {
    let offsets = ball_offsets(z.rows(), z.cols(), p, beta, rng);
    z.add(&offsets).expect("same shape")
}
