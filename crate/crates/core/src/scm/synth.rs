//! Continuous nonlinear simulator over the parent / non-descendant /
//! descendant partition of a binary label.
//!
//! Mechanisms (each `A` is a mixing matrix, one row per output coordinate):
//!
//! ```text
//! pa        ~ U(-1, 1)^5
//! e1,e2,e3  ~ N(noise_mean, beta I)            (independent unless shared_noise)
//! nd        = σ(n1 + n1 ⊙ n2),  n1 = A κ1(κ2([pa, e2])) + q,  n2 = A κ3(κ2([-pa, -e2])) + q
//! y         = 1[y1 + y1·y2 > 0], y1, y2 as above with (pa, e1)
//! dc        = σ(d1 + d1 ⊙ d2),  d1, d2 as above with (y, e3)
//! x         = [pa, nd, dc]  (+ optional uncorrelated columns)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{sigmoid, Matrix, Rng};

pub const PA_DIM: usize = 5;
pub const ND_DIM: usize = 5;
pub const DC_DIM: usize = 5;

pub fn kappa1(x: f64) -> f64 {
    if x > 0.0 {
        x - 0.5
    } else {
        0.0
    }
}

pub fn kappa2(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub fn kappa3(x: f64) -> f64 {
    if x < 0.0 {
        x + 0.5
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    /// Noise variance.
    pub beta: f64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_offset")]
    pub q: f64,
    #[serde(default = "default_offset")]
    pub noise_mean: f64,
    /// Seed for the mixing matrices; fixes the mechanism independently of the sample draw.
    #[serde(default)]
    pub weight_seed: u64,
    /// Use one noise draw for all three mechanisms instead of three independent draws.
    #[serde(default)]
    pub shared_noise: bool,
    /// Extra Uniform(-1, 1) columns independent of everything else.
    #[serde(default)]
    pub nc_cols: usize,
}

fn default_n() -> usize {
    500
}

fn default_offset() -> f64 {
    0.3
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            beta: 0.3,
            n: default_n(),
            seed: 0,
            q: default_offset(),
            noise_mean: default_offset(),
            weight_seed: 0,
            shared_noise: false,
            nc_cols: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::config(format!(
                "noise variance beta must be a finite value >= 0, got {}",
                self.beta
            )));
        }
        if self.n == 0 {
            return Err(Error::config("sample count n must be >= 1"));
        }
        if !self.q.is_finite() || !self.noise_mean.is_finite() {
            return Err(Error::config("q and noise_mean must be finite"));
        }
        Ok(())
    }
}

/// One draw from the simulator with its ground-truth partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ScmSample {
    pub pa: Vec<f64>,
    pub nd: Vec<f64>,
    pub dc: Vec<f64>,
    pub nc: Vec<f64>,
    /// `[pa, nd, dc, nc]`.
    pub x: Vec<f64>,
    pub y: u8,
}

/// Mixing matrices for the six branch sums.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthWeights {
    pub nd_pos: Matrix,
    pub nd_neg: Matrix,
    pub y_pos: Vec<f64>,
    pub y_neg: Vec<f64>,
    pub dc_pos: Matrix,
    pub dc_neg: Matrix,
}

impl SynthWeights {
    /// Standard-normal entries drawn from `weight_seed`.
    pub fn draw(weight_seed: u64) -> Self {
        let mut rng = Rng::substream(weight_seed, 0x5eed);
        let mut mat = |rows: usize, cols: usize| {
            let data = (0..rows * cols).map(|_| rng.normal()).collect();
            Matrix::from_vec(rows, cols, data).expect("sized")
        };
        let nd_pos = mat(ND_DIM, PA_DIM + PA_DIM);
        let nd_neg = mat(ND_DIM, PA_DIM + PA_DIM);
        let y_pos = mat(1, PA_DIM + PA_DIM).into_vec();
        let y_neg = mat(1, PA_DIM + PA_DIM).into_vec();
        let dc_pos = mat(DC_DIM, 1 + DC_DIM);
        let dc_neg = mat(DC_DIM, 1 + DC_DIM);
        Self {
            nd_pos,
            nd_neg,
            y_pos,
            y_neg,
            dc_pos,
            dc_neg,
        }
    }
}

/// `κ1(κ2(v))` elementwise.
fn positive_branch(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| kappa1(kappa2(x))).collect()
}

/// `κ3(κ2(−v))` elementwise.
fn negative_branch(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| kappa3(kappa2(-x))).collect()
}

fn mix(weights: &[f64], v: &[f64], q: f64) -> f64 {
    weights.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() + q
}

fn mix_rows(weights: &Matrix, v: &[f64], q: f64) -> Vec<f64> {
    weights.iter_rows().map(|row| mix(row, v, q)).collect()
}

impl SynthWeights {
    /// Pre-threshold label score `y1 + y1·y2`.
    pub fn label_score(&self, pa: &[f64], e1: &[f64], q: f64) -> f64 {
        let input = [pa, e1].concat();
        let y1 = mix(&self.y_pos, &positive_branch(&input), q);
        let y2 = mix(&self.y_neg, &negative_branch(&input), q);
        y1 + y1 * y2
    }

    pub fn non_descendants(&self, pa: &[f64], e2: &[f64], q: f64) -> Vec<f64> {
        let input = [pa, e2].concat();
        let n1 = mix_rows(&self.nd_pos, &positive_branch(&input), q);
        let n2 = mix_rows(&self.nd_neg, &negative_branch(&input), q);
        n1.iter().zip(&n2).map(|(a, b)| sigmoid(a + a * b)).collect()
    }

    pub fn descendants(&self, y: u8, e3: &[f64], q: f64) -> Vec<f64> {
        let input = [&[f64::from(y)][..], e3].concat();
        let d1 = mix_rows(&self.dc_pos, &positive_branch(&input), q);
        let d2 = mix_rows(&self.dc_neg, &negative_branch(&input), q);
        d1.iter().zip(&d2).map(|(a, b)| sigmoid(a + a * b)).collect()
    }
}

pub fn generate(config: &SynthConfig) -> Result<Vec<ScmSample>> {
    config.validate()?;
    generate_with_weights(config, &SynthWeights::draw(config.weight_seed))
}

pub fn generate_with_weights(config: &SynthConfig, weights: &SynthWeights) -> Result<Vec<ScmSample>> {
    config.validate()?;
    let mut rng = Rng::substream(config.seed, 1);
    let sd = config.beta.sqrt();
    let q = config.q;
    let noise = |rng: &mut Rng| -> Vec<f64> {
        (0..PA_DIM).map(|_| config.noise_mean + sd * rng.normal()).collect()
    };
    let mut samples = Vec::with_capacity(config.n);
    for _ in 0..config.n {
        let pa: Vec<f64> = (0..PA_DIM).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let e1 = noise(&mut rng);
        let (e2, e3) = if config.shared_noise {
            (e1.clone(), e1.clone())
        } else {
            (noise(&mut rng), noise(&mut rng))
        };
        let nc: Vec<f64> = (0..config.nc_cols).map(|_| rng.uniform(-1.0, 1.0)).collect();

        let nd = weights.non_descendants(&pa, &e2, q);
        let y = u8::from(weights.label_score(&pa, &e1, q) > 0.0);
        let dc = weights.descendants(y, &e3, q);

        let x = [&pa[..], &nd, &dc, &nc].concat();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("simulator produced a non-finite feature".into()));
        }
        samples.push(ScmSample { pa, nd, dc, nc, x, y });
    }
    Ok(samples)
}
