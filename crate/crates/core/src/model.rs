//! Gaussian-posterior encoder and two-class predictor.
//!
//! ```text
//! encoder:   [emb(user,32) ‖ emb(item,32)] or raw features
//!            → Linear(in, 64) ELU → { mean: Linear(64, d_z), logvar: Linear(64, d_z) }
//!            z = mean + exp(logvar / 2) ⊙ ε,  ε ~ N(0, I)
//! predictor: Linear(d_z, 64) ELU → Linear(64, 2)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{sigmoid, Activation, DenseCache, DenseLayer, Matrix, Rng};

pub const EMBED_DIM: usize = 32;
pub const HIDDEN_DIM: usize = 64;
pub const DEFAULT_LATENT_DIM: usize = 64;
pub const LOGVAR_CLAMP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    Features { width: usize },
    IdPairs { n_users: usize, n_items: usize },
}

/// A batch of model inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelInput {
    Features(Matrix),
    Ids(Vec<(usize, usize)>),
}

impl ModelInput {
    pub fn rows(&self) -> usize {
        match self {
            ModelInput::Features(m) => m.rows(),
            ModelInput::Ids(ids) => ids.len(),
        }
    }

    pub fn select(&self, idx: &[usize]) -> ModelInput {
        match self {
            ModelInput::Features(m) => ModelInput::Features(m.select_rows(idx)),
            ModelInput::Ids(ids) => ModelInput::Ids(idx.iter().map(|&i| ids[i]).collect()),
        }
    }
}

/// Posterior parameters and a sample for each row.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub mean: Matrix,
    /// Clamped to `[-LOGVAR_CLAMP, LOGVAR_CLAMP]`.
    pub logvar: Matrix,
    pub z: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub input: InputSpec,
    pub latent_dim: usize,
    pub user_embedding: Option<Matrix>,
    pub item_embedding: Option<Matrix>,
    pub enc_hidden: DenseLayer,
    pub enc_mean: DenseLayer,
    pub enc_logvar: DenseLayer,
    pub pred_hidden: DenseLayer,
    pub pred_out: DenseLayer,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    ids: Option<Vec<(usize, usize)>>,
    hidden: DenseCache,
    mean: DenseCache,
    logvar: DenseCache,
    /// Standard-normal noise used for `z`; `None` when `z = mean`.
    noise: Option<Matrix>,
    logvar_clamped: Matrix,
}

#[derive(Debug, Clone)]
pub struct PredictorCache {
    hidden: DenseCache,
    out: DenseCache,
}

impl ModelParams {
    pub fn init(input: InputSpec, latent_dim: usize, rng: &mut Rng) -> Result<Self> {
        if latent_dim == 0 {
            return Err(Error::config("latent dimension must be >= 1"));
        }
        let (in_dim, user_embedding, item_embedding) = match input {
            InputSpec::Features { width } => {
                if width == 0 {
                    return Err(Error::config("feature width must be >= 1"));
                }
                (width, None, None)
            }
            InputSpec::IdPairs { n_users, n_items } => {
                if n_users == 0 || n_items == 0 {
                    return Err(Error::config("id vocabularies must be non-empty"));
                }
                let mut table = |rows: usize| {
                    let data = (0..rows * EMBED_DIM).map(|_| rng.normal()).collect();
                    Matrix::from_vec(rows, EMBED_DIM, data).expect("sized")
                };
                let u = table(n_users);
                let i = table(n_items);
                (2 * EMBED_DIM, Some(u), Some(i))
            }
        };
        Ok(Self {
            input,
            latent_dim,
            user_embedding,
            item_embedding,
            enc_hidden: DenseLayer::init(in_dim, HIDDEN_DIM, Activation::Elu, rng),
            enc_mean: DenseLayer::init(HIDDEN_DIM, latent_dim, Activation::Identity, rng),
            enc_logvar: DenseLayer::init(HIDDEN_DIM, latent_dim, Activation::Identity, rng),
            pred_hidden: DenseLayer::init(latent_dim, HIDDEN_DIM, Activation::Elu, rng),
            pred_out: DenseLayer::init(HIDDEN_DIM, 2, Activation::Identity, rng),
        })
    }

    /// Same shapes, every entry zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(12);
        if let Some(e) = &self.user_embedding {
            out.push(e.as_slice());
        }
        if let Some(e) = &self.item_embedding {
            out.push(e.as_slice());
        }
        for layer in [&self.enc_hidden, &self.enc_mean, &self.enc_logvar, &self.pred_hidden, &self.pred_out] {
            out.push(layer.weights.as_slice());
            out.push(&layer.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(12);
        if let Some(e) = &mut self.user_embedding {
            out.push(e.as_mut_slice());
        }
        if let Some(e) = &mut self.item_embedding {
            out.push(e.as_mut_slice());
        }
        for layer in [
            &mut self.enc_hidden,
            &mut self.enc_mean,
            &mut self.enc_logvar,
            &mut self.pred_hidden,
            &mut self.pred_out,
        ] {
            out.push(layer.weights.as_mut_slice());
            out.push(&mut layer.bias);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::config(format!(
                "flat vector has {} entries, model has {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// `self += alpha · other` over every tensor.
    pub fn axpy(&mut self, alpha: f64, other: &ModelParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += alpha * y;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn embed(&self, ids: &[(usize, usize)]) -> Result<Matrix> {
        let (users, items) = match (&self.user_embedding, &self.item_embedding) {
            (Some(u), Some(i)) => (u, i),
            _ => return Err(Error::config("model was built for feature inputs, got id pairs")),
        };
        let mut out = Matrix::zeros(ids.len(), 2 * EMBED_DIM);
        for (r, &(u, i)) in ids.iter().enumerate() {
            if u >= users.rows() || i >= items.rows() {
                return Err(Error::data(
                    "model input",
                    r + 1,
                    format!(
                        "unknown id pair ({u}, {i}); vocabularies are {} users, {} items",
                        users.rows(),
                        items.rows()
                    ),
                ));
            }
            let row = out.row_mut(r);
            row[..EMBED_DIM].copy_from_slice(users.row(u));
            row[EMBED_DIM..].copy_from_slice(items.row(i));
        }
        Ok(out)
    }

    /// Runs the encoder. `noise = None` yields `z = mean`.
    pub fn encode_with_noise(&self, x: &ModelInput, noise: Option<&Matrix>) -> Result<(EncoderOutput, EncoderCache)> {
        let (input, ids) = match x {
            ModelInput::Features(m) => (m.clone(), None),
            ModelInput::Ids(ids) => (self.embed(ids)?, Some(ids.clone())),
        };
        let (hidden_out, hidden) = self.enc_hidden.forward_cached(&input)?;
        let (mean, mean_cache) = self.enc_mean.forward_cached(&hidden_out)?;
        let (logvar_raw, logvar_cache) = self.enc_logvar.forward_cached(&hidden_out)?;
        let logvar = logvar_raw.map(|v| v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP));
        let z = match noise {
            None => mean.clone(),
            Some(eps) => {
                if eps.shape() != mean.shape() {
                    return Err(Error::config(format!(
                        "noise shape {:?} does not match posterior {:?}",
                        eps.shape(),
                        mean.shape()
                    )));
                }
                let mut z = mean.clone();
                for ((zv, &lv), &e) in z.as_mut_slice().iter_mut().zip(logvar.as_slice()).zip(eps.as_slice()) {
                    *zv += (0.5 * lv).exp() * e;
                }
                z
            }
        };
        let cache = EncoderCache {
            ids,
            hidden,
            mean: mean_cache,
            logvar: logvar_cache,
            noise: noise.cloned(),
            logvar_clamped: logvar.clone(),
        };
        Ok((EncoderOutput { mean, logvar, z }, cache))
    }

    /// Runs the encoder, drawing reparameterisation noise from `rng` unless `deterministic`.
    pub fn encode(&self, x: &ModelInput, rng: &mut Rng, deterministic: bool) -> Result<EncoderOutput> {
        let noise = if deterministic {
            None
        } else {
            Some(standard_normal(rng, x.rows(), self.latent_dim))
        };
        self.encode_with_noise(x, noise.as_ref()).map(|(out, _)| out)
    }

    /// Accumulates encoder gradients into `grads` given upstream gradients
    /// on the posterior mean, log-variance and sample.
    pub fn encoder_backward(
        &self,
        cache: &EncoderCache,
        d_mean: &Matrix,
        d_logvar: &Matrix,
        d_z: &Matrix,
        grads: &mut ModelParams,
    ) -> Result<()> {
        let d_mean_total = d_mean.add(d_z)?;
        let mut d_logvar_total = d_logvar.clone();
        if let Some(eps) = &cache.noise {
            let lv = &cache.logvar_clamped;
            for (k, g) in d_logvar_total.as_mut_slice().iter_mut().enumerate() {
                *g += d_z.as_slice()[k] * eps.as_slice()[k] * 0.5 * (0.5 * lv.as_slice()[k]).exp();
            }
        }
        // clamp passes no gradient outside its range
        for (g, &raw) in d_logvar_total.as_mut_slice().iter_mut().zip(cache.logvar.pre.as_slice()) {
            if !(-LOGVAR_CLAMP..=LOGVAR_CLAMP).contains(&raw) {
                *g = 0.0;
            }
        }
        let gm = self.enc_mean.backward(&cache.mean, &d_mean_total)?;
        let gv = self.enc_logvar.backward(&cache.logvar, &d_logvar_total)?;
        let d_hidden = gm.input.add(&gv.input)?;
        let gh = self.enc_hidden.backward(&cache.hidden, &d_hidden)?;

        accumulate(&mut grads.enc_mean, &gm.weights, &gm.bias);
        accumulate(&mut grads.enc_logvar, &gv.weights, &gv.bias);
        accumulate(&mut grads.enc_hidden, &gh.weights, &gh.bias);

        if let Some(ids) = &cache.ids {
            let (gu, gi) = match (&mut grads.user_embedding, &mut grads.item_embedding) {
                (Some(u), Some(i)) => (u, i),
                _ => return Err(Error::config("gradient container lacks embedding tables")),
            };
            for (r, &(u, i)) in ids.iter().enumerate() {
                let row = gh.input.row(r);
                for (a, b) in gu.row_mut(u).iter_mut().zip(&row[..EMBED_DIM]) {
                    *a += b;
                }
                for (a, b) in gi.row_mut(i).iter_mut().zip(&row[EMBED_DIM..]) {
                    *a += b;
                }
            }
        }
        Ok(())
    }

    pub fn predict_cached(&self, z: &Matrix) -> Result<(Matrix, PredictorCache)> {
        if z.cols() != self.latent_dim {
            return Err(Error::config(format!(
                "predictor expects {} latent columns, got {}",
                self.latent_dim,
                z.cols()
            )));
        }
        let (h, hidden) = self.pred_hidden.forward_cached(z)?;
        let (logits, out) = self.pred_out.forward_cached(&h)?;
        Ok((logits, PredictorCache { hidden, out }))
    }

    /// Raw two-class logits, shape (n × 2).
    pub fn predict(&self, z: &Matrix) -> Result<Matrix> {
        self.predict_cached(z).map(|(l, _)| l)
    }

    /// Gradient w.r.t. `z`; accumulates predictor parameter gradients into `grads` if given.
    pub fn predictor_backward(
        &self,
        cache: &PredictorCache,
        d_logits: &Matrix,
        grads: Option<&mut ModelParams>,
    ) -> Result<Matrix> {
        let go = self.pred_out.backward(&cache.out, d_logits)?;
        let gh = self.pred_hidden.backward(&cache.hidden, &go.input)?;
        if let Some(g) = grads {
            accumulate(&mut g.pred_out, &go.weights, &go.bias);
            accumulate(&mut g.pred_hidden, &gh.weights, &gh.bias);
        }
        Ok(gh.input)
    }
}

fn accumulate(layer: &mut DenseLayer, weights: &Matrix, bias: &[f64]) {
    for (a, b) in layer.weights.as_mut_slice().iter_mut().zip(weights.as_slice()) {
        *a += b;
    }
    for (a, b) in layer.bias.iter_mut().zip(bias) {
        *a += b;
    }
}

pub fn standard_normal(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.normal()).collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

/// Softmax over two logits.
pub fn softmax2(logits: &[f64]) -> [f64; 2] {
    let p1 = sigmoid(logits[1] - logits[0]);
    [1.0 - p1, p1]
}

/// Probability of class 1 for each row of a logit matrix.
pub fn positive_probabilities(logits: &Matrix) -> Vec<f64> {
    logits.iter_rows().map(|r| softmax2(r)[1]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn features(rng: &mut Rng, n: usize, w: usize) -> ModelInput {
        ModelInput::Features(standard_normal(rng, n, w))
    }

    #[test]
    fn deterministic_encoding_is_repeatable() {
        let mut rng = Rng::new(1);
        let p = ModelParams::init(InputSpec::Features { width: 15 }, 8, &mut rng).unwrap();
        let x = features(&mut rng, 6, 15);
        let a = p.encode(&x, &mut rng, true).unwrap();
        let b = p.encode(&x, &mut rng, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.z, a.mean);
    }

    #[test]
    fn zero_weights_give_bias_mean() {
        let mut rng = Rng::new(2);
        let mut p = ModelParams::init(InputSpec::Features { width: 4 }, 3, &mut rng).unwrap();
        p.enc_mean.weights = Matrix::zeros(3, HIDDEN_DIM);
        p.enc_mean.bias = vec![0.5, -1.0, 2.0];
        let x = features(&mut rng, 5, 4);
        let out = p.encode(&x, &mut rng, true).unwrap();
        for row in out.mean.iter_rows() {
            assert_eq!(row, &[0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn stochastic_encoding_reproducible_from_seed() {
        let mut rng = Rng::new(3);
        let p = ModelParams::init(InputSpec::Features { width: 4 }, 3, &mut rng).unwrap();
        let x = features(&mut rng, 5, 4);
        let a = p.encode(&x, &mut Rng::new(77), false).unwrap();
        let b = p.encode(&x, &mut Rng::new(77), false).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.z, a.mean);
    }

    #[test]
    fn zero_predictor_is_uniform() {
        let mut rng = Rng::new(4);
        let mut p = ModelParams::init(InputSpec::Features { width: 4 }, 3, &mut rng).unwrap();
        p.pred_out = DenseLayer::zeros(HIDDEN_DIM, 2, Activation::Identity);
        let logits = p.predict(&standard_normal(&mut rng, 7, 3)).unwrap();
        for r in logits.iter_rows() {
            assert_eq!(softmax2(r), [0.5, 0.5]);
        }
    }

    #[test]
    fn softmax_of_two_zero() {
        let p = softmax2(&[2.0, 0.0]);
        // e² / (e² + 1)
        assert!((p[0] - 0.880_797_077_977_882_4).abs() < 1e-12);
        assert!((p[1] - 0.119_202_922_022_117_6).abs() < 1e-12);
    }

    #[test]
    fn predict_shape_and_width_check() {
        let mut rng = Rng::new(5);
        let p = ModelParams::init(InputSpec::Features { width: 15 }, 64, &mut rng).unwrap();
        let logits = p.predict(&standard_normal(&mut rng, 500, 64)).unwrap();
        assert_eq!(logits.shape(), (500, 2));
        assert!(matches!(p.predict(&Matrix::zeros(2, 3)), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_id_is_data_error() {
        let mut rng = Rng::new(6);
        let p = ModelParams::init(InputSpec::IdPairs { n_users: 3, n_items: 2 }, 4, &mut rng).unwrap();
        let ok = ModelInput::Ids(vec![(0, 1), (2, 0)]);
        assert!(p.encode(&ok, &mut rng, true).is_ok());
        let bad = ModelInput::Ids(vec![(0, 1), (3, 0)]);
        assert!(matches!(p.encode(&bad, &mut rng, true), Err(Error::Data { line: 2, .. })));
    }

    #[test]
    fn flatten_roundtrip() {
        let mut rng = Rng::new(7);
        let p = ModelParams::init(InputSpec::IdPairs { n_users: 3, n_items: 2 }, 4, &mut rng).unwrap();
        let flat = p.flatten();
        let mut q = p.zeros_like();
        q.set_flat(&flat).unwrap();
        assert_eq!(p, q);
        assert!(q.set_flat(&flat[1..]).is_err());
    }
}
