use serde::{Deserialize, Serialize};

use super::{Matrix, Rng};
use crate::error::{Error, Result};

/// Exponential linear unit: `x` for `x > 0`, `exp(x) - 1` otherwise.
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn elu_derivative(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Logistic function, evaluated on the branch that cannot overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Elu,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Elu => elu(x),
            Activation::Identity => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Elu => elu_derivative(x),
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected layer `activation(input · Wᵀ + bias)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// Shape (out × in).
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Values retained from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct DenseCache {
    pub input: Matrix,
    pub pre: Matrix,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Matrix,
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::config(format!(
                "bias has {} entries, weights have {} rows",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Uniform(−1/√in, 1/√in) initialisation for weights and bias.
    pub fn init(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut Rng) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        let mut weights = Matrix::zeros(out_dim, in_dim);
        for w in weights.as_mut_slice() {
            *w = rng.uniform(-bound, bound);
        }
        let bias = (0..out_dim).map(|_| rng.uniform(-bound, bound)).collect();
        Self {
            weights,
            bias,
            activation,
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            weights: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        self.forward_cached(input).map(|(out, _)| out)
    }

    pub fn forward_cached(&self, input: &Matrix) -> Result<(Matrix, DenseCache)> {
        if input.cols() != self.in_dim() {
            return Err(Error::config(format!(
                "dense layer expects {} input columns, got {}",
                self.in_dim(),
                input.cols()
            )));
        }
        let mut pre = input.matmul_t(&self.weights)?;
        pre.add_row_vector(&self.bias)?;
        let act = self.activation;
        let out = pre.map(|v| act.apply(v));
        if !out.all_finite() {
            return Err(Error::Numeric("dense layer produced a non-finite value".into()));
        }
        Ok((
            out,
            DenseCache {
                input: input.clone(),
                pre,
            },
        ))
    }

    pub fn backward(&self, cache: &DenseCache, upstream: &Matrix) -> Result<DenseGrads> {
        if upstream.shape() != cache.pre.shape() || cache.input.cols() != self.in_dim() {
            return Err(Error::config(format!(
                "dense backward shape mismatch: upstream {:?}, cached pre-activation {:?}, input {:?}",
                upstream.shape(),
                cache.pre.shape(),
                cache.input.shape()
            )));
        }
        let act = self.activation;
        let delta = upstream.zip_map(&cache.pre, |g, p| g * act.derivative(p))?;
        Ok(DenseGrads {
            input: delta.matmul(&self.weights)?,
            weights: delta.t_matmul(&cache.input)?,
            bias: delta.col_sums(),
        })
    }

    pub fn param_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elu_values() {
        assert_eq!(elu(0.0), 0.0);
        assert_eq!(elu(1.5), 1.5);
        // exp(-1) - 1 = -0.6321205588285577
        assert!((elu(-1.0) - (-0.632_120_558_828_557_7)).abs() < 1e-15);
    }

    #[test]
    fn identity_layer_passthrough() {
        let layer = DenseLayer::new(Matrix::identity(2), vec![0.0, 0.0], Activation::Identity).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn zero_weights_emit_bias() {
        let layer = DenseLayer::new(Matrix::zeros(1, 3), vec![3.0], Activation::Identity).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 5.0], [0.3, 0.1, 9.0]]).unwrap();
        let y = layer.forward(&x).unwrap();
        assert_eq!(y.as_slice(), &[3.0, 3.0]);
    }

    #[test]
    fn forward_matches_hand_product() {
        let mut rng = Rng::new(11);
        let layer = DenseLayer::init(3, 2, Activation::Identity, &mut rng);
        let x = [0.5, -1.25, 2.0];
        let input = Matrix::from_rows(&[x]).unwrap();
        let out = layer.forward(&input).unwrap();
        for o in 0..2 {
            let mut acc = layer.bias[o];
            for i in 0..3 {
                acc += layer.weights[(o, i)] * x[i];
            }
            assert!((out[(0, o)] - acc).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let layer = DenseLayer::zeros(3, 2, Activation::Elu);
        assert!(matches!(layer.forward(&Matrix::zeros(1, 2)), Err(Error::Config(_))));
        let (_, cache) = layer.forward_cached(&Matrix::zeros(1, 3)).unwrap();
        assert!(layer.backward(&cache, &Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let mut rng = Rng::new(5);
        let layer = DenseLayer::init(4, 3, Activation::Elu, &mut rng);
        let x = Matrix::from_rows(&[[0.1, -0.2, 0.3, 0.4], [1.0, 2.0, -3.0, 0.0]]).unwrap();
        let (_, cache) = layer.forward_cached(&x).unwrap();
        let g = layer.backward(&cache, &Matrix::zeros(2, 3)).unwrap();
        assert!(g.input.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.weights.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_unit_weight_grad_is_input() {
        let layer = DenseLayer::new(Matrix::from_rows(&[[0.7, -0.3]]).unwrap(), vec![0.1], Activation::Identity)
            .unwrap();
        let x = Matrix::from_rows(&[[2.0, 5.0]]).unwrap();
        let (_, cache) = layer.forward_cached(&x).unwrap();
        let g = layer.backward(&cache, &Matrix::from_rows(&[[1.0]]).unwrap()).unwrap();
        assert_eq!(g.weights.as_slice(), x.as_slice());
        assert_eq!(g.bias, vec![1.0]);
    }

    #[test]
    fn no_overflow_on_large_inputs() {
        for x in [-1e6, -1e3, 0.0, 1e3, 1e6] {
            assert!(elu(x).is_finite());
            assert!(elu_derivative(x).is_finite());
            assert!(sigmoid(x).is_finite());
        }
    }
}
