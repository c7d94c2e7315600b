//! Loss terms and the assembled training objectives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelInput, ModelParams};
use crate::numkit::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Base,
    Ib,
    Rcvae,
    Carr,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Base, Method::Ib, Method::Rcvae, Method::Carr];

    pub fn name(self) -> &'static str {
        match self {
            Method::Base => "base",
            Method::Ib => "ib",
            Method::Rcvae => "rcvae",
            Method::Carr => "carr",
        }
    }

    pub fn uses_kl(self) -> bool {
        !matches!(self, Method::Base)
    }

    pub fn uses_negative(self) -> bool {
        matches!(self, Method::Carr)
    }

    /// Whether the KL prior is centred on the label (N(y·1, I)) rather than N(0, I).
    pub fn conditional_prior(self) -> bool {
        !matches!(self, Method::Ib)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown method '{s}' (expected base, ib, rcvae or carr)")))
    }
}

/// KL(N(mean, diag exp(logvar)) ‖ N(prior, I)) for a single row.
pub fn kl_gaussian(mean: &[f64], logvar: &[f64], prior: &[f64]) -> Result<f64> {
    if mean.len() != logvar.len() || mean.len() != prior.len() {
        return Err(Error::config(format!(
            "KL widths differ: mean {}, logvar {}, prior {}",
            mean.len(),
            logvar.len(),
            prior.len()
        )));
    }
    Ok(0.5
        * mean
            .iter()
            .zip(logvar)
            .zip(prior)
            .map(|((m, lv), p)| lv.exp() + (m - p) * (m - p) - 1.0 - lv)
            .sum::<f64>())
}

/// Batch-mean KL against N(y·1, I) (or N(0, I) when `conditional` is false),
/// with its gradients w.r.t. mean and logvar.
pub fn kl_batch(mean: &Matrix, logvar: &Matrix, y: &[u8], conditional: bool) -> Result<(f64, Matrix, Matrix)> {
    check_labels(mean.rows(), y)?;
    if mean.shape() != logvar.shape() {
        return Err(Error::config("mean and logvar shapes differ"));
    }
    let n = mean.rows() as f64;
    let mut total = 0.0;
    let mut d_mean = Matrix::zeros(mean.rows(), mean.cols());
    let mut d_logvar = Matrix::zeros(mean.rows(), mean.cols());
    for (r, &label) in y.iter().enumerate() {
        let prior = if conditional { f64::from(label) } else { 0.0 };
        let prior_row = vec![prior; mean.cols()];
        total += kl_gaussian(mean.row(r), logvar.row(r), &prior_row)?;
        for (c, (&m, &lv)) in mean.row(r).iter().zip(logvar.row(r)).enumerate() {
            d_mean.row_mut(r)[c] = (m - prior) / n;
            d_logvar.row_mut(r)[c] = 0.5 * (lv.exp() - 1.0) / n;
        }
    }
    Ok((total / n, d_mean, d_logvar))
}

/// Shifts each row by `+b` when its label is 0 and by `-b` when it is 1.
pub fn intervene(z: &Matrix, y: &[u8], b: f64) -> Result<Matrix> {
    check_labels(z.rows(), y)?;
    let mut out = z.clone();
    for (r, &label) in y.iter().enumerate() {
        let shift = if label == 0 { b } else { -b };
        for v in out.row_mut(r) {
            *v += shift;
        }
    }
    Ok(out)
}

fn log_softmax2(row: &[f64], k: usize) -> f64 {
    let m = row[0].max(row[1]);
    let lse = m + ((row[0] - m).exp() + (row[1] - m).exp()).ln();
    row[k] - lse
}

/// Mean over rows of `log softmax(logits)[y]`.
pub fn cross_entropy_ll(logits: &Matrix, y: &[u8]) -> Result<f64> {
    check_labels(logits.rows(), y)?;
    if logits.cols() != 2 {
        return Err(Error::config(format!("expected 2 logits per row, got {}", logits.cols())));
    }
    let total: f64 = logits.iter_rows().zip(y).map(|(r, &l)| log_softmax2(r, l as usize)).sum();
    Ok(total / logits.rows() as f64)
}

/// Gradient of [`cross_entropy_ll`] w.r.t. the logits.
pub fn cross_entropy_ll_grad(logits: &Matrix, y: &[u8]) -> Result<Matrix> {
    check_labels(logits.rows(), y)?;
    let n = logits.rows() as f64;
    let mut g = Matrix::zeros(logits.rows(), 2);
    for (r, &label) in y.iter().enumerate() {
        let p = crate::model::softmax2(logits.row(r));
        for k in 0..2 {
            let target = if k == label as usize { 1.0 } else { 0.0 };
            g.row_mut(r)[k] = (target - p[k]) / n;
        }
    }
    Ok(g)
}

/// Plug-in entropy of the labels in nats.
pub fn label_entropy(y: &[u8]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let p = y.iter().filter(|&&l| l == 1).count() as f64 / y.len() as f64;
    [p, 1.0 - p].iter().filter(|&&q| q > 0.0).map(|q| -q * q.ln()).sum()
}

fn check_labels(rows: usize, y: &[u8]) -> Result<()> {
    if y.len() != rows {
        return Err(Error::config(format!("{} labels for {} rows", y.len(), rows)));
    }
    if rows == 0 {
        return Err(Error::config("empty batch"));
    }
    if y.iter().any(|&l| l > 1) {
        return Err(Error::config("labels must be 0 or 1"));
    }
    Ok(())
}

/// Loss terms available for assembly. Terms a method does not use may be `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossComponents {
    /// Mean log-likelihood on the (possibly attacked) representation.
    pub positive_ll: Option<f64>,
    pub kl: Option<f64>,
    /// Mean log-likelihood on the intervened, perturbed representation.
    pub negative_ll: Option<f64>,
    /// Whether `positive_ll` was computed on an attacked representation.
    pub attacked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub positive_ll: f64,
    pub kl: f64,
    pub negative_ll: f64,
    pub total: f64,
    pub lambda: f64,
    pub use_kl: bool,
    pub use_negative: bool,
    pub use_attack: bool,
}

/// Combines the terms into the minimisation objective of `method`.
///
/// `total = −positive_ll [+ λ·kl] [+ neg_weight·negative_ll]`.
pub fn assemble_loss(method: Method, c: &LossComponents, lambda: f64, neg_weight: f64) -> Result<LossBreakdown> {
    let positive_ll = c
        .positive_ll
        .ok_or_else(|| Error::config(format!("{method} needs a positive log-likelihood")))?;
    let mut total = -positive_ll;
    let kl = match (method.uses_kl(), c.kl) {
        (true, None) => return Err(Error::config(format!("{method} needs a KL term"))),
        (true, Some(kl)) => {
            total += lambda * kl;
            kl
        }
        (false, kl) => kl.unwrap_or(0.0),
    };
    let negative_ll = match (method.uses_negative(), c.negative_ll) {
        (true, None) => return Err(Error::config(format!("{method} needs a negative log-likelihood"))),
        (true, Some(nll)) => {
            total += neg_weight * nll;
            nll
        }
        (false, nll) => nll.unwrap_or(0.0),
    };
    let out = LossBreakdown {
        positive_ll,
        kl,
        negative_ll,
        total,
        lambda,
        use_kl: method.uses_kl(),
        use_negative: method.uses_negative(),
        use_attack: c.attacked,
    };
    if ![out.positive_ll, out.kl, out.negative_ll, out.total].iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite loss term in {out:?}")));
    }
    Ok(out)
}

/// Settings for a full batch objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveSettings {
    pub method: Method,
    pub lambda: f64,
    /// Intervention bias.
    pub b: f64,
    pub neg_weight: f64,
    /// Block the negative term's gradient at the representation.
    pub stop_grad_negative: bool,
    /// Hold the negative term at or above `−H(Y)` of the batch labels, the
    /// value at which the intervened representation carries no label
    /// information. Below it the term and its gradient are constant.
    pub floor_negative: bool,
}

/// Perturbations chosen for a batch once the sampled representation is known.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Perturbations {
    /// Offset applied to `z` for the positive term.
    pub attack: Option<Matrix>,
    /// Offset applied to the intervened representation for the negative term.
    pub ball: Option<Matrix>,
}

/// Loss and parameter gradients on one batch.
///
/// `noise` fixes the reparameterisation draw (`None` uses the posterior mean).
/// `perturb` receives the sampled `z` and returns the offsets, which are
/// treated as constants when differentiating.
pub fn batch_objective<F>(
    params: &ModelParams,
    x: &ModelInput,
    y: &[u8],
    settings: &ObjectiveSettings,
    noise: Option<&Matrix>,
    mut perturb: F,
) -> Result<(LossBreakdown, ModelParams)>
where
    F: FnMut(&Matrix) -> Result<Perturbations>,
{
    let (enc, cache) = params.encode_with_noise(x, noise)?;
    let perturbation = perturb(&enc.z)?;

    let mut grads = params.zeros_like();
    let mut d_z = Matrix::zeros(enc.z.rows(), enc.z.cols());

    let z_pos = match &perturbation.attack {
        Some(delta) => enc.z.add(delta)?,
        None => enc.z.clone(),
    };
    let (logits, pcache) = params.predict_cached(&z_pos)?;
    let positive_ll = cross_entropy_ll(&logits, y)?;
    let d_logits = cross_entropy_ll_grad(&logits, y)?.scale(-1.0);
    d_z.add_assign(&params.predictor_backward(&pcache, &d_logits, Some(&mut grads))?)?;

    let mut components = LossComponents {
        positive_ll: Some(positive_ll),
        attacked: perturbation.attack.is_some(),
        ..Default::default()
    };

    let (kl, kl_d_mean, kl_d_logvar) = kl_batch(&enc.mean, &enc.logvar, y, settings.method.conditional_prior())?;
    components.kl = Some(kl);
    let (d_mean, d_logvar) = if settings.method.uses_kl() {
        (kl_d_mean.scale(settings.lambda), kl_d_logvar.scale(settings.lambda))
    } else {
        let zero = Matrix::zeros(enc.mean.rows(), enc.mean.cols());
        (zero.clone(), zero)
    };

    if settings.method.uses_negative() {
        let mut z_neg = intervene(&enc.z, y, settings.b)?;
        if let Some(ball) = &perturbation.ball {
            z_neg.add_assign(ball)?;
        }
        let (logits, ncache) = params.predict_cached(&z_neg)?;
        let ll = cross_entropy_ll(&logits, y)?;
        let floor = -label_entropy(y);
        let floored = settings.floor_negative && ll < floor;
        components.negative_ll = Some(if floored { floor } else { ll });
        if settings.neg_weight != 0.0 && !floored {
            let d_logits = cross_entropy_ll_grad(&logits, y)?.scale(settings.neg_weight);
            let d_zn = params.predictor_backward(&ncache, &d_logits, Some(&mut grads))?;
            if !settings.stop_grad_negative {
                d_z.add_assign(&d_zn)?;
            }
        }
    }

    let loss = assemble_loss(settings.method, &components, settings.lambda, settings.neg_weight)?;
    params.encoder_backward(&cache, &d_mean, &d_logvar, &d_z, &mut grads)?;
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{standard_normal, InputSpec};
    use crate::numkit::{grad_check, Rng};

    #[test]
    fn kl_closed_form_values() {
        assert_eq!(kl_gaussian(&[0.3, -1.0], &[0.0, 0.0], &[0.3, -1.0]).unwrap(), 0.0);
        assert!((kl_gaussian(&[1.0], &[0.0], &[0.0]).unwrap() - 0.5).abs() < 1e-15);
        // ½(4 − 1 − ln 4)
        let v = kl_gaussian(&[0.0], &[4f64.ln()], &[0.0]).unwrap();
        assert!((v - 0.806_852_819_440_054_7).abs() < 1e-12);
        assert!(matches!(kl_gaussian(&[0.0], &[0.0, 1.0], &[0.0]), Err(Error::Config(_))));
    }

    #[test]
    fn intervene_shifts_by_label() {
        let z = Matrix::zeros(2, 3);
        let zb = intervene(&z, &[0, 1], 0.8).unwrap();
        assert_eq!(zb.row(0), &[0.8, 0.8, 0.8]);
        assert_eq!(zb.row(1), &[-0.8, -0.8, -0.8]);
        assert_eq!(intervene(&z, &[0, 1], 0.0).unwrap(), z);
    }

    #[test]
    fn cross_entropy_values() {
        let uniform = Matrix::zeros(3, 2);
        assert!((cross_entropy_ll(&uniform, &[0, 1, 1]).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        let l = Matrix::from_rows(&[vec![2.0, 0.0]]).unwrap();
        // ln(e² / (e² + 1))
        assert!((cross_entropy_ll(&l, &[0]).unwrap() + 0.126_928_011_042_972_6).abs() < 1e-12);
        let saturated = Matrix::from_rows(&[vec![-10.0, 10.0]]).unwrap();
        assert!(cross_entropy_ll(&saturated, &[1]).unwrap() > -1e-8);
    }

    fn components() -> LossComponents {
        LossComponents { positive_ll: Some(-0.4), kl: Some(12.5), negative_ll: Some(-1.3), attacked: true }
    }

    #[test]
    fn assembled_totals() {
        let c = components();
        let carr = assemble_loss(Method::Carr, &c, 0.001, 1.0).unwrap();
        assert!((carr.total - (0.4 + 0.001 * 12.5 - 1.3)).abs() < 1e-15);
        let rcvae = assemble_loss(Method::Rcvae, &c, 0.001, 1.0).unwrap();
        let no_neg = LossComponents { negative_ll: Some(0.0), ..c };
        assert_eq!(assemble_loss(Method::Carr, &no_neg, 0.001, 1.0).unwrap().total, rcvae.total);
        assert_eq!(assemble_loss(Method::Base, &c, 0.3, 1.0).unwrap().total, 0.4);
        let carr0 = assemble_loss(Method::Carr, &c, 0.0, 1.0).unwrap();
        assert_eq!(carr0.total, 0.4 + -1.3);
    }

    #[test]
    fn missing_components_rejected() {
        let only_pos = LossComponents { positive_ll: Some(-0.1), ..Default::default() };
        assert!(assemble_loss(Method::Base, &only_pos, 0.1, 1.0).is_ok());
        assert!(matches!(assemble_loss(Method::Ib, &only_pos, 0.1, 1.0), Err(Error::Config(_))));
        let with_kl = LossComponents { kl: Some(1.0), ..only_pos };
        assert!(matches!(assemble_loss(Method::Carr, &with_kl, 0.1, 1.0), Err(Error::Config(_))));
        assert!(assemble_loss(Method::Base, &LossComponents::default(), 0.1, 1.0).is_err());
    }

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("vae".parse::<Method>().is_err());
    }

    fn setup(seed: u64, ids: bool) -> (ModelParams, ModelInput, Vec<u8>, Matrix, Perturbations) {
        let mut rng = Rng::new(seed);
        let n = 6;
        let d_z = 4;
        let (params, x) = if ids {
            let p = ModelParams::init(InputSpec::IdPairs { n_users: 4, n_items: 3 }, d_z, &mut rng).unwrap();
            (p, ModelInput::Ids((0..n).map(|i| (i % 4, (i * 2) % 3)).collect()))
        } else {
            let p = ModelParams::init(InputSpec::Features { width: 5 }, d_z, &mut rng).unwrap();
            (p, ModelInput::Features(standard_normal(&mut rng, n, 5)))
        };
        let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let noise = standard_normal(&mut rng, n, d_z);
        let pert = Perturbations {
            attack: Some(standard_normal(&mut rng, n, d_z).scale(0.1)),
            ball: Some(standard_normal(&mut rng, n, d_z).scale(0.1)),
        };
        (params, x, y, noise, pert)
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (seed, ids) in [(1, false), (2, true)] {
            for method in Method::ALL {
                let (params, x, y, noise, pert) = setup(seed, ids);
                let settings = ObjectiveSettings { method, lambda: 0.3, b: 0.8, neg_weight: 1.0, stop_grad_negative: false, floor_negative: false };
                let (_, grads) =
                    batch_objective(&params, &x, &y, &settings, Some(&noise), |_| Ok(pert.clone())).unwrap();
                let mut probe = params.clone();
                let err = grad_check(
                    |theta| {
                        probe.set_flat(theta).unwrap();
                        batch_objective(&probe, &x, &y, &settings, Some(&noise), |_| Ok(pert.clone()))
                            .unwrap()
                            .0
                            .total
                    },
                    &params.flatten(),
                    &grads.flatten(),
                    1e-5,
                )
                .unwrap();
                assert!(err < 1e-4, "{method} ids={ids}: {err}");
            }
        }
    }

    #[test]
    fn kl_is_linear_in_lambda() {
        let (params, x, y, noise, pert) = setup(3, false);
        let total = |lambda: f64| {
            let s = ObjectiveSettings { method: Method::Carr, lambda, b: 0.8, neg_weight: 1.0, stop_grad_negative: false, floor_negative: true };
            batch_objective(&params, &x, &y, &s, Some(&noise), |_| Ok(pert.clone())).unwrap().0
        };
        let (a, b) = (total(0.0), total(1.0));
        let c = total(0.37);
        assert!((c.total - (a.total + 0.37 * (b.total - a.total))).abs() < 1e-12);
        assert_eq!(a.kl, c.kl);
    }

    #[test]
    fn stop_grad_leaves_encoder_untouched_by_negative_term() {
        let (params, x, y, noise, pert) = setup(4, false);
        let s = |method, stop| ObjectiveSettings { method, lambda: 0.1, b: 0.8, neg_weight: 1.0, stop_grad_negative: stop, floor_negative: false };
        let run = |set: ObjectiveSettings| batch_objective(&params, &x, &y, &set, Some(&noise), |_| Ok(pert.clone())).unwrap().1;
        let stopped = run(s(Method::Carr, true));
        let rcvae = run(s(Method::Rcvae, false));
        assert_eq!(stopped.enc_hidden, rcvae.enc_hidden);
        assert_ne!(stopped.pred_out, rcvae.pred_out);
    }

    #[test]
    fn floored_negative_term_is_constant() {
        let (params, x, y, noise, pert) = setup(4, false);
        let s = |method, floor| ObjectiveSettings { method, lambda: 0.1, b: 0.8, neg_weight: 1.0, stop_grad_negative: false, floor_negative: floor };
        let run = |set: ObjectiveSettings| batch_objective(&params, &x, &y, &set, Some(&noise), |_| Ok(pert.clone())).unwrap();
        let (raw, _) = run(s(Method::Carr, false));
        let (floored, g) = run(s(Method::Carr, true));
        let h = label_entropy(&y);
        assert_eq!(floored.negative_ll, raw.negative_ll.max(-h));
        if raw.negative_ll < -h {
            assert_eq!(g, run(s(Method::Rcvae, true)).1);
        }
    }

    #[test]
    fn label_entropy_values() {
        assert_eq!(label_entropy(&[1, 1, 1]), 0.0);
        assert!((label_entropy(&[0, 1]) - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
