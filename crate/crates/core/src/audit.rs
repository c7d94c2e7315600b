//! Randomised property suites over the exact oracles and the loss gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::{check_dpi, check_lemma1, check_lemma2, pns, InequalityCheck, PnsQuery, PnsWeighting, INEQUALITY_SLACK};
use crate::model::{standard_normal, InputSpec, ModelInput, ModelParams};
use crate::numkit::{grad_check, Matrix, Rng};
use crate::objective::{batch_objective, Method, ObjectiveSettings, Perturbations};
use crate::scm::random::{deterministic_label_scm, random_binary_cause, random_label_scm, random_markov_chain, Shape};

pub const AUDIT_MAX_DOMAIN: usize = 4;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const GRADCHECK_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Dpi,
    Lemma1,
    Lemma2,
    Pns,
    Gradcheck,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dpi" => Ok(Suite::Dpi),
            "lemma1" => Ok(Suite::Lemma1),
            "lemma2" => Ok(Suite::Lemma2),
            "pns" => Ok(Suite::Pns),
            "gradcheck" => Ok(Suite::Gradcheck),
            _ => Err(Error::config(format!(
                "unknown audit suite '{s}' (expected dpi, lemma1, lemma2, pns or gradcheck)"
            ))),
        }
    }
}

/// Results for one family of instances within a suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub label: String,
    pub checked: usize,
    pub violations: usize,
    /// Smallest margin seen; negative values are violations beyond the slack.
    /// Inequalities use `rhs − lhs`, equalities `−|lhs − rhs|`, gradient
    /// checks `tolerance − error`.
    pub worst_margin: f64,
}

impl CaseSummary {
    fn new(label: impl Into<String>) -> Self {
        Self { label: label.into(), checked: 0, violations: 0, worst_margin: f64::INFINITY }
    }

    fn record(&mut self, margin: f64, ok: bool) {
        self.checked += 1;
        if !ok {
            self.violations += 1;
        }
        self.worst_margin = self.worst_margin.min(margin);
    }

    fn inequality(&mut self, c: &InequalityCheck) {
        self.record(c.margin(), c.holds);
    }

    fn equality(&mut self, lhs: f64, rhs: f64) {
        let gap = (lhs - rhs).abs();
        self.record(-gap, gap <= INEQUALITY_SLACK);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub suite: Suite,
    pub trials: usize,
    pub seed: u64,
    pub cases: Vec<CaseSummary>,
}

impl AuditReport {
    pub fn violations(&self) -> usize {
        self.cases.iter().map(|c| c.violations).sum()
    }

    pub fn checked(&self) -> usize {
        self.cases.iter().map(|c| c.checked).sum()
    }

    pub fn worst_margin(&self) -> f64 {
        self.cases.iter().map(|c| c.worst_margin).fold(f64::INFINITY, f64::min)
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0
    }
}

fn shape_name(shape: Shape) -> &'static str {
    match shape {
        Shape::Base => "base",
        Shape::Confounded => "confounded",
    }
}

pub fn run_audit(suite: Suite, trials: usize, seed: u64) -> Result<AuditReport> {
    let mut rng = Rng::new(seed);
    let cases = match suite {
        Suite::Dpi => {
            let mut c = CaseSummary::new("markov chain");
            for _ in 0..trials {
                let (scm, [x, z, y]) = random_markov_chain(&mut rng, AUDIT_MAX_DOMAIN);
                c.inequality(&check_dpi(&scm, x, z, y)?);
            }
            vec![c]
        }
        Suite::Lemma1 | Suite::Lemma2 => lemma_cases(suite, trials, &mut rng)?,
        Suite::Pns => {
            let mut bounds = CaseSummary::new("pns in [0, 1]");
            let mut relation = CaseSummary::new("difference equals P(z, y)");
            // draws whose conditioning events have zero mass are replaced, not counted
            let mut attempts = 0;
            while bounds.checked < trials && attempts < 100 * trials {
                attempts += 1;
                let (scm, [z, y]) = random_binary_cause(&mut rng);
                let q = PnsQuery { z_var: z, z_val: 1, y_var: y, y_val: 1, z_alt: 0 };
                let r = match pns(&scm, &q, PnsWeighting::EventWeighted) {
                    Ok(r) => r,
                    Err(Error::Inference(_)) => continue,
                    Err(e) => return Err(e),
                };
                let m = r.pns_sum.min(1.0 - r.pns_sum);
                bounds.record(m, m >= -INEQUALITY_SLACK);
                relation.equality(r.pns_sum - r.pns_difference, r.p_observed);
            }
            vec![bounds, relation]
        }
        Suite::Gradcheck => {
            let mut cases: Vec<CaseSummary> = Method::ALL.iter().map(|m| CaseSummary::new(m.name())).collect();
            for _ in 0..trials {
                let draw = GradDraw::sample(&mut rng)?;
                for (case, method) in cases.iter_mut().zip(Method::ALL) {
                    let err = draw.check(method)?;
                    case.record(GRADCHECK_TOLERANCE - err, err <= GRADCHECK_TOLERANCE);
                }
            }
            cases
        }
    };
    Ok(AuditReport { suite, trials, seed, cases })
}

fn lemma_cases(suite: Suite, trials: usize, rng: &mut Rng) -> Result<Vec<CaseSummary>> {
    let mut cases = Vec::new();
    for shape in [Shape::Base, Shape::Confounded] {
        let name = shape_name(shape);
        match suite {
            Suite::Lemma1 => {
                let mut random = CaseSummary::new(format!("{name}: random"));
                let mut det = CaseSummary::new(format!("{name}: deterministic equality"));
                for _ in 0..trials {
                    random.inequality(&check_lemma1(&random_label_scm(rng, shape, AUDIT_MAX_DOMAIN))?);
                    let c = check_lemma1(&deterministic_label_scm(rng, shape, AUDIT_MAX_DOMAIN))?;
                    det.equality(c.lhs, c.rhs);
                }
                cases.extend([random, det]);
            }
            _ => {
                let mut first = CaseSummary::new(format!("{name}: I(pa;nd,dc) <= I(pa;X)"));
                let mut second = CaseSummary::new(format!("{name}: I(pa;y) <= I(pa;nd,y)"));
                let mut det = CaseSummary::new(format!("{name}: deterministic equality"));
                for _ in 0..trials {
                    let (a, b) = check_lemma2(&random_label_scm(rng, shape, AUDIT_MAX_DOMAIN))?;
                    first.inequality(&a);
                    second.inequality(&b);
                    let (a, b) = check_lemma2(&deterministic_label_scm(rng, shape, AUDIT_MAX_DOMAIN))?;
                    det.equality(a.lhs, a.rhs);
                    det.equality(b.lhs, b.rhs);
                }
                cases.extend([first, second, det]);
            }
        }
    }
    Ok(cases)
}

/// A random small model, batch, reparameterisation draw and perturbations.
pub struct GradDraw {
    params: ModelParams,
    x: ModelInput,
    y: Vec<u8>,
    noise: Matrix,
    perturbations: Perturbations,
    lambda: f64,
    b: f64,
}

impl GradDraw {
    pub fn sample(rng: &mut Rng) -> Result<Self> {
        let n = 2 + rng.below(5);
        let width = 2 + rng.below(6);
        let d_z = 2 + rng.below(5);
        let mut init = Rng::new(rng.next_u64());
        let params = ModelParams::init(InputSpec::Features { width }, d_z, &mut init)?;
        let x = ModelInput::Features(standard_normal(rng, n, width));
        let y: Vec<u8> = (0..n).map(|i| if i < 2 { i as u8 } else { rng.below(2) as u8 }).collect();
        let noise = standard_normal(rng, n, d_z);
        let radius = rng.uniform(0.0, 0.5);
        let perturbations = Perturbations {
            attack: Some(standard_normal(rng, n, d_z).scale(radius)),
            ball: Some(standard_normal(rng, n, d_z).scale(radius)),
        };
        Ok(Self { params, x, y, noise, perturbations, lambda: rng.uniform(0.0, 1.0), b: rng.uniform(0.0, 1.0) })
    }

    /// Max relative error between analytic and central-difference gradients.
    pub fn check(&self, method: Method) -> Result<f64> {
        // the floored branch is constant, so only the smooth one is worth probing
        let settings = ObjectiveSettings {
            method,
            lambda: self.lambda,
            b: self.b,
            neg_weight: 1.0,
            stop_grad_negative: false,
            floor_negative: false,
        };
        let pert = &self.perturbations;
        let (_, grads) =
            batch_objective(&self.params, &self.x, &self.y, &settings, Some(&self.noise), |_| Ok(pert.clone()))?;
        let mut probe = self.params.clone();
        let mut failure = None;
        let err = grad_check(
            |theta| {
                probe.set_flat(theta).expect("same length");
                match batch_objective(&probe, &self.x, &self.y, &settings, Some(&self.noise), |_| Ok(pert.clone())) {
                    Ok((loss, _)) => loss.total,
                    Err(e) => {
                        failure = Some(e);
                        f64::NAN
                    }
                }
            },
            &self.params.flatten(),
            &grads.flatten(),
            GRADCHECK_EPS,
        );
        match failure {
            Some(e) => Err(e),
            None => err,
        }
    }
}
