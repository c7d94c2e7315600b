//! Finite-sample generalisation bounds on the predictive information of a
//! representation, for a general encoder and for one that recovers the
//! label's parents.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_C: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Sample count.
    pub m: f64,
    pub card_y: f64,
    /// Effective cardinality of the representation space.
    pub card_z: f64,
    /// Noise variance.
    pub beta: f64,
    pub delta: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundCase {
    General,
    Ideal,
}

/// Which constant to use for the ideal-case sample threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdealThreshold {
    /// `C · ln(|Y|/δ) · β · e²`.
    #[default]
    Full,
    /// `(C/4) · ln(|Y|/δ) · β · e²`.
    Quarter,
}

impl BoundInputs {
    pub fn new(m: f64, card_y: f64, card_z: f64, beta: f64, delta: f64) -> Self {
        Self { m, card_y, card_z, beta, delta, c: DEFAULT_C }
    }

    fn log_term(&self) -> f64 {
        (self.card_y / self.delta).ln()
    }

    /// Checks input ranges and that `C` absorbs the lower-order constants:
    /// `√(C ln(|Y|/δ)) ≥ 2 + √(2 ln((|Y|+2)/δ))`.
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Domain(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.m >= 1.0 && self.m.is_finite()) {
            return Err(Error::Domain(format!("m must be >= 1, got {}", self.m)));
        }
        if !(self.card_y >= 2.0 && self.card_y.is_finite()) {
            return Err(Error::Domain(format!("|Y| must be >= 2, got {}", self.card_y)));
        }
        if !(self.card_z >= 1.0 && self.card_z.is_finite()) {
            return Err(Error::Domain(format!("|Z| must be >= 1, got {}", self.card_z)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Domain(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Domain(format!("C must be > 0, got {}", self.c)));
        }
        let lhs = (self.c * self.log_term()).sqrt();
        let rhs = 2.0 + (2.0 * ((self.card_y + 2.0) / self.delta).ln()).sqrt();
        if lhs < rhs {
            return Err(Error::Domain(format!(
                "C = {} is too small for |Y| = {}, delta = {}: sqrt(C ln(|Y|/delta)) = {lhs:.4} < {rhs:.4}",
                self.c, self.card_y, self.delta
            )));
        }
        Ok(())
    }
}

/// Unrounded sample threshold for a case.
pub fn threshold(case: BoundCase, variant: IdealThreshold, inp: &BoundInputs) -> f64 {
    let base = inp.c * inp.log_term() * E * E;
    match (case, variant) {
        (BoundCase::General, _) => base / 4.0 * inp.card_z,
        (BoundCase::Ideal, IdealThreshold::Full) => base * inp.beta,
        (BoundCase::Ideal, IdealThreshold::Quarter) => base / 4.0 * inp.beta,
    }
}

/// Smallest integer sample count at which the case's bound is stated to hold.
pub fn min_samples(case: BoundCase, variant: IdealThreshold, inp: &BoundInputs) -> Result<u64> {
    inp.validate()?;
    Ok(threshold(case, variant, inp).ceil() as u64)
}

fn bound(inp: &BoundInputs, lead: f64) -> f64 {
    let root_c = (inp.c * inp.log_term()).sqrt();
    let inner = inp.card_y * lead.sqrt() * inp.m.ln() + 0.5 * inp.card_z.sqrt() * inp.card_y.ln();
    (root_c * inner + 2.0 / E * inp.card_y) / inp.m.sqrt()
}

fn check_threshold(case: BoundCase, inp: &BoundInputs) -> Result<()> {
    inp.validate()?;
    let t = threshold(case, IdealThreshold::Full, inp);
    if inp.m < t {
        return Err(Error::Domain(format!(
            "m = {} is below the validity threshold {}",
            inp.m,
            t.ceil()
        )));
    }
    Ok(())
}

/// Bound for a general encoder.
pub fn bound_general(inp: &BoundInputs) -> Result<f64> {
    check_threshold(BoundCase::General, inp)?;
    Ok(bound(inp, inp.card_z))
}

/// Bound when the representation recovers the label's parents; `β` replaces
/// `|Z|` in the leading `ln m` term only.
pub fn bound_ideal(inp: &BoundInputs) -> Result<f64> {
    check_threshold(BoundCase::Ideal, inp)?;
    Ok(bound(inp, inp.beta))
}

/// One row of a bound table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub m: f64,
    pub bound_general: Option<f64>,
    pub bound_ideal: Option<f64>,
}

/// Evaluates both bounds over a grid of sample counts; entries below a
/// case's threshold are `None`.
pub fn bound_table(inp: &BoundInputs, grid: &[f64]) -> Result<Vec<BoundRow>> {
    inp.validate()?;
    Ok(grid
        .iter()
        .map(|&m| {
            let at = BoundInputs { m, ..*inp };
            BoundRow { m, bound_general: bound_general(&at).ok(), bound_ideal: bound_ideal(&at).ok() }
        })
        .collect())
}
