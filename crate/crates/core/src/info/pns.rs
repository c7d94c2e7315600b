//! Probability of necessity and sufficiency by exact counterfactual enumeration.

use crate::error::Result;
use crate::scm::{Condition, DiscreteScm};

/// How the outer expectation over the conditioning event is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PnsWeighting {
    /// Each counterfactual term is multiplied by the probability of its conditioning event.
    #[default]
    EventWeighted,
    /// Bare conditional counterfactual probabilities.
    Unweighted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnsQuery {
    pub z_var: usize,
    pub z_val: usize,
    pub y_var: usize,
    pub y_val: usize,
    /// Value standing in for "Z ≠ z" under intervention.
    pub z_alt: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnsReport {
    /// `P(Z≠z, Y≠y) · P(Y(Z=z) = y | Z≠z, Y≠y)`.
    pub sufficient: f64,
    /// `P(Z=z, Y=y) · P(Y(Z=z_alt) ≠ y | Z=z, Y=y)`.
    pub necessary: f64,
    /// `sufficient + necessary`.
    pub pns_sum: f64,
    /// `sufficient − P(Z=z, Y=y) · P(Y(Z=z_alt) = y | Z=z, Y=y)`.
    pub pns_difference: f64,
    /// `P(Z=z, Y=y)`.
    pub p_observed: f64,
}

pub fn pns(scm: &DiscreteScm, q: &PnsQuery, weighting: PnsWeighting) -> Result<PnsReport> {
    let off_event = [(q.z_var, Condition::Ne(q.z_val)), (q.y_var, Condition::Ne(q.y_val))];
    let on_event = [(q.z_var, Condition::Eq(q.z_val)), (q.y_var, Condition::Eq(q.y_val))];

    let p_off = scm.event_probability(&off_event)?;
    let p_on = scm.event_probability(&on_event)?;

    let suff_cf = scm.counterfactual_query(&off_event, &[(q.z_var, q.z_val)], q.y_var)?;
    let nec_cf = scm.counterfactual_query(&on_event, &[(q.z_var, q.z_alt)], q.y_var)?;
    let p_suff = suff_cf[q.y_val];
    let p_keep = nec_cf[q.y_val];
    let p_flip = 1.0 - p_keep;

    let (w_off, w_on) = match weighting {
        PnsWeighting::EventWeighted => (p_off, p_on),
        PnsWeighting::Unweighted => (1.0, 1.0),
    };
    let sufficient = w_off * p_suff;
    let necessary = w_on * p_flip;
    Ok(PnsReport {
        sufficient,
        necessary,
        pns_sum: sufficient + necessary,
        pns_difference: sufficient - w_on * p_keep,
        p_observed: p_on,
    })
}
