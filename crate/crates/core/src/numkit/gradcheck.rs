use crate::error::{Error, Result};

/// Compares an analytic gradient against central finite differences.
///
/// Returns `max_i |analytic_i − fd_i| / max(1, |fd_i|)`.
pub fn grad_check<F>(mut f: F, params: &[f64], analytic: &[f64], eps: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if params.len() != analytic.len() {
        return Err(Error::config(format!(
            "gradient has {} entries for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let mut probe = params.to_vec();
    let mut worst = 0.0_f64;
    for i in 0..params.len() {
        let base = probe[i];
        probe[i] = base + eps;
        let up = f(&probe);
        probe[i] = base - eps;
        let down = f(&probe);
        probe[i] = base;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!(
                "objective is non-finite at coordinate {i} ± {eps}"
            )));
        }
        let fd = (up - down) / (2.0 * eps);
        let rel = (analytic[i] - fd).abs() / fd.abs().max(1.0);
        worst = worst.max(rel);
    }
    Ok(worst)
}
