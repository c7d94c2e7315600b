//! Exact checks of the information inequalities relating the label's
//! parents to its non-descendants, descendants and the label itself.

use crate::error::{Error, Result};
use crate::scm::{DiscreteScm, Roles};

/// Slack allowed when comparing the two sides.
pub const INEQUALITY_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl InequalityCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            holds: lhs <= rhs + INEQUALITY_SLACK,
        }
    }

    /// `rhs − lhs`; negative when violated.
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }
}

fn roles(scm: &DiscreteScm) -> Result<&Roles> {
    scm.roles()
        .ok_or_else(|| Error::config("SCM has no pa/nd/dc/y role designation"))
}

/// `I(pa; nd, dc) ≤ I(pa; nd, y)`.
pub fn check_lemma1(scm: &DiscreteScm) -> Result<InequalityCheck> {
    let r = roles(scm)?;
    let joint = scm.enumerate_joint()?;
    let nd_dc: Vec<usize> = r.nd.iter().chain(&r.dc).copied().collect();
    let nd_y: Vec<usize> = r.nd.iter().copied().chain(std::iter::once(r.y)).collect();
    Ok(InequalityCheck::new(
        joint.mutual_info(&r.pa, &nd_dc)?,
        joint.mutual_info(&r.pa, &nd_y)?,
    ))
}

/// `I(pa; nd, dc) ≤ I(pa; X)` with `X = (pa, nd, dc)`, and `I(pa; y) ≤ I(pa; nd, y)`.
pub fn check_lemma2(scm: &DiscreteScm) -> Result<(InequalityCheck, InequalityCheck)> {
    let r = roles(scm)?;
    let joint = scm.enumerate_joint()?;
    let nd_dc: Vec<usize> = r.nd.iter().chain(&r.dc).copied().collect();
    // I(pa; X) with pa ⊂ X reduces to H(pa); MI needs disjoint arguments
    let info_pa_x = joint.entropy(&r.pa)?;
    let first = InequalityCheck::new(joint.mutual_info(&r.pa, &nd_dc)?, info_pa_x);
    let nd_y: Vec<usize> = r.nd.iter().copied().chain(std::iter::once(r.y)).collect();
    let second = InequalityCheck::new(
        joint.mutual_info(&r.pa, &[r.y])?,
        joint.mutual_info(&r.pa, &nd_y)?,
    );
    Ok((first, second))
}

/// Data processing along `x − z − y`: `I(x; y) ≤ I(x; z)`.
pub fn check_dpi(scm: &DiscreteScm, x: usize, z: usize, y: usize) -> Result<InequalityCheck> {
    let joint = scm.enumerate_joint()?;
    Ok(InequalityCheck::new(
        joint.mutual_info(&[x], &[y])?,
        joint.mutual_info(&[x], &[z])?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;
    use crate::scm::random::{deterministic_label_scm, random_label_scm, Shape};
    use crate::scm::ScmBuilder;

    #[test]
    fn missing_roles_is_config_error() {
        let mut b = ScmBuilder::new();
        b.root("a", vec![0.5, 0.5]);
        let scm = b.build().unwrap();
        assert!(matches!(check_lemma1(&scm), Err(Error::Config(_))));
        assert!(matches!(check_lemma2(&scm), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_bijective_models_are_tight() {
        let mut rng = Rng::new(21);
        for shape in [Shape::Base, Shape::Confounded] {
            for _ in 0..20 {
                let scm = deterministic_label_scm(&mut rng, shape, 4);
                let l1 = check_lemma1(&scm).unwrap();
                assert!((l1.lhs - l1.rhs).abs() < 1e-10, "{l1:?}");
                let (a, b) = check_lemma2(&scm).unwrap();
                assert!((a.lhs - a.rhs).abs() < 1e-10, "{a:?}");
                assert!((b.lhs - b.rhs).abs() < 1e-10, "{b:?}");
            }
        }
    }

    #[test]
    fn base_shape_lemma1_holds() {
        let mut rng = Rng::new(22);
        for _ in 0..200 {
            let scm = random_label_scm(&mut rng, Shape::Base, 4);
            assert!(check_lemma1(&scm).unwrap().holds);
        }
    }

    #[test]
    fn lemma2_holds_for_both_shapes() {
        let mut rng = Rng::new(23);
        for shape in [Shape::Base, Shape::Confounded] {
            for _ in 0..200 {
                let scm = random_label_scm(&mut rng, shape, 4);
                let (a, b) = check_lemma2(&scm).unwrap();
                assert!(a.holds && b.holds);
            }
        }
    }

    #[test]
    fn confounding_edge_can_break_lemma1() {
        // dc copies pa while y and nd carry nothing about it
        let mut b = ScmBuilder::new();
        let pa = b.root("pa", vec![0.5, 0.5]);
        let nd = b.det("nd", 2, &[pa], |_| 0);
        let y = b.var("y", 2, &[pa], vec![0.5, 0.5], |_, u| u);
        let dc = b.det("dc", 2, &[pa, y], |p| p[0]);
        let scm = b
            .build()
            .unwrap()
            .with_roles(Roles { pa: vec![pa], nd: vec![nd], dc: vec![dc], y })
            .unwrap();
        let c = check_lemma1(&scm).unwrap();
        assert!(!c.holds);
        assert!((c.lhs - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(c.rhs < 1e-12);
    }
}
