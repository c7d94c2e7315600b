//! Random finite SCM families used by the property audits.

use super::discrete::{DiscreteScm, Roles, ScmBuilder};
use crate::numkit::Rng;

/// Causal shape of the label's neighbourhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// pa → y, pa → nd, y → dc.
    Base,
    /// Base plus the confounding edge pa → dc.
    Confounded,
}

/// Flat Dirichlet draw.
pub fn random_simplex(rng: &mut Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| -(1.0 - rng.unit()).ln()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

fn random_table(rng: &mut Rng, rows: usize, domain: usize) -> Vec<usize> {
    (0..rows).map(|_| rng.below(domain)).collect()
}

fn domain(rng: &mut Rng, max_domain: usize) -> usize {
    2 + rng.below(max_domain.max(2) - 1)
}

/// Adds a variable with a random structural table over `parents` and a random
/// exogenous input of 1..=max_domain states.
fn random_var(b: &mut ScmBuilder, rng: &mut Rng, name: &str, dom: usize, parents: &[usize], radix: &[usize], max_domain: usize) -> usize {
    let exo_k = 1 + rng.below(max_domain);
    let exo = random_simplex(rng, exo_k);
    let rows: usize = radix.iter().product::<usize>() * exo_k;
    let table = random_table(rng, rows, dom);
    b.var(name, dom, parents, exo, move |pv, u| {
        let mut idx = 0;
        for (v, r) in pv.iter().zip(radix) {
            idx = idx * r + v;
        }
        table[idx * exo_k + u]
    })
}

/// Random SCM of the given shape with one or two parent variables and
/// domain sizes in `2..=max_domain`.
pub fn random_label_scm(rng: &mut Rng, shape: Shape, max_domain: usize) -> DiscreteScm {
    let mut b = ScmBuilder::new();
    let n_pa = 1 + rng.below(2);
    let mut pa = Vec::new();
    let mut pa_dom = Vec::new();
    for i in 0..n_pa {
        let d = domain(rng, max_domain);
        pa.push(b.root(&format!("pa{i}"), random_simplex(rng, d)));
        pa_dom.push(d);
    }
    let nd_dom = domain(rng, max_domain);
    let nd = random_var(&mut b, rng, "nd", nd_dom, &pa, &pa_dom, max_domain);
    let y_dom = domain(rng, max_domain);
    let y = random_var(&mut b, rng, "y", y_dom, &pa, &pa_dom, max_domain);
    let dc_dom = domain(rng, max_domain);
    let dc = match shape {
        Shape::Base => random_var(&mut b, rng, "dc", dc_dom, &[y], &[y_dom], max_domain),
        Shape::Confounded => {
            let mut parents = pa.clone();
            parents.push(y);
            let mut radix = pa_dom.clone();
            radix.push(y_dom);
            random_var(&mut b, rng, "dc", dc_dom, &parents, &radix, max_domain)
        }
    };
    b.build()
        .and_then(|scm| scm.with_roles(Roles { pa, nd: vec![nd], dc: vec![dc], y }))
        .expect("random SCM is well formed")
}

/// Deterministic SCM whose mechanisms are bijections on a common domain;
/// the information inequalities are tight for this family.
pub fn deterministic_label_scm(rng: &mut Rng, shape: Shape, max_domain: usize) -> DiscreteScm {
    let d = domain(rng, max_domain);
    let mut b = ScmBuilder::new();
    let pa = b.root("pa", random_simplex(rng, d));
    let nd_perm = rng.permutation(d);
    let nd = b.det("nd", d, &[pa], move |p| nd_perm[p[0]]);
    let y_perm = rng.permutation(d);
    let y = b.det("y", d, &[pa], move |p| y_perm[p[0]]);
    let dc_perm = rng.permutation(d);
    let dc = match shape {
        Shape::Base => b.det("dc", d, &[y], move |p| dc_perm[p[0]]),
        Shape::Confounded => {
            let shift = rng.below(d);
            b.det("dc", d, &[pa, y], move |p| dc_perm[(p[1] + shift * p[0]) % d])
        }
    };
    b.build()
        .and_then(|scm| scm.with_roles(Roles { pa: vec![pa], nd: vec![nd], dc: vec![dc], y }))
        .expect("deterministic SCM is well formed")
}

/// Random Markov chain x → z → y; returns the model and (x, z, y) indices.
pub fn random_markov_chain(rng: &mut Rng, max_domain: usize) -> (DiscreteScm, [usize; 3]) {
    let mut b = ScmBuilder::new();
    let xd = domain(rng, max_domain);
    let x = b.root("x", random_simplex(rng, xd));
    let zd = domain(rng, max_domain);
    let z = random_var(&mut b, rng, "z", zd, &[x], &[xd], max_domain);
    let yd = domain(rng, max_domain);
    let y = random_var(&mut b, rng, "y", yd, &[z], &[zd], max_domain);
    (b.build().expect("chain is well formed"), [x, z, y])
}

/// Random binary model c → z → y with confounding c → y.
/// Returns the model and (z, y) indices.
pub fn random_binary_cause(rng: &mut Rng) -> (DiscreteScm, [usize; 2]) {
    let mut b = ScmBuilder::new();
    let c = b.root("c", random_simplex(rng, 2));
    let z = random_var(&mut b, rng, "z", 2, &[c], &[2], 3);
    let y = random_var(&mut b, rng, "y", 2, &[c, z], &[2, 2], 3);
    (b.build().expect("binary model is well formed"), [z, y])
}
