//! Finite-domain structural causal models with exact enumeration.
//!
//! Every endogenous variable owns one exogenous variable with an explicit
//! marginal; exogenous variables are mutually independent. Shared causes
//! are modelled as endogenous root variables.

use crate::error::{Error, Result};
use crate::info::JointTable;

pub const MAX_DOMAIN: usize = 8;
pub const MAX_STATES: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteVar {
    pub name: String,
    pub domain: usize,
    /// Indices of endogenous parents; all strictly earlier in the model.
    pub parents: Vec<usize>,
    /// Marginal of this variable's exogenous input.
    pub exo: Vec<f64>,
    /// Structural function as a table indexed by `parent_index * exo.len() + u`,
    /// where `parent_index` is mixed radix over `parents` (first parent most significant).
    pub table: Vec<usize>,
}

/// Designation of the label's parents, non-descendants and descendants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Roles {
    pub pa: Vec<usize>,
    pub nd: Vec<usize>,
    pub dc: Vec<usize>,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Condition {
    Eq(usize),
    Ne(usize),
}

impl Condition {
    pub fn holds(&self, value: usize) -> bool {
        match *self {
            Condition::Eq(v) => value == v,
            Condition::Ne(v) => value != v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteScm {
    vars: Vec<DiscreteVar>,
    roles: Option<Roles>,
}

impl DiscreteScm {
    pub fn new(vars: Vec<DiscreteVar>) -> Result<Self> {
        for (i, v) in vars.iter().enumerate() {
            if v.domain == 0 || v.domain > MAX_DOMAIN {
                return Err(Error::config(format!(
                    "variable {} has domain size {}, allowed 1..={MAX_DOMAIN}",
                    v.name, v.domain
                )));
            }
            if let Some(&p) = v.parents.iter().find(|&&p| p >= i) {
                return Err(Error::config(format!(
                    "variable {} lists parent {p} that is not earlier in topological order",
                    v.name
                )));
            }
            if v.exo.is_empty() || v.exo.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::config(format!(
                    "variable {} needs a non-negative exogenous marginal",
                    v.name
                )));
            }
            let mass: f64 = v.exo.iter().sum();
            if (mass - 1.0).abs() > 1e-12 {
                return Err(Error::config(format!(
                    "exogenous marginal of {} sums to {mass}",
                    v.name
                )));
            }
            let parent_states: usize = v.parents.iter().map(|&p| vars[p].domain).product();
            if v.table.len() != parent_states * v.exo.len() {
                return Err(Error::config(format!(
                    "structural table of {} has {} entries, expected {}",
                    v.name,
                    v.table.len(),
                    parent_states * v.exo.len()
                )));
            }
            if v.table.iter().any(|&val| val >= v.domain) {
                return Err(Error::config(format!(
                    "structural table of {} maps outside its domain",
                    v.name
                )));
            }
        }
        Ok(Self { vars, roles: None })
    }

    pub fn with_roles(mut self, roles: Roles) -> Result<Self> {
        let n = self.vars.len();
        let all: Vec<usize> = roles
            .pa
            .iter()
            .chain(&roles.nd)
            .chain(&roles.dc)
            .chain(std::iter::once(&roles.y))
            .copied()
            .collect();
        if all.iter().any(|&v| v >= n) {
            return Err(Error::config("role refers to an unknown variable"));
        }
        for (i, v) in all.iter().enumerate() {
            if all[..i].contains(v) {
                return Err(Error::config(format!("variable {v} holds two roles")));
            }
        }
        if roles.pa.is_empty() || roles.nd.is_empty() || roles.dc.is_empty() {
            return Err(Error::config("pa, nd and dc roles must be non-empty"));
        }
        self.roles = Some(roles);
        Ok(self)
    }

    pub fn vars(&self) -> &[DiscreteVar] {
        &self.vars
    }

    pub fn roles(&self) -> Option<&Roles> {
        self.roles.as_ref()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    fn check_capacity(&self) -> Result<()> {
        let mut endo = 1usize;
        let mut exo = 1usize;
        for v in &self.vars {
            endo = endo.saturating_mul(v.domain);
            exo = exo.saturating_mul(v.exo.len());
        }
        if endo > MAX_STATES || exo > MAX_STATES {
            return Err(Error::Capacity(format!(
                "state space too large: {endo} endogenous / {exo} exogenous configurations (limit {MAX_STATES})"
            )));
        }
        Ok(())
    }

    /// Calls `visit(weight, exogenous values)` for every exogenous world of non-zero probability.
    fn for_each_world(&self, mut visit: impl FnMut(f64, &[usize])) {
        let radix: Vec<usize> = self.vars.iter().map(|v| v.exo.len()).collect();
        let mut u = vec![0usize; radix.len()];
        loop {
            let w: f64 = self.vars.iter().zip(&u).map(|(v, &k)| v.exo[k]).product();
            if w > 0.0 {
                visit(w, &u);
            }
            if !crate::info::increment(&mut u, &radix) {
                break;
            }
        }
    }

    /// Endogenous values under exogenous world `u`, with `forced[i] = Some(v)`
    /// replacing variable `i`'s mechanism by the constant `v`.
    pub fn solve(&self, u: &[usize], forced: &[Option<usize>]) -> Vec<usize> {
        let mut values = vec![0usize; self.vars.len()];
        for (i, var) in self.vars.iter().enumerate() {
            values[i] = match forced.get(i).copied().flatten() {
                Some(v) => v,
                None => {
                    let mut idx = 0;
                    for &p in &var.parents {
                        idx = idx * self.vars[p].domain + values[p];
                    }
                    var.table[idx * var.exo.len() + u[i]]
                }
            };
        }
        values
    }

    fn table_index(&self, values: &[usize]) -> usize {
        values
            .iter()
            .zip(&self.vars)
            .fold(0, |idx, (v, var)| idx * var.domain + v)
    }

    /// Exact joint over all endogenous variables by summing over exogenous worlds.
    pub fn enumerate_joint(&self) -> Result<JointTable> {
        self.check_capacity()?;
        let domains: Vec<usize> = self.vars.iter().map(|v| v.domain).collect();
        let mut probs = vec![0.0; domains.iter().product()];
        let none = vec![None; self.vars.len()];
        self.for_each_world(|w, u| {
            let values = self.solve(u, &none);
            probs[self.table_index(&values)] += w;
        });
        JointTable::new(self.vars.iter().map(|v| v.name.clone()).collect(), domains, probs)
    }

    /// Abduction–action–prediction: distribution of `target` in the model
    /// mutated by `intervention`, for exogenous worlds consistent with `evidence`.
    pub fn counterfactual_query(
        &self,
        evidence: &[(usize, Condition)],
        intervention: &[(usize, usize)],
        target: usize,
    ) -> Result<Vec<f64>> {
        self.check_capacity()?;
        let n = self.vars.len();
        if target >= n {
            return Err(Error::Query(format!("target variable {target} out of range")));
        }
        if evidence.iter().any(|&(v, _)| v >= n) {
            return Err(Error::Query("evidence refers to an unknown variable".into()));
        }
        let mut forced = vec![None; n];
        for &(v, val) in intervention {
            if v >= n || val >= self.vars[v].domain {
                return Err(Error::Query(format!("invalid intervention do({v} = {val})")));
            }
            forced[v] = Some(val);
        }
        let none = vec![None; n];
        let mut dist = vec![0.0; self.vars[target].domain];
        let mut evidence_mass = 0.0;
        self.for_each_world(|w, u| {
            let factual = self.solve(u, &none);
            if evidence.iter().all(|(v, c)| c.holds(factual[*v])) {
                evidence_mass += w;
                let cf = self.solve(u, &forced);
                dist[cf[target]] += w;
            }
        });
        if !(evidence_mass > 0.0) {
            return Err(Error::Inference("evidence has zero probability".into()));
        }
        for p in &mut dist {
            *p /= evidence_mass;
        }
        Ok(dist)
    }

    /// Probability of the factual event described by `evidence`.
    pub fn event_probability(&self, evidence: &[(usize, Condition)]) -> Result<f64> {
        self.check_capacity()?;
        let none = vec![None; self.vars.len()];
        let mut mass = 0.0;
        self.for_each_world(|w, u| {
            let factual = self.solve(u, &none);
            if evidence.iter().all(|(v, c)| c.holds(factual[*v])) {
                mass += w;
            }
        });
        Ok(mass)
    }
}

/// Incremental constructor that turns closures into structural tables.
#[derive(Debug, Default)]
pub struct ScmBuilder {
    vars: Vec<DiscreteVar>,
}

impl ScmBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable whose value is `f(parent values, exogenous value)`.
    /// Returns the new variable's index.
    pub fn var<F>(&mut self, name: &str, domain: usize, parents: &[usize], exo: Vec<f64>, f: F) -> usize
    where
        F: Fn(&[usize], usize) -> usize,
    {
        let radix: Vec<usize> = parents.iter().map(|&p| self.vars[p].domain).collect();
        let parent_states: usize = radix.iter().product();
        let mut table = Vec::with_capacity(parent_states * exo.len());
        let mut digits = vec![0usize; parents.len()];
        for _ in 0..parent_states {
            for u in 0..exo.len() {
                table.push(f(&digits, u));
            }
            crate::info::increment(&mut digits, &radix);
        }
        self.vars.push(DiscreteVar {
            name: name.to_string(),
            domain,
            parents: parents.to_vec(),
            exo,
            table,
        });
        self.vars.len() - 1
    }

    /// Adds a deterministic variable (point-mass exogenous input).
    pub fn det<F>(&mut self, name: &str, domain: usize, parents: &[usize], f: F) -> usize
    where
        F: Fn(&[usize]) -> usize,
    {
        self.var(name, domain, parents, vec![1.0], move |pv, _| f(pv))
    }

    /// Adds a root variable equal to its exogenous input.
    pub fn root(&mut self, name: &str, marginal: Vec<f64>) -> usize {
        let d = marginal.len();
        self.var(name, d, &[], marginal, |_, u| u)
    }

    pub fn build(self) -> Result<DiscreteScm> {
        DiscreteScm::new(self.vars)
    }
}
