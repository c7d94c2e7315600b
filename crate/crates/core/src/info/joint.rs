use crate::error::{Error, Result};

/// Probability table over the product of finite domains.
///
/// Cells are stored in row-major order: the first variable is the most
/// significant digit.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    names: Vec<String>,
    domains: Vec<usize>,
    probs: Vec<f64>,
}

pub const SUM_TOLERANCE: f64 = 1e-12;

impl JointTable {
    pub fn new(names: Vec<String>, domains: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        if names.len() != domains.len() {
            return Err(Error::config("one name per domain required"));
        }
        if domains.iter().any(|&d| d == 0) {
            return Err(Error::config("domains must be non-empty"));
        }
        let cells: usize = domains.iter().product();
        if probs.len() != cells {
            return Err(Error::config(format!(
                "table has {} cells, domains imply {cells}",
                probs.len()
            )));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::config("probabilities must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::config(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self {
            names,
            domains,
            probs,
        })
    }

    /// Builds a table from unnormalised non-negative weights.
    pub fn from_weights(names: Vec<String>, domains: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::config("weights must have positive mass"));
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Self::new(names, domains, probs)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn domains(&self) -> &[usize] {
        &self.domains
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_vars(&self) -> usize {
        self.domains.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Probability of a full assignment.
    pub fn prob(&self, values: &[usize]) -> f64 {
        let mut idx = 0;
        for (v, d) in values.iter().zip(&self.domains) {
            idx = idx * d + v;
        }
        self.probs[idx]
    }

    fn check_subset(&self, vars: &[usize]) -> Result<()> {
        if vars.is_empty() {
            return Err(Error::Query("variable subset is empty".into()));
        }
        for (i, &v) in vars.iter().enumerate() {
            if v >= self.num_vars() {
                return Err(Error::Query(format!("variable index {v} out of range")));
            }
            if vars[..i].contains(&v) {
                return Err(Error::Query(format!("variable index {v} repeated")));
            }
        }
        Ok(())
    }

    /// Marginal distribution over `vars`, in the given order.
    pub fn marginal(&self, vars: &[usize]) -> Result<JointTable> {
        self.check_subset(vars)?;
        let domains: Vec<usize> = vars.iter().map(|&v| self.domains[v]).collect();
        let mut probs = vec![0.0; domains.iter().product()];
        let mut digits = vec![0usize; self.num_vars()];
        for &p in &self.probs {
            if p > 0.0 {
                let mut idx = 0;
                for &v in vars {
                    idx = idx * self.domains[v] + digits[v];
                }
                probs[idx] += p;
            }
            increment(&mut digits, &self.domains);
        }
        Ok(JointTable {
            names: vars.iter().map(|&v| self.names[v].clone()).collect(),
            domains,
            probs,
        })
    }

    /// Shannon entropy (nats) of the marginal over `vars`.
    pub fn entropy(&self, vars: &[usize]) -> Result<f64> {
        let m = self.marginal(vars)?;
        Ok(entropy_of(&m.probs))
    }

    /// `I(A; B) = H(A) + H(B) − H(A, B)` in nats.
    pub fn mutual_info(&self, a: &[usize], b: &[usize]) -> Result<f64> {
        self.check_subset(a)?;
        self.check_subset(b)?;
        if a.iter().any(|v| b.contains(v)) {
            return Err(Error::Query("mutual information subsets overlap".into()));
        }
        let ab: Vec<usize> = a.iter().chain(b).copied().collect();
        let mi = self.entropy(a)? + self.entropy(b)? - self.entropy(&ab)?;
        // cancellation can leave a tiny negative residue
        Ok(mi.max(0.0))
    }

    /// `I(A; B | C) = H(A,C) + H(B,C) − H(A,B,C) − H(C)`.
    pub fn conditional_mutual_info(&self, a: &[usize], b: &[usize], c: &[usize]) -> Result<f64> {
        if c.is_empty() {
            return self.mutual_info(a, b);
        }
        let ac: Vec<usize> = a.iter().chain(c).copied().collect();
        let bc: Vec<usize> = b.iter().chain(c).copied().collect();
        let abc: Vec<usize> = a.iter().chain(b).chain(c).copied().collect();
        let v = self.entropy(&ac)? + self.entropy(&bc)? - self.entropy(&abc)? - self.entropy(c)?;
        Ok(v.max(0.0))
    }
}

pub(crate) fn entropy_of(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Mixed-radix increment, last digit fastest.
pub(crate) fn increment(digits: &mut [usize], radix: &[usize]) -> bool {
    for i in (0..digits.len()).rev() {
        digits[i] += 1;
        if digits[i] < radix[i] {
            return true;
        }
        digits[i] = 0;
    }
    false
}
