use crate::error::{Error, Result};

/// Scores paired with binary labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoredLabels {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl ScoredLabels {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Metric(format!(
                "{} scores for {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Metric("labels must be 0 or 1".into()));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Metric("scores must be finite".into()));
        }
        Ok(Self { scores, labels })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Area under the ROC curve via the midrank (Mann–Whitney) statistic.
pub fn auc(data: &ScoredLabels) -> Result<f64> {
    let n_pos = data.labels.iter().filter(|&&l| l == 1).count();
    let n_neg = data.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric("AUC needs both classes present".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data.scores[a].total_cmp(&data.scores[b]));

    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && data.scores[order[j + 1]] == data.scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; tied block i..=j shares the mean rank
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if data.labels[k] == 1 {
                pos_rank_sum += midrank;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    Ok((pos_rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Fraction of rows where `score > threshold` agrees with the label.
pub fn acc(data: &ScoredLabels, threshold: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Metric("accuracy of an empty set".into()));
    }
    let hits = data
        .scores
        .iter()
        .zip(&data.labels)
        .filter(|(&s, &l)| u8::from(s > threshold) == l)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sl(scores: &[f64], labels: &[u8]) -> ScoredLabels {
        ScoredLabels::new(scores.to_vec(), labels.to_vec()).unwrap()
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&sl(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1])).unwrap(), 1.0);
        assert_eq!(auc(&sl(&[0.5; 6], &[0, 1, 0, 1, 1, 0])).unwrap(), 0.5);
        assert_eq!(auc(&sl(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1])).unwrap(), 0.75);
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(auc(&sl(&[0.1, 0.3], &[1, 1])), Err(Error::Metric(_))));
    }

    #[test]
    fn accuracy_threshold() {
        let d = sl(&[0.2, 0.7, 0.6, 0.4], &[0, 1, 0, 0]);
        assert_eq!(acc(&d, 0.5).unwrap(), 0.75);
    }

    #[test]
    fn invalid_inputs() {
        assert!(ScoredLabels::new(vec![0.1], vec![2]).is_err());
        assert!(ScoredLabels::new(vec![f64::NAN], vec![0]).is_err());
        assert!(ScoredLabels::new(vec![0.1, 0.2], vec![0]).is_err());
    }
}
