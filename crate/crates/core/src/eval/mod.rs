//! Downstream evaluation of learned representations: k-means clustering
//! scored by ACC, NMI, pairwise F-score and Rand index, and KNN
//! classification on gallery/probe splits.

mod hungarian;
mod kmeans;
mod knn;
mod report;

pub use hungarian::min_cost_assignment;
pub use kmeans::{kmeans, KMeansResult};
pub use knn::knn_classify;
pub use report::{
    evaluate_classification, evaluate_clustering, MetricReport, MetricSummary, DEFAULT_RUNS,
};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A hard clustering: every assignment lies in `0..k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub assignments: Vec<usize>,
    pub k: usize,
}

impl Partition {
    pub fn new(assignments: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(bad) = assignments.iter().find(|&&a| a >= k) {
            return Err(Error::Contract(format!("assignment {bad} outside 0..{k}")));
        }
        Ok(Partition { assignments, k })
    }

    /// Uses the labels as given, with `k = max + 1`.
    pub fn from_labels(labels: &[usize]) -> Self {
        Partition {
            assignments: labels.to_vec(),
            k: labels.iter().max().map_or(0, |m| m + 1),
        }
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}

/// Dense contingency table between two labelings.
struct Contingency {
    counts: Vec<Vec<usize>>,
    truth_sizes: Vec<usize>,
    pred_sizes: Vec<usize>,
    n: usize,
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = HashMap::new();
    let mapped = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(*l).or_insert(next)
        })
        .collect();
    (mapped, ids.len())
}

fn contingency(truth: &[usize], pred: &[usize]) -> Result<Contingency> {
    if truth.len() != pred.len() {
        return Err(Error::Data(format!(
            "label vectors differ in length: {} vs {}",
            truth.len(),
            pred.len()
        )));
    }
    let (t, kt) = compact(truth);
    let (p, kp) = compact(pred);
    let mut counts = vec![vec![0usize; kp]; kt];
    for (&a, &b) in t.iter().zip(&p) {
        counts[a][b] += 1;
    }
    let truth_sizes = counts.iter().map(|row| row.iter().sum()).collect();
    let pred_sizes = (0..kp)
        .map(|j| counts.iter().map(|row| row[j]).sum())
        .collect();
    Ok(Contingency {
        counts,
        truth_sizes,
        pred_sizes,
        n: truth.len(),
    })
}

/// Fraction of samples labeled correctly under the best one-to-one
/// matching of predicted clusters to true classes.
pub fn clustering_accuracy(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let c = contingency(truth, pred)?;
    if c.n == 0 {
        return Ok(1.0);
    }
    let size = c.truth_sizes.len().max(c.pred_sizes.len());
    let mut cost = vec![0.0; size * size];
    for (i, row) in c.counts.iter().enumerate() {
        for (j, &count) in row.iter().enumerate() {
            cost[i * size + j] = -(count as f64);
        }
    }
    let matching = min_cost_assignment(&cost, size);
    let matched: f64 = matching
        .iter()
        .enumerate()
        .map(|(i, &j)| -cost[i * size + j])
        .sum();
    Ok(matched / c.n as f64)
}

fn entropy(sizes: &[usize], n: usize) -> f64 {
    sizes
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n as f64;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the geometric mean of the two
/// entropies, with natural logarithms. Two single-cluster labelings score
/// 1; a single-cluster labeling against anything else scores 0.
pub fn nmi(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let c = contingency(truth, pred)?;
    if c.n == 0 {
        return Ok(1.0);
    }
    let n = c.n as f64;
    let ht = entropy(&c.truth_sizes, c.n);
    let hp = entropy(&c.pred_sizes, c.n);
    if ht == 0.0 && hp == 0.0 {
        return Ok(1.0);
    }
    if ht == 0.0 || hp == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in c.counts.iter().enumerate() {
        for (j, &count) in row.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let pij = count as f64 / n;
            let pi = c.truth_sizes[i] as f64 / n;
            let pj = c.pred_sizes[j] as f64 / n;
            mi += pij * (pij / (pi * pj)).ln();
        }
    }
    Ok((mi / (ht * hp).sqrt()).clamp(0.0, 1.0))
}

fn pairs(x: usize) -> u64 {
    (x as u64) * (x.saturating_sub(1) as u64) / 2
}

/// Same-cluster pair counts: (together in both, together only in pred,
/// together only in truth, total pairs).
fn pair_counts(truth: &[usize], pred: &[usize]) -> Result<(u64, u64, u64, u64)> {
    let c = contingency(truth, pred)?;
    if c.n < 2 {
        return Err(Error::Config(format!(
            "pair-counting metrics need at least 2 samples, got {}",
            c.n
        )));
    }
    let tp: u64 = c.counts.iter().flatten().map(|&x| pairs(x)).sum();
    let pred_pairs: u64 = c.pred_sizes.iter().map(|&x| pairs(x)).sum();
    let truth_pairs: u64 = c.truth_sizes.iter().map(|&x| pairs(x)).sum();
    Ok((tp, pred_pairs - tp, truth_pairs - tp, pairs(c.n)))
}

/// Fraction of sample pairs on which the two labelings agree.
pub fn rand_index(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let (tp, fp, fn_, total) = pair_counts(truth, pred)?;
    let tn = total - tp - fp - fn_;
    Ok((tp + tn) as f64 / total as f64)
}

/// Harmonic mean of pairwise precision and recall over same-cluster pairs.
/// Two all-singleton labelings score 1; no shared pair otherwise scores 0.
pub fn pairwise_f(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let (tp, fp, fn_, _) = pair_counts(truth, pred)?;
    if tp + fp + fn_ == 0 {
        return Ok(1.0);
    }
    if tp == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: [usize; 4] = [0, 0, 1, 1];
    const P: [usize; 4] = [0, 1, 0, 1];

    #[test]
    fn accuracy_examples() {
        assert_eq!(clustering_accuracy(&T, &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(clustering_accuracy(&T, &P).unwrap(), 0.5);
        assert_eq!(clustering_accuracy(&T, &T).unwrap(), 1.0);
        // More clusters than classes: extra clusters stay unmatched.
        assert_eq!(
            clustering_accuracy(&[0, 0, 0, 0], &[0, 1, 2, 2]).unwrap(),
            0.5
        );
    }

    #[test]
    fn nmi_examples() {
        assert!((nmi(&T, &T).unwrap() - 1.0).abs() < 1e-15);
        assert!(nmi(&T, &P).unwrap().abs() < 1e-15);
        assert_eq!(nmi(&T, &[5, 5, 9, 9]).unwrap(), nmi(&T, &T).unwrap());
        assert_eq!(nmi(&[0, 0, 0], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 0, 0], &[0, 1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn pair_examples() {
        assert_eq!(rand_index(&T, &T).unwrap(), 1.0);
        assert_eq!(pairwise_f(&T, &T).unwrap(), 1.0);
        assert!((rand_index(&T, &P).unwrap() - 2.0 / 6.0).abs() < 1e-15);
        assert_eq!(pairwise_f(&T, &P).unwrap(), 0.0);
        assert_eq!(pairwise_f(&[0, 1, 2], &[2, 0, 1]).unwrap(), 1.0);
        assert_eq!(pairwise_f(&[0, 1, 2], &[0, 0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            clustering_accuracy(&T, &[0, 1]),
            Err(Error::Data(_))
        ));
        assert!(matches!(rand_index(&[0], &[0]), Err(Error::Config(_))));
        assert!(Partition::new(vec![0, 3], 3).is_err());
    }
}
