//! External validity metrics for joint clustering and outlier detection.
//!
//! Outliers form one extra group on both the predicted and the true side of
//! the contingency table.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataset::GroundTruth;
use crate::error::{Error, Result};
use crate::kmeans::{Assignment, LabeledPartition};

/// Co-occurrence counts between predicted groups (rows) and true groups
/// (columns). Only non-empty groups get a row or column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    row_sums: Vec<u64>,
    col_sums: Vec<u64>,
    total: u64,
}

impl ContingencyTable {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let cols = counts.first().map_or(0, Vec::len);
        if counts.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("contingency rows differ in length"));
        }
        let row_sums: Vec<u64> = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums: Vec<u64> = (0..cols).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        let total = row_sums.iter().sum();
        Ok(ContingencyTable {
            counts,
            row_sums,
            col_sums,
            total,
        })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn row_sums(&self) -> &[u64] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[u64] {
        &self.col_sums
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn transpose(&self) -> ContingencyTable {
        let cols = self.col_sums.len();
        let counts = (0..cols).map(|j| self.counts.iter().map(|r| r[j]).collect()).collect();
        ContingencyTable {
            counts,
            row_sums: self.col_sums.clone(),
            col_sums: self.row_sums.clone(),
            total: self.total,
        }
    }
}

/// Cross-tabulates two label vectors.
pub fn contingency_from_labels(pred: &[Assignment], truth: &[Assignment]) -> Result<ContingencyTable> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: pred.len(),
        });
    }
    let index = |labels: &[Assignment]| -> BTreeMap<Assignment, usize> {
        let groups: BTreeSet<Assignment> = labels.iter().copied().collect();
        groups.into_iter().enumerate().map(|(i, g)| (g, i)).collect()
    };
    let rows = index(pred);
    let cols = index(truth);
    let mut counts = vec![vec![0u64; cols.len()]; rows.len()];
    for (p, t) in pred.iter().zip(truth) {
        counts[rows[p]][cols[t]] += 1;
    }
    ContingencyTable::from_counts(counts)
}

pub fn contingency(pred: &LabeledPartition, truth: &GroundTruth) -> Result<ContingencyTable> {
    contingency_from_labels(pred.assignments(), truth.labels())
}

fn xlogx_ratio(count: f64, ratio: f64) -> f64 {
    if count > 0.0 {
        count * ratio.ln()
    } else {
        0.0
    }
}

/// Normalized mutual information with geometric-mean normalization.
///
/// When either side has zero entropy the value is 1 if both sides are a
/// single group and 0 otherwise.
pub fn nmi(table: &ContingencyTable) -> f64 {
    let n = table.total as f64;
    let mut mi = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            let c = c as f64;
            mi += xlogx_ratio(c, n * c / (table.row_sums[i] as f64 * table.col_sums[j] as f64));
        }
    }
    let h_pred: f64 = table.row_sums.iter().map(|&s| xlogx_ratio(s as f64, s as f64 / n)).sum();
    let h_true: f64 = table.col_sums.iter().map(|&s| xlogx_ratio(s as f64, s as f64 / n)).sum();
    if h_pred == 0.0 || h_true == 0.0 {
        let single = |sums: &[u64]| sums.iter().filter(|&&s| s > 0).count() <= 1;
        return if single(&table.row_sums) && single(&table.col_sums) { 1.0 } else { 0.0 };
    }
    (mi / (h_pred * h_true).sqrt()).clamp(0.0, 1.0)
}

fn pairs(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Normalized (adjusted) Rand index. Identical trivial partitions, where the
/// formula is 0/0, score 1; so does a table with fewer than two points.
pub fn rand_normalized(table: &ContingencyTable) -> f64 {
    let total_pairs = pairs(table.total);
    if total_pairs == 0.0 {
        return 1.0;
    }
    let sum_cells: f64 = table.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let sum_rows: f64 = table.row_sums.iter().map(|&c| pairs(c)).sum();
    let sum_cols: f64 = table.col_sums.iter().map(|&c| pairs(c)).sum();
    let expected = sum_rows * sum_cols / total_pairs;
    let denom = sum_rows / 2.0 + sum_cols / 2.0 - expected;
    if denom == 0.0 {
        return 1.0;
    }
    (sum_cells - expected) / denom
}

/// `|O ∩ O*| / |O ∪ O*|`, 1 when both sets are empty.
pub fn outlier_jaccard(pred: &BTreeSet<usize>, truth: &BTreeSet<usize>) -> f64 {
    let union = pred.union(truth).count();
    if union == 0 {
        return 1.0;
    }
    pred.intersection(truth).count() as f64 / union as f64
}

/// Harmonic mean of outlier precision and recall, 0 when both are 0.
pub fn outlier_f_measure(pred: &BTreeSet<usize>, truth: &BTreeSet<usize>) -> f64 {
    if pred.is_empty() && truth.is_empty() {
        return 1.0;
    }
    let hits = pred.intersection(truth).count() as f64;
    let precision = if pred.is_empty() { 0.0 } else { hits / pred.len() as f64 };
    let recall = if truth.is_empty() { 0.0 } else { hits / truth.len() as f64 };
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Per-algorithm sum over datasets of the value divided by the best value on
/// that dataset. Rows are algorithms, columns datasets; columns whose best
/// value is not positive are skipped.
pub fn score(results: &[Vec<f64>]) -> Result<Vec<f64>> {
    let cols = results.first().map_or(0, Vec::len);
    if results.is_empty() || cols == 0 {
        return Err(Error::invalid("score needs at least one algorithm and one dataset"));
    }
    if results.iter().any(|r| r.len() != cols) {
        return Err(Error::invalid("score rows differ in length"));
    }
    let mut out = vec![0.0; results.len()];
    for j in 0..cols {
        let best = results.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
        if best <= 0.0 {
            continue;
        }
        for (s, r) in out.iter_mut().zip(results) {
            *s += r[j] / best;
        }
    }
    Ok(out)
}

/// [`score`] rescaled so that winning every counted dataset gives 100.
pub fn score_percent(results: &[Vec<f64>]) -> Result<Vec<f64>> {
    let raw = score(results)?;
    let counted = (0..results[0].len())
        .filter(|&j| results.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max) > 0.0)
        .count();
    if counted == 0 {
        return Ok(raw);
    }
    Ok(raw.into_iter().map(|s| 100.0 * s / counted as f64).collect())
}

/// The four metrics for one prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub nmi: f64,
    pub rn: f64,
    pub jaccard: f64,
    pub f_measure: f64,
}

impl EvalReport {
    pub const NAMES: [&'static str; 4] = ["nmi", "rn", "jaccard", "f_measure"];

    pub fn values(&self) -> [f64; 4] {
        [self.nmi, self.rn, self.jaccard, self.f_measure]
    }
}

pub fn evaluate_labels(pred: &LabeledPartition, truth: &LabeledPartition) -> Result<EvalReport> {
    let table = contingency_from_labels(pred.assignments(), truth.assignments())?;
    let (p, t) = (pred.outlier_set(), truth.outlier_set());
    Ok(EvalReport {
        nmi: nmi(&table),
        rn: rand_normalized(&table),
        jaccard: outlier_jaccard(&p, &t),
        f_measure: outlier_f_measure(&p, &t),
    })
}

pub fn evaluate(pred: &LabeledPartition, truth: &GroundTruth) -> Result<EvalReport> {
    evaluate_labels(pred, truth.partition())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(rows: &[&[u64]]) -> ContingencyTable {
        ContingencyTable::from_counts(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn codes(c: &[i64]) -> Vec<Assignment> {
        LabeledPartition::from_codes(c).unwrap().assignments().to_vec()
    }

    #[test]
    fn identical_labels_give_diagonal_table() {
        let l = codes(&[0, 0, 1, -1, 1]);
        let t = contingency_from_labels(&l, &l).unwrap();
        assert_eq!(t.counts(), &[vec![2, 0, 0], vec![0, 2, 0], vec![0, 0, 1]]);
        assert_eq!(nmi(&t), 1.0);
        assert_eq!(rand_normalized(&t), 1.0);
    }

    #[test]
    fn single_predicted_group() {
        let t = contingency_from_labels(&codes(&[0, 0, 0, 0]), &codes(&[0, 0, 0, 1])).unwrap();
        assert_eq!(t.counts(), &[vec![3, 1]]);
        assert_eq!(nmi(&t), 0.0);
    }

    #[test]
    fn outliers_are_an_extra_group() {
        let t = contingency_from_labels(&codes(&[0, 0, 1, -1]), &codes(&[0, 0, 1, -1])).unwrap();
        assert_eq!(t.counts(), &[vec![2, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        assert!(contingency_from_labels(&codes(&[0]), &codes(&[0, 1])).is_err());
    }

    #[test]
    fn nmi_values() {
        assert_eq!(nmi(&table(&[&[1, 1], &[1, 1]])), 0.0);
        // 4 ln 2 / sqrt(6 ln 2 * 4 ln 2)
        let v = nmi(&table(&[&[2, 0], &[0, 1], &[0, 1]]));
        assert!((v - 4.0 / 24f64.sqrt()).abs() < 1e-12, "{v}");
        assert_eq!(nmi(&table(&[&[3]])), 1.0);
    }

    #[test]
    fn rand_values() {
        assert!((rand_normalized(&table(&[&[2, 0, 0], &[0, 1, 0], &[0, 0, 1]])) - 1.0).abs() < 1e-15);
        assert!((rand_normalized(&table(&[&[1, 1], &[1, 1]])) + 0.5).abs() < 1e-15);
        assert!(rand_normalized(&table(&[&[2, 2]])) <= 0.0);
    }

    #[test]
    fn jaccard_and_f() {
        let a: BTreeSet<usize> = (0..10).collect();
        let b: BTreeSet<usize> = (4..14).collect();
        assert!((outlier_jaccard(&a, &b) - 6.0 / 14.0).abs() < 1e-15);
        assert!((outlier_f_measure(&a, &b) - 0.6).abs() < 1e-15);
        assert_eq!(outlier_jaccard(&a, &a), 1.0);
        assert_eq!(outlier_f_measure(&a, &a), 1.0);
        let c: BTreeSet<usize> = (20..25).collect();
        assert_eq!(outlier_jaccard(&a, &c), 0.0);
        assert_eq!(outlier_f_measure(&a, &c), 0.0);
        assert_eq!(outlier_jaccard(&BTreeSet::new(), &BTreeSet::new()), 1.0);
        assert_eq!(outlier_f_measure(&BTreeSet::new(), &a), 0.0);
    }

    #[test]
    fn f_from_reported_jaccard() {
        // Equal-size sets: F = 2J / (1 + J).
        let j: f64 = 0.4737;
        let f = 2.0 * j / (1.0 + j);
        assert!((f - 0.6429).abs() < 1e-4);
    }

    #[test]
    fn score_values() {
        assert_eq!(score(&[vec![0.3, 0.9, 0.1]]).unwrap(), vec![3.0]);
        assert_eq!(score(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(score(&[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap(), vec![0.5, 1.0]);
        assert_eq!(score_percent(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap(), vec![50.0, 100.0]);
        assert!(score(&[]).is_err());
    }

    fn codes_strategy() -> impl Strategy<Value = (Vec<i64>, Vec<i64>)> {
        (2usize..40).prop_flat_map(|n| (prop::collection::vec(-1i64..4, n), prop::collection::vec(-1i64..4, n)))
    }

    proptest! {
        #[test]
        fn symmetric_and_relabel_invariant((a, b) in codes_strategy(), shift in 1i64..5) {
            let pa = LabeledPartition::from_codes(&a).unwrap();
            let pb = LabeledPartition::from_codes(&b).unwrap();
            let ab = evaluate_labels(&pa, &pb).unwrap();
            let ba = evaluate_labels(&pb, &pa).unwrap();
            for (x, y) in ab.values().iter().zip(ba.values()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            // Permuting cluster ids leaves every metric unchanged.
            let relabelled: Vec<i64> = a.iter().map(|&c| if c < 0 { c } else { (c + shift) % 4 }).collect();
            let pr = LabeledPartition::new(
                relabelled.iter().map(|&c| Assignment::from_code(c).unwrap()).collect(),
                4,
            )
            .unwrap();
            let rb = evaluate_labels(&pr, &pb).unwrap();
            for (x, y) in ab.values().iter().zip(rb.values()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!(ab.nmi >= 0.0 && ab.nmi <= 1.0 && ab.rn <= 1.0 + 1e-12);
        }
    }
}
