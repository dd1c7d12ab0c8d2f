//! Confident learning over out-of-fold probabilities.
//!
//! Each class gets an adaptive threshold: the mean probability the model
//! assigns to that class over the examples labeled with it. An example's
//! confident set is every class whose probability reaches its own threshold.
//! The example lands in the confident-joint cell (given label, most probable
//! confident class), and examples in off-diagonal cells are flagged as
//! probable label errors.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::data::{validate_prob_matrix, LabeledDataset, ProbKind, ProbMatrix};
use crate::error::Result;
use crate::evaluation::percent;

/// Per-class thresholds; `None` for classes with no labeled examples.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassThresholds {
    pub thresholds: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

/// Given-label × confidently-predicted-label counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfidentJoint {
    pub counts: Vec<Vec<usize>>,
    pub undecided: usize,
    /// Confident class of every example, `None` when its confident set is
    /// empty.
    pub assignment: Vec<Option<usize>>,
}

impl ConfidentJoint {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum::<usize>() + self.undecided
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueReport {
    /// Flagged ids, sorted.
    pub flagged: Vec<String>,
    /// Self-confidence of every example, keyed by id.
    pub quality: BTreeMap<String, f64>,
    /// Flags per given class, in class order.
    pub per_class_flags: IndexMap<String, usize>,
    pub undecided: usize,
    pub confident_joint: Vec<Vec<usize>>,
}

impl IssueReport {
    pub fn flagged_count(&self) -> usize {
        self.flagged.len()
    }

    pub fn flagged_fraction(&self) -> f64 {
        if self.quality.is_empty() {
            0.0
        } else {
            self.flagged.len() as f64 / self.quality.len() as f64
        }
    }

    /// Flagged share as a percentage with two decimals.
    pub fn flagged_percent(&self) -> f64 {
        percent(self.flagged.len(), self.quality.len())
    }
}

fn check_inputs(pm: &ProbMatrix, ds: &LabeledDataset) -> Result<()> {
    validate_prob_matrix(pm, ds)?;
    if pm.kind() != ProbKind::OutOfFold {
        log::warn!("confident learning expects out-of-fold probabilities; got in-sample");
    }
    Ok(())
}

/// t_j = mean of p(j|x) over examples labeled j.
pub fn class_thresholds(pm: &ProbMatrix, ds: &LabeledDataset) -> Result<ClassThresholds> {
    check_inputs(pm, ds)?;
    let c = ds.n_classes();
    let mut sums = vec![0.0; c];
    let mut counts = vec![0usize; c];
    for (row, ex) in pm.rows().zip(ds.examples()) {
        sums[ex.label] += row[ex.label];
        counts[ex.label] += 1;
    }
    let thresholds = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &n)| (n > 0).then(|| s / n as f64))
        .collect();
    Ok(ClassThresholds { thresholds, counts })
}

/// Most probable class among those at or above their threshold; ties go to
/// the lower class index.
fn confident_class(row: &[f64], thresholds: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, (&p, t)) in row.iter().zip(thresholds).enumerate() {
        let confident = t.is_some_and(|t| p >= t);
        if confident && best.is_none_or(|b| p > row[b]) {
            best = Some(k);
        }
    }
    best
}

pub fn confident_joint(
    pm: &ProbMatrix,
    ds: &LabeledDataset,
    t: &ClassThresholds,
) -> Result<ConfidentJoint> {
    check_inputs(pm, ds)?;
    let c = ds.n_classes();
    let mut counts = vec![vec![0usize; c]; c];
    let mut undecided = 0;
    let assignment: Vec<Option<usize>> = pm
        .rows()
        .map(|row| confident_class(row, &t.thresholds))
        .collect();
    for (ex, cell) in ds.examples().iter().zip(&assignment) {
        match cell {
            Some(j) => counts[ex.label][*j] += 1,
            None => undecided += 1,
        }
    }
    Ok(ConfidentJoint {
        counts,
        undecided,
        assignment,
    })
}

/// Flags every example in an off-diagonal confident-joint cell and scores
/// every example by its self-confidence p(given label | x).
pub fn find_label_issues(pm: &ProbMatrix, ds: &LabeledDataset) -> Result<IssueReport> {
    let t = class_thresholds(pm, ds)?;
    let joint = confident_joint(pm, ds, &t)?;

    let mut flagged = Vec::new();
    let mut per_class_flags: IndexMap<String, usize> = ds
        .classes()
        .names()
        .iter()
        .map(|name| (name.clone(), 0))
        .collect();
    let mut quality = BTreeMap::new();
    for ((ex, row), cell) in ds.examples().iter().zip(pm.rows()).zip(&joint.assignment) {
        quality.insert(ex.id.clone(), row[ex.label]);
        if matches!(cell, Some(j) if *j != ex.label) {
            flagged.push(ex.id.clone());
            per_class_flags[ex.label] += 1;
        }
    }
    flagged.sort();
    log::info!(
        "confident learning flagged {} of {} examples ({} undecided)",
        flagged.len(),
        ds.len(),
        joint.undecided
    );
    Ok(IssueReport {
        flagged,
        quality,
        per_class_flags,
        undecided: joint.undecided,
        confident_joint: joint.counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::toy;

    fn matrix(ds: &LabeledDataset, rows: Vec<Vec<f64>>) -> ProbMatrix {
        ProbMatrix::new(
            ds.ids().map(String::from).collect(),
            rows,
            ProbKind::OutOfFold,
        )
        .unwrap()
    }

    fn worked_example() -> (LabeledDataset, ProbMatrix) {
        let ds = toy(&[0, 0, 1, 1], 2);
        let pm = matrix(
            &ds,
            vec![
                vec![0.9, 0.1],
                vec![0.6, 0.4],
                vec![0.2, 0.8],
                vec![0.8, 0.2],
            ],
        );
        (ds, pm)
    }

    #[test]
    fn thresholds_are_class_means() {
        let (ds, pm) = worked_example();
        let t = class_thresholds(&pm, &ds).unwrap();
        assert!((t.thresholds[0].unwrap() - 0.75).abs() < 1e-12);
        assert!((t.thresholds[1].unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(t.counts, [2, 2]);
    }

    #[test]
    fn worked_confident_joint() {
        let (ds, pm) = worked_example();
        let t = class_thresholds(&pm, &ds).unwrap();
        let joint = confident_joint(&pm, &ds, &t).unwrap();
        assert_eq!(joint.counts, [[1, 0], [1, 1]]);
        assert_eq!(joint.undecided, 1);
        assert_eq!(joint.assignment, [Some(0), None, Some(1), Some(0)]);
        assert_eq!(joint.total(), 4);
    }

    #[test]
    fn worked_issue_report() {
        let (ds, pm) = worked_example();
        let report = find_label_issues(&pm, &ds).unwrap();
        assert_eq!(report.flagged, ["e3"]);
        assert!((report.quality["e3"] - 0.2).abs() < 1e-12);
        assert_eq!(report.per_class_flags["c1"], 1);
        assert_eq!(report.per_class_flags["c0"], 0);
    }

    #[test]
    fn one_hot_correct_predictions_flag_nothing() {
        let labels = [0, 2, 1, 1, 0, 2, 2];
        let ds = toy(&labels, 3);
        let rows = labels
            .iter()
            .map(|&y| (0..3).map(|k| f64::from(u8::from(k == y))).collect())
            .collect();
        let pm = matrix(&ds, rows);
        let t = class_thresholds(&pm, &ds).unwrap();
        assert!(t.thresholds.iter().all(|t| *t == Some(1.0)));
        let joint = confident_joint(&pm, &ds, &t).unwrap();
        assert_eq!(joint.counts, [[2, 0, 0], [0, 2, 0], [0, 0, 3]]);
        assert_eq!(joint.undecided, 0);
        let report = find_label_issues(&pm, &ds).unwrap();
        assert!(report.flagged.is_empty());
        assert!(report.quality.values().all(|&q| q == 1.0));
    }

    #[test]
    fn empty_class_has_no_threshold_and_is_never_confident() {
        let ds = toy(&[0, 0, 1], 3);
        let pm = matrix(
            &ds,
            vec![
                vec![0.1, 0.1, 0.8],
                vec![0.5, 0.2, 0.3],
                vec![0.2, 0.7, 0.1],
            ],
        );
        let t = class_thresholds(&pm, &ds).unwrap();
        assert_eq!(t.thresholds[2], None);
        let joint = confident_joint(&pm, &ds, &t).unwrap();
        assert!(joint.counts.iter().all(|row| row[2] == 0));
    }

    #[test]
    fn misaligned_matrix_is_rejected() {
        let (ds, _) = worked_example();
        let pm = ProbMatrix::new(
            vec!["e0".into(), "e2".into(), "e1".into(), "e3".into()],
            vec![vec![0.5, 0.5]; 4],
            ProbKind::OutOfFold,
        )
        .unwrap();
        assert!(find_label_issues(&pm, &ds).is_err());
    }

    #[test]
    fn report_json_shape() {
        let (ds, pm) = worked_example();
        let report = find_label_issues(&pm, &ds).unwrap();
        let json = serde_json::to_value(&report).unwrap();
        let keys: Vec<&str> = json
            .as_object()
            .unwrap()
            .keys()
            .map(String::as_str)
            .collect();
        assert_eq!(
            keys,
            [
                "confident_joint",
                "flagged",
                "per_class_flags",
                "quality",
                "undecided"
            ]
        );
        let back: IssueReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn flagged_percent_two_decimals() {
        let report = IssueReport {
            flagged: (0..829).map(|i| format!("f{i}")).collect(),
            quality: (0..2337).map(|i| (format!("q{i}"), 0.5)).collect(),
            per_class_flags: IndexMap::new(),
            undecided: 0,
            confident_joint: vec![],
        };
        assert_eq!(report.flagged_percent(), 35.47);
        assert_eq!(format!("{:.2}", report.flagged_percent()), "35.47");
    }
}
