//! Dataset model, probability matrices and their validation.
//!
//! A [`LabeledDataset`] is the unit every stage consumes. Class indices are
//! positions in the [`ClassMap`], which keeps manifest order. Probability
//! matrices carry the example ids they were computed for, and
//! [`validate_prob_matrix`] checks both the alignment and the
//! row-stochasticity before any detection math runs on them.

pub(crate) mod io;
mod split;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    load_dataset, load_dataset_with_manifest, manifest_path_for, read_manifest, read_prob_matrix,
    save_dataset, write_manifest, write_prob_matrix,
};
pub use split::{stratified_split, SplitSpec};

/// Row-sum tolerance for probability rows. Loose enough for float32 exports.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Ordered class names; the position of a name is its integer label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ClassMap {
    names: Vec<String>,
}

impl ClassMap {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::InvalidManifest(format!(
                "at least 2 classes required, got {}",
                names.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(Error::InvalidManifest("empty class name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidManifest(format!("duplicate class {name:?}")));
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

impl TryFrom<Vec<String>> for ClassMap {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        ClassMap::new(names)
    }
}

impl From<ClassMap> for Vec<String> {
    fn from(map: ClassMap) -> Self {
        map.names
    }
}

/// A single training instance carrying its observed (possibly noisy) label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub id: String,
    pub text: String,
    pub label: usize,
}

impl Example {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: usize) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label,
        }
    }
}

/// Ordered examples plus their class map.
///
/// Ids are unique and every label indexes into the class map. The
/// constructor enforces both, so every `LabeledDataset` in the program is
/// valid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    examples: Vec<Example>,
    classes: ClassMap,
}

impl LabeledDataset {
    pub fn new(examples: Vec<Example>, classes: ClassMap) -> Result<Self> {
        let mut seen = HashSet::with_capacity(examples.len());
        for ex in &examples {
            if ex.id.is_empty() {
                return Err(Error::InvalidConfig("example id must be non-empty".into()));
            }
            if ex.label >= classes.len() {
                return Err(Error::InvalidConfig(format!(
                    "example {:?} has label {} but only {} classes exist",
                    ex.id,
                    ex.label,
                    classes.len()
                )));
            }
            if !seen.insert(ex.id.as_str()) {
                return Err(Error::DuplicateId(ex.id.clone()));
            }
        }
        Ok(Self { examples, classes })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn classes(&self) -> &ClassMap {
        &self.classes
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn ids(&self) -> impl ExactSizeIterator<Item = &str> + '_ {
        self.examples.iter().map(|e| e.id.as_str())
    }

    pub fn labels(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.label).collect()
    }

    /// Number of examples per class index.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for ex in &self.examples {
            counts[ex.label] += 1;
        }
        counts
    }

    /// The examples at `indices`, in the order given.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            classes: self.classes.clone(),
        }
    }

    /// Same ids and texts with every label replaced.
    pub fn with_labels(&self, labels: &[usize]) -> Result<LabeledDataset> {
        if labels.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                found: labels.len(),
            });
        }
        let examples = self
            .examples
            .iter()
            .zip(labels)
            .map(|(ex, &label)| Example {
                label,
                ..ex.clone()
            })
            .collect();
        LabeledDataset::new(examples, self.classes.clone())
    }

    /// Fails unless every class has at least `needed` examples.
    pub fn require_class_counts(&self, needed: usize) -> Result<()> {
        for (c, &found) in self.class_counts().iter().enumerate() {
            if found < needed {
                return Err(Error::TooFewExamples {
                    class: self.classes.name(c).to_string(),
                    needed,
                    found,
                });
            }
        }
        Ok(())
    }
}

/// Where a probability matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbKind {
    OutOfFold,
    InSample,
}

/// n×C predicted class probabilities aligned to dataset ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    ids: Vec<String>,
    n_classes: usize,
    values: Vec<f64>,
    kind: ProbKind,
}

impl ProbMatrix {
    /// Builds a matrix from rows. Only the shape is checked here; use
    /// [`validate_prob_matrix`] for the probability invariants.
    pub fn new(ids: Vec<String>, rows: Vec<Vec<f64>>, kind: ProbKind) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::LengthMismatch {
                expected: ids.len(),
                found: rows.len(),
            });
        }
        let n_classes = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * n_classes);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n_classes {
                return Err(Error::InvalidConfig(format!(
                    "row {i} has {} columns, expected {n_classes}",
                    row.len()
                )));
            }
            values.extend(row);
        }
        Ok(Self {
            ids,
            n_classes,
            values,
            kind,
        })
    }

    pub(crate) fn from_flat(
        ids: Vec<String>,
        n_classes: usize,
        values: Vec<f64>,
        kind: ProbKind,
    ) -> Self {
        debug_assert_eq!(ids.len() * n_classes, values.len());
        Self {
            ids,
            n_classes,
            values,
            kind,
        }
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn kind(&self) -> ProbKind {
        self.kind
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_classes..(i + 1) * self.n_classes]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values
            .chunks_exact(self.n_classes.max(1))
            .take(self.ids.len())
    }
}

/// Index of the largest entry, ties to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = k;
        }
    }
    best
}

/// Outcome of a successful [`validate_prob_matrix`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// |sum(row) - 1| for every row.
    pub row_deviation: Vec<f64>,
}

impl Alignment {
    pub fn max_deviation(&self) -> f64 {
        self.row_deviation.iter().copied().fold(0.0, f64::max)
    }
}

/// Checks id-for-id alignment with `ds` and that every row is a probability
/// distribution.
pub fn validate_prob_matrix(pm: &ProbMatrix, ds: &LabeledDataset) -> Result<Alignment> {
    check_alignment(pm.ids(), ds)?;
    if pm.n_classes() != ds.n_classes() {
        return Err(Error::InvalidConfig(format!(
            "probability matrix has {} columns but the dataset has {} classes",
            pm.n_classes(),
            ds.n_classes()
        )));
    }
    let mut row_deviation = Vec::with_capacity(pm.len());
    for (i, row) in pm.rows().enumerate() {
        if let Some(&value) = row.iter().find(|p| !(0.0..=1.0).contains(*p) || p.is_nan()) {
            return Err(Error::ProbabilityRange {
                row: i,
                id: pm.ids()[i].clone(),
                value,
            });
        }
        let sum: f64 = row.iter().sum();
        let deviation = (sum - 1.0).abs();
        if deviation > ROW_SUM_TOLERANCE {
            return Err(Error::RowSum {
                row: i,
                id: pm.ids()[i].clone(),
                sum,
            });
        }
        row_deviation.push(deviation);
    }
    Ok(Alignment { row_deviation })
}

/// Fails at the first position where `ids` and the dataset's ids differ.
pub fn check_alignment<S: AsRef<str>>(ids: &[S], ds: &LabeledDataset) -> Result<()> {
    for (position, (found, expected)) in ids.iter().zip(ds.ids()).enumerate() {
        if found.as_ref() != expected {
            return Err(Error::IdMismatch {
                position,
                expected: expected.to_string(),
                found: found.as_ref().to_string(),
            });
        }
    }
    if ids.len() != ds.len() {
        return Err(Error::LengthMismatch {
            expected: ds.len(),
            found: ids.len(),
        });
    }
    Ok(())
}
