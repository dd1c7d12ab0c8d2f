//! Filtering, the random-removal control, classification metrics and
//! F1 deltas between training conditions.

use std::collections::HashSet;
use std::fmt;

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{argmax, LabeledDataset, ProbMatrix};
use crate::error::{Error, Result};

/// Rounds to `decimals` places.
pub fn round_to(value: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (value * scale).round() / scale
}

/// `100 * part / total` rounded to two decimals; 0 for an empty total.
pub fn percent(part: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    round_to(100.0 * part as f64 / total as f64, 2)
}

/// Signed four-decimal rendering, e.g. `+0.0134`, `-0.0003`, `0.0000`.
pub fn format_delta(delta: f64) -> String {
    let rounded = round_to(delta, 4);
    if rounded == 0.0 {
        "0.0000".to_string()
    } else {
        format!("{rounded:+.4}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "CL")]
    ConfidentLearning,
    #[serde(rename = "DM")]
    Cartography,
    #[serde(rename = "random")]
    Random,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::ConfidentLearning => "CL",
            Method::Cartography => "DM",
            Method::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    pub retained: LabeledDataset,
    /// Removed ids in dataset order.
    pub removed_ids: Vec<String>,
    pub removed_count: usize,
    pub removed_percent: f64,
    pub method: Method,
}

impl FilterResult {
    pub fn total(&self) -> usize {
        self.retained.len() + self.removed_count
    }
}

/// Drops the examples named in `removed`; the rest keep their order.
pub fn apply_filter<'a, I>(ds: &LabeledDataset, removed: I, method: Method) -> Result<FilterResult>
where
    I: IntoIterator<Item = &'a str>,
{
    let known: HashSet<&str> = ds.ids().collect();
    let mut drop: HashSet<&str> = HashSet::new();
    for id in removed {
        if !known.contains(id) {
            return Err(Error::UnknownId(id.to_string()));
        }
        drop.insert(id);
    }
    let mut kept = Vec::with_capacity(ds.len() - drop.len());
    let mut removed_ids = Vec::with_capacity(drop.len());
    for (i, ex) in ds.examples().iter().enumerate() {
        if drop.contains(ex.id.as_str()) {
            removed_ids.push(ex.id.clone());
        } else {
            kept.push(i);
        }
    }
    let removed_count = removed_ids.len();
    Ok(FilterResult {
        retained: ds.subset(&kept),
        removed_ids,
        removed_count,
        removed_percent: percent(removed_count, ds.len()),
        method,
    })
}

/// Removes `k` examples drawn uniformly without replacement.
pub fn random_control(ds: &LabeledDataset, k: usize, seed: u64) -> Result<FilterResult> {
    if k > ds.len() {
        return Err(Error::InvalidConfig(format!(
            "cannot remove {k} of {} examples",
            ds.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, ds.len(), k);
    let ids: Vec<&str> = picked
        .iter()
        .map(|i| ds.examples()[i].id.as_str())
        .collect();
    apply_filter(ds, ids, Method::Random)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub f1_macro: f64,
    pub accuracy: f64,
    pub per_class_f1: Vec<f64>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Macro-averaged F1 over all `n_classes` classes plus accuracy.
///
/// Any 0/0 precision, recall or F1 counts as 0, and classes that never
/// occur still enter the mean.
pub fn f1_macro(preds: &[usize], golds: &[usize], n_classes: usize) -> Result<EvalReport> {
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch {
            expected: golds.len(),
            found: preds.len(),
        });
    }
    if let Some(&bad) = preds.iter().chain(golds).find(|&&l| l >= n_classes) {
        return Err(Error::InvalidConfig(format!(
            "label {bad} out of range for {n_classes} classes"
        )));
    }
    let mut tp = vec![0usize; n_classes];
    let mut predicted = vec![0usize; n_classes];
    let mut actual = vec![0usize; n_classes];
    for (&p, &g) in preds.iter().zip(golds) {
        predicted[p] += 1;
        actual[g] += 1;
        if p == g {
            tp[p] += 1;
        }
    }
    let per_class_f1: Vec<f64> = (0..n_classes)
        .map(|c| {
            let precision = ratio(tp[c], predicted[c]);
            let recall = ratio(tp[c], actual[c]);
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        })
        .collect();
    let f1_macro = if n_classes == 0 {
        0.0
    } else {
        per_class_f1.iter().sum::<f64>() / n_classes as f64
    };
    Ok(EvalReport {
        f1_macro,
        accuracy: ratio(tp.iter().sum(), golds.len()),
        per_class_f1,
    })
}

/// Scores argmax predictions against the labels of `ds`.
pub fn evaluate_predictions(pm: &ProbMatrix, ds: &LabeledDataset) -> Result<EvalReport> {
    crate::data::check_alignment(pm.ids(), ds)?;
    let preds: Vec<usize> = pm.rows().map(argmax).collect();
    f1_macro(&preds, &ds.labels(), ds.n_classes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaEntry {
    pub f1: f64,
    pub delta_base: f64,
    pub delta_random: f64,
}

/// F1 differences of each variant against the baseline and against its
/// size-matched random control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub baseline: f64,
    pub variants: IndexMap<String, DeltaEntry>,
}

pub fn delta_report(
    baseline: &EvalReport,
    variants: &IndexMap<String, EvalReport>,
    controls: &IndexMap<String, EvalReport>,
) -> Result<DeltaReport> {
    let mut out = IndexMap::new();
    for (tag, variant) in variants {
        let control = controls.get(tag).ok_or_else(|| {
            Error::InvalidConfig(format!("no matched random control for {tag:?}"))
        })?;
        out.insert(
            tag.clone(),
            DeltaEntry {
                f1: variant.f1_macro,
                delta_base: variant.f1_macro - baseline.f1_macro,
                delta_random: variant.f1_macro - control.f1_macro,
            },
        );
    }
    Ok(DeltaReport {
        baseline: baseline.f1_macro,
        variants: out,
    })
}
