//! Dataset cartography from per-epoch training dynamics.
//!
//! For every example the probability of its given label is followed across
//! epochs. Its mean is the confidence and its population standard deviation
//! the variability. Correctness counts epochs where the argmax equals the
//! given label. Forgetfulness counts correct→incorrect transitions. Examples
//! are split into easy / ambiguous / hard regions by the medians, and a knee
//! on the sorted confidence curve sets the removal threshold.

mod datamap;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use datamap::render_datamap;

use crate::data::{argmax, check_alignment, LabeledDataset};
use crate::error::{Error, Result};
use crate::evaluation::round_to;
use crate::model::DynamicsLog;

/// Distances closer than this to the maximum count as ties on the knee curve.
const KNEE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Easy,
    Ambiguous,
    Hard,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::Easy => "easy",
            Region::Ambiguous => "ambiguous",
            Region::Hard => "hard",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartographyRecord {
    pub id: String,
    pub confidence: f64,
    pub variability: f64,
    pub correctness_count: usize,
    /// `correctness_count / epochs`; not serialized.
    #[serde(skip)]
    pub correctness_fraction: f64,
    pub forgetfulness: usize,
    #[serde(default)]
    pub category: Option<Region>,
}

/// Mean and population standard deviation. A constant series has exactly
/// zero spread and its own value as mean.
fn mean_and_std(series: &[f64]) -> (f64, f64) {
    let first = series[0];
    if series.iter().all(|&p| p == first) {
        return (first, 0.0);
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Number of correct→incorrect transitions. Before the first correct epoch
/// no transition can occur, so never-learned examples score 0.
pub fn count_forgetting(correct: &[bool]) -> usize {
    correct.windows(2).filter(|w| w[0] && !w[1]).count()
}

/// Per-example dynamics metrics; categories are left unset.
pub fn compute_metrics(log: &DynamicsLog, ds: &LabeledDataset) -> Result<Vec<CartographyRecord>> {
    check_alignment(log.ids(), ds)?;
    if log.n_classes() != ds.n_classes() {
        return Err(Error::InvalidConfig(format!(
            "dynamics log has {} classes, dataset has {}",
            log.n_classes(),
            ds.n_classes()
        )));
    }
    let epochs = log.epochs();
    if epochs < 2 {
        return Err(Error::InvalidConfig(
            "dynamics need at least 2 epochs".into(),
        ));
    }
    let records = ds
        .examples()
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let series: Vec<f64> = (0..epochs).map(|e| log.row(e, i)[ex.label]).collect();
            let correct: Vec<bool> = (0..epochs)
                .map(|e| argmax(log.row(e, i)) == ex.label)
                .collect();
            let (confidence, variability) = mean_and_std(&series);
            let correctness_count = correct.iter().filter(|&&c| c).count();
            CartographyRecord {
                id: ex.id.clone(),
                confidence,
                variability,
                correctness_count,
                correctness_fraction: correctness_count as f64 / epochs as f64,
                forgetfulness: count_forgetting(&correct),
                category: None,
            }
        })
        .collect();
    Ok(records)
}

/// Lower of the two middle values for even lengths.
pub fn lower_median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[(sorted.len() - 1) / 2]
}

/// Ambiguous above the median variability; of the rest, easy above the
/// median confidence and hard otherwise. Both comparisons are strict.
pub fn categorize(records: &mut [CartographyRecord]) {
    if records.is_empty() {
        return;
    }
    let var: Vec<f64> = records.iter().map(|r| r.variability).collect();
    let conf: Vec<f64> = records.iter().map(|r| r.confidence).collect();
    let (median_var, median_conf) = (lower_median(&var), lower_median(&conf));
    for r in records.iter_mut() {
        r.category = Some(if r.variability > median_var {
            Region::Ambiguous
        } else if r.confidence > median_conf {
            Region::Easy
        } else {
            Region::Hard
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KneeCut {
    pub threshold: f64,
    /// Position of the knee on the ascending confidence curve, `None` when
    /// the curve is flat or linear.
    pub knee_index: Option<usize>,
    /// Ids with confidence strictly below the threshold, in record order.
    pub removed: Vec<String>,
}

/// Knee of the ascending confidence curve.
///
/// The sorted confidences are min-max normalized onto the unit square with
/// evenly spaced x. The knee is the point farthest from the chord joining
/// the first and last points. Among equally distant points the one with the
/// higher index wins, so on a step curve the threshold falls on the first
/// value of the upper step.
pub fn knee_threshold(records: &[CartographyRecord]) -> Result<KneeCut> {
    let n = records.len();
    if n < 3 {
        return Err(Error::InvalidConfig(format!(
            "knee detection needs at least 3 examples, got {n}"
        )));
    }
    let mut conf: Vec<f64> = records.iter().map(|r| r.confidence).collect();
    conf.sort_by(f64::total_cmp);
    let (lo, hi) = (conf[0], conf[n - 1]);
    let flat = KneeCut {
        threshold: lo,
        knee_index: None,
        removed: Vec::new(),
    };
    if hi - lo < KNEE_EPS {
        return Ok(flat);
    }

    // chord from (0, 0) to (1, 1): distance of (x, y) is |x - y| / sqrt(2)
    let distances: Vec<f64> = conf
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let x = k as f64 / (n - 1) as f64;
            let y = (c - lo) / (hi - lo);
            (x - y).abs() / std::f64::consts::SQRT_2
        })
        .collect();
    let best = distances.iter().copied().fold(0.0, f64::max);
    if best < KNEE_EPS {
        return Ok(flat);
    }
    let knee = distances
        .iter()
        .rposition(|&d| d >= best - KNEE_EPS)
        .expect("maximum is attained");
    let threshold = conf[knee];
    let removed = records
        .iter()
        .filter(|r| r.confidence < threshold)
        .map(|r| r.id.clone())
        .collect();
    Ok(KneeCut {
        threshold,
        knee_index: Some(knee),
        removed,
    })
}

/// Corpus-level dynamics summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusDynamicsStats {
    pub mean_confidence: f64,
    pub mean_variability: f64,
    pub mean_correctness_count: f64,
    pub knee_threshold: f64,
    pub easy: usize,
    pub ambiguous: usize,
    pub hard: usize,
    pub mean_forgetfulness: f64,
}

impl CorpusDynamicsStats {
    /// Copy with every real value rounded to 3 decimals, as written to reports.
    pub fn rounded(&self) -> Self {
        Self {
            mean_confidence: round_to(self.mean_confidence, 3),
            mean_variability: round_to(self.mean_variability, 3),
            mean_correctness_count: round_to(self.mean_correctness_count, 3),
            knee_threshold: round_to(self.knee_threshold, 3),
            mean_forgetfulness: round_to(self.mean_forgetfulness, 3),
            ..self.clone()
        }
    }

    pub fn total(&self) -> usize {
        self.easy + self.ambiguous + self.hard
    }

    /// One table row: `μ̄ σ̄ Corr. Thresh. Easy Amb. Hard`.
    pub fn table_row(&self, corpus: &str) -> String {
        format!(
            "{corpus} | {:.3} | {:.3} | {:.2} | {:.3} | {} | {} | {}",
            self.mean_confidence,
            self.mean_variability,
            self.mean_correctness_count,
            self.knee_threshold,
            self.easy,
            self.ambiguous,
            self.hard
        )
    }
}

pub fn corpus_stats(records: &[CartographyRecord], threshold: f64) -> CorpusDynamicsStats {
    let n = records.len().max(1) as f64;
    let mean = |f: fn(&CartographyRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    let count = |region| {
        records
            .iter()
            .filter(|r| r.category == Some(region))
            .count()
    };
    CorpusDynamicsStats {
        mean_confidence: mean(|r| r.confidence),
        mean_variability: mean(|r| r.variability),
        mean_correctness_count: mean(|r| r.correctness_count as f64),
        knee_threshold: threshold,
        easy: count(Region::Easy),
        ambiguous: count(Region::Ambiguous),
        hard: count(Region::Hard),
        mean_forgetfulness: mean(|r| r.forgetfulness as f64),
    }
}

/// Everything the cartography stage writes out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartographyReport {
    pub epochs: usize,
    pub records: Vec<CartographyRecord>,
    pub stats: CorpusDynamicsStats,
    pub threshold: f64,
    pub removed: Vec<String>,
}

impl CartographyReport {
    pub fn to_json(&self) -> Result<String> {
        let mut out = serde_json::to_string_pretty(self)?;
        out.push('\n');
        Ok(out)
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        let mut report: CartographyReport = serde_json::from_str(raw)?;
        let epochs = report.epochs.max(1) as f64;
        for r in &mut report.records {
            r.correctness_fraction = r.correctness_count as f64 / epochs;
        }
        Ok(report)
    }
}

/// Metrics, regions, knee cut and summary in one pass.
pub fn analyze(log: &DynamicsLog, ds: &LabeledDataset) -> Result<CartographyReport> {
    let mut records = compute_metrics(log, ds)?;
    categorize(&mut records);
    let cut = knee_threshold(&records)?;
    let stats = corpus_stats(&records, cut.threshold).rounded();
    log::info!(
        "cartography: threshold {:.3}, {} below it; easy {} / ambiguous {} / hard {}",
        cut.threshold,
        cut.removed.len(),
        stats.easy,
        stats.ambiguous,
        stats.hard
    );
    Ok(CartographyReport {
        epochs: log.epochs(),
        records,
        stats,
        threshold: cut.threshold,
        removed: cut.removed,
    })
}
