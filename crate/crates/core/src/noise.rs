//! Synthetic corpora and label-flip injection with known ground truth.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ClassMap, Example, LabeledDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub rate: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(rate: f64, seed: u64) -> Result<Self> {
        let spec = Self { rate, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::InvalidConfig(format!(
                "noise rate must be in [0, 1], got {}",
                self.rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flip {
    pub id: String,
    pub original: String,
    pub flipped: String,
}

/// Every injected flip, in dataset order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlipRecord {
    pub flips: Vec<Flip>,
}

impl FlipRecord {
    pub fn len(&self) -> usize {
        self.flips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flips.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.flips.iter().map(|f| f.id.as_str())
    }
}

/// Flips each label with probability `spec.rate` to a uniformly chosen
/// different class. Ids, texts and order are untouched.
pub fn inject_noise(ds: &LabeledDataset, spec: &NoiseSpec) -> Result<(LabeledDataset, FlipRecord)> {
    spec.validate()?;
    let c = ds.n_classes();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels = ds.labels();
    let mut flips = Vec::new();
    for (label, ex) in labels.iter_mut().zip(ds.examples()) {
        if rng.gen::<f64>() < spec.rate {
            let r = rng.gen_range(0..c - 1);
            *label = if r >= ex.label { r + 1 } else { r };
            flips.push(Flip {
                id: ex.id.clone(),
                original: ds.classes().name(ex.label).to_string(),
                flipped: ds.classes().name(*label).to_string(),
            });
        }
    }
    Ok((ds.with_labels(&labels)?, FlipRecord { flips }))
}

/// How well a flagged set recovers the injected flips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub flagged: usize,
    pub flipped: usize,
    pub true_positives: usize,
}

/// Precision and recall of `flagged` against the flips; both are 0 when
/// their denominator is empty.
pub fn detection_metrics<'a, I>(flagged: I, flips: &FlipRecord) -> DetectionReport
where
    I: IntoIterator<Item = &'a str>,
{
    let flagged: HashSet<&str> = flagged.into_iter().collect();
    let flipped: HashSet<&str> = flips.ids().collect();
    let hits = flagged.intersection(&flipped).count();
    let precision = if flagged.is_empty() {
        0.0
    } else {
        hits as f64 / flagged.len() as f64
    };
    let recall = if flipped.is_empty() {
        0.0
    } else {
        hits as f64 / flipped.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    DetectionReport {
        precision,
        recall,
        f1,
        flagged: flagged.len(),
        flipped: flipped.len(),
        true_positives: hits,
    }
}

/// Parameters of the synthetic corpus generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub classes: usize,
    /// Probability that a token comes from the class's own pool rather than
    /// the shared one.
    pub separation: f64,
    /// Tokens per pool.
    pub vocab: usize,
    #[serde(default = "default_length")]
    pub length: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_length() -> usize {
    SyntheticSpec::DEFAULT_LENGTH
}

impl SyntheticSpec {
    pub const DEFAULT_LENGTH: usize = 8;

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.n < self.classes {
            return bad(format!(
                "need at least one example per class ({} < {})",
                self.n, self.classes
            ));
        }
        if !(0.0..=1.0).contains(&self.separation) {
            return bad(format!(
                "separation must be in [0, 1], got {}",
                self.separation
            ));
        }
        if self.vocab == 0 || self.length == 0 {
            return bad("vocab and length must be positive".into());
        }
        Ok(())
    }

    /// Example `i` has class `i mod C`. Each of its tokens is drawn from the
    /// class pool with probability `separation` and from the shared pool
    /// otherwise.
    pub fn generate(&self) -> Result<LabeledDataset> {
        self.validate()?;
        let classes = ClassMap::new((0..self.classes).map(|c| format!("class{c}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let width = self.n.to_string().len();
        let examples = (0..self.n)
            .map(|i| {
                let label = i % self.classes;
                let tokens: Vec<String> = (0..self.length)
                    .map(|_| {
                        let own = rng.gen::<f64>() < self.separation;
                        let k = rng.gen_range(0..self.vocab);
                        if own {
                            format!("c{label}w{k}")
                        } else {
                            format!("s{k}")
                        }
                    })
                    .collect();
                Example::new(format!("syn{i:0width$}"), tokens.join(" "), label)
            })
            .collect();
        LabeledDataset::new(examples, classes)
    }
}

/// Balanced synthetic corpus with `classes` dedicated token pools.
pub fn make_synthetic(
    n: usize,
    classes: usize,
    separation: f64,
    vocab: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    SyntheticSpec {
        n,
        classes,
        separation,
        vocab,
        length: SyntheticSpec::DEFAULT_LENGTH,
        seed,
    }
    .generate()
}
