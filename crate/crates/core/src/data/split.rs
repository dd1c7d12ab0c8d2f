use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};

/// Train/validation/test fractions plus the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSplitSpec")]
pub struct SplitSpec {
    ratios: [f64; 3],
    seed: u64,
}

#[derive(Deserialize)]
struct RawSplitSpec {
    #[serde(default = "default_ratios")]
    ratios: [f64; 3],
    #[serde(default)]
    seed: u64,
}

fn default_ratios() -> [f64; 3] {
    [0.8, 0.1, 0.1]
}

impl TryFrom<RawSplitSpec> for SplitSpec {
    type Error = Error;

    fn try_from(raw: RawSplitSpec) -> Result<Self> {
        SplitSpec::new(raw.ratios, raw.seed)
    }
}

impl SplitSpec {
    pub fn new(ratios: [f64; 3], seed: u64) -> Result<Self> {
        if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "split ratios must be non-negative, got {ratios:?}"
            )));
        }
        let sum: f64 = ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "split ratios must sum to 1, got {sum}"
            )));
        }
        Ok(Self { ratios, seed })
    }

    /// The usual 80/10/10 split.
    pub fn standard(seed: u64) -> Self {
        Self {
            ratios: default_ratios(),
            seed,
        }
    }

    pub fn ratios(&self) -> [f64; 3] {
        self.ratios
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// Per-part counts for one class of size `n` by the largest-remainder rule.
/// Leftover units go to the largest fractional parts; equal fractions are
/// served in train, val, test order.
pub(crate) fn part_counts(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let total: f64 = ratios.iter().sum();
    let quotas = ratios.map(|r| r / total * n as f64);
    let mut counts = quotas.map(|q| (q + 1e-9).floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    let frac: Vec<f64> = (0..3).map(|p| quotas[p] - counts[p] as f64).collect();
    order.sort_by(|&a, &b| frac[b].total_cmp(&frac[a]).then(a.cmp(&b)));
    for &p in order.iter().cycle().take(n.saturating_sub(assigned)) {
        counts[p] += 1;
    }
    counts
}

/// Splits `ds` into train/val/test with identical class proportions.
///
/// Within each class the examples are shuffled with the split seed and cut
/// at the largest-remainder counts. Each part keeps the input order.
pub fn stratified_split(
    ds: &LabeledDataset,
    spec: &SplitSpec,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    ds.require_class_counts(1)?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes()];
    for (i, ex) in ds.examples().iter().enumerate() {
        by_class[ex.label].push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for members in &mut by_class {
        members.shuffle(&mut rng);
        let [train, val, _] = part_counts(members.len(), spec.ratios);
        parts[0].extend_from_slice(&members[..train]);
        parts[1].extend_from_slice(&members[train..train + val]);
        parts[2].extend_from_slice(&members[train + val..]);
    }
    let [train, val, test] = parts.map(|mut idx| {
        idx.sort_unstable();
        ds.subset(&idx)
    });
    Ok((train, val, test))
}
