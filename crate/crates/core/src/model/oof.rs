//! Out-of-fold probabilities by stratified K-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::softmax::{featurize_dataset, predict_features, train_features, TrainConfig};
use crate::data::{LabeledDataset, ProbKind, ProbMatrix};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// How fold models are scheduled. Both give bit-identical output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    Sequential,
    #[default]
    Parallel,
}

/// Fold index of every example.
///
/// Each class is shuffled on its own and dealt out in contiguous chunks of
/// near-equal size, so every fold holds `floor` or `ceil` of `count / k`
/// examples of each class.
pub fn stratified_folds(ds: &LabeledDataset, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!(
            "K must be at least 2, got {k}"
        )));
    }
    ds.require_class_counts(k)?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes()];
    for (i, ex) in ds.examples().iter().enumerate() {
        by_class[ex.label].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "folds"));
    let mut fold_of = vec![0; ds.len()];
    for members in &mut by_class {
        members.shuffle(&mut rng);
        let n = members.len();
        for fold in 0..k {
            for &i in &members[fold * n / k..(fold + 1) * n / k] {
                fold_of[i] = fold;
            }
        }
    }
    Ok(fold_of)
}

/// Every example's probabilities from a model trained on the other folds.
pub fn oof_predict(ds: &LabeledDataset, k: usize, cfg: &TrainConfig) -> Result<ProbMatrix> {
    oof_predict_scheduled(ds, k, cfg, Schedule::default())
}

pub fn oof_predict_scheduled(
    ds: &LabeledDataset,
    k: usize,
    cfg: &TrainConfig,
    schedule: Schedule,
) -> Result<ProbMatrix> {
    cfg.validate()?;
    let fold_of = stratified_folds(ds, k, cfg.seed)?;
    let features = featurize_dataset(ds, cfg.feature_dims);

    let run_fold = |fold: usize| -> Result<(Vec<usize>, ProbMatrix)> {
        let (held, kept): (Vec<usize>, Vec<usize>) =
            (0..ds.len()).partition(|&i| fold_of[i] == fold);
        let train_x: Vec<_> = kept.iter().map(|&i| features[i].clone()).collect();
        let train_y: Vec<usize> = kept.iter().map(|&i| ds.examples()[i].label).collect();
        let params = train_features(&train_x, train_y, ds.n_classes(), cfg)?;
        let held_x: Vec<_> = held.iter().map(|&i| features[i].clone()).collect();
        let probs = predict_features(&params, &ds.subset(&held), &held_x);
        Ok((held, probs))
    };

    let folds: Vec<Result<(Vec<usize>, ProbMatrix)>> = match schedule {
        Schedule::Sequential => (0..k).map(run_fold).collect(),
        Schedule::Parallel => (0..k).into_par_iter().map(run_fold).collect(),
    };

    let c = ds.n_classes();
    let mut values = vec![0.0; ds.len() * c];
    for fold in folds {
        let (held, probs) = fold?;
        for (row, &i) in probs.rows().zip(&held) {
            values[i * c..(i + 1) * c].copy_from_slice(row);
        }
    }
    Ok(ProbMatrix::from_flat(
        ds.ids().map(String::from).collect(),
        c,
        values,
        ProbKind::OutOfFold,
    ))
}
