//! Reference classifier: hashed unigrams into softmax regression.
//!
//! Small and deterministic, so the detection pipeline runs end to end in
//! seconds. Probabilities from any other model can enter through the
//! ProbMatrix and DynamicsLog file formats instead.

mod dynamics;
pub mod features;
mod oof;
mod softmax;

pub use dynamics::{record_dynamics, DynamicsLog};
pub use features::{featurize, fnv1a64, tokenize, SparseVector};
pub use oof::{oof_predict, oof_predict_scheduled, stratified_folds, Schedule};
pub use softmax::{
    featurize_dataset, objective, predict_proba, softmax_in_place, train, ModelParams, TrainConfig,
};
