//! Label-noise detection for text classification datasets.
//!
//! Two detectors are provided. [`confident`] flags examples whose
//! out-of-fold prediction confidently disagrees with the given label.
//! [`cartography`] summarizes per-epoch training dynamics and filters the
//! low-confidence tail. [`evaluation`] and [`noise`] wrap both in the
//! filter/retrain/compare protocol, including a random-removal control of
//! matching size and synthetic label flips with known ground truth.

pub mod cartography;
pub mod confident;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod model;
pub mod noise;
pub mod seed;

pub use data::{ClassMap, Example, LabeledDataset, ProbKind, ProbMatrix};
pub use error::{Error, ErrorKind, Result};
