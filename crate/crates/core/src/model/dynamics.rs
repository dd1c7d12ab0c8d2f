//! Per-epoch training dynamics: full-dataset probability snapshots taken
//! after every epoch of a single training run.

use std::collections::HashMap;
use std::path::Path;

use super::softmax::{featurize_dataset, predict_features, TrainConfig, Trainer};
use crate::data::io::{check_header, csv_error, parse_float};
use crate::data::{ClassMap, LabeledDataset, ROW_SUM_TOLERANCE};
use crate::error::{Error, Result};

/// E snapshots of n×C probabilities, stored epoch-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsLog {
    ids: Vec<String>,
    n_classes: usize,
    epochs: usize,
    probs: Vec<f64>,
}

impl DynamicsLog {
    /// `snapshots[e][i]` is the distribution of example `i` after epoch `e + 1`.
    pub fn new(ids: Vec<String>, snapshots: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let epochs = snapshots.len();
        if epochs < 2 {
            return Err(Error::InvalidConfig(format!(
                "a dynamics log needs at least 2 epochs, got {epochs}"
            )));
        }
        let n_classes = snapshots
            .first()
            .and_then(|s| s.first())
            .map_or(0, Vec::len);
        let mut probs = Vec::with_capacity(epochs * ids.len() * n_classes);
        for (e, snapshot) in snapshots.into_iter().enumerate() {
            if snapshot.len() != ids.len() {
                return Err(Error::LengthMismatch {
                    expected: ids.len(),
                    found: snapshot.len(),
                });
            }
            for (i, row) in snapshot.into_iter().enumerate() {
                if row.len() != n_classes {
                    return Err(Error::InvalidConfig(format!(
                        "epoch {} row {i} has {} columns, expected {n_classes}",
                        e + 1,
                        row.len()
                    )));
                }
                check_row(&row, e, &ids[i])?;
                probs.extend(row);
            }
        }
        Ok(Self {
            ids,
            n_classes,
            epochs,
            probs,
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn epochs(&self) -> usize {
        self.epochs
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

    /// Distribution of example `i` after epoch `epoch` (0-based).
    pub fn row(&self, epoch: usize, i: usize) -> &[f64] {
        let start = (epoch * self.ids.len() + i) * self.n_classes;
        &self.probs[start..start + self.n_classes]
    }

    /// Writes `id,epoch,<classes...>`, one row per (example, epoch), epochs
    /// numbered from 1.
    pub fn write_csv(&self, classes: &ClassMap, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut header = vec!["id", "epoch"];
        header.extend(classes.names().iter().map(String::as_str));
        writer.write_record(&header)?;
        for (i, id) in self.ids.iter().enumerate() {
            for e in 0..self.epochs {
                let mut record = vec![id.clone(), (e + 1).to_string()];
                record.extend(self.row(e, i).iter().map(|p| p.to_string()));
                writer.write_record(&record)?;
            }
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads the CSV written by [`DynamicsLog::write_csv`]. Rows may come in
    /// any order; example order is the order of first appearance and every
    /// (id, epoch) pair must occur exactly once.
    pub fn read_csv(path: &Path, classes: &ClassMap) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
        check_header(path, &header, &["id", "epoch"], classes)?;

        let mut ids: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut rows: Vec<(usize, usize, Vec<f64>, usize)> = Vec::new();
        let mut max_epoch = 0;
        for (r, record) in reader.records().enumerate() {
            let line = r + 2;
            let record = record.map_err(|e| csv_error(path, e))?;
            let id = record[0].to_string();
            let epoch: usize = record[1].trim().parse().map_err(|_| Error::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("bad epoch {:?}", &record[1]),
            })?;
            if epoch == 0 {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line,
                    message: "epochs are numbered from 1".into(),
                });
            }
            max_epoch = max_epoch.max(epoch);
            let i = *index.entry(id.clone()).or_insert_with(|| {
                ids.push(id);
                ids.len() - 1
            });
            let probs = record
                .iter()
                .skip(2)
                .map(|f| parse_float(path, line, f))
                .collect::<Result<Vec<_>>>()?;
            rows.push((epoch - 1, i, probs, line));
        }

        let n = ids.len();
        let mut snapshots: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; n]; max_epoch];
        for (e, i, probs, line) in rows {
            if snapshots[e][i].replace(probs).is_some() {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line,
                    message: format!("duplicate row for {:?} epoch {}", ids[i], e + 1),
                });
            }
        }
        let snapshots = snapshots
            .into_iter()
            .enumerate()
            .map(|(e, snap)| {
                snap.into_iter()
                    .enumerate()
                    .map(|(i, row)| {
                        row.ok_or_else(|| Error::Malformed {
                            path: path.to_path_buf(),
                            line: 0,
                            message: format!("missing row for {:?} epoch {}", ids[i], e + 1),
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        DynamicsLog::new(ids, snapshots)
    }
}

fn check_row(row: &[f64], epoch: usize, id: &str) -> Result<()> {
    if let Some(&value) = row.iter().find(|p| !(0.0..=1.0).contains(*p) || p.is_nan()) {
        return Err(Error::ProbabilityRange {
            row: epoch,
            id: id.to_string(),
            value,
        });
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(Error::RowSum {
            row: epoch,
            id: id.to_string(),
            sum,
        });
    }
    Ok(())
}

/// Trains on the whole of `ds` for `cfg.epochs` epochs and snapshots the
/// in-sample probabilities after each one.
pub fn record_dynamics(ds: &LabeledDataset, cfg: &TrainConfig) -> Result<DynamicsLog> {
    cfg.validate()?;
    if cfg.epochs < 2 {
        return Err(Error::InvalidConfig(format!(
            "dynamics need at least 2 epochs, got {}",
            cfg.epochs
        )));
    }
    if ds.is_empty() {
        return Err(Error::InvalidConfig(
            "cannot train on an empty dataset".into(),
        ));
    }
    ds.require_class_counts(1)?;
    let features = featurize_dataset(ds, cfg.feature_dims);
    let mut trainer = Trainer::new(cfg, &features, ds.labels(), ds.n_classes());
    let mut probs = Vec::with_capacity(cfg.epochs * ds.len() * ds.n_classes());
    for _ in 0..cfg.epochs {
        trainer.run_epoch()?;
        let snapshot = predict_features(trainer.params(), ds, &features);
        for row in snapshot.rows() {
            probs.extend_from_slice(row);
        }
    }
    Ok(DynamicsLog {
        ids: ds.ids().map(String::from).collect(),
        n_classes: ds.n_classes(),
        epochs: cfg.epochs,
        probs,
    })
}
