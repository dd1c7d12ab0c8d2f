use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ClassMap, Example, LabeledDataset, ProbKind, ProbMatrix};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Manifest {
    classes: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Record<'a> {
    id: &'a str,
    text: &'a str,
    label: &'a str,
}

#[derive(Deserialize)]
struct OwnedRecord {
    id: String,
    text: String,
    label: String,
}

/// Companion manifest for a dataset file: `train.jsonl` → `train.classes.json`.
pub fn manifest_path_for(dataset: &Path) -> PathBuf {
    dataset.with_extension("classes.json")
}

/// Loads a JSON-Lines dataset. The manifest is `<stem>.classes.json` when it
/// exists, otherwise `classes.json` in the same directory.
pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    fs::metadata(path).map_err(|e| Error::io(path, e))?;
    let own = manifest_path_for(path);
    let manifest = if own.exists() {
        own
    } else {
        path.parent()
            .unwrap_or_else(|| Path::new("."))
            .join("classes.json")
    };
    load_dataset_with_manifest(path, &manifest)
}

pub fn read_manifest(path: &Path) -> Result<ClassMap> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&raw).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    ClassMap::new(manifest.classes)
}

pub fn write_manifest(classes: &ClassMap, path: &Path) -> Result<()> {
    let manifest = Manifest {
        classes: classes.names().to_vec(),
    };
    let mut body = serde_json::to_string_pretty(&manifest)?;
    body.push('\n');
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn load_dataset_with_manifest(path: &Path, manifest: &Path) -> Result<LabeledDataset> {
    let classes = read_manifest(manifest)?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut examples = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: OwnedRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        if record.id.is_empty() {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                line: line_no,
                message: "empty id".into(),
            });
        }
        let label = classes
            .index_of(&record.label)
            .ok_or_else(|| Error::UnknownLabel {
                line: line_no,
                label: record.label.clone(),
            })?;
        examples.push(Example {
            id: record.id,
            text: record.text,
            label,
        });
    }
    LabeledDataset::new(examples, classes)
}

/// Writes the dataset as JSON Lines plus its companion manifest.
pub fn save_dataset(ds: &LabeledDataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for ex in ds.examples() {
        let record = Record {
            id: &ex.id,
            text: &ex.text,
            label: ds.classes().name(ex.label),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    write_manifest(ds.classes(), &manifest_path_for(path))
}

/// Reads a probability CSV whose header is `id,<class names...>` in manifest
/// order.
pub fn read_prob_matrix(path: &Path, classes: &ClassMap, kind: ProbKind) -> Result<ProbMatrix> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    check_header(path, &header, &["id"], classes)?;

    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        ids.push(record[0].to_string());
        for field in record.iter().skip(1) {
            values.push(parse_float(path, line, field)?);
        }
    }
    Ok(ProbMatrix::from_flat(ids, classes.len(), values, kind))
}

pub fn write_prob_matrix(pm: &ProbMatrix, classes: &ClassMap, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["id"];
    header.extend(classes.names().iter().map(String::as_str));
    writer.write_record(&header)?;
    for (id, row) in pm.ids().iter().zip(pm.rows()) {
        let mut record = vec![id.clone()];
        record.extend(row.iter().map(|p| p.to_string()));
        writer.write_record(&record)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn check_header(
    path: &Path,
    header: &csv::StringRecord,
    leading: &[&str],
    classes: &ClassMap,
) -> Result<()> {
    let expected: Vec<&str> = leading
        .iter()
        .copied()
        .chain(classes.names().iter().map(String::as_str))
        .collect();
    let found: Vec<&str> = header.iter().collect();
    if found != expected {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            line: 1,
            message: format!(
                "header {:?} does not match expected {:?}",
                found.join(","),
                expected.join(",")
            ),
        });
    }
    Ok(())
}

pub(crate) fn parse_float(path: &Path, line: usize, field: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Malformed {
        path: path.to_path_buf(),
        line,
        message: format!("not a number: {field:?}"),
    })
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Malformed {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}
