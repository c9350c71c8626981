//! CSV manifests: labels as `id,label` (−1 normal, 1 abnormal) and fold
//! assignments as `id,fold`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::{Error, Result};

use super::{FoldAssignment, Label};

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format {
            what: "csv",
            reason: format!("{}: {other:?}", path.display()),
        },
    }
}

fn read_pairs(path: &Path) -> Result<Vec<(String, i64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for row in reader.deserialize::<(String, i64)>() {
        out.push(row.map_err(|e| csv_err(path, e))?);
    }
    Ok(out)
}

pub fn read_labels_csv(path: &Path) -> Result<BTreeMap<String, Label>> {
    let mut out = BTreeMap::new();
    for (id, code) in read_pairs(path)? {
        let label = Label::from_code(code).ok_or_else(|| Error::Format {
            what: "labels csv",
            reason: format!("{id}: label {code} is neither -1 nor 1"),
        })?;
        if out.insert(id.clone(), label).is_some() {
            return Err(Error::Format {
                what: "labels csv",
                reason: format!("duplicate id {id}"),
            });
        }
    }
    Ok(out)
}

pub fn write_labels_csv(path: &Path, labels: &BTreeMap<String, Label>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["id", "label"]).map_err(|e| csv_err(path, e))?;
    for (id, l) in labels {
        w.write_record([id.as_str(), &l.code().to_string()]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_folds_csv(path: &Path) -> Result<FoldAssignment> {
    let mut folds = BTreeMap::new();
    for (id, fold) in read_pairs(path)? {
        let fold = i32::try_from(fold).ok().filter(|f| (-1..4).contains(f)).ok_or_else(|| Error::Format {
            what: "folds csv",
            reason: format!("{id}: fold {fold} outside -1..=3"),
        })?;
        if folds.insert(id.clone(), fold).is_some() {
            return Err(Error::Format {
                what: "folds csv",
                reason: format!("duplicate id {id}"),
            });
        }
    }
    Ok(FoldAssignment { folds })
}

pub fn write_folds_csv(path: &Path, folds: &FoldAssignment) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["id", "fold"]).map_err(|e| csv_err(path, e))?;
    for (id, f) in &folds.folds {
        w.write_record([id.as_str(), &f.to_string()]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
