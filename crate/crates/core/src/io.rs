//! CSV ingestion and the tabular artifacts shared with the command line.
//!
//! A dataset file has a header row; every column is a numeric feature except
//! the reserved `group` (two distinct values) and the optional `label` (0/1).
//! Row identifiers are the zero-based data-row positions in the file.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, GroupedDataset};
use crate::error::{Error, Result};
use crate::exact::ExactMap;

pub const GROUP_COLUMN: &str = "group";
pub const LABEL_COLUMN: &str = "label";

/// A dataset read from CSV together with the group values it was split on.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub data: GroupedDataset,
    pub source_group: String,
    pub target_group: String,
}

pub fn read_grouped_csv(path: &Path, source_group: Option<&str>) -> Result<LoadedDataset> {
    let file = std::fs::File::open(path)?;
    read_grouped(file, source_group)
}

/// Parse a grouped dataset. The lexicographically smaller group value is
/// the source unless `source_group` names the other one.
pub fn read_grouped<R: Read>(input: R, source_group: Option<&str>) -> Result<LoadedDataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let group_col = headers
        .iter()
        .position(|h| h == GROUP_COLUMN)
        .ok_or_else(|| Error::SchemaMismatch(format!("missing `{GROUP_COLUMN}` column")))?;
    let label_col = headers.iter().position(|h| h == LABEL_COLUMN);
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != group_col && Some(c) != label_col)
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::SchemaMismatch("no feature columns".into()));
    }
    let names: Vec<String> = feature_cols.iter().map(|&c| headers[c].to_string()).collect();

    let mut groups: Vec<String> = Vec::new();
    let mut rows: Vec<(usize, Vec<f64>, Option<u8>)> = Vec::new();
    for (pos, record) in reader.records().enumerate() {
        let record = record?;
        let line = pos + 2;
        let mut values = Vec::with_capacity(feature_cols.len());
        for (&c, name) in feature_cols.iter().zip(&names) {
            let v: f64 = record[c].parse().map_err(|_| {
                Error::SchemaMismatch(format!("line {line}, column `{name}`: `{}` is not a number", &record[c]))
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row: pos, col: values.len() });
            }
            values.push(v);
        }
        let label = match label_col {
            Some(c) => Some(match &record[c] {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::SchemaMismatch(format!("line {line}: label `{other}` is not 0/1")))
                }
            }),
            None => None,
        };
        let g = &record[group_col];
        let gi = match groups.iter().position(|x| x == g) {
            Some(i) => i,
            None => {
                groups.push(g.to_string());
                groups.len() - 1
            }
        };
        if groups.len() > 2 {
            return Err(Error::SchemaMismatch(format!("more than two groups: {groups:?}")));
        }
        rows.push((gi, values, label));
    }
    if groups.len() != 2 {
        return Err(Error::SchemaMismatch(format!("expected two groups, found {groups:?}")));
    }
    let mut sorted = groups.clone();
    sorted.sort();
    let (source, target) = match source_group {
        None => (sorted[0].clone(), sorted[1].clone()),
        Some(s) if s == sorted[0] => (sorted[0].clone(), sorted[1].clone()),
        Some(s) if s == sorted[1] => (sorted[1].clone(), sorted[0].clone()),
        Some(s) => return Err(Error::SchemaMismatch(format!("source group `{s}` not among {sorted:?}"))),
    };
    let source_idx = groups.iter().position(|g| *g == source).expect("present");

    let build = |want_source: bool| -> Result<(FeatureMatrix, Vec<u8>)> {
        let picked: Vec<(usize, &Vec<f64>, Option<u8>)> = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| (r.0 == source_idx) == want_source)
            .map(|(id, r)| (id, &r.1, r.2))
            .collect();
        let flat: Vec<f64> = picked.iter().flat_map(|p| p.1.iter().copied()).collect();
        let values = Array2::from_shape_vec((picked.len(), names.len()), flat).expect("rectangular");
        let ids = picked.iter().map(|p| p.0).collect();
        let labels = picked.iter().filter_map(|p| p.2).collect();
        Ok((FeatureMatrix::with_row_ids(names.clone(), values, ids)?, labels))
    };
    let (a, la) = build(true)?;
    let (b, lb) = build(false)?;
    let mut data = GroupedDataset::new(a, b)?;
    if label_col.is_some() {
        data = data.with_labels(la, lb)?;
    }
    Ok(LoadedDataset {
        data,
        source_group: source,
        target_group: target,
    })
}

/// Write `data` as a grouped CSV: source rows then target rows, each tagged
/// with its group value and, when present, its label.
pub fn write_grouped<W: Write>(out: W, data: &GroupedDataset, groups: (&str, &str)) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = data.feature_names().to_vec();
    let labelled = data.labels_a.is_some() && data.labels_b.is_some();
    if labelled {
        header.push(LABEL_COLUMN.into());
    }
    header.push(GROUP_COLUMN.into());
    w.write_record(&header)?;
    for (m, labels, g) in [
        (&data.group_a, &data.labels_a, groups.0),
        (&data.group_b, &data.labels_b, groups.1),
    ] {
        for i in 0..m.rows() {
            let mut rec: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
            if labelled {
                rec.push(labels.as_ref().expect("labelled")[i].to_string());
            }
            rec.push(g.to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_grouped_csv(path: &Path, data: &GroupedDataset, groups: (&str, &str)) -> Result<()> {
    write_grouped(std::fs::File::create(path)?, data, groups)
}

/// One pair of an exact map, by row identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentRow {
    pub source_index: usize,
    pub target_index: usize,
}

pub fn assignment_rows(data: &GroupedDataset, map: &ExactMap) -> Result<Vec<AssignmentRow>> {
    if map.assignment.len() != data.group_a.rows() {
        return Err(Error::ShapeMismatch(format!(
            "assignment of {} for {} source rows",
            map.assignment.len(),
            data.group_a.rows()
        )));
    }
    let (ids_a, ids_b) = (data.group_a.row_ids(), data.group_b.row_ids());
    Ok(map
        .assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| AssignmentRow {
            source_index: ids_a[i],
            target_index: ids_b[j],
        })
        .collect())
}

/// Rebuild the positional assignment from row identifiers.
pub fn assignment_from_rows(data: &GroupedDataset, rows: &[AssignmentRow]) -> Result<Vec<usize>> {
    let n = data.group_a.rows();
    if rows.len() != n || data.group_b.rows() != n {
        return Err(Error::ShapeMismatch(format!(
            "assignment has {} rows for groups of {} and {}",
            rows.len(),
            n,
            data.group_b.rows()
        )));
    }
    let pos_of = |ids: &[usize], id: usize, side: &str| -> Result<usize> {
        ids.iter()
            .position(|&x| x == id)
            .ok_or_else(|| Error::SchemaMismatch(format!("{side} row {id} is not in the dataset")))
    };
    let mut assignment = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for r in rows {
        let i = pos_of(data.group_a.row_ids(), r.source_index, "source")?;
        let j = pos_of(data.group_b.row_ids(), r.target_index, "target")?;
        if assignment[i] != usize::MAX || used[j] {
            return Err(Error::SchemaMismatch("assignment is not a bijection".into()));
        }
        assignment[i] = j;
        used[j] = true;
    }
    Ok(assignment)
}

pub fn write_records<W: Write, T: Serialize>(out: W, records: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read, T: for<'de> Deserialize<'de>>(input: R) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|x| x.map_err(Error::from)).collect()
}
