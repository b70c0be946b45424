//! Feature matrices, grouped datasets, normalization and transport costs.

use std::collections::HashSet;
use std::fmt;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense `n x d` sample with named columns.
///
/// Each row carries a stable identifier (its position in the originating
/// file or generator), which survives subsampling and stratification so
/// that black-box predictions can be looked up by row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    names: Vec<String>,
    values: Array2<f64>,
    row_ids: Vec<usize>,
}

fn check_names(names: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for name in names {
        if name.is_empty() {
            return Err(Error::BadFeatureNames("empty feature name".into()));
        }
        if !seen.insert(name.as_str()) {
            return Err(Error::BadFeatureNames(format!("duplicate feature `{name}`")));
        }
    }
    Ok(())
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, values: Array2<f64>) -> Result<Self> {
        let ids = (0..values.nrows()).collect();
        Self::with_row_ids(names, values, ids)
    }

    pub fn with_row_ids(names: Vec<String>, values: Array2<f64>, row_ids: Vec<usize>) -> Result<Self> {
        check_names(&names)?;
        if names.len() != values.ncols() {
            return Err(Error::DimensionMismatch {
                expected: names.len(),
                found: values.ncols(),
            });
        }
        if row_ids.len() != values.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} row ids for {} rows",
                row_ids.len(),
                values.nrows()
            )));
        }
        for ((row, col), v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
        }
        let values = values.as_standard_layout().into_owned();
        Ok(Self { names, values, row_ids })
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let d = names.len();
        let mut flat = Vec::with_capacity(rows.len() * d);
        for row in rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        let values = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Self::new(names, values)
    }

    /// Convenience for tests and generators: features named `x0, x1, ...`.
    pub fn unnamed(values: Array2<f64>) -> Result<Self> {
        let names = (0..values.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(names, values)
    }

    pub fn empty(names: Vec<String>) -> Result<Self> {
        let d = names.len();
        Self::new(names, Array2::zeros((0, d)))
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.rows() == 0
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values
            .row(i)
            .to_slice()
            .expect("feature matrices are stored in standard layout")
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).to_vec()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Rows at `indices`, in that order, keeping their identifiers.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            values: self.values.select(Axis(0), indices),
            row_ids: indices.iter().map(|&i| self.row_ids[i]).collect(),
        }
    }

    /// Same schema and identifiers, new values.
    pub fn with_values(&self, values: Array2<f64>) -> Result<Self> {
        if values.dim() != self.values.dim() {
            return Err(Error::ShapeMismatch(format!(
                "expected {:?}, found {:?}",
                self.values.dim(),
                values.dim()
            )));
        }
        Self::with_row_ids(self.names.clone(), values, self.row_ids.clone())
    }

    pub fn same_schema(&self, other: &Self) -> Result<()> {
        if self.names != other.names {
            return Err(Error::SchemaMismatch(format!(
                "{:?} vs {:?}",
                self.names, other.names
            )));
        }
        Ok(())
    }

    /// Vertical concatenation.
    pub fn stack(&self, other: &Self) -> Result<Self> {
        self.same_schema(other)?;
        let values = ndarray::concatenate(Axis(0), &[self.values.view(), other.values.view()])
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let mut ids = self.row_ids.clone();
        ids.extend_from_slice(&other.row_ids);
        Ok(Self {
            names: self.names.clone(),
            values,
            row_ids: ids,
        })
    }
}

/// Two same-schema samples: the source group `S` and the target group `S'`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDataset {
    pub group_a: FeatureMatrix,
    pub group_b: FeatureMatrix,
    pub labels_a: Option<Vec<u8>>,
    pub labels_b: Option<Vec<u8>>,
}

fn check_labels(labels: &[u8], rows: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {rows} rows",
            labels.len()
        )));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::BadParams("labels must be 0 or 1".into()));
    }
    Ok(())
}

impl GroupedDataset {
    pub fn new(group_a: FeatureMatrix, group_b: FeatureMatrix) -> Result<Self> {
        group_a.same_schema(&group_b)?;
        Ok(Self {
            group_a,
            group_b,
            labels_a: None,
            labels_b: None,
        })
    }

    pub fn with_labels(mut self, labels_a: Vec<u8>, labels_b: Vec<u8>) -> Result<Self> {
        check_labels(&labels_a, self.group_a.rows())?;
        check_labels(&labels_b, self.group_b.rows())?;
        self.labels_a = Some(labels_a);
        self.labels_b = Some(labels_b);
        Ok(self)
    }

    pub fn dims(&self) -> usize {
        self.group_a.cols()
    }

    pub fn feature_names(&self) -> &[String] {
        self.group_a.names()
    }

    /// The same data seen from the other side: `S'` becomes the source.
    pub fn swapped(&self) -> Self {
        Self {
            group_a: self.group_b.clone(),
            group_b: self.group_a.clone(),
            labels_a: self.labels_b.clone(),
            labels_b: self.labels_a.clone(),
        }
    }

    /// Both groups restricted to rows whose true label is `label`.
    pub fn stratum(&self, label: u8) -> Result<Self> {
        let (la, lb) = match (&self.labels_a, &self.labels_b) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::MissingLabels),
        };
        let pick = |labels: &[u8]| -> Vec<usize> {
            labels
                .iter()
                .enumerate()
                .filter(|(_, &y)| y == label)
                .map(|(i, _)| i)
                .collect()
        };
        let ia = pick(la);
        let ib = pick(lb);
        if ia.is_empty() {
            return Err(Error::EmptyStratum { label, group: 'a' });
        }
        if ib.is_empty() {
            return Err(Error::EmptyStratum { label, group: 'b' });
        }
        Ok(Self {
            group_a: self.group_a.select(&ia),
            group_b: self.group_b.select(&ib),
            labels_a: Some(vec![label; ia.len()]),
            labels_b: Some(vec![label; ib.len()]),
        })
    }

    pub fn pooled(&self) -> Result<FeatureMatrix> {
        self.group_a.stack(&self.group_b)
    }

    pub fn normalized(&self, normalizer: &Normalizer) -> Result<Self> {
        Ok(Self {
            group_a: normalizer.transform(&self.group_a)?,
            group_b: normalizer.transform(&self.group_b)?,
            labels_a: self.labels_a.clone(),
            labels_b: self.labels_b.clone(),
        })
    }
}

/// Per-feature standardization to zero mean and unit population variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
}

impl Normalizer {
    pub fn fit(data: &FeatureMatrix) -> Result<Self> {
        let n = data.rows();
        if n < 2 {
            return Err(Error::BadParams(format!(
                "normalizer needs at least 2 rows, got {n}"
            )));
        }
        let mut means = Vec::with_capacity(data.cols());
        let mut std_devs = Vec::with_capacity(data.cols());
        for (j, col) in data.values().axis_iter(Axis(1)).enumerate() {
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            if !(sd > 1e-12 * mean.abs().max(1.0)) {
                return Err(Error::ConstantFeature(data.names()[j].clone()));
            }
            means.push(mean);
            std_devs.push(sd);
        }
        Ok(Self { means, std_devs })
    }

    /// Fit on the union of both groups.
    pub fn fit_grouped(data: &GroupedDataset) -> Result<Self> {
        Self::fit(&data.pooled()?)
    }

    pub fn dims(&self) -> usize {
        self.means.len()
    }

    fn check(&self, data: &FeatureMatrix) -> Result<()> {
        if data.cols() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: data.cols(),
            });
        }
        Ok(())
    }

    pub fn transform(&self, data: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.check(data)?;
        let mut values = data.values().clone();
        for mut row in values.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.means[j]) / self.std_devs[j];
            }
        }
        data.with_values(values)
    }

    pub fn inverse_transform(&self, data: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.check(data)?;
        let mut values = data.values().clone();
        for mut row in values.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.std_devs[j] + self.means[j];
            }
        }
        data.with_values(values)
    }

    pub fn transform_point(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, v)| (v - self.means[j]) / self.std_devs[j])
            .collect()
    }

    pub fn inverse_point(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(j, v)| v * self.std_devs[j] + self.means[j])
            .collect()
    }
}

/// Cost of moving a point `x` to a point `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CostFunction {
    /// `(sum_j |x_j - y_j|)^2`
    #[default]
    #[serde(rename = "sql1")]
    SquaredL1,
    #[serde(rename = "l1")]
    L1,
    #[serde(rename = "sql2")]
    SquaredL2,
}

impl fmt::Display for CostFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostFunction::SquaredL1 => "sql1",
            CostFunction::L1 => "l1",
            CostFunction::SquaredL2 => "sql2",
        })
    }
}

impl std::str::FromStr for CostFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sql1" => Ok(CostFunction::SquaredL1),
            "l1" => Ok(CostFunction::L1),
            "sql2" => Ok(CostFunction::SquaredL2),
            other => Err(Error::BadParams(format!("unknown cost `{other}`"))),
        }
    }
}

impl CostFunction {
    pub fn cost(self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        Ok(self.eval(x, y))
    }

    /// Unchecked evaluation; callers guarantee equal lengths.
    #[inline]
    pub fn eval(self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match self {
            CostFunction::SquaredL1 => {
                let s: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
                s * s
            }
            CostFunction::L1 => x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum(),
            CostFunction::SquaredL2 => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum(),
        }
    }

    /// Gradient of `c(x, y)` with respect to `y`, written into `out`.
    /// Uses `sign(0) = 0` where the cost is not differentiable.
    pub fn grad_target(self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let sign = |v: f64| {
            if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            }
        };
        match self {
            CostFunction::SquaredL1 => {
                let l1: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
                for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
                    *o = 2.0 * l1 * sign(b - a);
                }
            }
            CostFunction::L1 => {
                for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
                    *o = sign(b - a);
                }
            }
            CostFunction::SquaredL2 => {
                for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
                    *o = 2.0 * (b - a);
                }
            }
        }
    }
}

/// Pairwise costs between the rows of `a` and the rows of `b`.
///
/// Rows are computed in parallel; each entry depends only on its own pair,
/// so the result does not depend on scheduling.
pub fn cost_matrix(c: CostFunction, a: &FeatureMatrix, b: &FeatureMatrix) -> Result<Array2<f64>> {
    if a.cols() != b.cols() {
        return Err(Error::DimensionMismatch {
            expected: a.cols(),
            found: b.cols(),
        });
    }
    let (na, nb) = (a.rows(), b.rows());
    let rows: Vec<Vec<f64>> = (0..na)
        .into_par_iter()
        .map(|i| {
            let x = a.row(i);
            (0..nb).map(|j| c.eval(x, b.row(j))).collect()
        })
        .collect();
    let flat = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((na, nb), flat).expect("shape is na x nb by construction"))
}
