use std::collections::HashMap;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::flip::{Classifier, PointKey};
use crate::rng;

use super::{HIRING_FEATURES, SSL_FEATURES};

/// `h(x) = 1` iff `w . x > t`; ties classify as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearThresholdModel {
    pub weights: Vec<f64>,
    pub threshold: f64,
}

impl LinearThresholdModel {
    pub fn new(weights: Vec<f64>, threshold: f64) -> Self {
        Self { weights, threshold }
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum()
    }

    /// Weights fixed, threshold chosen so that a fraction `rate` of `data`
    /// scores strictly above it.
    pub fn calibrated(weights: Vec<f64>, data: &FeatureMatrix, rate: f64) -> Result<Self> {
        if data.cols() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: weights.len(),
                found: data.cols(),
            });
        }
        let model = Self::new(weights, 0.0);
        let scores: Vec<f64> = (0..data.rows()).map(|i| model.score(data.row(i))).collect();
        let threshold = calibrate_threshold(&scores, rate)?;
        Ok(Self { threshold, ..model })
    }
}

/// Threshold `t` such that `round(rate * n)` of `scores` lie strictly above it
/// (exactly, when scores are distinct).
pub fn calibrate_threshold(scores: &[f64], rate: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::BadParams(format!("rate {rate} outside [0, 1]")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let k = (rate * sorted.len() as f64).round() as usize;
    Ok(if k == 0 {
        sorted[0]
    } else if k >= sorted.len() {
        sorted[sorted.len() - 1] - 1.0
    } else {
        sorted[k]
    })
}

impl Classifier for LinearThresholdModel {
    fn predict(&self, x: &[f64], _key: PointKey) -> Result<u8> {
        if x.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                found: x.len(),
            });
        }
        Ok(u8::from(self.score(x) > self.threshold))
    }
}

/// Risk rule on a prior-arrest count: none is low risk, two or more is high
/// risk, exactly one is a fair coin fixed per individual.
///
/// Real-valued inputs (e.g. generator outputs) are read as the nearest
/// count: below 0.5 is zero, 1.5 and above is two or more.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrestsModel {
    pub seed: u64,
    pub feature: usize,
}

impl ArrestsModel {
    pub fn new(seed: u64) -> Self {
        Self { seed, feature: 0 }
    }

    fn coin_key(key: PointKey) -> u64 {
        match key {
            PointKey::Row(id) => (id as u64) << 1,
            PointKey::Counterpart(id) => ((id as u64) << 1) | 1,
        }
    }
}

impl Classifier for ArrestsModel {
    fn predict(&self, x: &[f64], key: PointKey) -> Result<u8> {
        let v = *x.get(self.feature).ok_or(Error::DimensionMismatch {
            expected: self.feature + 1,
            found: x.len(),
        })?;
        Ok(if v < 0.5 {
            0
        } else if v >= 1.5 {
            1
        } else {
            u8::from(rng::keyed_coin(self.seed, Self::coin_key(key)))
        })
    }
}

/// Stored black-box predictions, keyed by row identifier.
///
/// CSV columns: `row,prediction` and optionally `counterpart_prediction`,
/// the prediction for the generated counterpart of that row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionsFileModel {
    rows: HashMap<usize, u8>,
    counterparts: HashMap<usize, u8>,
}

impl PredictionsFileModel {
    pub fn new(rows: HashMap<usize, u8>, counterparts: HashMap<usize, u8>) -> Self {
        Self { rows, counterparts }
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        Self::from_reader(&mut reader)
    }

    pub fn from_reader<R: std::io::Read>(reader: &mut csv::Reader<R>) -> Result<Self> {
        let headers = reader.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let row_col = col("row").ok_or_else(|| Error::SchemaMismatch("predictions need a `row` column".into()))?;
        let pred_col = col("prediction")
            .ok_or_else(|| Error::SchemaMismatch("predictions need a `prediction` column".into()))?;
        let cp_col = col("counterpart_prediction");
        let parse_label = |s: &str, line: usize| -> Result<u8> {
            match s.trim() {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(Error::SchemaMismatch(format!(
                    "prediction `{other}` on line {line} is not 0/1"
                ))),
            }
        };
        let mut model = Self::default();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let row: usize = record[row_col]
                .trim()
                .parse()
                .map_err(|_| Error::SchemaMismatch(format!("bad row index on line {}", line + 2)))?;
            model.rows.insert(row, parse_label(&record[pred_col], line + 2)?);
            if let Some(c) = cp_col {
                if !record[c].trim().is_empty() {
                    model.counterparts.insert(row, parse_label(&record[c], line + 2)?);
                }
            }
        }
        Ok(model)
    }
}

impl Classifier for PredictionsFileModel {
    fn predict(&self, _x: &[f64], key: PointKey) -> Result<u8> {
        let found = match key {
            PointKey::Row(id) => self.rows.get(&id),
            PointKey::Counterpart(id) => self.counterparts.get(&id),
        };
        found
            .copied()
            .ok_or_else(|| Error::MissingPrediction(format!("{key:?}")))
    }
}

/// One-nearest-neighbour lookup over anchors carrying random labels,
/// restricted to a subset of features. An arbitrary, highly irregular
/// decision boundary with chance-level accuracy on fresh data.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestAnchorModel {
    anchors: Vec<Vec<f64>>,
    labels: Vec<u8>,
    features: Vec<usize>,
}

impl NearestAnchorModel {
    pub fn random_labels(train: &FeatureMatrix, anchors: usize, features: Vec<usize>, seed: u64) -> Result<Self> {
        if anchors == 0 {
            return Err(Error::BadParams("at least one anchor is required".into()));
        }
        if let Some(&j) = features.iter().find(|&&j| j >= train.cols()) {
            return Err(Error::DimensionMismatch {
                expected: train.cols(),
                found: j + 1,
            });
        }
        if anchors > train.rows() {
            return Err(Error::KTooLarge {
                k: anchors,
                n: train.rows(),
            });
        }
        let mut rng = rng::substream(seed, "classifier");
        let picks = index::sample(&mut rng, train.rows(), anchors).into_vec();
        let anchors = picks
            .iter()
            .map(|&i| features.iter().map(|&j| train.row(i)[j]).collect())
            .collect();
        let labels = (0..picks.len()).map(|_| u8::from(rng.random::<bool>())).collect();
        Ok(Self {
            anchors,
            labels,
            features,
        })
    }
}

impl Classifier for NearestAnchorModel {
    fn predict(&self, x: &[f64], _key: PointKey) -> Result<u8> {
        let mut best = f64::INFINITY;
        let mut label = 0;
        for (anchor, &y) in self.anchors.iter().zip(&self.labels) {
            let mut d2 = 0.0;
            for (a, &j) in anchor.iter().zip(&self.features) {
                let v = x.get(j).ok_or(Error::DimensionMismatch {
                    expected: j + 1,
                    found: x.len(),
                })?;
                d2 += (a - v) * (a - v);
            }
            if d2 < best {
                best = d2;
                label = y;
            }
        }
        Ok(label)
    }
}

/// Full-batch gradient descent on the mean logistic loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticTrainer {
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for LogisticTrainer {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            iterations: 2_000,
            seed: 0,
        }
    }
}

fn log_loss(x: &FeatureMatrix, y: &[u8], w: &[f64], b: f64) -> f64 {
    let n = x.rows() as f64;
    (0..x.rows())
        .map(|i| {
            let z: f64 = b + w.iter().zip(x.row(i)).map(|(a, v)| a * v).sum::<f64>();
            // log(1 + e^z) - y z, computed stably
            let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            softplus - f64::from(y[i]) * z
        })
        .sum::<f64>()
        / n
}

impl LogisticTrainer {
    /// Returns the model and the loss after every iteration (index 0 is the
    /// initial loss). A step that would increase the loss is retried with a
    /// halved learning rate, so the history is non-increasing.
    pub fn fit_with_history(&self, data: &FeatureMatrix, labels: &[u8]) -> Result<(LinearThresholdModel, Vec<f64>)> {
        let (n, d) = (data.rows(), data.cols());
        if labels.len() != n {
            return Err(Error::ShapeMismatch(format!("{} labels for {n} rows", labels.len())));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::BadParams("labels must be 0 or 1".into()));
        }
        if n < d + 1 {
            return Err(Error::BadParams(format!("need at least {} rows, got {n}", d + 1)));
        }
        let mut rng = rng::substream(self.seed, "logistic-init");
        let mut w: Vec<f64> = (0..d).map(|_| rng.random_range(-1e-3..1e-3)).collect();
        let mut b = 0.0;
        let mut lr = self.learning_rate;
        let mut loss = log_loss(data, labels, &w, b);
        let mut history = vec![loss];

        for _ in 0..self.iterations {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for i in 0..n {
                let x = data.row(i);
                let z: f64 = b + w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
                let r = 1.0 / (1.0 + (-z).exp()) - f64::from(labels[i]);
                gb += r;
                for (g, v) in gw.iter_mut().zip(x) {
                    *g += r * v;
                }
            }
            gw.iter_mut().for_each(|g| *g /= n as f64);
            gb /= n as f64;

            loop {
                let w_new: Vec<f64> = w.iter().zip(&gw).map(|(a, g)| a - lr * g).collect();
                let b_new = b - lr * gb;
                let new_loss = log_loss(data, labels, &w_new, b_new);
                if !new_loss.is_finite() {
                    return Err(Error::Diverged(format!("logistic loss became {new_loss}")));
                }
                if new_loss <= loss {
                    w = w_new;
                    b = b_new;
                    loss = new_loss;
                    break;
                }
                lr *= 0.5;
                if lr < 1e-12 {
                    break;
                }
            }
            history.push(loss);
        }
        Ok((LinearThresholdModel::new(w, -b), history))
    }

    pub fn fit(&self, data: &FeatureMatrix, labels: &[u8]) -> Result<LinearThresholdModel> {
        Ok(self.fit_with_history(data, labels)?.0)
    }
}

pub fn train_logistic(data: &FeatureMatrix, labels: &[u8], cfg: &LogisticTrainer) -> Result<LinearThresholdModel> {
    cfg.fit(data, labels)
}

/// The two deliberately biased policing-score models.
#[derive(Debug, Clone, PartialEq)]
pub struct SslModels {
    /// `-53 age + 25 narcotics_arrests > 65`.
    pub age_narc: LinearThresholdModel,
    /// Weights on age, both victimization counts and narcotics arrests,
    /// threshold calibrated to a 10% positive rate.
    pub multi_feature: LinearThresholdModel,
}

pub const SSL_POSITIVE_RATE: f64 = 0.10;

/// Build both models for normalized data on the [`SSL_FEATURES`] schema;
/// `calibration` fixes the multi-feature threshold.
pub fn ssl_style_models(calibration: &FeatureMatrix) -> Result<SslModels> {
    if calibration.names().iter().map(String::as_str).ne(SSL_FEATURES.iter().copied()) {
        return Err(Error::SchemaMismatch(format!(
            "expected columns {SSL_FEATURES:?}, found {:?}",
            calibration.names()
        )));
    }
    let idx = |name: &str| SSL_FEATURES.iter().position(|f| *f == name).expect("known feature");
    let mut w = vec![0.0; SSL_FEATURES.len()];
    w[idx("age")] = -53.0;
    w[idx("narcotics_arrests")] = 25.0;
    let age_narc = LinearThresholdModel::new(w, 65.0);

    let mut w = vec![0.0; SSL_FEATURES.len()];
    w[idx("age")] = 50.0;
    w[idx("victim_shooting")] = 20.0;
    w[idx("victim_assault")] = 20.0;
    w[idx("narcotics_arrests")] = 20.0;
    let multi_feature = LinearThresholdModel::calibrated(w, calibration, SSL_POSITIVE_RATE)?;
    Ok(SslModels { age_narc, multi_feature })
}

pub const HIRING_WEIGHTS: (f64, f64) = (1.4, 1.2);
pub const HIRING_RATE_MEN: f64 = 0.27;

/// The group-fair hiring model: `1.4 hair_len + 1.2 work_exp` on normalized
/// features, threshold set so that 27% of `men` are hired.
pub fn fair_hiring_model(men: &FeatureMatrix) -> Result<LinearThresholdModel> {
    if men.names().iter().map(String::as_str).ne(HIRING_FEATURES.iter().copied()) {
        return Err(Error::SchemaMismatch(format!(
            "expected columns {HIRING_FEATURES:?}, found {:?}",
            men.names()
        )));
    }
    let (w_hair, w_work) = HIRING_WEIGHTS;
    LinearThresholdModel::calibrated(vec![w_work, w_hair], men, HIRING_RATE_MEN)
}
