//! Classifiers selectable from the command line.

use std::path::PathBuf;

use anyhow::{Context, Result};
use fliptest_core::flip::{Classifier, PointKey};
use fliptest_core::rng;
use fliptest_core::synth::{
    fair_hiring_model, ssl_style_models, ArrestsModel, LinearThresholdModel, PredictionsFileModel,
};
use fliptest_core::{GroupedDataset, Normalizer};

use crate::config_error;

/// Parsed `--classifier` value.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierSpec {
    /// Fixed-weight hiring model on standardized features.
    HiringFair,
    SslAgeNarc,
    SslMulti,
    Arrests,
    /// `linear:w1,w2,...:t` on raw features.
    Linear(Vec<f64>, f64),
    /// `predictions:PATH`.
    Predictions(PathBuf),
}

impl std::str::FromStr for ClassifierSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hiring-fair" => return Ok(Self::HiringFair),
            "ssl-age-narc" => return Ok(Self::SslAgeNarc),
            "ssl-multi" => return Ok(Self::SslMulti),
            "arrests" => return Ok(Self::Arrests),
            _ => {}
        }
        if let Some(path) = s.strip_prefix("predictions:") {
            return Ok(Self::Predictions(PathBuf::from(path)));
        }
        if let Some(rest) = s.strip_prefix("linear:") {
            let (w, t) = rest
                .rsplit_once(':')
                .ok_or("expected linear:w1,w2,...:threshold")?;
            let weights = w
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad weight `{v}`")))
                .collect::<Result<Vec<_>, _>>()?;
            let t = t.trim().parse().map_err(|_| format!("bad threshold `{t}`"))?;
            return Ok(Self::Linear(weights, t));
        }
        Err(format!(
            "unknown classifier `{s}`; expected hiring-fair, ssl-age-narc, ssl-multi, arrests, linear:W:T or predictions:PATH"
        ))
    }
}

impl std::fmt::Display for ClassifierSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::HiringFair => f.write_str("hiring-fair"),
            Self::SslAgeNarc => f.write_str("ssl-age-narc"),
            Self::SslMulti => f.write_str("ssl-multi"),
            Self::Arrests => f.write_str("arrests"),
            Self::Linear(w, t) => {
                let w: Vec<String> = w.iter().map(f64::to_string).collect();
                write!(f, "linear:{}:{t}", w.join(","))
            }
            Self::Predictions(p) => write!(f, "predictions:{}", p.display()),
        }
    }
}

impl serde::Serialize for ClassifierSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Applies a model defined on standardized features to raw points.
struct Standardized<C> {
    norm: Normalizer,
    inner: C,
}

impl<C: Classifier> Classifier for Standardized<C> {
    fn predict(&self, x: &[f64], key: PointKey) -> fliptest_core::Result<u8> {
        self.inner.predict(&self.norm.transform_point(x), key)
    }
}

/// Build the classifier. Models defined on standardized features use the
/// statistics of the pooled dataset, and any calibration runs on it too.
pub fn build(spec: &ClassifierSpec, data: &GroupedDataset, seed: u64) -> Result<Box<dyn Classifier + Send + Sync>> {
    let standardized = || -> Result<(Normalizer, GroupedDataset)> {
        let norm = Normalizer::fit_grouped(data)?;
        let scaled = data.normalized(&norm)?;
        Ok((norm, scaled))
    };
    Ok(match spec {
        ClassifierSpec::HiringFair => {
            let (norm, scaled) = standardized()?;
            let inner = fair_hiring_model(&scaled.group_b)?;
            Box::new(Standardized { norm, inner })
        }
        ClassifierSpec::SslAgeNarc | ClassifierSpec::SslMulti => {
            let (norm, scaled) = standardized()?;
            let models = ssl_style_models(&scaled.pooled()?)?;
            let inner = if *spec == ClassifierSpec::SslAgeNarc {
                models.age_narc
            } else {
                models.multi_feature
            };
            Box::new(Standardized { norm, inner })
        }
        ClassifierSpec::Arrests => {
            if data.dims() != 1 {
                return Err(config_error(format!(
                    "classifier arrests expects one feature, data has {}",
                    data.dims()
                )));
            }
            Box::new(ArrestsModel::new(rng::derive_seed(seed, "classifier")))
        }
        ClassifierSpec::Linear(w, t) => {
            if w.len() != data.dims() {
                return Err(config_error(format!(
                    "classifier has {} weights, data has {} features",
                    w.len(),
                    data.dims()
                )));
            }
            Box::new(LinearThresholdModel::new(w.clone(), *t))
        }
        ClassifierSpec::Predictions(path) => Box::new(
            PredictionsFileModel::from_csv_path(path)
                .with_context(|| format!("loading predictions from {}", path.display()))?,
        ),
    })
}
