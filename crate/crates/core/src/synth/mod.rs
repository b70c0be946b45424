//! Synthetic experimental subjects: data generators and a small zoo of
//! classifiers to audit.
//!
//! Generated datasets number rows `0..n` for the source group and
//! `n..2n` for the target group, matching the order in which they are
//! written to CSV.

mod models;

pub use models::*;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Beta, Distribution, Geometric, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, GroupedDataset};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, StreamRng};

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::BadParams("n_per_group must be >= 1".into()));
    }
    Ok(())
}

fn assemble(names: &[&str], a: Vec<f64>, b: Vec<f64>, n: usize) -> Result<GroupedDataset> {
    let d = names.len();
    let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    let to_matrix = |v: Vec<f64>| Array2::from_shape_vec((n, d), v).expect("n x d samples");
    let group_a = FeatureMatrix::with_row_ids(names.clone(), to_matrix(a), (0..n).collect())?;
    let group_b = FeatureMatrix::with_row_ids(names, to_matrix(b), (n..2 * n).collect())?;
    GroupedDataset::new(group_a, group_b)
}

/// Parameters of the two-feature hiring population.
///
/// Work experience is `Poisson(rate) - Normal(offset_mean, offset_sd)` and
/// hair length is `scale * Beta(alpha, beta)`, with per-gender rates and
/// shapes. The defaults give women longer hair and less work experience
/// than men on average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiringParams {
    pub work_rate_women: f64,
    pub work_rate_men: f64,
    pub work_offset_mean: f64,
    pub work_offset_sd: f64,
    pub hair_scale: f64,
    pub hair_shape_women: (f64, f64),
    pub hair_shape_men: (f64, f64),
}

impl Default for HiringParams {
    fn default() -> Self {
        Self {
            work_rate_women: 25.0,
            work_rate_men: 31.0,
            work_offset_mean: 20.0,
            work_offset_sd: 0.2,
            hair_scale: 35.0,
            hair_shape_women: (2.0, 2.0),
            hair_shape_men: (2.0, 5.0),
        }
    }
}

pub const HIRING_FEATURES: [&str; 2] = ["work_exp", "hair_len"];

/// Women (source) and men (target), features `work_exp, hair_len`.
pub fn gen_two_feature_hiring(n: usize, seed: u64) -> Result<GroupedDataset> {
    gen_two_feature_hiring_with(n, seed, &HiringParams::default())
}

pub fn gen_two_feature_hiring_with(n: usize, seed: u64, p: &HiringParams) -> Result<GroupedDataset> {
    check_n(n)?;
    let bad = |what: &str| Error::BadParams(format!("hiring: {what}"));
    let offset = Normal::new(p.work_offset_mean, p.work_offset_sd).map_err(|_| bad("offset sd"))?;
    if !(p.hair_scale > 0.0) {
        return Err(bad("hair_scale must be positive"));
    }
    let mut rng = rng::substream(seed, "synth-hiring");
    let draw = |rate: f64, shape: (f64, f64), rng: &mut StreamRng| -> Result<Vec<f64>> {
        let work = Poisson::new(rate).map_err(|_| bad("work rate"))?;
        let hair = Beta::new(shape.0, shape.1).map_err(|_| bad("hair shape"))?;
        let mut out = Vec::with_capacity(2 * n);
        for _ in 0..n {
            let w: f64 = work.sample(rng) - offset.sample(rng);
            let h: f64 = p.hair_scale * hair.sample(rng);
            out.push(w);
            out.push(h);
        }
        Ok(out)
    };
    let women = draw(p.work_rate_women, p.hair_shape_women, &mut rng)?;
    let men = draw(p.work_rate_men, p.hair_shape_men, &mut rng)?;
    assemble(&HIRING_FEATURES, women, men, n)
}

/// One feature, `arrests`: `Geometric(1/4) - 1` in the source group and
/// `Geometric(1/2) - 1` in the target group.
pub fn gen_geometric_arrests(n: usize, seed: u64) -> Result<GroupedDataset> {
    check_n(n)?;
    let mut rng = rng::substream(seed, "synth-geometric");
    // rand_distr's Geometric counts failures before the first success,
    // i.e. it is already shifted down by one.
    let ga = Geometric::new(0.25).expect("valid p");
    let gb = Geometric::new(0.5).expect("valid p");
    let a: Vec<f64> = (0..n).map(|_| ga.sample(&mut rng) as f64).collect();
    let b: Vec<f64> = (0..n).map(|_| gb.sample(&mut rng) as f64).collect();
    assemble(&["arrests"], a, b, n)
}

pub const CONTROL_FEATURES: [&str; 6] = ["f0", "f1", "f2", "f3", "f4", "f5"];

/// Six independent unit normals; means `(0,0,0,1,1,1)` in the source group
/// and `(0,0,0,-1,-1,-1)` in the target group.
pub fn gen_control_normal(n: usize, seed: u64) -> Result<GroupedDataset> {
    check_n(n)?;
    let mean_a = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
    let mean_b = [0.0, 0.0, 0.0, -1.0, -1.0, -1.0];
    let mut rng = rng::substream(seed, "synth-control");
    let mut draw = |mean: &[f64; 6]| -> Vec<f64> {
        (0..n)
            .flat_map(|_| mean.to_vec())
            .map(|m| m + rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let a = draw(&mean_a);
    let b = draw(&mean_b);
    assemble(&CONTROL_FEATURES, a, b, n)
}

/// Multivariate normals with per-group means and a shared covariance.
pub fn gen_gaussian(
    mean_a: &[f64],
    mean_b: &[f64],
    cov: &[Vec<f64>],
    n: usize,
    seed: u64,
) -> Result<GroupedDataset> {
    check_n(n)?;
    let d = mean_a.len();
    if d == 0 || mean_b.len() != d || cov.len() != d {
        return Err(Error::BadParams("gaussian: means and covariance must share a dimension".into()));
    }
    let l = linalg::cholesky(cov)
        .ok_or_else(|| Error::BadParams("gaussian: covariance is not positive definite".into()))?;
    let mut rng = rng::substream(seed, "synth-gaussian");
    let mut draw = |mean: &[f64]| -> Vec<f64> {
        let mut out = Vec::with_capacity(n * d);
        for _ in 0..n {
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            for i in 0..d {
                out.push(mean[i] + (0..=i).map(|k| l[i][k] * z[k]).sum::<f64>());
            }
        }
        out
    };
    let a = draw(mean_a);
    let b = draw(mean_b);
    let names: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    assemble(&refs, a, b, n)
}

/// Eight-feature schema used by the policing-score models, in column order.
pub const SSL_FEATURES: [&str; 8] = [
    "victim_shooting",
    "age",
    "victim_assault",
    "violent_arrests",
    "gang_affiliation",
    "narcotics_arrests",
    "trend_activity",
    "weapon_arrests",
];

/// Stand-in data on the eight-feature schema: correlated normals with a
/// group shift concentrated on narcotics arrests, victimization and age.
/// Only meant for exercising calibration and the audit pipeline.
pub fn gen_ssl_standin(n: usize, seed: u64) -> Result<GroupedDataset> {
    let d = SSL_FEATURES.len();
    let mut cov = vec![vec![0.0; d]; d];
    for (i, row) in cov.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = if i == j { 1.0 } else { 0.15 };
        }
    }
    let mean_a = [0.3, -0.3, 0.3, 0.1, 0.2, 0.4, 0.0, 0.1];
    let mean_b = [0.0; 8];
    let data = gen_gaussian(&mean_a, &mean_b, &cov, n, seed)?;
    let names: Vec<String> = SSL_FEATURES.iter().map(|s| s.to_string()).collect();
    GroupedDataset::new(
        FeatureMatrix::with_row_ids(names.clone(), data.group_a.values().clone(), data.group_a.row_ids().to_vec())?,
        FeatureMatrix::with_row_ids(names, data.group_b.values().clone(), data.group_b.row_ids().to_vec())?,
    )
}

/// Declarative description of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthKind {
    TwoFeatureHiring(HiringParams),
    GeometricArrests,
    ControlNormal,
    Gaussian {
        mean_a: Vec<f64>,
        mean_b: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: SynthKind,
    pub n_per_group: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<GroupedDataset> {
        let (n, seed) = (self.n_per_group, self.seed);
        match &self.kind {
            SynthKind::TwoFeatureHiring(p) => gen_two_feature_hiring_with(n, seed, p),
            SynthKind::GeometricArrests => gen_geometric_arrests(n, seed),
            SynthKind::ControlNormal => gen_control_normal(n, seed),
            SynthKind::Gaussian { mean_a, mean_b, cov } => gen_gaussian(mean_a, mean_b, cov, n, seed),
        }
    }
}
