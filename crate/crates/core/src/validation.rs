//! Checks that a trained generator reproduces the target distribution, and
//! the resampling harness comparing how stable exact and learned maps are.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CostFunction, FeatureMatrix, GroupedDataset};
use crate::error::{Error, Result};
use crate::exact::{solve_exact, subsample};
use crate::flip::{compute_flipset, TransportMap};
use crate::linalg;
use crate::neural::{map_points, train, Generator, TrainConfig};
use crate::rng;
use crate::synth::{gen_control_normal, NearestAnchorModel};

/// Two-sample Kolmogorov-Smirnov statistic: the largest gap between the
/// empirical CDFs of `a` and `b`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::BadParams("NaN in sample".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best: f64 = 0.0;
    while i < a.len() && j < b.len() {
        // Step past every copy of the smallest remaining value in both samples.
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(best)
}

/// Ordinary least squares with intercept predicting column `j` of `data`
/// from the other columns. Returns `[intercept, coefficients...]`.
pub fn ols_fit(data: &FeatureMatrix, j: usize) -> Result<Vec<f64>> {
    let d = data.cols();
    if j >= d {
        return Err(Error::DimensionMismatch { expected: d, found: j + 1 });
    }
    if data.rows() < d + 1 {
        return Err(Error::BadParams(format!("OLS needs at least {} rows, got {}", d + 1, data.rows())));
    }
    let predictors: Vec<usize> = (0..d).filter(|&k| k != j).collect();
    let p = predictors.len() + 1;
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    let mut design = vec![0.0; p];
    for i in 0..data.rows() {
        let row = data.row(i);
        design[0] = 1.0;
        for (slot, &k) in design[1..].iter_mut().zip(&predictors) {
            *slot = row[k];
        }
        for r in 0..p {
            xty[r] += design[r] * row[j];
            for c in 0..p {
                xtx[r][c] += design[r] * design[c];
            }
        }
    }
    linalg::solve(&xtx, &xty, 1e-10).ok_or_else(|| Error::SingularDesign {
        target: data.names()[j].clone(),
        predictors: predictors.iter().map(|&k| data.names()[k].clone()).collect(),
    })
}

fn ols_mse(data: &FeatureMatrix, j: usize, beta: &[f64]) -> f64 {
    let predictors: Vec<usize> = (0..data.cols()).filter(|&k| k != j).collect();
    let sse: f64 = (0..data.rows())
        .map(|i| {
            let row = data.row(i);
            let fit = beta[0] + predictors.iter().zip(&beta[1..]).map(|(&k, b)| b * row[k]).sum::<f64>();
            (row[j] - fit).powi(2)
        })
        .sum();
    sse / data.rows() as f64
}

/// MSE on `generated` minus MSE on `real_target` of the regression of
/// feature `j` on the others, fitted to `real_target`. Positive values mean
/// the generated data follows the real relationships less closely.
pub fn mse_diff(real_target: &FeatureMatrix, generated: &FeatureMatrix, j: usize) -> Result<f64> {
    real_target.same_schema(generated)?;
    if generated.is_empty() {
        return Err(Error::EmptySample);
    }
    let beta = ols_fit(real_target, j)?;
    Ok(ols_mse(generated, j, &beta) - ols_mse(real_target, j, &beta))
}

/// Mean exact transport cost on seeded size-`subset` samples of both groups
/// (the full groups when they are no larger), and mean `c(x, G(x))` over the
/// whole source group.
pub fn distance_comparison(
    data: &GroupedDataset,
    gen: &Generator,
    c: CostFunction,
    subset: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let (na, nb) = (data.group_a.rows(), data.group_b.rows());
    let sample = if na == nb && subset >= na {
        data.clone()
    } else {
        let k = subset.min(na).min(nb);
        GroupedDataset::new(
            subsample(&data.group_a, k, rng::derive_seed(seed, "distance-a"))?,
            subsample(&data.group_b, k, rng::derive_seed(seed, "distance-b"))?,
        )?
    };
    let dist_exact = solve_exact(&sample, c)?.mean_cost;

    let mapped = map_points(gen, &data.group_a)?;
    if data.group_a.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let total: f64 = (0..na).map(|i| c.eval(data.group_a.row(i), mapped.row(i))).sum();
    Ok((dist_exact, total / na as f64))
}

/// Per-feature statistics from one comparison of real and generated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationTrial {
    pub ks: Vec<f64>,
    pub mse_diff: Vec<f64>,
}

/// Compare the real target sample with generated points feature by feature.
pub fn validation_trial(real_target: &FeatureMatrix, generated: &FeatureMatrix) -> Result<ValidationTrial> {
    real_target.same_schema(generated)?;
    let d = real_target.cols();
    let ks = (0..d)
        .map(|j| ks_two_sample(&real_target.column(j), &generated.column(j)))
        .collect::<Result<_>>()?;
    let mse_diff = (0..d)
        .map(|j| mse_diff(real_target, generated, j))
        .collect::<Result<_>>()?;
    Ok(ValidationTrial { ks, mse_diff })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub features: Vec<String>,
    pub trials: Vec<ValidationTrial>,
    pub ks_mean: Vec<f64>,
    pub ks_std: Vec<f64>,
    pub mse_diff_mean: Vec<f64>,
    pub mse_diff_std: Vec<f64>,
    pub dist_exact: f64,
    pub dist_gan: f64,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl ValidationReport {
    pub fn from_trials(
        features: Vec<String>,
        trials: Vec<ValidationTrial>,
        dist_exact: f64,
        dist_gan: f64,
    ) -> Result<Self> {
        if trials.is_empty() {
            return Err(Error::EmptySample);
        }
        let d = features.len();
        if trials.iter().any(|t| t.ks.len() != d || t.mse_diff.len() != d) {
            return Err(Error::ShapeMismatch("trial width differs from feature count".into()));
        }
        let summarize = |get: &dyn Fn(&ValidationTrial) -> f64| mean_std(&trials.iter().map(get).collect::<Vec<_>>());
        let ks: Vec<(f64, f64)> = (0..d).map(|j| summarize(&|t| t.ks[j])).collect();
        let mse: Vec<(f64, f64)> = (0..d).map(|j| summarize(&|t| t.mse_diff[j])).collect();
        Ok(Self {
            features,
            trials,
            ks_mean: ks.iter().map(|s| s.0).collect(),
            ks_std: ks.iter().map(|s| s.1).collect(),
            mse_diff_mean: mse.iter().map(|s| s.0).collect(),
            mse_diff_std: mse.iter().map(|s| s.1).collect(),
            dist_exact,
            dist_gan,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityMethod {
    Exact,
    Gan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityResult {
    pub dims: usize,
    pub probe: Vec<f64>,
    pub method: StabilityMethod,
    pub draws: usize,
    pub mean: Vec<f64>,
    /// Population variance of the probe's image across draws.
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub n: usize,
    pub draws: usize,
    pub seed: u64,
    pub cost: CostFunction,
    pub train: TrainConfig,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            n: 500,
            draws: 100,
            seed: 0,
            cost: CostFunction::default(),
            train: TrainConfig::default(),
        }
    }
}

fn normal_sample(rows: usize, d: usize, rng: &mut rng::StreamRng) -> Vec<f64> {
    (0..rows * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Image of `probe` under a map fitted to one fresh standard-normal draw.
fn stability_draw(probe: &[f64], method: StabilityMethod, cfg: &StabilityConfig, draw: usize) -> Result<Vec<f64>> {
    let d = probe.len();
    let mut rng = rng::indexed_substream(cfg.seed, "stability-draw", draw as u64);
    let mut source = probe.to_vec();
    source.extend(normal_sample(cfg.n - 1, d, &mut rng));
    let target = normal_sample(cfg.n, d, &mut rng);
    let data = GroupedDataset::new(
        FeatureMatrix::unnamed(ndarray::Array2::from_shape_vec((cfg.n, d), source).expect("sized"))?,
        FeatureMatrix::unnamed(ndarray::Array2::from_shape_vec((cfg.n, d), target).expect("sized"))?,
    )?;
    match method {
        StabilityMethod::Exact => {
            let map = solve_exact(&data, cfg.cost)?;
            Ok(data.group_b.row(map.assignment[0]).to_vec())
        }
        StabilityMethod::Gan => {
            let train_cfg = TrainConfig {
                seed: rng::derive_seed(cfg.seed ^ (draw as u64).rotate_left(32), "stability-train"),
                ..cfg.train.clone()
            };
            let gen = train(&data, &train_cfg, cfg.cost)?;
            Ok(gen.apply_point(probe))
        }
    }
}

/// Map a fixed probe point across `draws` independent resampled datasets
/// and summarize the spread of its image.
pub fn stability_harness(probe: &[f64], method: StabilityMethod, cfg: &StabilityConfig) -> Result<StabilityResult> {
    let d = probe.len();
    if d == 0 {
        return Err(Error::BadParams("probe must have at least one feature".into()));
    }
    if cfg.n == 0 || cfg.draws == 0 {
        return Err(Error::BadParams("n and draws must be positive".into()));
    }
    let images: Vec<Vec<f64>> = (0..cfg.draws)
        .into_par_iter()
        .map(|k| stability_draw(probe, method, cfg, k))
        .collect::<Result<_>>()?;
    let m = images.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| images.iter().map(|x| x[j]).sum::<f64>() / m).collect();
    let variance = (0..d)
        .map(|j| images.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / m)
        .collect();
    Ok(StabilityResult {
        dims: d,
        probe: probe.to_vec(),
        method,
        draws: cfg.draws,
        mean,
        variance,
    })
}

/// The control setting: two six-dimensional normals differing only in the
/// last three means, a classifier that may only look at the first three.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig {
    pub n: usize,
    pub anchors: usize,
    pub seed: u64,
    pub cost: CostFunction,
    pub train: TrainConfig,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            n: 10_000,
            anchors: 2_000,
            seed: 0,
            cost: CostFunction::default(),
            train: TrainConfig::default(),
        }
    }
}

pub const CONTROL_VISIBLE: [usize; 3] = [0, 1, 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlResult {
    pub positive: usize,
    pub negative: usize,
    /// Source members classified 1 and 0.
    pub classified_positive: usize,
    pub classified_negative: usize,
    /// Mean `|G(x)_j - x_j|` per feature over the source group.
    pub displacement: Vec<f64>,
}

impl ControlResult {
    pub fn positive_fraction(&self) -> f64 {
        self.positive as f64 / self.classified_positive.max(1) as f64
    }

    pub fn negative_fraction(&self) -> f64 {
        self.negative as f64 / self.classified_negative.max(1) as f64
    }
}

/// Build the classifier on one draw, train the generator on a second
/// independent draw and measure flipsets and displacement on it.
pub fn control_experiment(cfg: &ControlConfig) -> Result<(ControlResult, Generator)> {
    let fit = gen_control_normal(cfg.n, rng::derive_seed(cfg.seed, "control-classifier"))?;
    let h = NearestAnchorModel::random_labels(
        &fit.pooled()?,
        cfg.anchors,
        CONTROL_VISIBLE.to_vec(),
        rng::derive_seed(cfg.seed, "control-anchors"),
    )?;
    let test = gen_control_normal(cfg.n, rng::derive_seed(cfg.seed, "control-test"))?;
    let gen = train(&test, &cfg.train, cfg.cost)?;
    let result = control_flipsets(&test, &h, &gen)?;
    Ok((result, gen))
}

pub fn control_flipsets(test: &GroupedDataset, h: &NearestAnchorModel, gen: &Generator) -> Result<ControlResult> {
    let map = TransportMap::Neural(gen.clone());
    let counterparts = map.counterparts(test)?;
    let flips = compute_flipset(h, &test.group_a, &counterparts)?;
    let classified_positive = flips.source_predictions.iter().filter(|&&y| y == 1).count();
    let n = test.group_a.rows() as f64;
    let displacement = (0..test.dims())
        .map(|j| {
            (0..test.group_a.rows())
                .map(|i| (counterparts.points.row(i)[j] - test.group_a.row(i)[j]).abs())
                .sum::<f64>()
                / n
        })
        .collect();
    Ok(ControlResult {
        positive: flips.positive.len(),
        negative: flips.negative.len(),
        classified_positive,
        classified_negative: flips.n_source - classified_positive,
        displacement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Dense, Mlp};
    use ndarray::{Array1, Array2};
    use proptest::prelude::*;

    fn fm(names: &[&str], rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::from_rows(names.iter().map(|s| s.to_string()).collect(), rows).unwrap()
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_two_sample(&[1.0, 5.0, 2.0], &[5.0, 1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!((ks_two_sample(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(ks_two_sample(&[], &[1.0]), Err(Error::EmptySample)));
    }

    // Direct evaluation of both ECDFs at every sample point.
    fn ks_oracle(a: &[f64], b: &[f64]) -> f64 {
        let ecdf = |s: &[f64], t: f64| s.iter().filter(|&&v| v <= t).count() as f64 / s.len() as f64;
        a.iter()
            .chain(b)
            .map(|&t| (ecdf(a, t) - ecdf(b, t)).abs())
            .fold(0.0, f64::max)
    }

    proptest! {
        #[test]
        fn ks_matches_oracle_and_is_symmetric(
            a in prop::collection::vec(-5i32..5, 1..30),
            b in prop::collection::vec(-5i32..5, 1..30),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let ks = ks_two_sample(&a, &b).unwrap();
            prop_assert!((ks - ks_oracle(&a, &b)).abs() < 1e-12);
            prop_assert_eq!(ks, ks_two_sample(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ks));
            let f = |v: &f64| (v / 3.0).exp() + v;
            let fa: Vec<f64> = a.iter().map(f).collect();
            let fb: Vec<f64> = b.iter().map(f).collect();
            prop_assert!((ks_two_sample(&fa, &fb).unwrap() - ks).abs() < 1e-12);
        }

        #[test]
        fn mse_diff_of_data_with_itself_is_zero(rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 6..20)) {
            let x = fm(&["a", "b", "c"], &rows);
            for j in 0..3 {
                match mse_diff(&x, &x, j) {
                    Ok(v) => prop_assert_eq!(v, 0.0),
                    Err(e) => {
                        let singular = matches!(e, Error::SingularDesign { .. });
                        prop_assert!(singular);
                    }
                }
            }
        }
    }

    #[test]
    fn ols_by_hand() {
        // y on x with intercept through (0,1), (1,2), (2,4):
        // slope = Sxy/Sxx = 1.5, intercept = 7/3 - 1.5 = 5/6.
        let real = fm(&["x", "y"], &[vec![0.0, 1.0], vec![1.0, 2.0], vec![2.0, 4.0]]);
        let beta = ols_fit(&real, 1).unwrap();
        assert!((beta[0] - 5.0 / 6.0).abs() < 1e-12);
        assert!((beta[1] - 1.5).abs() < 1e-12);
        // residuals 1/6, -1/3, 1/6 -> MSE 1/18
        let gen = fm(&["x", "y"], &[vec![0.0, 0.0], vec![2.0, 5.0]]);
        // residuals -5/6, 7/6 -> MSE (25/36 + 49/36)/2 = 37/36
        let diff = mse_diff(&real, &gen, 1).unwrap();
        assert!((diff - (37.0 / 36.0 - 1.0 / 18.0)).abs() < 1e-12);
    }

    #[test]
    fn exactly_linear_feature_has_zero_diff() {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| {
            let (a, b) = (i as f64, ((i * 7) % 5) as f64);
            vec![a, b, a + b]
        }).collect();
        let x = fm(&["a", "b", "s"], &rows);
        let g = fm(&["a", "b", "s"], &rows[2..6]);
        assert!(mse_diff(&x, &g, 2).unwrap().abs() < 1e-12);
    }

    #[test]
    fn collinear_predictors_are_singular() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, 2.0 * i as f64, (i * i) as f64]).collect();
        let x = fm(&["a", "b", "c"], &rows);
        match mse_diff(&x, &x, 2) {
            Err(Error::SingularDesign { target, predictors }) => {
                assert_eq!(target, "c");
                assert_eq!(predictors, vec!["a", "b"]);
            }
            other => panic!("{other:?}"),
        }
    }

    fn identity_generator(d: usize) -> Generator {
        // relu(x) - relu(-x) = x
        let mut w1 = Array2::zeros((d, 2 * d));
        let mut w2 = Array2::zeros((2 * d, d));
        for j in 0..d {
            w1[[j, j]] = 1.0;
            w1[[j, d + j]] = -1.0;
            w2[[j, j]] = 1.0;
            w2[[d + j, j]] = -1.0;
        }
        let net = Mlp::from_layers(vec![
            Dense { weights: w1, bias: Array1::zeros(2 * d) },
            Dense { weights: w2, bias: Array1::zeros(d) },
        ])
        .unwrap();
        Generator::new(net).unwrap()
    }

    #[test]
    fn distance_comparison_definitions() {
        let a = fm(&["x", "y"], &[vec![0.0, 0.0], vec![1.0, 3.0], vec![2.0, -1.0]]);
        let b = fm(&["x", "y"], &[vec![1.0, 1.0], vec![0.0, 2.0], vec![5.0, 0.0]]);
        let data = GroupedDataset::new(a.clone(), b).unwrap();
        let g = identity_generator(2);
        let (exact, gan) = distance_comparison(&data, &g, CostFunction::SquaredL1, 3, 0).unwrap();
        assert_eq!(gan, 0.0);
        assert_eq!(exact, solve_exact(&data, CostFunction::SquaredL1).unwrap().mean_cost);
        let same = GroupedDataset::new(a.clone(), a).unwrap();
        assert_eq!(distance_comparison(&same, &g, CostFunction::SquaredL1, 3, 0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn report_statistics() {
        let trials = vec![
            ValidationTrial { ks: vec![0.1], mse_diff: vec![1.0] },
            ValidationTrial { ks: vec![0.3], mse_diff: vec![-1.0] },
        ];
        let r = ValidationReport::from_trials(vec!["x".into()], trials, 2.0, 1.5).unwrap();
        assert!((r.ks_mean[0] - 0.2).abs() < 1e-15);
        assert!((r.ks_std[0] - 0.02f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.mse_diff_mean[0], 0.0);
        assert!((r.mse_diff_std[0] - 2f64.sqrt()).abs() < 1e-15);
        assert!(ValidationReport::from_trials(vec!["x".into()], vec![], 0.0, 0.0).is_err());
    }

    #[test]
    fn single_draw_has_zero_variance() {
        let cfg = StabilityConfig { n: 20, draws: 1, ..Default::default() };
        let r = stability_harness(&[0.0, 0.0], StabilityMethod::Exact, &cfg).unwrap();
        assert_eq!(r.variance, vec![0.0, 0.0]);
    }

    #[test]
    fn stability_is_deterministic() {
        let cfg = StabilityConfig { n: 30, draws: 6, seed: 4, ..Default::default() };
        let a = stability_harness(&[1.0, 1.0, 1.0], StabilityMethod::Exact, &cfg).unwrap();
        let b = stability_harness(&[1.0, 1.0, 1.0], StabilityMethod::Exact, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.variance.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn control_flipsets_with_identity_generator() {
        let test = gen_control_normal(200, 0).unwrap();
        let h = NearestAnchorModel::random_labels(&test.pooled().unwrap(), 50, CONTROL_VISIBLE.to_vec(), 1).unwrap();
        let r = control_flipsets(&test, &h, &identity_generator(6)).unwrap();
        assert_eq!((r.positive, r.negative), (0, 0));
        assert_eq!(r.classified_positive + r.classified_negative, 200);
        assert_eq!(r.displacement, vec![0.0; 6]);
    }
}
