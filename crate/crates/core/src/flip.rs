//! Flipsets and transparency reports.
//!
//! A member `x` of the source group is in the positive flipset when the
//! classifier accepts `x` but rejects its counterpart `G(x)`, and in the
//! negative flipset in the opposite case.

use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, GroupedDataset, Normalizer};
use crate::error::{Error, Result};
use crate::exact::ExactMap;
use crate::neural::{map_points, Generator};

/// Identifies a point handed to a classifier.
///
/// Black-box classifiers may be randomized per individual or backed by a
/// table of stored predictions, so they are told which individual a point
/// belongs to, not just its feature values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointKey {
    /// An observed row, by its identifier.
    Row(usize),
    /// The synthetic counterpart `G(x)` of the observed row with this identifier.
    Counterpart(usize),
}

/// A binary classifier `h: X -> {0, 1}`.
pub trait Classifier: Sync {
    fn predict(&self, x: &[f64], key: PointKey) -> Result<u8>;
}

impl<C: Classifier + ?Sized> Classifier for &C {
    fn predict(&self, x: &[f64], key: PointKey) -> Result<u8> {
        (**self).predict(x, key)
    }
}

impl<C: Classifier + ?Sized + Send> Classifier for Box<C> {
    fn predict(&self, x: &[f64], key: PointKey) -> Result<u8> {
        (**self).predict(x, key)
    }
}

/// Maps the source group onto the target group.
#[derive(Debug, Clone, PartialEq)]
pub enum TransportMap {
    Identity,
    Exact(ExactMap),
    Neural(Generator),
    /// A generator trained on normalized features, applied to raw points.
    NormalizedNeural(Generator, Normalizer),
}

/// Images of the source rows under a transport map.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterparts {
    /// Row `i` is the counterpart of source row `i`.
    pub points: FeatureMatrix,
    pub keys: Vec<PointKey>,
}

impl TransportMap {
    pub fn counterparts(&self, data: &GroupedDataset) -> Result<Counterparts> {
        let source = &data.group_a;
        match self {
            TransportMap::Identity => Ok(Counterparts {
                points: source.clone(),
                keys: source.row_ids().iter().map(|&id| PointKey::Row(id)).collect(),
            }),
            TransportMap::Exact(map) => {
                if map.assignment.len() != source.rows() || data.group_b.rows() != source.rows() {
                    return Err(Error::ShapeMismatch(format!(
                        "exact map over {} points applied to groups of {} and {}",
                        map.assignment.len(),
                        source.rows(),
                        data.group_b.rows()
                    )));
                }
                let points = data.group_b.select(&map.assignment);
                let keys = points.row_ids().iter().map(|&id| PointKey::Row(id)).collect();
                Ok(Counterparts { points, keys })
            }
            TransportMap::Neural(gen) => Ok(generated(map_points(gen, source)?, source)),
            TransportMap::NormalizedNeural(gen, norm) => {
                let mapped = map_points(gen, &norm.transform(source)?)?;
                Ok(generated(norm.inverse_transform(&mapped)?, source))
            }
        }
    }
}

fn generated(points: FeatureMatrix, source: &FeatureMatrix) -> Counterparts {
    let keys = source
        .row_ids()
        .iter()
        .map(|&id| PointKey::Counterpart(id))
        .collect();
    Counterparts { points, keys }
}

fn predict_all<C: Classifier + ?Sized>(h: &C, points: &FeatureMatrix, keys: &[PointKey]) -> Result<Vec<u8>> {
    (0..points.rows())
        .map(|i| {
            let y = h.predict(points.row(i), keys[i])?;
            if y > 1 {
                return Err(Error::BadParams(format!("classifier returned {y}")));
            }
            Ok(y)
        })
        .collect()
}

fn row_keys(m: &FeatureMatrix) -> Vec<PointKey> {
    m.row_ids().iter().map(|&id| PointKey::Row(id)).collect()
}

/// Source positions whose classification changes under the map.
#[derive(Debug, Clone, PartialEq)]
pub struct Flipset {
    /// `h(x) = 1` and `h(G(x)) = 0`.
    pub positive: Vec<usize>,
    /// `h(x) = 0` and `h(G(x)) = 1`.
    pub negative: Vec<usize>,
    pub n_source: usize,
    pub counterparts: Counterparts,
    pub source_predictions: Vec<u8>,
    pub counterpart_predictions: Vec<u8>,
}

impl Flipset {
    pub fn agreements(&self) -> usize {
        self.n_source - self.positive.len() - self.negative.len()
    }
}

pub fn compute_flipset<C: Classifier + ?Sized>(
    h: &C,
    source: &FeatureMatrix,
    counterparts: &Counterparts,
) -> Result<Flipset> {
    let mapped = &counterparts.points;
    if mapped.rows() != source.rows() || mapped.cols() != source.cols() {
        return Err(Error::ShapeMismatch(format!(
            "source is {}x{}, counterparts are {}x{}",
            source.rows(),
            source.cols(),
            mapped.rows(),
            mapped.cols()
        )));
    }
    if counterparts.keys.len() != mapped.rows() {
        return Err(Error::ShapeMismatch("one key per counterpart row is required".into()));
    }
    let hx = predict_all(h, source, &row_keys(source))?;
    let hg = predict_all(h, mapped, &counterparts.keys)?;
    let mut positive = Vec::new();
    let mut negative = Vec::new();
    for (i, (&a, &b)) in hx.iter().zip(&hg).enumerate() {
        match (a, b) {
            (1, 0) => positive.push(i),
            (0, 1) => negative.push(i),
            _ => {}
        }
    }
    Ok(Flipset {
        positive,
        negative,
        n_source: source.rows(),
        counterparts: counterparts.clone(),
        source_predictions: hx,
        counterpart_predictions: hg,
    })
}

/// Per-feature summaries of how flipset members differ from their
/// counterparts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransparencyReport {
    pub features: Vec<String>,
    /// Mean of `x - G(x)`.
    pub mean_diff: Vec<f64>,
    /// Mean of `sign(x - G(x))`, with `sign(0) = 0`.
    pub mean_sign: Vec<f64>,
    pub ranking_by_diff: Vec<String>,
    pub ranking_by_sign: Vec<String>,
    pub size: usize,
}

fn rank(features: &[String], values: &[f64]) -> Vec<String> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    // Stable: equal magnitudes keep feature order.
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
    order.into_iter().map(|j| features[j].clone()).collect()
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn transparency_report(
    side: &[usize],
    source: &FeatureMatrix,
    mapped: &FeatureMatrix,
) -> Result<TransparencyReport> {
    if side.is_empty() {
        return Err(Error::EmptyFlipset);
    }
    if source.rows() != mapped.rows() || source.cols() != mapped.cols() {
        return Err(Error::ShapeMismatch("source and counterparts differ in shape".into()));
    }
    let d = source.cols();
    let mut diff = vec![0.0; d];
    let mut signs = vec![0.0; d];
    for &i in side {
        if i >= source.rows() {
            return Err(Error::ShapeMismatch(format!("flipset index {i} out of range")));
        }
        for (j, (x, g)) in source.row(i).iter().zip(mapped.row(i)).enumerate() {
            diff[j] += x - g;
            signs[j] += sign(x - g);
        }
    }
    let k = side.len() as f64;
    diff.iter_mut().for_each(|v| *v /= k);
    signs.iter_mut().for_each(|v| *v /= k);
    let features = source.names().to_vec();
    Ok(TransparencyReport {
        ranking_by_diff: rank(&features, &diff),
        ranking_by_sign: rank(&features, &signs),
        features,
        mean_diff: diff,
        mean_sign: signs,
        size: side.len(),
    })
}

impl TransparencyReport {
    pub fn value_of(&self, feature: &str) -> Option<(f64, f64)> {
        let j = self.features.iter().position(|f| f == feature)?;
        Some((self.mean_diff[j], self.mean_sign[j]))
    }

    /// Drop features (e.g. the protected attribute itself) from the report.
    pub fn without_features(&self, excluded: &[String]) -> Self {
        let keep: Vec<usize> = (0..self.features.len())
            .filter(|&j| !excluded.contains(&self.features[j]))
            .collect();
        let features: Vec<String> = keep.iter().map(|&j| self.features[j].clone()).collect();
        let mean_diff: Vec<f64> = keep.iter().map(|&j| self.mean_diff[j]).collect();
        let mean_sign: Vec<f64> = keep.iter().map(|&j| self.mean_sign[j]).collect();
        Self {
            ranking_by_diff: rank(&features, &mean_diff),
            ranking_by_sign: rank(&features, &mean_sign),
            features,
            mean_diff,
            mean_sign,
            size: self.size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParityCheck {
    pub positives_a: usize,
    pub positives_b: usize,
    pub flip_pos: usize,
    pub flip_neg: usize,
    pub net: i64,
}

/// Flipset, counts and per-side reports for one source/target pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct Audit {
    pub parity: ParityCheck,
    pub flipset: Flipset,
    pub positive_report: Option<TransparencyReport>,
    pub negative_report: Option<TransparencyReport>,
}

pub fn demographic_parity_audit<C: Classifier + ?Sized>(
    data: &GroupedDataset,
    h: &C,
    map: &TransportMap,
) -> Result<Audit> {
    let counterparts = map.counterparts(data)?;
    let flipset = compute_flipset(h, &data.group_a, &counterparts)?;
    let positives_b = predict_all(h, &data.group_b, &row_keys(&data.group_b))?
        .iter()
        .filter(|&&y| y == 1)
        .count();
    let positives_a = flipset.source_predictions.iter().filter(|&&y| y == 1).count();
    let report = |side: &[usize]| -> Result<Option<TransparencyReport>> {
        if side.is_empty() {
            Ok(None)
        } else {
            transparency_report(side, &data.group_a, &flipset.counterparts.points).map(Some)
        }
    };
    let positive_report = report(&flipset.positive)?;
    let negative_report = report(&flipset.negative)?;
    let (fp, fn_) = (flipset.positive.len(), flipset.negative.len());
    Ok(Audit {
        parity: ParityCheck {
            positives_a,
            positives_b,
            flip_pos: fp,
            flip_neg: fn_,
            net: fp as i64 - fn_ as i64,
        },
        flipset,
        positive_report,
        negative_report,
    })
}

/// Audits conditioned on the true label, one transport map per stratum.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualizedOddsAudit {
    /// Stratum of true label 1.
    pub positive: Audit,
    /// Stratum of true label 0.
    pub negative: Audit,
}

pub fn equalized_odds_audit<C: Classifier + ?Sized>(
    data: &GroupedDataset,
    h: &C,
    map_pos: &TransportMap,
    map_neg: &TransportMap,
) -> Result<EqualizedOddsAudit> {
    let pos = data.stratum(1)?;
    let neg = data.stratum(0)?;
    Ok(EqualizedOddsAudit {
        positive: demographic_parity_audit(&pos, h, map_pos)?,
        negative: demographic_parity_audit(&neg, h, map_neg)?,
    })
}

/// Flipset sizes for a map and for a map trained in the opposite direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReverseConsistency {
    pub fwd_pos: usize,
    pub fwd_neg: usize,
    pub rev_pos: usize,
    pub rev_neg: usize,
}

impl ReverseConsistency {
    /// Largest of the two relative gaps `|F+| vs |F'-|` and `|F-| vs |F'+|`,
    /// each measured against the larger of the pair.
    pub fn max_relative_gap(&self) -> f64 {
        let gap = |a: usize, b: usize| {
            let hi = a.max(b);
            if hi == 0 {
                0.0
            } else {
                a.abs_diff(b) as f64 / hi as f64
            }
        };
        gap(self.fwd_pos, self.rev_neg).max(gap(self.fwd_neg, self.rev_pos))
    }
}

pub fn reverse_consistency<C: Classifier + ?Sized>(
    data: &GroupedDataset,
    h: &C,
    map_fwd: &TransportMap,
    map_rev: &TransportMap,
) -> Result<ReverseConsistency> {
    let fwd = compute_flipset(h, &data.group_a, &map_fwd.counterparts(data)?)?;
    let reversed = data.swapped();
    let rev = compute_flipset(h, &reversed.group_a, &map_rev.counterparts(&reversed)?)?;
    Ok(ReverseConsistency {
        fwd_pos: fwd.positive.len(),
        fwd_neg: fwd.negative.len(),
        rev_pos: rev.positive.len(),
        rev_neg: rev.negative.len(),
    })
}

/// One bin of a per-feature marginal histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub feature: String,
    pub bin_left: f64,
    pub bin_right: f64,
    pub count_population: usize,
    pub count_flipset: usize,
}

pub const DEFAULT_BINS: usize = 20;

/// Marginals of the whole population next to those of a flipset side
/// (`members` index rows of `population`), with equal-width bins spanning
/// the range of `range_over`. Values outside that range land in the end bins.
pub fn marginal_histograms(
    population: &FeatureMatrix,
    members: &[usize],
    range_over: &FeatureMatrix,
    bins: usize,
) -> Result<Vec<HistogramBin>> {
    if bins == 0 {
        return Err(Error::BadParams("at least one bin is required".into()));
    }
    if population.is_empty() || range_over.is_empty() {
        return Err(Error::EmptySample);
    }
    population.same_schema(range_over)?;
    if let Some(&i) = members.iter().find(|&&i| i >= population.rows()) {
        return Err(Error::ShapeMismatch(format!("member {i} outside population of {}", population.rows())));
    }
    let mut out = Vec::with_capacity(bins * population.cols());
    for (j, name) in population.names().iter().enumerate() {
        let col = population.column(j);
        let span = range_over.column(j);
        let lo = span.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = span.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo) / bins as f64;
        let bin_of = |v: f64| -> usize {
            if width == 0.0 || v <= lo {
                0
            } else {
                (((v - lo) / width) as usize).min(bins - 1)
            }
        };
        let mut pop = vec![0usize; bins];
        let mut flip = vec![0usize; bins];
        for &v in &col {
            pop[bin_of(v)] += 1;
        }
        for &i in members {
            flip[bin_of(col[i])] += 1;
        }
        for b in 0..bins {
            out.push(HistogramBin {
                feature: name.clone(),
                bin_left: lo + width * b as f64,
                bin_right: if b + 1 == bins { hi } else { lo + width * (b + 1) as f64 },
                count_population: pop[b],
                count_flipset: flip[b],
            });
        }
    }
    Ok(out)
}
