use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use fliptest_core::exact::{equalize, solve_exact, subsample, ExactMap};
use fliptest_core::flip::{
    demographic_parity_audit, marginal_histograms, Audit, PointKey, TransparencyReport, TransportMap,
    DEFAULT_BINS,
};
use fliptest_core::io::{
    assignment_rows, read_grouped_csv, read_records, write_grouped_csv, write_records, AssignmentRow,
};
use fliptest_core::neural::{map_points, train, GeneratorFile};
use fliptest_core::rng::{self, derive_seed};
use fliptest_core::synth::{GeneratorSpec, HiringParams, SynthKind};
use fliptest_core::validation::{
    distance_comparison, stability_harness, validation_trial, ControlConfig, StabilityConfig, StabilityMethod,
    ValidationReport,
};
use fliptest_core::{FeatureMatrix, GroupedDataset, Normalizer};
use rand::Rng;
use serde::Serialize;

use crate::classifier::{self, ClassifierSpec};
use crate::run::Run;
use crate::{config_error, GlobalArgs, Method, TrainArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Hiring,
    Geometric,
    Control,
    Gaussian,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub kind: Kind,
    /// Points per group.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Gaussian source mean, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub mean_a: Vec<f64>,
    /// Gaussian target mean, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub mean_b: Vec<f64>,
    /// Gaussian covariance, rows separated by `;` (default identity).
    #[arg(long, allow_hyphen_values = true)]
    pub cov: Option<String>,
}

fn parse_cov(text: &str) -> Result<Vec<Vec<f64>>> {
    text.split(';')
        .map(|row| {
            row.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| config_error(format!("--cov: `{v}` is not a number")))
                })
                .collect()
        })
        .collect()
}

fn group_names(kind: Kind) -> (&'static str, &'static str) {
    match kind {
        Kind::Hiring => ("female", "male"),
        _ => ("a", "b"),
    }
}

pub fn synth(g: &GlobalArgs, a: &SynthArgs) -> Result<()> {
    let kind = match a.kind {
        Kind::Hiring => SynthKind::TwoFeatureHiring(HiringParams::default()),
        Kind::Geometric => SynthKind::GeometricArrests,
        Kind::Control => SynthKind::ControlNormal,
        Kind::Gaussian => {
            if a.mean_a.is_empty() || a.mean_a.len() != a.mean_b.len() {
                return Err(config_error("--mean-a and --mean-b must be given with equal lengths"));
            }
            let d = a.mean_a.len();
            let cov = match &a.cov {
                Some(text) => parse_cov(text)?,
                None => (0..d).map(|i| (0..d).map(|j| f64::from(u8::from(i == j))).collect()).collect(),
            };
            SynthKind::Gaussian {
                mean_a: a.mean_a.clone(),
                mean_b: a.mean_b.clone(),
                cov,
            }
        }
    };
    let spec = GeneratorSpec {
        kind,
        n_per_group: a.n,
        seed: derive_seed(g.seed, "data"),
    };
    let data = spec.generate()?;

    let (dir, file) = if g.out.extension().is_some_and(|e| e == "csv") {
        let dir = g.out.parent().map(Path::to_path_buf).unwrap_or_default();
        let name = g.out.file_name().expect("has extension").to_string_lossy().into_owned();
        (dir, name)
    } else {
        (g.out.clone(), "data.csv".to_string())
    };
    let mut run = Run::new(if dir.as_os_str().is_empty() { Path::new(".") } else { &dir })?;
    let path = run.artifact(&file);
    write_grouped_csv(&path, &data, group_names(a.kind))?;
    run.finish("synth", g, &(a, spec))
}

#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    /// Grouped CSV with a `group` column and optional `label` column.
    #[arg(long)]
    pub data: PathBuf,
    /// Group value to map from (default: the lexicographically smaller one).
    #[arg(long)]
    pub source_group: Option<String>,
}

fn load(run: &mut Run, a: &DataArgs) -> Result<GroupedDataset> {
    run.input(&a.data);
    let loaded = read_grouped_csv(&a.data, a.source_group.as_deref())
        .with_context(|| format!("loading {}", a.data.display()))?;
    Ok(loaded.data)
}

fn label_stratum(data: &GroupedDataset, stratum: Option<u8>) -> Result<GroupedDataset> {
    match stratum {
        None => Ok(data.clone()),
        Some(y) if y <= 1 => Ok(data.stratum(y)?),
        Some(y) => Err(config_error(format!("--stratum must be 0 or 1, got {y}"))),
    }
}

#[derive(Debug, Args, Serialize)]
pub struct MapArgs {
    #[command(flatten)]
    pub input: DataArgs,
    #[arg(long, value_enum, default_value_t = Method::Exact)]
    pub method: Method,
    /// Restrict to rows with this true label (for equalized-odds audits).
    #[arg(long)]
    pub stratum: Option<u8>,
    /// Exact method: map a seeded sample of this many points per group.
    #[arg(long)]
    pub subsample: Option<usize>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Serialize)]
struct ExactSummary {
    n: usize,
    total_cost: f64,
    mean_cost: f64,
}

pub fn map(g: &GlobalArgs, a: &MapArgs) -> Result<()> {
    let mut run = Run::new(&g.out)?;
    let full = load(&mut run, &a.input)?;
    let norm = if g.no_normalize {
        None
    } else {
        Some(Normalizer::fit_grouped(&full)?)
    };
    let data = label_stratum(&full, a.stratum)?;
    let scale = |d: &GroupedDataset| -> Result<GroupedDataset> {
        Ok(match &norm {
            Some(n) => d.normalized(n)?,
            None => d.clone(),
        })
    };
    match a.method {
        Method::Exact => {
            let mut data = equalize(&data, derive_seed(g.seed, "data"))?;
            if let Some(k) = a.subsample {
                data = GroupedDataset::new(
                    subsample(&data.group_a, k, derive_seed(g.seed, "data-a"))?,
                    subsample(&data.group_b, k, derive_seed(g.seed, "data-b"))?,
                )?;
            }
            let m = solve_exact(&scale(&data)?, g.cost)?;
            let rows = assignment_rows(&data, &m)?;
            let path = run.artifact("assignment.csv");
            write_records(fs::File::create(&path)?, &rows)?;
            run.write_json(
                "exact_summary.json",
                &ExactSummary {
                    n: rows.len(),
                    total_cost: m.total_cost,
                    mean_cost: m.mean_cost,
                },
            )?;
        }
        Method::Gan => {
            if a.subsample.is_some() {
                return Err(config_error("--subsample applies to --method exact only"));
            }
            let cfg = a.train.config(g.seed);
            let gen = train(&scale(&data)?, &cfg, g.cost)?;
            let file = GeneratorFile::new(&gen, data.feature_names().to_vec(), cfg, g.cost, norm);
            run.write_json("generator.json", &file)?;
        }
    }
    run.finish("map", g, a)
}

/// Restrict `data` to the pairs of an assignment file, in file order, so the
/// map becomes the identity on positions.
fn pair_by_ids(data: &GroupedDataset, rows: &[AssignmentRow]) -> Result<GroupedDataset> {
    let index = |m: &FeatureMatrix, id: usize, side: &str| -> Result<usize> {
        m.row_ids()
            .iter()
            .position(|&x| x == id)
            .ok_or_else(|| anyhow::Error::from(fliptest_core::Error::SchemaMismatch(format!("{side} row {id} not in data"))))
    };
    let ia = rows
        .iter()
        .map(|r| index(&data.group_a, r.source_index, "source"))
        .collect::<Result<Vec<_>>>()?;
    let ib = rows
        .iter()
        .map(|r| index(&data.group_b, r.target_index, "target"))
        .collect::<Result<Vec<_>>>()?;
    let mut out = GroupedDataset::new(data.group_a.select(&ia), data.group_b.select(&ib))?;
    if let (Some(la), Some(lb)) = (&data.labels_a, &data.labels_b) {
        out = out.with_labels(ia.iter().map(|&i| la[i]).collect(), ib.iter().map(|&i| lb[i]).collect())?;
    }
    Ok(out)
}

/// Load a map artifact (`identity`, an assignment CSV or a generator JSON)
/// and the part of `data` it applies to.
fn load_map(run: &mut Run, path: &Path, data: &GroupedDataset, g: &GlobalArgs) -> Result<(GroupedDataset, TransportMap)> {
    if path.as_os_str() == "identity" {
        return Ok((data.clone(), TransportMap::Identity));
    }
    run.input(path);
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext {
        "csv" => {
            let rows: Vec<AssignmentRow> = read_records(
                fs::File::open(path).with_context(|| format!("opening {}", path.display()))?,
            )?;
            let paired = pair_by_ids(data, &rows)?;
            let map = ExactMap::evaluate(&paired, g.cost, (0..rows.len()).collect())?;
            Ok((paired, TransportMap::Exact(map)))
        }
        "json" => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let file: GeneratorFile = serde_json::from_str(&text)?;
            if file.feature_names != data.feature_names() {
                return Err(fliptest_core::Error::SchemaMismatch(format!(
                    "generator features {:?} differ from data features {:?}",
                    file.feature_names,
                    data.feature_names()
                ))
                .into());
            }
            let gen = file.generator()?;
            let map = match file.normalizer {
                Some(n) => TransportMap::NormalizedNeural(gen, n),
                None => TransportMap::Neural(gen),
            };
            Ok((data.clone(), map))
        }
        _ => Err(config_error(format!(
            "map `{}`: expected identity, an assignment .csv or a generator .json",
            path.display()
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    DemographicParity,
    EqualizedOdds,
}

#[derive(Debug, Args, Serialize)]
pub struct AuditArgs {
    #[command(flatten)]
    pub input: DataArgs,
    /// Map artifact: `identity`, assignment CSV or generator JSON.
    #[arg(long, required_if_eq("mode", "demographic-parity"))]
    pub map: Option<PathBuf>,
    /// Equalized odds: map fitted on the label-1 stratum.
    #[arg(long, required_if_eq("mode", "equalized-odds"))]
    pub map_pos: Option<PathBuf>,
    /// Equalized odds: map fitted on the label-0 stratum.
    #[arg(long, required_if_eq("mode", "equalized-odds"))]
    pub map_neg: Option<PathBuf>,
    /// hiring-fair, ssl-age-narc, ssl-multi, arrests, linear:W1,W2,...:T or predictions:PATH.
    #[arg(long)]
    pub classifier: ClassifierSpec,
    #[arg(long, value_enum, default_value_t = Mode::DemographicParity)]
    pub mode: Mode,
    /// Leave a feature out of the transparency rankings (repeatable).
    #[arg(long = "exclude-feature")]
    pub exclude: Vec<String>,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum Side {
    Report {
        size: usize,
        mean_diff: BTreeMap<String, f64>,
        mean_sign: BTreeMap<String, f64>,
        ranking_by_diff: Vec<String>,
        ranking_by_sign: Vec<String>,
    },
    Empty(&'static str),
}

impl Side {
    fn new(report: Option<&TransparencyReport>, exclude: &[String]) -> Self {
        match report {
            None => Side::Empty("empty"),
            Some(r) => {
                let r = r.without_features(exclude);
                let by = |v: &[f64]| r.features.iter().cloned().zip(v.iter().copied()).collect();
                Side::Report {
                    size: r.size,
                    mean_diff: by(&r.mean_diff),
                    mean_sign: by(&r.mean_sign),
                    ranking_by_diff: r.ranking_by_diff.clone(),
                    ranking_by_sign: r.ranking_by_sign.clone(),
                }
            }
        }
    }
}

#[derive(Debug, Serialize)]
struct PerSide {
    positive: Side,
    negative: Side,
}

#[derive(Debug, Serialize)]
struct AuditJson {
    n_source: usize,
    flip_pos: usize,
    flip_neg: usize,
    net: i64,
    positives_source: usize,
    positives_target: usize,
    excluded_features: Vec<String>,
    per_side: PerSide,
}

fn audit_json(audit: &Audit, exclude: &[String]) -> AuditJson {
    AuditJson {
        n_source: audit.flipset.n_source,
        flip_pos: audit.parity.flip_pos,
        flip_neg: audit.parity.flip_neg,
        net: audit.parity.net,
        positives_source: audit.parity.positives_a,
        positives_target: audit.parity.positives_b,
        excluded_features: exclude.to_vec(),
        per_side: PerSide {
            positive: Side::new(audit.positive_report.as_ref(), exclude),
            negative: Side::new(audit.negative_report.as_ref(), exclude),
        },
    }
}

/// One row per flipset member: its features and its counterpart's.
fn write_flip_rows(path: &Path, data: &GroupedDataset, audit: &Audit) -> Result<()> {
    let mut w = csv_writer(path)?;
    let names = data.feature_names();
    let mut header = vec!["side".to_string(), "row".into(), "counterpart_row".into()];
    header.extend(names.iter().map(|n| format!("x_{n}")));
    header.extend(names.iter().map(|n| format!("g_{n}")));
    w.write_record(&header)?;
    let f = &audit.flipset;
    for (side, members) in [("positive", &f.positive), ("negative", &f.negative)] {
        for &i in members.iter() {
            let mut rec = vec![side.to_string(), data.group_a.row_ids()[i].to_string()];
            rec.push(match f.counterparts.keys[i] {
                PointKey::Row(id) => id.to_string(),
                PointKey::Counterpart(_) => String::new(),
            });
            rec.extend(data.group_a.row(i).iter().map(f64::to_string));
            rec.extend(f.counterparts.points.row(i).iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?)
}

fn check_excluded(data: &GroupedDataset, exclude: &[String]) -> Result<()> {
    match exclude.iter().find(|f| !data.feature_names().contains(f)) {
        Some(f) => Err(config_error(format!("--exclude-feature: no feature named `{f}`"))),
        None => Ok(()),
    }
}

pub fn audit(g: &GlobalArgs, a: &AuditArgs) -> Result<()> {
    let mut run = Run::new(&g.out)?;
    let data = load(&mut run, &a.input)?;
    check_excluded(&data, &a.exclude)?;
    let h = classifier::build(&a.classifier, &data, g.seed)?;
    if let ClassifierSpec::Predictions(p) = &a.classifier {
        run.input(p);
    }
    let bundles: Vec<(String, GroupedDataset, PathBuf)> = match a.mode {
        Mode::DemographicParity => {
            let map = a.map.clone().ok_or_else(|| config_error("--map is required"))?;
            vec![(String::new(), data.clone(), map)]
        }
        Mode::EqualizedOdds => {
            let pos = a.map_pos.clone().ok_or_else(|| config_error("--map-pos is required"))?;
            let neg = a.map_neg.clone().ok_or_else(|| config_error("--map-neg is required"))?;
            vec![
                ("_label1".into(), data.stratum(1)?, pos),
                ("_label0".into(), data.stratum(0)?, neg),
            ]
        }
    };
    for (suffix, stratum, map_path) in bundles {
        let (paired, map) = load_map(&mut run, &map_path, &stratum, g)?;
        let audit = demographic_parity_audit(&paired, &h, &map)?;
        run.write_json(&format!("flipset{suffix}.json"), &audit_json(&audit, &a.exclude))?;
        let rows = run.artifact(&format!("flipset_rows{suffix}.csv"));
        write_flip_rows(&rows, &paired, &audit)?;
    }
    run.finish("flipset", g, a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlipSide {
    Positive,
    Negative,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[command(flatten)]
    pub input: DataArgs,
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long)]
    pub classifier: ClassifierSpec,
    #[arg(long, value_enum, default_value_t = FlipSide::Positive)]
    pub side: FlipSide,
    #[arg(long = "exclude-feature")]
    pub exclude: Vec<String>,
    /// Also write per-feature marginal histograms of the population and the flipset side.
    #[arg(long)]
    pub histogram: bool,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
}

#[derive(Debug, Serialize)]
struct ReportJson {
    side: FlipSide,
    report: Side,
}

pub fn report(g: &GlobalArgs, a: &ReportArgs) -> Result<()> {
    let mut run = Run::new(&g.out)?;
    let data = load(&mut run, &a.input)?;
    check_excluded(&data, &a.exclude)?;
    let h = classifier::build(&a.classifier, &data, g.seed)?;
    if let ClassifierSpec::Predictions(p) = &a.classifier {
        run.input(p);
    }
    let (paired, map) = load_map(&mut run, &a.map, &data, g)?;
    let audit = demographic_parity_audit(&paired, &h, &map)?;
    let (members, report) = match a.side {
        FlipSide::Positive => (&audit.flipset.positive, audit.positive_report.as_ref()),
        FlipSide::Negative => (&audit.flipset.negative, audit.negative_report.as_ref()),
    };
    run.write_json(
        "report.json",
        &ReportJson {
            side: a.side,
            report: Side::new(report, &a.exclude),
        },
    )?;
    if a.histogram {
        let bins = marginal_histograms(&paired.group_a, members, &paired.pooled()?, a.bins)?;
        let path = run.artifact("histogram.csv");
        write_records(fs::File::create(&path)?, &bins)?;
    }
    run.finish("report", g, a)
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub input: DataArgs,
    /// Generator JSON written by `map --method gan`.
    #[arg(long, required_unless_present = "generated")]
    pub generator: Option<PathBuf>,
    /// Use these points (CSV with the feature columns) as the generated sample instead.
    #[arg(long, conflicts_with = "generator")]
    pub generated: Option<PathBuf>,
    /// Bootstrap resamples of both groups.
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Points per group for the exact-transport distance.
    #[arg(long, default_value_t = 2_000)]
    pub subset: usize,
}

#[derive(Debug, Serialize)]
struct ValidationRow<'a> {
    feature: &'a str,
    ks_mean: f64,
    ks_std: f64,
    msediff_mean: f64,
    msediff_std: f64,
    dist_exact: f64,
    dist_gan: Option<f64>,
}

fn read_points(path: &Path, names: &[String]) -> Result<FeatureMatrix> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    let cols = names
        .iter()
        .map(|n| {
            headers.iter().position(|h| h == n).ok_or_else(|| {
                anyhow::Error::from(fliptest_core::Error::SchemaMismatch(format!(
                    "{}: missing column `{n}`",
                    path.display()
                )))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = cols
            .iter()
            .map(|&c| {
                rec[c].trim().parse::<f64>().map_err(|_| {
                    anyhow::Error::from(fliptest_core::Error::SchemaMismatch(format!(
                        "{}: `{}` is not a number",
                        path.display(),
                        &rec[c]
                    )))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(fliptest_core::Error::EmptySample.into());
    }
    Ok(FeatureMatrix::from_rows(names.to_vec(), &rows)?)
}

fn resample(m: &FeatureMatrix, rng: &mut rng::StreamRng) -> FeatureMatrix {
    let idx: Vec<usize> = (0..m.rows()).map(|_| rng.random_range(0..m.rows())).collect();
    m.select(&idx)
}

pub fn validate(g: &GlobalArgs, a: &ValidateArgs) -> Result<()> {
    if a.trials == 0 {
        return Err(config_error("--trials must be at least 1"));
    }
    let mut run = Run::new(&g.out)?;
    let data = load(&mut run, &a.input)?;
    let names = data.feature_names().to_vec();

    let (gen, norm) = match &a.generator {
        Some(path) => {
            run.input(path);
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let file: GeneratorFile = serde_json::from_str(&text)?;
            if file.feature_names != names {
                return Err(fliptest_core::Error::SchemaMismatch("generator and data features differ".into()).into());
            }
            (Some(file.generator()?), file.normalizer)
        }
        None => {
            let norm = if g.no_normalize {
                None
            } else {
                Some(Normalizer::fit_grouped(&data)?)
            };
            (None, norm)
        }
    };
    let scaled = match &norm {
        Some(n) => data.normalized(n)?,
        None => data.clone(),
    };
    let injected = match &a.generated {
        Some(path) => {
            run.input(path);
            let pts = read_points(path, &names)?;
            Some(match &norm {
                Some(n) => n.transform(&pts)?,
                None => pts,
            })
        }
        None => None,
    };

    let mut trials = Vec::with_capacity(a.trials);
    for t in 0..a.trials {
        let mut r = rng::indexed_substream(g.seed, "validate-trial", t as u64);
        let target = resample(&scaled.group_b, &mut r);
        let generated = match (&gen, &injected) {
            (Some(gen), _) => map_points(gen, &resample(&scaled.group_a, &mut r))?,
            (None, Some(pts)) => resample(pts, &mut r),
            (None, None) => unreachable!("clap requires --generator or --generated"),
        };
        trials.push(validation_trial(&target, &generated)?);
    }
    let (dist_exact, dist_gan) = match &gen {
        Some(gen) => {
            let (e, d) = distance_comparison(&scaled, gen, g.cost, a.subset, derive_seed(g.seed, "data"))?;
            (e, Some(d))
        }
        None => {
            let k = a.subset.min(scaled.group_a.rows()).min(scaled.group_b.rows());
            let sample = GroupedDataset::new(
                subsample(&scaled.group_a, k, derive_seed(g.seed, "distance-a"))?,
                subsample(&scaled.group_b, k, derive_seed(g.seed, "distance-b"))?,
            )?;
            (solve_exact(&sample, g.cost)?.mean_cost, None)
        }
    };
    let report = ValidationReport::from_trials(names.clone(), trials, dist_exact, dist_gan.unwrap_or(f64::NAN))?;
    let rows: Vec<ValidationRow> = names
        .iter()
        .enumerate()
        .map(|(j, f)| ValidationRow {
            feature: f,
            ks_mean: report.ks_mean[j],
            ks_std: report.ks_std[j],
            msediff_mean: report.mse_diff_mean[j],
            msediff_std: report.mse_diff_std[j],
            dist_exact,
            dist_gan,
        })
        .collect();
    let path = run.artifact("validation.csv");
    write_records(fs::File::create(&path)?, &rows)?;
    run.finish("validate", g, a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Probe {
    Zeros,
    Ones,
}

#[derive(Debug, Args, Serialize)]
pub struct StabilityArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub draws: usize,
    #[arg(long, value_enum, default_value_t = Probe::Zeros)]
    pub probe: Probe,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Serialize)]
struct StabilityRow {
    dim: usize,
    feature_index: usize,
    variance_exact: f64,
    variance_gan: f64,
    mean_exact: f64,
    mean_gan: f64,
}

pub fn stability(g: &GlobalArgs, a: &StabilityArgs) -> Result<()> {
    if a.dims.iter().any(|&d| d == 0) {
        return Err(config_error("--dims entries must be positive"));
    }
    let mut run = Run::new(&g.out)?;
    let mut rows = Vec::new();
    for &d in &a.dims {
        let cfg = StabilityConfig {
            n: a.n,
            draws: a.draws,
            seed: derive_seed(g.seed, &format!("stability-{d}")),
            cost: g.cost,
            train: a.train.config(g.seed),
        };
        let probe = vec![if a.probe == Probe::Ones { 1.0 } else { 0.0 }; d];
        let exact = stability_harness(&probe, StabilityMethod::Exact, &cfg)?;
        let gan = stability_harness(&probe, StabilityMethod::Gan, &cfg)?;
        for j in 0..d {
            rows.push(StabilityRow {
                dim: d,
                feature_index: j,
                variance_exact: exact.variance[j],
                variance_gan: gan.variance[j],
                mean_exact: exact.mean[j],
                mean_gan: gan.mean[j],
            });
        }
    }
    let path = run.artifact("stability.csv");
    write_records(fs::File::create(&path)?, &rows)?;
    run.finish("stability", g, a)
}

#[derive(Debug, Args, Serialize)]
pub struct ControlArgs {
    /// Points per group in each draw.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Random-label anchors of the nearest-neighbour classifier.
    #[arg(long, default_value_t = 2_000)]
    pub anchors: usize,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Serialize)]
struct ControlJson {
    #[serde(flatten)]
    result: fliptest_core::validation::ControlResult,
    positive_fraction: f64,
    negative_fraction: f64,
}

pub fn control(g: &GlobalArgs, a: &ControlArgs) -> Result<()> {
    let mut run = Run::new(&g.out)?;
    let cfg = ControlConfig {
        n: a.n,
        anchors: a.anchors,
        seed: g.seed,
        cost: g.cost,
        train: a.train.config(g.seed),
    };
    let (result, _) = fliptest_core::validation::control_experiment(&cfg)?;
    run.write_json(
        "control.json",
        &ControlJson {
            positive_fraction: result.positive_fraction(),
            negative_fraction: result.negative_fraction(),
            result,
        },
    )?;
    run.finish("control", g, a)
}
