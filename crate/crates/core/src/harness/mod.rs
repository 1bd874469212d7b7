//! Batch evaluation of generator models against human ratings.
//!
//! Pairwise metrics (GLIPS, SSIM, MS-SSIM, PSNR) are averaged over a model's
//! image pairs. Set-level metrics (FID, KID) pool the feature tokens of all of
//! a model's originals and of all its generated images and are computed once.
//! Each per-model value is rescaled onto the Likert range and compared with
//! the model's average human score.

mod data;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, FeatureSet};
use crate::baselines::{
    fid, fit_gaussian_tokens, kid, mad, mape, ms_ssim, psnr, ssim, BaselineError, Psnr, SsimParams,
};
use crate::glips::{glips_components, GlipsComponents, GlipsConfig, GlipsError};
use crate::ibs::{likert_label, BinTables, IbsError, Likert};
use crate::imagery::{decode_image, resize, ImageTensor, ImageryError};

pub use data::{load_human_scores, DatasetEntry, DatasetManifest, HumanRow, HumanScores};
pub use report::{
    emit_report, report_from_json, report_to_csv, report_to_json, report_to_markdown, PlotData, PlotSeries, ReportFormat,
    CSV_HEADER,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no human score for model `{0}`")]
    MissingHumanScore(String),
    #[error("malformed human score CSV: {0}")]
    MalformedCsv(String),
    #[error("human score {score} for `{model}` outside [1, 5]")]
    ScoreOutOfRange { model: String, score: f64 },
    #[error("invalid dataset manifest: {0}")]
    Manifest(String),
    #[error("lambda list is empty")]
    EmptyLambdaList,
    #[error("lambda {0} outside [0, 1]")]
    InvalidLambda(f64),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization failed: {0}")]
    Serialize(String),
    #[error(transparent)]
    Image(#[from] ImageryError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Glips(#[from] GlipsError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Ibs(#[from] IbsError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Whether the failure originated in model loading or inference.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            Self::Backend(_) | Self::Glips(GlipsError::Backend(_)) | Self::Baseline(BaselineError::Kernel(GlipsError::Backend(_)))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "GLIPS")]
    Glips,
    #[serde(rename = "SSIM")]
    Ssim,
    #[serde(rename = "MS-SSIM")]
    MsSsim,
    #[serde(rename = "PSNR")]
    Psnr,
    #[serde(rename = "FID")]
    Fid,
    #[serde(rename = "KID")]
    Kid,
}

impl Metric {
    pub const ALL: [Metric; 6] = [Metric::Glips, Metric::Ssim, Metric::MsSsim, Metric::Psnr, Metric::Fid, Metric::Kid];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Glips => "GLIPS",
            Metric::Ssim => "SSIM",
            Metric::MsSsim => "MS-SSIM",
            Metric::Psnr => "PSNR",
            Metric::Fid => "FID",
            Metric::Kid => "KID",
        }
    }

    /// FID and KID are computed over pooled feature sets instead of per pair.
    pub fn is_set_level(self) -> bool {
        matches!(self, Metric::Fid | Metric::Kid)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Metric::ALL
            .into_iter()
            .find(|m| m.name().replace('-', "").to_ascii_lowercase() == key)
            .ok_or_else(|| HarnessError::UnknownMetric(s.to_string()))
    }
}

/// Parses a comma-separated metric list, keeping order and dropping duplicates.
pub fn parse_metric_list(list: &str) -> Result<Vec<Metric>, HarnessError> {
    let mut out = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let m: Metric = part.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub glips: GlipsConfig<f64>,
    pub ssim: SsimParams<f64>,
    pub bins: BinTables<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            glips: GlipsConfig::default(),
            ssim: SsimParams::default(),
            bins: BinTables::shipped(),
        }
    }
}

/// One (model, metric) line of a report.
///
/// `rescaled`, `likert_metric`, `mad` and `mape` are absent when the raw value
/// cannot be rescaled (an infinite PSNR).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub metric: String,
    #[serde(with = "float_or_inf")]
    pub actual: f64,
    pub rescaled: Option<f64>,
    pub human: f64,
    pub likert_metric: Option<Likert>,
    pub likert_human: Likert,
    pub mad: Option<f64>,
    pub mape: Option<f64>,
}

impl ReportRow {
    /// Row from an already rescaled value; MAD and MAPE follow from `human` and `rescaled`.
    pub fn from_scores(
        model: impl Into<String>,
        metric: impl Into<String>,
        actual: f64,
        rescaled: Option<f64>,
        human: f64,
    ) -> Result<Self, HarnessError> {
        let likert_metric = rescaled.map(likert_label).transpose()?;
        let (mad_v, mape_v) = match rescaled {
            Some(r) => (Some(mad(&[human], &[r])?), Some(mape(&[human], &[r])?)),
            None => (None, None),
        };
        Ok(Self {
            model: model.into(),
            metric: metric.into(),
            actual,
            rescaled,
            human,
            likert_metric,
            likert_human: likert_label(human)?,
            mad: mad_v,
            mape: mape_v,
        })
    }

    /// Row for a raw metric value, rescaled with the metric's bin table.
    pub fn rescale(
        model: impl Into<String>,
        metric: &str,
        actual: f64,
        human: f64,
        bins: &BinTables<f64>,
    ) -> Result<Self, HarnessError> {
        let rescaled = if actual.is_finite() {
            Some(bins.get(metric)?.score(actual)?)
        } else {
            None
        };
        Self::from_scores(model, metric, actual, rescaled, human)
    }
}

mod float_or_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rows: Vec<ReportRow>,
}

impl EvaluationReport {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows_for(&self, metric: &str) -> impl Iterator<Item = &ReportRow> + '_ {
        let metric = metric.to_string();
        self.rows.iter().filter(move |r| r.metric == metric)
    }

    /// Mean MAPE per metric over models, in first-appearance order; rows without a MAPE are skipped.
    pub fn mean_mape_by_metric(&self) -> Vec<(String, Option<f64>)> {
        let mut order: Vec<String> = Vec::new();
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for row in &self.rows {
            if !order.contains(&row.metric) {
                order.push(row.metric.clone());
            }
            if let Some(m) = row.mape {
                let e = acc.entry(row.metric.clone()).or_default();
                e.0 += m;
                e.1 += 1;
            }
        }
        order
            .into_iter()
            .map(|m| {
                let v = acc.get(&m).filter(|(_, n)| *n > 0).map(|(s, n)| s / *n as f64);
                (m, v)
            })
            .collect()
    }
}

/// Scores of one (original, generated) pair for the requested metrics.
#[derive(Debug, Clone)]
struct PairScores {
    glips: Option<GlipsComponents<f64>>,
    ssim: Option<f64>,
    ms_ssim: Option<f64>,
    psnr: Option<Psnr<f64>>,
    features: Option<(FeatureSet<f64>, FeatureSet<f64>)>,
}

fn load_for_backend(path: &Path, backend: &dyn Backend<f64>) -> Result<ImageTensor<f64>, HarnessError> {
    let img = decode_image(path)?;
    Ok(resize(&img, &backend.manifest().preprocess_spec())?)
}

fn score_pair(
    orig: &ImageTensor<f64>,
    gen: &ImageTensor<f64>,
    metrics: &[Metric],
    backend: &dyn Backend<f64>,
    cfg: &EvalConfig,
) -> Result<PairScores, HarnessError> {
    let wants = |m: Metric| metrics.contains(&m);
    Ok(PairScores {
        glips: wants(Metric::Glips)
            .then(|| glips_components(orig, gen, backend, &cfg.glips))
            .transpose()?,
        ssim: wants(Metric::Ssim).then(|| ssim(orig, gen, &cfg.ssim)).transpose()?,
        ms_ssim: wants(Metric::MsSsim).then(|| ms_ssim(orig, gen, &cfg.ssim)).transpose()?,
        psnr: wants(Metric::Psnr).then(|| psnr(orig, gen)).transpose()?,
        features: if metrics.iter().any(|m| m.is_set_level()) {
            Some((backend.deep_features(orig)?, backend.deep_features(gen)?))
        } else {
            None
        },
    })
}

/// Pair scores grouped by model (sorted), in manifest entry order within a model.
fn score_dataset(
    manifest: &DatasetManifest,
    metrics: &[Metric],
    backend: &dyn Backend<f64>,
    cfg: &EvalConfig,
) -> Result<BTreeMap<String, Vec<PairScores>>, HarnessError> {
    cfg.glips.validate()?;
    let per_entry: Vec<Vec<(String, PairScores)>> = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let orig = load_for_backend(&entry.original_path, backend)?;
            entry
                .generated
                .iter()
                .map(|(model, path)| {
                    let gen = load_for_backend(path, backend)?;
                    Ok((model.clone(), score_pair(&orig, &gen, metrics, backend, cfg)?))
                })
                .collect::<Result<Vec<_>, HarnessError>>()
        })
        .collect::<Result<_, _>>()?;
    let mut grouped: BTreeMap<String, Vec<PairScores>> = BTreeMap::new();
    for (model, scores) in per_entry.into_iter().flatten() {
        grouped.entry(model).or_default().push(scores);
    }
    Ok(grouped)
}

fn human_averages(manifest: &DatasetManifest, humans: &HumanScores) -> Result<BTreeMap<String, f64>, HarnessError> {
    manifest
        .models()
        .into_iter()
        .map(|m| {
            humans
                .average(m)
                .map(|h| (m.to_string(), h))
                .ok_or_else(|| HarnessError::MissingHumanScore(m.to_string()))
        })
        .collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

fn metric_value(metric: Metric, pairs: &[PairScores], cfg: &EvalConfig) -> Result<f64, HarnessError> {
    let pooled = |side: fn(&(FeatureSet<f64>, FeatureSet<f64>)) -> &FeatureSet<f64>| {
        FeatureSet::concat(pairs.iter().map(|p| side(p.features.as_ref().expect("features computed"))))
    };
    Ok(match metric {
        Metric::Glips => mean(pairs.iter().map(|p| p.glips.expect("computed").score(cfg.glips.lambda).score)),
        Metric::Ssim => mean(pairs.iter().map(|p| p.ssim.expect("computed"))),
        Metric::MsSsim => mean(pairs.iter().map(|p| p.ms_ssim.expect("computed"))),
        Metric::Psnr => mean(pairs.iter().map(|p| p.psnr.expect("computed").value())),
        Metric::Fid => {
            let (fo, fg) = (pooled(|f| &f.0)?, pooled(|f| &f.1)?);
            fid(&fit_gaussian_tokens(&fo)?, &fit_gaussian_tokens(&fg)?)?
        }
        Metric::Kid => kid(&pooled(|f| &f.0)?, &pooled(|f| &f.1)?)?,
    })
}

/// Computes every requested metric per model and compares the rescaled values with human averages.
///
/// Rows are ordered by model name, then by the order of `metrics`.
pub fn evaluate(
    manifest: &DatasetManifest,
    humans: &HumanScores,
    metrics: &[Metric],
    backend: &dyn Backend<f64>,
    cfg: &EvalConfig,
) -> Result<EvaluationReport, HarnessError> {
    if metrics.is_empty() {
        return Ok(EvaluationReport::default());
    }
    let human = human_averages(manifest, humans)?;
    for m in metrics {
        cfg.bins.get(m.name())?;
    }
    let scored = score_dataset(manifest, metrics, backend, cfg)?;
    let mut rows = Vec::new();
    for (model, pairs) in &scored {
        for &metric in metrics {
            let actual = metric_value(metric, pairs, cfg)?;
            rows.push(ReportRow::rescale(model, metric.name(), actual, human[model], &cfg.bins)?);
        }
    }
    Ok(EvaluationReport { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub mean_mape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSweep {
    pub rows: Vec<SweepRow>,
    /// Lambda with the lowest mean MAPE; ties go to the larger lambda.
    pub best_lambda: f64,
}

/// GLIPS mean MAPE (over models) for each candidate lambda.
///
/// The local and global terms do not depend on lambda, so each pair is scored once.
pub fn lambda_sweep(
    manifest: &DatasetManifest,
    humans: &HumanScores,
    backend: &dyn Backend<f64>,
    cfg: &EvalConfig,
    lambdas: &[f64],
) -> Result<LambdaSweep, HarnessError> {
    if lambdas.is_empty() {
        return Err(HarnessError::EmptyLambdaList);
    }
    if let Some(&bad) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(HarnessError::InvalidLambda(bad));
    }
    let human = human_averages(manifest, humans)?;
    let table = cfg.bins.get(Metric::Glips.name())?;
    let scored = score_dataset(manifest, &[Metric::Glips], backend, cfg)?;

    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let mut mapes = Vec::with_capacity(scored.len());
        for (model, pairs) in &scored {
            let actual = mean(pairs.iter().map(|p| p.glips.expect("computed").score(lambda).score));
            let rescaled = table.score(actual)?;
            mapes.push(mape(&[human[model]], &[rescaled])?);
        }
        rows.push(SweepRow {
            lambda,
            mean_mape: mean(mapes.into_iter()),
        });
    }
    let best = rows
        .iter()
        .copied()
        .reduce(|best, r| {
            if r.mean_mape < best.mean_mape || (r.mean_mape == best.mean_mape && r.lambda > best.lambda) {
                r
            } else {
                best
            }
        })
        .expect("non-empty");
    Ok(LambdaSweep {
        rows,
        best_lambda: best.lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_names_parse() {
        assert_eq!(parse_metric_list("glips, ms-ssim,SSIM,glips").unwrap(), vec![Metric::Glips, Metric::MsSsim, Metric::Ssim]);
        assert_eq!("msssim".parse::<Metric>().unwrap(), Metric::MsSsim);
        assert!(parse_metric_list("glips,lpips").is_err());
        assert!(parse_metric_list("").unwrap().is_empty());
    }

    #[test]
    fn row_arithmetic() {
        let row = ReportRow::from_scores("Stable Diffusion", "FID", 28.83, Some(4.52), 3.30).unwrap();
        assert!((row.mad.unwrap() - 1.22).abs() < 1e-9);
        assert!((row.mape.unwrap() - 36.97).abs() < 0.05);
        assert_eq!(row.likert_metric, Some(Likert::StronglyAgree));
        assert_eq!(row.likert_human, Likert::SomewhatAgree);
    }

    #[test]
    fn infinite_psnr_is_not_rescaled() {
        let bins = BinTables::shipped();
        let row = ReportRow::rescale("m", "PSNR", f64::INFINITY, 3.0, &bins).unwrap();
        assert_eq!(row.rescaled, None);
        assert_eq!(row.mad, None);
        let json = serde_json::to_string(&row).unwrap();
        assert!(json.contains("\"actual\":\"inf\""));
        assert_eq!(serde_json::from_str::<ReportRow>(&json).unwrap(), row);
    }

    #[test]
    fn mean_mape_summary() {
        let report = EvaluationReport {
            rows: vec![
                ReportRow::from_scores("a", "X", 0.0, Some(2.0), 4.0).unwrap(),
                ReportRow::from_scores("b", "X", 0.0, Some(3.0), 3.0).unwrap(),
                ReportRow::from_scores("a", "Y", f64::INFINITY, None, 4.0).unwrap(),
            ],
        };
        assert_eq!(
            report.mean_mape_by_metric(),
            vec![("X".to_string(), Some(25.0)), ("Y".to_string(), None)]
        );
    }
}
