//! Interpolative binning: map a raw metric value onto the 0-5 Likert scale.
//!
//! A value is first classified into one of five agreement bins, then placed
//! inside that bin's score span by linear interpolation over the bin's
//! published metric range:
//!
//! ```text
//! higher_is_better: score = score_lo + (score_hi - score_lo) * (x - lo) / (hi - lo)
//! lower_is_better:  score = score_lo + (score_hi - score_lo) * (hi - x) / (hi - lo)
//! ```
//!
//! The fraction is clamped to `[0, 1]`, so values in a published gap (which
//! classify into the bin below the gap) and values beyond an open-ended
//! terminal bin saturate at the bin's edge score.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Bin configuration shipped with the crate.
pub const SHIPPED_BINS: &str = include_str!("../bins/likert_bins.toml");

#[derive(Debug, Error)]
pub enum IbsError {
    #[error("malformed bin configuration: {0}")]
    MalformedBinConfig(String),
    #[error("bins of `{0}` overlap or are not in ascending order")]
    OverlappingBins(String),
    #[error("`{0}` must have exactly one bin per Likert category, ordered by orientation")]
    MissingLikertSpan(String),
    #[error("metric value is not finite")]
    NonFiniteInput,
    #[error("score {0} outside [0, 5]")]
    OutOfRange(f64),
    #[error("no bin table for metric `{0}`")]
    UnknownMetric(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Likert {
    StronglyDisagree,
    SomewhatDisagree,
    Neutral,
    SomewhatAgree,
    StronglyAgree,
}

impl Likert {
    pub const ALL: [Likert; 5] = [
        Likert::StronglyDisagree,
        Likert::SomewhatDisagree,
        Likert::Neutral,
        Likert::SomewhatAgree,
        Likert::StronglyAgree,
    ];

    /// Fixed score span `(lo, hi)` of the category.
    pub fn score_span(self) -> (f64, f64) {
        match self {
            Likert::StronglyDisagree => (0.0, 1.0),
            Likert::SomewhatDisagree => (1.1, 2.0),
            Likert::Neutral => (2.1, 3.0),
            Likert::SomewhatAgree => (3.1, 4.0),
            Likert::StronglyAgree => (4.1, 5.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Likert::StronglyDisagree => "Strongly Disagree",
            Likert::SomewhatDisagree => "Somewhat Disagree",
            Likert::Neutral => "Neutral",
            Likert::SomewhatAgree => "Somewhat Agree",
            Likert::StronglyAgree => "Strongly Agree",
        }
    }
}

impl fmt::Display for Likert {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Likert {
    type Err = IbsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Likert::ALL
            .into_iter()
            .find(|l| l.as_str().replace(' ', "").to_ascii_lowercase() == key)
            .ok_or_else(|| IbsError::MalformedBinConfig(format!("unknown Likert label `{s}`")))
    }
}

/// Maps a 0-5 score to its category.
///
/// A score between two published spans (e.g. 2.04, between 2.0 and 2.1) goes
/// to the upper span, so the categories are `[0, 1]`, `(1, 2]`, ..., `(4, 5]`.
pub fn likert_label<T: Scalar>(score: T) -> Result<Likert, IbsError> {
    let s = score.as_f64();
    if !(0.0..=5.0).contains(&s) {
        return Err(IbsError::OutOfRange(s));
    }
    Ok(Likert::ALL
        .into_iter()
        .find(|l| s <= l.score_span().1)
        .expect("score within [0, 5]"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    HigherIsBetter,
    LowerIsBetter,
}

/// One category of a validated table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin<T> {
    pub label: Likert,
    /// Classification interval `[metric_lo, metric_hi)`, gap-closed; terminal edges are infinite.
    pub metric_lo: T,
    pub metric_hi: T,
    pub score_lo: T,
    pub score_hi: T,
    /// Finite interpolation span (the published range, or the saturation span for open ends).
    pub interp_lo: T,
    pub interp_hi: T,
}

impl<T: Scalar> Bin<T> {
    pub fn contains(&self, x: T) -> bool {
        x >= self.metric_lo && x < self.metric_hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinTable<T> {
    pub metric_name: String,
    pub orientation: Orientation,
    /// Ascending by metric value.
    pub bins: [Bin<T>; 5],
}

impl<T: Scalar> BinTable<T> {
    /// The unique bin whose half-open interval holds `x`.
    pub fn classify(&self, x: T) -> Result<&Bin<T>, IbsError> {
        if !x.is_finite() {
            return Err(IbsError::NonFiniteInput);
        }
        Ok(self
            .bins
            .iter()
            .find(|b| b.contains(x))
            .expect("bins tile the real line"))
    }

    pub fn score(&self, x: T) -> Result<T, IbsError> {
        let bin = self.classify(x)?;
        let frac = match self.orientation {
            Orientation::HigherIsBetter => (x - bin.interp_lo) / (bin.interp_hi - bin.interp_lo),
            Orientation::LowerIsBetter => (bin.interp_hi - x) / (bin.interp_hi - bin.interp_lo),
        };
        let frac = frac.max(T::zero()).min(T::one());
        Ok(bin.score_lo + (bin.score_hi - bin.score_lo) * frac)
    }

    /// Variant whose within-bin slope spans one full score unit instead of the
    /// category's own span; it can leave the category (0.45 on SSIM gives 3.6).
    pub fn score_unit_slope(&self, x: T) -> Result<T, IbsError> {
        let bin = self.classify(x)?;
        let offset = match self.orientation {
            Orientation::HigherIsBetter => x - bin.interp_lo,
            Orientation::LowerIsBetter => bin.interp_hi - x,
        };
        let raw = bin.score_lo + offset / (bin.interp_hi - bin.interp_lo);
        Ok(raw.max(T::zero()).min(T::lit(5.0)))
    }

    fn from_config(cfg: &TableConfig) -> Result<Self, IbsError> {
        let name = cfg.metric.clone();
        if cfg.bins.len() != 5 {
            return Err(IbsError::MissingLikertSpan(name));
        }
        let mut expected = Likert::ALL;
        if cfg.orientation == Orientation::LowerIsBetter {
            expected.reverse();
        }
        if cfg.bins.iter().map(|b| b.label).ne(expected) {
            return Err(IbsError::MissingLikertSpan(name));
        }
        let finite = |v: Option<f64>| v.is_none_or(f64::is_finite);
        if cfg.bins.iter().any(|b| !finite(b.lo) || !finite(b.hi)) {
            return Err(IbsError::MalformedBinConfig(format!("`{name}` has non-finite edges")));
        }
        // every bin needs both edges, except the outer edge of a terminal bin
        for (i, b) in cfg.bins.iter().enumerate() {
            if (i > 0 && b.lo.is_none()) || (i < 4 && b.hi.is_none()) {
                return Err(IbsError::MalformedBinConfig(format!(
                    "`{name}` bin {} is missing an interior edge",
                    b.label
                )));
            }
            if let (Some(lo), Some(hi)) = (b.lo, b.hi) {
                if lo >= hi {
                    return Err(IbsError::OverlappingBins(name));
                }
            }
        }
        for pair in cfg.bins.windows(2) {
            if pair[0].hi.unwrap() > pair[1].lo.unwrap() {
                return Err(IbsError::OverlappingBins(name));
            }
        }

        let published_width = |i: usize| -> Option<f64> {
            let b = &cfg.bins[i];
            Some(b.hi? - b.lo?)
        };
        let saturation = |adjacent: usize| -> Result<f64, IbsError> {
            let w = cfg
                .saturation_width
                .or_else(|| published_width(adjacent))
                .ok_or_else(|| IbsError::MalformedBinConfig(format!("`{name}` needs a saturation width")))?;
            if w > 0.0 && w.is_finite() {
                Ok(w)
            } else {
                Err(IbsError::MalformedBinConfig(format!("`{name}` saturation width must be positive")))
            }
        };

        let mut bins = Vec::with_capacity(5);
        for (i, b) in cfg.bins.iter().enumerate() {
            let (interp_lo, interp_hi) = match (b.lo, b.hi) {
                (Some(lo), Some(hi)) => (lo, hi),
                (None, Some(hi)) => (hi - saturation(i + 1)?, hi),
                (Some(lo), None) => (lo, lo + saturation(i - 1)?),
                (None, None) => unreachable!("checked above"),
            };
            let metric_lo = if i == 0 { f64::NEG_INFINITY } else { b.lo.unwrap() };
            let metric_hi = if i == 4 { f64::INFINITY } else { cfg.bins[i + 1].lo.unwrap() };
            let (score_lo, score_hi) = b.label.score_span();
            bins.push(Bin {
                label: b.label,
                metric_lo: T::lit(metric_lo),
                metric_hi: T::lit(metric_hi),
                score_lo: T::lit(score_lo),
                score_hi: T::lit(score_hi),
                interp_lo: T::lit(interp_lo),
                interp_hi: T::lit(interp_hi),
            });
        }
        Ok(Self {
            metric_name: name,
            orientation: cfg.orientation,
            bins: bins.try_into().expect("five bins"),
        })
    }
}

/// Likert label of the bin holding `x`.
pub fn classify<T: Scalar>(table: &BinTable<T>, x: T) -> Result<Likert, IbsError> {
    Ok(table.classify(x)?.label)
}

pub fn ibs_score<T: Scalar>(table: &BinTable<T>, x: T) -> Result<T, IbsError> {
    table.score(x)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinConfig {
    pub label: Likert,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    pub metric: String,
    pub orientation: Orientation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation_width: Option<f64>,
    pub bins: Vec<BinConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinFile {
    #[serde(rename = "table")]
    pub tables: Vec<TableConfig>,
}

/// Validated tables keyed by case-insensitive metric name.
#[derive(Debug, Clone, PartialEq)]
pub struct BinTables<T> {
    tables: BTreeMap<String, BinTable<T>>,
}

fn metric_key(name: &str) -> String {
    let key: String = name
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase();
    match key.as_str() {
        "inceptionscore" => "is".into(),
        _ => key,
    }
}

impl<T: Scalar> BinTables<T> {
    pub fn shipped() -> Self {
        Self::from_toml_str(SHIPPED_BINS).expect("shipped bin configuration is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, IbsError> {
        let file: BinFile = toml::from_str(text).map_err(|e| IbsError::MalformedBinConfig(e.to_string()))?;
        Self::from_file(&file)
    }

    pub fn from_json_str(text: &str) -> Result<Self, IbsError> {
        let file: BinFile = serde_json::from_str(text).map_err(|e| IbsError::MalformedBinConfig(e.to_string()))?;
        Self::from_file(&file)
    }

    pub fn from_file(file: &BinFile) -> Result<Self, IbsError> {
        let mut out = Self { tables: BTreeMap::new() };
        for cfg in &file.tables {
            out.insert(BinTable::from_config(cfg)?);
        }
        Ok(out)
    }

    /// Registers (or replaces) a table.
    pub fn insert(&mut self, table: BinTable<T>) {
        self.tables.insert(metric_key(&table.metric_name), table);
    }

    pub fn register(&mut self, cfg: &TableConfig) -> Result<(), IbsError> {
        self.insert(BinTable::from_config(cfg)?);
        Ok(())
    }

    pub fn get(&self, metric: &str) -> Result<&BinTable<T>, IbsError> {
        self.tables
            .get(&metric_key(metric))
            .ok_or_else(|| IbsError::UnknownMetric(metric.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tables.values().map(|t| t.metric_name.as_str())
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }
}

/// Reads a bin file: `.json` as JSON, anything else as TOML.
pub fn load_bin_tables<T: Scalar>(path: impl AsRef<Path>) -> Result<BinTables<T>, IbsError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| IbsError::MalformedBinConfig(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        BinTables::from_json_str(&text)
    } else {
        BinTables::from_toml_str(&text)
    }
}
