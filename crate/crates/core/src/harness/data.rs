use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// One original image and its generated counterparts, keyed by model name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub caption_id: String,
    pub original_path: PathBuf,
    pub generated: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<DatasetEntry>,
}

impl DatasetManifest {
    /// Reads a manifest JSON file. Relative image paths resolve against the manifest's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut manifest: Self = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Manifest(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            manifest.rebase(base);
        }
        manifest.validate()?;
        Ok(manifest)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for entry in &mut self.entries {
            fix(&mut entry.original_path);
            entry.generated.values_mut().for_each(fix);
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut seen = BTreeSet::new();
        for entry in &self.entries {
            if entry.generated.is_empty() {
                return Err(HarnessError::Manifest(format!(
                    "entry `{}` has no generated images",
                    entry.caption_id
                )));
            }
            if !seen.insert(&entry.caption_id) {
                return Err(HarnessError::Manifest(format!("duplicate caption_id `{}`", entry.caption_id)));
            }
        }
        Ok(())
    }

    /// All model names, sorted.
    pub fn models(&self) -> BTreeSet<&str> {
        self.entries
            .iter()
            .flat_map(|e| e.generated.keys().map(String::as_str))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanRow {
    #[serde(rename = "model")]
    pub model_name: String,
    pub question_id: u8,
    pub mean_score: f64,
}

/// Per-question mean ratings, and the per-model average over questions.
#[derive(Debug, Clone, PartialEq)]
pub struct HumanScores {
    rows: Vec<HumanRow>,
    averages: BTreeMap<String, f64>,
}

impl HumanScores {
    pub fn from_rows(rows: Vec<HumanRow>) -> Result<Self, HarnessError> {
        if rows.is_empty() {
            return Err(HarnessError::MalformedCsv("no score rows".into()));
        }
        let mut grouped: BTreeMap<String, BTreeMap<u8, f64>> = BTreeMap::new();
        for row in &rows {
            if !(1..=5).contains(&row.question_id) {
                return Err(HarnessError::MalformedCsv(format!(
                    "question_id {} for `{}` outside 1-5",
                    row.question_id, row.model_name
                )));
            }
            if !(1.0..=5.0).contains(&row.mean_score) {
                return Err(HarnessError::ScoreOutOfRange {
                    model: row.model_name.clone(),
                    score: row.mean_score,
                });
            }
            if grouped
                .entry(row.model_name.clone())
                .or_default()
                .insert(row.question_id, row.mean_score)
                .is_some()
            {
                return Err(HarnessError::MalformedCsv(format!(
                    "duplicate question {} for `{}`",
                    row.question_id, row.model_name
                )));
            }
        }
        let averages = grouped
            .into_iter()
            .map(|(model, qs)| {
                let mean = qs.values().sum::<f64>() / qs.len() as f64;
                (model, mean)
            })
            .collect();
        Ok(Self { rows, averages })
    }

    /// Parses `model,question_id,mean_score` CSV.
    pub fn from_reader(reader: impl Read) -> Result<Self, HarnessError> {
        let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = csv.headers().map_err(|e| HarnessError::MalformedCsv(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["model", "question_id", "mean_score"] {
            return Err(HarnessError::MalformedCsv(format!(
                "expected header `model,question_id,mean_score`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let rows = csv
            .deserialize()
            .collect::<Result<Vec<HumanRow>, _>>()
            .map_err(|e| HarnessError::MalformedCsv(e.to_string()))?;
        Self::from_rows(rows)
    }

    pub fn rows(&self) -> &[HumanRow] {
        &self.rows
    }

    pub fn averages(&self) -> &BTreeMap<String, f64> {
        &self.averages
    }

    pub fn average(&self, model: &str) -> Option<f64> {
        self.averages.get(model).copied()
    }
}

pub fn load_human_scores(path: impl AsRef<Path>) -> Result<HumanScores, HarnessError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    HumanScores::from_reader(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CAMERA: &str = "model,question_id,mean_score\ncamera,1,4.12\ncamera,2,4.30\ncamera,3,4.10\ncamera,4,3.95\ncamera,5,3.83\n";

    #[test]
    fn camera_average() {
        let h = HumanScores::from_reader(CAMERA.as_bytes()).unwrap();
        assert!((h.average("camera").unwrap() - 4.06).abs() < 5e-3);
        assert_eq!(h.rows().len(), 5);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(HumanScores::from_reader("".as_bytes()), Err(HarnessError::MalformedCsv(_))));
        assert!(matches!(
            HumanScores::from_reader("model,question_id,mean_score\n".as_bytes()),
            Err(HarnessError::MalformedCsv(_))
        ));
        assert!(matches!(
            HumanScores::from_reader("model,q,score\na,1,2\n".as_bytes()),
            Err(HarnessError::MalformedCsv(_))
        ));
        assert!(matches!(
            HumanScores::from_reader("model,question_id,mean_score\na,1,5.5\n".as_bytes()),
            Err(HarnessError::ScoreOutOfRange { .. })
        ));
        assert!(matches!(
            HumanScores::from_reader("model,question_id,mean_score\na,6,3\n".as_bytes()),
            Err(HarnessError::MalformedCsv(_))
        ));
        assert!(matches!(
            HumanScores::from_reader("model,question_id,mean_score\na,1,3\na,1,4\n".as_bytes()),
            Err(HarnessError::MalformedCsv(_))
        ));
        assert!(matches!(
            HumanScores::from_reader("model,question_id,mean_score\na,1,abc\n".as_bytes()),
            Err(HarnessError::MalformedCsv(_))
        ));
    }

    #[test]
    fn manifest_paths_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(
            &path,
            r#"{"entries": [{"caption_id": "c1", "original_path": "o/1.png",
                "generated": {"glide": "g/1.png", "dalle2": "/abs/1.png"}}]}"#,
        )
        .unwrap();
        let m = DatasetManifest::load(&path).unwrap();
        assert_eq!(m.entries[0].original_path, dir.path().join("o/1.png"));
        assert_eq!(m.entries[0].generated["dalle2"], PathBuf::from("/abs/1.png"));
        assert_eq!(m.models().into_iter().collect::<Vec<_>>(), vec!["dalle2", "glide"]);

        std::fs::write(&path, r#"{"entries": [{"caption_id": "c1", "original_path": "o.png", "generated": {}}]}"#)
            .unwrap();
        assert!(matches!(DatasetManifest::load(&path), Err(HarnessError::Manifest(_))));
        std::fs::write(&path, "{").unwrap();
        assert!(matches!(DatasetManifest::load(&path), Err(HarnessError::Manifest(_))));
    }
}
