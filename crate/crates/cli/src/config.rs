use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use glips::ibs::load_bin_tables;
use glips::{BinTables, GlipsConfig};
use serde::{Deserialize, Serialize};

pub const DEFAULT_MODEL: &str = "fixture:0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Text,
    Json,
}

/// Settings read from `--config`; every field is optional and flags take precedence.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    /// Backend manifest path or `fixture:<seed>`.
    pub model_manifest: Option<String>,
    /// Bin-table file; the shipped tables when absent.
    pub bins_path: Option<PathBuf>,
    pub glips: GlipsConfig<f64>,
    pub output_format: OutputFormat,
}

impl CliConfig {
    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        cfg.glips.validate()?;
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> anyhow::Result<Self> {
        path.map(Self::load).transpose().map(Option::unwrap_or_default)
    }

    /// Flag, then `GLIPS_MODEL` (folded into the flag by clap), then config file, then the fixture.
    pub fn model(&self, flag: Option<&str>) -> String {
        flag.map(str::to_string)
            .or_else(|| self.model_manifest.clone())
            .unwrap_or_else(|| DEFAULT_MODEL.to_string())
    }

    pub fn bins(&self, flag: Option<&Path>) -> anyhow::Result<BinTables<f64>> {
        match flag.or(self.bins_path.as_deref()) {
            Some(p) => Ok(load_bin_tables(p)?),
            None => Ok(BinTables::shipped()),
        }
    }

    pub fn format(&self, flag: Option<OutputFormat>) -> OutputFormat {
        flag.unwrap_or(self.output_format)
    }
}

pub fn parse_list_f64(list: &str) -> anyhow::Result<Vec<f64>> {
    let values = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().with_context(|| format!("`{s}` is not a number")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if values.is_empty() {
        bail!("empty list");
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_configs() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("c.toml");
        std::fs::write(
            &t,
            "model_manifest = \"fixture:3\"\noutput_format = \"json\"\n[glips]\nlambda = 0.54\nk = 8\n[glips.kernel]\nfamily = \"polynomial\"\nc = 0.5\n",
        )
        .unwrap();
        let cfg = CliConfig::load(&t).unwrap();
        assert_eq!(cfg.model(None), "fixture:3");
        assert_eq!(cfg.model(Some("fixture:1")), "fixture:1");
        assert_eq!(cfg.glips.lambda, 0.54);
        assert_eq!(cfg.glips.k, 8);
        assert_eq!(cfg.glips.kernel.c, 0.5);
        assert_eq!(cfg.glips.kernel.degree, 3);
        assert_eq!(cfg.format(None), OutputFormat::Json);

        let j = dir.path().join("c.json");
        std::fs::write(&j, r#"{"glips": {"kernel": {"family": "rbf", "gamma": 0.25}}}"#).unwrap();
        let cfg = CliConfig::load(&j).unwrap();
        assert_eq!(cfg.model(None), DEFAULT_MODEL);
        assert_eq!(cfg.glips.lambda, 0.62);

        std::fs::write(&j, r#"{"glips": {"lambda": 3}}"#).unwrap();
        assert!(CliConfig::load(&j).is_err());
        std::fs::write(&j, r#"{"unknown": 1}"#).unwrap();
        assert!(CliConfig::load(&j).is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list_f64("0.5, 0.62,1").unwrap(), vec![0.5, 0.62, 1.0]);
        assert!(parse_list_f64("").is_err());
        assert!(parse_list_f64("a").is_err());
    }
}
