use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EvaluationReport, HarnessError, ReportRow};

/// Column order of the CSV report.
pub const CSV_HEADER: &str = "model,metric,actual,rescaled,human,likert_metric,likert_human,mad,mape";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
    Markdown,
}

impl ReportFormat {
    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Csv => "report.csv",
            ReportFormat::Json => "report.json",
            ReportFormat::Markdown => "report.md",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

/// Grouped-bar data: one series per metric plus a "Human" series, one value per model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub models: Vec<String>,
    pub series: Vec<PlotSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub name: String,
    /// Rescaled 0-5 values aligned with `PlotData::models`; `None` where no value exists.
    pub values: Vec<Option<f64>>,
}

impl PlotData {
    pub fn from_report(report: &EvaluationReport) -> Self {
        let mut models: Vec<String> = Vec::new();
        let mut metrics: Vec<String> = Vec::new();
        for row in &report.rows {
            if !models.contains(&row.model) {
                models.push(row.model.clone());
            }
            if !metrics.contains(&row.metric) {
                metrics.push(row.metric.clone());
            }
        }
        let lookup = |model: &str, metric: &str| {
            report
                .rows
                .iter()
                .find(|r| r.model == model && r.metric == metric)
        };
        let mut series: Vec<PlotSeries> = metrics
            .iter()
            .map(|metric| PlotSeries {
                name: metric.clone(),
                values: models
                    .iter()
                    .map(|m| lookup(m, metric).and_then(|r| r.rescaled))
                    .collect(),
            })
            .collect();
        if !models.is_empty() {
            series.push(PlotSeries {
                name: "Human".into(),
                values: models
                    .iter()
                    .map(|m| report.rows.iter().find(|r| &r.model == m).map(|r| r.human))
                    .collect(),
            });
        }
        Self { models, series }
    }

    /// Grouped bar chart on a fixed 0-5 axis.
    pub fn to_svg(&self) -> String {
        const PALETTE: [&str; 8] = [
            "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#9c755f",
        ];
        let bar = 14.0;
        let group_gap = 24.0;
        let (left, top, plot_h) = (48.0, 20.0, 200.0);
        let group_w = bar * self.series.len().max(1) as f64 + group_gap;
        let width = left + group_w * self.models.len().max(1) as f64 + 160.0;
        let height = top + plot_h + 60.0;
        let y = |v: f64| top + plot_h * (1.0 - v / 5.0);

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
        );
        for tick in 0..=5 {
            let ty = y(tick as f64);
            let _ = writeln!(
                svg,
                r##"<line x1="{left}" y1="{ty:.1}" x2="{:.1}" y2="{ty:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{tick}</text>"##,
                width - 160.0,
                left - 6.0,
                ty + 4.0
            );
        }
        for (mi, model) in self.models.iter().enumerate() {
            let gx = left + group_gap / 2.0 + group_w * mi as f64;
            for (si, s) in self.series.iter().enumerate() {
                if let Some(v) = s.values[mi] {
                    let v = v.clamp(0.0, 5.0);
                    let _ = writeln!(
                        svg,
                        r#"<rect x="{:.1}" y="{:.1}" width="{bar}" height="{:.1}" fill="{}"><title>{} {}: {v:.2}</title></rect>"#,
                        gx + bar * si as f64,
                        y(v),
                        plot_h * v / 5.0,
                        PALETTE[si % PALETTE.len()],
                        xml_escape(model),
                        xml_escape(&s.name)
                    );
                }
            }
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                gx + bar * self.series.len() as f64 / 2.0,
                top + plot_h + 16.0,
                xml_escape(model)
            );
        }
        let lx = width - 150.0;
        for (si, s) in self.series.iter().enumerate() {
            let ly = top + 14.0 * si as f64;
            let _ = writeln!(
                svg,
                r#"<rect x="{lx:.1}" y="{ly:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                PALETTE[si % PALETTE.len()],
                lx + 14.0,
                ly + 9.0,
                xml_escape(&s.name)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else if v > 0.0 {
        "inf".into()
    } else if v < 0.0 {
        "-inf".into()
    } else {
        "nan".into()
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn cells(row: &ReportRow) -> [String; 9] {
    [
        row.model.clone(),
        row.metric.clone(),
        num(row.actual),
        opt_num(row.rescaled),
        num(row.human),
        row.likert_metric.map(|l| l.as_str().to_string()).unwrap_or_default(),
        row.likert_human.as_str().to_string(),
        opt_num(row.mad),
        opt_num(row.mape),
    ]
}

pub fn report_to_csv(report: &EvaluationReport) -> Result<String, HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(','))
        .map_err(|e| HarnessError::Serialize(e.to_string()))?;
    for row in &report.rows {
        w.write_record(cells(row)).map_err(|e| HarnessError::Serialize(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Serialize(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Serialize(e.to_string()))
}

pub fn report_to_json(report: &EvaluationReport) -> Result<String, HarnessError> {
    serde_json::to_string_pretty(&report.rows).map_err(|e| HarnessError::Serialize(e.to_string()))
}

pub fn report_from_json(text: &str) -> Result<EvaluationReport, HarnessError> {
    let rows = serde_json::from_str(text).map_err(|e| HarnessError::Serialize(e.to_string()))?;
    Ok(EvaluationReport { rows })
}

pub fn report_to_markdown(report: &EvaluationReport) -> String {
    let header: Vec<&str> = CSV_HEADER.split(',').collect();
    let mut out = format!("| {} |\n|{}\n", header.join(" | "), "---|".repeat(header.len()));
    for row in &report.rows {
        let mut c = cells(row);
        for cell in c.iter_mut().filter(|c| c.is_empty()) {
            *cell = "-".into();
        }
        out.push_str(&format!("| {} |\n", c.join(" | ")));
    }
    out
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, HarnessError> {
    std::fs::write(&path, contents).map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

/// Writes the report table plus `plot_data.json` and `plot.svg` into `out_dir`, returning the paths written.
pub fn emit_report(report: &EvaluationReport, format: ReportFormat, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, HarnessError> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let table = match format {
        ReportFormat::Csv => report_to_csv(report)?,
        ReportFormat::Json => report_to_json(report)?,
        ReportFormat::Markdown => report_to_markdown(report),
    };
    let plot = PlotData::from_report(report);
    let plot_json = serde_json::to_string_pretty(&plot).map_err(|e| HarnessError::Serialize(e.to_string()))?;
    Ok(vec![
        write(dir.join(format.file_name()), &table)?,
        write(dir.join("plot_data.json"), &plot_json)?,
        write(dir.join("plot.svg"), &plot.to_svg())?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EvaluationReport {
        EvaluationReport {
            rows: vec![
                ReportRow::from_scores("DALLE2", "GLIPS", 0.31, Some(3.35), 3.63).unwrap(),
                ReportRow::from_scores("DALLE2", "PSNR", f64::INFINITY, None, 3.63).unwrap(),
                ReportRow::from_scores("Glide", "GLIPS", 0.73, Some(1.85), 2.04).unwrap(),
            ],
        }
    }

    #[test]
    fn csv_schema() {
        let csv = report_to_csv(&sample()).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(
            lines.next().unwrap(),
            "DALLE2,GLIPS,0.310000,3.350000,3.630000,Somewhat Agree,Somewhat Agree,0.280000,7.713499"
        );
        assert_eq!(lines.next().unwrap(), "DALLE2,PSNR,inf,,3.630000,,Somewhat Agree,,");
    }

    #[test]
    fn json_round_trip() {
        let report = sample();
        let back = report_from_json(&report_to_json(&report).unwrap()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn markdown_single_table() {
        let md = report_to_markdown(&sample());
        assert_eq!(md.lines().count(), 2 + 3);
        assert!(md.starts_with("| model | metric | actual |"));
        assert!(md.contains("| DALLE2 | PSNR | inf | - |"));
    }

    #[test]
    fn plot_groups_by_model() {
        let plot = PlotData::from_report(&sample());
        assert_eq!(plot.models, vec!["DALLE2", "Glide"]);
        let names: Vec<_> = plot.series.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, vec!["GLIPS", "PSNR", "Human"]);
        assert_eq!(plot.series[0].values, vec![Some(3.35), Some(1.85)]);
        assert_eq!(plot.series[1].values, vec![None, None]);
        assert_eq!(plot.series[2].values, vec![Some(3.63), Some(2.04)]);
        assert!(plot.to_svg().starts_with("<svg"));
    }

    #[test]
    fn emit_writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        for format in [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Markdown] {
            let paths = emit_report(&sample(), format, dir.path().join("out")).unwrap();
            assert_eq!(paths.len(), 3);
            assert!(paths.iter().all(|p| p.exists()));
        }
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        assert!(matches!(
            emit_report(&sample(), ReportFormat::Csv, &blocker),
            Err(HarnessError::Io { .. })
        ));
    }
}
