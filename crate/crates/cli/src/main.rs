//! `glips` command-line tool.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 backend error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use glips::glips::GlipsError;
use glips::harness::HarnessError;
use glips::{BackendError, BaselineError, KernelFamily};

use config::OutputFormat;

#[derive(Debug, Parser)]
#[command(name = "glips", version, about = "Photorealism scoring and human-agreement evaluation for generated images")]
struct Cli {
    /// TOML or JSON settings file (model, bins, GLIPS parameters, output format).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ModelArgs {
    /// Backend manifest JSON path, or `fixture:<seed>` for the model-free fixture backend.
    #[arg(long, env = "GLIPS_MODEL", value_name = "MANIFEST")]
    pub model: Option<String>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct GlipsArgs {
    /// Weight of the local term in `S2 * (1 - lambda * S1)`.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Number of salient patches compared per image.
    #[arg(long)]
    pub k: Option<usize>,
    /// MMD kernel: rbf, polynomial or exponential (widths from the median heuristic).
    #[arg(long)]
    pub kernel: Option<KernelFamily>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score one generated image against its original.
    Score {
        original: PathBuf,
        generated: PathBuf,
        /// glips, ssim, ms-ssim, psnr, fid or kid.
        #[arg(long, default_value = "glips")]
        metric: String,
        #[command(flatten)]
        glips: GlipsArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Bin-table file (TOML or JSON); shipped tables by default.
        #[arg(long)]
        bins: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
    },
    /// Map a raw metric value onto the 0-5 Likert scale.
    Rescale {
        #[arg(long)]
        metric: String,
        #[arg(long, allow_negative_numbers = true)]
        value: f64,
        #[arg(long)]
        bins: Option<PathBuf>,
        /// Show the bin, the interpolation and the unit-slope variant.
        #[arg(long)]
        explain: bool,
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
    },
    /// Evaluate every model of a dataset against human scores and write a report.
    Evaluate {
        /// Dataset manifest JSON.
        #[arg(long)]
        manifest: PathBuf,
        /// Human score CSV (`model,question_id,mean_score`).
        #[arg(long)]
        human: PathBuf,
        /// Comma-separated metric list.
        #[arg(long, default_value = "glips,ssim,ms-ssim,psnr,fid,kid")]
        metrics: String,
        #[command(flatten)]
        glips: GlipsArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        bins: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "report")]
        out: PathBuf,
        /// Report table format: csv, json or markdown.
        #[arg(long, default_value = "csv")]
        format: glips::harness::ReportFormat,
    },
    /// Mean GLIPS MAPE against human scores for each candidate lambda.
    Sweep {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        human: PathBuf,
        /// Comma-separated lambdas in [0, 1].
        #[arg(long, default_value = "0,0.1,0.2,0.3,0.4,0.5,0.54,0.6,0.62,0.7,0.8,0.9,1")]
        lambdas: String,
        #[command(flatten)]
        glips: GlipsArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        bins: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
    },
    /// Dump per-patch attention and the top-k selection as JSON.
    InspectAttention {
        #[arg(long)]
        image: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        top_k: Option<usize>,
        /// Also write a grayscale attention heatmap PNG.
        #[arg(long)]
        heatmap: Option<PathBuf>,
    },
    /// Write the deterministic synthetic demo dataset.
    DemoData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn is_backend_failure(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        cause.downcast_ref::<BackendError>().is_some()
            || matches!(cause.downcast_ref::<GlipsError>(), Some(GlipsError::Backend(_)))
            || matches!(cause.downcast_ref::<BaselineError>(), Some(BaselineError::Kernel(GlipsError::Backend(_))))
            || cause.downcast_ref::<HarnessError>().is_some_and(HarnessError::is_backend)
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = config::CliConfig::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::Score { original, generated, metric, glips, model, bins, format } => {
            commands::score(&cfg, &original, &generated, &metric, &glips, &model, bins.as_deref(), format)
        }
        Command::Rescale { metric, value, bins, explain, format } => {
            commands::rescale(&cfg, &metric, value, bins.as_deref(), explain, format)
        }
        Command::Evaluate { manifest, human, metrics, glips, model, bins, out, format } => {
            commands::evaluate(&cfg, &manifest, &human, &metrics, &glips, &model, bins.as_deref(), &out, format)
        }
        Command::Sweep { manifest, human, lambdas, glips, model, bins, format } => {
            commands::sweep(&cfg, &manifest, &human, &lambdas, &glips, &model, bins.as_deref(), format)
        }
        Command::InspectAttention { image, model, top_k, heatmap } => {
            commands::inspect_attention(&cfg, &image, &model, top_k, heatmap.as_deref())
        }
        Command::DemoData { out, seed } => commands::demo_data(&out, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(if is_backend_failure(&err) { 3 } else { 2 })
        }
    }
}
