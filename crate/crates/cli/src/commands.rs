use std::path::Path;

use anyhow::{bail, Context};
use glips::backend::{load_backend, BackendManifest};
use glips::baselines::{fid, fit_gaussian_tokens, kid, ms_ssim, psnr, ssim};
use glips::glips::{glips_components, select_salient, GlipsConfig, KernelSpec};
use glips::harness::{
    self, emit_report, load_human_scores, parse_metric_list, DatasetManifest, EvalConfig, Metric, ReportFormat,
};
use glips::ibs::{BinTable, Likert, Orientation};
use glips::imagery::{decode_image, resize};
use glips::synthetic::write_synthetic_dataset;
use glips::{GlipsResult, ImageTensor};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{parse_list_f64, CliConfig, OutputFormat};
use crate::{GlipsArgs, ModelArgs};

fn glips_config(cfg: &CliConfig, args: &GlipsArgs) -> anyhow::Result<GlipsConfig<f64>> {
    let mut out = cfg.glips;
    if let Some(l) = args.lambda {
        out.lambda = l;
    }
    if let Some(k) = args.k {
        out.k = k;
    }
    if let Some(family) = args.kernel {
        out.kernel = KernelSpec::for_family(family);
    }
    out.validate()?;
    Ok(out)
}

fn manifest_for(cfg: &CliConfig, model: &ModelArgs) -> anyhow::Result<BackendManifest> {
    let spec = cfg.model(model.model.as_deref());
    Ok(BackendManifest::resolve(&spec)?)
}

fn load_image(path: &Path, manifest: &BackendManifest) -> anyhow::Result<ImageTensor<f64>> {
    let img = decode_image(path)?;
    Ok(resize(&img, &manifest.preprocess_spec())?)
}

fn finite_or_text(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(if v > 0.0 { "inf" } else { "-inf" })
    }
}

#[derive(Serialize)]
struct ScoreDocument {
    metric: &'static str,
    actual: Value,
    rescaled: Option<f64>,
    label: Option<Likert>,
    #[serde(skip_serializing_if = "Option::is_none")]
    components: Option<GlipsResult<f64>>,
}

#[allow(clippy::too_many_arguments)]
pub fn score(
    cfg: &CliConfig,
    original: &Path,
    generated: &Path,
    metric: &str,
    glips_args: &GlipsArgs,
    model: &ModelArgs,
    bins: Option<&Path>,
    format: Option<OutputFormat>,
) -> anyhow::Result<()> {
    let metric: Metric = metric.parse()?;
    let gcfg = glips_config(cfg, glips_args)?;
    let tables = cfg.bins(bins)?;
    let table = tables.get(metric.name())?;
    let manifest = manifest_for(cfg, model)?;
    let orig = load_image(original, &manifest)?;
    let gen = load_image(generated, &manifest)?;
    let backend = || load_backend::<f64>(&manifest);

    let mut components = None;
    let actual = match metric {
        Metric::Glips => {
            let r = glips_components(&orig, &gen, &*backend()?, &gcfg)?.score(gcfg.lambda);
            components = Some(r);
            r.score
        }
        Metric::Ssim => ssim(&orig, &gen, &Default::default())?,
        Metric::MsSsim => ms_ssim(&orig, &gen, &Default::default())?,
        Metric::Psnr => psnr(&orig, &gen)?.value(),
        Metric::Fid | Metric::Kid => {
            let b = backend()?;
            let (fo, fg) = (b.deep_features(&orig)?, b.deep_features(&gen)?);
            if metric == Metric::Fid {
                fid(&fit_gaussian_tokens(&fo)?, &fit_gaussian_tokens(&fg)?)?
            } else {
                kid(&fo, &fg)?
            }
        }
    };
    let (rescaled, label) = if actual.is_finite() {
        (Some(table.score(actual)?), Some(table.classify(actual)?.label))
    } else {
        (None, None)
    };
    let doc = ScoreDocument {
        metric: metric.name(),
        actual: finite_or_text(actual),
        rescaled,
        label,
        components,
    };
    match cfg.format(format) {
        OutputFormat::Json => println!("{}", serde_json::to_string_pretty(&doc)?),
        OutputFormat::Text => {
            println!("metric:   {}", doc.metric);
            println!("actual:   {}", if actual.is_finite() { format!("{actual:.6}") } else { format!("{actual} (not rescaled)") });
            if let (Some(r), Some(l)) = (rescaled, label) {
                println!("rescaled: {r:.4}");
                println!("label:    {l}");
            }
            if let Some(c) = components {
                println!("s1:       {:.6}", c.s1);
                println!("s2:       {:.6}", c.s2);
                println!("dice:     {:.6}", c.dice_mean);
            }
        }
    }
    Ok(())
}

fn explain(table: &BinTable<f64>, value: f64) -> anyhow::Result<Vec<String>> {
    let bin = table.classify(value)?;
    let (lo, hi) = (bin.interp_lo, bin.interp_hi);
    let frac = match table.orientation {
        Orientation::HigherIsBetter => format!("({value} - {lo}) / ({hi} - {lo})"),
        Orientation::LowerIsBetter => format!("({hi} - {value}) / ({hi} - {lo})"),
    };
    Ok(vec![
        format!(
            "bin:        {} (classification [{}, {}), interpolation span [{lo}, {hi}])",
            bin.label, bin.metric_lo, bin.metric_hi
        ),
        format!(
            "formula:    {} + ({} - {}) * clamp({frac}, 0, 1) = {:.4}",
            bin.score_lo,
            bin.score_hi,
            bin.score_lo,
            table.score(value)?
        ),
        format!(
            "unit slope: {} + {frac} = {:.4} (one full score unit per bin; may leave the category)",
            bin.score_lo,
            table.score_unit_slope(value)?
        ),
    ])
}

pub fn rescale(
    cfg: &CliConfig,
    metric: &str,
    value: f64,
    bins: Option<&Path>,
    show: bool,
    format: Option<OutputFormat>,
) -> anyhow::Result<()> {
    let tables = cfg.bins(bins)?;
    let table = tables.get(metric)?;
    let label = table.classify(value)?.label;
    let score = table.score(value)?;
    match cfg.format(format) {
        OutputFormat::Json => {
            let mut doc = json!({
                "metric": table.metric_name,
                "value": value,
                "label": label,
                "score": score,
            });
            if show {
                doc["unit_slope_score"] = json!(table.score_unit_slope(value)?);
                doc["explain"] = json!(explain(table, value)?);
            }
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
        OutputFormat::Text => {
            println!("{label}\t{score:.4}");
            if show {
                for line in explain(table, value)? {
                    println!("{line}");
                }
            }
        }
    }
    Ok(())
}

fn eval_config(cfg: &CliConfig, args: &GlipsArgs, bins: Option<&Path>) -> anyhow::Result<EvalConfig> {
    Ok(EvalConfig {
        glips: glips_config(cfg, args)?,
        ssim: Default::default(),
        bins: cfg.bins(bins)?,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    cfg: &CliConfig,
    manifest: &Path,
    human: &Path,
    metrics: &str,
    glips_args: &GlipsArgs,
    model: &ModelArgs,
    bins: Option<&Path>,
    out: &Path,
    format: ReportFormat,
) -> anyhow::Result<()> {
    let metrics = parse_metric_list(metrics)?;
    let ecfg = eval_config(cfg, glips_args, bins)?;
    let dataset = DatasetManifest::load(manifest)?;
    let humans = load_human_scores(human)?;
    let backend = load_backend::<f64>(&manifest_for(cfg, model)?)?;
    let report = harness::evaluate(&dataset, &humans, &metrics, &*backend, &ecfg)?;
    let written = emit_report(&report, format, out)?;
    for (metric, mean) in report.mean_mape_by_metric() {
        match mean {
            Some(m) => println!("{metric}\tmean MAPE {m:.2}%"),
            None => println!("{metric}\tmean MAPE n/a (no finite values)"),
        }
    }
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn sweep(
    cfg: &CliConfig,
    manifest: &Path,
    human: &Path,
    lambdas: &str,
    glips_args: &GlipsArgs,
    model: &ModelArgs,
    bins: Option<&Path>,
    format: Option<OutputFormat>,
) -> anyhow::Result<()> {
    let lambdas = parse_list_f64(lambdas).context("--lambdas")?;
    let ecfg = eval_config(cfg, glips_args, bins)?;
    let dataset = DatasetManifest::load(manifest)?;
    let humans = load_human_scores(human)?;
    let backend = load_backend::<f64>(&manifest_for(cfg, model)?)?;
    let result = harness::lambda_sweep(&dataset, &humans, &*backend, &ecfg, &lambdas)?;
    match cfg.format(format) {
        OutputFormat::Json => println!("{}", serde_json::to_string_pretty(&result)?),
        OutputFormat::Text => {
            println!("lambda\tmean_mape");
            for row in &result.rows {
                println!("{}\t{:.4}", row.lambda, row.mean_mape);
            }
            println!("best\t{}", result.best_lambda);
        }
    }
    Ok(())
}

pub fn inspect_attention(
    cfg: &CliConfig,
    image: &Path,
    model: &ModelArgs,
    top_k: Option<usize>,
    heatmap: Option<&Path>,
) -> anyhow::Result<()> {
    let manifest = manifest_for(cfg, model)?;
    let img = load_image(image, &manifest)?;
    let backend = load_backend::<f64>(&manifest)?;
    let att = backend.attention_map(&img)?;
    let k = top_k.unwrap_or(cfg.glips.k);
    let selection = select_salient(&att, k)?;
    let grid = backend.grid();
    if let Some(path) = heatmap {
        write_heatmap(path, &att.scores, grid.patches_per_side, grid.patch_size)?;
    }
    let doc = json!({
        "image": image,
        "patch_size": grid.patch_size,
        "patches_per_side": grid.patches_per_side,
        "scores": att.scores,
        "top_k": selection.indices,
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}

fn write_heatmap(path: &Path, scores: &[f64], per_side: usize, patch: usize) -> anyhow::Result<()> {
    let max = scores.iter().copied().fold(0.0, f64::max);
    let side = (per_side * patch) as u32;
    let img = image::GrayImage::from_fn(side, side, |x, y| {
        let idx = (y as usize / patch) * per_side + x as usize / patch;
        let v = if max > 0.0 { scores[idx] / max } else { 0.0 };
        image::Luma([(v * 255.0).round() as u8])
    });
    img.save(path).with_context(|| format!("writing heatmap {}", path.display()))?;
    Ok(())
}

pub fn demo_data(out: &Path, seed: u64) -> anyhow::Result<()> {
    if out.exists() && out.read_dir().map(|mut d| d.next().is_some()).unwrap_or(true) {
        bail!("{} exists and is not an empty directory", out.display());
    }
    let ds = write_synthetic_dataset(out, seed)?;
    println!("manifest: {}", ds.manifest_path.display());
    println!("human:    {}", ds.human_path.display());
    Ok(())
}
