use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn glips(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glips"))
        .args(args)
        .env_remove("GLIPS_MODEL")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json stdout")
}

fn write_png(dir: &Path, name: &str, f: impl Fn(u32, u32) -> [u8; 3]) -> PathBuf {
    let path = dir.join(name);
    image::RgbImage::from_fn(224, 224, |x, y| image::Rgb(f(x, y))).save(&path).unwrap();
    path
}

fn gradient(dir: &Path) -> PathBuf {
    write_png(dir, "grad.png", |x, y| [x as u8, y as u8, ((x + y) / 2) as u8])
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn score_identical_images() {
    let dir = tempfile::tempdir().unwrap();
    let img = gradient(dir.path());
    let out = glips(&["score", p(&img), p(&img), "--format", "json"]);
    let doc = json(&out);
    assert_eq!(doc["metric"], "GLIPS");
    assert_eq!(doc["actual"].as_f64().unwrap(), 0.0);
    assert_eq!(doc["label"], "strongly_agree");
    assert_eq!(doc["rescaled"].as_f64().unwrap(), 5.0);

    let doc = json(&glips(&["score", p(&img), p(&img), "--metric", "ssim", "--format", "json"]));
    assert!((doc["actual"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(doc["rescaled"].as_f64().unwrap(), 5.0);

    let doc = json(&glips(&["score", p(&img), p(&img), "--metric", "psnr", "--format", "json"]));
    assert_eq!(doc["actual"], "inf");
    assert!(doc["rescaled"].is_null());
}

#[test]
fn score_different_images_text() {
    let dir = tempfile::tempdir().unwrap();
    let a = gradient(dir.path());
    let b = write_png(dir.path(), "flat.png", |_, _| [90, 90, 90]);
    let out = glips(&["score", p(&a), p(&b), "--lambda", "0.5", "--k", "8"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("metric:   GLIPS"));
    assert!(text.contains("s1:") && text.contains("s2:"));
}

#[test]
fn score_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let img = gradient(dir.path());
    let missing = dir.path().join("missing.png");
    assert_eq!(glips(&["score", p(&img), p(&missing)]).status.code(), Some(2));
    assert_eq!(glips(&["score", p(&img), p(&img), "--metric", "lpips"]).status.code(), Some(2));
    assert_eq!(glips(&["score", p(&img), p(&img), "--lambda", "1.5"]).status.code(), Some(2));
}

#[test]
fn missing_model_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let img = gradient(dir.path());
    let manifest = dir.path().join("model.json");
    std::fs::write(&manifest, r#"{"model_path": "absent.onnx", "feature_dim": 768}"#).unwrap();
    let out = glips(&["score", p(&img), p(&img), "--model", p(&manifest)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.onnx"));
}

#[test]
fn model_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let img = gradient(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_glips"))
        .args(["score", p(&img), p(&img)])
        .env("GLIPS_MODEL", dir.path().join("nope.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn rescale_values() {
    assert_eq!(stdout(&glips(&["rescale", "--metric", "ssim", "--value", "0.45"])).trim(), "Somewhat Agree\t3.5500");
    assert!(stdout(&glips(&["rescale", "--metric", "fid", "--value", "5"])).starts_with("Strongly Agree"));
    assert!(stdout(&glips(&["rescale", "--metric", "glips", "--value", "0.73"])).starts_with("Somewhat Disagree"));

    let explained = stdout(&glips(&["rescale", "--metric", "ssim", "--value", "0.45", "--explain"]));
    assert!(explained.contains("unit slope"));
    assert!(explained.contains("= 3.6000"), "{explained}");

    let doc = json(&glips(&["rescale", "--metric", "ms-ssim", "--value", "0.9", "--format", "json"]));
    assert!(doc["score"].as_f64().is_some());

    assert_eq!(glips(&["rescale", "--metric", "inception", "--value", "0.3"]).status.code(), Some(2));
    assert_eq!(glips(&["rescale", "--metric", "ssim", "--value", "NaN"]).status.code(), Some(2));
}

#[test]
fn config_file_sets_format_and_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("glips.toml");
    std::fs::write(&cfg, "output_format = \"json\"\n[glips]\nlambda = 0.3\n").unwrap();
    let doc = json(&glips(&["--config", p(&cfg), "rescale", "--metric", "ssim", "--value", "0.45"]));
    assert_eq!(doc["label"], "somewhat_agree");

    std::fs::write(&cfg, "colour = \"blue\"\n").unwrap();
    assert_eq!(glips(&["--config", p(&cfg), "rescale", "--metric", "ssim", "--value", "0.4"]).status.code(), Some(2));
}

fn demo(dir: &Path) -> (PathBuf, PathBuf) {
    let data = dir.join("demo");
    let out = glips(&["demo-data", "--out", p(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (data.join("manifest.json"), data.join("human_scores.csv"))
}

#[test]
fn evaluate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, human) = demo(dir.path());
    let run = |out: &str, extra: &[&str]| {
        let out = dir.path().join(out);
        let mut args = vec!["evaluate", "--manifest", p(&manifest), "--human", p(&human), "--out", p(&out)];
        args.extend_from_slice(extra);
        let o = glips(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a", &[]);
    let b = run("b", &[]);
    let csv_a = std::fs::read_to_string(a.join("report.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read_to_string(b.join("report.csv")).unwrap());
    assert_eq!(csv_a.lines().count(), 1 + 4 * 6);
    assert!(a.join("plot_data.json").exists() && a.join("plot.svg").exists());

    let c = run("c", &["--metrics", "glips,ssim", "--format", "json"]);
    let rows: Value = serde_json::from_str(&std::fs::read_to_string(c.join("report.json")).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 8);

    let out = glips(&["sweep", "--manifest", p(&manifest), "--human", p(&human), "--lambdas", "0,0.62,1", "--format", "json"]);
    let doc = json(&out);
    assert_eq!(doc["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn evaluate_missing_human_model_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, human) = demo(dir.path());
    let text = std::fs::read_to_string(&human).unwrap();
    let trimmed: String = text.lines().filter(|l| !l.starts_with("glide")).map(|l| format!("{l}\n")).collect();
    std::fs::write(&human, trimmed).unwrap();
    let out = glips(&["evaluate", "--manifest", p(&manifest), "--human", p(&human), "--out", p(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("glide"));
}

#[test]
fn demo_data_refuses_non_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("x"), "").unwrap();
    assert_eq!(glips(&["demo-data", "--out", p(dir.path())]).status.code(), Some(2));
}

#[test]
fn inspect_attention_finds_bright_patch() {
    let dir = tempfile::tempdir().unwrap();
    // white patch at grid row 3, column 5 on black
    let img = write_png(dir.path(), "spot.png", |x, y| {
        if (80..96).contains(&x) && (48..64).contains(&y) { [255; 3] } else { [0; 3] }
    });
    let heat = dir.path().join("heat.png");
    let doc = json(&glips(&["inspect-attention", "--image", p(&img), "--top-k", "1", "--heatmap", p(&heat)]));
    assert_eq!(doc["top_k"], serde_json::json!([3 * 14 + 5]));
    assert_eq!(doc["scores"].as_array().unwrap().len(), 196);
    assert!(heat.exists());

    let doc = json(&glips(&["inspect-attention", "--image", p(&img), "--top-k", "196"]));
    assert_eq!(doc["top_k"].as_array().unwrap().len(), 196);
    assert_eq!(glips(&["inspect-attention", "--image", p(&img), "--top-k", "0"]).status.code(), Some(2));
}
