#![cfg(feature = "onnx")]
// Reference values come from running the torch module in tests/data/make_tiny_vit.py.

use std::path::PathBuf;

use glips::backend::{load_backend, BackendError, BackendManifest};
use glips::glips::{glips_score, GlipsConfig};
use glips::ImageTensor;

const ATTENTION: [f64; 4] = [0.1929031, 0.1943205, 0.1896065, 0.1820092];
const TOKEN0: [f64; 8] = [-0.1645688, 0.0436154, 0.3044388, -0.2843073, -0.7521517, 0.4072057, 0.3425204, 0.250837];
const TOKEN3: [f64; 8] = [-0.0547835, 0.2861162, 0.0075103, -0.5244954, -0.7119417, 0.2392336, 0.2862234, 0.1405144];

fn manifest() -> BackendManifest {
    let mut m = BackendManifest::fixture(0);
    m.model_path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data/tiny_vit.onnx")
        .to_string_lossy()
        .into_owned();
    m.input_size = 32;
    m.feature_dim = 8;
    m.channel_mean = [0.0; 3];
    m.channel_std = [1.0; 3];
    m
}

fn image() -> ImageTensor<f64> {
    ImageTensor::from_fn(32, 32, |y, x, c| (((y * 32 + x) * 3 + c) % 7) as f64 / 7.0)
}

#[test]
fn matches_reference_outputs() {
    let backend = load_backend::<f64>(&manifest()).unwrap();
    let img = image();
    let att = backend.attention_map(&img).unwrap();
    for (a, e) in att.scores.iter().zip(ATTENTION) {
        assert!((a - e).abs() < 1e-5, "{a} vs {e}");
    }
    let feats = backend.deep_features(&img).unwrap();
    assert_eq!((feats.count(), feats.dim()), (4, 8));
    for (tok, expect) in [(0, TOKEN0), (3, TOKEN3)] {
        for (a, e) in feats.token(tok).iter().zip(expect) {
            assert!((a - e).abs() < 1e-5, "token {tok}: {a} vs {e}");
        }
    }
}

#[test]
fn scores_through_the_model() {
    let backend = load_backend::<f64>(&manifest()).unwrap();
    let cfg = GlipsConfig { k: 2, ..Default::default() };
    let img = image();
    assert!(glips_score(&img, &img, &*backend, &cfg).unwrap().score.abs() < 1e-9);
    let other = ImageTensor::from_fn(32, 32, |y, x, _| (x + y) as f64 / 62.0);
    let s = glips_score(&img, &other, &*backend, &cfg).unwrap().score;
    assert!(s > 0.0 && s <= 1.0);
}

#[test]
fn load_errors() {
    let mut m = manifest();
    m.attention_output_name = "attn_probs".into();
    assert!(matches!(load_backend::<f64>(&m), Err(BackendError::MissingOutput(n)) if n == "attn_probs"));

    let mut m = manifest();
    m.feature_dim = 16;
    assert!(matches!(load_backend::<f64>(&m), Err(BackendError::ShapeMismatch(_))));

    let mut m = manifest();
    m.input_name = "images".into();
    assert!(matches!(load_backend::<f64>(&m), Err(BackendError::ModelLoadError(_))));

    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("bogus.onnx");
    std::fs::write(&bogus, b"not a model").unwrap();
    let mut m = manifest();
    m.model_path = bogus.to_string_lossy().into_owned();
    assert!(matches!(load_backend::<f64>(&m), Err(BackendError::ModelLoadError(_))));
}
