//! Attention and deep-feature providers.
//!
//! A [`Backend`] turns a preprocessed image into the two things the score
//! needs: a CLS-to-patch attention row ([`AttentionMap`]) and the patch-token
//! hidden states of the last encoder layer ([`FeatureSet`]). Two providers
//! exist: a deterministic [`FixtureBackend`] that needs no model file, and an
//! ONNX runtime (behind the `onnx` feature).

mod fixture;
#[cfg(feature = "onnx")]
mod onnx;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagery::{ImageTensor, ImageryError, PatchGrid, PreprocessSpec};
use crate::scalar::Scalar;

pub use fixture::FixtureBackend;
#[cfg(feature = "onnx")]
pub use onnx::OnnxBackend;

/// Prefix of `model_path` values that select the fixture backend.
pub const FIXTURE_PREFIX: &str = "fixture:";

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("failed to load model: {0}")]
    ModelLoadError(String),
    #[error("model does not expose output `{0}`")]
    MissingOutput(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("inference failed: {0}")]
    InferenceError(String),
    #[error("invalid backend manifest: {0}")]
    InvalidManifest(String),
    #[error(transparent)]
    Image(#[from] ImageryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionReduction {
    #[default]
    MeanOverHeads,
}

/// JSON description of a backend: which model, which outputs, and the input geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendManifest {
    pub model_path: String,
    #[serde(default = "default_input_name")]
    pub input_name: String,
    #[serde(default = "default_attention_name")]
    pub attention_output_name: String,
    #[serde(default = "default_feature_name")]
    pub feature_output_name: String,
    #[serde(default = "default_patch_size")]
    pub patch_size: usize,
    #[serde(default = "default_input_size")]
    pub input_size: usize,
    pub feature_dim: usize,
    #[serde(default = "default_mean")]
    pub channel_mean: [f64; 3],
    #[serde(default = "default_std")]
    pub channel_std: [f64; 3],
    /// Layer index when the attention output stacks several layers; `None` selects the last.
    #[serde(default)]
    pub attention_layer: Option<usize>,
    #[serde(default)]
    pub attention_reduction: AttentionReduction,
}

fn default_input_name() -> String {
    "pixel_values".into()
}
fn default_attention_name() -> String {
    "attentions".into()
}
fn default_feature_name() -> String {
    "last_hidden_state".into()
}
fn default_patch_size() -> usize {
    16
}
fn default_input_size() -> usize {
    224
}
fn default_mean() -> [f64; 3] {
    PreprocessSpec::default().channel_mean
}
fn default_std() -> [f64; 3] {
    PreprocessSpec::default().channel_std
}

/// Feature width of the fixture backend.
pub const FIXTURE_FEATURE_DIM: usize = 64;

impl BackendManifest {
    /// Manifest for the fixture backend with the standard 224/16 geometry.
    pub fn fixture(seed: u64) -> Self {
        Self {
            model_path: format!("{FIXTURE_PREFIX}{seed}"),
            input_name: default_input_name(),
            attention_output_name: default_attention_name(),
            feature_output_name: default_feature_name(),
            patch_size: default_patch_size(),
            input_size: default_input_size(),
            feature_dim: FIXTURE_FEATURE_DIM,
            channel_mean: default_mean(),
            channel_std: default_std(),
            attention_layer: None,
            attention_reduction: AttentionReduction::MeanOverHeads,
        }
    }

    /// Reads a manifest JSON file. Relative `model_path`s resolve against the manifest's directory.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::InvalidManifest(format!("{}: {e}", path.display())))?;
        let mut manifest: Self = serde_json::from_str(&text)
            .map_err(|e| BackendError::InvalidManifest(format!("{}: {e}", path.display())))?;
        if manifest.fixture_seed().is_none() {
            let model = PathBuf::from(&manifest.model_path);
            if model.is_relative() {
                if let Some(dir) = path.parent() {
                    manifest.model_path = dir.join(model).to_string_lossy().into_owned();
                }
            }
        }
        Ok(manifest)
    }

    /// Parses either a `fixture:<seed>` spec or a path to a manifest JSON file.
    pub fn resolve(spec: &str) -> Result<Self, BackendError> {
        match parse_fixture_seed(spec) {
            Some(Ok(seed)) => Ok(Self::fixture(seed)),
            Some(Err(e)) => Err(e),
            None => Self::from_json_file(spec),
        }
    }

    pub fn fixture_seed(&self) -> Option<u64> {
        parse_fixture_seed(&self.model_path).and_then(Result::ok)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.feature_dim == 0 {
            return Err(BackendError::InvalidManifest("feature_dim must be positive".into()));
        }
        if self.channel_std.iter().any(|s| !(*s > 0.0)) {
            return Err(BackendError::InvalidManifest("channel_std must be positive".into()));
        }
        self.grid()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<PatchGrid, BackendError> {
        PatchGrid::new(self.input_size, self.patch_size).map_err(|e| BackendError::InvalidManifest(e.to_string()))
    }

    /// Preprocessing that produces images this backend accepts.
    pub fn preprocess_spec(&self) -> PreprocessSpec {
        PreprocessSpec {
            target_size: self.input_size,
            channel_mean: self.channel_mean,
            channel_std: self.channel_std,
            ..Default::default()
        }
    }
}

fn parse_fixture_seed(spec: &str) -> Option<Result<u64, BackendError>> {
    spec.strip_prefix(FIXTURE_PREFIX).map(|seed| {
        seed.trim()
            .parse()
            .map_err(|_| BackendError::InvalidManifest(format!("bad fixture seed in `{spec}`")))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionSource {
    #[default]
    ClsToPatch,
}

/// Non-negative per-patch attention scores, one per grid patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMap<T> {
    pub scores: Vec<T>,
    pub source: AttentionSource,
}

impl<T: Scalar> AttentionMap<T> {
    pub fn new(scores: Vec<T>) -> Self {
        Self {
            scores,
            source: AttentionSource::ClsToPatch,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Token feature vectors (one per patch) from the final encoder layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> FeatureSet<T> {
    pub fn new(tokens: Vec<Vec<T>>) -> Result<Self, BackendError> {
        let dim = tokens.first().map(Vec::len).unwrap_or(0);
        if tokens.is_empty() || dim == 0 {
            return Err(BackendError::ShapeMismatch("feature set needs at least one non-empty token".into()));
        }
        if tokens.iter().any(|t| t.len() != dim) {
            return Err(BackendError::ShapeMismatch("tokens have differing lengths".into()));
        }
        Self::from_flat(dim, tokens.into_iter().flatten().collect())
    }

    pub fn from_flat(dim: usize, data: Vec<T>) -> Result<Self, BackendError> {
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(BackendError::ShapeMismatch(format!(
                "{} values do not form tokens of length {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(BackendError::InferenceError("non-finite feature value".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn token(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn tokens(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Concatenates token sets of equal width.
    pub fn concat<'a>(sets: impl IntoIterator<Item = &'a FeatureSet<T>>) -> Result<Self, BackendError> {
        let mut dim = None;
        let mut data = Vec::new();
        for set in sets {
            if *dim.get_or_insert(set.dim) != set.dim {
                return Err(BackendError::ShapeMismatch("cannot pool feature sets of different widths".into()));
            }
            data.extend_from_slice(&set.data);
        }
        Self::from_flat(dim.unwrap_or(0), data)
    }
}

/// Provider of attention maps and deep features for preprocessed images.
///
/// Implementations are deterministic for identical inputs and may be shared
/// across threads.
pub trait Backend<T: Scalar>: Send + Sync {
    fn manifest(&self) -> &BackendManifest;

    fn grid(&self) -> PatchGrid {
        self.manifest().grid().expect("manifest validated at load")
    }

    fn attention_map(&self, img: &ImageTensor<T>) -> Result<AttentionMap<T>, BackendError>;

    fn deep_features(&self, img: &ImageTensor<T>) -> Result<FeatureSet<T>, BackendError>;
}

/// Opens the backend a manifest describes.
///
/// `fixture:<seed>` model paths never touch the filesystem.
pub fn load_backend<T: Scalar>(manifest: &BackendManifest) -> Result<Box<dyn Backend<T>>, BackendError> {
    manifest.validate()?;
    if let Some(seed) = parse_fixture_seed(&manifest.model_path) {
        let _ = seed?;
        return Ok(Box::new(FixtureBackend::new(manifest.clone())?));
    }
    load_model(manifest)
}

#[cfg(feature = "onnx")]
fn load_model<T: Scalar>(manifest: &BackendManifest) -> Result<Box<dyn Backend<T>>, BackendError> {
    Ok(Box::new(OnnxBackend::load(manifest.clone())?))
}

#[cfg(not(feature = "onnx"))]
fn load_model<T: Scalar>(manifest: &BackendManifest) -> Result<Box<dyn Backend<T>>, BackendError> {
    if !Path::new(&manifest.model_path).exists() {
        return Err(BackendError::ModelLoadError(format!(
            "model file {} not found",
            manifest.model_path
        )));
    }
    Err(BackendError::ModelLoadError(
        "this build has no ONNX runtime; rebuild with `--features onnx` or use a fixture model".into(),
    ))
}

pub(crate) fn check_input<T: Scalar>(manifest: &BackendManifest, img: &ImageTensor<T>) -> Result<(), BackendError> {
    if img.height() != manifest.input_size || img.width() != manifest.input_size {
        return Err(BackendError::ShapeMismatch(format!(
            "backend expects {0}x{0} input, got {1}x{2}",
            manifest.input_size,
            img.height(),
            img.width()
        )));
    }
    Ok(())
}
