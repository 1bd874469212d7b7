//! The combined global-local perceptual score.
//!
//! `score = S2 * (1 - lambda * S1)`, where `S1` is one minus the mean modified
//! Dice over paired top-k attention patches and `S2` is the squared MMD between
//! the images' deep-feature token sets. Lower is better; identical images score 0.

mod global;
mod local;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, FeatureSet};
use crate::imagery::{ImageTensor, ImageryError};
use crate::scalar::Scalar;

pub use global::{
    kernel_eval, mmd, mmd_unclamped, resolve_median_heuristic, Bandwidth, Kernel, KernelFamily, KernelSpec,
};
pub use local::{dice_patch, local_similarity, select_salient, LocalSimilarity, Pairing, SalientSelection};

#[derive(Debug, Error)]
pub enum GlipsError {
    #[error("attention map is empty")]
    EmptyAttention,
    #[error("feature set is empty")]
    EmptyFeatureSet,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("value {0} outside [0, 1]")]
    ValueOutOfRange(f64),
    #[error("selections differ in length: {0} vs {1}")]
    SelectionLengthMismatch(usize, usize),
    #[error("spatial pairing found no patch index selected in both images")]
    EmptyPairing,
    #[error("kernel hyperparameter `{0}` is still a median-heuristic placeholder")]
    UnresolvedHyperparameter(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Image(#[from] ImageryError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "T: Scalar")]
pub struct GlipsConfig<T> {
    pub lambda: T,
    pub k: usize,
    pub kernel: KernelSpec<T>,
    pub pairing: Pairing,
}

impl<T: Scalar> Default for GlipsConfig<T> {
    fn default() -> Self {
        Self {
            lambda: T::lit(0.62),
            k: 16,
            kernel: KernelSpec::default(),
            pairing: Pairing::AttentionRank,
        }
    }
}

impl<T: Scalar> GlipsConfig<T> {
    pub fn validate(&self) -> Result<(), GlipsError> {
        if !(self.lambda >= T::zero() && self.lambda <= T::one()) {
            return Err(GlipsError::InvalidConfig(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if self.k == 0 {
            return Err(GlipsError::InvalidConfig("k must be at least 1".into()));
        }
        self.kernel.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GlipsResult<T> {
    pub s1: T,
    pub s2: T,
    pub score: T,
    pub dice_mean: T,
}

/// `s2 * (1 - lambda * s1)`, clamped to `[0, 1]`.
pub fn combine<T: Scalar>(s1: T, s2: T, lambda: T) -> T {
    (s2 * (T::one() - lambda * s1)).max(T::zero()).min(T::one())
}

/// Lambda-independent parts of a score; recombine with [`combine`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlipsComponents<T> {
    pub local: LocalSimilarity<T>,
    pub s2: T,
}

impl<T: Scalar> GlipsComponents<T> {
    pub fn score(&self, lambda: T) -> GlipsResult<T> {
        GlipsResult {
            s1: self.local.s1,
            s2: self.s2,
            score: combine(self.local.s1, self.s2, lambda),
            dice_mean: self.local.dice_mean,
        }
    }
}

/// Global term for two token sets, resolving median-heuristic widths on the fly.
pub fn global_distance<T: Scalar>(
    f_o: &FeatureSet<T>,
    f_g: &FeatureSet<T>,
    kernel: &KernelSpec<T>,
) -> Result<T, GlipsError> {
    let resolved = resolve_median_heuristic(kernel, f_o, f_g);
    mmd(f_o, f_g, &resolved)
}

/// Runs the backend on both images and computes S1 and S2.
///
/// Both images must already be resized to the backend's input size.
pub fn glips_components<T: Scalar>(
    orig: &ImageTensor<T>,
    gen: &ImageTensor<T>,
    backend: &dyn Backend<T>,
    cfg: &GlipsConfig<T>,
) -> Result<GlipsComponents<T>, GlipsError> {
    cfg.validate()?;
    let grid = backend.grid();
    grid.check_image(orig)?;
    grid.check_image(gen)?;

    let sel_o = select_salient(&backend.attention_map(orig)?, cfg.k)?;
    let sel_g = select_salient(&backend.attention_map(gen)?, cfg.k)?;
    let local = local_similarity(orig, gen, &grid, &sel_o, &sel_g, cfg.pairing)?;

    let f_o = backend.deep_features(orig)?;
    let f_g = backend.deep_features(gen)?;
    let s2 = global_distance(&f_o, &f_g, &cfg.kernel)?;
    Ok(GlipsComponents { local, s2 })
}

pub fn glips_score<T: Scalar>(
    orig: &ImageTensor<T>,
    gen: &ImageTensor<T>,
    backend: &dyn Backend<T>,
    cfg: &GlipsConfig<T>,
) -> Result<GlipsResult<T>, GlipsError> {
    Ok(glips_components(orig, gen, backend, cfg)?.score(cfg.lambda))
}
