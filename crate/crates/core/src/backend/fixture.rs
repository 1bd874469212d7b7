use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_input, AttentionMap, Backend, BackendError, BackendManifest, FeatureSet};
use crate::imagery::{extract_pixel_patch, ImageTensor, PatchGrid, CHANNELS};
use crate::scalar::{luma, Scalar};

/// Model-free backend with closed-form outputs.
///
/// * attention: per-patch mean luma, normalized to sum to one (uniform for an all-black image)
/// * features: token `i` is `R * p_i`, where `p_i` is the raw patch pixel vector and `R`
///   is a `feature_dim x (patch_size^2 * 3)` matrix drawn from the manifest seed
#[derive(Debug, Clone)]
pub struct FixtureBackend {
    manifest: BackendManifest,
    grid: PatchGrid,
    seed: u64,
    projection: Vec<f64>,
}

impl FixtureBackend {
    pub fn new(manifest: BackendManifest) -> Result<Self, BackendError> {
        manifest.validate()?;
        let seed = manifest
            .fixture_seed()
            .ok_or_else(|| BackendError::InvalidManifest(format!("`{}` is not a fixture model", manifest.model_path)))?;
        let grid = manifest.grid()?;
        let patch_len = grid.patch_size * grid.patch_size * CHANNELS;
        let projection = projection_matrix(seed, manifest.feature_dim, patch_len);
        Ok(Self {
            manifest,
            grid,
            seed,
            projection,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Row-major `feature_dim x patch_len` projection.
    pub fn projection(&self) -> &[f64] {
        &self.projection
    }
}

fn projection_matrix(seed: u64, rows: usize, cols: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (cols as f64).sqrt();
    (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0) * scale).collect()
}

impl<T: Scalar> Backend<T> for FixtureBackend {
    fn manifest(&self) -> &BackendManifest {
        &self.manifest
    }

    fn grid(&self) -> PatchGrid {
        self.grid
    }

    fn attention_map(&self, img: &ImageTensor<T>) -> Result<AttentionMap<T>, BackendError> {
        check_input(&self.manifest, img)?;
        let n = self.grid.patch_count();
        let mut scores = Vec::with_capacity(n);
        for idx in 0..n {
            let patch = extract_pixel_patch(img, &self.grid, idx)?;
            let sum: T = patch.chunks_exact(CHANNELS).map(|px| luma(px[0], px[1], px[2])).sum();
            scores.push(sum / T::from_usize_lossy(patch.len() / CHANNELS));
        }
        let total: T = scores.iter().copied().sum();
        if total > T::zero() {
            scores.iter_mut().for_each(|s| *s /= total);
        } else {
            scores.fill(T::one() / T::from_usize_lossy(n));
        }
        Ok(AttentionMap::new(scores))
    }

    fn deep_features(&self, img: &ImageTensor<T>) -> Result<FeatureSet<T>, BackendError> {
        check_input(&self.manifest, img)?;
        let dim = self.manifest.feature_dim;
        let mut data = Vec::with_capacity(self.grid.patch_count() * dim);
        for idx in 0..self.grid.patch_count() {
            let patch: Vec<f64> = extract_pixel_patch(img, &self.grid, idx)?
                .into_iter()
                .map(Scalar::as_f64)
                .collect();
            for row in self.projection.chunks_exact(patch.len()) {
                let v: f64 = row.iter().zip(&patch).map(|(r, p)| r * p).sum();
                data.push(T::lit(v));
            }
        }
        FeatureSet::from_flat(dim, data)
    }
}
