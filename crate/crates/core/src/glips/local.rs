//! Local term: Dice agreement between the most-attended patches of each image.

use serde::{Deserialize, Serialize};

use super::GlipsError;
use crate::backend::AttentionMap;
use crate::imagery::{extract_pixel_patch, ImageTensor, PatchGrid};
use crate::scalar::Scalar;

/// Top-k patch indices, highest attention first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SalientSelection {
    pub indices: Vec<usize>,
    pub k: usize,
}

impl SalientSelection {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Picks the `k` highest-attention patches in descending order; ties go to the lower index.
pub fn select_salient<T: Scalar>(att: &AttentionMap<T>, k: usize) -> Result<SalientSelection, GlipsError> {
    if att.is_empty() {
        return Err(GlipsError::EmptyAttention);
    }
    if k == 0 {
        return Err(GlipsError::InvalidConfig("k must be at least 1".into()));
    }
    if att.scores.iter().any(|s| s.is_nan()) {
        return Err(GlipsError::InvalidConfig("attention contains NaN".into()));
    }
    let mut order: Vec<usize> = (0..att.len()).collect();
    // stable sort keeps index order among equal scores
    order.sort_by(|&a, &b| att.scores[b].partial_cmp(&att.scores[a]).expect("no NaN"));
    order.truncate(k.min(att.len()));
    Ok(SalientSelection { indices: order, k })
}

/// Modified Dice coefficient `2 * sum(a*b) / (sum(a) + sum(b))` on `[0, 1]` values.
///
/// Two all-zero patches count as perfect agreement.
pub fn dice_patch<T: Scalar>(a: &[T], b: &[T]) -> Result<T, GlipsError> {
    if a.len() != b.len() {
        return Err(GlipsError::LengthMismatch(a.len(), b.len()));
    }
    let in_range = |v: &T| *v >= T::zero() && *v <= T::one();
    if let Some(v) = a.iter().chain(b).find(|v| !in_range(v)) {
        return Err(GlipsError::ValueOutOfRange(v.as_f64()));
    }
    let (mut inter, mut sa, mut sb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        inter += x * y;
        sa += x;
        sb += y;
    }
    let denom = sa + sb;
    if denom == T::zero() {
        return Ok(T::one());
    }
    Ok((T::lit(2.0) * inter / denom).min(T::one()))
}

/// How patches of the two selections are matched up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// j-th most attended patch of one image with the j-th of the other.
    #[default]
    AttentionRank,
    /// Only patch indices selected in both images, matched by position.
    SpatialIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalSimilarity<T> {
    pub dice_mean: T,
    /// `1 - dice_mean`
    pub s1: T,
    pub pairs: usize,
}

pub fn local_similarity<T: Scalar>(
    orig: &ImageTensor<T>,
    gen: &ImageTensor<T>,
    grid: &PatchGrid,
    sel_o: &SalientSelection,
    sel_g: &SalientSelection,
    pairing: Pairing,
) -> Result<LocalSimilarity<T>, GlipsError> {
    if sel_o.len() != sel_g.len() {
        return Err(GlipsError::SelectionLengthMismatch(sel_o.len(), sel_g.len()));
    }
    let pairs: Vec<(usize, usize)> = match pairing {
        Pairing::AttentionRank => sel_o.indices.iter().copied().zip(sel_g.indices.iter().copied()).collect(),
        Pairing::SpatialIndex => sel_o
            .indices
            .iter()
            .filter(|i| sel_g.indices.contains(i))
            .map(|&i| (i, i))
            .collect(),
    };
    if pairs.is_empty() {
        return Err(GlipsError::EmptyPairing);
    }
    let mut total = T::zero();
    for &(io, ig) in &pairs {
        let a = extract_pixel_patch(orig, grid, io)?;
        let b = extract_pixel_patch(gen, grid, ig)?;
        total += dice_patch(&a, &b)?;
    }
    let dice_mean = total / T::from_usize_lossy(pairs.len());
    Ok(LocalSimilarity {
        dice_mean,
        s1: T::one() - dice_mean,
        pairs: pairs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn att(scores: &[f64]) -> AttentionMap<f64> {
        AttentionMap::new(scores.to_vec())
    }

    #[test]
    fn top_k_ordering_and_ties() {
        assert_eq!(select_salient(&att(&[0.1, 0.4, 0.3, 0.2]), 2).unwrap().indices, vec![1, 2]);
        assert_eq!(select_salient(&att(&[0.25; 4]), 3).unwrap().indices, vec![0, 1, 2]);
        let all = select_salient(&att(&[0.1, 0.4, 0.1, 0.3]), 10).unwrap();
        assert_eq!(all.indices, vec![1, 3, 0, 2]);
        assert!(matches!(select_salient(&att(&[]), 1), Err(GlipsError::EmptyAttention)));
        assert!(select_salient(&att(&[1.0]), 0).is_err());
    }

    #[test]
    fn dice_hand_cases() {
        assert_eq!(dice_patch(&[1.0f64; 8], &[1.0; 8]).unwrap(), 1.0);
        assert_eq!(dice_patch(&[1.0f64, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(dice_patch(&[0.5f64, 0.5], &[0.5, 0.5]).unwrap(), 0.5);
        assert_eq!(dice_patch(&[0.0f64; 4], &[0.0; 4]).unwrap(), 1.0);
        assert!(matches!(dice_patch(&[0.5f64], &[0.5, 0.5]), Err(GlipsError::LengthMismatch(1, 2))));
        assert!(matches!(dice_patch(&[1.5f64], &[0.5]), Err(GlipsError::ValueOutOfRange(_))));
        assert!(dice_patch(&[-0.1f64], &[0.5]).is_err());
    }

    #[test]
    fn local_similarity_extremes() {
        let grid = PatchGrid::new(32, 8).unwrap();
        let ones = ImageTensor::constant(32, 32, 1.0f64);
        let zeros = ImageTensor::constant(32, 32, 0.0f64);
        let sel = SalientSelection { indices: vec![0, 5, 9], k: 3 };

        let same = local_similarity(&ones, &ones, &grid, &sel, &sel, Pairing::AttentionRank).unwrap();
        assert_eq!((same.dice_mean, same.s1), (1.0, 0.0));
        let apart = local_similarity(&ones, &zeros, &grid, &sel, &sel, Pairing::AttentionRank).unwrap();
        assert_eq!((apart.dice_mean, apart.s1), (0.0, 1.0));
    }

    #[test]
    fn self_similarity_is_per_patch_square_ratio() {
        let grid = PatchGrid::new(16, 8).unwrap();
        let img = ImageTensor::<f64>::from_fn(16, 16, |y, x, c| ((y * 16 + x) * 3 + c) as f64 / 800.0);
        let sel = SalientSelection { indices: vec![3, 1], k: 2 };
        let got = local_similarity(&img, &img, &grid, &sel, &sel, Pairing::AttentionRank).unwrap();
        let oracle = |idx: usize| {
            let p = extract_pixel_patch(&img, &grid, idx).unwrap();
            p.iter().map(|v| v * v).sum::<f64>() / p.iter().sum::<f64>()
        };
        let expect = (oracle(3) + oracle(1)) / 2.0;
        assert!((got.dice_mean - expect).abs() < 1e-12);
        assert_eq!(got.s1, 1.0 - got.dice_mean);
    }

    #[test]
    fn spatial_pairing_uses_intersection() {
        let grid = PatchGrid::new(16, 8).unwrap();
        // patch 0 white, rest black
        let img = ImageTensor::<f64>::from_fn(16, 16, |y, x, _| if y < 8 && x < 8 { 1.0 } else { 0.0 });
        let a = SalientSelection { indices: vec![0, 1], k: 2 };
        let b = SalientSelection { indices: vec![2, 0], k: 2 };
        let got = local_similarity(&img, &img, &grid, &a, &b, Pairing::SpatialIndex).unwrap();
        assert_eq!(got.pairs, 1);
        assert_eq!(got.dice_mean, 1.0);

        let c = SalientSelection { indices: vec![3, 2], k: 2 };
        assert!(matches!(
            local_similarity(&img, &img, &grid, &a, &c, Pairing::SpatialIndex),
            Err(GlipsError::EmptyPairing)
        ));
        let short = SalientSelection { indices: vec![3], k: 1 };
        assert!(matches!(
            local_similarity(&img, &img, &grid, &a, &short, Pairing::AttentionRank),
            Err(GlipsError::SelectionLengthMismatch(2, 1))
        ));
    }
}
