//! Comparison metrics (SSIM, MS-SSIM, PSNR, FID, KID) and the agreement
//! statistics used against human ratings (MAD, MAPE).

mod fid;
mod ssim;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::FeatureSet;
use crate::glips::{mmd, GlipsError, KernelSpec};
use crate::imagery::ImageTensor;
use crate::scalar::Scalar;

pub use fid::{fid, fit_gaussian, fit_gaussian_tokens, GaussianSummary};
pub use ssim::{ms_ssim, ssim, SsimParams, MS_SSIM_SCALES};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("image dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("image side {min_side} is smaller than the {required}-pixel window")]
    TooSmall { min_side: usize, required: usize },
    #[error("image side {min_side} too small for five MS-SSIM scales (need {required})")]
    TooSmallForScales { min_side: usize, required: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("need at least 2 feature vectors, got {0}")]
    InsufficientSamples(usize),
    #[error("eigendecomposition failed: {0}")]
    EigenFailure(String),
    #[error("input lengths differ")]
    LengthMismatch,
    #[error("no observations")]
    Empty,
    #[error("human score at position {0} is zero")]
    DivisionByZeroHumanScore(usize),
    #[error(transparent)]
    Kernel(#[from] GlipsError),
}

/// PSNR in dB; identical inputs have no finite value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", bound = "T: Scalar")]
pub enum Psnr<T> {
    Finite(T),
    Infinite,
}

impl<T: Scalar> Psnr<T> {
    /// The dB value, `+inf` for the sentinel.
    pub fn value(self) -> T {
        match self {
            Psnr::Finite(v) => v,
            Psnr::Infinite => T::infinity(),
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Psnr::Infinite)
    }
}

/// `10 log10(1 / MSE)` over all channels, for signals in `[0, 1]`.
pub fn psnr<T: Scalar>(a: &ImageTensor<T>, b: &ImageTensor<T>) -> Result<Psnr<T>, BaselineError> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(BaselineError::DimensionMismatch {
            a: (a.height(), a.width()),
            b: (b.height(), b.width()),
        });
    }
    let sum: T = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (*x - *y) * (*x - *y))
        .sum();
    let mse = sum / T::from_usize_lossy(a.data().len());
    if mse == T::zero() {
        return Ok(Psnr::Infinite);
    }
    Ok(Psnr::Finite(psnr_from_mse(mse)))
}

pub fn psnr_from_mse<T: Scalar>(mse: T) -> T {
    T::lit(10.0) * (T::one() / mse).log10()
}

/// Cubic polynomial kernel with `alpha = 1/dim`, `c = 1`.
pub fn kid_kernel<T: Scalar>() -> KernelSpec<T> {
    KernelSpec::polynomial(None, T::one(), 3)
}

/// Squared MMD under the KID polynomial kernel.
pub fn kid<T: Scalar>(f_o: &FeatureSet<T>, f_g: &FeatureSet<T>) -> Result<T, BaselineError> {
    Ok(mmd(f_o, f_g, &kid_kernel())?)
}

fn check_paired<T>(human: &[T], metric: &[T]) -> Result<(), BaselineError> {
    if human.len() != metric.len() {
        return Err(BaselineError::LengthMismatch);
    }
    if human.is_empty() {
        return Err(BaselineError::Empty);
    }
    Ok(())
}

/// Mean absolute difference.
pub fn mad<T: Scalar>(human: &[T], metric: &[T]) -> Result<T, BaselineError> {
    check_paired(human, metric)?;
    let total: T = human.iter().zip(metric).map(|(x, y)| (*x - *y).abs()).sum();
    Ok(total / T::from_usize_lossy(human.len()))
}

/// Mean absolute percentage error relative to the human scores, in percent.
pub fn mape<T: Scalar>(human: &[T], metric: &[T]) -> Result<T, BaselineError> {
    check_paired(human, metric)?;
    if let Some(pos) = human.iter().position(|x| *x == T::zero()) {
        return Err(BaselineError::DivisionByZeroHumanScore(pos));
    }
    let total: T = human.iter().zip(metric).map(|(x, y)| ((*x - *y) / *x).abs()).sum();
    Ok(T::lit(100.0) * total / T::from_usize_lossy(human.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_hand_cases() {
        let zero = ImageTensor::constant(4, 4, 0.0f64);
        assert_eq!(psnr(&zero, &zero).unwrap(), Psnr::Infinite);
        let half = psnr(&zero, &ImageTensor::constant(4, 4, 0.5)).unwrap().value();
        assert!((half - 6.0206).abs() < 1e-3);
        assert_eq!(psnr(&zero, &ImageTensor::constant(4, 4, 1.0)).unwrap(), Psnr::Finite(0.0));
        assert!(psnr(&zero, &ImageTensor::constant(4, 5, 1.0)).is_err());
    }

    #[test]
    fn psnr_decreases_with_mse() {
        assert!(psnr_from_mse(0.01f64) > psnr_from_mse(0.02));
    }

    #[test]
    fn kid_hand_case_and_symmetry() {
        let a = FeatureSet::new(vec![vec![0.0f64]]).unwrap();
        let b = FeatureSet::new(vec![vec![1.0f64]]).unwrap();
        assert_eq!(kid(&a, &b).unwrap(), 7.0);
        assert_eq!(kid(&b, &a).unwrap(), 7.0);
        assert_eq!(kid(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn mad_mape_table_rows() {
        assert!((mad(&[3.30f64], &[4.52]).unwrap() - 1.22).abs() < 1e-9);
        assert!((mad(&[2.04f64], &[4.71]).unwrap() - 2.67).abs() < 1e-9);
        assert!((mape(&[3.30f64], &[4.52]).unwrap() - 36.97).abs() < 0.05);
        assert!((mape(&[3.63f64], &[4.90]).unwrap() - 34.99).abs() < 0.05);
        assert_eq!(mad(&[1.0f64, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mape(&[1.0f64, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn mad_mape_errors() {
        assert!(matches!(mad::<f64>(&[], &[]), Err(BaselineError::Empty)));
        assert!(matches!(mad(&[1.0f64], &[1.0, 2.0]), Err(BaselineError::LengthMismatch)));
        assert!(matches!(
            mape(&[1.0f64, 0.0], &[1.0, 2.0]),
            Err(BaselineError::DivisionByZeroHumanScore(1))
        ));
    }
}
