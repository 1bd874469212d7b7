//! Gaussian fits of feature sets and the Fréchet distance between them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::BaselineError;
use crate::backend::FeatureSet;
use crate::scalar::Scalar;

/// Mean and unbiased covariance (row-major `dim x dim`) of a feature sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary<T> {
    pub mean: Vec<T>,
    pub covariance: Vec<T>,
}

impl<T: Scalar> GaussianSummary<T> {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn cov(&self, i: usize, j: usize) -> T {
        self.covariance[i * self.dim() + j]
    }

    fn to_nalgebra(&self) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.dim();
        (
            DVector::from_iterator(d, self.mean.iter().map(|v| v.as_f64())),
            DMatrix::from_row_iterator(d, d, self.covariance.iter().map(|v| v.as_f64())),
        )
    }
}

pub fn fit_gaussian<T: Scalar, V: AsRef<[T]>>(features: &[V]) -> Result<GaussianSummary<T>, BaselineError> {
    let n = features.len();
    if n < 2 {
        return Err(BaselineError::InsufficientSamples(n));
    }
    let d = features[0].as_ref().len();
    if d == 0 || features.iter().any(|f| f.as_ref().len() != d) {
        return Err(BaselineError::LengthMismatch);
    }
    let nt = T::from_usize_lossy(n);
    let mut mean = vec![T::zero(); d];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f.as_ref()) {
            *m += *v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nt);

    let mut cov = vec![T::zero(); d * d];
    let mut centered = vec![T::zero(); d];
    for f in features {
        for ((c, v), m) in centered.iter_mut().zip(f.as_ref()).zip(&mean) {
            *c = *v - *m;
        }
        for i in 0..d {
            let ci = centered[i];
            for j in i..d {
                cov[i * d + j] += ci * centered[j];
            }
        }
    }
    let denom = T::from_usize_lossy(n - 1);
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / denom;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    Ok(GaussianSummary { mean, covariance: cov })
}

pub fn fit_gaussian_tokens<T: Scalar>(features: &FeatureSet<T>) -> Result<GaussianSummary<T>, BaselineError> {
    let rows: Vec<&[T]> = features.tokens().collect();
    fit_gaussian(&rows)
}

fn symmetric_eigen(m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>, BaselineError> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(BaselineError::EigenFailure("non-finite matrix entry".into()));
    }
    SymmetricEigen::try_new(m, f64::EPSILON, 100_000)
        .ok_or_else(|| BaselineError::EigenFailure("symmetric eigensolver did not converge".into()))
}

/// Eigenvalues below this are treated as zero.
const EIGEN_FLOOR: f64 = 1e-8;

/// `|mu1 - mu2|^2 + tr(S1 + S2) - 2 tr((S1 S2)^(1/2))`.
///
/// The trace of the product root is taken from the eigenvalues of the symmetric
/// matrix `S1^(1/2) S2 S1^(1/2)`. Linear algebra runs in f64 for every scalar type.
pub fn fid<T: Scalar>(g1: &GaussianSummary<T>, g2: &GaussianSummary<T>) -> Result<T, BaselineError> {
    if g1.dim() != g2.dim() || g1.covariance.len() != g1.dim() * g1.dim() || g2.covariance.len() != g2.dim() * g2.dim() {
        return Err(BaselineError::DimensionMismatch {
            a: (g1.dim(), g1.covariance.len()),
            b: (g2.dim(), g2.covariance.len()),
        });
    }
    let (mu1, s1) = g1.to_nalgebra();
    let (mu2, s2) = g2.to_nalgebra();

    let e1 = symmetric_eigen(s1.clone())?;
    let root_vals = e1.eigenvalues.map(|l| if l > EIGEN_FLOOR { l.sqrt() } else { 0.0 });
    let root = &e1.eigenvectors * DMatrix::from_diagonal(&root_vals) * e1.eigenvectors.transpose();
    let inner = &root * &s2 * &root;
    let inner = (&inner + inner.transpose()) * 0.5;
    let tr_covmean: f64 = symmetric_eigen(inner)?
        .eigenvalues
        .iter()
        .map(|&l| if l > EIGEN_FLOOR { l.sqrt() } else { 0.0 })
        .sum();

    let diff = mu1 - mu2;
    let value = diff.dot(&diff) + s1.trace() + s2.trace() - 2.0 * tr_covmean;
    Ok(T::lit(value.max(0.0)))
}
