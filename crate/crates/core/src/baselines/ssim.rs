//! SSIM and MS-SSIM on the luma plane with a Gaussian window and valid-region filtering.

use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::imagery::ImageTensor;
use crate::scalar::Scalar;

pub const MS_SSIM_SCALES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "T: Scalar")]
pub struct SsimParams<T> {
    pub window: usize,
    pub sigma: T,
    pub k1: T,
    pub k2: T,
    pub dynamic_range: T,
    pub msssim_weights: [T; MS_SSIM_SCALES],
}

impl<T: Scalar> Default for SsimParams<T> {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: T::lit(1.5),
            k1: T::lit(0.01),
            k2: T::lit(0.03),
            dynamic_range: T::one(),
            msssim_weights: [0.0448, 0.2856, 0.3001, 0.2363, 0.1333].map(T::lit),
        }
    }
}

impl<T: Scalar> SsimParams<T> {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.window == 0 || !(self.sigma > T::zero()) || !(self.dynamic_range > T::zero()) {
            return Err(BaselineError::InvalidParams("window, sigma and dynamic range must be positive".into()));
        }
        let sum: T = self.msssim_weights.iter().copied().sum();
        if (sum - T::one()).abs() > T::lit(1e-3) {
            return Err(BaselineError::InvalidParams(format!("MS-SSIM weights sum to {sum}, expected 1")));
        }
        Ok(())
    }

    fn gaussian(&self) -> Vec<T> {
        let half = T::from_usize_lossy(self.window - 1) / T::lit(2.0);
        let two_var = T::lit(2.0) * self.sigma * self.sigma;
        let raw: Vec<T> = (0..self.window)
            .map(|i| {
                let d = T::from_usize_lossy(i) - half;
                (-(d * d) / two_var).exp()
            })
            .collect();
        let total: T = raw.iter().copied().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

/// Single-channel plane.
#[derive(Debug, Clone)]
struct Plane<T> {
    h: usize,
    w: usize,
    v: Vec<T>,
}

impl<T: Scalar> Plane<T> {
    fn luma(img: &ImageTensor<T>) -> Self {
        Self {
            h: img.height(),
            w: img.width(),
            v: img.luminance(),
        }
    }

    fn zip(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        Self {
            h: self.h,
            w: self.w,
            v: self.v.iter().zip(&other.v).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    /// Separable valid-region filtering with a symmetric 1-D kernel.
    fn filter_valid(&self, k: &[T]) -> Self {
        let n = k.len();
        let (oh, ow) = (self.h + 1 - n, self.w + 1 - n);
        let mut rows = vec![T::zero(); self.h * ow];
        for y in 0..self.h {
            let src = &self.v[y * self.w..(y + 1) * self.w];
            for x in 0..ow {
                rows[y * ow + x] = k.iter().zip(&src[x..x + n]).map(|(a, b)| *a * *b).sum();
            }
        }
        let mut out = vec![T::zero(); oh * ow];
        for y in 0..oh {
            for x in 0..ow {
                out[y * ow + x] = k.iter().enumerate().map(|(i, a)| *a * rows[(y + i) * ow + x]).sum();
            }
        }
        Self { h: oh, w: ow, v: out }
    }

    /// 2x2 average pooling; odd edges are padded by repeating the last row/column.
    fn downsample(&self) -> Self {
        let (oh, ow) = (self.h.div_ceil(2), self.w.div_ceil(2));
        let at = |y: usize, x: usize| self.v[y.min(self.h - 1) * self.w + x.min(self.w - 1)];
        let quarter = T::lit(0.25);
        let mut v = Vec::with_capacity(oh * ow);
        for y in 0..oh {
            for x in 0..ow {
                let (y0, x0) = (2 * y, 2 * x);
                v.push((at(y0, x0) + at(y0, x0 + 1) + at(y0 + 1, x0) + at(y0 + 1, x0 + 1)) * quarter);
            }
        }
        Self { h: oh, w: ow, v }
    }
}

/// Mean SSIM and mean contrast-structure term over the valid window positions.
fn ssim_and_cs<T: Scalar>(a: &Plane<T>, b: &Plane<T>, p: &SsimParams<T>, kernel: &[T]) -> (T, T) {
    let c1 = (p.k1 * p.dynamic_range).powi(2);
    let c2 = (p.k2 * p.dynamic_range).powi(2);
    let mu_a = a.filter_valid(kernel);
    let mu_b = b.filter_valid(kernel);
    let e_aa = a.zip(a, |x, y| x * y).filter_valid(kernel);
    let e_bb = b.zip(b, |x, y| x * y).filter_valid(kernel);
    let e_ab = a.zip(b, |x, y| x * y).filter_valid(kernel);

    let two = T::lit(2.0);
    let (mut ssim_sum, mut cs_sum) = (T::zero(), T::zero());
    for i in 0..mu_a.v.len() {
        let (ma, mb) = (mu_a.v[i], mu_b.v[i]);
        let var_a = e_aa.v[i] - ma * ma;
        let var_b = e_bb.v[i] - mb * mb;
        let cov = e_ab.v[i] - ma * mb;
        let cs = (two * cov + c2) / (var_a + var_b + c2);
        let l = (two * ma * mb + c1) / (ma * ma + mb * mb + c1);
        ssim_sum += l * cs;
        cs_sum += cs;
    }
    let n = T::from_usize_lossy(mu_a.v.len());
    (ssim_sum / n, cs_sum / n)
}

fn check_pair<T: Scalar>(a: &ImageTensor<T>, b: &ImageTensor<T>) -> Result<(), BaselineError> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(BaselineError::DimensionMismatch {
            a: (a.height(), a.width()),
            b: (b.height(), b.width()),
        });
    }
    Ok(())
}

pub fn ssim<T: Scalar>(a: &ImageTensor<T>, b: &ImageTensor<T>, p: &SsimParams<T>) -> Result<T, BaselineError> {
    p.validate()?;
    check_pair(a, b)?;
    if a.height().min(a.width()) < p.window {
        return Err(BaselineError::TooSmall {
            min_side: a.height().min(a.width()),
            required: p.window,
        });
    }
    let kernel = p.gaussian();
    Ok(ssim_and_cs(&Plane::luma(a), &Plane::luma(b), p, &kernel).0)
}

/// Five-scale MS-SSIM: `prod(cs_j^w_j, j < 4) * ssim_4^w_4`, negative terms clamped to zero.
pub fn ms_ssim<T: Scalar>(a: &ImageTensor<T>, b: &ImageTensor<T>, p: &SsimParams<T>) -> Result<T, BaselineError> {
    p.validate()?;
    check_pair(a, b)?;
    let required = p.window << (MS_SSIM_SCALES - 1);
    let min_side = a.height().min(a.width());
    if min_side < required {
        return Err(BaselineError::TooSmallForScales { min_side, required });
    }
    let kernel = p.gaussian();
    let (mut pa, mut pb) = (Plane::luma(a), Plane::luma(b));
    let mut result = T::one();
    for scale in 0..MS_SSIM_SCALES {
        let (s, cs) = ssim_and_cs(&pa, &pb, p, &kernel);
        let term = if scale + 1 == MS_SSIM_SCALES { s } else { cs };
        result *= term.max(T::zero()).powf(p.msssim_weights[scale]);
        if scale + 1 < MS_SSIM_SCALES {
            pa = pa.downsample();
            pb = pb.downsample();
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(seed: usize) -> ImageTensor<f64> {
        ImageTensor::from_fn(48, 40, |y, x, c| (((y * 31 + x * 17 + c * 7 + seed * 13) % 97) as f64) / 96.0)
    }

    /// Direct 2-D window SSIM, no separability or shared filtering.
    fn naive_ssim(a: &ImageTensor<f64>, b: &ImageTensor<f64>) -> f64 {
        let p = SsimParams::<f64>::default();
        let g = p.gaussian();
        let (la, lb) = (a.luminance(), b.luminance());
        let (h, w, n) = (a.height(), a.width(), 11);
        let (c1, c2) = (1e-4, 9e-4);
        let mut total = 0.0;
        let mut count = 0.0;
        for y in 0..=h - n {
            for x in 0..=w - n {
                let (mut ma, mut mb) = (0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let wt = g[i] * g[j];
                        ma += wt * la[(y + i) * w + x + j];
                        mb += wt * lb[(y + i) * w + x + j];
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let wt = g[i] * g[j];
                        let da = la[(y + i) * w + x + j] - ma;
                        let db = lb[(y + i) * w + x + j] - mb;
                        va += wt * da * da;
                        vb += wt * db * db;
                        cov += wt * da * db;
                    }
                }
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1.0;
            }
        }
        total / count
    }

    #[test]
    fn identical_and_constant_images() {
        let p = SsimParams::default();
        let a = textured(1);
        assert_eq!(ssim(&a, &a, &p).unwrap(), 1.0);
        let half = ImageTensor::constant(20, 20, 0.5f64);
        assert_eq!(ssim(&half, &half, &p).unwrap(), 1.0);
    }

    #[test]
    fn black_vs_white_matches_closed_form() {
        // constant windows: mu 0 and 1, zero variance -> C1 / (1 + C1)
        let got = ssim(
            &ImageTensor::constant(16, 16, 0.0f64),
            &ImageTensor::constant(16, 16, 1.0f64),
            &SsimParams::default(),
        )
        .unwrap();
        let white = 0.299 + 0.587 + 0.114;
        let expect = 1e-4 / (white * white + 1e-4);
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn agrees_with_naive_window_sum() {
        let (a, b) = (textured(1), textured(4));
        let fast = ssim(&a, &b, &SsimParams::default()).unwrap();
        let slow = naive_ssim(&a, &b);
        assert!((fast - slow).abs() < 1e-10, "{fast} vs {slow}");
        let sym = ssim(&b, &a, &SsimParams::default()).unwrap();
        assert!((fast - sym).abs() < 1e-12);
    }

    #[test]
    fn ms_ssim_identity_and_size_check() {
        let p = SsimParams::default();
        let big = ImageTensor::<f64>::from_fn(176, 180, |y, x, _| ((y * x) % 23) as f64 / 22.0);
        assert!((ms_ssim(&big, &big, &p).unwrap() - 1.0).abs() < 1e-9);
        let small = ImageTensor::constant(175, 200, 0.2f64);
        assert!(matches!(
            ms_ssim(&small, &small, &p),
            Err(BaselineError::TooSmallForScales { min_side: 175, required: 176 })
        ));
    }

    #[test]
    fn rejects_mismatch_and_bad_weights() {
        let p = SsimParams::default();
        let a = ImageTensor::constant(16, 16, 0.1f64);
        let b = ImageTensor::constant(16, 17, 0.1f64);
        assert!(matches!(ssim(&a, &b, &p), Err(BaselineError::DimensionMismatch { .. })));
        let bad = SsimParams { msssim_weights: [0.2; 5].map(|w| w * 1.1), ..p };
        assert!(matches!(ssim(&a, &a, &bad), Err(BaselineError::InvalidParams(_))));
        assert!(matches!(
            ssim(&ImageTensor::constant(8, 8, 0.1f64), &ImageTensor::constant(8, 8, 0.1f64), &p),
            Err(BaselineError::TooSmall { .. })
        ));
    }

    #[test]
    fn downsample_pads_odd_edges() {
        let p = Plane { h: 3, w: 3, v: (0..9).map(|v| v as f64).collect() };
        let d = p.downsample();
        assert_eq!((d.h, d.w), (2, 2));
        assert_eq!(d.v, vec![2.0, 3.5, 6.5, 8.0]);
    }
}
