//! Global term: squared MMD between the two images' token feature sets.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::GlipsError;
use crate::backend::FeatureSet;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    #[default]
    Rbf,
    Polynomial,
    Exponential,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rbf => "rbf",
            Self::Polynomial => "polynomial",
            Self::Exponential => "exponential",
        })
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = GlipsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rbf" | "gaussian" => Ok(Self::Rbf),
            "poly" | "polynomial" => Ok(Self::Polynomial),
            "exp" | "exponential" | "laplacian" => Ok(Self::Exponential),
            other => Err(GlipsError::InvalidConfig(format!("unknown kernel `{other}`"))),
        }
    }
}

/// A kernel width that is either fixed or estimated from the data.
///
/// Serialized as a number or the string `"median-heuristic"`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Bandwidth<T> {
    #[default]
    MedianHeuristic,
    Value(T),
}

const MEDIAN_HEURISTIC: &str = "median-heuristic";

impl<T: Scalar> Serialize for Bandwidth<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::MedianHeuristic => s.serialize_str(MEDIAN_HEURISTIC),
            Self::Value(v) => v.serialize(s),
        }
    }
}

impl<'de, T: Scalar> Deserialize<'de> for Bandwidth<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw<T> {
            Value(T),
            Name(String),
        }
        match Raw::<T>::deserialize(d)? {
            Raw::Value(v) => Ok(Self::Value(v)),
            Raw::Name(n) if n == MEDIAN_HEURISTIC || n == "median" => Ok(Self::MedianHeuristic),
            Raw::Name(n) => Err(serde::de::Error::custom(format!(
                "expected a number or \"{MEDIAN_HEURISTIC}\", got \"{n}\""
            ))),
        }
    }
}

/// Kernel family plus hyperparameters.
///
/// `rbf`: `exp(-gamma * |x - y|^2)`, `polynomial`: `(alpha * x.y + c)^d`,
/// `exponential`: `exp(-|x - y| / sigma)`. A missing `alpha` means `1 / dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "T: Scalar")]
pub struct KernelSpec<T> {
    pub family: KernelFamily,
    pub gamma: Bandwidth<T>,
    pub alpha: Option<T>,
    pub c: T,
    #[serde(rename = "d")]
    pub degree: u32,
    pub sigma: Bandwidth<T>,
}

impl<T: Scalar> Default for KernelSpec<T> {
    fn default() -> Self {
        Self {
            family: KernelFamily::Rbf,
            gamma: Bandwidth::MedianHeuristic,
            alpha: None,
            c: T::one(),
            degree: 3,
            sigma: Bandwidth::MedianHeuristic,
        }
    }
}

impl<T: Scalar> KernelSpec<T> {
    pub fn rbf(gamma: T) -> Self {
        Self {
            gamma: Bandwidth::Value(gamma),
            ..Self::default()
        }
    }

    pub fn exponential(sigma: T) -> Self {
        Self {
            family: KernelFamily::Exponential,
            sigma: Bandwidth::Value(sigma),
            ..Self::default()
        }
    }

    pub fn polynomial(alpha: Option<T>, c: T, degree: u32) -> Self {
        Self {
            family: KernelFamily::Polynomial,
            alpha,
            c,
            degree,
            ..Self::default()
        }
    }

    /// Default hyperparameters for a family (median-heuristic widths, cubic polynomial with `alpha = 1/dim`, `c = 1`).
    pub fn for_family(family: KernelFamily) -> Self {
        Self {
            family,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GlipsError> {
        let positive = |b: &Bandwidth<T>, name: &str| match b {
            Bandwidth::Value(v) if !(*v > T::zero()) || !v.is_finite() => {
                Err(GlipsError::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
            _ => Ok(()),
        };
        match self.family {
            KernelFamily::Rbf => positive(&self.gamma, "gamma"),
            KernelFamily::Exponential => positive(&self.sigma, "sigma"),
            KernelFamily::Polynomial if self.degree == 0 => {
                Err(GlipsError::InvalidConfig("polynomial degree must be at least 1".into()))
            }
            KernelFamily::Polynomial => Ok(()),
        }
    }

    pub fn is_resolved(&self) -> bool {
        match self.family {
            KernelFamily::Rbf => matches!(self.gamma, Bandwidth::Value(_)),
            KernelFamily::Exponential => matches!(self.sigma, Bandwidth::Value(_)),
            KernelFamily::Polynomial => true,
        }
    }

    /// Concrete kernel for inputs of width `dim`.
    pub fn resolve_for_dim(&self, dim: usize) -> Result<Kernel<T>, GlipsError> {
        self.validate()?;
        match self.family {
            KernelFamily::Rbf => match self.gamma {
                Bandwidth::Value(gamma) => Ok(Kernel::Rbf { gamma }),
                Bandwidth::MedianHeuristic => Err(GlipsError::UnresolvedHyperparameter("gamma")),
            },
            KernelFamily::Exponential => match self.sigma {
                Bandwidth::Value(sigma) => Ok(Kernel::Exponential { sigma }),
                Bandwidth::MedianHeuristic => Err(GlipsError::UnresolvedHyperparameter("sigma")),
            },
            KernelFamily::Polynomial => Ok(Kernel::Polynomial {
                alpha: self.alpha.unwrap_or_else(|| T::one() / T::from_usize_lossy(dim.max(1))),
                c: self.c,
                degree: self.degree,
            }),
        }
    }
}

/// A kernel with every hyperparameter fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel<T> {
    Rbf { gamma: T },
    Polynomial { alpha: T, c: T, degree: u32 },
    Exponential { sigma: T },
}

impl<T: Scalar> Kernel<T> {
    #[inline]
    pub fn eval(&self, x: &[T], y: &[T]) -> T {
        match *self {
            Kernel::Rbf { gamma } => (-gamma * squared_distance(x, y)).exp(),
            Kernel::Exponential { sigma } => (-squared_distance(x, y).sqrt() / sigma).exp(),
            Kernel::Polynomial { alpha, c, degree } => {
                let dot: T = x.iter().zip(y).map(|(a, b)| *a * *b).sum();
                (alpha * dot + c).powi(degree as i32)
            }
        }
    }
}

#[inline]
fn squared_distance<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = *a - *b;
            d * d
        })
        .sum()
}

/// Evaluates `spec` at `(x, y)`. Median-heuristic placeholders must be resolved first.
pub fn kernel_eval<T: Scalar>(spec: &KernelSpec<T>, x: &[T], y: &[T]) -> Result<T, GlipsError> {
    if x.len() != y.len() {
        return Err(GlipsError::LengthMismatch(x.len(), y.len()));
    }
    Ok(spec.resolve_for_dim(x.len())?.eval(x, y))
}

/// Median Euclidean distance over all distinct pairs of the pooled token set.
fn median_pairwise_distance<T: Scalar>(f_o: &FeatureSet<T>, f_g: &FeatureSet<T>) -> T {
    let pooled: Vec<&[T]> = f_o.tokens().chain(f_g.tokens()).collect();
    let mut dists = Vec::with_capacity(pooled.len() * pooled.len().saturating_sub(1) / 2);
    for (i, a) in pooled.iter().enumerate() {
        for b in &pooled[i + 1..] {
            dists.push(squared_distance(a, b).sqrt());
        }
    }
    if dists.is_empty() {
        return T::zero();
    }
    let mid = dists.len() / 2;
    let cmp = |a: &T, b: &T| a.partial_cmp(b).expect("finite distances");
    let (_, upper, _) = dists.select_nth_unstable_by(mid, cmp);
    let upper = *upper;
    if dists.len() % 2 == 1 {
        upper
    } else {
        let lower = dists[..mid].iter().copied().fold(T::neg_infinity(), T::max);
        (lower + upper) / T::lit(2.0)
    }
}

/// Replaces median-heuristic placeholders relevant to the kernel family.
///
/// `sigma` becomes the median pairwise distance of the pooled tokens (1 when that
/// median is zero) and, for RBF, `gamma = 1 / (2 sigma^2)`. Fixed values are kept.
pub fn resolve_median_heuristic<T: Scalar>(
    spec: &KernelSpec<T>,
    f_o: &FeatureSet<T>,
    f_g: &FeatureSet<T>,
) -> KernelSpec<T> {
    let needs = match spec.family {
        KernelFamily::Rbf => spec.gamma == Bandwidth::MedianHeuristic,
        KernelFamily::Exponential => spec.sigma == Bandwidth::MedianHeuristic,
        KernelFamily::Polynomial => false,
    };
    if !needs {
        return *spec;
    }
    let median = median_pairwise_distance(f_o, f_g);
    let sigma = if median > T::zero() && median.is_finite() { median } else { T::one() };
    let mut out = *spec;
    out.sigma = Bandwidth::Value(sigma);
    if spec.family == KernelFamily::Rbf {
        out.gamma = Bandwidth::Value(T::one() / (T::lit(2.0) * sigma * sigma));
    }
    out
}

/// Biased (V-statistic) squared MMD, diagonal terms included, without clamping.
pub fn mmd_unclamped<T: Scalar>(f_o: &FeatureSet<T>, f_g: &FeatureSet<T>, spec: &KernelSpec<T>) -> Result<T, GlipsError> {
    if f_o.dim() != f_g.dim() {
        return Err(GlipsError::LengthMismatch(f_o.dim(), f_g.dim()));
    }
    let kernel = spec.resolve_for_dim(f_o.dim())?;
    let mean_kernel = |a: &FeatureSet<T>, b: &FeatureSet<T>| -> T {
        let mut total = T::zero();
        for x in a.tokens() {
            for y in b.tokens() {
                total += kernel.eval(x, y);
            }
        }
        total / (T::from_usize_lossy(a.count()) * T::from_usize_lossy(b.count()))
    };
    let k_oo = mean_kernel(f_o, f_o);
    let k_gg = mean_kernel(f_g, f_g);
    let k_og = mean_kernel(f_o, f_g);
    Ok(k_oo + k_gg - T::lit(2.0) * k_og)
}

/// Squared MMD between two token sets, clamped below at zero.
pub fn mmd<T: Scalar>(f_o: &FeatureSet<T>, f_g: &FeatureSet<T>, spec: &KernelSpec<T>) -> Result<T, GlipsError> {
    Ok(mmd_unclamped(f_o, f_g, spec)?.max(T::zero()))
}
