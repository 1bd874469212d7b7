//! Photorealism scoring for generated images.
//!
//! GLIPS compares a generated image with its reference on two levels: a local
//! term (Dice similarity of the pixel patches a vision transformer attends to
//! most) and a global term (kernel MMD between the two sets of patch-token
//! features). Raw scores from GLIPS and from the classical baselines are mapped
//! onto a 0-5 Likert scale by interpolative binning so they can be compared
//! with human ratings.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

pub mod backend;
pub mod baselines;
pub mod glips;
pub mod harness;
pub mod ibs;
pub mod imagery;
mod scalar;
pub mod synthetic;

pub use scalar::Scalar;

pub use backend::{load_backend, AttentionMap, Backend, BackendError, BackendManifest, FeatureSet, FixtureBackend};
pub use baselines::{fid, kid, mad, mape, ms_ssim, psnr, ssim, BaselineError, Psnr};
pub use glips::{
    combine, glips_components, glips_score, mmd, GlipsComponents, GlipsConfig, GlipsError, GlipsResult, KernelFamily,
    KernelSpec, Pairing,
};
pub use harness::{evaluate, lambda_sweep, EvalConfig, EvaluationReport, HarnessError, Metric, ReportRow};
pub use ibs::{likert_label, BinTable, BinTables, IbsError, Likert};
pub use imagery::{decode_image, ImageTensor, ImageryError, PatchGrid, PreprocessSpec};

pub type Image = ImageTensor<f64>;
pub type Image32 = ImageTensor<f32>;
pub type Features = FeatureSet<f64>;
pub type Features32 = FeatureSet<f32>;
pub type Attention = AttentionMap<f64>;
pub type Config = GlipsConfig<f64>;
pub type Config32 = GlipsConfig<f32>;
pub type Kernel = KernelSpec<f64>;
pub type Score = GlipsResult<f64>;
pub type Bins = BinTables<f64>;
pub type DynBackend = Box<dyn Backend<f64>>;
