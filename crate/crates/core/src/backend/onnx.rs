//! ViT backend running an exported ONNX graph with tract.

use std::marker::PhantomData;
use std::path::Path;

use tract_onnx::prelude::*;

use super::{check_input, AttentionMap, Backend, BackendError, BackendManifest, FeatureSet};
use crate::imagery::{to_normalized_chw, ImageTensor};
use crate::scalar::Scalar;

type Plan = SimplePlan<TypedFact, Box<dyn TypedOp>, Graph<TypedFact, Box<dyn TypedOp>>>;

fn load_err(e: impl std::fmt::Display) -> BackendError {
    BackendError::ModelLoadError(format!("{e:#}"))
}

fn infer_err(e: impl std::fmt::Display) -> BackendError {
    BackendError::InferenceError(format!("{e:#}"))
}

/// Runs a ViT exported with CLS attention and last hidden state outputs.
pub struct OnnxBackend<T> {
    manifest: BackendManifest,
    plan: Plan,
    _scalar: PhantomData<fn() -> T>,
}

impl<T: Scalar> OnnxBackend<T> {
    /// Loads the graph, checks the named input and outputs exist, and runs
    /// one probe inference to confirm the output shapes.
    pub fn load(manifest: BackendManifest) -> Result<Self, BackendError> {
        manifest.validate()?;
        let path = Path::new(&manifest.model_path);
        if !path.exists() {
            return Err(BackendError::ModelLoadError(format!("model file {} not found", path.display())));
        }
        let mut model = tract_onnx::onnx().model_for_path(path).map_err(load_err)?;

        let inputs = model.input_outlets().map_err(load_err)?.to_vec();
        let input_idx = inputs
            .iter()
            .position(|o| model.node(o.node).name == manifest.input_name)
            .ok_or_else(|| load_err(format!("model has no input `{}`", manifest.input_name)))?;
        let n = manifest.input_size;
        model = model
            .with_input_fact(input_idx, f32::fact([1, 3, n, n]).into())
            .map_err(load_err)?;

        let outputs = model.output_outlets().map_err(load_err)?.to_vec();
        let has_output = |name: &str| {
            outputs
                .iter()
                .any(|o| model.outlet_label(*o) == Some(name) || model.node(o.node).name == name)
        };
        for name in [&manifest.attention_output_name, &manifest.feature_output_name] {
            if !has_output(name) {
                return Err(BackendError::MissingOutput(name.clone()));
            }
        }
        model = model
            .with_output_names([manifest.attention_output_name.as_str(), manifest.feature_output_name.as_str()])
            .map_err(load_err)?;

        let plan = model
            .into_optimized()
            .map_err(load_err)?
            .into_runnable()
            .map_err(load_err)?;
        let backend = Self {
            manifest,
            plan,
            _scalar: PhantomData,
        };
        let probe = ImageTensor::constant(n, n, T::lit(0.5));
        backend.attention_map(&probe)?;
        backend.deep_features(&probe)?;
        Ok(backend)
    }

    fn run(&self, img: &ImageTensor<T>) -> Result<(Tensor, Tensor), BackendError> {
        check_input(&self.manifest, img)?;
        let n = self.manifest.input_size;
        let chw = to_normalized_chw(img, self.manifest.channel_mean, self.manifest.channel_std);
        let input = tract_ndarray::Array4::from_shape_vec((1, 3, n, n), chw).map_err(infer_err)?;
        let mut out = self.plan.run(tvec!(Tensor::from(input).into())).map_err(infer_err)?;
        if out.len() != 2 {
            return Err(BackendError::InferenceError(format!("expected 2 outputs, got {}", out.len())));
        }
        let feats = out.pop().unwrap().into_tensor();
        let att = out.pop().unwrap().into_tensor();
        Ok((att.cast_to::<f32>().map_err(infer_err)?.into_owned(), feats.cast_to::<f32>().map_err(infer_err)?.into_owned()))
    }

    fn patches(&self) -> usize {
        self.grid().patch_count()
    }
}

/// Reduces an attention output to the CLS-to-patch row, averaged over heads.
///
/// Accepted layouts: `[B, H, T, T]`, `[H, T, T]`, `[L, B, H, T, T]` (layer
/// picked by `layer`, last when `None`), or an already reduced `[T]` /
/// `[B, T]` row. `T` is the patch count plus one CLS token; reduced rows may
/// also omit the CLS entry.
pub(crate) fn cls_attention(shape: &[usize], data: &[f32], patches: usize, layer: Option<usize>) -> Result<Vec<f64>, BackendError> {
    let tokens = patches + 1;
    let mismatch = || {
        BackendError::ShapeMismatch(format!("attention output shape {shape:?} does not fit {patches} patches"))
    };
    match shape.len() {
        1 | 2 => {
            if shape.len() == 2 && shape[0] != 1 {
                return Err(mismatch());
            }
            match data.len() {
                l if l == tokens => Ok(data[1..].iter().map(|&v| v as f64).collect()),
                l if l == patches => Ok(data.iter().map(|&v| v as f64).collect()),
                _ => Err(mismatch()),
            }
        }
        3..=5 => {
            let (t0, t1) = (shape[shape.len() - 2], shape[shape.len() - 1]);
            if t0 != tokens || t1 != tokens {
                return Err(mismatch());
            }
            let heads = shape[shape.len() - 3];
            let block = heads * tokens * tokens;
            let offset = match shape.len() {
                3 => 0,
                4 if shape[0] == 1 => 0,
                5 if shape[1] == 1 => {
                    let layers = shape[0];
                    let l = layer.unwrap_or(layers - 1);
                    if l >= layers {
                        return Err(BackendError::ShapeMismatch(format!(
                            "attention layer {l} out of range for {layers} layers"
                        )));
                    }
                    l * block
                }
                _ => return Err(mismatch()),
            };
            let heads_data = &data[offset..offset + block];
            let mut row = vec![0.0f64; patches];
            for h in 0..heads {
                let cls = &heads_data[h * tokens * tokens..h * tokens * tokens + tokens];
                for (r, &v) in row.iter_mut().zip(&cls[1..]) {
                    *r += v as f64;
                }
            }
            row.iter_mut().for_each(|r| *r /= heads as f64);
            Ok(row)
        }
        _ => Err(mismatch()),
    }
}

/// Patch tokens of a `[B, T, D]` or `[T, D]` hidden state, CLS dropped.
pub(crate) fn patch_tokens(shape: &[usize], data: &[f32], patches: usize, dim: usize) -> Result<Vec<f32>, BackendError> {
    let ok = match shape {
        [1, t, d] | [t, d] => *d == dim && (*t == patches + 1 || *t == patches),
        _ => false,
    };
    if !ok {
        return Err(BackendError::ShapeMismatch(format!(
            "feature output shape {shape:?}, expected [1, {}, {dim}]",
            patches + 1
        )));
    }
    let skip = data.len() / dim - patches;
    Ok(data[skip * dim..].to_vec())
}

impl<T: Scalar> Backend<T> for OnnxBackend<T> {
    fn manifest(&self) -> &BackendManifest {
        &self.manifest
    }

    fn attention_map(&self, img: &ImageTensor<T>) -> Result<AttentionMap<T>, BackendError> {
        let (att, _) = self.run(img)?;
        let data = att.as_slice::<f32>().map_err(infer_err)?;
        let row = cls_attention(att.shape(), data, self.patches(), self.manifest.attention_layer)?;
        if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(BackendError::InferenceError("attention contains negative or non-finite values".into()));
        }
        Ok(AttentionMap::new(row.into_iter().map(T::lit).collect()))
    }

    fn deep_features(&self, img: &ImageTensor<T>) -> Result<FeatureSet<T>, BackendError> {
        let (_, feats) = self.run(img)?;
        let data = feats.as_slice::<f32>().map_err(infer_err)?;
        let tokens = patch_tokens(feats.shape(), data, self.patches(), self.manifest.feature_dim)?;
        FeatureSet::from_flat(self.manifest.feature_dim, tokens.into_iter().map(|v| T::lit(v as f64)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attention_layouts() {
        // 2 heads, 2 patches + CLS
        let head = |a: f32, b: f32| vec![0.2, a, b, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let mut data = head(0.4, 0.4);
        data.extend(head(0.2, 0.6));
        let r = cls_attention(&[1, 2, 3, 3], &data, 2, None).unwrap();
        assert!((r[0] - 0.3).abs() < 1e-6 && (r[1] - 0.5).abs() < 1e-6);

        let mut layered = vec![0.0f32; 18];
        layered.extend(&data);
        let r = cls_attention(&[2, 1, 2, 3, 3], &layered, 2, None).unwrap();
        assert!((r[1] - 0.5).abs() < 1e-6);
        let r = cls_attention(&[2, 1, 2, 3, 3], &layered, 2, Some(0)).unwrap();
        assert_eq!(r, vec![0.0, 0.0]);
        assert!(cls_attention(&[2, 1, 2, 3, 3], &layered, 2, Some(2)).is_err());

        assert_eq!(cls_attention(&[3], &[0.1, 0.5, 0.4], 2, None).unwrap().len(), 2);
        assert!(matches!(cls_attention(&[1, 2, 4, 4], &[0.0; 32], 2, None), Err(BackendError::ShapeMismatch(_))));
    }

    #[test]
    fn feature_layouts() {
        let data: Vec<f32> = (0..12).map(|v| v as f32).collect();
        assert_eq!(patch_tokens(&[1, 3, 4], &data, 2, 4).unwrap(), data[4..].to_vec());
        assert!(patch_tokens(&[1, 3, 4], &data, 2, 5).is_err());
        assert!(patch_tokens(&[2, 3, 2], &data, 2, 2).is_err());
    }
}
