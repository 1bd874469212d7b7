//! Deterministic demo dataset: procedurally drawn originals, four degraded
//! "model" variants of each, and a matching human-score CSV.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::harness::{DatasetEntry, DatasetManifest, HarnessError};
use crate::imagery::{encode_png, ImageTensor};

pub const SYNTHETIC_IMAGES: usize = 20;
pub const SYNTHETIC_SIDE: usize = 240;

/// Per-question human means used for the synthetic models.
pub const SYNTHETIC_HUMAN_CSV: &str = "model,question_id,mean_score
camera,1,4.12
camera,2,4.30
camera,3,4.10
camera,4,3.95
camera,5,3.83
dalle2,1,3.61
dalle2,2,3.80
dalle2,3,3.56
dalle2,4,3.47
dalle2,5,3.70
glide,1,2.05
glide,2,2.04
glide,3,1.94
glide,4,2.03
glide,5,2.15
stable_diffusion,1,3.27
stable_diffusion,2,3.34
stable_diffusion,3,3.32
stable_diffusion,4,3.23
stable_diffusion,5,3.35
dalle3,1,2.66
dalle3,2,2.84
dalle3,3,2.76
dalle3,4,2.61
dalle3,5,2.87
";

/// Paths of a written dataset.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub manifest_path: PathBuf,
    pub human_path: PathBuf,
    pub manifest: DatasetManifest,
}

struct Blob {
    cy: f64,
    cx: f64,
    r: f64,
    color: [f64; 3],
}

/// A smooth two-color gradient with a few soft discs and a stripe band.
pub fn synthetic_original(index: usize, side: usize, seed: u64) -> ImageTensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut color = || [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
    let (top, bottom) = (color(), color());
    let stripe = color();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64 + 1));
    let blobs: Vec<Blob> = (0..rng.gen_range(2..6))
        .map(|_| Blob {
            cy: rng.gen_range(0.1..0.9),
            cx: rng.gen_range(0.1..0.9),
            r: rng.gen_range(0.06..0.25),
            color: [rng.gen(), rng.gen(), rng.gen()],
        })
        .collect();
    let freq = rng.gen_range(8.0..30.0);
    let band = rng.gen_range(0.2..0.8);
    let s = side as f64;
    ImageTensor::from_fn(side, side, |y, x, c| {
        let (v, u) = (y as f64 / s, x as f64 / s);
        let mut px = top[c] * (1.0 - v) + bottom[c] * v;
        if (v - band).abs() < 0.06 {
            let w = 0.5 + 0.5 * (u * freq * std::f64::consts::TAU).sin();
            px = px * (1.0 - w) + stripe[c] * w;
        }
        for b in &blobs {
            let d = ((v - b.cy).powi(2) + (u - b.cx).powi(2)).sqrt();
            let a = (1.0 - (d - b.r) / 0.02).clamp(0.0, 1.0);
            px = px * (1.0 - a) + b.color[c] * a;
        }
        px
    })
}

fn box_blur(img: &ImageTensor<f64>, radius: usize) -> ImageTensor<f64> {
    let (h, w) = (img.height(), img.width());
    ImageTensor::from_fn(h, w, |y, x, c| {
        let (y0, y1) = (y.saturating_sub(radius), (y + radius).min(h - 1));
        let (x0, x1) = (x.saturating_sub(radius), (x + radius).min(w - 1));
        let mut sum = 0.0;
        for yy in y0..=y1 {
            for xx in x0..=x1 {
                sum += img.get(yy, xx, c);
            }
        }
        sum / ((y1 - y0 + 1) * (x1 - x0 + 1)) as f64
    })
}

fn add_noise(img: &ImageTensor<f64>, amplitude: f64, rng: &mut ChaCha8Rng) -> ImageTensor<f64> {
    let noise: Vec<f64> = (0..img.data().len()).map(|_| rng.gen_range(-amplitude..amplitude)).collect();
    let mut i = 0;
    ImageTensor::from_fn(img.height(), img.width(), |y, x, c| {
        let v = img.get(y, x, c) + noise[i];
        i += 1;
        v
    })
}

/// The degraded variant a synthetic model produces for an original.
pub fn synthetic_variant(model: &str, orig: &ImageTensor<f64>, index: usize, seed: u64) -> ImageTensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(index as u64) ^ model.len() as u64);
    match model {
        "dalle2" => box_blur(orig, 1),
        "stable_diffusion" => {
            let shifted = ImageTensor::from_fn(orig.height(), orig.width(), |y, x, c| 0.9 * orig.get(y, x, c) + 0.06);
            add_noise(&shifted, 0.04, &mut rng)
        }
        "dalle3" => {
            let swapped = ImageTensor::from_fn(orig.height(), orig.width(), |y, x, c| {
                0.7 * orig.get(y, x, c) + 0.3 * orig.get(y, x, (c + 1) % 3)
            });
            add_noise(&box_blur(&swapped, 2), 0.08, &mut rng)
        }
        _ => {
            let coarse = box_blur(orig, 3);
            let posterized = ImageTensor::from_fn(orig.height(), orig.width(), |y, x, c| {
                (coarse.get(y, x, c) * 3.0).round() / 3.0
            });
            add_noise(&posterized, 0.3, &mut rng)
        }
    }
}

pub const SYNTHETIC_MODELS: [&str; 4] = ["dalle2", "dalle3", "glide", "stable_diffusion"];

/// Writes PNGs, `manifest.json` and `human_scores.csv` under `dir`.
pub fn write_synthetic_dataset(dir: impl AsRef<Path>, seed: u64) -> Result<SyntheticDataset, HarnessError> {
    let dir = dir.as_ref();
    for sub in ["originals", "generated"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| HarnessError::io(&p, e))?;
    }
    let mut entries = Vec::with_capacity(SYNTHETIC_IMAGES);
    for i in 0..SYNTHETIC_IMAGES {
        let caption_id = format!("img{i:02}");
        let orig = synthetic_original(i, SYNTHETIC_SIDE, seed);
        let original_path = PathBuf::from(format!("originals/{caption_id}.png"));
        encode_png(&orig, dir.join(&original_path))?;
        let mut generated = std::collections::BTreeMap::new();
        for model in SYNTHETIC_MODELS {
            let rel = PathBuf::from(format!("generated/{model}_{caption_id}.png"));
            encode_png(&synthetic_variant(model, &orig, i, seed), dir.join(&rel))?;
            generated.insert(model.to_string(), rel);
        }
        entries.push(DatasetEntry {
            caption_id,
            original_path,
            generated,
        });
    }
    let manifest_path = dir.join("manifest.json");
    let manifest = DatasetManifest { entries };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| HarnessError::Serialize(e.to_string()))?;
    std::fs::write(&manifest_path, text).map_err(|e| HarnessError::io(&manifest_path, e))?;
    let human_path = dir.join("human_scores.csv");
    std::fs::write(&human_path, SYNTHETIC_HUMAN_CSV).map_err(|e| HarnessError::io(&human_path, e))?;
    Ok(SyntheticDataset {
        manifest: DatasetManifest::load(&manifest_path)?,
        manifest_path,
        human_path,
    })
}
