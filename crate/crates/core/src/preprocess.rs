//! Image standardization: center crop to a square, bilinear resize,
//! seeded flip augmentation and per-channel normalization.

use std::path::Path;

use image::{imageops, RgbImage};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::nn::Tensor;
use crate::seed;

/// Channel statistics the ImageNet-pretrained backbone was published with.
pub const IMAGENET_MEANS: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STDS: [f32; 3] = [0.229, 0.224, 0.225];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub target_side: u32,
    pub normalize_means: [f32; 3],
    pub normalize_stds: [f32; 3],
    pub augment_hflip_prob: f64,
    pub augment_vflip_prob: f64,
    pub seed: u64,
    /// Also flip test-set images. Off by default.
    #[serde(default)]
    pub augment_test: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_side: 720,
            normalize_means: IMAGENET_MEANS,
            normalize_stds: IMAGENET_STDS,
            augment_hflip_prob: 0.5,
            augment_vflip_prob: 0.5,
            seed: 0,
            augment_test: false,
        }
    }
}

impl PreprocessConfig {
    /// Defaults for the small backbone: 72 px, means and stds of 0.5.
    pub fn mini() -> Self {
        PreprocessConfig {
            target_side: 72,
            normalize_means: [0.5; 3],
            normalize_stds: [0.5; 3],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_side == 0 {
            return Err(Error::validation("target_side must be positive"));
        }
        for p in [self.augment_hflip_prob, self.augment_vflip_prob] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::validation(format!("flip probability {p} outside [0, 1]")));
            }
        }
        if self.normalize_stds.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::validation("normalization stds must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropWindow {
    pub x: u32,
    pub y: u32,
    pub side: u32,
}

pub fn crop_window(width: u32, height: u32) -> CropWindow {
    let side = width.min(height);
    CropWindow {
        x: (width - side) / 2,
        y: (height - side) / 2,
        side,
    }
}

/// Largest centered square; odd margins put the extra pixel right/bottom.
pub fn center_crop_square(image: &RgbImage) -> (RgbImage, CropWindow) {
    let win = crop_window(image.width(), image.height());
    let cropped = imageops::crop_imm(image, win.x, win.y, win.side, win.side).to_image();
    (cropped, win)
}

/// Bilinear resize of a square image (half-pixel centers, edge clamped).
pub fn resize(image: &RgbImage, side: u32) -> Result<RgbImage> {
    let (w, h) = image.dimensions();
    if w != h {
        return Err(Error::validation(format!(
            "resize expects a square image, got {w}×{h}; crop first"
        )));
    }
    if side == 0 || w == 0 {
        return Err(Error::validation("resize to or from an empty image"));
    }
    if side == w {
        return Ok(image.clone());
    }
    let scale = w as f64 / side as f64;
    let max = (w - 1) as f64;
    let taps: Vec<(u32, u32, f64)> = (0..side)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let i0 = s.floor() as u32;
            let i1 = (i0 + 1).min(w - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect();
    let mut out = RgbImage::new(side, side);
    for (y, &(y0, y1, fy)) in taps.iter().enumerate() {
        for (x, &(x0, x1, fx)) in taps.iter().enumerate() {
            let p00 = image.get_pixel(x0, y0).0;
            let p01 = image.get_pixel(x1, y0).0;
            let p10 = image.get_pixel(x0, y1).0;
            let p11 = image.get_pixel(x1, y1).0;
            let mut px = [0u8; 3];
            for c in 0..3 {
                let top = p00[c] as f64 * (1.0 - fx) + p01[c] as f64 * fx;
                let bottom = p10[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
                px[c] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
            }
            out.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Flips {
    pub horizontal: bool,
    pub vertical: bool,
}

/// Per-item augmentation key: stable in the item id and the epoch.
pub fn item_seed(id: &str, epoch: u64) -> u64 {
    seed::derive("augment-item", &[seed::of_id(id), epoch])
}

pub fn flip_decisions(config: &PreprocessConfig, item_seed: u64) -> Flips {
    let mut rng = seed::rng("augment", &[config.seed, item_seed]);
    // both coins are always drawn so one probability never shifts the other
    let h: f64 = rng.gen();
    let v: f64 = rng.gen();
    Flips {
        horizontal: h < config.augment_hflip_prob,
        vertical: v < config.augment_vflip_prob,
    }
}

pub fn apply_flips(image: &RgbImage, flips: Flips) -> RgbImage {
    let mut out = image.clone();
    if flips.horizontal {
        imageops::flip_horizontal_in_place(&mut out);
    }
    if flips.vertical {
        imageops::flip_vertical_in_place(&mut out);
    }
    out
}

/// Horizontal flip then vertical flip, each decided by the item's stream.
pub fn augment(image: &RgbImage, config: &PreprocessConfig, item_seed: u64) -> RgbImage {
    apply_flips(image, flip_decisions(config, item_seed))
}

/// Scales to `[0, 1]` and standardizes per channel into a `3×H×W` tensor.
pub fn to_model_input(image: &RgbImage, config: &PreprocessConfig) -> Tensor {
    let (w, h) = image.dimensions();
    let plane = (w * h) as usize;
    let mut data = vec![0.0f32; 3 * plane];
    for (i, px) in image.pixels().enumerate() {
        for c in 0..3 {
            let v = px.0[c] as f32 / 255.0;
            data[c * plane + i] = (v - config.normalize_means[c]) / config.normalize_stds[c];
        }
    }
    Tensor::from_vec(3, h as usize, w as usize, data)
}

/// Crop + resize to `config.target_side`.
pub fn standardize(image: &RgbImage, config: &PreprocessConfig) -> Result<RgbImage> {
    let (square, _) = center_crop_square(image);
    resize(&square, config.target_side)
}

/// Full pipeline; `augment_key` enables flips with that item seed.
pub fn prepare(image: &RgbImage, config: &PreprocessConfig, augment_key: Option<u64>) -> Result<Tensor> {
    let mut img = standardize(image, config)?;
    if let Some(key) = augment_key {
        img = augment(&img, config, key);
    }
    Ok(to_model_input(&img, config))
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))?
        .with_guessed_format()
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(reader.decode()?.to_rgb8())
}
