//! Seeded synthetic paintings whose rubric scores are measured from the
//! pixels themselves, so a label can always be recomputed from its PNG.
//!
//! Each image is a gray background (flat or striped) with fully saturated
//! shapes on top. One latent level per painting drives stripe frequency,
//! palette size, shape count, shape variety and how centered the shapes
//! are; children draw low levels, artists high ones.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, PaintingRecord, Source, Split};
use crate::error::{Error, Result};
use crate::rubric::{Rating, RubricScore};
use crate::seed;

pub const RATER_ID: &str = "synthetic-oracle";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub count: usize,
    pub image_side: u32,
    pub seed: u64,
    /// Share of child paintings (listed first in the manifest).
    #[serde(default = "default_child_fraction")]
    pub child_fraction: f64,
}

fn default_child_fraction() -> f64 {
    2.0 / 3.0
}

impl SyntheticSpec {
    pub fn new(count: usize, image_side: u32, seed: u64) -> Self {
        SyntheticSpec {
            count,
            image_side,
            seed,
            child_fraction: default_child_fraction(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::validation("synthetic count must be positive"));
        }
        if self.image_side < 32 {
            return Err(Error::validation("synthetic images need a side of at least 32 px"));
        }
        if !(0.0..=1.0).contains(&self.child_fraction) {
            return Err(Error::validation("child_fraction outside [0, 1]"));
        }
        Ok(())
    }

    pub fn child_count(&self) -> usize {
        (self.count as f64 * self.child_fraction).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Rect,
    Ellipse,
    Triangle,
}

const SHAPES: [Shape; 3] = [Shape::Rect, Shape::Ellipse, Shape::Triangle];
const HUE_BINS: usize = 12;
const STRIPE_AMPLITUDE: i32 = 22;
const EDGE_THRESHOLD: f64 = 20.0;

fn hue_color(bin: usize) -> Rgb<u8> {
    // HSV with S = V = 1 at the bin center
    let h = (15.0 + 30.0 * bin as f64) / 60.0;
    let x = 1.0 - ((h % 2.0) - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    let q = |v: f64| (v * 255.0).round() as u8;
    Rgb([q(r), q(g), q(b)])
}

fn jitter<R: Rng>(rng: &mut R, amount: f64) -> f64 {
    rng.gen_range(-amount..=amount)
}

fn inside(shape: Shape, dx: f64, dy: f64, r: f64) -> bool {
    match shape {
        Shape::Rect => dx.abs() <= r * 0.85 && dy.abs() <= r * 0.85,
        Shape::Ellipse => (dx * dx + dy * dy) <= r * r,
        Shape::Triangle => dy >= -r && dy <= r && dx.abs() <= r * (dy + r) / (2.0 * r),
    }
}

/// Draws one painting at latent `level` in `[0, 1]`.
pub fn render(side: u32, level: f64, key: u64) -> RgbImage {
    let mut rng = seed::rng("synthetic-render", &[key]);
    let s = side as f64;
    let level = level.clamp(0.0, 1.0);

    // background: flat at low levels, finer stripes as the level rises
    let gray: i32 = rng.gen_range(90..=160);
    let texture_level = (level + jitter(&mut rng, 0.08)).clamp(0.0, 1.0);
    let period = 14.0 - 11.0 * texture_level;
    let striped = texture_level >= 0.15;
    let vertical = rng.gen_bool(0.5);
    let mut img = RgbImage::from_fn(side, side, |x, y| {
        let v = if striped {
            let t = if vertical { x } else { y } as f64;
            if ((2.0 * t / period).floor() as i64) % 2 == 0 {
                gray + STRIPE_AMPLITUDE
            } else {
                gray - STRIPE_AMPLITUDE
            }
        } else {
            gray
        };
        let v = v as u8;
        Rgb([v, v, v])
    });

    let count = (1.0 + level * 9.0 + jitter(&mut rng, 1.0)).round().clamp(1.0, 10.0) as usize;
    let palette_size = (1.0 + level * 5.0 + jitter(&mut rng, 0.8)).round().clamp(1.0, 6.0) as usize;
    let kinds = (1.0 + level * 2.4 + jitter(&mut rng, 0.6)).round().clamp(1.0, 3.0) as usize;
    let mut hues: Vec<usize> = (0..HUE_BINS).collect();
    hues.shuffle(&mut rng);
    hues.truncate(palette_size);
    let mut shapes = SHAPES.to_vec();
    shapes.shuffle(&mut rng);
    shapes.truncate(kinds);

    // low levels cluster off-center
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let offset = (1.0 - level) * 0.3 * s;
    let anchor = (s / 2.0 + offset * angle.cos(), s / 2.0 + offset * angle.sin());
    let spread = 0.18 * s + 0.1 * s * level;

    let mut placed: Vec<(f64, f64, f64)> = Vec::new();
    for i in 0..count {
        let r = s * rng.gen_range(0.06..0.10);
        let lo = r + 1.0;
        let hi = s - r - 2.0;
        let mut spot = None;
        for _ in 0..60 {
            let cx = (anchor.0 + jitter(&mut rng, spread)).clamp(lo, hi);
            let cy = (anchor.1 + jitter(&mut rng, spread)).clamp(lo, hi);
            let clear = placed
                .iter()
                .all(|&(px, py, pr)| (px - cx).abs() > pr + r + 2.0 || (py - cy).abs() > pr + r + 2.0);
            if clear {
                spot = Some((cx, cy));
                break;
            }
        }
        let Some((cx, cy)) = spot else { continue };
        placed.push((cx, cy, r));
        let color = hue_color(hues[i % hues.len()]);
        let shape = shapes[i % shapes.len()];
        let x0 = (cx - r - 1.0).floor().max(0.0) as u32;
        let x1 = ((cx + r + 1.0).ceil() as u32).min(side - 1);
        let y0 = (cy - r - 1.0).floor().max(0.0) as u32;
        let y1 = ((cy + r + 1.0).ceil() as u32).min(side - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if inside(shape, x as f64 + 0.5 - cx, y as f64 + 0.5 - cy, r) {
                    img.put_pixel(x, y, color);
                }
            }
        }
    }
    img
}

fn is_foreground(p: &Rgb<u8>) -> bool {
    let max = *p.0.iter().max().unwrap() as u32;
    let min = *p.0.iter().min().unwrap() as u32;
    max >= 128 && (max - min) * 2 >= max
}

fn hue_bin(p: &Rgb<u8>) -> usize {
    let [r, g, b] = p.0.map(|v| v as f64);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if max == r {
        60.0 * ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    ((h / 30.0).floor() as usize) % HUE_BINS
}

fn luminance(p: &Rgb<u8>) -> f64 {
    0.299 * p.0[0] as f64 + 0.587 * p.0[1] as f64 + 0.114 * p.0[2] as f64
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0 + 0.0
}

/// Foreground connected components (4-neighbourhood) as pixel lists.
fn components(mask: &[bool], w: usize, h: usize) -> Vec<Vec<(usize, usize)>> {
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            pixels.push((x, y));
            let mut push = |j: usize| {
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                push(i - 1);
            }
            if x + 1 < w {
                push(i + 1);
            }
            if y > 0 {
                push(i - w);
            }
            if y + 1 < h {
                push(i + w);
            }
        }
        out.push(pixels);
    }
    out
}

/// The rubric an image earns, measured from its pixels (each component
/// rounded to hundredths):
///
/// * color: entropy of the 12-bin hue histogram of saturated pixels,
///   relative to a six-hue palette;
/// * texture: share of background neighbour pairs with a luminance step;
/// * composition: how close the saturated mass sits to the center;
/// * content: number of distinct shapes (two points each, up to ten);
/// * originality: number of distinct shape kinds, told apart by how much
///   of their bounding box they fill.
pub fn measure(img: &RgbImage) -> RubricScore {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let px: Vec<&Rgb<u8>> = img.pixels().collect();
    let mask: Vec<bool> = px.iter().map(|p| is_foreground(p)).collect();

    let mut hist = [0usize; HUE_BINS];
    for (p, _) in px.iter().zip(&mask).filter(|(_, m)| **m) {
        hist[hue_bin(p)] += 1;
    }
    let fg: usize = hist.iter().sum();
    let color = if fg == 0 {
        0.0
    } else {
        let entropy: f64 = hist
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let q = c as f64 / fg as f64;
                -q * q.ln() + 0.0
            })
            .sum();
        20.0 * (entropy / 6f64.ln()).min(1.0)
    };

    let lum: Vec<f64> = px.iter().map(|p| luminance(p)).collect();
    let (mut pairs, mut edges) = (0usize, 0usize);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if mask[i] {
                continue;
            }
            for j in [(x + 1 < w).then(|| i + 1), (y + 1 < h).then(|| i + w)]
                .into_iter()
                .flatten()
            {
                if !mask[j] {
                    pairs += 1;
                    if (lum[i] - lum[j]).abs() > EDGE_THRESHOLD {
                        edges += 1;
                    }
                }
            }
        }
    }
    let density = if pairs == 0 { 0.0 } else { edges as f64 / pairs as f64 };
    let texture = 20.0 * (density / 0.34).min(1.0);

    let composition = if fg == 0 {
        0.0
    } else {
        let (mut sx, mut sy) = (0.0, 0.0);
        for (i, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
            sx += (i % w) as f64 + 0.5;
            sy += (i / w) as f64 + 0.5;
        }
        let (cx, cy) = (sx / fg as f64, sy / fg as f64);
        let d = (cx - w as f64 / 2.0).hypot(cy - h as f64 / 2.0);
        20.0 * (1.0 - (d / (0.3 * w.min(h) as f64)).min(1.0))
    };

    let blobs: Vec<_> = components(&mask, w, h).into_iter().filter(|c| c.len() >= 3).collect();
    let content = 2.0 * blobs.len().min(10) as f64;
    let kinds: BTreeSet<u8> = blobs
        .iter()
        .map(|c| {
            let (xs, ys): (Vec<usize>, Vec<usize>) = c.iter().copied().unzip();
            let bw = xs.iter().max().unwrap() - xs.iter().min().unwrap() + 1;
            let bh = ys.iter().max().unwrap() - ys.iter().min().unwrap() + 1;
            let fill = c.len() as f64 / (bw * bh) as f64;
            if fill < 0.62 {
                0
            } else if fill < 0.9 {
                1
            } else {
                2
            }
        })
        .collect();
    let originality = 20.0 * kinds.len() as f64 / 3.0;

    RubricScore::from_array([originality, color, texture, composition, content].map(round2))
        .expect("measured components lie in [0, 20]")
}

/// Latent level of painting `index`.
pub fn latent_level(spec: &SyntheticSpec, index: usize) -> f64 {
    let mut rng = seed::rng("synthetic-level", &[spec.seed, index as u64]);
    if index < spec.child_count() {
        rng.gen_range(0.0..0.35)
    } else {
        rng.gen_range(0.65..1.0)
    }
}

pub fn painting_id(index: usize) -> String {
    format!("syn-{index:04}")
}

/// Writes `images/<id>.png` and a canonical manifest under `out_dir`.
pub fn generate(spec: &SyntheticSpec, out_dir: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    let images = out_dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(format!("creating {}", images.display()), e))?;
    let mut records = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let id = painting_id(i);
        let level = latent_level(spec, i);
        let img = render(
            spec.image_side,
            level,
            seed::derive("synthetic", &[spec.seed, i as u64]),
        );
        let rel = PathBuf::from("images").join(format!("{id}.png"));
        img.save(out_dir.join(&rel))?;
        let rubric = measure(&img);
        let source = if i < spec.child_count() {
            Source::Child
        } else {
            Source::Artist
        };
        let mut record = PaintingRecord {
            id: id.clone(),
            image_path: rel,
            source,
            width: spec.image_side,
            height: spec.image_side,
            ratings: vec![Rating {
                painting_id: id,
                rater_id: RATER_ID.into(),
                rubric,
                timestamp: DateTime::<Utc>::UNIX_EPOCH,
            }],
            consensus_total: None,
            consensus_components: None,
            split: Split::Unassigned,
        };
        record.refresh_consensus();
        records.push(record);
    }
    let mut manifest = DatasetManifest::new(
        format!(
            "synthetic: {} paintings, {}px, seed {}, labels measured from pixels",
            spec.count, spec.image_side, spec.seed
        ),
        records,
    );
    manifest.min_artist_side = spec.image_side;
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
