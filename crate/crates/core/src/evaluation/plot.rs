//! Predicted-vs-human scatter plot, both axes 0–100.

use image::{Rgb, RgbImage};

const SIZE: u32 = 480;
const MARGIN: u32 = 60;
const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);
const DIAGONAL: Rgb<u8> = Rgb([170, 170, 170]);
const POINT: Rgb<u8> = Rgb([31, 119, 180]);

/// 5×7 glyphs for the characters the axes need; one byte per row, low 5 bits.
fn glyph(c: char) -> [u8; 7] {
    match c {
        '0' => [14, 17, 19, 21, 25, 17, 14],
        '1' => [4, 12, 4, 4, 4, 4, 14],
        '2' => [14, 17, 1, 2, 4, 8, 31],
        '4' => [2, 6, 10, 18, 31, 2, 2],
        '5' => [31, 16, 30, 1, 1, 17, 14],
        '6' => [6, 8, 16, 30, 17, 17, 14],
        '7' => [31, 1, 2, 4, 8, 8, 8],
        '8' => [14, 17, 17, 14, 17, 17, 14],
        'a' => [0, 0, 14, 1, 15, 17, 15],
        'c' => [0, 0, 14, 16, 16, 17, 14],
        'd' => [1, 1, 13, 19, 17, 17, 15],
        'e' => [0, 0, 14, 17, 31, 16, 14],
        'g' => [0, 15, 17, 17, 15, 1, 14],
        'h' => [16, 16, 22, 25, 17, 17, 17],
        'i' => [4, 0, 12, 4, 4, 4, 14],
        'l' => [12, 4, 4, 4, 4, 4, 14],
        'm' => [0, 0, 26, 21, 21, 17, 17],
        'n' => [0, 0, 22, 25, 17, 17, 17],
        'o' => [0, 0, 14, 17, 17, 17, 14],
        'r' => [0, 0, 22, 25, 16, 16, 16],
        's' => [0, 0, 14, 16, 14, 1, 30],
        't' => [8, 8, 28, 8, 8, 9, 6],
        'u' => [0, 0, 17, 17, 17, 19, 13],
        _ => [0; 7],
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

/// Draws `text` at scale 2, left-to-right, or bottom-to-top when `vertical`.
fn text(img: &mut RgbImage, x: i64, y: i64, s: &str, vertical: bool) {
    const SCALE: i64 = 2;
    for (k, ch) in s.chars().enumerate() {
        let rows = glyph(ch);
        for (r, bits) in rows.iter().enumerate() {
            for col in 0..5 {
                if bits & (1 << (4 - col)) == 0 {
                    continue;
                }
                for dy in 0..SCALE {
                    for dx in 0..SCALE {
                        let (gx, gy) = (col * SCALE + dx, r as i64 * SCALE + dy);
                        let off = k as i64 * 6 * SCALE;
                        if vertical {
                            put(img, x + gy, y - off - gx, BLACK);
                        } else {
                            put(img, x + off + gx, y + gy, BLACK);
                        }
                    }
                }
            }
        }
    }
}

fn to_px(v: f64) -> (i64, i64) {
    let span = (SIZE - 2 * MARGIN) as f64;
    let t = (v.clamp(0.0, 100.0) / 100.0 * span).round() as i64;
    (MARGIN as i64 + t, (SIZE - MARGIN) as i64 - t)
}

/// Renders `(human, predicted)` pairs: human on x, model on y.
pub fn scatter(points: &[(f64, f64)]) -> RgbImage {
    let mut img = RgbImage::from_pixel(SIZE, SIZE, WHITE);
    let (lo, hi) = (MARGIN as i64, (SIZE - MARGIN) as i64);
    for tick in (0..=100).step_by(20) {
        let (x, y) = to_px(tick as f64);
        for t in lo..=hi {
            put(&mut img, x, t, GRID);
            put(&mut img, t, y, GRID);
        }
        for d in 0..5 {
            put(&mut img, x, hi + d, BLACK);
            put(&mut img, lo - d, y, BLACK);
        }
        let label = tick.to_string();
        let w = label.len() as i64 * 12;
        text(&mut img, x - w / 2, hi + 8, &label, false);
        text(&mut img, lo - 10 - w, y - 7, &label, false);
    }
    for t in lo..=hi {
        put(&mut img, t, lo + hi - t, DIAGONAL);
        put(&mut img, t, hi, BLACK);
        put(&mut img, lo, t, BLACK);
    }
    text(&mut img, SIZE as i64 / 2 - 72, hi + 32, "human rating", false);
    text(&mut img, 6, SIZE as i64 / 2 + 66, "model score", true);
    for &(h, p) in points {
        let (x, _) = to_px(h);
        let (_, y) = to_px(p);
        for dy in -2i64..=2 {
            for dx in -2i64..=2 {
                if dx * dx + dy * dy <= 5 {
                    put(&mut img, x + dx, y + dy, POINT);
                }
            }
        }
    }
    img
}
