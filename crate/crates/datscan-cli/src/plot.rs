//! Minimal headless renderer for ROC / precision-recall curves. The
//! PNG output is a courtesy visualization; the CSV exports remain the
//! canonical curve artifacts, so rendering failures never abort a run.

use datscan_core::metrics::CurvePoint;
use image::{Rgb, RgbImage};
use std::path::Path;

const SIZE: u32 = 560;
const MARGIN: u32 = 40;
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([32, 32, 32]);
const GRID: Rgb<u8> = Rgb([224, 224, 224]);
const REFERENCE: Rgb<u8> = Rgb([176, 176, 176]);
const CURVE: Rgb<u8> = Rgb([24, 80, 192]);

/// Visual styling of the reference line drawn behind the curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    /// Chance diagonal from (0, 0) to (1, 1), as drawn behind a ROC curve.
    Diagonal,
    /// No reference line (precision-recall).
    None,
}

/// Render `points` (unit-square coordinates) into a PNG at `path`.
pub fn render_curve(
    points: &[CurvePoint],
    reference: Reference,
    path: &Path,
) -> Result<(), image::ImageError> {
    let mut img = RgbImage::from_pixel(SIZE, SIZE, BACKGROUND);
    let lo = MARGIN;
    let hi = SIZE - MARGIN;

    // Gridlines every quarter, then the two axes on top.
    for i in 0..=4 {
        let t = lo + (hi - lo) * i / 4;
        draw_line(&mut img, (lo, t), (hi, t), GRID);
        draw_line(&mut img, (t, lo), (t, hi), GRID);
    }
    if reference == Reference::Diagonal {
        draw_line(&mut img, (lo, hi), (hi, lo), REFERENCE);
    }
    draw_line(&mut img, (lo, hi), (hi, hi), AXIS);
    draw_line(&mut img, (lo, lo), (lo, hi), AXIS);

    let project = |p: &CurvePoint| {
        let x = lo as f64 + p.x.clamp(0.0, 1.0) * (hi - lo) as f64;
        let y = hi as f64 - p.y.clamp(0.0, 1.0) * (hi - lo) as f64;
        (x.round() as u32, y.round() as u32)
    };
    for pair in points.windows(2) {
        draw_thick_line(&mut img, project(&pair[0]), project(&pair[1]), CURVE);
    }

    img.save(path)
}

/// One-pixel Bresenham line between two in-bounds points.
fn draw_line(img: &mut RgbImage, from: (u32, u32), to: (u32, u32), color: Rgb<u8>) {
    let (mut x, mut y) = (from.0 as i64, from.1 as i64);
    let (x1, y1) = (to.0 as i64, to.1 as i64);
    let dx = (x1 - x).abs();
    let dy = -(y1 - y).abs();
    let sx = if x < x1 { 1 } else { -1 };
    let sy = if y < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        put(img, x, y, color);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// The curve itself gets a 2x2 brush so it stands out from the grid.
fn draw_thick_line(img: &mut RgbImage, from: (u32, u32), to: (u32, u32), color: Rgb<u8>) {
    for (ox, oy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
        draw_line(
            img,
            (from.0 + ox, from.1 + oy),
            (to.0 + ox, to.1 + oy),
            color,
        );
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if (0..SIZE as i64).contains(&x) && (0..SIZE as i64).contains(&y) {
        img.put_pixel(x as u32, y as u32, color);
    }
}
