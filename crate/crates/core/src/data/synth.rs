//! Procedural flat-colour illustrations and labelled shape drawings.
//!
//! Used to exercise the pipeline without an external image corpus: smoke
//! and overfit runs, extractor pretraining checks, and filter statistics.

use ndarray::{Array2, Array3};
use rand::Rng;

use super::types::{Illustration, LineArt};
use crate::rng::SeededRng;

pub(crate) fn hsv_to_rgb(h: f32, s: f32, v: f32) -> [f32; 3] {
    let h = h.rem_euclid(1.0) * 6.0;
    let i = h.floor() as i32;
    let f = h - i as f32;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

enum Shape {
    Ellipse { cy: f32, cx: f32, ry: f32, rx: f32 },
    Rect { y0: f32, x0: f32, y1: f32, x1: f32 },
}

impl Shape {
    fn contains(&self, y: f32, x: f32) -> bool {
        match *self {
            Shape::Ellipse { cy, cx, ry, rx } => {
                let dy = (y - cy) / ry;
                let dx = (x - cx) / rx;
                dy * dy + dx * dx <= 1.0
            }
            Shape::Rect { y0, x0, y1, x1 } => y >= y0 && y <= y1 && x >= x0 && x <= x1,
        }
    }
}

/// A flat-shaded "illustration": gradient background plus overlapping coloured shapes
/// with a soft directional shading term.
pub fn random_illustration(height: usize, width: usize, rng: &mut SeededRng, id: &str) -> Illustration {
    let (hf, wf) = (height as f32, width as f32);
    let bg_top = hsv_to_rgb(rng.random(), rng.random_range(0.1..0.5), rng.random_range(0.7..1.0));
    let bg_bottom = hsv_to_rgb(rng.random(), rng.random_range(0.1..0.5), rng.random_range(0.5..0.9));
    let mut img = Array3::from_shape_fn((3, height, width), |(c, y, _)| {
        let t = y as f32 / hf.max(1.0);
        bg_top[c] * (1.0 - t) + bg_bottom[c] * t
    });

    let count = rng.random_range(3..8);
    for _ in 0..count {
        let shape = if rng.random_bool(0.6) {
            Shape::Ellipse {
                cy: rng.random_range(0.0..hf),
                cx: rng.random_range(0.0..wf),
                ry: rng.random_range(0.08..0.35) * hf,
                rx: rng.random_range(0.08..0.35) * wf,
            }
        } else {
            let y0 = rng.random_range(0.0..hf * 0.8);
            let x0 = rng.random_range(0.0..wf * 0.8);
            Shape::Rect {
                y0,
                x0,
                y1: y0 + rng.random_range(0.1..0.5) * hf,
                x1: x0 + rng.random_range(0.1..0.5) * wf,
            }
        };
        let color = hsv_to_rgb(rng.random(), rng.random_range(0.3..1.0), rng.random_range(0.3..1.0));
        let shade_dir: f32 = rng.random_range(0.0..std::f32::consts::TAU);
        let (sy, sx) = (shade_dir.sin(), shade_dir.cos());
        for y in 0..height {
            for x in 0..width {
                let (yf, xf) = (y as f32 + 0.5, x as f32 + 0.5);
                if shape.contains(yf, xf) {
                    let shade = 1.0 + 0.15 * ((yf / hf - 0.5) * sy + (xf / wf - 0.5) * sx);
                    for c in 0..3 {
                        img[[c, y, x]] = (color[c] * shade).clamp(0.0, 1.0);
                    }
                }
            }
        }
    }
    Illustration::from_unit_rgb(img, id).expect("procedural pixels are in range")
}

/// Number of classes produced by [`shape_drawing`].
pub const SHAPE_CLASSES: usize = 10;

/// Black-on-white drawing of one of ten pattern classes, with random placement and scale.
pub fn shape_drawing(class: usize, side: usize, rng: &mut SeededRng) -> LineArt {
    let s = side as f32;
    let cy = rng.random_range(0.35..0.65) * s;
    let cx = rng.random_range(0.35..0.65) * s;
    let r = rng.random_range(0.18..0.3) * s;
    let period = rng.random_range(0.12..0.2) * s;
    let phase = rng.random_range(0.0..period);
    let thick = rng.random_range(1.0..2.2f32);

    let on = |y: f32, x: f32| -> bool {
        let (dy, dx) = (y - cy, x - cx);
        let dist = (dy * dy + dx * dx).sqrt();
        let band = |v: f32| (v + phase).rem_euclid(period) < thick;
        match class % SHAPE_CLASSES {
            0 => (dist - r).abs() < thick,
            1 => (dy.abs().max(dx.abs()) - r).abs() < thick,
            2 => {
                // triangle outline
                let top = dy > -r && dy < r;
                let edge_l = (dx + (dy + r) * 0.5).abs() < thick && top;
                let edge_r = (dx - (dy + r) * 0.5).abs() < thick && top;
                let base = (dy - r).abs() < thick && dx.abs() < r;
                edge_l || edge_r || base
            }
            3 => band(y),
            4 => band(x),
            5 => band((x + y) * std::f32::consts::FRAC_1_SQRT_2),
            6 => dy.abs() < thick || dx.abs() < thick,
            7 => band(y) || band(x),
            8 => (dist + phase).rem_euclid(period) < thick && dist < 2.0 * r,
            _ => {
                let gy = (y + phase).rem_euclid(period) - period / 2.0;
                let gx = (x + phase).rem_euclid(period) - period / 2.0;
                gy * gy + gx * gx < (thick * 1.4) * (thick * 1.4)
            }
        }
    };

    let pixels = Array2::from_shape_fn((side, side), |(y, x)| {
        if on(y as f32 + 0.5, x as f32 + 0.5) {
            0.0
        } else {
            1.0
        }
    });
    LineArt { pixels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn illustrations_are_valid_and_deterministic() {
        let a = random_illustration(48, 64, &mut seeded(1), "a");
        let b = random_illustration(48, 64, &mut seeded(1), "a");
        assert_eq!(a, b);
        assert_eq!(a.pixels.dim(), (3, 48, 64));
        let c = random_illustration(48, 64, &mut seeded(2), "a");
        assert_ne!(a, c);
    }

    #[test]
    fn every_shape_class_draws_something() {
        for class in 0..SHAPE_CLASSES {
            let d = shape_drawing(class, 64, &mut seeded(class as u64));
            let ink = d.pixels.iter().filter(|&&v| v == 0.0).count();
            assert!(ink > 20, "class {class} drew {ink} pixels");
            assert!(ink < 64 * 64 / 2, "class {class} drew {ink} pixels");
        }
    }

    #[test]
    fn hsv_primaries() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [1.0, 0.0, 0.0]);
        assert_eq!(hsv_to_rgb(0.0, 0.0, 0.5), [0.5, 0.5, 0.5]);
    }
}
