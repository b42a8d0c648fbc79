//! Procedural HR scenes: flat regions, straight and curved edges, corners and
//! oriented textures, so the synthetic lab has all three image components.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{ColorSpace, Image};

#[derive(Clone, Copy)]
enum Shape {
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Disc { cx: f64, cy: f64, r: f64 },
    Triangle { p: [(f64, f64); 3] },
    Stripes { cx: f64, cy: f64, r: f64, freq: f64, angle: f64 },
    Checker { x0: f64, y0: f64, x1: f64, y1: f64, cell: f64 },
}

fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

impl Shape {
    /// Coverage in `{0, 1}` plus a modulation factor for textured shapes.
    fn sample(&self, x: f64, y: f64) -> Option<f64> {
        match *self {
            Shape::Rect { x0, y0, x1, y1 } => (x >= x0 && x < x1 && y >= y0 && y < y1).then_some(1.0),
            Shape::Disc { cx, cy, r } => ((x - cx).powi(2) + (y - cy).powi(2) <= r * r).then_some(1.0),
            Shape::Triangle { p } => {
                let d = [edge(p[0], p[1], (x, y)), edge(p[1], p[2], (x, y)), edge(p[2], p[0], (x, y))];
                let inside = d.iter().all(|&v| v >= 0.0) || d.iter().all(|&v| v <= 0.0);
                inside.then_some(1.0)
            }
            Shape::Stripes { cx, cy, r, freq, angle } => {
                if (x - cx).powi(2) + (y - cy).powi(2) > r * r {
                    return None;
                }
                let t = (x * angle.cos() + y * angle.sin()) * freq;
                Some(if t.sin() >= 0.0 { 1.0 } else { 0.0 })
            }
            Shape::Checker { x0, y0, x1, y1, cell } => {
                if !(x >= x0 && x < x1 && y >= y0 && y < y1) {
                    return None;
                }
                let parity = (((x - x0) / cell).floor() + ((y - y0) / cell).floor()) as i64;
                Some((parity.rem_euclid(2)) as f64)
            }
        }
    }
}

fn random_color(rng: &mut impl Rng) -> [f64; 3] {
    [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)]
}

/// One `size×size` RGB scene, fully determined by `seed`.
pub fn synthetic_scene(size: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;
    let bg0 = random_color(&mut rng);
    let bg1 = random_color(&mut rng);
    let bg_angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);

    let n_shapes = rng.random_range(10..18);
    let mut shapes = Vec::with_capacity(n_shapes);
    for _ in 0..n_shapes {
        let kind = rng.random_range(0..5);
        let cx = rng.random_range(0.0..s);
        let cy = rng.random_range(0.0..s);
        let ext = rng.random_range(0.08..0.35) * s;
        let shape = match kind {
            0 => Shape::Rect {
                x0: cx - ext / 2.0,
                y0: cy - ext / 3.0,
                x1: cx + ext / 2.0,
                y1: cy + ext / 3.0,
            },
            1 => Shape::Disc { cx, cy, r: ext / 2.0 },
            2 => Shape::Triangle {
                p: std::array::from_fn(|_| (cx + rng.random_range(-ext..ext), cy + rng.random_range(-ext..ext))),
            },
            3 => Shape::Stripes {
                cx,
                cy,
                r: ext / 1.5,
                freq: rng.random_range(0.12..0.45),
                angle: rng.random_range(0.0..std::f64::consts::PI),
            },
            _ => Shape::Checker {
                x0: cx - ext / 2.0,
                y0: cy - ext / 2.0,
                x1: cx + ext / 2.0,
                y1: cy + ext / 2.0,
                cell: rng.random_range(5.0..12.0),
            },
        };
        shapes.push((shape, random_color(&mut rng), random_color(&mut rng)));
    }
    let grain: Vec<f64> = (0..size * size).map(|_| rng.random_range(-0.02..0.02)).collect();

    Image::from_fn(size, size, ColorSpace::Rgb, |x, y, c| {
        let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
        let t = ((fx * bg_angle.cos() + fy * bg_angle.sin()) / s).clamp(-1.0, 1.0) * 0.5 + 0.5;
        let mut v = bg0[c] * (1.0 - t) + bg1[c] * t;
        for (shape, col_a, col_b) in &shapes {
            if let Some(m) = shape.sample(fx, fy) {
                v = col_a[c] * m + col_b[c] * (1.0 - m);
            }
        }
        (v + grain[y * size + x]).clamp(0.0, 1.0)
    })
}

pub fn synthetic_corpus(count: usize, size: usize, seed: u64) -> Vec<Image> {
    (0..count)
        .map(|i| synthetic_scene(size, seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64)))
        .collect()
}
