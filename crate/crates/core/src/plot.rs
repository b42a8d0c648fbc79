//! Static raster plots: loss curves, heatmaps and image panels. Plots carry
//! no text; callers write the labels to a sidecar file.

use crate::data::{ColorSpace, Image};
use crate::degradation::Kernel;

const BACKGROUND: [f64; 3] = [1.0, 1.0, 1.0];
const AXIS: [f64; 3] = [0.2, 0.2, 0.2];
const MARGIN: usize = 6;

/// Distinct line colours, cycled.
const PALETTE: [[f64; 3]; 6] = [
    [0.12, 0.47, 0.71],
    [1.0, 0.5, 0.05],
    [0.17, 0.63, 0.17],
    [0.84, 0.15, 0.16],
    [0.58, 0.4, 0.74],
    [0.55, 0.34, 0.29],
];

struct Canvas {
    w: usize,
    h: usize,
    px: Vec<[f64; 3]>,
}

impl Canvas {
    fn new(w: usize, h: usize) -> Self {
        Canvas {
            w,
            h,
            px: vec![BACKGROUND; w * h],
        }
    }

    fn put(&mut self, x: i64, y: i64, c: [f64; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.w && (y as usize) < self.h {
            self.px[y as usize * self.w + x as usize] = c;
        }
    }

    /// Bresenham.
    fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: [f64; 3]) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            self.put(x, y, c);
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

    fn into_image(self) -> Image {
        let data = self.px.into_iter().flatten().collect();
        Image::new(self.w, self.h, ColorSpace::Rgb, data).expect("canvas dims")
    }
}

/// One panel per series, stacked vertically; each panel has its own y range.
pub fn loss_panels(series: &[Vec<(f64, f64)>], width: usize, panel_height: usize) -> Image {
    let n = series.len().max(1);
    let mut c = Canvas::new(width, panel_height * n);
    for (i, s) in series.iter().enumerate() {
        let top = (i * panel_height) as i64;
        let (x0, x1) = (MARGIN as i64, (width - MARGIN) as i64);
        let (y0, y1) = (top + MARGIN as i64, top + (panel_height - MARGIN) as i64);
        c.line((x0, y1), (x1, y1), AXIS);
        c.line((x0, y0), (x0, y1), AXIS);
        let finite: Vec<(f64, f64)> = s.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
        if finite.is_empty() {
            continue;
        }
        let (xmin, xmax) = bounds(finite.iter().map(|p| p.0));
        let (ymin, ymax) = bounds(finite.iter().map(|p| p.1));
        let map = |(x, y): (f64, f64)| {
            let fx = if xmax > xmin { (x - xmin) / (xmax - xmin) } else { 0.5 };
            let fy = if ymax > ymin { (y - ymin) / (ymax - ymin) } else { 0.5 };
            (
                x0 + 1 + (fx * (x1 - x0 - 2) as f64).round() as i64,
                y1 - 1 - (fy * (y1 - y0 - 2) as f64).round() as i64,
            )
        };
        let colour = PALETTE[i % PALETTE.len()];
        let mut prev = map(finite[0]);
        for &p in &finite[1..] {
            let q = map(p);
            c.line(prev, q, colour);
            prev = q;
        }
        c.put(prev.0, prev.1, colour);
    }
    c.into_image()
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Perceptually ordered dark-blue → yellow ramp on `[0, 1]`.
pub fn colormap(t: f64) -> [f64; 3] {
    const STOPS: [[f64; 3]; 5] = [
        [0.267, 0.005, 0.329],
        [0.229, 0.322, 0.546],
        [0.128, 0.567, 0.551],
        [0.369, 0.789, 0.383],
        [0.993, 0.906, 0.144],
    ];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (STOPS.len() - 1) as f64;
    let i = (pos.floor() as usize).min(STOPS.len() - 2);
    let f = pos - i as f64;
    std::array::from_fn(|c| STOPS[i][c] * (1.0 - f) + STOPS[i + 1][c] * f)
}

/// `cell×cell` blocks coloured by value, min to max of the grid.
pub fn heatmap(grid: &[Vec<f64>], cell: usize) -> Image {
    let rows = grid.len().max(1);
    let cols = grid.iter().map(Vec::len).max().unwrap_or(0).max(1);
    let (lo, hi) = bounds(grid.iter().flatten().copied().filter(|v| v.is_finite()));
    let mut c = Canvas::new(cols * cell, rows * cell);
    for (r, row) in grid.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            let colour = colormap(t);
            for y in 0..cell {
                for x in 0..cell {
                    c.put((k * cell + x) as i64, (r * cell + y) as i64, colour);
                }
            }
        }
    }
    c.into_image()
}

pub fn kernel_heatmap(k: &Kernel, cell: usize) -> Image {
    let n = k.size();
    let grid: Vec<Vec<f64>> = (0..n).map(|r| (0..n).map(|c| k.at(r, c)).collect()).collect();
    heatmap(&grid, cell)
}

/// Images left to right on a white background, top-aligned, `gap` pixels
/// apart. Luma images are shown in grey.
pub fn side_by_side(images: &[&Image], gap: usize) -> Image {
    let w = images.iter().map(|i| i.width()).sum::<usize>() + gap * images.len().saturating_sub(1);
    let h = images.iter().map(|i| i.height()).max().unwrap_or(0);
    let mut c = Canvas::new(w.max(1), h.max(1));
    let mut x0 = 0;
    for img in images {
        for y in 0..img.height() {
            for x in 0..img.width() {
                let px = match img.colorspace() {
                    ColorSpace::Rgb => [img.get(x, y, 0), img.get(x, y, 1), img.get(x, y, 2)],
                    ColorSpace::Y => [img.get(x, y, 0); 3],
                };
                c.put((x0 + x) as i64, y as i64, px.map(|v| v.clamp(0.0, 1.0)));
            }
        }
        x0 += img.width() + gap;
    }
    c.into_image()
}
