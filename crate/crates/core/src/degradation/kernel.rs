use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A square, odd-sized blur kernel, normalised to unit sum.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    size: usize,
    weights: Vec<f64>,
}

/// Parametric kernel families for synthetic cameras.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Delta,
    IsoGauss { sigma: f64 },
    AnisoGauss { sigma_x: f64, sigma_y: f64, angle_deg: f64 },
    Motion { length: f64, angle_deg: f64 },
}

impl Kernel {
    /// Normalises `weights` to unit sum. Signed weights are allowed as long
    /// as the sum is not ~0.
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size % 2 == 0 || size == 0 {
            return Err(Error::invalid(format!("kernel size must be odd, got {size}")));
        }
        if weights.len() != size * size {
            return Err(Error::shape(format!(
                "kernel of size {size} needs {} weights, got {}",
                size * size,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("kernel weights must be finite"));
        }
        let sum: f64 = weights.iter().sum();
        if sum.abs() < 1e-12 {
            return Err(Error::invalid("kernel weights sum to zero"));
        }
        Ok(Kernel {
            size,
            weights: weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    pub fn delta(size: usize) -> Result<Self> {
        let mut w = vec![0.0; size * size];
        if size % 2 == 1 {
            w[(size / 2) * size + size / 2] = 1.0;
        }
        Kernel::new(size, w)
    }

    pub fn from_spec(spec: &KernelSpec, size: usize) -> Result<Self> {
        match *spec {
            KernelSpec::Delta => Kernel::delta(size),
            KernelSpec::IsoGauss { sigma } => Kernel::aniso_gauss(size, sigma, sigma, 0.0),
            KernelSpec::AnisoGauss {
                sigma_x,
                sigma_y,
                angle_deg,
            } => Kernel::aniso_gauss(size, sigma_x, sigma_y, angle_deg),
            KernelSpec::Motion { length, angle_deg } => Kernel::motion(size, length, angle_deg),
        }
    }

    pub fn iso_gauss(size: usize, sigma: f64) -> Result<Self> {
        Kernel::aniso_gauss(size, sigma, sigma, 0.0)
    }

    /// Gaussian with principal standard deviations `sigma_x`, `sigma_y`,
    /// rotated counter-clockwise by `angle_deg`.
    pub fn aniso_gauss(size: usize, sigma_x: f64, sigma_y: f64, angle_deg: f64) -> Result<Self> {
        if !(sigma_x > 0.0 && sigma_y > 0.0) {
            return Err(Error::invalid(format!(
                "gaussian sigmas must be positive, got ({sigma_x}, {sigma_y})"
            )));
        }
        let (s, c) = angle_deg.to_radians().sin_cos();
        // Σ = R diag(σx², σy²) Rᵀ, evaluated through its inverse.
        let (a, b) = (1.0 / (sigma_x * sigma_x), 1.0 / (sigma_y * sigma_y));
        let inv_xx = c * c * a + s * s * b;
        let inv_xy = c * s * (a - b);
        let inv_yy = s * s * a + c * c * b;
        let r = (size / 2) as f64;
        let weights = (0..size * size)
            .map(|i| {
                let x = (i % size) as f64 - r;
                let y = (i / size) as f64 - r;
                (-0.5 * (inv_xx * x * x + 2.0 * inv_xy * x * y + inv_yy * y * y)).exp()
            })
            .collect();
        Kernel::new(size, weights)
    }

    /// A straight motion streak of `length` pixels through the centre.
    pub fn motion(size: usize, length: f64, angle_deg: f64) -> Result<Self> {
        if !(length > 0.0) {
            return Err(Error::invalid(format!("motion length must be positive, got {length}")));
        }
        let (s, c) = angle_deg.to_radians().sin_cos();
        let r = (size / 2) as f64;
        let mut w = vec![0.0; size * size];
        let steps = (length * 16.0).ceil() as usize + 1;
        for i in 0..steps {
            let t = if steps == 1 { 0.0 } else { i as f64 / (steps - 1) as f64 - 0.5 } * length;
            let (x, y) = (r + t * c, r - t * s);
            // Bilinear splat.
            let (x0, y0) = (x.floor(), y.floor());
            let (fx, fy) = (x - x0, y - y0);
            for (dx, dy, wt) in [
                (0.0, 0.0, (1.0 - fx) * (1.0 - fy)),
                (1.0, 0.0, fx * (1.0 - fy)),
                (0.0, 1.0, (1.0 - fx) * fy),
                (1.0, 1.0, fx * fy),
            ] {
                let (xi, yi) = (x0 + dx, y0 + dy);
                if xi >= 0.0 && yi >= 0.0 && (xi as usize) < size && (yi as usize) < size {
                    w[yi as usize * size + xi as usize] += wt;
                }
            }
        }
        Kernel::new(size, w)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.size + col]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weighted centroid `(x, y)` relative to the kernel centre.
    pub fn centroid(&self) -> (f64, f64) {
        let r = self.radius() as f64;
        let mut m = (0.0, 0.0);
        for (i, w) in self.weights.iter().enumerate() {
            m.0 += w * ((i % self.size) as f64 - r);
            m.1 += w * ((i / self.size) as f64 - r);
        }
        m
    }

    /// Second central moments `[[xx, xy], [xy, yy]]` of the weights.
    pub fn covariance(&self) -> [[f64; 2]; 2] {
        let r = self.radius() as f64;
        let (cx, cy) = self.centroid();
        let mut cov = [[0.0; 2]; 2];
        for (i, w) in self.weights.iter().enumerate() {
            let x = (i % self.size) as f64 - r - cx;
            let y = (i / self.size) as f64 - r - cy;
            cov[0][0] += w * x * x;
            cov[0][1] += w * x * y;
            cov[1][1] += w * y * y;
        }
        cov[1][0] = cov[0][1];
        cov
    }

    /// Whitespace-separated `k` rows of `k` values.
    pub fn to_text_grid(&self) -> String {
        let mut out = String::new();
        for row in self.weights.chunks(self.size) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.8e}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn from_text_grid(text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|e| Error::invalid(format!("kernel grid value `{t}`: {e}"))))
                    .collect()
            })
            .collect::<Result<_>>()?;
        let size = rows.len();
        if rows.iter().any(|r| r.len() != size) {
            return Err(Error::shape("kernel grid is not square"));
        }
        Kernel::new(size, rows.into_iter().flatten().collect())
    }
}

/// L2 distance between two (normalised) kernels of the same size.
pub fn kernel_distance(a: &Kernel, b: &Kernel) -> Result<f64> {
    if a.size != b.size {
        return Err(Error::shape(format!("kernel sizes differ: {} vs {}", a.size, b.size)));
    }
    Ok(a.weights
        .iter()
        .zip(&b.weights)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}
