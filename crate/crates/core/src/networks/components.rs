//! Classical flat/edge/corner labels used to supervise the mask generator
//! during source pretraining.

use serde::{Deserialize, Serialize};

use crate::nn::{Tensor, LUMA_WEIGHTS};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentThresholds {
    /// Luma gradient magnitude above which a pixel is an edge.
    pub edge: f64,
    /// Harris response above this fraction of the image maximum marks a corner.
    pub corner: f64,
    /// Probability mass spread over the two other classes.
    pub smoothing: f64,
}

impl Default for ComponentThresholds {
    fn default() -> Self {
        ComponentThresholds {
            edge: 0.05,
            corner: 0.05,
            smoothing: 0.1,
        }
    }
}

const HARRIS_K: f64 = 0.04;

/// Soft one-hot `[N, 3, H, W]` labels (flat, edge, corner) for an RGB batch.
pub fn component_labels(hr: &Tensor, t: &ComponentThresholds) -> Tensor {
    let [n, c, h, w] = hr.shape();
    assert_eq!(c, 3, "component labels need RGB");
    let mut out = Tensor::zeros([n, 3, h, w]);
    let at = |v: &[f64], y: isize, x: isize| {
        let y = y.clamp(0, h as isize - 1) as usize;
        let x = x.clamp(0, w as isize - 1) as usize;
        v[y * w + x]
    };
    for b in 0..n {
        let luma: Vec<f64> = (0..h * w)
            .map(|p| (0..3).map(|ch| LUMA_WEIGHTS[ch] * hr.plane(b, ch)[p]).sum())
            .collect();
        let mut gx = vec![0.0; h * w];
        let mut gy = vec![0.0; h * w];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let p = y as usize * w + x as usize;
                gx[p] = 0.5 * (at(&luma, y, x + 1) - at(&luma, y, x - 1));
                gy[p] = 0.5 * (at(&luma, y + 1, x) - at(&luma, y - 1, x));
            }
        }
        let xx: Vec<f64> = gx.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = gy.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a * b).collect();
        let mut response = vec![0.0; h * w];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        sxx += at(&xx, y + dy, x + dx);
                        syy += at(&yy, y + dy, x + dx);
                        sxy += at(&xy, y + dy, x + dx);
                    }
                }
                let tr = sxx + syy;
                response[y as usize * w + x as usize] = sxx * syy - sxy * sxy - HARRIS_K * tr * tr;
            }
        }
        let rmax = response.iter().cloned().fold(0.0, f64::max);
        let (hi, lo) = (1.0 - t.smoothing, t.smoothing / 2.0);
        for p in 0..h * w {
            let mag = (gx[p] * gx[p] + gy[p] * gy[p]).sqrt();
            let class = if rmax > 0.0 && response[p] > t.corner * rmax {
                2
            } else if mag > t.edge {
                1
            } else {
                0
            };
            for k in 0..3 {
                out.set(b, k, p / w, p % w, if k == class { hi } else { lo });
            }
        }
    }
    out
}
