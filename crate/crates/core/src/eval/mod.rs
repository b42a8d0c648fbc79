//! PSNR on luma, SSIM on RGB, difference maps and cross-device tables.

mod report;

pub use report::{cross_device_matrix, evaluate, CrossDeviceMatrix, EvalOptions, EvalReport, ImageScore, SuperResolver};

use crate::data::{ColorSpace, Image};
use crate::{Error, Result};

/// Returned instead of +∞ when the two images are identical.
pub const PSNR_CAP: f64 = 99.0;
/// Pixels cropped from every side before PSNR/SSIM.
pub const DEFAULT_BORDER: usize = 4;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn luma(img: &Image) -> Result<Image> {
    match img.colorspace() {
        ColorSpace::Rgb => img.to_y(),
        ColorSpace::Y => Ok(img.clone()),
    }
}

fn crop_border(img: &Image, border: usize) -> Result<Image> {
    if border == 0 {
        return Ok(img.clone());
    }
    if img.width() <= 2 * border || img.height() <= 2 * border {
        return Err(Error::shape(format!(
            "{}x{} image is too small for a {border}-pixel border crop",
            img.width(),
            img.height()
        )));
    }
    img.crop(border, border, img.width() - 2 * border, img.height() - 2 * border)
}

/// PSNR of the luma channels after the default border crop.
pub fn psnr_y(sr: &Image, hr: &Image) -> Result<f64> {
    psnr_y_with_border(sr, hr, DEFAULT_BORDER)
}

/// `10·log10(1 / MSE_Y)` on `[0, 1]` values, capped at [`PSNR_CAP`].
pub fn psnr_y_with_border(sr: &Image, hr: &Image, border: usize) -> Result<f64> {
    sr.ensure_same_shape(hr, "psnr_y")?;
    let a = crop_border(&luma(sr)?, border)?;
    let b = crop_border(&luma(hr)?, border)?;
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Mean SSIM after the default border crop.
pub fn ssim(sr: &Image, hr: &Image) -> Result<f64> {
    ssim_with_border(sr, hr, DEFAULT_BORDER)
}

/// SSIM with an 11×11 Gaussian window (σ = 1.5) over valid positions only,
/// averaged over the channels.
pub fn ssim_with_border(sr: &Image, hr: &Image, border: usize) -> Result<f64> {
    sr.ensure_same_shape(hr, "ssim")?;
    let a = crop_border(sr, border)?;
    let b = crop_border(hr, border)?;
    if a.width() < SSIM_WINDOW || a.height() < SSIM_WINDOW {
        return Err(Error::shape(format!(
            "{}x{} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window",
            a.width(),
            a.height()
        )));
    }
    let g = gaussian_1d(SSIM_WINDOW, SSIM_SIGMA);
    let c = a.channels();
    let mut total = 0.0;
    for ch in 0..c {
        let pa: Vec<f64> = (0..a.width() * a.height()).map(|p| a.data()[p * c + ch]).collect();
        let pb: Vec<f64> = (0..b.width() * b.height()).map(|p| b.data()[p * c + ch]).collect();
        total += ssim_plane(&pa, &pb, a.width(), a.height(), &g);
    }
    Ok(total / c as f64)
}

pub(crate) fn gaussian_1d(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let g: Vec<f64> = (0..size).map(|i| (-(i as f64 - r).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable valid-mode filtering of a `w×h` plane.
fn filter_valid(p: &[f64], w: usize, h: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..k).map(|i| g[i] * p[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| g[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], w: usize, h: usize, g: &[f64]) -> f64 {
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect() };
    let mu_a = filter_valid(a, w, h, g);
    let mu_b = filter_valid(b, w, h, g);
    let aa = filter_valid(&prod(&|x, _| x * x), w, h, g);
    let bb = filter_valid(&prod(&|_, y| y * y), w, h, g);
    let ab = filter_valid(&prod(&|x, y| x * y), w, h, g);
    let n = mu_a.len();
    let mut s = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        s += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    s / n as f64
}

/// `|hr − sr|` per value, plus a copy scaled by its maximum for display.
#[derive(Clone, Debug, PartialEq)]
pub struct DifferenceMap {
    pub raw: Image,
    pub display: Image,
}

impl DifferenceMap {
    /// Mean of the raw map, summed in the same order as the L1 loss.
    pub fn mean(&self) -> f64 {
        let t = self.raw.to_tensor();
        t.data().iter().sum::<f64>() / t.len() as f64
    }
}

pub fn difference_map(sr: &Image, hr: &Image) -> Result<DifferenceMap> {
    sr.ensure_same_shape(hr, "difference_map")?;
    let data: Vec<f64> = sr.data().iter().zip(hr.data()).map(|(a, b)| (b - a).abs()).collect();
    let max = data.iter().cloned().fold(0.0, f64::max);
    let display: Vec<f64> = data.iter().map(|&v| if max > 0.0 { v / max } else { 0.0 }).collect();
    Ok(DifferenceMap {
        raw: Image::new(sr.width(), sr.height(), sr.colorspace(), data)?,
        display: Image::new(sr.width(), sr.height(), sr.colorspace(), display)?,
    })
}
