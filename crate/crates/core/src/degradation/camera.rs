use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Kernel, KernelSpec};
use crate::data::{DomainTag, Image};
use crate::{Error, Result};

pub const DEFAULT_KERNEL_SIZE: usize = 25;

/// A synthetic device: blur kernel, additive Gaussian noise and scale.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraProfile {
    pub name: DomainTag,
    pub kernel: Kernel,
    pub noise_sigma: f64,
    pub scale: usize,
}

/// Serializable recipe for a [`CameraProfile`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub name: String,
    pub kernel: KernelSpec,
    #[serde(default = "default_kernel_size")]
    pub kernel_size: usize,
    #[serde(default = "default_scale")]
    pub scale: usize,
    #[serde(default)]
    pub noise_sigma: f64,
}

fn default_kernel_size() -> usize {
    DEFAULT_KERNEL_SIZE
}

fn default_scale() -> usize {
    4
}

impl CameraSpec {
    pub fn build(&self) -> Result<CameraProfile> {
        make_camera_profile_sized(&self.name, &self.kernel, self.kernel_size, self.scale, self.noise_sigma)
    }
}

pub fn make_camera_profile(name: &str, kind: &KernelSpec, scale: usize, noise_sigma: f64) -> Result<CameraProfile> {
    make_camera_profile_sized(name, kind, DEFAULT_KERNEL_SIZE, scale, noise_sigma)
}

pub fn make_camera_profile_sized(
    name: &str,
    kind: &KernelSpec,
    kernel_size: usize,
    scale: usize,
    noise_sigma: f64,
) -> Result<CameraProfile> {
    if scale == 0 {
        return Err(Error::invalid("camera scale must be >= 1"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::invalid(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    Ok(CameraProfile {
        name: DomainTag::new(name)?,
        kernel: Kernel::from_spec(kind, kernel_size)?,
        noise_sigma,
        scale,
    })
}

impl CameraProfile {
    /// The same camera with a different kernel and no noise.
    pub fn with_kernel(&self, kernel: Kernel) -> CameraProfile {
        CameraProfile {
            name: self.name.clone(),
            kernel,
            noise_sigma: 0.0,
            scale: self.scale,
        }
    }
}

/// Reflect (mirror without edge repeat) an index into `[0, n)`.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// `(hr ⊗ k)↓s`: true convolution with reflect padding, evaluated only at
/// the upper-left pixel of every `s×s` cell.
pub fn blur_downsample(hr: &Image, kernel: &Kernel, scale: usize) -> Result<Image> {
    if scale == 0 || hr.width() % scale != 0 || hr.height() % scale != 0 {
        return Err(Error::shape(format!(
            "{}x{} image is not divisible by scale {scale}",
            hr.width(),
            hr.height()
        )));
    }
    let (w, h) = (hr.width() / scale, hr.height() / scale);
    let r = kernel.radius() as isize;
    let k = kernel.size();
    let (hw, hh) = (hr.width(), hr.height());
    let channels = hr.channels();
    let out = Image::from_fn(w, h, hr.colorspace(), |x, y, c| {
        let (cx, cy) = ((x * scale) as isize, (y * scale) as isize);
        let mut acc = 0.0;
        for i in 0..k {
            let sy = reflect(cy - (i as isize - r), hh);
            for j in 0..k {
                let sx = reflect(cx - (j as isize - r), hw);
                acc += kernel.at(i, j) * hr.get(sx, sy, c);
            }
        }
        acc
    });
    debug_assert_eq!(out.channels(), channels);
    Ok(out.with_tag(hr.device_tag.clone()))
}

/// Synthesizes the LR capture of `hr` by `profile`:
/// `clamp((hr ⊗ k)↓s + n)`, `n ~ N(0, σ²)` per value.
pub fn degrade(hr: &Image, profile: &CameraProfile, rng: &mut impl Rng) -> Result<Image> {
    let clean = blur_downsample(hr, &profile.kernel, profile.scale)?;
    let noisy = if profile.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, profile.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
        let mut img = clean;
        for y in 0..img.height() {
            for x in 0..img.width() {
                for c in 0..img.channels() {
                    let v = img.get(x, y, c) + normal.sample(rng);
                    img.set(x, y, c, v);
                }
            }
        }
        img
    } else {
        clean
    };
    Ok(noisy.clamped().with_tag(Some(profile.name.clone())))
}
