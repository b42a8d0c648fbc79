use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::{Tensor, LUMA_WEIGHTS};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    Rgb,
    Y,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Rgb => 3,
            ColorSpace::Y => 1,
        }
    }
}

/// Names a domain (a camera). Never empty.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DomainTag(String);

impl DomainTag {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(Error::invalid("domain tag must be non-empty"));
        }
        Ok(DomainTag(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for DomainTag {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        DomainTag::new(s)
    }
}

impl From<DomainTag> for String {
    fn from(t: DomainTag) -> String {
        t.0
    }
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// An `H×W×C` raster with interleaved channels. Values are nominally in
/// `[0, 1]`; raw network outputs may leave that range until [`Image::clamped`].
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    colorspace: ColorSpace,
    data: Vec<f64>,
    pub device_tag: Option<DomainTag>,
}

impl Image {
    pub fn new(width: usize, height: usize, colorspace: ColorSpace, data: Vec<f64>) -> Result<Self> {
        let expected = width * height * colorspace.channels();
        if data.len() != expected {
            return Err(Error::shape(format!(
                "image data has {} values, expected {width}x{height}x{}",
                data.len(),
                colorspace.channels()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite pixel value {bad}")));
        }
        Ok(Image {
            width,
            height,
            colorspace,
            data,
            device_tag: None,
        })
    }

    pub fn filled(width: usize, height: usize, colorspace: ColorSpace, value: f64) -> Self {
        Image {
            width,
            height,
            colorspace,
            data: vec![value; width * height * colorspace.channels()],
            device_tag: None,
        }
    }

    /// Builds an image from `f(x, y, channel)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        colorspace: ColorSpace,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let c = colorspace.channels();
        let mut data = Vec::with_capacity(width * height * c);
        for y in 0..height {
            for x in 0..width {
                for ch in 0..c {
                    data.push(f(x, y, ch));
                }
            }
        }
        Image {
            width,
            height,
            colorspace,
            data,
            device_tag: None,
        }
    }

    pub fn with_tag(mut self, tag: Option<DomainTag>) -> Self {
        self.device_tag = tag;
        self
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.colorspace.channels()
    }

    #[inline]
    pub fn colorspace(&self) -> ColorSpace {
        self.colorspace
    }

    /// `(height, width, channels)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels())
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels() + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let ch = self.channels();
        self.data[(y * self.width + x) * ch + c] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.dims() == other.dims()
    }

    pub(crate) fn ensure_same_shape(&self, other: &Image, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{what}: {:?} vs {:?} (HxWxC)",
                self.dims(),
                other.dims()
            )))
        }
    }

    pub fn clamped(&self) -> Image {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = v.clamp(0.0, 1.0);
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = f(*v);
        }
        out
    }

    /// The `w×h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::shape(format!(
                "crop {w}x{h}+{x0}+{y0} exceeds {}x{} image",
                self.width, self.height
            )));
        }
        let c = self.channels();
        let mut data = Vec::with_capacity(w * h * c);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * c;
            data.extend_from_slice(&self.data[start..start + w * c]);
        }
        Ok(Image {
            width: w,
            height: h,
            colorspace: self.colorspace,
            data,
            device_tag: self.device_tag.clone(),
        })
    }

    /// As a `[1, C, H, W]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        let c = self.channels();
        Tensor::from_fn([1, c, self.height, self.width], |[_, ch, y, x]| self.get(x, y, ch))
    }

    /// Batch item `index` of an NCHW tensor. Channel count picks the colour
    /// space (3 → RGB, 1 → Y).
    pub fn from_tensor(t: &Tensor, index: usize) -> Result<Image> {
        let [_, c, h, w] = t.shape();
        let colorspace = match c {
            3 => ColorSpace::Rgb,
            1 => ColorSpace::Y,
            _ => return Err(Error::shape(format!("cannot view {c}-channel tensor as an image"))),
        };
        let data = (0..h * w * c)
            .map(|i| {
                let (p, ch) = (i / c, i % c);
                t.at(index, ch, p / w, p % w)
            })
            .collect();
        Image::new(w, h, colorspace, data)
    }

    pub fn batch_to_tensor(images: &[&Image]) -> Tensor {
        let parts: Vec<Tensor> = images.iter().map(|i| i.to_tensor()).collect();
        Tensor::stack(&parts)
    }

    /// Luma (BT.601, full range): `Y = 0.299 R + 0.587 G + 0.114 B`.
    pub fn to_y(&self) -> Result<Image> {
        if self.colorspace != ColorSpace::Rgb {
            return Err(Error::invalid("rgb_to_y requires an RGB image"));
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| LUMA_WEIGHTS[0] * p[0] + LUMA_WEIGHTS[1] * p[1] + LUMA_WEIGHTS[2] * p[2])
            .collect();
        Ok(Image {
            width: self.width,
            height: self.height,
            colorspace: ColorSpace::Y,
            data,
            device_tag: self.device_tag.clone(),
        })
    }

    pub fn load_png(path: &Path) -> Result<Image> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        let data = rgb.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
        Image::new(w as usize, h as usize, ColorSpace::Rgb, data)
    }

    /// 8-bit quantisation of the clamped values.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let bytes = self.to_u8();
        let color = match self.colorspace {
            ColorSpace::Rgb => image::ExtendedColorType::Rgb8,
            ColorSpace::Y => image::ExtendedColorType::L8,
        };
        image::save_buffer(path, &bytes, self.width as u32, self.height as u32, color).map_err(|source| {
            Error::Image {
                path: path.to_path_buf(),
                source,
            }
        })
    }

    /// Rounds every value to the nearest 8-bit level, as a PNG round trip would.
    pub fn quantized(&self) -> Image {
        self.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
    }
}

/// Free-function form of [`Image::to_y`].
pub fn rgb_to_y(img: &Image) -> Result<Image> {
    img.to_y()
}
