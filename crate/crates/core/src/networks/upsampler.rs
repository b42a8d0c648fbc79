//! Component-attentive upsampler: an hourglass backbone, three
//! component branches (flat, edge, corner) and a mask generator whose softmax
//! output weighs the three intermediate SR images.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ArchConfig, Module};
use crate::data::{ColorSpace, Image};
use crate::nn::{Conv, ConvSpec, Graph, ParamId, ParamStore, Tensor, Var, LEAKY_SLOPE};
use crate::{Error, Result};

pub const COMPONENTS: [&str; 3] = ["flat", "edge", "corner"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hourglass {
    pub down: Vec<Conv>,
    pub inner: Conv,
    pub up: Vec<Conv>,
}

impl Hourglass {
    fn new(store: &mut ParamStore, name: &str, width: usize, depth: usize, rng: &mut impl Rng) -> Self {
        let down = (0..depth)
            .map(|i| Conv::new(store, &format!("{name}.down{i}"), ConvSpec::strided(width, width, 3, 2, 1), 1.0, rng))
            .collect();
        let inner = Conv::new(store, &format!("{name}.inner"), ConvSpec::same(width, width, 3), 1.0, rng);
        let up = (0..depth)
            .map(|i| Conv::new(store, &format!("{name}.up{i}"), ConvSpec::same(width, width, 3), 0.5, rng))
            .collect();
        Hourglass { down, inner, up }
    }

    fn level(&self, g: &mut Graph, x: Var, i: usize) -> Var {
        if i == self.down.len() {
            let y = self.inner.forward(g, x);
            let y = g.leaky_relu(y, LEAKY_SLOPE);
            return g.add(x, y);
        }
        let [_, _, h, w] = g.shape(x);
        let d = self.down[i].forward(g, x);
        let d = g.leaky_relu(d, LEAKY_SLOPE);
        let y = self.level(g, d, i + 1);
        let u = g.upsample_nearest(y, 2);
        let u = g.crop(u, h, w);
        let u = self.up[i].forward(g, u);
        let u = g.leaky_relu(u, LEAKY_SLOPE);
        g.add(x, u)
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        self.level(g, x, 0)
    }
}

impl Module for Hourglass {
    fn params(&self) -> Vec<ParamId> {
        let mut p: Vec<ParamId> = self.down.iter().flat_map(|c| c.params()).collect();
        p.extend(self.inner.params());
        p.extend(self.up.iter().flat_map(|c| c.params()));
        p
    }

    fn remap(&self, f: &mut dyn FnMut(ParamId) -> ParamId) -> Self {
        Hourglass {
            down: self.down.iter().map(|c| c.remap(f)).collect(),
            inner: self.inner.remap(f),
            up: self.up.iter().map(|c| c.remap(f)).collect(),
        }
    }
}

/// Predicts per-pixel flat/edge/corner logits at HR resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskGenerator {
    pub convs: Vec<Conv>,
    pub scale: usize,
}

impl MaskGenerator {
    fn new(store: &mut ParamStore, name: &str, width: usize, scale: usize, rng: &mut impl Rng) -> Self {
        let convs = vec![
            Conv::new(store, &format!("{name}.c0"), ConvSpec::same(3, width, 3), 1.0, rng),
            Conv::new(store, &format!("{name}.c1"), ConvSpec::same(width, width, 3), 1.0, rng),
            Conv::new(store, &format!("{name}.c2"), ConvSpec::same(width, 3 * scale * scale, 3), 0.5, rng),
        ];
        MaskGenerator { convs, scale }
    }

    /// Softmax-normalised `[N, 3, H·s, W·s]` masks.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let logits = self.logits(g, x);
        g.softmax_channels(logits)
    }

    pub fn logits(&self, g: &mut Graph, x: Var) -> Var {
        let mut h = x;
        for (i, c) in self.convs.iter().enumerate() {
            h = c.forward(g, h);
            if i + 1 < self.convs.len() {
                h = g.leaky_relu(h, LEAKY_SLOPE);
            }
        }
        g.pixel_shuffle(h, self.scale)
    }
}

impl Module for MaskGenerator {
    fn params(&self) -> Vec<ParamId> {
        self.convs.iter().flat_map(|c| c.params()).collect()
    }

    fn remap(&self, f: &mut dyn FnMut(ParamId) -> ParamId) -> Self {
        MaskGenerator {
            convs: self.convs.iter().map(|c| c.remap(f)).collect(),
            scale: self.scale,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Upsampler {
    pub head: Conv,
    pub hourglass: Hourglass,
    /// One `[conv, conv]` branch per component, in [`COMPONENTS`] order.
    pub branches: Vec<[Conv; 2]>,
    pub masks: MaskGenerator,
    pub scale: usize,
}

/// Graph handles of one upsampler forward pass.
#[derive(Clone, Copy, Debug)]
pub struct UpsampleVars {
    pub sr: Var,
    pub masks: Var,
    pub intermediates: [Var; 3],
}

impl Upsampler {
    pub fn new(store: &mut ParamStore, name: &str, arch: &ArchConfig, rng: &mut impl Rng) -> Self {
        let w = arch.up_width;
        let s = arch.scale;
        let head = Conv::new(store, &format!("{name}.head"), ConvSpec::same(3, w, 3), 1.0, rng);
        let hourglass = Hourglass::new(store, &format!("{name}.hg"), w, arch.hourglass_depth, rng);
        let branches = COMPONENTS
            .iter()
            .map(|comp| {
                [
                    Conv::new(store, &format!("{name}.{comp}.c0"), ConvSpec::same(w, w, 3), 1.0, rng),
                    Conv::new(store, &format!("{name}.{comp}.c1"), ConvSpec::same(w, 3 * s * s, 3), 0.1, rng),
                ]
            })
            .collect();
        let masks = MaskGenerator::new(store, &format!("{name}.masks"), arch.mask_width, s, rng);
        Upsampler {
            head,
            hourglass,
            branches,
            masks,
            scale: s,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> UpsampleVars {
        assert_eq!(g.shape(x)[1], 3, "upsampler expects RGB input");
        let h = self.head.forward(g, x);
        let h = g.leaky_relu(h, LEAKY_SLOPE);
        let feats = self.hourglass.forward(g, h);
        let base = g.upsample_nearest(x, self.scale);
        let intermediates: [Var; 3] = std::array::from_fn(|c| {
            let [c0, c1] = &self.branches[c];
            let b = c0.forward(g, feats);
            let b = g.leaky_relu(b, LEAKY_SLOPE);
            let b = c1.forward(g, b);
            let b = g.pixel_shuffle(b, self.scale);
            g.add(base, b)
        });
        let masks = self.masks.forward(g, x);
        let sr = mix(g, masks, &intermediates);
        UpsampleVars {
            sr,
            masks,
            intermediates,
        }
    }

    /// Parameters outside the mask generator.
    pub fn body_params(&self) -> Vec<ParamId> {
        let mut p: Vec<ParamId> = self.head.params().to_vec();
        p.extend(self.hourglass.params());
        p.extend(self.branches.iter().flat_map(|b| b.iter().flat_map(|c| c.params())));
        p
    }

    pub fn mask_params(&self) -> Vec<ParamId> {
        self.masks.params()
    }

    /// Evaluation-mode forward of a single image. `sr` and the intermediates
    /// are clamped to `[0, 1]`.
    pub fn upsample(&self, store: &ParamStore, lr: &Image) -> Result<(Image, ComponentMasks, [Image; 3])> {
        if lr.colorspace() != ColorSpace::Rgb {
            return Err(Error::invalid("upsampler input must be RGB"));
        }
        let mut g = Graph::frozen(store);
        let x = g.constant(lr.to_tensor());
        let out = self.forward(&mut g, x);
        let sr = Image::from_tensor(g.value(out.sr), 0)?.clamped();
        let masks = ComponentMasks::from_tensor(g.value(out.masks), 0)?;
        let inter = out
            .intermediates
            .map(|v| Image::from_tensor(g.value(v), 0).map(|i| i.clamped()));
        let [a, b, c] = inter;
        Ok((sr, masks, [a?, b?, c?]))
    }

    /// Evaluation-mode SR of a batch tensor (raw, unclamped).
    pub fn infer(&self, store: &ParamStore, x: &Tensor) -> Tensor {
        let mut g = Graph::frozen(store);
        let xv = g.constant(x.clone());
        let out = self.forward(&mut g, xv);
        g.value(out.sr).clone()
    }

    pub fn super_resolve(&self, store: &ParamStore, lr: &Image) -> Result<Image> {
        if lr.colorspace() != ColorSpace::Rgb {
            return Err(Error::invalid("upsampler input must be RGB"));
        }
        let t = self.infer(store, &lr.to_tensor());
        Ok(Image::from_tensor(&t, 0)?.clamped().with_tag(lr.device_tag.clone()))
    }
}

/// `Σ_c masks[:, c] ⊙ intermediates[c]`
pub fn mix(g: &mut Graph, masks: Var, intermediates: &[Var; 3]) -> Var {
    let mut acc = None;
    for (c, &inter) in intermediates.iter().enumerate() {
        let m = g.slice_channel(masks, c);
        let term = g.mul_channel(inter, m);
        acc = Some(match acc {
            None => term,
            Some(a) => g.add(a, term),
        });
    }
    acc.expect("three components")
}

impl Module for Upsampler {
    fn params(&self) -> Vec<ParamId> {
        let mut p = self.body_params();
        p.extend(self.mask_params());
        p
    }

    fn remap(&self, f: &mut dyn FnMut(ParamId) -> ParamId) -> Self {
        Upsampler {
            head: self.head.remap(f),
            hourglass: self.hourglass.remap(f),
            branches: self.branches.iter().map(|[a, b]| [a.remap(f), b.remap(f)]).collect(),
            masks: self.masks.remap(f),
            scale: self.scale,
        }
    }
}

/// Per-pixel flat/edge/corner attention at HR resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentMasks {
    pub width: usize,
    pub height: usize,
    /// `[flat, edge, corner]`, each row-major `height × width`.
    pub masks: [Vec<f64>; 3],
}

impl ComponentMasks {
    pub fn from_tensor(t: &Tensor, n: usize) -> Result<Self> {
        if t.c() != 3 {
            return Err(Error::shape(format!("component masks need 3 channels, got {}", t.c())));
        }
        Ok(ComponentMasks {
            width: t.w(),
            height: t.h(),
            masks: std::array::from_fn(|c| t.plane(n, c).to_vec()),
        })
    }

    pub fn as_image(&self, component: usize) -> Image {
        let m = &self.masks[component];
        Image::from_fn(self.width, self.height, ColorSpace::Y, |x, y, _| m[y * self.width + x])
    }
}
