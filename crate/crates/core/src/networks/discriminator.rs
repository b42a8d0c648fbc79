use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Module;
use crate::data::Image;
use crate::nn::{conv_out_size, Conv, ConvSpec, Graph, ParamId, ParamStore, Tensor, Var, LEAKY_SLOPE};
use crate::{Error, Result};

const IN_EPS: f64 = 1e-5;

/// Luma for inter-domain discriminators, RGB for intra-domain ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiscInput {
    Y,
    Rgb,
}

impl DiscInput {
    pub fn channels(self) -> usize {
        match self {
            DiscInput::Y => 1,
            DiscInput::Rgb => 3,
        }
    }
}

/// PatchGAN:
///
/// | layer | kernel | stride | pad | channels      | norm     |
/// |-------|--------|--------|-----|---------------|----------|
/// | 0     | 4      | 2      | 1   | in → w        | none     |
/// | 1     | 4      | 2      | 1   | w → 2w        | instance |
/// | 2     | 4      | 2      | 1   | 2w → 4w       | instance |
/// | head  | 3      | 1      | 1   | 4w → 1        | none     |
///
/// LeakyReLU 0.2 after layers 0 to 2. A 192×192 input gives 24×24 logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub blocks: Vec<Conv>,
    pub head: Conv,
    pub input: DiscInput,
}

impl Discriminator {
    pub fn new(store: &mut ParamStore, name: &str, input: DiscInput, width: usize, rng: &mut impl Rng) -> Self {
        let chans = [input.channels(), width, 2 * width, 4 * width];
        let blocks = (0..3)
            .map(|i| {
                Conv::new(store, &format!("{name}.block{i}"), ConvSpec::strided(chans[i], chans[i + 1], 4, 2, 1), 1.0, rng)
            })
            .collect();
        let head = Conv::new(store, &format!("{name}.head"), ConvSpec::same(chans[3], 1, 3), 1.0, rng);
        Discriminator { blocks, head, input }
    }

    /// `(h, w)` of the logit map for an `h×w` input, or `None` if too small.
    pub fn output_dims(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let mut dims = (h, w);
        for b in &self.blocks {
            dims = (conv_out_size(dims.0, 4, b.stride, b.pad)?, conv_out_size(dims.1, 4, b.stride, b.pad)?);
        }
        Some((conv_out_size(dims.0, 3, 1, 1)?, conv_out_size(dims.1, 3, 1, 1)?))
    }

    /// [`Discriminator::output_dims`] of the standard architecture, without
    /// building one.
    pub fn logit_dims(h: usize, w: usize) -> Option<(usize, usize)> {
        let mut dims = (h, w);
        for _ in 0..3 {
            dims = (conv_out_size(dims.0, 4, 2, 1)?, conv_out_size(dims.1, 4, 2, 1)?);
        }
        Some((conv_out_size(dims.0, 3, 1, 1)?, conv_out_size(dims.1, 3, 1, 1)?))
    }

    /// Patch logits `[N, 1, h, w]`. Input must already be in the right colour
    /// space.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        assert_eq!(g.shape(x)[1], self.input.channels(), "discriminator channel mismatch");
        let mut h = x;
        for (i, b) in self.blocks.iter().enumerate() {
            h = b.forward(g, h);
            if i > 0 {
                h = g.instance_norm(h, IN_EPS);
            }
            h = g.leaky_relu(h, LEAKY_SLOPE);
        }
        self.head.forward(g, h)
    }

    /// Converts an RGB batch to the discriminator's input space first.
    pub fn forward_rgb(&self, g: &mut Graph, rgb: Var) -> Var {
        let x = match self.input {
            DiscInput::Y => g.rgb_to_y(rgb),
            DiscInput::Rgb => rgb,
        };
        self.forward(g, x)
    }

    /// Evaluation-mode logits of one image whose channel count must match.
    pub fn discriminate(&self, store: &ParamStore, img: &Image) -> Result<Tensor> {
        if img.channels() != self.input.channels() {
            return Err(Error::shape(format!(
                "discriminator expects {} channels, got {}",
                self.input.channels(),
                img.channels()
            )));
        }
        if self.output_dims(img.height(), img.width()).is_none() {
            return Err(Error::shape(format!("image {}x{} too small for discriminator", img.height(), img.width())));
        }
        let mut g = Graph::frozen(store);
        let x = g.constant(img.to_tensor());
        let y = self.forward(&mut g, x);
        Ok(g.value(y).clone())
    }
}

impl Module for Discriminator {
    fn params(&self) -> Vec<ParamId> {
        let mut p: Vec<ParamId> = self.blocks.iter().flat_map(|c| c.params()).collect();
        p.extend(self.head.params());
        p
    }

    fn remap(&self, f: &mut dyn FnMut(ParamId) -> ParamId) -> Self {
        Discriminator {
            blocks: self.blocks.iter().map(|c| c.remap(f)).collect(),
            head: self.head.remap(f),
            input: self.input,
        }
    }
}
