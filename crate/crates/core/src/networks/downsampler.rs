use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ArchConfig, Module};
use crate::data::Image;
use crate::nn::{Conv, ConvSpec, Graph, ParamId, ParamStore, Var, LEAKY_SLOPE};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResBlock {
    pub c0: Conv,
    pub c1: Conv,
}

impl ResBlock {
    fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let h = self.c0.forward(g, x);
        let h = g.leaky_relu(h, LEAKY_SLOPE);
        let h = self.c1.forward(g, h);
        g.add(x, h)
    }
}

/// HR → LR network: `log2(scale)` stride-2 convolutions, residual blocks and
/// a 3-channel tail, added to an area-average of the input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Downsampler {
    pub stages: Vec<Conv>,
    pub blocks: Vec<ResBlock>,
    pub tail: Conv,
    pub scale: usize,
}

impl Downsampler {
    pub fn new(store: &mut ParamStore, name: &str, arch: &ArchConfig, rng: &mut impl Rng) -> Self {
        let w = arch.down_width;
        let stages = (0..arch.down_stages())
            .map(|i| {
                let cin = if i == 0 { 3 } else { w };
                Conv::new(store, &format!("{name}.stage{i}"), ConvSpec::strided(cin, w, 3, 2, 1), 1.0, rng)
            })
            .collect();
        let blocks = (0..arch.down_blocks)
            .map(|i| ResBlock {
                c0: Conv::new(store, &format!("{name}.block{i}.c0"), ConvSpec::same(w, w, 3), 1.0, rng),
                c1: Conv::new(store, &format!("{name}.block{i}.c1"), ConvSpec::same(w, w, 3), 0.1, rng),
            })
            .collect();
        let tail = Conv::new(store, &format!("{name}.tail"), ConvSpec::same(w, 3, 3), 0.1, rng);
        Downsampler {
            stages,
            blocks,
            tail,
            scale: arch.scale,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let [_, c, h, w] = g.shape(x);
        assert!(c == 3 && h % self.scale == 0 && w % self.scale == 0, "downsampler input {c}x{h}x{w}");
        let mut f = x;
        for s in &self.stages {
            f = s.forward(g, f);
            f = g.leaky_relu(f, LEAKY_SLOPE);
        }
        for b in &self.blocks {
            f = b.forward(g, f);
        }
        let r = self.tail.forward(g, f);
        let base = g.avg_pool(x, self.scale);
        g.add(base, r)
    }

    /// Evaluation-mode forward of one image (unclamped).
    pub fn downsample(&self, store: &ParamStore, sr: &Image) -> Result<Image> {
        if sr.channels() != 3 || sr.width() % self.scale != 0 || sr.height() % self.scale != 0 {
            return Err(Error::shape(format!(
                "downsampler needs RGB dims divisible by {}, got {}x{}x{}",
                self.scale,
                sr.height(),
                sr.width(),
                sr.channels()
            )));
        }
        let mut g = Graph::frozen(store);
        let x = g.constant(sr.to_tensor());
        let y = self.forward(&mut g, x);
        Image::from_tensor(g.value(y), 0)
    }
}

impl Module for Downsampler {
    fn params(&self) -> Vec<ParamId> {
        let mut p: Vec<ParamId> = self.stages.iter().flat_map(|c| c.params()).collect();
        p.extend(self.blocks.iter().flat_map(|b| b.c0.params().into_iter().chain(b.c1.params())));
        p.extend(self.tail.params());
        p
    }

    fn remap(&self, f: &mut dyn FnMut(ParamId) -> ParamId) -> Self {
        Downsampler {
            stages: self.stages.iter().map(|c| c.remap(f)).collect(),
            blocks: self
                .blocks
                .iter()
                .map(|b| ResBlock {
                    c0: b.c0.remap(f),
                    c1: b.c1.remap(f),
                })
                .collect(),
            tail: self.tail.remap(f),
            scale: self.scale,
        }
    }
}
