use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Image;
use crate::nn::{Graph, ParamStore, Tensor, Var};

/// Seed of the frozen random extractor's weights.
pub const EXTRACTOR_SEED: u64 = 0x5EED_F00D;

/// A frozen feature map `φ` for the perceptual loss. Gradients flow to the
/// input only.
pub trait FeatureExtractor {
    fn name(&self) -> &str;

    fn features(&self, g: &mut Graph, x: Var) -> Var;

    fn extract(&self, img: &Image) -> Tensor {
        let store = ParamStore::new();
        let mut g = Graph::frozen(&store);
        let x = g.constant(img.to_tensor());
        let f = self.features(&mut g, x);
        g.value(f).clone()
    }
}

/// `φ(x) = x`.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityExtractor;

impl FeatureExtractor for IdentityExtractor {
    fn name(&self) -> &str {
        "identity"
    }

    fn features(&self, _g: &mut Graph, x: Var) -> Var {
        x
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrozenConv {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
}

/// Five 3×3 convolutions with He-normal weights drawn from
/// [`EXTRACTOR_SEED`], ReLU between layers, strides 1-2-1-2-1.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomConvExtractor {
    pub layers: Vec<FrozenConv>,
}

impl RandomConvExtractor {
    pub fn new() -> Self {
        Self::with_seed(EXTRACTOR_SEED)
    }

    pub fn with_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plan = [(3, 8, 1), (8, 8, 2), (8, 16, 1), (16, 16, 2), (16, 16, 1)];
        let layers = plan
            .iter()
            .map(|&(cin, cout, stride)| {
                let std = (2.0 / (cin * 9) as f64).sqrt();
                let weight = Tensor::from_fn([cout, cin, 3, 3], |_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    std * z
                });
                FrozenConv {
                    weight,
                    bias: Tensor::zeros([cout, 1, 1, 1]),
                    stride,
                }
            })
            .collect();
        RandomConvExtractor { layers }
    }
}

impl Default for RandomConvExtractor {
    fn default() -> Self {
        Self::new()
    }
}

impl FeatureExtractor for RandomConvExtractor {
    fn name(&self) -> &str {
        "random-conv5"
    }

    fn features(&self, g: &mut Graph, x: Var) -> Var {
        let mut h = x;
        for (i, l) in self.layers.iter().enumerate() {
            let w = g.constant(l.weight.clone());
            let b = g.constant(l.bias.clone());
            h = g.conv2d(h, w, Some(b), l.stride, 1);
            if i + 1 < self.layers.len() {
                h = g.relu(h);
            }
        }
        h
    }
}
