use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, ParamId, ParamStore, Tensor, Var};

pub const LEAKY_SLOPE: f64 = 0.2;

/// A square-kernel convolution with bias, backed by two stored parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct ConvSpec {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvSpec {
    /// `k×k`, stride 1, "same" padding.
    pub fn same(cin: usize, cout: usize, k: usize) -> Self {
        ConvSpec {
            cin,
            cout,
            k,
            stride: 1,
            pad: k / 2,
        }
    }

    pub fn strided(cin: usize, cout: usize, k: usize, stride: usize, pad: usize) -> Self {
        ConvSpec {
            cin,
            cout,
            k,
            stride,
            pad,
        }
    }
}

impl Conv {
    pub fn new(store: &mut ParamStore, name: &str, spec: ConvSpec, gain: f64, rng: &mut impl Rng) -> Self {
        let weight = store.add_he(format!("{name}.w"), [spec.cout, spec.cin, spec.k, spec.k], gain, rng);
        let bias = store.add(format!("{name}.b"), Tensor::zeros([spec.cout, 1, 1, 1]));
        Conv {
            weight,
            bias,
            stride: spec.stride,
            pad: spec.pad,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        g.conv2d(x, w, Some(b), self.stride, self.pad)
    }

    pub fn params(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }

    /// The same layer with its parameter ids rewritten by `f`.
    pub fn remap(&self, f: &mut dyn FnMut(ParamId) -> ParamId) -> Self {
        Conv {
            weight: f(self.weight),
            bias: f(self.bias),
            stride: self.stride,
            pad: self.pad,
        }
    }

    /// `[Cout, Cin, k, k]` of the stored weight.
    pub fn weight_shape(&self, store: &ParamStore) -> [usize; 4] {
        store.get(self.weight).shape()
    }
}
