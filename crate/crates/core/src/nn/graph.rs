//! A reverse-mode tape. Every forward op records its inputs; [`Graph::backward`]
//! walks the tape once from a scalar root.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::tensor::{self, ConvGeom, Tensor};
use super::{ParamId, ParamStore};

/// Logits are clamped to this magnitude inside the BCE ops.
pub const LOGIT_CLAMP: f64 = 20.0;

/// BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    LeakyRelu(Var, f64),
    PixelShuffle(Var, usize),
    UpsampleNearest(Var, usize),
    AvgPool(Var, usize),
    Crop(Var),
    SoftmaxChannels(Var),
    SliceChannel(Var, usize),
    MulChannel(Var, Var),
    InstanceNorm(Var, f64),
    RgbToY(Var),
    L1(Var, Var),
    WeightedL1 { pred: Var, target: Tensor, weight: Tensor },
    BceLogits { logits: Var, label: f64 },
    WeightedSum(Vec<(Var, f64)>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Clone, Debug)]
enum Trainable {
    All,
    Only(HashSet<ParamId>),
}

/// Gradients produced by one backward pass.
#[derive(Debug, Default)]
pub struct Grads {
    nodes: Vec<Option<Tensor>>,
    pub params: BTreeMap<ParamId, Tensor>,
}

impl Grads {
    /// Gradient of the root w.r.t. `v`, if `v` required grad and was reached.
    pub fn of(&self, v: Var) -> Option<&Tensor> {
        self.nodes.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }
}

pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
    leaf_params: HashMap<usize, ParamId>,
    trainable: Trainable,
}

impl<'p> Graph<'p> {
    /// A graph in which every parameter is trainable.
    pub fn new(store: &'p ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            leaf_params: HashMap::new(),
            trainable: Trainable::All,
        }
    }

    /// A graph in which only `ids` receive gradients; every other parameter
    /// enters as a constant.
    pub fn with_trainable(store: &'p ParamStore, ids: impl IntoIterator<Item = ParamId>) -> Self {
        let mut g = Self::new(store);
        g.trainable = Trainable::Only(ids.into_iter().collect());
        g
    }

    /// A graph with no trainable parameters (evaluation mode).
    pub fn frozen(store: &'p ParamStore) -> Self {
        Self::with_trainable(store, std::iter::empty())
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    #[inline]
    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 4] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// A leaf that does not receive gradients.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A leaf whose gradient is reported in [`Grads::of`].
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Copies the value of `v` into a fresh constant leaf (stop-gradient).
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.nodes[v.0].value.clone();
        self.constant(t)
    }

    /// The graph node for a stored parameter. Repeated uses share one node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let trainable = match &self.trainable {
            Trainable::All => true,
            Trainable::Only(set) => set.contains(&id),
        };
        let v = self.push(self.store.get(id).clone(), Op::Leaf, trainable);
        if trainable {
            self.leaf_params.insert(v.0, id);
        }
        self.param_vars.insert(id, v);
        v
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let xs = self.shape(x);
        let ws = self.shape(w);
        let geom = tensor::conv_geom(xs, ws, stride, pad).unwrap_or_else(|| {
            panic!("conv2d: incompatible input {xs:?} / weight {ws:?} (stride {stride}, pad {pad})")
        });
        let value = tensor::conv2d_forward(
            self.value(x),
            self.value(w),
            b.map(|b| &self.nodes[b.0].value),
            &geom,
        );
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        self.push(value, Op::Conv2d { x, w, b, geom }, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Sub(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x * s);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        let rg = self.rg(a);
        self.push(value, Op::LeakyRelu(a, slope), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.leaky_relu(a, 0.0)
    }

    pub fn pixel_shuffle(&mut self, a: Var, r: usize) -> Var {
        assert_eq!(self.shape(a)[1] % (r * r), 0, "pixel_shuffle channel count");
        let value = tensor::pixel_shuffle(self.value(a), r);
        let rg = self.rg(a);
        self.push(value, Op::PixelShuffle(a, r), rg)
    }

    pub fn upsample_nearest(&mut self, a: Var, r: usize) -> Var {
        let value = tensor::upsample_nearest(self.value(a), r);
        let rg = self.rg(a);
        self.push(value, Op::UpsampleNearest(a, r), rg)
    }

    /// Non-overlapping `r×r` mean pooling; spatial dims must divide by `r`.
    pub fn avg_pool(&mut self, a: Var, r: usize) -> Var {
        let [_, _, h, w] = self.shape(a);
        assert!(h % r == 0 && w % r == 0, "avg_pool: {h}x{w} not divisible by {r}");
        let value = tensor::sum_pool(self.value(a), r).map(|v| v / (r * r) as f64);
        let rg = self.rg(a);
        self.push(value, Op::AvgPool(a, r), rg)
    }

    /// Keeps the top-left `h×w` window.
    pub fn crop(&mut self, a: Var, h: usize, w: usize) -> Var {
        let src = self.value(a);
        let [n, c, sh, sw] = src.shape();
        assert!(h <= sh && w <= sw, "crop larger than input");
        if (h, w) == (sh, sw) {
            return a;
        }
        let value = Tensor::from_fn([n, c, h, w], |[ni, ci, y, x]| src.at(ni, ci, y, x));
        let rg = self.rg(a);
        self.push(value, Op::Crop(a), rg)
    }

    pub fn softmax_channels(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let [n, c, h, w] = src.shape();
        let hw = h * w;
        let mut out = Tensor::zeros(src.shape());
        for ni in 0..n {
            for p in 0..hw {
                let base = ni * c * hw + p;
                let m = (0..c).map(|k| src.data()[base + k * hw]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for k in 0..c {
                    let e = (src.data()[base + k * hw] - m).exp();
                    out.data_mut()[base + k * hw] = e;
                    z += e;
                }
                for k in 0..c {
                    out.data_mut()[base + k * hw] /= z;
                }
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::SoftmaxChannels(a), rg)
    }

    /// Channel `c` as an `[N, 1, H, W]` tensor.
    pub fn slice_channel(&mut self, a: Var, c: usize) -> Var {
        let src = self.value(a);
        let [n, _, h, w] = src.shape();
        let mut data = Vec::with_capacity(n * h * w);
        for ni in 0..n {
            data.extend_from_slice(src.plane(ni, c));
        }
        let rg = self.rg(a);
        self.push(Tensor::from_vec([n, 1, h, w], data), Op::SliceChannel(a, c), rg)
    }

    /// `a[N, C, H, W] * m[N, 1, H, W]`, broadcasting `m` over channels.
    pub fn mul_channel(&mut self, a: Var, m: Var) -> Var {
        let (av, mv) = (self.value(a), self.value(m));
        let [n, c, h, w] = av.shape();
        assert_eq!(mv.shape(), [n, 1, h, w], "mul_channel mask shape");
        let value = Tensor::from_fn([n, c, h, w], |[ni, ci, y, x]| av.at(ni, ci, y, x) * mv.at(ni, 0, y, x));
        let rg = self.rg(a) || self.rg(m);
        self.push(value, Op::MulChannel(a, m), rg)
    }

    /// Per-sample, per-channel normalisation without affine parameters.
    pub fn instance_norm(&mut self, a: Var, eps: f64) -> Var {
        let src = self.value(a);
        let [n, c, _, _] = src.shape();
        let mut out = src.clone();
        let hw = src.h() * src.w();
        for ni in 0..n {
            for ci in 0..c {
                let p = src.plane(ni, ci);
                let mean = p.iter().sum::<f64>() / hw as f64;
                let var = p.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / hw as f64;
                let inv = 1.0 / (var + eps).sqrt();
                let start = (ni * c + ci) * hw;
                for (o, v) in out.data_mut()[start..start + hw].iter_mut().zip(p) {
                    *o = (v - mean) * inv;
                }
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::InstanceNorm(a, eps), rg)
    }

    /// BT.601 luma of an `[N, 3, H, W]` RGB tensor.
    pub fn rgb_to_y(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let [n, c, h, w] = src.shape();
        assert_eq!(c, 3, "rgb_to_y expects 3 channels");
        let value = Tensor::from_fn([n, 1, h, w], |[ni, _, y, x]| {
            (0..3).map(|k| LUMA_WEIGHTS[k] * src.at(ni, k, y, x)).sum()
        });
        let rg = self.rg(a);
        self.push(value, Op::RgbToY(a), rg)
    }

    /// Mean absolute difference.
    pub fn l1(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "l1 shape mismatch");
        let s: f64 = av.data().iter().zip(bv.data()).map(|(x, y)| (x - y).abs()).sum();
        let value = Tensor::scalar(s / av.len() as f64);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::L1(a, b), rg)
    }

    /// `mean(weight ⊙ |pred − target|)`; `target` and `weight` are constants.
    pub fn weighted_l1(&mut self, pred: Var, target: Tensor, weight: Tensor) -> Var {
        let pv = self.value(pred);
        assert_eq!(pv.shape(), target.shape(), "weighted_l1 shape mismatch");
        assert_eq!(pv.shape(), weight.shape(), "weighted_l1 weight shape");
        let s: f64 = pv
            .data()
            .iter()
            .zip(target.data())
            .zip(weight.data())
            .map(|((p, t), w)| w * (p - t).abs())
            .sum();
        let value = Tensor::scalar(s / pv.len() as f64);
        let rg = self.rg(pred);
        self.push(value, Op::WeightedL1 { pred, target, weight }, rg)
    }

    /// Mean binary cross-entropy of clamped logits against a constant label
    /// (1 = real, 0 = fake).
    pub fn bce_logits(&mut self, logits: Var, label: f64) -> Var {
        let lv = self.value(logits);
        let s: f64 = lv
            .data()
            .iter()
            .map(|&z| {
                let z = z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
                label * softplus(-z) + (1.0 - label) * softplus(z)
            })
            .sum();
        let value = Tensor::scalar(s / lv.len() as f64);
        let rg = self.rg(logits);
        self.push(value, Op::BceLogits { logits, label }, rg)
    }

    /// `Σ wᵢ·termᵢ` over scalar terms.
    pub fn weighted_sum(&mut self, terms: Vec<(Var, f64)>) -> Var {
        let mut s = 0.0;
        for &(v, w) in &terms {
            s += w * self.value(v).item();
        }
        let rg = terms.iter().any(|&(v, _)| self.rg(v));
        self.push(Tensor::scalar(s), Op::WeightedSum(terms), rg)
    }

    /// Reverse pass from a scalar `root`.
    pub fn backward(&self, root: Var) -> Grads {
        assert_eq!(self.value(root).len(), 1, "backward from a non-scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.rg(root) {
            return Grads {
                nodes: grads,
                params: BTreeMap::new(),
            };
        }
        grads[root.0] = Some(Tensor::scalar(1.0));
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(d) = grads[i].take() else { continue };
            self.backprop_node(node, &d, &mut grads);
            grads[i] = Some(d);
        }
        let mut params = BTreeMap::new();
        for (&idx, &id) in &self.leaf_params {
            if let Some(g) = grads[idx].clone() {
                params.insert(id, g);
            }
        }
        Grads { nodes: grads, params }
    }

    fn backprop_node(&self, node: &Node, d: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, g: Tensor| {
            if !self.rg(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom } => {
                let (dx, dw, db) = tensor::conv2d_backward(
                    self.value(*x),
                    self.value(*w),
                    d,
                    geom,
                    self.rg(*x),
                    self.rg(*w),
                    b.is_some_and(|b| self.rg(b)),
                );
                if let Some(dx) = dx {
                    acc(*x, dx);
                }
                if let Some(dw) = dw {
                    acc(*w, dw);
                }
                if let (Some(b), Some(db)) = (b, db) {
                    let shape = self.shape(*b);
                    acc(*b, Tensor::from_vec(shape, db.into_vec()));
                }
            }
            Op::Add(a, b) => {
                acc(*a, d.clone());
                acc(*b, d.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, d.clone());
                acc(*b, d.map(|v| -v));
            }
            Op::Scale(a, s) => acc(*a, d.map(|v| v * s)),
            Op::LeakyRelu(a, slope) => {
                let g = self.value(*a).zip_map(d, |x, dv| if x > 0.0 { dv } else { slope * dv });
                acc(*a, g);
            }
            Op::PixelShuffle(a, r) => acc(*a, tensor::pixel_unshuffle(d, *r)),
            Op::UpsampleNearest(a, r) => acc(*a, tensor::sum_pool(d, *r)),
            Op::AvgPool(a, r) => {
                let inv = 1.0 / (r * r) as f64;
                acc(*a, tensor::upsample_nearest(d, *r).map(|v| v * inv));
            }
            Op::Crop(a) => {
                let mut g = Tensor::zeros(self.shape(*a));
                let [n, c, h, w] = d.shape();
                for ni in 0..n {
                    for ci in 0..c {
                        for y in 0..h {
                            for x in 0..w {
                                g.set(ni, ci, y, x, d.at(ni, ci, y, x));
                            }
                        }
                    }
                }
                acc(*a, g);
            }
            Op::SoftmaxChannels(a) => {
                let s = &node.value;
                let [n, c, h, w] = s.shape();
                let hw = h * w;
                let mut g = Tensor::zeros(s.shape());
                for ni in 0..n {
                    for p in 0..hw {
                        let base = ni * c * hw + p;
                        let dot: f64 = (0..c).map(|k| d.data()[base + k * hw] * s.data()[base + k * hw]).sum();
                        for k in 0..c {
                            let i = base + k * hw;
                            g.data_mut()[i] = s.data()[i] * (d.data()[i] - dot);
                        }
                    }
                }
                acc(*a, g);
            }
            Op::SliceChannel(a, c) => {
                let mut g = Tensor::zeros(self.shape(*a));
                let [n, cc, h, w] = g.shape();
                let hw = h * w;
                for ni in 0..n {
                    let dst = (ni * cc + c) * hw;
                    g.data_mut()[dst..dst + hw].copy_from_slice(d.plane(ni, 0));
                }
                acc(*a, g);
            }
            Op::MulChannel(a, m) => {
                let (av, mv) = (self.value(*a), self.value(*m));
                if self.rg(*a) {
                    let g = Tensor::from_fn(av.shape(), |[ni, ci, y, x]| d.at(ni, ci, y, x) * mv.at(ni, 0, y, x));
                    acc(*a, g);
                }
                if self.rg(*m) {
                    let c = av.c();
                    let g = Tensor::from_fn(mv.shape(), |[ni, _, y, x]| {
                        (0..c).map(|ci| d.at(ni, ci, y, x) * av.at(ni, ci, y, x)).sum()
                    });
                    acc(*m, g);
                }
            }
            Op::InstanceNorm(a, eps) => {
                let src = self.value(*a);
                let [n, c, h, w] = src.shape();
                let hw = h * w;
                let mut g = Tensor::zeros(src.shape());
                for ni in 0..n {
                    for ci in 0..c {
                        let x = src.plane(ni, ci);
                        let dy = d.plane(ni, ci);
                        let xhat = node.value.plane(ni, ci);
                        let mean = x.iter().sum::<f64>() / hw as f64;
                        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / hw as f64;
                        let inv = 1.0 / (var + eps).sqrt();
                        let mdy = dy.iter().sum::<f64>() / hw as f64;
                        let mdyx = dy.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / hw as f64;
                        let start = (ni * c + ci) * hw;
                        for (j, o) in g.data_mut()[start..start + hw].iter_mut().enumerate() {
                            *o = inv * (dy[j] - mdy - xhat[j] * mdyx);
                        }
                    }
                }
                acc(*a, g);
            }
            Op::RgbToY(a) => {
                let g = Tensor::from_fn(self.shape(*a), |[ni, ci, y, x]| LUMA_WEIGHTS[ci] * d.at(ni, 0, y, x));
                acc(*a, g);
            }
            Op::L1(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let scale = d.item() / av.len() as f64;
                let ga = av.zip_map(bv, |x, y| scale * sign(x - y));
                if self.rg(*b) {
                    acc(*b, ga.map(|v| -v));
                }
                acc(*a, ga);
            }
            Op::WeightedL1 { pred, target, weight } => {
                let pv = self.value(*pred);
                let scale = d.item() / pv.len() as f64;
                let diff = pv.zip_map(target, |p, t| sign(p - t));
                acc(*pred, diff.zip_map(weight, |s, w| scale * s * w));
            }
            Op::BceLogits { logits, label } => {
                let lv = self.value(*logits);
                let scale = d.item() / lv.len() as f64;
                let g = lv.map(|z| {
                    if z.abs() > LOGIT_CLAMP {
                        0.0
                    } else {
                        scale * (sigmoid(z) - label)
                    }
                });
                acc(*logits, g);
            }
            Op::WeightedSum(terms) => {
                let dv = d.item();
                for &(v, w) in terms {
                    acc(v, Tensor::scalar(w * dv));
                }
            }
        }
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
