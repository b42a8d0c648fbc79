#![allow(dead_code)]

use dada::nn::{Graph, ParamId, ParamStore, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random(shape: [usize; 4], lo: f64, hi: f64, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Fixed pseudo-random linear functional of `v`: mean(w·(v + 100)), which
/// is smooth for |v| < 100.
pub fn project(g: &mut Graph, v: Var) -> Var {
    let shape = g.shape(v);
    let w = random(shape, 1.0, 3.0, 99);
    let far = g.constant(Tensor::full(shape, -100.0));
    let d = g.sub(v, far);
    g.weighted_l1(d, Tensor::zeros(shape), w)
}

/// Central differences w.r.t. every scalar of `ids` against the tape
/// gradient, for the scalar mean(w·|out − (out₀ − 1)|) where `out` is what
/// `f` builds and `out₀` its unperturbed value. Near `out₀` that scalar is
/// linear in `out` and of order one, keeping the difference quotient clean.
/// Returns the number of scalars checked.
pub fn check_param_grads(store: &ParamStore, ids: &[ParamId], f: impl Fn(&mut Graph) -> Var) -> usize {
    let mut g = Graph::new(store);
    let out = f(&mut g);
    let target = g.value(out).map(|v| v - 1.0);
    let w = random(target.shape(), 1.0, 3.0, 99);
    let root = g.weighted_l1(out, target.clone(), w.clone());
    let grads = g.backward(root);

    let h = 1e-6;
    let mut checked = 0;
    for &id in ids {
        let zeros = Tensor::zeros(store.get(id).shape());
        let analytic = grads.param(id).unwrap_or(&zeros).clone();
        for i in 0..store.get(id).len() {
            let eval = |delta: f64| {
                let mut s = store.clone();
                s.get_mut(id).data_mut()[i] += delta;
                let mut g = Graph::new(&s);
                let out = f(&mut g);
                let r = g.weighted_l1(out, target.clone(), w.clone());
                g.value(r).item()
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let a = analytic.data()[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            assert!(
                err < 1e-3 || (a - numeric).abs() < 1e-8,
                "{}[{i}]: analytic {a} numeric {numeric}",
                store.name(id)
            );
            checked += 1;
        }
    }
    checked
}

/// Central differences of the scalar built by `f` w.r.t. the input leaf.
pub fn check_input_grad(x: &Tensor, f: impl Fn(&mut Graph, Var) -> Var) {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let xv = g.input(x.clone());
    let root = f(&mut g, xv);
    let analytic = g.backward(root).of(xv).cloned().unwrap_or_else(|| Tensor::zeros(x.shape()));
    let h = 1e-6;
    for i in 0..x.len() {
        let eval = |delta: f64| {
            let mut xp = x.clone();
            xp.data_mut()[i] += delta;
            let mut g = Graph::new(&store);
            let v = g.input(xp);
            let r = f(&mut g, v);
            g.value(r).item()
        };
        let numeric = (eval(h) - eval(-h)) / (2.0 * h);
        let a = analytic.data()[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        assert!(err < 1e-3 || (a - numeric).abs() < 1e-8, "elem {i}: analytic {a} numeric {numeric}");
    }
}
