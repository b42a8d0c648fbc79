use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random(shape: [usize; 4], rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Central-difference check of d(loss)/d(input) for a graph built by `f`.
fn check_input_grad(x: Tensor, f: impl Fn(&mut Graph, Var) -> Var) {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let xv = g.input(x.clone());
    let root = f(&mut g, xv);
    let analytic = g.backward(root).of(xv).cloned().expect("input gradient");

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

/// Projects a tensor output to a scalar with fixed pseudo-random weights so
/// every output element contributes to the gradient.
fn project(g: &mut Graph, v: Var) -> Var {
    let shape = g.shape(v);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let w = random(shape, &mut rng);
    // mean(w·|v + 10|) is linear in v for |v| < 10.
    let far = g.constant(Tensor::full(shape, -10.0));
    let d = g.sub(v, far);
    g.weighted_l1(d, Tensor::zeros(shape), w.map(|x| x + 2.0))
}

#[test]
fn conv_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w = random([3, 2, 3, 3], &mut rng);
    let b = random([3, 1, 1, 1], &mut rng);
    for (stride, pad) in [(1, 1), (2, 1), (2, 0)] {
        let (w, b) = (w.clone(), b.clone());
        check_input_grad(random([2, 2, 5, 5], &mut rng), move |g, x| {
            let wv = g.constant(w.clone());
            let bv = g.constant(b.clone());
            let y = g.conv2d(x, wv, Some(bv), stride, pad);
            project(g, y)
        });
    }
}

#[test]
fn conv_weight_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random([2, 2, 5, 4], &mut rng);
    check_input_grad(random([3, 2, 3, 3], &mut rng), move |g, w| {
        let xv = g.constant(x.clone());
        let y = g.conv2d(xv, w, None, 2, 1);
        project(g, y)
    });
}

#[test]
fn elementwise_and_resampling_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    check_input_grad(random([1, 8, 2, 3], &mut rng), |g, x| {
        let y = g.pixel_shuffle(x, 2);
        project(g, y)
    });
    check_input_grad(random([1, 2, 3, 2], &mut rng), |g, x| {
        let y = g.upsample_nearest(x, 2);
        project(g, y)
    });
    check_input_grad(random([1, 2, 4, 4], &mut rng), |g, x| {
        let y = g.avg_pool(x, 2);
        project(g, y)
    });
    check_input_grad(random([1, 2, 5, 5], &mut rng), |g, x| {
        let y = g.crop(x, 3, 4);
        project(g, y)
    });
    check_input_grad(random([2, 3, 3, 3], &mut rng), |g, x| {
        let y = g.leaky_relu(x, 0.2);
        let y = g.scale(y, 1.7);
        project(g, y)
    });
    check_input_grad(random([2, 3, 3, 3], &mut rng), |g, x| {
        let y = g.rgb_to_y(x);
        project(g, y)
    });
}

#[test]
fn softmax_mask_mixing_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let inter = random([2, 3, 3, 3], &mut rng);
    check_input_grad(random([2, 3, 3, 3], &mut rng), move |g, x| {
        let m = g.softmax_channels(x);
        let iv = g.constant(inter.clone());
        let m0 = g.slice_channel(m, 0);
        let m2 = g.slice_channel(m, 2);
        let a = g.mul_channel(iv, m0);
        let b = g.mul_channel(iv, m2);
        let y = g.add(a, b);
        project(g, y)
    });
    // Gradient through the multiplicand as well.
    let mask = random([2, 1, 3, 3], &mut rng);
    check_input_grad(random([2, 3, 3, 3], &mut rng), move |g, x| {
        let mv = g.constant(mask.clone());
        let y = g.mul_channel(x, mv);
        project(g, y)
    });
}

#[test]
fn instance_norm_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    check_input_grad(random([2, 2, 3, 4], &mut rng), |g, x| {
        let y = g.instance_norm(x, 1e-5);
        project(g, y)
    });
}

#[test]
fn loss_op_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let t = random([1, 3, 5, 5], &mut rng);
    check_input_grad(random([1, 3, 5, 5], &mut rng), move |g, x| {
        let tv = g.constant(t.clone());
        g.l1(x, tv)
    });
    check_input_grad(random([1, 1, 5, 5], &mut rng).map(|v| 8.0 * v), |g, x| g.bce_logits(x, 1.0));
    check_input_grad(random([1, 1, 5, 5], &mut rng).map(|v| 8.0 * v), |g, x| g.bce_logits(x, 0.0));
}

#[test]
fn shared_parameter_gradients_accumulate() {
    let mut store = ParamStore::new();
    let p = store.add("p", Tensor::from_vec([1, 1, 1, 1], vec![2.0]));
    let mut g = Graph::new(&store);
    let a = g.param(p);
    let b = g.param(p);
    assert_eq!(a, b);
    let s = g.weighted_sum(vec![(a, 3.0), (b, 4.0)]);
    let grads = g.backward(s);
    assert_eq!(grads.param(p).unwrap().item(), 7.0);
}

#[test]
fn frozen_parameters_receive_no_gradient() {
    let mut store = ParamStore::new();
    let p = store.add("p", Tensor::scalar(1.0));
    let q = store.add("q", Tensor::scalar(1.0));
    let mut g = Graph::with_trainable(&store, [q]);
    let (pv, qv) = (g.param(p), g.param(q));
    let s = g.weighted_sum(vec![(pv, 1.0), (qv, 1.0)]);
    let grads = g.backward(s);
    assert!(grads.param(p).is_none());
    assert_eq!(grads.param(q).unwrap().item(), 1.0);
}

#[test]
fn detach_blocks_gradient_flow() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let x = g.input(Tensor::full([1, 1, 2, 2], 0.5));
    let y = g.scale(x, 2.0);
    let yd = g.detach(y);
    let l = g.l1(x, yd);
    let grads = g.backward(l);
    // Only the direct path contributes: d/dx mean|x − c| = sign(x − c)/4.
    assert!(grads.of(x).unwrap().data().iter().all(|&v| (v + 0.25).abs() < 1e-15));
    assert!(grads.of(yd).is_none());
}
