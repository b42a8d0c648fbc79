//! Content, reconstruction, perceptual and adversarial losses, in two forms:
//! graph builders used by the trainer (`*_var`) and plain evaluators on
//! images.

mod report;

pub use report::{total_objective, weighted_total, LossReport, LossWeights, TERM_NAMES};

use crate::data::Image;
use crate::networks::{DiscInput, Discriminator, FeatureExtractor};
use crate::nn::{softplus, Graph, ParamStore, Tensor, Var, LOGIT_CLAMP};
use crate::{Error, Result};

/// Per-element GW weights `1 + g` for an NCHW target, where `g` is the
/// per-pixel maximum over channels of the central-difference gradient
/// magnitude, divided by its maximum over the image (0 on flat images).
/// Borders use replicated neighbours. The weight is shared by all channels.
pub fn gradient_weight(target: &Tensor) -> Tensor {
    let [n, c, h, w] = target.shape();
    let mut out = Tensor::zeros(target.shape());
    for b in 0..n {
        let mut g = vec![0.0f64; h * w];
        for ch in 0..c {
            let p = target.plane(b, ch);
            for y in 0..h {
                for x in 0..w {
                    let gx = 0.5 * (p[y * w + (x + 1).min(w - 1)] - p[y * w + x.saturating_sub(1)]);
                    let gy = 0.5 * (p[(y + 1).min(h - 1) * w + x] - p[y.saturating_sub(1) * w + x]);
                    let m = (gx * gx + gy * gy).sqrt();
                    if m > g[y * w + x] {
                        g[y * w + x] = m;
                    }
                }
            }
        }
        let gmax = g.iter().cloned().fold(0.0, f64::max);
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let gn = if gmax > 0.0 { g[y * w + x] / gmax } else { 0.0 };
                    out.set(b, ch, y, x, 1.0 + gn);
                }
            }
        }
    }
    out
}

/// `mean(w ⊙ |pred − target|)` with `w` from [`gradient_weight`] of the
/// constant target.
pub fn gw_loss_var(g: &mut Graph, pred: Var, target: &Tensor) -> Var {
    g.weighted_l1(pred, target.clone(), gradient_weight(target))
}

/// `mean |φ(pred) − φ(reference)|` with the reference features constant.
pub fn perceptual_loss_var(g: &mut Graph, pred: Var, reference: &Tensor, extractor: &dyn FeatureExtractor) -> Var {
    let fp = extractor.features(g, pred);
    let r = g.constant(reference.clone());
    let fr = extractor.features(g, r);
    let fr = g.detach(fr);
    g.l1(fp, fr)
}

/// `BCE(D(real), 1) + BCE(D(fake), 0)` on RGB inputs.
pub fn adv_d_loss_var(g: &mut Graph, disc: &Discriminator, real: Var, fake: Var) -> Var {
    let lr = disc.forward_rgb(g, real);
    let lf = disc.forward_rgb(g, fake);
    let a = g.bce_logits(lr, 1.0);
    let b = g.bce_logits(lf, 0.0);
    g.add(a, b)
}

/// Non-saturating generator term `BCE(D(fake), 1)` on an RGB input.
pub fn adv_g_loss_var(g: &mut Graph, disc: &Discriminator, fake: Var) -> Var {
    let l = disc.forward_rgb(g, fake);
    g.bce_logits(l, 1.0)
}

/// Mean absolute difference, summed in NCHW order like the graph losses so
/// that equal weights give bitwise-equal results.
pub fn l1_loss(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b, "l1_loss")?;
    let (ta, tb) = (a.to_tensor(), b.to_tensor());
    let s: f64 = ta.data().iter().zip(tb.data()).map(|(x, y)| (x - y).abs()).sum();
    Ok(s / ta.len() as f64)
}

pub fn gw_loss(pred: &Image, target: &Image) -> Result<f64> {
    pred.ensure_same_shape(target, "gw_loss")?;
    let store = ParamStore::new();
    let mut g = Graph::frozen(&store);
    let p = g.constant(pred.to_tensor());
    let v = gw_loss_var(&mut g, p, &target.to_tensor());
    Ok(g.value(v).item())
}

pub fn perceptual_loss(pred: &Image, reference: &Image, extractor: &dyn FeatureExtractor) -> Result<f64> {
    pred.ensure_same_shape(reference, "perceptual_loss")?;
    let store = ParamStore::new();
    let mut g = Graph::frozen(&store);
    let p = g.constant(pred.to_tensor());
    let v = perceptual_loss_var(&mut g, p, &reference.to_tensor(), extractor);
    Ok(g.value(v).item())
}

/// Mean BCE of clamped logits against `label`.
pub fn bce_from_logits(logits: &[f64], label: f64, term: &str) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::invalid("no logits"));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite { term: term.to_string() });
    }
    let s: f64 = logits
        .iter()
        .map(|&z| {
            let z = z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
            label * softplus(-z) + (1.0 - label) * softplus(z)
        })
        .sum();
    Ok(s / logits.len() as f64)
}

/// Discriminator loss from precomputed patch logits.
pub fn adv_d_loss_from_logits(real: &[f64], fake: &[f64]) -> Result<f64> {
    Ok(bce_from_logits(real, 1.0, "adv_d(real)")? + bce_from_logits(fake, 0.0, "adv_d(fake)")?)
}

/// Generator loss from the discriminator's logits on the generated sample.
pub fn adv_g_loss_from_logits(fake: &[f64]) -> Result<f64> {
    bce_from_logits(fake, 1.0, "adv_g")
}

/// Logits of `disc` on an image in either RGB or the discriminator's own
/// colour space.
fn logits(disc: &Discriminator, store: &ParamStore, img: &Image) -> Result<Tensor> {
    if disc.input == DiscInput::Y && img.channels() == 3 {
        disc.discriminate(store, &img.to_y()?)
    } else {
        disc.discriminate(store, img)
    }
}

pub fn adv_d_loss(disc: &Discriminator, store: &ParamStore, real: &Image, fake: &Image) -> Result<f64> {
    let r = logits(disc, store, real)?;
    let f = logits(disc, store, fake)?;
    adv_d_loss_from_logits(r.data(), f.data())
}

pub fn adv_g_loss(disc: &Discriminator, store: &ParamStore, fake: &Image) -> Result<f64> {
    adv_g_loss_from_logits(logits(disc, store, fake)?.data())
}
