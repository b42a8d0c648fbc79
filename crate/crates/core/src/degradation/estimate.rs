//! Least-squares recovery of the kernel `k` minimising `‖(HR ⊗ k)↓s − LR‖²`.
//!
//! The forward map is linear in `k`, so the problem is an ordinary linear
//! least-squares fit. We assemble the normal equations `AᵀA k = Aᵀb` once and
//! run conjugate gradients on them. No sign or sum constraint is imposed on
//! the raw solution; the returned kernel is only rescaled to unit sum.

use serde::Serialize;

use super::camera::reflect;
use super::Kernel;
use crate::data::Image;
use crate::nn::gemm_rowmajor;
use crate::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct KernelEstimate {
    /// Unit-sum version of the least-squares solution.
    #[serde(skip)]
    pub kernel: Kernel,
    /// The unnormalised least-squares solution.
    pub raw_weights: Vec<f64>,
    /// `‖A k − b‖²` before the first and after every CG iteration.
    pub residual_history: Vec<f64>,
    /// `‖A k − b‖` of the returned iterate, recomputed directly.
    pub residual: f64,
    /// `‖A k − b‖ / ‖b‖`.
    pub relative_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Row-major design matrix with one row per LR value `(c, y, x)` and one
/// column per kernel tap `(i, j)`.
fn design_matrix(hr: &Image, lr_w: usize, lr_h: usize, k: usize, scale: usize) -> Vec<f64> {
    let r = (k / 2) as isize;
    let (hw, hh) = (hr.width(), hr.height());
    let channels = hr.channels();
    let n = k * k;
    let mut a = vec![0.0; lr_w * lr_h * channels * n];
    let mut row = 0;
    for c in 0..channels {
        for y in 0..lr_h {
            for x in 0..lr_w {
                let (cx, cy) = ((x * scale) as isize, (y * scale) as isize);
                let dst = &mut a[row * n..(row + 1) * n];
                for i in 0..k {
                    let sy = reflect(cy - (i as isize - r), hh);
                    for j in 0..k {
                        let sx = reflect(cx - (j as isize - r), hw);
                        dst[i * k + j] = hr.get(sx, sy, c);
                    }
                }
                row += 1;
            }
        }
    }
    a
}

fn lr_vector(lr: &Image) -> Vec<f64> {
    let mut b = Vec::with_capacity(lr.data().len());
    for c in 0..lr.channels() {
        for y in 0..lr.height() {
            for x in 0..lr.width() {
                b.push(lr.get(x, y, c));
            }
        }
    }
    b
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn matvec(m: &[f64], n: usize, v: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(m.chunks_exact(n)) {
        *o = dot(row, v);
    }
}

pub fn estimate_kernel(hr: &Image, lr: &Image, k_size: usize, scale: usize, iters: usize, tol: f64) -> Result<KernelEstimate> {
    if k_size % 2 == 0 || k_size == 0 {
        return Err(Error::invalid(format!("kernel size must be odd, got {k_size}")));
    }
    if scale == 0 || hr.channels() != lr.channels() || hr.width() != lr.width() * scale || hr.height() != lr.height() * scale {
        return Err(Error::shape(format!(
            "HR {:?} and LR {:?} are not related by scale {scale}",
            hr.dims(),
            lr.dims()
        )));
    }
    let n = k_size * k_size;
    let a = design_matrix(hr, lr.width(), lr.height(), k_size, scale);
    let b = lr_vector(lr);
    let m = b.len();

    // Normal equations: N = AᵀA (n×n), rhs = Aᵀb.
    let mut normal = vec![0.0; n * n];
    gemm_rowmajor(n, m, n, &a, 1, n, &a, n, 1, &mut normal);
    let mut rhs = vec![0.0; n];
    gemm_rowmajor(n, m, 1, &a, 1, n, &b, 1, 1, &mut rhs);
    let btb = dot(&b, &b);

    // ‖Ak − b‖² = kᵀNk − 2kᵀ(Aᵀb) + bᵀb
    let objective = |k: &[f64], nk: &[f64]| (dot(k, nk) - 2.0 * dot(k, &rhs) + btb).max(0.0);

    let mut k = vec![0.0; n];
    let mut nk = vec![0.0; n];
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut np = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let rhs_norm = rr.sqrt().max(f64::MIN_POSITIVE);
    let mut history = vec![btb];
    let mut converged = rr.sqrt() / rhs_norm <= tol;
    let mut iterations = 0;
    while !converged && iterations < iters {
        matvec(&normal, n, &p, &mut np);
        let pnp = dot(&p, &np);
        if pnp <= 0.0 {
            break;
        }
        let alpha = rr / pnp;
        for i in 0..n {
            k[i] += alpha * p[i];
            nk[i] += alpha * np[i];
            r[i] -= alpha * np[i];
        }
        let rr_new = dot(&r, &r);
        iterations += 1;
        history.push(objective(&k, &nk));
        converged = rr_new.sqrt() / rhs_norm <= tol;
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }

    let mut ak = vec![0.0; m];
    matvec(&a, n, &k, &mut ak);
    let residual = ak.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    Ok(KernelEstimate {
        kernel: Kernel::new(k_size, k.clone())?,
        raw_weights: k,
        residual_history: history,
        residual,
        relative_residual: residual / btb.sqrt().max(f64::MIN_POSITIVE),
        iterations,
        converged,
    })
}
