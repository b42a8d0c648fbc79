//! Dense NCHW tensors of `f64` and the raw kernels (convolution, resampling)
//! that the autograd graph is built on.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A dense 4-D tensor in NCHW layout. Scalars are `[1, 1, 1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: [usize; 4], value: f64) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::full([1, 1, 1, 1], value)
    }

    /// Panics if `data.len()` does not match the shape.
    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length does not match shape {shape:?}"
        );
        Tensor { shape, data }
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut([usize; 4]) -> f64) -> Self {
        let [n, c, h, w] = shape;
        let mut data = Vec::with_capacity(n * c * h * w);
        for ni in 0..n {
            for ci in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f([ni, ci, y, x]));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.shape[0]
    }

    #[inline]
    pub fn c(&self) -> usize {
        self.shape[1]
    }

    #[inline]
    pub fn h(&self) -> usize {
        self.shape[2]
    }

    #[inline]
    pub fn w(&self) -> usize {
        self.shape[3]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        let [_, cc, h, w] = self.shape;
        ((n * cc + c) * h + y) * w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f64) {
        let i = self.index(n, c, y, x);
        self.data[i] = v;
    }

    /// The single value of a scalar tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar {:?}", self.shape);
        self.data[0]
    }

    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let hw = self.shape[2] * self.shape[3];
        let start = (n * self.shape[1] + c) * hw;
        &self.data[start..start + hw]
    }

    /// Batch item `n` as a `[1, C, H, W]` tensor.
    pub fn batch_item(&self, n: usize) -> Tensor {
        let per = self.shape[1] * self.shape[2] * self.shape[3];
        Tensor {
            shape: [1, self.shape[1], self.shape[2], self.shape[3]],
            data: self.data[n * per..(n + 1) * per].to_vec(),
        }
    }

    /// Concatenates tensors along the batch axis.
    pub fn stack(items: &[Tensor]) -> Tensor {
        assert!(!items.is_empty(), "stack of zero tensors");
        let [_, c, h, w] = items[0].shape;
        let mut n = 0;
        let mut data = Vec::new();
        for t in items {
            assert_eq!(&t.shape[1..], &[c, h, w], "stack with mismatched shapes");
            n += t.shape[0];
            data.extend_from_slice(&t.data);
        }
        Tensor {
            shape: [n, c, h, w],
            data,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.shape, other.shape, "zip_map shape mismatch");
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn add_scaled(&mut self, other: &Tensor, s: f64) {
        assert_eq!(self.shape, other.shape, "add_scaled shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// SHA-256 over the shape and the exact bit patterns of the values.
    pub fn digest_into(&self, hasher: &mut Sha256) {
        for s in self.shape {
            hasher.update((s as u64).to_le_bytes());
        }
        for v in &self.data {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
}

/// Output extent of a convolution along one axis.
pub fn conv_out_size(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < k || stride == 0 {
        return None;
    }
    Some((padded - k) / stride + 1)
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    fn cols_rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn cols_len(&self) -> usize {
        self.cols_rows() * self.ho * self.wo
    }
}

fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let howo = g.ho * g.wo;
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let out = &mut cols[row * howo..(row + 1) * howo];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let dst = &mut out[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let howo = g.ho * g.wo;
    for c in 0..g.cin {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * howo..(row + 1) * howo];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `c = a·b + beta·c` with arbitrary strides on `a` and `b`; `c` is row-major `m×n`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: callers pass slices whose extents cover every strided access
    // (checked by the conv shape arithmetic), and `c` does not alias `a`/`b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Row-major `c[m×n] = a·b` with arbitrary strides on `a` and `b`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_rowmajor(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
) {
    gemm(m, k, n, a, rsa, csa, b, rsb, csb, 0.0, c);
}

pub(crate) fn conv_geom(x: [usize; 4], w: [usize; 4], stride: usize, pad: usize) -> Option<ConvGeom> {
    let k = w[2];
    if w[3] != k || w[1] != x[1] {
        return None;
    }
    Some(ConvGeom {
        cin: x[1],
        h: x[2],
        w: x[3],
        k,
        stride,
        pad,
        ho: conv_out_size(x[2], k, stride, pad)?,
        wo: conv_out_size(x[3], k, stride, pad)?,
    })
}

/// Zero-padded 2-D convolution (cross-correlation). `w` is `[Cout, Cin, k, k]`,
/// `b` (if any) holds `Cout` values.
pub(crate) fn conv2d_forward(x: &Tensor, w: &Tensor, b: Option<&Tensor>, g: &ConvGeom) -> Tensor {
    let n = x.n();
    let cout = w.n();
    let howo = g.ho * g.wo;
    let mut out = Tensor::zeros([n, cout, g.ho, g.wo]);
    let mut cols = vec![0.0; g.cols_len()];
    let in_per = g.cin * g.h * g.w;
    for ni in 0..n {
        im2col(&x.data[ni * in_per..(ni + 1) * in_per], g, &mut cols);
        let dst = &mut out.data[ni * cout * howo..(ni + 1) * cout * howo];
        if let Some(b) = b {
            for (co, chunk) in dst.chunks_mut(howo).enumerate() {
                chunk.fill(b.data[co]);
            }
        }
        let rows = g.cols_rows();
        gemm(cout, rows, howo, &w.data, rows, 1, &cols, howo, 1, 1.0, dst);
    }
    out
}

/// Gradients of [`conv2d_forward`] w.r.t. input, weight and bias. Each
/// output is only computed when requested.
pub(crate) fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    dout: &Tensor,
    g: &ConvGeom,
    want_dx: bool,
    want_dw: bool,
    want_db: bool,
) -> (Option<Tensor>, Option<Tensor>, Option<Tensor>) {
    let n = x.n();
    let cout = w.n();
    let howo = g.ho * g.wo;
    let rows = g.cols_rows();
    let in_per = g.cin * g.h * g.w;
    let mut dx = want_dx.then(|| Tensor::zeros(x.shape));
    let mut dw = want_dw.then(|| Tensor::zeros(w.shape));
    let mut db = want_db.then(|| Tensor::zeros([cout, 1, 1, 1]));
    let mut cols = vec![0.0; g.cols_len()];
    for ni in 0..n {
        let dslice = &dout.data[ni * cout * howo..(ni + 1) * cout * howo];
        if let Some(dw) = dw.as_mut() {
            im2col(&x.data[ni * in_per..(ni + 1) * in_per], g, &mut cols);
            // dW[cout, rows] += dout[cout, howo] · cols^T[howo, rows]
            gemm(cout, howo, rows, dslice, howo, 1, &cols, 1, howo, 1.0, &mut dw.data);
        }
        if let Some(db) = db.as_mut() {
            for (co, chunk) in dslice.chunks(howo).enumerate() {
                db.data[co] += chunk.iter().sum::<f64>();
            }
        }
        if let Some(dx) = dx.as_mut() {
            // dcols[rows, howo] = W^T[rows, cout] · dout[cout, howo]
            gemm(rows, cout, howo, &w.data, 1, rows, dslice, howo, 1, 0.0, &mut cols);
            col2im(&cols, g, &mut dx.data[ni * in_per..(ni + 1) * in_per]);
        }
    }
    (dx, dw, db)
}

/// `[N, C·r², H, W] -> [N, C, H·r, W·r]`, channel `c·r² + i·r + j` landing
/// at sub-pixel `(i, j)`.
pub(crate) fn pixel_shuffle(x: &Tensor, r: usize) -> Tensor {
    let [n, crr, h, w] = x.shape;
    let c = crr / (r * r);
    let mut out = Tensor::zeros([n, c, h * r, w * r]);
    for ni in 0..n {
        for ci in 0..c {
            for i in 0..r {
                for j in 0..r {
                    let src = x.plane(ni, ci * r * r + i * r + j);
                    for y in 0..h {
                        for xx in 0..w {
                            let idx = out.index(ni, ci, y * r + i, xx * r + j);
                            out.data[idx] = src[y * w + xx];
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn pixel_unshuffle(d: &Tensor, r: usize) -> Tensor {
    let [n, c, hr, wr] = d.shape;
    let (h, w) = (hr / r, wr / r);
    let mut out = Tensor::zeros([n, c * r * r, h, w]);
    for ni in 0..n {
        for ci in 0..c {
            for i in 0..r {
                for j in 0..r {
                    for y in 0..h {
                        for xx in 0..w {
                            let v = d.at(ni, ci, y * r + i, xx * r + j);
                            out.set(ni, ci * r * r + i * r + j, y, xx, v);
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn upsample_nearest(x: &Tensor, r: usize) -> Tensor {
    let [n, c, h, w] = x.shape;
    Tensor::from_fn([n, c, h * r, w * r], |[ni, ci, y, xx]| x.at(ni, ci, y / r, xx / r))
}

/// Sum-pools `r×r` blocks; the adjoint of [`upsample_nearest`].
pub(crate) fn sum_pool(d: &Tensor, r: usize) -> Tensor {
    let [n, c, hr, wr] = d.shape;
    let mut out = Tensor::zeros([n, c, hr / r, wr / r]);
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..hr {
                for x in 0..wr {
                    let idx = out.index(ni, ci, y / r, x / r);
                    out.data[idx] += d.at(ni, ci, y, x);
                }
            }
        }
    }
    out
}
