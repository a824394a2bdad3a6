//! Raw forward/backward kernels shared by the tape ops.

use crate::scalar::Scalar;

/// Geometry of a batched 2-D cross-correlation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }
}

/// Unfolds one image `[c][h][w]` into a `(c·kh·kw) × (oh·ow)` column matrix.
fn im2col<T: Scalar>(g: &ConvGeom, img: &[T], cols: &mut [T]) {
    let p = g.positions();
    for c in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for y in 0..g.oh {
                    let sy = (y * g.stride + ki) as isize - g.pad as isize;
                    for x in 0..g.ow {
                        let sx = (x * g.stride + kj) as isize - g.pad as isize;
                        dst[y * g.ow + x] = if sy >= 0 && sx >= 0 && (sy as usize) < g.h && (sx as usize) < g.w {
                            img[(c * g.h + sy as usize) * g.w + sx as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Scalar>(g: &ConvGeom, cols: &[T], img: &mut [T]) {
    let p = g.positions();
    for c in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * p..(row + 1) * p];
                for y in 0..g.oh {
                    let sy = (y * g.stride + ki) as isize - g.pad as isize;
                    if sy < 0 || sy as usize >= g.h {
                        continue;
                    }
                    for x in 0..g.ow {
                        let sx = (x * g.stride + kj) as isize - g.pad as isize;
                        if sx >= 0 && (sx as usize) < g.w {
                            img[(c * g.h + sy as usize) * g.w + sx as usize] += src[y * g.ow + x];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Scalar>(g: &ConvGeom, input: &[T], kernel: &[T]) -> Vec<T> {
    let (kk, p) = (g.patch(), g.positions());
    let mut cols = vec![T::zero(); kk * p];
    let mut out = vec![T::zero(); g.n * g.o * p];
    for i in 0..g.n {
        im2col(g, &input[i * g.c * g.h * g.w..(i + 1) * g.c * g.h * g.w], &mut cols);
        let dst = &mut out[i * g.o * p..(i + 1) * g.o * p];
        crate::scalar::matmul_into(g.o, kk, p, kernel, &cols, dst);
    }
    out
}

/// Returns `(grad_input, grad_kernel)`.
pub(crate) fn conv2d_backward<T: Scalar>(
    g: &ConvGeom,
    input: &[T],
    kernel: &[T],
    grad_out: &[T],
) -> (Vec<T>, Vec<T>) {
    let (kk, p) = (g.patch(), g.positions());
    let img = g.c * g.h * g.w;
    let mut cols = vec![T::zero(); kk * p];
    let mut gcols = vec![T::zero(); kk * p];
    let mut gin = vec![T::zero(); g.n * img];
    let mut gk = vec![T::zero(); g.o * kk];
    for i in 0..g.n {
        let gout = &grad_out[i * g.o * p..(i + 1) * g.o * p];
        im2col(g, &input[i * img..(i + 1) * img], &mut cols);
        // gk += gout · colsᵀ
        T::gemm(g.o, p, kk, T::one(), gout, p as isize, 1, &cols, 1, p as isize, T::one(), &mut gk, kk as isize, 1);
        // gcols = kernelᵀ · gout
        T::gemm(kk, g.o, p, T::one(), kernel, 1, kk as isize, gout, p as isize, 1, T::zero(), &mut gcols, p as isize, 1);
        col2im_add(g, &gcols, &mut gin[i * img..(i + 1) * img]);
    }
    (gin, gk)
}

/// `(outer, len, inner)` decomposition of a shape around `axis`.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn softmax_forward<T: Scalar>(x: &[T], outer: usize, len: usize, inner: usize) -> Vec<T> {
    let mut y = vec![T::zero(); x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |t: usize| (o * len + t) * inner + i;
            let max = (0..len).map(|t| x[at(t)]).fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for t in 0..len {
                let e = (x[at(t)] - max).exp();
                y[at(t)] = e;
                total += e;
            }
            for t in 0..len {
                y[at(t)] = y[at(t)] / total;
            }
        }
    }
    y
}

pub(crate) fn softmax_backward<T: Scalar>(y: &[T], g: &[T], outer: usize, len: usize, inner: usize) -> Vec<T> {
    let mut gx = vec![T::zero(); y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |t: usize| (o * len + t) * inner + i;
            let dot: T = (0..len).map(|t| g[at(t)] * y[at(t)]).sum();
            for t in 0..len {
                gx[at(t)] = y[at(t)] * (g[at(t)] - dot);
            }
        }
    }
    gx
}

/// Mean over the middle axis of a `(groups, n, c)` layout.
pub(crate) fn set_mean<T: Scalar>(x: &[T], groups: usize, n: usize, c: usize) -> Vec<T> {
    let mut out = vec![T::zero(); groups * c];
    let inv = T::one() / T::of(n as f64);
    for gi in 0..groups {
        let dst = &mut out[gi * c..(gi + 1) * c];
        for row in x[gi * n * c..(gi + 1) * n * c].chunks_exact(c) {
            for (d, v) in dst.iter_mut().zip(row) {
                *d += *v;
            }
        }
        for d in dst.iter_mut() {
            *d *= inv;
        }
        // one correction pass; makes the mean of identical values exact
        let mut fix = vec![T::zero(); c];
        for row in x[gi * n * c..(gi + 1) * n * c].chunks_exact(c) {
            for ((f, v), m) in fix.iter_mut().zip(row).zip(dst.iter()) {
                *f += *v - *m;
            }
        }
        for (d, f) in dst.iter_mut().zip(fix) {
            *d += f * inv;
        }
    }
    out
}

/// Population standard deviation over the middle axis of `(groups, n, c)`.
pub(crate) fn set_std<T: Scalar>(x: &[T], mean: &[T], groups: usize, n: usize, c: usize) -> Vec<T> {
    let mut out = vec![T::zero(); groups * c];
    let inv = T::one() / T::of(n as f64);
    for gi in 0..groups {
        let mu = &mean[gi * c..(gi + 1) * c];
        let dst = &mut out[gi * c..(gi + 1) * c];
        for row in x[gi * n * c..(gi + 1) * n * c].chunks_exact(c) {
            for ((d, v), m) in dst.iter_mut().zip(row).zip(mu) {
                let dev = *v - *m;
                *d += dev * dev;
            }
        }
        for d in dst.iter_mut() {
            *d = (*d * inv).sqrt();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(n: usize, c: usize, h: usize, w: usize, o: usize, k: usize, stride: usize, pad: usize) -> ConvGeom {
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (w + 2 * pad - k) / stride + 1;
        ConvGeom { n, c, h, w, o, kh: k, kw: k, stride, pad, oh, ow }
    }

    /// Direct nested-loop cross-correlation.
    fn conv_reference(g: &ConvGeom, x: &[f64], k: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; g.n * g.o * g.oh * g.ow];
        for n in 0..g.n {
            for o in 0..g.o {
                for y in 0..g.oh {
                    for xx in 0..g.ow {
                        let mut acc = 0.0;
                        for c in 0..g.c {
                            for ki in 0..g.kh {
                                for kj in 0..g.kw {
                                    let sy = (y * g.stride + ki) as isize - g.pad as isize;
                                    let sx = (xx * g.stride + kj) as isize - g.pad as isize;
                                    if sy < 0 || sx < 0 || sy as usize >= g.h || sx as usize >= g.w {
                                        continue;
                                    }
                                    acc += x[((n * g.c + c) * g.h + sy as usize) * g.w + sx as usize]
                                        * k[((o * g.c + c) * g.kh + ki) * g.kw + kj];
                                }
                            }
                        }
                        out[((n * g.o + o) * g.oh + y) * g.ow + xx] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn im2col_conv_matches_direct_loops() {
        for &(stride, pad) in &[(1, 0), (1, 1), (2, 1), (2, 0)] {
            let g = geom(2, 3, 5, 4, 4, 3, stride, pad);
            let x: Vec<f64> = (0..g.n * g.c * g.h * g.w).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
            let k: Vec<f64> = (0..g.o * g.c * 9).map(|i| ((i * 13 % 7) as f64) * 0.5 - 1.0).collect();
            let fast = conv2d_forward(&g, &x, &k);
            let slow = conv_reference(&g, &x, &k);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12, "stride {stride} pad {pad}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn softmax_along_middle_axis() {
        // shape (1, 2, 2): softmax over axis 1 pairs (0, ln3) and (0, 0)
        let x = [0.0, 0.0, 3f64.ln(), 0.0];
        let y = softmax_forward(&x, 1, 2, 2);
        assert!((y[0] - 0.25).abs() < 1e-12 && (y[2] - 0.75).abs() < 1e-12);
        assert!((y[1] - 0.5).abs() < 1e-12 && (y[3] - 0.5).abs() < 1e-12);
    }
}
