//! Forward and backward numeric kernels shared by the autograd graph.
//!
//! The forward kernels are also usable directly on plain tensors.

use crate::error::{ensure_shape, Result};
use crate::tensor::Tensor;

/// Layer normalization epsilon, added to the variance under the square root.
pub const LN_EPS: f64 = 1e-5;

/// `c = op(a) * op(b) (+ c)` where `op(a)` is `m x k` and `op(b)` is `k x n`.
///
/// When `a_t` is set, `a` is stored as `k x m`; likewise `b_t` means `b` is
/// stored as `n x k`. All buffers are row-major.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above bound every index the kernel touches given
    // these strides; `c` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    ensure_shape!(
        k == k2,
        "matmul inner extents differ: {:?} x {:?}",
        a.shape(),
        b.shape()
    );
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, a.data(), false, b.data(), false, &mut out, false);
    Tensor::new(&[m, n], out)
}

/// `a * b^T`.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2()?;
    let (n, k2) = b.dims2()?;
    ensure_shape!(k == k2, "matmul_nt widths differ: {:?} vs {:?}", a.shape(), b.shape());
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, a.data(), false, b.data(), true, &mut out, false);
    Tensor::new(&[m, n], out)
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    let (r, c) = x.dims2()?;
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(c) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Tensor::new(&[r, c], out)
}

pub fn log_softmax_rows(x: &Tensor) -> Result<Tensor> {
    let (r, c) = x.dims2()?;
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(c) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    Tensor::new(&[r, c], out)
}

/// Normalized rows `x_hat` and per-row `1/sqrt(var + eps)`, before the affine map.
pub(crate) fn layer_norm_stats(x: &Tensor) -> Result<(Tensor, Vec<f64>)> {
    let (r, c) = x.dims2()?;
    let mut xhat = x.data().to_vec();
    let mut inv_std = Vec::with_capacity(r);
    for row in xhat.chunks_mut(c) {
        let mean = row.iter().sum::<f64>() / c as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * is;
        }
        inv_std.push(is);
    }
    Ok((Tensor::new(&[r, c], xhat)?, inv_std))
}

/// Row-wise layer normalization (biased variance) followed by `gain * x_hat + bias`.
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (_, c) = x.dims2()?;
    ensure_shape!(
        gain.len() == c && bias.len() == c,
        "layer_norm affine length {} / {} does not match width {c}",
        gain.len(),
        bias.len()
    );
    let (mut xhat, _) = layer_norm_stats(x)?;
    for row in xhat.data_mut().chunks_mut(c) {
        for ((v, g), b) in row.iter_mut().zip(gain.data()).zip(bias.data()) {
            *v = *v * g + b;
        }
    }
    Ok(xhat)
}

/// Output extent of a convolution along one axis.
pub fn conv_out_size(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(x: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> Result<Self> {
        ensure_shape!(x.rank() == 4, "conv2d input must be NCHW, got {:?}", x.shape());
        ensure_shape!(
            weight.rank() == 4,
            "conv2d weight must be OIkk, got {:?}",
            weight.shape()
        );
        ensure_shape!(stride >= 1, "conv2d stride must be >= 1");
        let (n, cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (cout, wcin, kh, kw) = (
            weight.shape()[0],
            weight.shape()[1],
            weight.shape()[2],
            weight.shape()[3],
        );
        ensure_shape!(wcin == cin, "conv2d channels: input has {cin}, weight expects {wcin}");
        ensure_shape!(bias.len() == cout, "conv2d bias length {} != {cout}", bias.len());
        let ho = conv_out_size(h, kh, stride, pad);
        let wo = conv_out_size(w, kw, stride, pad);
        match (ho, wo) {
            (Some(ho), Some(wo)) => Ok(Self {
                n,
                cin,
                h,
                w,
                cout,
                kh,
                kw,
                stride,
                pad,
                ho,
                wo,
            }),
            _ => Err(crate::error::shape_err!(
                "conv2d kernel {kh}x{kw} does not fit input {h}x{w} with padding {pad}"
            )),
        }
    }

    fn col_rows(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.ho * self.wo
    }

    /// Unfold one image (`cin*h*w` values) into a `(cin*kh*kw) x (ho*wo)` matrix.
    fn im2col(&self, img: &[f64], cols: &mut [f64]) {
        let ncols = self.col_cols();
        for c in 0..self.cin {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let dst = &mut cols[row * ncols..(row + 1) * ncols];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        for ox in 0..self.wo {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            dst[oy * self.wo + ox] =
                                if iy >= 0 && ix >= 0 && (iy as usize) < self.h && (ix as usize) < self.w {
                                    img[(c * self.h + iy as usize) * self.w + ix as usize]
                                } else {
                                    0.0
                                };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], img: &mut [f64]) {
        let ncols = self.col_cols();
        for c in 0..self.cin {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let src = &cols[row * ncols..(row + 1) * ncols];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy as usize >= self.h {
                            continue;
                        }
                        for ox in 0..self.wo {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            if ix < 0 || ix as usize >= self.w {
                                continue;
                            }
                            img[(c * self.h + iy as usize) * self.w + ix as usize] += src[oy * self.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d(x: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let g = ConvGeom::new(x, weight, bias, stride, padding)?;
    let in_sz = g.cin * g.h * g.w;
    let out_sz = g.cout * g.ho * g.wo;
    let mut cols = vec![0.0; g.col_rows() * g.col_cols()];
    let mut out = vec![0.0; g.n * out_sz];
    for b in 0..g.n {
        g.im2col(&x.data()[b * in_sz..(b + 1) * in_sz], &mut cols);
        let dst = &mut out[b * out_sz..(b + 1) * out_sz];
        for (o, chunk) in dst.chunks_mut(g.ho * g.wo).enumerate() {
            chunk.fill(bias.data()[o]);
        }
        gemm(
            g.cout,
            g.col_rows(),
            g.col_cols(),
            weight.data(),
            false,
            &cols,
            false,
            dst,
            true,
        );
    }
    Tensor::new(&[g.n, g.cout, g.ho, g.wo], out)
}

/// Gradients of a convolution with respect to input, weight and bias.
pub(crate) fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
    grad_out: &Tensor,
    want_input_grad: bool,
) -> Result<(Tensor, Tensor, Tensor)> {
    let g = ConvGeom::new(x, weight, bias, stride, padding)?;
    let in_sz = g.cin * g.h * g.w;
    let out_sz = g.cout * g.ho * g.wo;
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let mut cols = vec![0.0; rows * ncols];
    let mut gcols = vec![0.0; rows * ncols];
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; weight.len()];
    let mut gb = vec![0.0; g.cout];
    for b in 0..g.n {
        let go = &grad_out.data()[b * out_sz..(b + 1) * out_sz];
        g.im2col(&x.data()[b * in_sz..(b + 1) * in_sz], &mut cols);
        gemm(g.cout, ncols, rows, go, false, &cols, true, &mut gw, true);
        if want_input_grad {
            gemm(rows, g.cout, ncols, weight.data(), true, go, false, &mut gcols, false);
            g.col2im(&gcols, &mut gx[b * in_sz..(b + 1) * in_sz]);
        }
        for (o, chunk) in go.chunks(ncols).enumerate() {
            gb[o] += chunk.iter().sum::<f64>();
        }
    }
    Ok((
        Tensor::new(x.shape(), gx)?,
        Tensor::new(weight.shape(), gw)?,
        Tensor::new(bias.shape(), gb)?,
    ))
}

fn xcorr_dims(template: &Tensor, search: &Tensor) -> Result<(usize, usize, usize, usize, usize, usize, usize)> {
    ensure_shape!(
        template.rank() == 3 && search.rank() == 3,
        "xcorr expects CxHxW operands, got {:?} and {:?}",
        template.shape(),
        search.shape()
    );
    let (c, h, w) = (template.shape()[0], template.shape()[1], template.shape()[2]);
    let (cs, hs, ws) = (search.shape()[0], search.shape()[1], search.shape()[2]);
    ensure_shape!(c == cs, "xcorr channel mismatch: {c} vs {cs}");
    ensure_shape!(h <= hs && w <= ws, "template {h}x{w} larger than search {hs}x{ws}");
    Ok((c, h, w, hs, ws, hs - h + 1, ws - w + 1))
}

/// Depthwise cross-correlation: channel `c` of the output is the sliding dot
/// product of template channel `c` over search channel `c`.
pub fn xcorr(template: &Tensor, search: &Tensor) -> Result<Tensor> {
    let (c, h, w, hs, ws, ho, wo) = xcorr_dims(template, search)?;
    let mut out = vec![0.0; c * ho * wo];
    for ch in 0..c {
        let t = &template.data()[ch * h * w..(ch + 1) * h * w];
        let s = &search.data()[ch * hs * ws..(ch + 1) * hs * ws];
        let o = &mut out[ch * ho * wo..(ch + 1) * ho * wo];
        for u in 0..h {
            for v in 0..w {
                let tv = t[u * w + v];
                for i in 0..ho {
                    let srow = &s[(i + u) * ws + v..(i + u) * ws + v + wo];
                    let orow = &mut o[i * wo..(i + 1) * wo];
                    for (ov, sv) in orow.iter_mut().zip(srow) {
                        *ov += tv * sv;
                    }
                }
            }
        }
    }
    Tensor::new(&[c, ho, wo], out)
}

pub(crate) fn xcorr_backward(template: &Tensor, search: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor)> {
    let (c, h, w, hs, ws, ho, wo) = xcorr_dims(template, search)?;
    let mut gt = vec![0.0; template.len()];
    let mut gs = vec![0.0; search.len()];
    for ch in 0..c {
        let t = &template.data()[ch * h * w..(ch + 1) * h * w];
        let s = &search.data()[ch * hs * ws..(ch + 1) * hs * ws];
        let go = &grad_out.data()[ch * ho * wo..(ch + 1) * ho * wo];
        let gtc = &mut gt[ch * h * w..(ch + 1) * h * w];
        let gsc = &mut gs[ch * hs * ws..(ch + 1) * hs * ws];
        for u in 0..h {
            for v in 0..w {
                let tv = t[u * w + v];
                let mut acc = 0.0;
                for i in 0..ho {
                    let base = (i + u) * ws + v;
                    let grow = &go[i * wo..(i + 1) * wo];
                    let srow = &s[base..base + wo];
                    acc += grow.iter().zip(srow).map(|(a, b)| a * b).sum::<f64>();
                    for (gsv, gv) in gsc[base..base + wo].iter_mut().zip(grow) {
                        *gsv += tv * gv;
                    }
                }
                gtc[u * w + v] = acc;
            }
        }
    }
    Ok((Tensor::new(template.shape(), gt)?, Tensor::new(search.shape(), gs)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_size_formula() {
        assert_eq!(conv_out_size(128, 5, 2, 0), Some(62));
        assert_eq!(conv_out_size(5, 3, 1, 1), Some(5));
        assert_eq!(conv_out_size(2, 3, 1, 0), None);
    }

    #[test]
    fn gemm_transposed_operands() {
        // a = [[1,2],[3,4]], b = [[5,6],[7,8]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        gemm(2, 2, 2, &a, true, &b, false, &mut c, false);
        // a^T b = [[1,3],[2,4]] [[5,6],[7,8]]
        assert_eq!(c, [26.0, 30.0, 38.0, 44.0]);
        gemm(2, 2, 2, &a, false, &b, true, &mut c, false);
        assert_eq!(c, [17.0, 23.0, 39.0, 53.0]);
    }

    #[test]
    fn softmax_rejects_rank_one() {
        assert!(softmax_rows(&Tensor::zeros(&[4])).is_err());
    }

    #[test]
    fn layer_norm_rejects_affine_mismatch() {
        let x = Tensor::zeros(&[2, 3]);
        assert!(layer_norm(&x, &Tensor::ones(&[2]), &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn xcorr_rejects_oversized_template() {
        let t = Tensor::zeros(&[1, 4, 4]);
        let s = Tensor::zeros(&[1, 3, 5]);
        assert!(xcorr(&t, &s).is_err());
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let x = Tensor::zeros(&[1, 2, 5, 5]);
        let w = Tensor::zeros(&[3, 1, 3, 3]);
        assert!(conv2d(&x, &w, &Tensor::zeros(&[3]), 1, 0).is_err());
    }
}
