/// Direct sliding-window convolution over an `n x c x h x w` input with an
/// `o x c x k x k` kernel. Returns the output and its spatial size.
#[allow(clippy::too_many_arguments)]
pub fn conv2d(
    x: &[f64],
    (n, c, h, w): (usize, usize, usize, usize),
    weight: &[f64],
    (o, k): (usize, usize),
    bias: &[f64],
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; n * o * oh * ow];
    for b in 0..n {
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = bias[oc];
                    for ic in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xv = x[((b * c + ic) * h + iy as usize) * w + ix as usize];
                                let wv = weight[((oc * c + ic) * k + ky) * k + kx];
                                s += xv * wv;
                            }
                        }
                    }
                    out[((b * o + oc) * oh + oy) * ow + ox] = s;
                }
            }
        }
    }
    (out, oh, ow)
}

/// Per-channel sliding dot product of a `c x th x tw` template over a
/// `c x sh x sw` search map.
pub fn xcorr(t: &[f64], (c, th, tw): (usize, usize, usize), s: &[f64], (sh, sw): (usize, usize)) -> Vec<f64> {
    let oh = sh - th + 1;
    let ow = sw - tw + 1;
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = 0.0;
                for u in 0..th {
                    for v in 0..tw {
                        acc += t[(ch * th + u) * tw + v] * s[(ch * sh + y + u) * sw + x + v];
                    }
                }
                out[(ch * oh + y) * ow + x] = acc;
            }
        }
    }
    out
}
