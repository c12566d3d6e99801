//! Dense and convolutional affine maps over row-major batches of samples.
//! All reductions run in a fixed index order.

use crate::scalar::Scalar;

use super::spec::LayerKind;

/// `out[r, :] = W · input[r, :] + b` for every row.
pub(crate) fn forward<S: Scalar>(kind: &LayerKind, input: &[S], weight: &[S], bias: &[S], rows: usize) -> Vec<S> {
    match *kind {
        LayerKind::Dense { fan_in, fan_out } => {
            let mut out = vec![S::zero(); rows * fan_out];
            for r in 0..rows {
                let a = &input[r * fan_in..(r + 1) * fan_in];
                let dst = &mut out[r * fan_out..(r + 1) * fan_out];
                for (o, d) in dst.iter_mut().enumerate() {
                    let w = &weight[o * fan_in..(o + 1) * fan_in];
                    let mut acc = bias[o];
                    for (&x, &wi) in a.iter().zip(w) {
                        acc += x * wi;
                    }
                    *d = acc;
                }
            }
            out
        }
        LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            in_h,
            in_w,
        } => {
            let (oh, ow) = kind.out_hw();
            let in_f = in_channels * in_h * in_w;
            let out_f = out_channels * oh * ow;
            let mut out = vec![S::zero(); rows * out_f];
            for r in 0..rows {
                let a = &input[r * in_f..(r + 1) * in_f];
                let dst = &mut out[r * out_f..(r + 1) * out_f];
                for oc in 0..out_channels {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = bias[oc];
                            for ic in 0..in_channels {
                                for ky in 0..kernel {
                                    let iy = (oy * stride + ky) as isize - padding as isize;
                                    if iy < 0 || iy >= in_h as isize {
                                        continue;
                                    }
                                    for kx in 0..kernel {
                                        let ix = (ox * stride + kx) as isize - padding as isize;
                                        if ix < 0 || ix >= in_w as isize {
                                            continue;
                                        }
                                        let wv = weight[((oc * in_channels + ic) * kernel + ky) * kernel + kx];
                                        let xv = a[(ic * in_h + iy as usize) * in_w + ix as usize];
                                        acc += wv * xv;
                                    }
                                }
                            }
                            dst[(oc * oh + oy) * ow + ox] = acc;
                        }
                    }
                }
            }
            out
        }
    }
}

pub(crate) struct AffineGrads<S> {
    pub d_weight: Vec<S>,
    pub d_bias: Vec<S>,
    pub d_input: Option<Vec<S>>,
}

/// Backward of [`forward`] given `d_out` (rows × out_features). The input
/// gradient is only formed when `want_input` is set.
pub(crate) fn backward<S: Scalar>(
    kind: &LayerKind,
    input: &[S],
    weight: &[S],
    d_out: &[S],
    rows: usize,
    want_input: bool,
) -> AffineGrads<S> {
    match *kind {
        LayerKind::Dense { fan_in, fan_out } => {
            let mut d_weight = vec![S::zero(); fan_out * fan_in];
            let mut d_bias = vec![S::zero(); fan_out];
            for r in 0..rows {
                let a = &input[r * fan_in..(r + 1) * fan_in];
                let g = &d_out[r * fan_out..(r + 1) * fan_out];
                for (o, &go) in g.iter().enumerate() {
                    if go == S::zero() {
                        continue;
                    }
                    d_bias[o] += go;
                    let dw = &mut d_weight[o * fan_in..(o + 1) * fan_in];
                    for (d, &x) in dw.iter_mut().zip(a) {
                        *d += go * x;
                    }
                }
            }
            let d_input = want_input.then(|| {
                let mut d_in = vec![S::zero(); rows * fan_in];
                for r in 0..rows {
                    let g = &d_out[r * fan_out..(r + 1) * fan_out];
                    let dst = &mut d_in[r * fan_in..(r + 1) * fan_in];
                    for (o, &go) in g.iter().enumerate() {
                        if go == S::zero() {
                            continue;
                        }
                        let w = &weight[o * fan_in..(o + 1) * fan_in];
                        for (d, &wi) in dst.iter_mut().zip(w) {
                            *d += go * wi;
                        }
                    }
                }
                d_in
            });
            AffineGrads {
                d_weight,
                d_bias,
                d_input,
            }
        }
        LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            in_h,
            in_w,
        } => {
            let (oh, ow) = kind.out_hw();
            let in_f = in_channels * in_h * in_w;
            let out_f = out_channels * oh * ow;
            let mut d_weight = vec![S::zero(); out_channels * in_channels * kernel * kernel];
            let mut d_bias = vec![S::zero(); out_channels];
            let mut d_in = if want_input {
                vec![S::zero(); rows * in_f]
            } else {
                Vec::new()
            };
            for r in 0..rows {
                let a = &input[r * in_f..(r + 1) * in_f];
                let g = &d_out[r * out_f..(r + 1) * out_f];
                for oc in 0..out_channels {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let go = g[(oc * oh + oy) * ow + ox];
                            if go == S::zero() {
                                continue;
                            }
                            d_bias[oc] += go;
                            for ic in 0..in_channels {
                                for ky in 0..kernel {
                                    let iy = (oy * stride + ky) as isize - padding as isize;
                                    if iy < 0 || iy >= in_h as isize {
                                        continue;
                                    }
                                    for kx in 0..kernel {
                                        let ix = (ox * stride + kx) as isize - padding as isize;
                                        if ix < 0 || ix >= in_w as isize {
                                            continue;
                                        }
                                        let wi = ((oc * in_channels + ic) * kernel + ky) * kernel + kx;
                                        let xi = (ic * in_h + iy as usize) * in_w + ix as usize;
                                        d_weight[wi] += go * a[xi];
                                        if want_input {
                                            d_in[r * in_f + xi] += go * weight[wi];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            AffineGrads {
                d_weight,
                d_bias,
                d_input: want_input.then_some(d_in),
            }
        }
    }
}
