//! Forward and reverse passes of the individual layers: zero-padded
//! convolution, rectifier, 2x2 max pooling and 2x2 stride-2 transposed
//! convolution. Weight layouts follow the (out, in, ky, kx) convention
//! for convolutions and (in, out, ky, kx) for transposed convolutions.

use super::tensor::Tensor;

/// `k x k` convolution, stride 1, zero padding `pad` (so `pad = k/2`
/// keeps the resolution). Weight length `out_c * in_c * k * k`, bias
/// length `out_c`.
pub fn conv_forward(input: &Tensor, w: &[f64], b: &[f64], out_c: usize, k: usize, pad: usize) -> Tensor {
    let (in_c, h, wid) = (input.channels, input.height, input.width);
    debug_assert_eq!(w.len(), out_c * in_c * k * k);
    debug_assert_eq!(b.len(), out_c);
    let mut out = Tensor::zeros(out_c, h, wid);
    for oc in 0..out_c {
        for y in 0..h {
            for x in 0..wid {
                let mut acc = b[oc];
                for ic in 0..in_c {
                    for ky in 0..k {
                        let iy = y + ky;
                        if iy < pad || iy - pad >= h {
                            continue;
                        }
                        let iy = iy - pad;
                        for kx in 0..k {
                            let ix = x + kx;
                            if ix < pad || ix - pad >= wid {
                                continue;
                            }
                            let ix = ix - pad;
                            acc += input.data[input.idx(ic, iy, ix)]
                                * w[((oc * in_c + ic) * k + ky) * k + kx];
                        }
                    }
                }
                let o = out.idx(oc, y, x);
                out.data[o] = acc;
            }
        }
    }
    out
}

/// Reverse pass of [`conv_forward`]: returns the input gradient and
/// accumulates into the weight/bias gradients.
pub fn conv_backward(
    input: &Tensor,
    w: &[f64],
    grad_out: &Tensor,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    k: usize,
    pad: usize,
) -> Tensor {
    let (in_c, h, wid) = (input.channels, input.height, input.width);
    let out_c = grad_out.channels;
    let mut grad_in = Tensor::zeros(in_c, h, wid);
    for oc in 0..out_c {
        for y in 0..h {
            for x in 0..wid {
                let g = grad_out.data[grad_out.idx(oc, y, x)];
                if g == 0.0 {
                    continue;
                }
                grad_b[oc] += g;
                for ic in 0..in_c {
                    for ky in 0..k {
                        let iy = y + ky;
                        if iy < pad || iy - pad >= h {
                            continue;
                        }
                        let iy = iy - pad;
                        for kx in 0..k {
                            let ix = x + kx;
                            if ix < pad || ix - pad >= wid {
                                continue;
                            }
                            let ix = ix - pad;
                            let wi = ((oc * in_c + ic) * k + ky) * k + kx;
                            grad_w[wi] += g * input.data[input.idx(ic, iy, ix)];
                            let gi_i = grad_in.idx(ic, iy, ix);
                            grad_in.data[gi_i] += g * w[wi];
                        }
                    }
                }
            }
        }
    }
    grad_in
}

/// Rectifier; the output doubles as the mask for the reverse pass.
pub fn relu_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for x in &mut out.data {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    out
}

pub fn relu_backward(output: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut grad_in = grad_out.clone();
    for (g, &o) in grad_in.data.iter_mut().zip(&output.data) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
    grad_in
}

/// 2x2 max pooling, stride 2. Height and width must be even. Returns the
/// pooled tensor and the flat input index of each selected element.
pub fn maxpool_forward(input: &Tensor) -> (Tensor, Vec<usize>) {
    let (c, h, w) = (input.channels, input.height, input.width);
    debug_assert!(h % 2 == 0 && w % 2 == 0);
    let mut out = Tensor::zeros(c, h / 2, w / 2);
    let mut arg = vec![0usize; out.len()];
    for ch in 0..c {
        for y in 0..h / 2 {
            for x in 0..w / 2 {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let i = input.idx(ch, 2 * y + dy, 2 * x + dx);
                        if input.data[i] > best {
                            best = input.data[i];
                            best_i = i;
                        }
                    }
                }
                let o = out.idx(ch, y, x);
                out.data[o] = best;
                arg[o] = best_i;
            }
        }
    }
    (out, arg)
}

pub fn maxpool_backward(input_shape: (usize, usize, usize), arg: &[usize], grad_out: &Tensor) -> Tensor {
    let mut grad_in = Tensor::zeros(input_shape.0, input_shape.1, input_shape.2);
    for (o, &i) in arg.iter().enumerate() {
        grad_in.data[i] += grad_out.data[o];
    }
    grad_in
}

/// 2x2 transposed convolution, stride 2 (exact inverse of the pooling
/// resolution change). Weight length `in_c * out_c * 4`, bias `out_c`.
pub fn tconv_forward(input: &Tensor, w: &[f64], b: &[f64], out_c: usize) -> Tensor {
    let (in_c, h, wid) = (input.channels, input.height, input.width);
    debug_assert_eq!(w.len(), in_c * out_c * 4);
    let mut out = Tensor::zeros(out_c, h * 2, wid * 2);
    for oc in 0..out_c {
        let base = out.idx(oc, 0, 0);
        for v in out.data[base..base + 4 * h * wid].iter_mut() {
            *v = b[oc];
        }
    }
    for ic in 0..in_c {
        for y in 0..h {
            for x in 0..wid {
                let v = input.data[input.idx(ic, y, x)];
                if v == 0.0 {
                    continue;
                }
                for oc in 0..out_c {
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let wi = ((ic * out_c + oc) * 2 + dy) * 2 + dx;
                            let o = out.idx(oc, 2 * y + dy, 2 * x + dx);
                            out.data[o] += v * w[wi];
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn tconv_backward(
    input: &Tensor,
    w: &[f64],
    grad_out: &Tensor,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) -> Tensor {
    let (in_c, h, wid) = (input.channels, input.height, input.width);
    let out_c = grad_out.channels;
    let mut grad_in = Tensor::zeros(in_c, h, wid);
    for oc in 0..out_c {
        let base = grad_out.idx(oc, 0, 0);
        grad_b[oc] += grad_out.data[base..base + 4 * h * wid].iter().sum::<f64>();
    }
    for ic in 0..in_c {
        for y in 0..h {
            for x in 0..wid {
                let v = input.data[input.idx(ic, y, x)];
                let mut acc = 0.0;
                for oc in 0..out_c {
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let wi = ((ic * out_c + oc) * 2 + dy) * 2 + dx;
                            let g = grad_out.data[grad_out.idx(oc, 2 * y + dy, 2 * x + dx)];
                            acc += g * w[wi];
                            grad_w[wi] += g * v;
                        }
                    }
                }
                let gi_i = grad_in.idx(ic, y, x);
                grad_in.data[gi_i] = acc;
            }
        }
    }
    grad_in
}
