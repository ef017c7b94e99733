//! Forward/backward compute kernels. All loops run in a fixed order (or
//! write disjoint regions under rayon), so results are bit-deterministic.

use rayon::prelude::*;

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

pub fn conv2d_output_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (input + 2 * padding - kernel) / stride + 1
}

pub(crate) struct ConvDims {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub ho: usize,
    pub wo: usize,
}

pub(crate) fn conv2d_check<E: Scalar>(
    input: &Tensor<E>,
    weight: &Tensor<E>,
    bias: &Tensor<E>,
    stride: usize,
    padding: usize,
) -> Result<ConvDims> {
    if stride == 0 {
        return Err(Error::invalid("conv2d", "stride must be positive"));
    }
    let [n, cin, h, w] = input.dims4();
    let wd = weight.shape();
    if wd.len() != 4 || wd[2] != wd[3] {
        return Err(Error::shape(
            "conv2d",
            format!("weight must be Cout x Cin x k x k, got {:?}", wd),
        ));
    }
    let (cout, wcin, k) = (wd[0], wd[1], wd[2]);
    if wcin != cin {
        return Err(Error::shape(
            "conv2d",
            format!("input has {} channels, weight expects {}", cin, wcin),
        ));
    }
    if bias.len() != cout {
        return Err(Error::shape(
            "conv2d",
            format!("bias length {} != {} output channels", bias.len(), cout),
        ));
    }
    if h + 2 * padding < k || w + 2 * padding < k {
        return Err(Error::shape(
            "conv2d",
            format!("padded input {}x{} smaller than kernel {}", h + 2 * padding, w + 2 * padding, k),
        ));
    }
    let ho = conv2d_output_extent(h, k, stride, padding);
    let wo = conv2d_output_extent(w, k, stride, padding);
    Ok(ConvDims { n, cin, h, w, cout, k, ho, wo })
}

/// Gathers one sample into a (Cin*k*k) x (Ho*Wo) patch matrix with
/// zero padding.
fn im2col<E: Scalar>(src: &[E], d: &ConvDims, stride: usize, padding: usize, col: &mut [E]) {
    let ConvDims { cin, h, w, k, ho, wo, .. } = *d;
    let cols = ho * wo;
    debug_assert_eq!(col.len(), cin * k * k * cols);
    for c in 0..cin {
        let plane = &src[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * cols;
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    let out_row = &mut col[row + oy * wo..row + (oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        out_row.fill(E::ZERO);
                        continue;
                    }
                    let line = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, slot) in out_row.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        *slot = if ix < 0 || ix >= w as isize {
                            E::ZERO
                        } else {
                            line[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-adds a patch-matrix gradient back onto the input layout.
fn col2im_accumulate<E: Scalar>(
    col: &[E],
    d: &ConvDims,
    stride: usize,
    padding: usize,
    dst: &mut [E],
) {
    let ConvDims { cin, h, w, k, ho, wo, .. } = *d;
    let cols = ho * wo;
    for c in 0..cin {
        let plane = &mut dst[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * cols;
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = iy as usize * w;
                    for ox in 0..wo {
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        plane[base + ix as usize] += col[row + oy * wo + ox];
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<E: Scalar>(
    input: &Tensor<E>,
    weight: &Tensor<E>,
    bias: &Tensor<E>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<E>> {
    let d = conv2d_check(input, weight, bias, stride, padding)?;
    let ConvDims { n, cin, h, w, cout, k, ho, wo } = d;
    let cols = ho * wo;
    let mut out = Tensor::zeros(&[n, cout, ho, wo]);

    let in_data = input.data();
    let w_data = weight.data();
    let b_data = bias.data();
    out.data_mut()
        .par_chunks_mut(cout * cols)
        .enumerate()
        .for_each(|(s, out_s)| {
            let mut col = vec![E::ZERO; cin * k * k * cols];
            im2col(&in_data[s * cin * h * w..(s + 1) * cin * h * w], &d, stride, padding, &mut col);
            E::gemm(cout, cin * k * k, cols, E::ONE, w_data, false, &col, false, E::ZERO, out_s);
            for co in 0..cout {
                let b = b_data[co];
                for v in &mut out_s[co * cols..(co + 1) * cols] {
                    *v += b;
                }
            }
        });
    Ok(out)
}

pub(crate) struct ConvGrads<E> {
    pub input: Tensor<E>,
    pub weight: Tensor<E>,
    pub bias: Tensor<E>,
}

pub(crate) fn conv2d_backward<E: Scalar>(
    input: &Tensor<E>,
    weight: &Tensor<E>,
    bias: &Tensor<E>,
    stride: usize,
    padding: usize,
    grad_out: &Tensor<E>,
) -> Result<ConvGrads<E>> {
    let d = conv2d_check(input, weight, bias, stride, padding)?;
    let ConvDims { n, cin, h, w, cout, k, ho, wo } = d;
    let cols = ho * wo;
    let ckk = cin * k * k;
    debug_assert_eq!(grad_out.shape(), &[n, cout, ho, wo]);

    let in_data = input.data();
    let w_data = weight.data();
    let go = grad_out.data();

    // d/input: per-sample, disjoint writes.
    let mut grad_input = Tensor::zeros(input.shape());
    grad_input
        .data_mut()
        .par_chunks_mut(cin * h * w)
        .enumerate()
        .for_each(|(s, gi_s)| {
            let mut dcol = vec![E::ZERO; ckk * cols];
            E::gemm(
                ckk,
                cout,
                cols,
                E::ONE,
                w_data,
                true,
                &go[s * cout * cols..(s + 1) * cout * cols],
                false,
                E::ZERO,
                &mut dcol,
            );
            col2im_accumulate(&dcol, &d, stride, padding, gi_s);
        });

    // d/weight and d/bias: per-sample partials accumulated in chunk order,
    // then summed sequentially so the reduction order is fixed.
    const CHUNK: usize = 8;
    let partials: Vec<(Vec<E>, Vec<E>)> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|samples| {
            let mut dw = vec![E::ZERO; cout * ckk];
            let mut db = vec![E::ZERO; cout];
            let mut col = vec![E::ZERO; ckk * cols];
            for &s in samples {
                im2col(&in_data[s * cin * h * w..(s + 1) * cin * h * w], &d, stride, padding, &mut col);
                let go_s = &go[s * cout * cols..(s + 1) * cout * cols];
                E::gemm(cout, cols, ckk, E::ONE, go_s, false, &col, true, E::ONE, &mut dw);
                for co in 0..cout {
                    let mut acc = E::ZERO;
                    for &g in &go_s[co * cols..(co + 1) * cols] {
                        acc += g;
                    }
                    db[co] += acc;
                }
            }
            (dw, db)
        })
        .collect();

    let mut grad_weight = Tensor::zeros(weight.shape());
    let mut grad_bias = Tensor::zeros(bias.shape());
    for (dw, db) in &partials {
        for (dst, src) in grad_weight.data_mut().iter_mut().zip(dw) {
            *dst += *src;
        }
        for (dst, src) in grad_bias.data_mut().iter_mut().zip(db) {
            *dst += *src;
        }
    }

    Ok(ConvGrads { input: grad_input, weight: grad_weight, bias: grad_bias })
}

/// out = input @ weight^T + bias, input (N, F), weight (O, F), bias (O).
pub(crate) fn linear_forward<E: Scalar>(
    input: &Tensor<E>,
    weight: &Tensor<E>,
    bias: &Tensor<E>,
) -> Result<Tensor<E>> {
    let (n, f) = input.dims2()?;
    let (o, wf) = weight.dims2()?;
    if wf != f {
        return Err(Error::shape(
            "linear",
            format!("input feature length {} != weight input extent {}", f, wf),
        ));
    }
    if bias.len() != o {
        return Err(Error::shape("linear", format!("bias length {} != {}", bias.len(), o)));
    }
    let mut out = Tensor::zeros(&[n, o]);
    E::gemm(n, f, o, E::ONE, input.data(), false, weight.data(), true, E::ZERO, out.data_mut());
    for row in 0..n {
        for (c, b) in bias.data().iter().enumerate() {
            out.data_mut()[row * o + c] += *b;
        }
    }
    Ok(out)
}

pub(crate) fn linear_backward<E: Scalar>(
    input: &Tensor<E>,
    weight: &Tensor<E>,
    grad_out: &Tensor<E>,
) -> Result<(Tensor<E>, Tensor<E>, Tensor<E>)> {
    let (n, f) = input.dims2()?;
    let (o, _) = weight.dims2()?;
    let mut grad_input = Tensor::zeros(&[n, f]);
    E::gemm(n, o, f, E::ONE, grad_out.data(), false, weight.data(), false, E::ZERO, grad_input.data_mut());
    let mut grad_weight = Tensor::zeros(&[o, f]);
    E::gemm(o, n, f, E::ONE, grad_out.data(), true, input.data(), false, E::ZERO, grad_weight.data_mut());
    let mut grad_bias = Tensor::zeros(&[o]);
    for row in 0..n {
        for c in 0..o {
            grad_bias.data_mut()[c] += grad_out.data()[row * o + c];
        }
    }
    Ok((grad_input, grad_weight, grad_bias))
}

/// Depth-to-space: (N, C, H, W) -> (N, C/r^2, rH, rW).
pub fn pixel_shuffle_raw<E: Scalar>(input: &Tensor<E>, r: usize) -> Result<Tensor<E>> {
    if r == 0 {
        return Err(Error::invalid("pixel_shuffle", "factor must be positive"));
    }
    let [n, c, h, w] = input.dims4();
    if c % (r * r) != 0 {
        return Err(Error::shape(
            "pixel_shuffle",
            format!("{} channels not divisible by {}", c, r * r),
        ));
    }
    let co = c / (r * r);
    let mut out = Tensor::zeros(&[n, co, h * r, w * r]);
    let src = input.data();
    let dst = out.data_mut();
    for s in 0..n {
        for oc in 0..co {
            for dy in 0..r {
                for dx in 0..r {
                    let ic = oc * r * r + dy * r + dx;
                    for y in 0..h {
                        let src_row = ((s * c + ic) * h + y) * w;
                        let dst_row = ((s * co + oc) * h * r + y * r + dy) * w * r + dx;
                        for x in 0..w {
                            dst[dst_row + x * r] = src[src_row + x];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Space-to-depth inverse of [`pixel_shuffle_raw`].
pub fn pixel_unshuffle_raw<E: Scalar>(input: &Tensor<E>, r: usize) -> Result<Tensor<E>> {
    if r == 0 {
        return Err(Error::invalid("pixel_unshuffle", "factor must be positive"));
    }
    let [n, c, hr, wr] = input.dims4();
    if hr % r != 0 || wr % r != 0 {
        return Err(Error::shape(
            "pixel_unshuffle",
            format!("extents {}x{} not divisible by {}", hr, wr, r),
        ));
    }
    let (h, w) = (hr / r, wr / r);
    let co = c * r * r;
    let mut out = Tensor::zeros(&[n, co, h, w]);
    let src = input.data();
    let dst = out.data_mut();
    for s in 0..n {
        for ic in 0..c {
            for dy in 0..r {
                for dx in 0..r {
                    let oc = ic * r * r + dy * r + dx;
                    for y in 0..h {
                        let dst_row = ((s * co + oc) * h + y) * w;
                        let src_row = ((s * c + ic) * hr + y * r + dy) * wr + dx;
                        for x in 0..w {
                            dst[dst_row + x] = src[src_row + x * r];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
