//! Forward and backward kernels. Spatial tensors are NHWC; kernels are
//! `kh x kw x C x F`; dense weights are `out x in`.

use crate::error::{Error, Result};

use super::tensor::{Scalar, Tensor};

/// Probabilities are clamped here before taking logs.
pub const CE_CLAMP: f64 = 1e-12;

fn dims4<T: Scalar>(t: &Tensor<T>, op: &'static str) -> Result<[usize; 4]> {
    match *t.shape() {
        [n, h, w, c] => Ok([n, h, w, c]),
        ref s => Err(Error::shape(op, format!("expected rank-4 NHWC input, got {s:?}"))),
    }
}

fn expect_shape<T: Scalar>(t: &Tensor<T>, want: &[usize], op: &'static str, what: &str) -> Result<()> {
    if t.shape() != want {
        return Err(Error::shape(
            op,
            format!("{what} has shape {:?}, expected {want:?}", t.shape()),
        ));
    }
    Ok(())
}

fn kernel_dims<T: Scalar>(
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    channels: usize,
    op: &'static str,
) -> Result<[usize; 4]> {
    let [kh, kw, kc, f] = match *kernel.shape() {
        [a, b, c, d] => [a, b, c, d],
        ref s => return Err(Error::shape(op, format!("kernel must be rank 4, got {s:?}"))),
    };
    if kc != channels {
        return Err(Error::shape(
            op,
            format!("kernel expects {kc} input channels, input has {channels}"),
        ));
    }
    expect_shape(bias, &[f], op, "bias")?;
    Ok([kh, kw, kc, f])
}

/// Zero padding before the first row/col for a `k`-wide "same" window;
/// even kernels put the extra pad at the bottom/right.
fn pad_before(k: usize) -> usize {
    (k - 1) / 2
}

/// Samples per im2col chunk: keeps the column buffer near cache-resident.
fn chunk_samples(h: usize, w: usize, row_len: usize) -> usize {
    const TARGET_BYTES: usize = 512 * 1024;
    (TARGET_BYTES / (h * w * row_len * 4).max(1)).max(1)
}

/// Valid kernel columns `q` for output column `j`, and the first source
/// column they read.
fn tap_span(j: usize, w: usize, kw: usize, left: usize) -> (usize, usize, usize) {
    let q0 = left.saturating_sub(j);
    let q1 = (w + left - j).min(kw);
    (q0, q1, j + q0 - left)
}

/// Columns for `n` samples of `x` (`n x h x w x c`): rows are output
/// positions `(n, i, j)`, columns are `(p, q, c)` in kernel order.
fn im2col<T: Scalar>(x: &[T], [n, h, w, c]: [usize; 4], kh: usize, kw: usize, cols: &mut [T]) {
    let (top, left) = (pad_before(kh), pad_before(kw));
    let row_len = kh * kw * c;
    let seg = kw * c;
    for b in 0..n {
        for i in 0..h {
            for j in 0..w {
                let row = ((b * h + i) * w + j) * row_len;
                let (q0, q1, sj) = tap_span(j, w, kw, left);
                for p in 0..kh {
                    let dst = &mut cols[row + p * seg..row + (p + 1) * seg];
                    match (i + p).checked_sub(top).filter(|&v| v < h) {
                        Some(si) => {
                            let src = ((b * h + si) * w + sj) * c;
                            dst[..q0 * c].fill(T::zero());
                            dst[q0 * c..q1 * c].copy_from_slice(&x[src..src + (q1 - q0) * c]);
                            dst[q1 * c..].fill(T::zero());
                        }
                        None => dst.fill(T::zero()),
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back onto `out`.
fn col2im<T: Scalar>(cols: &[T], [n, h, w, c]: [usize; 4], kh: usize, kw: usize, out: &mut [T]) {
    let (top, left) = (pad_before(kh), pad_before(kw));
    let row_len = kh * kw * c;
    let seg = kw * c;
    for b in 0..n {
        for i in 0..h {
            for j in 0..w {
                let row = ((b * h + i) * w + j) * row_len;
                let (q0, q1, sj) = tap_span(j, w, kw, left);
                for p in 0..kh {
                    let Some(si) = (i + p).checked_sub(top).filter(|&v| v < h) else {
                        continue;
                    };
                    let dst = ((b * h + si) * w + sj) * c;
                    let src = &cols[row + p * seg + q0 * c..row + p * seg + q1 * c];
                    for (o, &g) in out[dst..dst + src.len()].iter_mut().zip(src) {
                        *o = *o + g;
                    }
                }
            }
        }
    }
}

fn add_bias_rows<T: Scalar>(out: &mut [T], bias: &[T]) {
    for row in out.chunks_exact_mut(bias.len()) {
        for (o, &b) in row.iter_mut().zip(bias) {
            *o = *o + b;
        }
    }
}

fn column_sums<T: Scalar>(m: &[T], cols: usize) -> Vec<T> {
    let mut s = vec![T::zero(); cols];
    for row in m.chunks_exact(cols) {
        for (a, &v) in s.iter_mut().zip(row) {
            *a = *a + v;
        }
    }
    s
}

/// Stride-1 convolution with "same" zero padding:
/// `out(i,j,f) = sum_{p,q,c} K(p,q,c,f) * pad(x)(i+p, j+q, c) + b(f)`.
pub fn conv2d_same<T: Scalar>(input: &Tensor<T>, kernel: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, h, w, c] = dims4(input, "conv2d_same")?;
    let [kh, kw, _, f] = kernel_dims(kernel, bias, c, "conv2d_same")?;
    let kk = kh * kw * c;
    let per = h * w;
    let step = chunk_samples(h, w, kk);
    let mut cols = vec![T::zero(); step.min(n) * per * kk];
    let mut out = vec![T::zero(); n * per * f];
    for b0 in (0..n).step_by(step) {
        let nb = step.min(n - b0);
        let x = &input.data()[b0 * per * c..(b0 + nb) * per * c];
        im2col(x, [nb, h, w, c], kh, kw, &mut cols);
        let o = &mut out[b0 * per * f..(b0 + nb) * per * f];
        T::gemm(nb * per, kk, f, &cols, false, kernel.data(), false, T::zero(), o);
    }
    add_bias_rows(&mut out, bias.data());
    Tensor::new(vec![n, h, w, f], out)
}

pub struct ParamGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_same_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input_grad: bool,
) -> Result<ParamGrads<T>> {
    let [n, h, w, c] = dims4(input, "conv2d_same_backward")?;
    let (kh, kw, f) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[3]);
    expect_shape(grad_out, &[n, h, w, f], "conv2d_same_backward", "grad_out")?;
    let kk = kh * kw * c;
    let per = h * w;
    let step = chunk_samples(h, w, kk);
    let mut cols = vec![T::zero(); step.min(n) * per * kk];
    let mut dcols = if need_input_grad { cols.clone() } else { Vec::new() };
    let mut dk = vec![T::zero(); kk * f];
    let mut dx = if need_input_grad {
        vec![T::zero(); input.len()]
    } else {
        Vec::new()
    };
    for b0 in (0..n).step_by(step) {
        let nb = step.min(n - b0);
        let rows = nb * per;
        let x = &input.data()[b0 * per * c..(b0 + nb) * per * c];
        let g = &grad_out.data()[b0 * per * f..(b0 + nb) * per * f];
        im2col(x, [nb, h, w, c], kh, kw, &mut cols);
        T::gemm(kk, rows, f, &cols, true, g, false, T::one(), &mut dk);
        if need_input_grad {
            T::gemm(rows, f, kk, g, false, kernel.data(), true, T::zero(), &mut dcols);
            let d = &mut dx[b0 * per * c..(b0 + nb) * per * c];
            col2im(&dcols, [nb, h, w, c], kh, kw, d);
        }
    }
    let db = column_sums(grad_out.data(), f);
    let input_grad = if need_input_grad {
        Some(Tensor::new(input.shape().to_vec(), dx)?)
    } else {
        None
    };
    Ok(ParamGrads {
        input: input_grad,
        weight: Tensor::new(kernel.shape().to_vec(), dk)?,
        bias: Tensor::new(vec![f], db)?,
    })
}

pub fn relu<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    t.map(|v| v.max(T::zero()))
}

/// Gradient through ReLU given its forward output.
pub fn relu_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| if y > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(output.shape().to_vec(), data).expect("same shape as output")
}

/// Max-shifted softmax of one logit vector.
pub fn softmax<T: Scalar>(logits: &[T]) -> Result<Vec<T>> {
    if logits.is_empty() {
        return Err(Error::shape("softmax", "empty logit vector"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("softmax", "non-finite logit"));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Row-wise softmax of an `n x K` tensor.
pub fn softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let k = *logits.shape().last().ok_or_else(|| Error::shape("softmax", "rank-0 tensor"))?;
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks_exact(k) {
        out.extend(softmax(row)?);
    }
    Tensor::new(logits.shape().to_vec(), out)
}

pub struct PoolOutput<T> {
    pub output: Tensor<T>,
    /// Flat input index of each output's maximum (first maximum in window
    /// scan order on ties).
    pub argmax: Vec<u32>,
}

pub fn maxpool_2x2<T: Scalar>(input: &Tensor<T>) -> Result<PoolOutput<T>> {
    let [n, h, w, c] = dims4(input, "maxpool_2x2")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape("maxpool_2x2", format!("spatial dims {h}x{w} must be even")));
    }
    if input.len() > u32::MAX as usize {
        return Err(Error::shape("maxpool_2x2", "input too large for 32-bit argmax"));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = vec![T::zero(); n * oh * ow * c];
    let mut argmax = vec![0u32; n * oh * ow * c];
    for b in 0..n {
        for i in 0..oh {
            for j in 0..ow {
                let base = ((b * oh + i) * ow + j) * c;
                let t0 = ((b * h + 2 * i) * w + 2 * j) * c;
                let o = &mut out[base..base + c];
                let a = &mut argmax[base..base + c];
                o.copy_from_slice(&x[t0..t0 + c]);
                for (ch, slot) in a.iter_mut().enumerate() {
                    *slot = (t0 + ch) as u32;
                }
                for t in [t0 + c, t0 + w * c, t0 + w * c + c] {
                    for ch in 0..c {
                        let v = x[t + ch];
                        let better = v > o[ch];
                        o[ch] = if better { v } else { o[ch] };
                        a[ch] = if better { (t + ch) as u32 } else { a[ch] };
                    }
                }
            }
        }
    }
    Ok(PoolOutput {
        output: Tensor::new(vec![n, oh, ow, c], out)?,
        argmax,
    })
}

pub fn maxpool_2x2_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[u32],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let mut dx = vec![T::zero(); input_shape.iter().product()];
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        let idx = idx as usize;
        dx[idx] = dx[idx] + g;
    }
    Tensor::new(input_shape.to_vec(), dx)
}

/// Transposed convolution with a 2x2 kernel and stride 2:
/// `out(2i+p, 2j+q, f) = sum_c K(p,q,c,f) * x(i,j,c) + b(f)`.
pub fn transposed_conv_s2<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let [n, h, w, c] = dims4(input, "transposed_conv_s2")?;
    let [kh, kw, _, f] = kernel_dims(kernel, bias, c, "transposed_conv_s2")?;
    if (kh, kw) != (2, 2) {
        return Err(Error::shape("transposed_conv_s2", format!("kernel must be 2x2, got {kh}x{kw}")));
    }
    let m = n * h * w;
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); n * oh * ow * f];
    let mut tap = vec![T::zero(); m * f];
    for p in 0..2 {
        for q in 0..2 {
            let k_pq = &kernel.data()[(p * 2 + q) * c * f..(p * 2 + q + 1) * c * f];
            T::gemm(m, c, f, input.data(), false, k_pq, false, T::zero(), &mut tap);
            for b in 0..n {
                for i in 0..h {
                    for j in 0..w {
                        let src = ((b * h + i) * w + j) * f;
                        let dst = ((b * oh + 2 * i + p) * ow + 2 * j + q) * f;
                        out[dst..dst + f].copy_from_slice(&tap[src..src + f]);
                    }
                }
            }
        }
    }
    add_bias_rows(&mut out, bias.data());
    Tensor::new(vec![n, oh, ow, f], out)
}

pub fn transposed_conv_s2_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input_grad: bool,
) -> Result<ParamGrads<T>> {
    let [n, h, w, c] = dims4(input, "transposed_conv_s2_backward")?;
    let f = kernel.shape()[3];
    let (oh, ow) = (2 * h, 2 * w);
    expect_shape(grad_out, &[n, oh, ow, f], "transposed_conv_s2_backward", "grad_out")?;
    let m = n * h * w;
    let g = grad_out.data();
    let mut dk = vec![T::zero(); 4 * c * f];
    let mut dx = vec![T::zero(); m * c];
    let mut tap = vec![T::zero(); m * f];
    for p in 0..2 {
        for q in 0..2 {
            for b in 0..n {
                for i in 0..h {
                    for j in 0..w {
                        let dst = ((b * h + i) * w + j) * f;
                        let src = ((b * oh + 2 * i + p) * ow + 2 * j + q) * f;
                        tap[dst..dst + f].copy_from_slice(&g[src..src + f]);
                    }
                }
            }
            let off = (p * 2 + q) * c * f;
            T::gemm(c, m, f, input.data(), true, &tap, false, T::zero(), &mut dk[off..off + c * f]);
            if need_input_grad {
                let k_pq = &kernel.data()[off..off + c * f];
                T::gemm(m, f, c, &tap, false, k_pq, true, T::one(), &mut dx);
            }
        }
    }
    Ok(ParamGrads {
        input: if need_input_grad {
            Some(Tensor::new(input.shape().to_vec(), dx)?)
        } else {
            None
        },
        weight: Tensor::new(kernel.shape().to_vec(), dk)?,
        bias: Tensor::new(vec![f], column_sums(g, f))?,
    })
}

/// Fully connected layer over a batch: `out = x W^T + b` with `x: n x in`,
/// `W: out x in`.
pub fn dense<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, fan_in) = match *input.shape() {
        [n, k] => (n, k),
        ref s => return Err(Error::shape("dense", format!("input must be n x in, got {s:?}"))),
    };
    let m = match *weight.shape() {
        [m, k] if k == fan_in => m,
        ref s => {
            return Err(Error::shape(
                "dense",
                format!("weight {s:?} incompatible with input width {fan_in}"),
            ))
        }
    };
    expect_shape(bias, &[m], "dense", "bias")?;
    let mut out = vec![T::zero(); n * m];
    T::gemm(n, fan_in, m, input.data(), false, weight.data(), true, T::zero(), &mut out);
    add_bias_rows(&mut out, bias.data());
    Tensor::new(vec![n, m], out)
}

pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input_grad: bool,
) -> Result<ParamGrads<T>> {
    let (n, fan_in) = (input.shape()[0], input.shape()[1]);
    let m = weight.shape()[0];
    expect_shape(grad_out, &[n, m], "dense_backward", "grad_out")?;
    let mut dw = vec![T::zero(); m * fan_in];
    T::gemm(m, n, fan_in, grad_out.data(), true, input.data(), false, T::zero(), &mut dw);
    let input_grad = if need_input_grad {
        let mut dx = vec![T::zero(); n * fan_in];
        T::gemm(n, m, fan_in, grad_out.data(), false, weight.data(), false, T::zero(), &mut dx);
        Some(Tensor::new(vec![n, fan_in], dx)?)
    } else {
        None
    };
    Ok(ParamGrads {
        input: input_grad,
        weight: Tensor::new(vec![m, fan_in], dw)?,
        bias: Tensor::new(vec![m], column_sums(grad_out.data(), m))?,
    })
}

/// Mean of squared differences over every element.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            "mse_loss",
            format!("{:?} vs {:?}", pred.shape(), target.shape()),
        ));
    }
    let sum: T = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    Ok(sum / T::of(pred.len() as f64))
}

pub fn mse_grad<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Tensor<T> {
    let scale = T::of(2.0 / pred.len() as f64);
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| scale * (p - t))
        .collect();
    Tensor::new(pred.shape().to_vec(), data).expect("same shape as pred")
}

fn check_rows<T: Scalar>(probs: &Tensor<T>, onehot: &Tensor<T>) -> Result<(usize, usize)> {
    if probs.shape() != onehot.shape() || probs.rank() != 2 {
        return Err(Error::shape(
            "cross_entropy",
            format!("{:?} vs {:?}", probs.shape(), onehot.shape()),
        ));
    }
    Ok((probs.shape()[0], probs.shape()[1]))
}

/// `-(1/n) sum_i sum_k y_ik ln(max(p_ik, 1e-12))`.
pub fn cross_entropy<T: Scalar>(probs: &Tensor<T>, onehot: &Tensor<T>) -> Result<T> {
    let (n, k) = check_rows(probs, onehot)?;
    let clamp = T::of(CE_CLAMP);
    let mut total = T::zero();
    for (row, y) in probs.data().chunks_exact(k).zip(onehot.data().chunks_exact(k)) {
        let s: T = row.iter().copied().sum();
        if (s - T::one()).abs() > T::of(1e-5) {
            return Err(Error::numeric("cross_entropy", format!("probability row sums to {s}")));
        }
        for (&p, &t) in row.iter().zip(y) {
            if t != T::zero() {
                total = total - t * p.max(clamp).ln();
            }
        }
    }
    Ok(total / T::of(n as f64))
}

/// Gradient of softmax followed by cross-entropy with respect to the logits:
/// `(p - y) / n`.
pub fn softmax_cross_entropy_grad<T: Scalar>(probs: &Tensor<T>, onehot: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, _) = check_rows(probs, onehot)?;
    let inv = T::of(1.0 / n as f64);
    let data = probs
        .data()
        .iter()
        .zip(onehot.data())
        .map(|(&p, &y)| (p - y) * inv)
        .collect();
    Tensor::new(probs.shape().to_vec(), data)
}
