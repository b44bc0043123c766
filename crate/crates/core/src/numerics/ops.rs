//! Forward kernels on plain tensors. The tape in [`super::tape`] wraps these
//! and adds the matching vector-Jacobian products.

use super::tensor::Tensor;
use crate::error::{Error, Result};

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(mismatch("matmul", a, b));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = ad[i * k + p];
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    let (m, n) = a.dims2()?;
    let d = a.data();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = d[i * n + j];
        }
    }
    Tensor::new(vec![n, m], out)
}

/// Row-wise softmax with max-subtraction.
pub fn softmax_rows(m: &Tensor) -> Result<Tensor> {
    let (r, c) = m.dims2()?;
    if c == 0 {
        return Err(Error::EmptyRow);
    }
    let mut out = m.data().to_vec();
    for i in 0..r {
        let row = &mut out[i * c..(i + 1) * c];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            total += *x;
        }
        for x in row.iter_mut() {
            *x /= total;
        }
    }
    Tensor::new(vec![r, c], out)
}

/// Output length of a valid (unpadded) temporal convolution.
pub fn conv1d_out_len(len: usize, width: usize, stride: usize) -> Result<usize> {
    if width > len {
        return Err(Error::KernelTooLong { width, len });
    }
    Ok((len - width) / stride + 1)
}

/// Valid temporal convolution of `x: [T, F_in]` with `kernels: [F_out, w, F_in]`.
pub fn conv1d(x: &Tensor, kernels: &Tensor, stride: usize) -> Result<Tensor> {
    let (t, f_in) = x.dims2()?;
    let [f_out, w, k_in] = kernels.shape()[..] else {
        return Err(mismatch("conv1d", x, kernels));
    };
    if k_in != f_in || stride == 0 {
        return Err(mismatch("conv1d", x, kernels));
    }
    let t_out = conv1d_out_len(t, w, stride)?;
    let (xd, kd) = (x.data(), kernels.data());
    let mut out = vec![0.0; t_out * f_out];
    for s in 0..t_out {
        let window = &xd[s * stride * f_in..(s * stride + w) * f_in];
        for o in 0..f_out {
            let kern = &kd[o * w * f_in..(o + 1) * w * f_in];
            out[s * f_out + o] = window.iter().zip(kern).map(|(a, b)| a * b).sum();
        }
    }
    Tensor::new(vec![t_out, f_out], out)
}

/// Column-wise mean over the time (row) axis.
pub fn mean_pool_time(seq: &Tensor) -> Result<Tensor> {
    let (t, d) = seq.dims2()?;
    if t == 0 {
        return Err(Error::EmptySequence);
    }
    let mut out = vec![0.0; d];
    for i in 0..t {
        for (o, v) in out.iter_mut().zip(seq.row(i)) {
            *o += v;
        }
    }
    let inv = t as f64;
    out.iter_mut().for_each(|o| *o /= inv);
    Tensor::new(vec![1, d], out)
}

/// Numerically stable log-softmax of a single logit row.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|x| x - lse).collect()
}

/// `-log softmax(logits)[label]` for a `1×C` logit row.
pub fn cross_entropy(logits: &Tensor, label: usize) -> Result<f64> {
    let (r, c) = logits.dims2()?;
    if r != 1 {
        return Err(Error::ShapeMismatch {
            op: "cross_entropy",
            left: logits.shape().to_vec(),
            right: vec![1, c],
        });
    }
    if label >= c {
        return Err(Error::LabelOutOfRange { label, classes: c });
    }
    Ok(-log_softmax(logits.data())[label])
}

pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or(Error::EmptySequence)?;
    let rows = first.dims2()?.0;
    let mut widths = Vec::with_capacity(parts.len());
    for p in parts {
        let (r, c) = p.dims2()?;
        if r != rows {
            return Err(mismatch("concat_cols", first, p));
        }
        widths.push(c);
    }
    let total: usize = widths.iter().sum();
    let mut out = Vec::with_capacity(rows * total);
    for i in 0..rows {
        for p in parts {
            out.extend_from_slice(p.row(i));
        }
    }
    Tensor::new(vec![rows, total], out)
}

/// Adds a `1×n` bias row to every row of an `m×n` matrix.
pub fn add_row(a: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (m, n) = a.dims2()?;
    if bias.shape() != [1, n] {
        return Err(mismatch("add_row", a, bias));
    }
    let b = bias.data();
    let mut out = a.data().to_vec();
    for i in 0..m {
        for (o, bv) in out[i * n..(i + 1) * n].iter_mut().zip(b) {
            *o += bv;
        }
    }
    Tensor::new(vec![m, n], out)
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
