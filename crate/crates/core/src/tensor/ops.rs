use alloc::vec::Vec;

use super::{Matrix, TensorError};
use crate::scalar::Scalar;

fn ensure_finite<T: Scalar>(op: &'static str, m: &Matrix<T>) -> Result<(), TensorError> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

/// `lhs (m×k) · rhs (k×n)`.
pub fn matmul<T: Scalar>(lhs: &Matrix<T>, rhs: &Matrix<T>) -> Result<Matrix<T>, TensorError> {
    if lhs.cols != rhs.rows {
        return Err(TensorError::ShapeMismatch {
            op: "matmul",
            lhs: lhs.dims(),
            rhs: rhs.dims(),
        });
    }
    let (m, k, n) = (lhs.rows, lhs.cols, rhs.cols);
    let mut out = alloc::vec![T::zero(); m * n];
    // i-k-j order keeps both the rhs row and the output row contiguous.
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        let lhs_row = &lhs.data[i * k..(i + 1) * k];
        for (p, &a) in lhs_row.iter().enumerate() {
            let rhs_row = &rhs.data[p * n..(p + 1) * n];
            for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                *o += a * b;
            }
        }
    }
    let out = Matrix {
        rows: m,
        cols: n,
        data: out,
    };
    ensure_finite("matmul", &out)?;
    Ok(out)
}

fn softmax_inplace<T: Scalar>(v: &mut [T]) {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    let inv = T::one() / sum;
    for x in v.iter_mut() {
        *x *= inv;
    }
}

/// Softmax along each row (over the `L` locations for an `n × L` logit map).
pub fn softmax_rows<T: Scalar>(m: &Matrix<T>) -> Result<Matrix<T>, TensorError> {
    ensure_finite("softmax_rows", m)?;
    let mut out = m.clone();
    for row in out.data.chunks_mut(m.cols) {
        softmax_inplace(row);
    }
    Ok(out)
}

/// Softmax along each column (over the bag dimension for an `n × L` map).
pub fn softmax_cols<T: Scalar>(m: &Matrix<T>) -> Result<Matrix<T>, TensorError> {
    ensure_finite("softmax_cols", m)?;
    let (rows, cols) = m.dims();
    let mut max = alloc::vec![T::neg_infinity(); cols];
    for row in m.data.chunks(cols) {
        for (mx, &v) in max.iter_mut().zip(row) {
            *mx = mx.max(v);
        }
    }
    let mut data: Vec<T> = Vec::with_capacity(rows * cols);
    let mut sum = alloc::vec![T::zero(); cols];
    for row in m.data.chunks(cols) {
        for ((&v, &mx), s) in row.iter().zip(&max).zip(sum.iter_mut()) {
            let e = (v - mx).exp();
            *s += e;
            data.push(e);
        }
    }
    for row in data.chunks_mut(cols) {
        for (x, &s) in row.iter_mut().zip(&sum) {
            *x /= s;
        }
    }
    Ok(Matrix { rows, cols, data })
}

/// 1×1×1 convolution on a `c_in × L` map: `W·X (+ b)` broadcast over locations.
pub fn conv_pointwise<T: Scalar>(
    x: &Matrix<T>,
    w: &Matrix<T>,
    bias: Option<&[T]>,
) -> Result<Matrix<T>, TensorError> {
    if w.cols != x.rows {
        return Err(TensorError::ShapeMismatch {
            op: "conv_pointwise",
            lhs: w.dims(),
            rhs: x.dims(),
        });
    }
    let mut out = matmul(w, x)?;
    if let Some(b) = bias {
        if b.len() != w.rows {
            return Err(TensorError::ElementCount {
                expected: w.rows,
                actual: b.len(),
            });
        }
        for (row, &bv) in out.data.chunks_mut(out.cols).zip(b) {
            for v in row {
                *v += bv;
            }
        }
        ensure_finite("conv_pointwise", &out)?;
    }
    Ok(out)
}

/// Elementwise sum of two equally shaped matrices.
pub fn add<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>, TensorError> {
    let out = a.zip_with("add", b, |x, y| x + y)?;
    ensure_finite("add", &out)?;
    Ok(out)
}
