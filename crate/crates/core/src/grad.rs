//! Analytic backward passes and a central finite-difference oracle.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::attention::{BlockCache, BlockError, DoubleAttentionParams, FirstProduct};
use crate::scalar::Scalar;
use crate::tensor::{matmul, Matrix, TensorError};

pub mod check;

/// Step used by every finite-difference comparison.
pub const FD_EPSILON: f64 = 1e-5;
/// References smaller than this are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-8;

fn same_dims<T: Scalar>(op: &'static str, a: &Matrix<T>, b: &Matrix<T>) -> Result<(), TensorError> {
    if a.dims() == b.dims() {
        Ok(())
    } else {
        Err(TensorError::ShapeMismatch {
            op,
            lhs: a.dims(),
            rhs: b.dims(),
        })
    }
}

/// Adjoint of `C = A·B`: returns `(dC·Bᵀ, Aᵀ·dC)`.
pub fn backward_matmul<T: Scalar>(
    upstream: &Matrix<T>,
    lhs: &Matrix<T>,
    rhs: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>), TensorError> {
    if upstream.dims() != (lhs.rows(), rhs.cols()) || lhs.cols() != rhs.rows() {
        return Err(TensorError::ShapeMismatch {
            op: "backward_matmul",
            lhs: lhs.dims(),
            rhs: rhs.dims(),
        });
    }
    Ok((
        matmul(upstream, &rhs.transpose())?,
        matmul(&lhs.transpose(), upstream)?,
    ))
}

/// Adjoint of a row-wise softmax given its output `s`:
/// `s ⊙ (du − ⟨du, s⟩_row)`.
pub fn backward_softmax_rows<T: Scalar>(
    upstream: &Matrix<T>,
    softmaxed: &Matrix<T>,
) -> Result<Matrix<T>, TensorError> {
    same_dims("backward_softmax_rows", upstream, softmaxed)?;
    let cols = softmaxed.cols();
    let mut out = Matrix::zeros(softmaxed.rows(), cols);
    for r in 0..softmaxed.rows() {
        let (du, s) = (upstream.row(r), softmaxed.row(r));
        let dot: T = du.iter().zip(s).map(|(&a, &b)| a * b).sum();
        for c in 0..cols {
            out.set(r, c, s[c] * (du[c] - dot));
        }
    }
    Ok(out)
}

/// Adjoint of a column-wise softmax given its output `s`.
pub fn backward_softmax_cols<T: Scalar>(
    upstream: &Matrix<T>,
    softmaxed: &Matrix<T>,
) -> Result<Matrix<T>, TensorError> {
    same_dims("backward_softmax_cols", upstream, softmaxed)?;
    let (rows, cols) = softmaxed.dims();
    let mut dot = alloc::vec![T::zero(); cols];
    for r in 0..rows {
        for (c, d) in dot.iter_mut().enumerate() {
            *d += upstream.get(r, c) * softmaxed.get(r, c);
        }
    }
    Ok(Matrix::from_fn(rows, cols, |r, c| {
        softmaxed.get(r, c) * (upstream.get(r, c) - dot[c])
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Matrix<T>,
    pub weight: Matrix<T>,
    /// Gradient of a (possibly absent) bias; always computed.
    pub bias: Vec<T>,
}

/// Adjoint of `Y = W·X + b`.
pub fn backward_conv_pointwise<T: Scalar>(
    upstream: &Matrix<T>,
    x: &Matrix<T>,
    w: &Matrix<T>,
) -> Result<ConvGrads<T>, TensorError> {
    if upstream.dims() != (w.rows(), x.cols()) || w.cols() != x.rows() {
        return Err(TensorError::ShapeMismatch {
            op: "backward_conv_pointwise",
            lhs: w.dims(),
            rhs: x.dims(),
        });
    }
    let (weight, input) = backward_matmul(upstream, w, x)?;
    let bias = (0..upstream.rows())
        .map(|r| upstream.row(r).iter().copied().sum())
        .collect();
    Ok(ConvGrads {
        input,
        weight,
        bias,
    })
}

/// Gradients of the fused block with respect to its input and every map.
/// Bias gradients are `Some` exactly when the corresponding bias exists.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGradients<T> {
    pub x: Matrix<T>,
    pub w_phi: Matrix<T>,
    pub w_theta: Matrix<T>,
    pub w_rho: Matrix<T>,
    pub w_out: Matrix<T>,
    pub b_phi: Option<Vec<T>>,
    pub b_theta: Option<Vec<T>>,
    pub b_rho: Option<Vec<T>>,
    pub b_out: Option<Vec<T>>,
}

fn keep_if<T>(present: &Option<Vec<T>>, grad: Vec<T>) -> Option<Vec<T>> {
    present.as_ref().map(|_| grad)
}

fn accumulate<T: Scalar>(into: &mut Matrix<T>, add: &Matrix<T>) {
    for (a, &b) in into.as_mut_slice().iter_mut().zip(add.as_slice()) {
        *a += b;
    }
}

/// Backward pass through `X + W_out·(A·Bᵀ·V) + b_out`, following whichever
/// association the cached forward used.
pub fn backward_block<T: Scalar>(
    upstream: &Matrix<T>,
    cache: &BlockCache<T>,
    params: &DoubleAttentionParams<T>,
) -> Result<BlockGradients<T>, BlockError> {
    if upstream.dims() != cache.x.dims() {
        return Err(TensorError::ShapeMismatch {
            op: "backward_block",
            lhs: upstream.dims(),
            rhs: cache.x.dims(),
        }
        .into());
    }
    if cache.x.rows() != params.c() || cache.a.rows() != params.m() || cache.b.rows() != params.n()
    {
        return Err(BlockError::InconsistentParams(
            "cache does not match parameters",
        ));
    }

    let out = backward_conv_pointwise(upstream, &cache.z, &params.w_out)?;
    let dz = out.input;
    let bt = cache.b.transpose();
    let (da, db_t, dv) = match &cache.first {
        FirstProduct::Gathered(g) => {
            let (dg, dv) = backward_matmul(&dz, g, &cache.v)?;
            let (da, db_t) = backward_matmul(&dg, &cache.a, &bt)?;
            (da, db_t, dv)
        }
        FirstProduct::Relation(r) => {
            let (da, dr) = backward_matmul(&dz, &cache.a, r)?;
            let (db_t, dv) = backward_matmul(&dr, &bt, &cache.v)?;
            (da, db_t, dv)
        }
    };
    let d_theta_logits = backward_softmax_rows(&db_t.transpose(), &cache.b)?;
    let d_rho_logits = backward_softmax_cols(&dv, &cache.v)?;

    let phi = backward_conv_pointwise(&da, &cache.x, &params.w_phi)?;
    let theta = backward_conv_pointwise(&d_theta_logits, &cache.x, &params.w_theta)?;
    let rho = backward_conv_pointwise(&d_rho_logits, &cache.x, &params.w_rho)?;

    let mut dx = upstream.clone();
    accumulate(&mut dx, &phi.input);
    accumulate(&mut dx, &theta.input);
    accumulate(&mut dx, &rho.input);

    Ok(BlockGradients {
        x: dx,
        w_phi: phi.weight,
        w_theta: theta.weight,
        w_rho: rho.weight,
        w_out: out.weight,
        b_phi: keep_if(&params.b_phi, phi.bias),
        b_theta: keep_if(&params.b_theta, theta.bias),
        b_rho: keep_if(&params.b_rho, rho.bias),
        b_out: keep_if(&params.b_out, out.bias),
    })
}

/// Central differences `(f(x+εe) − f(x−εe)) / 2ε`, one element at a time.
pub fn finite_difference<F>(f: F, x: &Matrix<f64>, eps: f64) -> Matrix<f64>
where
    F: Fn(&Matrix<f64>) -> f64,
{
    let mut probe = x.clone();
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.as_slice().len() {
        let orig = x.as_slice()[i];
        probe.as_mut_slice()[i] = orig + eps;
        let plus = f(&probe);
        probe.as_mut_slice()[i] = orig - eps;
        let minus = f(&probe);
        probe.as_mut_slice()[i] = orig;
        grad.as_mut_slice()[i] = (plus - minus) / (2.0 * eps);
    }
    grad
}

/// Outcome of one analytic-vs-reference gradient comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    pub op: String,
    pub slot: String,
    pub seed: u64,
    /// Over elements whose reference magnitude exceeds `floor`.
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub tolerance: f64,
    pub floor: f64,
    pub pass: bool,
}

impl GradReport {
    /// Passes when every element with `|reference| > floor` has relative
    /// error `≤ tolerance` and every other element has absolute error
    /// `≤ tolerance`.
    pub fn compare(
        op: &str,
        slot: &str,
        seed: u64,
        analytic: &[f64],
        reference: &[f64],
        tolerance: f64,
        floor: f64,
    ) -> Self {
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        let mut pass = analytic.len() == reference.len();
        for (&a, &r) in analytic.iter().zip(reference) {
            let abs = (a - r).abs();
            max_abs = max_abs.max(abs);
            if r.abs() > floor {
                let rel = abs / r.abs();
                max_rel = max_rel.max(rel);
                pass &= rel <= tolerance;
            } else {
                pass &= abs <= tolerance;
            }
            pass &= a.is_finite();
        }
        Self {
            op: op.to_string(),
            slot: slot.to_string(),
            seed,
            max_rel_err: max_rel,
            max_abs_err: max_abs,
            tolerance,
            floor,
            pass,
        }
    }
}
