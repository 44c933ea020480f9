//! The double-attention block.
//!
//! For an input map `X` (`c × L`), three pointwise convolutions produce
//! `A = W_φ·X` (`m × L`), gathering logits `W_θ·X` (`n × L`) and distribution
//! logits `W_ρ·X` (`n × L`). The gathering logits are normalized over
//! locations (each row of `B` is an attention map), the distribution logits
//! over the bag (each column of `V` sums to one). The block computes
//!
//! ```text
//! Z   = A · Bᵀ · V          (m × L)
//! out = X + W_out · Z       (c × L)
//! ```
//!
//! `(A·Bᵀ)·V` materializes the `m × n` bag of global descriptors; `A·(Bᵀ·V)`
//! materializes an `L × L` relation matrix instead. Both give the same `Z`.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::cost::choose_association;
use crate::scalar::Scalar;
use crate::tensor::{
    self, conv_pointwise, matmul, softmax_cols, softmax_rows, Init, Matrix, SeededStream,
    TensorError,
};

/// Reduction ratio used for `m` and `n` when they are not given explicitly.
pub const DEFAULT_REDUCTION: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum BlockError {
    Tensor(TensorError),
    /// Input channel count differs from the parameters' `c`.
    ChannelMismatch {
        expected: usize,
        actual: usize,
    },
    /// Bag size of the gathered globals differs from the logit rows.
    BagMismatch {
        expected: usize,
        actual: usize,
    },
    /// Two operands disagree on the number of locations.
    LocationMismatch {
        expected: usize,
        actual: usize,
    },
    /// `c` is not divisible by the requested reduction ratio.
    Indivisible {
        channels: usize,
        reduction: usize,
    },
    /// The projection maps do not fit together.
    InconsistentParams(&'static str),
}

impl fmt::Display for BlockError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Tensor(e) => write!(f, "{e}"),
            Self::ChannelMismatch { expected, actual } => {
                write!(f, "input has {actual} channels, block expects {expected}")
            }
            Self::BagMismatch { expected, actual } => {
                write!(f, "bag size mismatch: expected {expected}, got {actual}")
            }
            Self::LocationMismatch { expected, actual } => {
                write!(
                    f,
                    "location count mismatch: expected {expected}, got {actual}"
                )
            }
            Self::Indivisible {
                channels,
                reduction,
            } => write!(
                f,
                "{channels} channels not divisible by reduction {reduction}"
            ),
            Self::InconsistentParams(what) => write!(f, "inconsistent block parameters: {what}"),
        }
    }
}

impl core::error::Error for BlockError {}

impl From<TensorError> for BlockError {
    fn from(e: TensorError) -> Self {
        Self::Tensor(e)
    }
}

/// Parenthesization of `A·Bᵀ·V` requested by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssociationOrder {
    Left,
    Right,
    /// Pick the cheaper order from the cost model.
    #[default]
    Auto,
}

/// A concrete parenthesization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Association {
    /// `(A·Bᵀ)·V`
    Left,
    /// `A·(Bᵀ·V)`
    Right,
}

impl AssociationOrder {
    pub fn resolve(self, m: usize, n: usize, locations: usize) -> Association {
        match self {
            Self::Left => Association::Left,
            Self::Right => Association::Right,
            Self::Auto => choose_association(m, n, locations),
        }
    }
}

impl From<Association> for AssociationOrder {
    fn from(a: Association) -> Self {
        match a {
            Association::Left => Self::Left,
            Association::Right => Self::Right,
        }
    }
}

impl fmt::Display for Association {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Left => "left",
            Self::Right => "right",
        })
    }
}

impl fmt::Display for AssociationOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Left => "left",
            Self::Right => "right",
            Self::Auto => "auto",
        })
    }
}

/// Learnable maps of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleAttentionParams<T> {
    /// `m × c`, produces the features `A`.
    pub w_phi: Matrix<T>,
    /// `n × c`, produces the gathering logits.
    pub w_theta: Matrix<T>,
    /// `n × c`, produces the distribution logits.
    pub w_rho: Matrix<T>,
    /// `c × m`, expands `Z` back to `c` channels.
    pub w_out: Matrix<T>,
    pub b_phi: Option<Vec<T>>,
    pub b_theta: Option<Vec<T>>,
    pub b_rho: Option<Vec<T>>,
    pub b_out: Option<Vec<T>>,
}

fn check_bias<T>(b: &Option<Vec<T>>, len: usize, what: &'static str) -> Result<(), BlockError> {
    match b {
        Some(v) if v.len() != len => Err(BlockError::InconsistentParams(what)),
        _ => Ok(()),
    }
}

impl<T: Scalar> DoubleAttentionParams<T> {
    /// Bias-free parameters from explicit weights.
    pub fn new(
        w_phi: Matrix<T>,
        w_theta: Matrix<T>,
        w_rho: Matrix<T>,
        w_out: Matrix<T>,
    ) -> Result<Self, BlockError> {
        let p = Self {
            w_phi,
            w_theta,
            w_rho,
            w_out,
            b_phi: None,
            b_theta: None,
            b_rho: None,
            b_out: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), BlockError> {
        let c = self.w_phi.cols();
        let m = self.w_phi.rows();
        let n = self.w_theta.rows();
        if self.w_theta.cols() != c || self.w_rho.cols() != c {
            return Err(BlockError::InconsistentParams(
                "input channels differ between maps",
            ));
        }
        if self.w_rho.rows() != n {
            return Err(BlockError::InconsistentParams(
                "theta and rho bag sizes differ",
            ));
        }
        if self.w_out.dims() != (c, m) {
            return Err(BlockError::InconsistentParams("w_out must be c x m"));
        }
        check_bias(&self.b_phi, m, "b_phi length")?;
        check_bias(&self.b_theta, n, "b_theta length")?;
        check_bias(&self.b_rho, n, "b_rho length")?;
        check_bias(&self.b_out, c, "b_out length")?;
        Ok(())
    }

    /// Freshly inserted block: `W_φ, W_θ, W_ρ ~ N(0, 1/√c)`, `W_out = 0`, no
    /// biases. The block is then an exact identity map.
    pub fn init(c: usize, m: usize, n: usize, seed: u64) -> Result<Self, BlockError> {
        let mut stream = SeededStream::new(seed);
        let [w_phi, w_theta, w_rho] = Self::draw_inputs(&mut stream, c, m, n)?;
        Self::new(w_phi, w_theta, w_rho, Matrix::zeros(c, m))
    }

    /// `m = n = c / reduction`.
    pub fn init_reduced(c: usize, reduction: usize, seed: u64) -> Result<Self, BlockError> {
        if reduction == 0 || !c.is_multiple_of(reduction) || c < reduction {
            return Err(BlockError::Indivisible {
                channels: c,
                reduction,
            });
        }
        Self::init(c, c / reduction, c / reduction, seed)
    }

    /// All four maps random (`W_out ~ N(0, 1/√m)`), optionally with random
    /// biases. Used for verification where a zero `W_out` would hide the core.
    pub fn init_dense(
        c: usize,
        m: usize,
        n: usize,
        seed: u64,
        biases: bool,
    ) -> Result<Self, BlockError> {
        let mut stream = SeededStream::new(seed);
        let [w_phi, w_theta, w_rho] = Self::draw_inputs(&mut stream, c, m, n)?;
        let out_std = 1.0 / libm::sqrt(m as f64);
        let w_out = Init::Normal { std: out_std }.matrix_from(&mut stream, c, m)?;
        let mut p = Self::new(w_phi, w_theta, w_rho, w_out)?;
        if biases {
            let init = Init::Uniform { scale: 0.5 };
            let mut draw = |len| -> Result<Vec<T>, TensorError> {
                Ok(init.matrix_from::<T>(&mut stream, 1, len)?.into_vec())
            };
            p.b_phi = Some(draw(m)?);
            p.b_theta = Some(draw(n)?);
            p.b_rho = Some(draw(n)?);
            p.b_out = Some(draw(c)?);
        }
        Ok(p)
    }

    fn draw_inputs(
        stream: &mut SeededStream,
        c: usize,
        m: usize,
        n: usize,
    ) -> Result<[Matrix<T>; 3], BlockError> {
        if c == 0 || m == 0 || n == 0 {
            return Err(TensorError::ZeroExtent.into());
        }
        let init = Init::Normal {
            std: 1.0 / libm::sqrt(c as f64),
        };
        Ok([
            init.matrix_from(stream, m, c)?,
            init.matrix_from(stream, n, c)?,
            init.matrix_from(stream, n, c)?,
        ])
    }

    /// Input (and output) channel count.
    pub fn c(&self) -> usize {
        self.w_phi.cols()
    }

    /// Feature dimension of the gathered globals.
    pub fn m(&self) -> usize {
        self.w_phi.rows()
    }

    /// Bag size.
    pub fn n(&self) -> usize {
        self.w_theta.rows()
    }

    pub fn has_biases(&self) -> bool {
        self.b_phi.is_some()
            || self.b_theta.is_some()
            || self.b_rho.is_some()
            || self.b_out.is_some()
    }

    /// Number of learnable scalars.
    pub fn param_count(&self) -> usize {
        let bias = |b: &Option<Vec<T>>| b.as_ref().map_or(0, Vec::len);
        self.w_phi.as_slice().len()
            + self.w_theta.as_slice().len()
            + self.w_rho.as_slice().len()
            + self.w_out.as_slice().len()
            + bias(&self.b_phi)
            + bias(&self.b_theta)
            + bias(&self.b_rho)
            + bias(&self.b_out)
    }

    pub fn cast<U: Scalar>(&self) -> DoubleAttentionParams<U> {
        let cb = |b: &Option<Vec<T>>| {
            b.as_ref()
                .map(|v| v.iter().map(|x| U::from_f64(x.as_f64())).collect())
        };
        DoubleAttentionParams {
            w_phi: self.w_phi.cast(),
            w_theta: self.w_theta.cast(),
            w_rho: self.w_rho.cast(),
            w_out: self.w_out.cast(),
            b_phi: cb(&self.b_phi),
            b_theta: cb(&self.b_theta),
            b_rho: cb(&self.b_rho),
            b_out: cb(&self.b_out),
        }
    }
}

/// The bag of `n` global descriptors, one per column of an `m × n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GatheredGlobals<T> {
    g: Matrix<T>,
}

impl<T: Scalar> GatheredGlobals<T> {
    pub fn matrix(&self) -> &Matrix<T> {
        &self.g
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.g
    }

    pub fn feature_dim(&self) -> usize {
        self.g.rows()
    }

    pub fn bag_size(&self) -> usize {
        self.g.cols()
    }

    /// Descriptor `g_i` as a vector of length `m`.
    pub fn descriptor(&self, i: usize) -> Vec<T> {
        self.g.column(i)
    }
}

/// Second-order attention pooling: `G = A · softmax_rows(B)ᵀ`.
pub fn gather<T: Scalar>(
    a: &Matrix<T>,
    b_logits: &Matrix<T>,
) -> Result<GatheredGlobals<T>, BlockError> {
    if a.cols() != b_logits.cols() {
        return Err(BlockError::LocationMismatch {
            expected: a.cols(),
            actual: b_logits.cols(),
        });
    }
    let b = softmax_rows(b_logits)?;
    Ok(GatheredGlobals {
        g: matmul(a, &b.transpose())?,
    })
}

/// Attention-weighted distribution: `Z = G · softmax_cols(V)`.
pub fn distribute<T: Scalar>(
    g: &GatheredGlobals<T>,
    v_logits: &Matrix<T>,
) -> Result<Matrix<T>, BlockError> {
    if g.bag_size() != v_logits.rows() {
        return Err(BlockError::BagMismatch {
            expected: g.bag_size(),
            actual: v_logits.rows(),
        });
    }
    let v = softmax_cols(v_logits)?;
    Ok(matmul(&g.g, &v)?)
}

/// Pairwise relation matrix `R = softmax_rows(B)ᵀ · softmax_cols(V)` (`L × L`).
/// Every column of `R` sums to one, and `A·R` equals the block core.
pub fn relation_matrix<T: Scalar>(
    b_logits: &Matrix<T>,
    v_logits: &Matrix<T>,
) -> Result<Matrix<T>, BlockError> {
    if b_logits.rows() != v_logits.rows() {
        return Err(BlockError::BagMismatch {
            expected: b_logits.rows(),
            actual: v_logits.rows(),
        });
    }
    if b_logits.cols() != v_logits.cols() {
        return Err(BlockError::LocationMismatch {
            expected: b_logits.cols(),
            actual: v_logits.cols(),
        });
    }
    let b = softmax_rows(b_logits)?;
    let v = softmax_cols(v_logits)?;
    Ok(matmul(&b.transpose(), &v)?)
}

/// The first product kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub enum FirstProduct<T> {
    /// `G = A·Bᵀ`, `m × n`.
    Gathered(Matrix<T>),
    /// `R = Bᵀ·V`, `L × L`.
    Relation(Matrix<T>),
}

/// Forward state retained for the analytic backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCache<T> {
    pub x: Matrix<T>,
    pub a: Matrix<T>,
    /// `softmax_rows(W_θ·X)`
    pub b: Matrix<T>,
    /// `softmax_cols(W_ρ·X)`
    pub v: Matrix<T>,
    pub first: FirstProduct<T>,
    /// Pre-projection output, `m × L`.
    pub z: Matrix<T>,
    pub order: Association,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockForward<T> {
    pub output: Matrix<T>,
    pub cache: BlockCache<T>,
    /// Multiply-adds executed by the convolutions and matrix products.
    pub macs: u64,
}

struct Macs(u64);

impl Macs {
    fn matmul<T: Scalar>(
        &mut self,
        a: &Matrix<T>,
        b: &Matrix<T>,
    ) -> Result<Matrix<T>, TensorError> {
        let out = matmul(a, b)?;
        self.0 += (a.rows() * a.cols() * b.cols()) as u64;
        Ok(out)
    }

    fn conv<T: Scalar>(
        &mut self,
        x: &Matrix<T>,
        w: &Matrix<T>,
        b: &Option<Vec<T>>,
    ) -> Result<Matrix<T>, TensorError> {
        let out = conv_pointwise(x, w, b.as_deref())?;
        self.0 += (w.rows() * w.cols() * x.cols()) as u64;
        Ok(out)
    }
}

fn core_forward<T: Scalar>(
    x: &Matrix<T>,
    params: &DoubleAttentionParams<T>,
    order: AssociationOrder,
    macs: &mut Macs,
) -> Result<BlockCache<T>, BlockError> {
    params.validate()?;
    if x.rows() != params.c() {
        return Err(BlockError::ChannelMismatch {
            expected: params.c(),
            actual: x.rows(),
        });
    }
    let order = order.resolve(params.m(), params.n(), x.cols());
    let a = macs.conv(x, &params.w_phi, &params.b_phi)?;
    let b = softmax_rows(&macs.conv(x, &params.w_theta, &params.b_theta)?)?;
    let v = softmax_cols(&macs.conv(x, &params.w_rho, &params.b_rho)?)?;
    let bt = b.transpose();
    let (first, z) = match order {
        Association::Left => {
            let g = macs.matmul(&a, &bt)?;
            let z = macs.matmul(&g, &v)?;
            (FirstProduct::Gathered(g), z)
        }
        Association::Right => {
            let r = macs.matmul(&bt, &v)?;
            let z = macs.matmul(&a, &r)?;
            (FirstProduct::Relation(r), z)
        }
    };
    Ok(BlockCache {
        x: x.clone(),
        a,
        b,
        v,
        first,
        z,
        order,
    })
}

/// Gather-distribute core without the output projection or residual:
/// `Z = W_φX · softmax_rows(W_θX)ᵀ · softmax_cols(W_ρX)`.
pub fn double_attention_core<T: Scalar>(
    x: &Matrix<T>,
    params: &DoubleAttentionParams<T>,
    order: AssociationOrder,
) -> Result<Matrix<T>, BlockError> {
    Ok(core_forward(x, params, order, &mut Macs(0))?.z)
}

/// Full block: `X + W_out·Z (+ b_out)`. `Auto` resolves through
/// [`choose_association`] using the operand shapes.
pub fn double_attention_forward<T: Scalar>(
    x: &Matrix<T>,
    params: &DoubleAttentionParams<T>,
    order: AssociationOrder,
) -> Result<BlockForward<T>, BlockError> {
    let mut macs = Macs(0);
    let cache = core_forward(x, params, order, &mut macs)?;
    let projected = macs.conv(&cache.z, &params.w_out, &params.b_out)?;
    let output = tensor::add(x, &projected)?;
    Ok(BlockForward {
        output,
        cache,
        macs: macs.0,
    })
}
