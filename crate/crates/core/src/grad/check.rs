//! Seeded gradient checks: every analytic adjoint against central
//! differences in `f64`.
//!
//! Each check evaluates a scalar probe `f = Σ U ⊙ y` of the op output `y`, so
//! `U` is the upstream gradient. Primitives use a random `U`; the block and
//! the tiny network use the plain sum of outputs (`U = 1`).

use alloc::vec::Vec;

use super::{
    backward_block, backward_conv_pointwise, backward_matmul, backward_softmax_cols,
    backward_softmax_rows, finite_difference, GradReport, FD_EPSILON, REL_FLOOR,
};
use crate::attention::{
    double_attention_forward, AssociationOrder, BlockError, DoubleAttentionParams,
};
use crate::backbone::tiny::{
    materialize_tiny, tiny_descriptor, LayerGradients, TinyInit, TinyLayer, TinyNet,
};
use crate::backbone::ArchError;
use crate::tensor::{
    conv_pointwise, matmul, softmax_cols, softmax_rows, Init, Matrix, Shape4, TensorError,
};

/// Relative tolerance for single primitives.
pub const PRIMITIVE_TOLERANCE: f64 = 1e-6;
/// Relative tolerance for the fused block and composed networks.
pub const COMPOSED_TOLERANCE: f64 = 1e-5;
/// Absolute agreement required between left- and right-order gradients.
pub const ORDER_TOLERANCE: f64 = 1e-10;

fn normal(rows: usize, cols: usize, seed: u64, std: f64) -> Result<Matrix<f64>, TensorError> {
    Init::Normal { std }.matrix(rows, cols, seed)
}

fn probe(upstream: &Matrix<f64>, y: Result<Matrix<f64>, impl Sized>) -> f64 {
    match y {
        Ok(y) => upstream
            .as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(u, v)| u * v)
            .sum(),
        Err(_) => f64::NAN,
    }
}

fn row(v: &[f64]) -> Matrix<f64> {
    Matrix::new(1, v.len(), v.to_vec()).expect("non-empty vector")
}

/// Checks `matmul`, `softmax_rows`, `softmax_cols` and `conv_pointwise`.
pub fn primitives(seed: u64) -> Result<Vec<GradReport>, TensorError> {
    let s = seed.wrapping_mul(1000);
    let tol = PRIMITIVE_TOLERANCE;
    let mut out = Vec::new();

    let a = normal(4, 5, s + 1, 1.0)?;
    let b = normal(5, 3, s + 2, 1.0)?;
    let u = normal(4, 3, s + 3, 1.0)?;
    let (da, db) = backward_matmul(&u, &a, &b)?;
    let fa = finite_difference(|x| probe(&u, matmul(x, &b)), &a, FD_EPSILON);
    let fb = finite_difference(|x| probe(&u, matmul(&a, x)), &b, FD_EPSILON);
    out.push(GradReport::compare(
        "matmul",
        "lhs",
        seed,
        da.as_slice(),
        fa.as_slice(),
        tol,
        REL_FLOOR,
    ));
    out.push(GradReport::compare(
        "matmul",
        "rhs",
        seed,
        db.as_slice(),
        fb.as_slice(),
        tol,
        REL_FLOOR,
    ));

    let x = normal(3, 6, s + 4, 1.5)?;
    let u = normal(3, 6, s + 5, 1.0)?;
    let dx = backward_softmax_rows(&u, &softmax_rows(&x)?)?;
    let fx = finite_difference(|x| probe(&u, softmax_rows(x)), &x, FD_EPSILON);
    out.push(GradReport::compare(
        "softmax_rows",
        "input",
        seed,
        dx.as_slice(),
        fx.as_slice(),
        tol,
        REL_FLOOR,
    ));

    let dx = backward_softmax_cols(&u, &softmax_cols(&x)?)?;
    let fx = finite_difference(|x| probe(&u, softmax_cols(x)), &x, FD_EPSILON);
    out.push(GradReport::compare(
        "softmax_cols",
        "input",
        seed,
        dx.as_slice(),
        fx.as_slice(),
        tol,
        REL_FLOOR,
    ));

    let x = normal(4, 7, s + 6, 1.0)?;
    let w = normal(3, 4, s + 7, 1.0)?;
    let bias = normal(1, 3, s + 8, 1.0)?;
    let u = normal(3, 7, s + 9, 1.0)?;
    let g = backward_conv_pointwise(&u, &x, &w)?;
    let fx = finite_difference(
        |x| probe(&u, conv_pointwise(x, &w, Some(bias.as_slice()))),
        &x,
        FD_EPSILON,
    );
    let fw = finite_difference(
        |w| probe(&u, conv_pointwise(&x, w, Some(bias.as_slice()))),
        &w,
        FD_EPSILON,
    );
    let fbias = finite_difference(
        |b| probe(&u, conv_pointwise(&x, &w, Some(b.as_slice()))),
        &bias,
        FD_EPSILON,
    );
    out.push(GradReport::compare(
        "conv_pointwise",
        "input",
        seed,
        g.input.as_slice(),
        fx.as_slice(),
        tol,
        REL_FLOOR,
    ));
    out.push(GradReport::compare(
        "conv_pointwise",
        "weight",
        seed,
        g.weight.as_slice(),
        fw.as_slice(),
        tol,
        REL_FLOOR,
    ));
    out.push(GradReport::compare(
        "conv_pointwise",
        "bias",
        seed,
        &g.bias,
        fbias.as_slice(),
        tol,
        REL_FLOOR,
    ));
    Ok(out)
}

/// Shape of a block check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockCase {
    pub c: usize,
    pub locations: usize,
    pub m: usize,
    pub n: usize,
    pub biases: bool,
}

impl Default for BlockCase {
    fn default() -> Self {
        Self {
            c: 8,
            locations: 27,
            m: 2,
            n: 2,
            biases: false,
        }
    }
}

type BlockInputs = (Matrix<f64>, DoubleAttentionParams<f64>, Matrix<f64>);

fn block_inputs(case: BlockCase, seed: u64) -> Result<BlockInputs, BlockError> {
    let s = seed.wrapping_mul(1000);
    let x = normal(case.c, case.locations, s + 11, 1.0)?;
    let params = DoubleAttentionParams::init_dense(case.c, case.m, case.n, s + 12, case.biases)?;
    let u = normal(case.c, case.locations, s + 13, 1.0)?;
    Ok((x, params, u))
}

/// Fused-block gradients for `x` and every map against central differences.
pub fn block(
    case: BlockCase,
    order: AssociationOrder,
    seed: u64,
) -> Result<Vec<GradReport>, BlockError> {
    let (x, params, _) = block_inputs(case, seed)?;
    let u = Matrix::filled(case.c, case.locations, 1.0);
    let fwd = double_attention_forward(&x, &params, order)?;
    let g = backward_block(&u, &fwd.cache, &params)?;
    let op = match fwd.cache.order {
        crate::attention::Association::Left => "block_left",
        crate::attention::Association::Right => "block_right",
    };
    let loss = |p: &DoubleAttentionParams<f64>, x: &Matrix<f64>| {
        probe(&u, double_attention_forward(x, p, order).map(|f| f.output))
    };
    let tol = COMPOSED_TOLERANCE;
    let mut out = Vec::new();
    let mut push = |slot: &str, analytic: &[f64], numeric: Matrix<f64>| {
        out.push(GradReport::compare(
            op,
            slot,
            seed,
            analytic,
            numeric.as_slice(),
            tol,
            REL_FLOOR,
        ));
    };

    push(
        "x",
        g.x.as_slice(),
        finite_difference(|x| loss(&params, x), &x, FD_EPSILON),
    );
    macro_rules! weight {
        ($field:ident) => {{
            let numeric = finite_difference(
                |w| {
                    let mut p = params.clone();
                    p.$field = w.clone();
                    loss(&p, &x)
                },
                &params.$field,
                FD_EPSILON,
            );
            push(stringify!($field), g.$field.as_slice(), numeric);
        }};
    }
    weight!(w_phi);
    weight!(w_theta);
    weight!(w_rho);
    weight!(w_out);
    macro_rules! bias {
        ($field:ident) => {{
            if let (Some(b), Some(gb)) = (&params.$field, &g.$field) {
                let numeric = finite_difference(
                    |v| {
                        let mut p = params.clone();
                        p.$field = Some(v.as_slice().to_vec());
                        loss(&p, &x)
                    },
                    &row(b),
                    FD_EPSILON,
                );
                push(stringify!($field), gb, numeric);
            }
        }};
    }
    bias!(b_phi);
    bias!(b_theta);
    bias!(b_rho);
    bias!(b_out);
    Ok(out)
}

/// Left- and right-order backward passes must agree to [`ORDER_TOLERANCE`]
/// in absolute terms.
pub fn block_order_consistency(case: BlockCase, seed: u64) -> Result<Vec<GradReport>, BlockError> {
    let (x, params, u) = block_inputs(case, seed)?;
    let left = double_attention_forward(&x, &params, AssociationOrder::Left)?;
    let right = double_attention_forward(&x, &params, AssociationOrder::Right)?;
    let gl = backward_block(&u, &left.cache, &params)?;
    let gr = backward_block(&u, &right.cache, &params)?;
    let abs = |slot: &str, a: &Matrix<f64>, b: &Matrix<f64>| {
        GradReport::compare(
            "block_order",
            slot,
            seed,
            a.as_slice(),
            b.as_slice(),
            ORDER_TOLERANCE,
            f64::MAX,
        )
    };
    Ok(alloc::vec![
        abs("x", &gl.x, &gr.x),
        abs("w_phi", &gl.w_phi, &gr.w_phi),
        abs("w_theta", &gl.w_theta, &gr.w_theta),
        abs("w_rho", &gl.w_rho, &gr.w_rho),
        abs("w_out", &gl.w_out, &gr.w_out),
    ])
}

/// Losses before and after one gradient step on `W_out` for
/// `½‖block(x) − target‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentStep {
    pub before: f64,
    pub after: f64,
}

pub fn descent_step(
    case: BlockCase,
    learning_rate: f64,
    seed: u64,
) -> Result<DescentStep, BlockError> {
    let (x, mut params, target) = block_inputs(case, seed)?;
    let loss = |p: &DoubleAttentionParams<f64>| -> Result<(f64, Matrix<f64>, _), BlockError> {
        let f = double_attention_forward(&x, p, AssociationOrder::Left)?;
        let resid = f.output.sub(&target)?;
        let l = 0.5 * resid.as_slice().iter().map(|v| v * v).sum::<f64>();
        Ok((l, resid, f.cache))
    };
    let (before, resid, cache) = loss(&params)?;
    let g = backward_block(&resid, &cache, &params)?;
    params.w_out = params.w_out.sub(&g.w_out.scale(learning_rate))?;
    let (after, _, _) = loss(&params)?;
    Ok(DescentStep { before, after })
}

/// Three-layer pointwise network (`conv`, A² block, `conv`) on `c = 8`,
/// `L = 27`: the input and every weight and bias against central
/// differences.
pub fn tiny_net(seed: u64) -> Result<Vec<GradReport>, ArchError> {
    let s = seed.wrapping_mul(1000);
    let shape = Shape4::new(8, 3, 3, 3)?;
    let desc = tiny_descriptor(shape, 2, 2);
    let net = materialize_tiny::<f64>(&desc, s + 21, TinyInit::Random)?;
    let x = normal(shape.c, shape.locations(), s + 22, 1.0)?;
    let u = Matrix::filled(shape.c, shape.locations(), 1.0);
    let trace = net.forward(&x)?;
    let grads = net.backward(&u, &trace)?;
    let loss = |n: &TinyNet<f64>, x: &Matrix<f64>| probe(&u, n.forward(x).map(|t| t.output));

    let tol = COMPOSED_TOLERANCE;
    let mut out = Vec::new();
    let fx = finite_difference(|x| loss(&net, x), &x, FD_EPSILON);
    out.push(GradReport::compare(
        "tiny_net",
        "x",
        seed,
        grads.input.as_slice(),
        fx.as_slice(),
        tol,
        REL_FLOOR,
    ));

    // Perturbs one flattened parameter slot of layer `i` through `set`.
    let numeric = |current: &[f64], set: &dyn Fn(&mut TinyNet<f64>, &[f64])| {
        finite_difference(
            |v| {
                let mut n = net.clone();
                set(&mut n, v.as_slice());
                loss(&n, &x)
            },
            &row(current),
            FD_EPSILON,
        )
    };
    for (i, (layer, g)) in net.layers.iter().zip(&grads.layers).enumerate() {
        let label = &net.labels[i];
        let mut push = |slot: &str, analytic: &[f64], num: Matrix<f64>| {
            let slot = alloc::format!("{label}.{slot}");
            out.push(GradReport::compare(
                "tiny_net",
                &slot,
                seed,
                analytic,
                num.as_slice(),
                tol,
                REL_FLOOR,
            ));
        };
        match (layer, g) {
            (TinyLayer::Conv { weight, bias }, LayerGradients::Conv(g)) => {
                let fw = numeric(weight.as_slice(), &|n, v| {
                    if let TinyLayer::Conv { weight, .. } = &mut n.layers[i] {
                        weight.as_mut_slice().copy_from_slice(v);
                    }
                });
                push("weight", g.weight.as_slice(), fw);
                let fb = numeric(bias, &|n, v| {
                    if let TinyLayer::Conv { bias, .. } = &mut n.layers[i] {
                        bias.copy_from_slice(v);
                    }
                });
                push("bias", &g.bias, fb);
            }
            (TinyLayer::Block { params, .. }, LayerGradients::Block(g)) => {
                macro_rules! weight {
                    ($field:ident) => {{
                        let f = numeric(params.$field.as_slice(), &|n, v| {
                            if let TinyLayer::Block { params, .. } = &mut n.layers[i] {
                                params.$field.as_mut_slice().copy_from_slice(v);
                            }
                        });
                        push(stringify!($field), g.$field.as_slice(), f);
                    }};
                }
                weight!(w_phi);
                weight!(w_theta);
                weight!(w_rho);
                weight!(w_out);
                macro_rules! bias {
                    ($field:ident) => {{
                        if let (Some(b), Some(gb)) = (&params.$field, &g.$field) {
                            let f = numeric(b, &|n, v| {
                                if let TinyLayer::Block { params, .. } = &mut n.layers[i] {
                                    params.$field = Some(v.to_vec());
                                }
                            });
                            push(stringify!($field), gb, f);
                        }
                    }};
                }
                bias!(b_phi);
                bias!(b_theta);
                bias!(b_rho);
                bias!(b_out);
            }
            _ => unreachable!("backward returns one gradient per layer, in order"),
        }
    }
    Ok(out)
}
