//! Executable tiny networks: descriptors made only of pointwise stride-1
//! convs and A² blocks can be materialized and run forward and backward.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{count, ArchError, LayerSpec, NetworkDescriptor, Stage};
use crate::attention::{
    double_attention_forward, Association, AssociationOrder, BlockCache, DoubleAttentionParams,
};
use crate::cost::CostConvention;
use crate::grad::{backward_block, backward_conv_pointwise, BlockGradients, ConvGrads};
use crate::scalar::Scalar;
use crate::tensor::{conv_pointwise, Init, Matrix, SeededStream, Shape4};

/// `conv c→c`, A² block `(c, m, n)`, `conv c→c`, all pointwise.
pub fn tiny_descriptor(input: Shape4, m: usize, n: usize) -> NetworkDescriptor {
    let c = input.c;
    let conv = LayerSpec::Conv {
        c_in: c,
        c_out: c,
        kernel: [1, 1, 1],
        stride: [1, 1, 1],
        repeat: 1,
    };
    NetworkDescriptor {
        name: "tiny".into(),
        input,
        stages: vec![
            Stage::new("stem", vec![conv.clone()]),
            Stage::new(
                "attend",
                vec![LayerSpec::A2Block {
                    c,
                    m,
                    n,
                    order: AssociationOrder::Auto,
                }],
            ),
            Stage::new("mix", vec![conv]),
        ],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TinyInit {
    /// Identity conv weights, zero biases, zero block output maps: the whole
    /// network computes the identity.
    Identity,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TinyLayer<T> {
    Conv {
        weight: Matrix<T>,
        bias: Vec<T>,
    },
    Block {
        params: DoubleAttentionParams<T>,
        order: Association,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyNet<T> {
    pub input: Shape4,
    pub labels: Vec<String>,
    pub layers: Vec<TinyLayer<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyTrace<T> {
    pub output: Matrix<T>,
    pub macs: u64,
    inputs: Vec<Matrix<T>>,
    caches: Vec<Option<BlockCache<T>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerGradients<T> {
    Conv(ConvGrads<T>),
    Block(BlockGradients<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyGradients<T> {
    pub input: Matrix<T>,
    pub layers: Vec<LayerGradients<T>>,
}

/// Builds runnable weights for `net`. Fails with `NonExecutable` on any layer
/// other than a 1×1×1 stride-1 conv or an A² block.
pub fn materialize_tiny<T: Scalar>(
    net: &NetworkDescriptor,
    seed: u64,
    init: TinyInit,
) -> Result<TinyNet<T>, ArchError> {
    count(net, &CostConvention::default())?;
    let locations = net.input.locations();
    let mut stream = SeededStream::new(seed);
    let mut labels = Vec::new();
    let mut layers = Vec::new();
    for stage in &net.stages {
        let mut index = 0;
        for layer in &stage.layers {
            for single in layer.expand() {
                let label = format!("{}.{}{}", stage.name, single.kind_name(), index);
                index += 1;
                let built = match single {
                    LayerSpec::Conv {
                        c_in,
                        c_out,
                        kernel: [1, 1, 1],
                        stride: [1, 1, 1],
                        ..
                    } => match init {
                        TinyInit::Identity => TinyLayer::Conv {
                            weight: Matrix::from_fn(c_out, c_in, |r, c| {
                                if r == c {
                                    T::one()
                                } else {
                                    T::zero()
                                }
                            }),
                            bias: vec![T::zero(); c_out],
                        },
                        TinyInit::Random => {
                            let std = 1.0 / libm::sqrt(c_in as f64);
                            TinyLayer::Conv {
                                weight: Init::Normal { std }.matrix_from(
                                    &mut stream,
                                    c_out,
                                    c_in,
                                )?,
                                bias: Init::Uniform { scale: 0.5 }
                                    .matrix_from(&mut stream, 1, c_out)?
                                    .into_vec(),
                            }
                        }
                    },
                    LayerSpec::A2Block { c, m, n, order } => {
                        let block_seed = stream.next_u64();
                        let params = match init {
                            TinyInit::Identity => DoubleAttentionParams::init(c, m, n, block_seed)?,
                            TinyInit::Random => {
                                DoubleAttentionParams::init_dense(c, m, n, block_seed, true)?
                            }
                        };
                        TinyLayer::Block {
                            params,
                            order: order.resolve(m, n, locations),
                        }
                    }
                    _ => return Err(ArchError::NonExecutable { layer: label }),
                };
                labels.push(label);
                layers.push(built);
            }
        }
    }
    Ok(TinyNet {
        input: net.input,
        labels,
        layers,
    })
}

impl<T: Scalar> TinyNet<T> {
    /// Runs `x` (`c × L`) through every layer, keeping what the backward
    /// pass needs. `macs` counts every executed multiply-add.
    pub fn forward(&self, x: &Matrix<T>) -> Result<TinyTrace<T>, ArchError> {
        let mut macs = 0u64;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let next = match layer {
                TinyLayer::Conv { weight, bias } => {
                    macs += (weight.rows() * weight.cols() * h.cols()) as u64;
                    caches.push(None);
                    conv_pointwise(&h, weight, Some(bias))?
                }
                TinyLayer::Block { params, order } => {
                    let f = double_attention_forward(&h, params, (*order).into())?;
                    macs += f.macs;
                    caches.push(Some(f.cache));
                    f.output
                }
            };
            inputs.push(core::mem::replace(&mut h, next));
        }
        Ok(TinyTrace {
            output: h,
            macs,
            inputs,
            caches,
        })
    }

    pub fn backward(
        &self,
        upstream: &Matrix<T>,
        trace: &TinyTrace<T>,
    ) -> Result<TinyGradients<T>, ArchError> {
        let mut grad = upstream.clone();
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            match (layer, &trace.caches[i]) {
                (TinyLayer::Conv { weight, .. }, _) => {
                    let g = backward_conv_pointwise(&grad, &trace.inputs[i], weight)?;
                    grad = g.input.clone();
                    layers.push(LayerGradients::Conv(g));
                }
                (TinyLayer::Block { params, .. }, Some(cache)) => {
                    let g = backward_block(&grad, cache, params)?;
                    grad = g.x.clone();
                    layers.push(LayerGradients::Block(g));
                }
                (TinyLayer::Block { .. }, None) => {
                    return Err(ArchError::InvalidLayer {
                        layer: self.labels[i].clone(),
                        reason: "trace does not belong to this network",
                    })
                }
            }
        }
        layers.reverse();
        Ok(TinyGradients {
            input: grad,
            layers,
        })
    }
}
