//! Symbolic network descriptors for the ResNet backbones, attention-block
//! insertion, and whole-network parameter/FLOPs counting.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attention::{AssociationOrder, BlockError, DEFAULT_REDUCTION};
use crate::cost::{a2_block_cost, conv_cost, fc_cost, nl_block_cost, BlockCost, CostConvention};
use crate::tensor::{Shape4, TensorError};

mod presets;
pub mod tiny;

pub use presets::{build_preset, Preset};

#[derive(Debug, Clone, PartialEq)]
pub enum ArchError {
    UnknownPreset(String),
    UnknownStage(String),
    /// Insertion point past the last residual unit of a stage.
    InvalidUnit {
        stage: String,
        unit: usize,
        units: usize,
    },
    Indivisible {
        channels: usize,
        reduction: usize,
    },
    /// A layer's declared input does not match the traced activation.
    ShapeInconsistency {
        layer: String,
        expected: usize,
        actual: usize,
    },
    InvalidLayer {
        layer: String,
        reason: &'static str,
    },
    NonExecutable {
        layer: String,
    },
    BadInsertionSpec(String),
    Block(BlockError),
    Tensor(TensorError),
}

impl fmt::Display for ArchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UnknownPreset(p) => write!(
                f,
                "unknown preset `{p}` (expected resnet26, resnet29, resnet50_video or resnet50_image)"
            ),
            Self::UnknownStage(s) => write!(f, "unknown stage `{s}`"),
            Self::InvalidUnit { stage, unit, units } => write!(
                f,
                "stage `{stage}` has {units} residual units, cannot insert after unit {unit}"
            ),
            Self::Indivisible {
                channels,
                reduction,
            } => write!(f, "{channels} channels not divisible by reduction {reduction}"),
            Self::ShapeInconsistency {
                layer,
                expected,
                actual,
            } => write!(
                f,
                "{layer}: expects {expected} input channels but receives {actual}"
            ),
            Self::InvalidLayer { layer, reason } => write!(f, "{layer}: {reason}"),
            Self::NonExecutable { layer } => {
                write!(f, "{layer}: only 1x1x1 stride-1 convs and A2 blocks can be executed")
            }
            Self::BadInsertionSpec(s) => {
                write!(f, "bad insertion spec `{s}` (expected kind@stage×count, e.g. a2@conv4x1)")
            }
            Self::Block(e) => write!(f, "{e}"),
            Self::Tensor(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for ArchError {}

impl From<BlockError> for ArchError {
    fn from(e: BlockError) -> Self {
        Self::Block(e)
    }
}

impl From<TensorError> for ArchError {
    fn from(e: TensorError) -> Self {
        Self::Tensor(e)
    }
}

fn one() -> usize {
    1
}

fn is_one(v: &usize) -> bool {
    *v == 1
}

/// One entry of a stage. `repeat` applies the stride only to the first copy;
/// later copies take the previous output as input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv {
        c_in: usize,
        c_out: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        #[serde(default = "one", skip_serializing_if = "is_one")]
        repeat: usize,
    },
    #[serde(rename = "maxpool")]
    MaxPool {
        kernel: [usize; 3],
        stride: [usize; 3],
    },
    #[serde(rename = "globalavgpool")]
    GlobalAvgPool,
    Fc {
        c_in: usize,
        c_out: usize,
    },
    /// Bottleneck: `1×1×1 c_in→mid`, `k×3×3 mid→mid` (strided),
    /// `1×1×1 mid→c_out`, plus a strided `1×1×1` projection shortcut when the
    /// channel count or extent changes.
    ResidualUnit {
        c_in: usize,
        mid: usize,
        c_out: usize,
        temporal_kernel: usize,
        stride: [usize; 3],
        #[serde(default = "one", skip_serializing_if = "is_one")]
        repeat: usize,
    },
    A2Block {
        c: usize,
        m: usize,
        n: usize,
        #[serde(default)]
        order: AssociationOrder,
    },
    NlBlock {
        c: usize,
        n: usize,
    },
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Conv { .. } => "conv",
            Self::MaxPool { .. } => "maxpool",
            Self::GlobalAvgPool => "globalavgpool",
            Self::Fc { .. } => "fc",
            Self::ResidualUnit { .. } => "residual_unit",
            Self::A2Block { .. } => "a2_block",
            Self::NlBlock { .. } => "nl_block",
        }
    }

    fn repeat(&self) -> usize {
        match self {
            Self::Conv { repeat, .. } | Self::ResidualUnit { repeat, .. } => *repeat,
            _ => 1,
        }
    }

    /// Splits a repeated layer into single copies.
    fn expand(&self) -> Vec<LayerSpec> {
        match *self {
            Self::Conv {
                c_in,
                c_out,
                kernel,
                stride,
                repeat,
            } => (0..repeat.max(1))
                .map(|i| Self::Conv {
                    c_in: if i == 0 { c_in } else { c_out },
                    c_out,
                    kernel,
                    stride: if i == 0 { stride } else { [1, 1, 1] },
                    repeat: 1,
                })
                .collect(),
            Self::ResidualUnit {
                c_in,
                mid,
                c_out,
                temporal_kernel,
                stride,
                repeat,
            } => (0..repeat.max(1))
                .map(|i| Self::ResidualUnit {
                    c_in: if i == 0 { c_in } else { c_out },
                    mid,
                    c_out,
                    temporal_kernel,
                    stride: if i == 0 { stride } else { [1, 1, 1] },
                    repeat: 1,
                })
                .collect(),
            _ => alloc::vec![self.clone()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

impl Stage {
    pub fn new(name: &str, layers: Vec<LayerSpec>) -> Self {
        Self {
            name: name.to_string(),
            layers,
        }
    }

    pub fn residual_units(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::ResidualUnit { .. }))
            .map(LayerSpec::repeat)
            .sum()
    }
}

/// A whole network: `{name, input: [c,d,h,w], stages: [{name, layers}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDescriptor {
    pub name: String,
    pub input: Shape4,
    pub stages: Vec<Stage>,
}

impl NetworkDescriptor {
    pub fn stage(&self, name: &str) -> Option<&Stage> {
        self.stages.iter().find(|s| s.name == name)
    }
}

/// Output extent of a strided "same"-padded window: `⌈in / stride⌉`.
fn strided(shape: Shape4, c: usize, stride: [usize; 3]) -> Result<Shape4, TensorError> {
    if stride.contains(&0) {
        return Err(TensorError::InvalidParameter { name: "stride" });
    }
    Shape4::new(
        c,
        shape.d.div_ceil(stride[0]),
        shape.h.div_ceil(stride[1]),
        shape.w.div_ceil(stride[2]),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCount {
    pub stage: String,
    pub label: String,
    pub output: Shape4,
    pub params: u64,
    pub flops: u64,
    pub peak_intermediate_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCount {
    pub name: String,
    pub output: Shape4,
    pub params: u64,
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkCount {
    pub name: String,
    pub convention: CostConvention,
    pub params: u64,
    pub flops: u64,
    pub peak_intermediate_bytes: u64,
    pub output: Option<Shape4>,
    pub stages: Vec<StageCount>,
    pub layers: Vec<LayerCount>,
}

struct Tracer<'a> {
    convention: &'a CostConvention,
    stage: String,
    shape: Shape4,
    rows: Vec<LayerCount>,
}

impl Tracer<'_> {
    fn push(&mut self, label: String, output: Shape4, cost: BlockCost) {
        self.rows.push(LayerCount {
            stage: self.stage.clone(),
            label,
            output,
            params: cost.params,
            flops: cost.flops,
            peak_intermediate_bytes: cost.peak_intermediate_bytes,
        });
    }

    fn expect_channels(&self, label: &str, expected: usize) -> Result<(), ArchError> {
        if self.shape.c != expected {
            return Err(ArchError::ShapeInconsistency {
                layer: label.to_string(),
                expected,
                actual: self.shape.c,
            });
        }
        Ok(())
    }

    fn conv(
        &mut self,
        label: String,
        input: Shape4,
        c_out: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
    ) -> Result<Shape4, ArchError> {
        if kernel.contains(&0) {
            return Err(ArchError::InvalidLayer {
                layer: label,
                reason: "kernel extents must be positive",
            });
        }
        let out = strided(input, c_out, stride)?;
        let cost = conv_cost(input.c, c_out, kernel, out, self.convention);
        self.push(label, out, cost);
        Ok(out)
    }

    fn layer(&mut self, label: &str, layer: &LayerSpec) -> Result<(), ArchError> {
        let conv = *self.convention;
        match *layer {
            LayerSpec::Conv {
                c_in,
                c_out,
                kernel,
                stride,
                ..
            } => {
                self.expect_channels(label, c_in)?;
                self.shape = self.conv(label.to_string(), self.shape, c_out, kernel, stride)?;
            }
            LayerSpec::MaxPool { kernel, stride } => {
                if kernel.contains(&0) {
                    return Err(ArchError::InvalidLayer {
                        layer: label.to_string(),
                        reason: "kernel extents must be positive",
                    });
                }
                let out = strided(self.shape, self.shape.c, stride)?;
                self.push(label.to_string(), out, BlockCost::default());
                self.shape = out;
            }
            LayerSpec::GlobalAvgPool => {
                let out = Shape4::new(self.shape.c, 1, 1, 1)?;
                self.push(label.to_string(), out, BlockCost::default());
                self.shape = out;
            }
            LayerSpec::Fc { c_in, c_out } => {
                self.expect_channels(label, c_in)?;
                if self.shape.locations() != 1 {
                    return Err(ArchError::InvalidLayer {
                        layer: label.to_string(),
                        reason: "fc expects a pooled 1x1x1 input",
                    });
                }
                let out = Shape4::new(c_out, 1, 1, 1)?;
                self.push(label.to_string(), out, fc_cost(c_in, c_out, &conv));
                self.shape = out;
            }
            LayerSpec::ResidualUnit {
                c_in,
                mid,
                c_out,
                temporal_kernel,
                stride,
                ..
            } => {
                self.expect_channels(label, c_in)?;
                let input = self.shape;
                let a = self.conv(format!("{label}.conv_a"), input, mid, [1, 1, 1], [1, 1, 1])?;
                let b = self.conv(
                    format!("{label}.conv_b"),
                    a,
                    mid,
                    [temporal_kernel, 3, 3],
                    stride,
                )?;
                let out = self.conv(format!("{label}.conv_c"), b, c_out, [1, 1, 1], [1, 1, 1])?;
                if c_in != c_out || stride != [1, 1, 1] {
                    self.conv(format!("{label}.shortcut"), input, c_out, [1, 1, 1], stride)?;
                }
                self.shape = out;
            }
            LayerSpec::A2Block { c, m, n, order } => {
                self.expect_channels(label, c)?;
                let cost = a2_block_cost(self.shape, m, n, order, &conv);
                self.push(label.to_string(), self.shape, cost);
            }
            LayerSpec::NlBlock { c, n } => {
                self.expect_channels(label, c)?;
                let cost = nl_block_cost(self.shape, n, &conv);
                self.push(label.to_string(), self.shape, cost);
            }
        }
        Ok(())
    }
}

/// Traces activation shapes through `net` and sums every layer's cost.
pub fn count(
    net: &NetworkDescriptor,
    convention: &CostConvention,
) -> Result<NetworkCount, ArchError> {
    let mut tracer = Tracer {
        convention,
        stage: String::new(),
        shape: net.input,
        rows: Vec::new(),
    };
    let mut stages = Vec::with_capacity(net.stages.len());
    for stage in &net.stages {
        tracer.stage = stage.name.clone();
        let first_row = tracer.rows.len();
        let mut index = 0;
        for layer in &stage.layers {
            for single in layer.expand() {
                let label = format!("{}.{}{}", stage.name, single.kind_name(), index);
                tracer.layer(&label, &single)?;
                index += 1;
            }
        }
        let rows = &tracer.rows[first_row..];
        stages.push(StageCount {
            name: stage.name.clone(),
            output: tracer.shape,
            params: rows.iter().map(|r| r.params).sum(),
            flops: rows.iter().map(|r| r.flops).sum(),
        });
    }
    let layers = tracer.rows;
    Ok(NetworkCount {
        name: net.name.clone(),
        convention: *convention,
        params: layers.iter().map(|r| r.params).sum(),
        flops: layers.iter().map(|r| r.flops).sum(),
        peak_intermediate_bytes: layers
            .iter()
            .map(|r| r.peak_intermediate_bytes)
            .max()
            .unwrap_or(0),
        output: (!layers.is_empty()).then_some(tracer.shape),
        stages,
        layers,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    A2,
    Nl,
}

impl FromStr for BlockKind {
    type Err = ArchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "a2" => Ok(Self::A2),
            "nl" => Ok(Self::Nl),
            _ => Err(ArchError::BadInsertionSpec(s.to_string())),
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::A2 => "a2",
            Self::Nl => "nl",
        })
    }
}

/// "After residual unit `after_unit` (0-based) of `stage`".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertionPoint {
    pub stage: String,
    pub after_unit: usize,
}

impl InsertionPoint {
    pub fn new(stage: &str, after_unit: usize) -> Self {
        Self {
            stage: stage.to_string(),
            after_unit,
        }
    }

    /// After the second residual unit.
    pub fn default_in(stage: &str) -> Self {
        Self::new(stage, 1)
    }
}

/// `count` insertion points in one stage: after units 1, 3, 5, … and then
/// 0, 2, 4, …, so a single block lands after the second unit.
pub fn spread_points(
    net: &NetworkDescriptor,
    stage: &str,
    count: usize,
) -> Result<Vec<InsertionPoint>, ArchError> {
    let units = net
        .stage(stage)
        .ok_or_else(|| ArchError::UnknownStage(stage.to_string()))?
        .residual_units();
    let order = (1..units).step_by(2).chain((0..units).step_by(2));
    let mut points: Vec<_> = order
        .take(count)
        .map(|u| InsertionPoint::new(stage, u))
        .collect();
    if points.len() < count {
        return Err(ArchError::InvalidUnit {
            stage: stage.to_string(),
            unit: count.saturating_sub(1),
            units,
        });
    }
    points.sort_by_key(|p| p.after_unit);
    Ok(points)
}

fn block_layer(kind: BlockKind, c: usize, reduction: usize) -> Result<LayerSpec, ArchError> {
    if reduction == 0 || !c.is_multiple_of(reduction) || c < reduction {
        return Err(ArchError::Indivisible {
            channels: c,
            reduction,
        });
    }
    let w = c / reduction;
    Ok(match kind {
        BlockKind::A2 => LayerSpec::A2Block {
            c,
            m: w,
            n: w,
            order: AssociationOrder::Auto,
        },
        BlockKind::Nl => LayerSpec::NlBlock { c, n: w },
    })
}

/// Returns a copy of `net` with one block after each point. Block widths are
/// `c / reduction`; the original descriptor is left untouched.
pub fn insert_block(
    net: &NetworkDescriptor,
    kind: BlockKind,
    points: &[InsertionPoint],
    reduction: usize,
) -> Result<NetworkDescriptor, ArchError> {
    let mut out = net.clone();
    for point in points {
        let stage = out
            .stages
            .iter_mut()
            .find(|s| s.name == point.stage)
            .ok_or_else(|| ArchError::UnknownStage(point.stage.clone()))?;
        let units = stage.residual_units();
        if point.after_unit >= units {
            return Err(ArchError::InvalidUnit {
                stage: point.stage.clone(),
                unit: point.after_unit,
                units,
            });
        }
        stage.layers = stage.layers.iter().flat_map(LayerSpec::expand).collect();
        let mut seen = 0;
        let mut at = None;
        for (i, layer) in stage.layers.iter().enumerate() {
            if let LayerSpec::ResidualUnit { c_out, .. } = layer {
                if seen == point.after_unit {
                    at = Some((i, *c_out));
                    break;
                }
                seen += 1;
            }
        }
        let (i, c) = at.expect("unit index checked above");
        // Skip past blocks already placed after this unit.
        let mut pos = i + 1;
        while matches!(
            stage.layers.get(pos),
            Some(LayerSpec::A2Block { .. } | LayerSpec::NlBlock { .. })
        ) {
            pos += 1;
        }
        stage.layers.insert(pos, block_layer(kind, c, reduction)?);
    }
    Ok(out)
}

/// `kind@stage×count`, e.g. `a2@conv4x1` or `nl@conv3×2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertionSpec {
    pub kind: BlockKind,
    pub stage: String,
    pub count: usize,
}

impl FromStr for InsertionSpec {
    type Err = ArchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ArchError::BadInsertionSpec(s.to_string());
        let (kind, rest) = s.split_once('@').ok_or_else(bad)?;
        let split = rest
            .char_indices()
            .rev()
            .find(|&(_, ch)| ch == 'x' || ch == 'X' || ch == '×')
            .ok_or_else(bad)?;
        let stage = &rest[..split.0];
        let count_str = &rest[split.0 + split.1.len_utf8()..];
        let count: usize = count_str.parse().map_err(|_| bad())?;
        if stage.is_empty() || count == 0 {
            return Err(bad());
        }
        Ok(Self {
            kind: kind.parse().map_err(|_| bad())?,
            stage: stage.to_ascii_lowercase(),
            count,
        })
    }
}

impl fmt::Display for InsertionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}x{}", self.kind, self.stage, self.count)
    }
}

/// Applies every spec in order with the default reduction of 4.
pub fn apply_insertions(
    net: &NetworkDescriptor,
    specs: &[InsertionSpec],
) -> Result<NetworkDescriptor, ArchError> {
    let mut out = net.clone();
    for spec in specs {
        let points = spread_points(&out, &spec.stage, spec.count)?;
        out = insert_block(&out, spec.kind, &points, DEFAULT_REDUCTION)?;
    }
    Ok(out)
}
