use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use super::{ArchError, LayerSpec, NetworkDescriptor, Stage};
use crate::tensor::Shape4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    ResNet26,
    ResNet29,
    ResNet50Video,
    ResNet50Image,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::ResNet26,
        Preset::ResNet29,
        Preset::ResNet50Video,
        Preset::ResNet50Image,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::ResNet26 => "resnet26",
            Self::ResNet29 => "resnet29",
            Self::ResNet50Video => "resnet50_video",
            Self::ResNet50Image => "resnet50_image",
        }
    }

    pub fn build(self) -> NetworkDescriptor {
        match self {
            Self::ResNet26 => small_video(self.name(), [2, 2, 2, 2]),
            Self::ResNet29 => small_video(self.name(), [2, 2, 3, 2]),
            Self::ResNet50Video => resnet50(self.name(), true),
            Self::ResNet50Image => resnet50(self.name(), false),
        }
    }
}

impl FromStr for Preset {
    type Err = ArchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ArchError::UnknownPreset(s.to_string()))
    }
}

pub fn build_preset(name: &str) -> Result<NetworkDescriptor, ArchError> {
    Ok(name.parse::<Preset>()?.build())
}

fn unit(c_in: usize, mid: usize, c_out: usize, k: usize, stride: [usize; 3]) -> LayerSpec {
    LayerSpec::ResidualUnit {
        c_in,
        mid,
        c_out,
        temporal_kernel: k,
        stride,
        repeat: 1,
    }
}

fn head(c: usize, classes: usize) -> Stage {
    Stage::new(
        "head",
        vec![
            LayerSpec::GlobalAvgPool,
            LayerSpec::Fc {
                c_in: c,
                c_out: classes,
            },
        ],
    )
}

// ResNet-26 / ResNet-29: 16x112x112 clips, no max-pool, k = 3 throughout.
fn small_video(name: &str, units: [usize; 4]) -> NetworkDescriptor {
    let widths = [(32, 128), (64, 256), (128, 512), (256, 1024)];
    let strides = [[2, 1, 1], [1, 2, 2], [1, 2, 2], [1, 2, 2]];
    let mut stages = vec![Stage::new(
        "conv1",
        vec![LayerSpec::Conv {
            c_in: 3,
            c_out: 16,
            kernel: [3, 5, 5],
            stride: [1, 2, 2],
            repeat: 1,
        }],
    )];
    let mut c_in = 16;
    for (i, ((mid, c_out), stride)) in widths.into_iter().zip(strides).enumerate() {
        stages.push(Stage::new(
            ["conv2", "conv3", "conv4", "conv5"][i],
            vec![LayerSpec::ResidualUnit {
                c_in,
                mid,
                c_out,
                temporal_kernel: 3,
                stride,
                repeat: units[i],
            }],
        ));
        c_in = c_out;
    }
    stages.push(head(c_in, 400));
    NetworkDescriptor {
        name: name.to_string(),
        input: Shape4 {
            c: 3,
            d: 16,
            h: 112,
            w: 112,
        },
        stages,
    }
}

fn resnet50(name: &str, video: bool) -> NetworkDescriptor {
    let widths = [(64, 256), (128, 512), (256, 1024), (512, 2048)];
    let units = [3, 4, 6, 3];
    // Patterns shorter than the stage are repeated cyclically.
    let kernels: [&[usize]; 4] = [&[3], &[3, 1, 3], &[3, 1, 3, 1, 3, 1], &[1, 3, 1]];
    let t = |k: usize| if video { k } else { 1 };
    let strides = [[1, 1, 1], [t(2), 2, 2], [1, 2, 2], [1, 2, 2]];

    let mut stages = vec![Stage::new(
        "conv1",
        vec![
            LayerSpec::Conv {
                c_in: 3,
                c_out: 32,
                kernel: [t(3), 5, 5],
                stride: [1, 2, 2],
                repeat: 1,
            },
            LayerSpec::MaxPool {
                kernel: [1, 3, 3],
                stride: [1, 2, 2],
            },
        ],
    )];
    let mut c_in = 32;
    for i in 0..4 {
        let (mid, c_out) = widths[i];
        let layers: Vec<_> = (0..units[i])
            .map(|u| {
                let k = t(kernels[i][u % kernels[i].len()]);
                let stride = if u == 0 { strides[i] } else { [1, 1, 1] };
                unit(if u == 0 { c_in } else { c_out }, mid, c_out, k, stride)
            })
            .collect();
        stages.push(Stage::new(["conv2", "conv3", "conv4", "conv5"][i], layers));
        c_in = c_out;
    }
    stages.push(head(c_in, if video { 400 } else { 1000 }));
    NetworkDescriptor {
        name: name.to_string(),
        input: Shape4 {
            c: 3,
            d: if video { 8 } else { 1 },
            h: 224,
            w: 224,
        },
        stages,
    }
}
