//! Architecture descriptions for the two sub-network families.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Vgg16,
    Alexnet,
}

impl Family {
    pub fn pooling_stages(self) -> u32 {
        match self {
            Family::Vgg16 => 5,
            Family::Alexnet => 3,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Family::Vgg16 => 0,
            Family::Alexnet => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Family::Vgg16),
            1 => Some(Family::Alexnet),
            _ => None,
        }
    }

    pub fn default_fc_widths(self) -> Vec<usize> {
        match self {
            Family::Vgg16 => vec![256],
            Family::Alexnet => vec![64],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Vgg16 => "vgg16",
            Family::Alexnet => "alexnet",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vgg16" | "vgg" => Ok(Family::Vgg16),
            "alexnet" => Ok(Family::Alexnet),
            other => Err(Error::InvalidArgument(format!(
                "unknown family '{other}' (expected vgg16 or alexnet)"
            ))),
        }
    }
}

/// Multiplier in (0, 1] applied to every stage's channel count.
///
/// Kept as an exact fraction so that scaled widths and checkpoint headers
/// never depend on float rounding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ChannelScale {
    num: u32,
    den: u32,
}

impl ChannelScale {
    pub const ONE: ChannelScale = ChannelScale { num: 1, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 || num > den {
            return Err(Error::InvalidArgument(format!(
                "channel scale {num}/{den} is not in (0, 1]"
            )));
        }
        Ok(Self { num, den })
    }

    pub fn num(self) -> u32 {
        self.num
    }

    pub fn den(self) -> u32 {
        self.den
    }

    /// `ceil(channels · scale)`, never below 1.
    pub fn apply(self, channels: usize) -> usize {
        let num = self.num as usize;
        let den = self.den as usize;
        ((channels * num).div_ceil(den)).max(1)
    }
}

impl fmt::Display for ChannelScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for ChannelScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad =
            || Error::InvalidArgument(format!("cannot parse channel scale '{s}' (use e.g. 1/8)"));
        let (num, den) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        Self::new(
            num.parse().map_err(|_| bad())?,
            den.parse().map_err(|_| bad())?,
        )
    }
}

impl TryFrom<String> for ChannelScale {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<ChannelScale> for String {
    fn from(value: ChannelScale) -> Self {
        value.to_string()
    }
}

/// Which facial sub-region a network pairs with the whole face.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    LeftEye,
    Nose,
    Mouth,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::LeftEye, Region::Nose, Region::Mouth];

    pub fn code(self) -> u32 {
        match self {
            Region::LeftEye => 0,
            Region::Nose => 1,
            Region::Mouth => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Region::LeftEye => "left_eye",
            Region::Nose => "nose",
            Region::Mouth => "mouth",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left_eye" | "eye" => Ok(Region::LeftEye),
            "nose" => Ok(Region::Nose),
            "mouth" => Ok(Region::Mouth),
            other => Err(Error::InvalidArgument(format!(
                "unknown region '{other}' (expected left_eye, nose or mouth)"
            ))),
        }
    }
}

/// One entry of a branch's layer plan.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayerPlan {
    /// 3×3, stride 1, pad 1 convolution followed by ReLU.
    Conv {
        name: String,
        in_channels: usize,
        out_channels: usize,
    },
    MaxPool {
        name: String,
    },
}

impl LayerPlan {
    pub fn name(&self) -> &str {
        match self {
            LayerPlan::Conv { name, .. } | LayerPlan::MaxPool { name } => name,
        }
    }
}

pub const KERNEL: usize = 3;

const VGG16_STAGES: [(usize, usize); 5] = [(64, 2), (128, 2), (256, 3), (512, 3), (512, 3)];
const ALEXNET_CONVS: [usize; 5] = [96, 256, 384, 384, 256];
/// Pools follow conv1, conv2 and conv5.
const ALEXNET_POOL_AFTER: [bool; 5] = [true, true, false, false, true];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub family: Family,
    pub input_size: usize,
    pub channel_scale: ChannelScale,
    pub fc_widths: Vec<usize>,
    pub num_classes: usize,
    #[serde(default = "default_in_channels")]
    pub in_channels: usize,
}

fn default_in_channels() -> usize {
    3
}

impl ArchSpec {
    /// A family at the given input size and scale with the default head.
    pub fn new(family: Family, input_size: usize, channel_scale: ChannelScale) -> Self {
        Self {
            family,
            input_size,
            channel_scale,
            fc_widths: family.default_fc_widths(),
            num_classes: 7,
            in_channels: 3,
        }
    }

    pub fn vgg16(input_size: usize, channel_scale: ChannelScale) -> Self {
        Self::new(Family::Vgg16, input_size, channel_scale)
    }

    pub fn alexnet(input_size: usize, channel_scale: ChannelScale) -> Self {
        Self::new(Family::Alexnet, input_size, channel_scale)
    }

    pub fn with_fc_widths(mut self, widths: Vec<usize>) -> Self {
        self.fc_widths = widths;
        self
    }

    pub fn with_classes(mut self, num_classes: usize) -> Self {
        self.num_classes = num_classes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let divisor = 1usize << self.family.pooling_stages();
        if self.input_size == 0 || !self.input_size.is_multiple_of(divisor) {
            return Err(Error::Architecture(format!(
                "input_size {} must be a positive multiple of {divisor} for {} ({} pooling stages)",
                self.input_size,
                self.family,
                self.family.pooling_stages()
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::Architecture("num_classes must be at least 1".into()));
        }
        if self.in_channels == 0 {
            return Err(Error::Architecture("in_channels must be at least 1".into()));
        }
        if let Some(i) = self.fc_widths.iter().position(|&w| w == 0) {
            return Err(Error::Architecture(format!("fc_widths[{i}] is zero")));
        }
        ChannelScale::new(self.channel_scale.num, self.channel_scale.den)?;
        Ok(())
    }

    /// Layer plan of one branch; both branches share it.
    pub fn branch_plan(&self) -> Vec<LayerPlan> {
        let scale = self.channel_scale;
        let mut plan = Vec::new();
        let mut in_c = self.in_channels;
        match self.family {
            Family::Vgg16 => {
                for (stage, &(width, convs)) in VGG16_STAGES.iter().enumerate() {
                    let out_c = scale.apply(width);
                    for i in 0..convs {
                        plan.push(LayerPlan::Conv {
                            name: format!("conv{}_{}", stage + 1, i + 1),
                            in_channels: in_c,
                            out_channels: out_c,
                        });
                        in_c = out_c;
                    }
                    plan.push(LayerPlan::MaxPool {
                        name: format!("pool{}", stage + 1),
                    });
                }
            }
            Family::Alexnet => {
                let mut pools = 0;
                for (i, (&width, &pool)) in
                    ALEXNET_CONVS.iter().zip(&ALEXNET_POOL_AFTER).enumerate()
                {
                    let out_c = scale.apply(width);
                    plan.push(LayerPlan::Conv {
                        name: format!("conv{}", i + 1),
                        in_channels: in_c,
                        out_channels: out_c,
                    });
                    in_c = out_c;
                    if pool {
                        pools += 1;
                        plan.push(LayerPlan::MaxPool {
                            name: format!("pool{pools}"),
                        });
                    }
                }
            }
        }
        plan
    }

    /// Channels leaving the last pooling layer of one branch.
    pub fn branch_out_channels(&self) -> usize {
        self.branch_plan()
            .iter()
            .rev()
            .find_map(|l| match l {
                LayerPlan::Conv { out_channels, .. } => Some(*out_channels),
                LayerPlan::MaxPool { .. } => None,
            })
            .unwrap_or(self.in_channels)
    }

    /// Spatial extent after the final pool: `input_size / 2^p`.
    pub fn fused_spatial(&self) -> usize {
        self.input_size >> self.family.pooling_stages()
    }

    /// Width of the flattened, concatenated branch outputs feeding the head.
    pub fn fused_features(&self) -> usize {
        let s = self.fused_spatial();
        2 * self.branch_out_channels() * s * s
    }

    /// `(in, out)` widths of every fully connected layer, classifier last.
    pub fn head_plan(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.fc_widths.len() + 1);
        let mut d = self.fused_features();
        for &w in self
            .fc_widths
            .iter()
            .chain(std::iter::once(&self.num_classes))
        {
            dims.push((d, w));
            d = w;
        }
        dims
    }
}

/// Weights plus biases of one 3×3 convolution.
pub fn conv_parameters(in_channels: usize, out_channels: usize) -> usize {
    in_channels * out_channels * KERNEL * KERNEL + out_channels
}

/// Exact number of scalar parameters implied by `spec`.
pub fn parameter_count(spec: &ArchSpec) -> usize {
    let branch: usize = spec
        .branch_plan()
        .iter()
        .map(|l| match l {
            LayerPlan::Conv {
                in_channels,
                out_channels,
                ..
            } => conv_parameters(*in_channels, *out_channels),
            LayerPlan::MaxPool { .. } => 0,
        })
        .sum();
    let head: usize = spec.head_plan().iter().map(|&(i, o)| i * o + o).sum();
    2 * branch + head
}
