use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::features::{FeatureKind, F_IN};
use crate::geometry::{ArrayGeometry, N_VIEWS};

/// Input frames of one 2 s chunk.
pub const CHUNK_FRAMES: usize = 960;
/// Input frames of the short-window variant (167 ms).
pub const SHORT_FRAMES: usize = 80;
/// Time and frequency reduction of the convolutional trunk.
pub const TRUNK_STRIDE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Variant {
    #[cfg_attr(feature = "serde", serde(rename = "CNN-F"))]
    CnnF,
    #[cfg_attr(feature = "serde", serde(rename = "CNN"))]
    Cnn,
    #[cfg_attr(feature = "serde", serde(rename = "CRNN"))]
    Crnn,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::CnnF, Variant::Cnn, Variant::Crnn];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::CnnF => "CNN-F",
            Variant::Cnn => "CNN",
            Variant::Crnn => "CRNN",
        }
    }

    pub fn input_frames(&self) -> usize {
        match self {
            Variant::CnnF => SHORT_FRAMES,
            _ => CHUNK_FRAMES,
        }
    }

    pub fn recurrent(&self) -> bool {
        matches!(self, Variant::Crnn)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('_', "-").as_str() {
            "CNN-F" | "CNNF" => Ok(Variant::CnnF),
            "CNN" => Ok(Variant::Cnn),
            "CRNN" => Ok(Variant::Crnn),
            _ => Err(Error::config(format!("unknown model variant '{s}' (expected CNN-F, CNN or CRNN)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CrnnConfig {
    pub variant: Variant,
    pub conv_channels: [usize; 4],
    pub gru_hidden: usize,
    pub gru_layers: usize,
    pub fc1_dim: usize,
    pub n_views: usize,
    pub in_channels: usize,
    pub input_frames: usize,
    pub bins: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl CrnnConfig {
    /// Desk-scale widths for a feature layout.
    pub fn desk(variant: Variant, in_channels: usize) -> Self {
        Self {
            variant,
            conv_channels: [16, 32, 64, 128],
            gru_hidden: 64,
            gru_layers: 2,
            fc1_dim: 64,
            n_views: N_VIEWS,
            in_channels,
            input_frames: variant.input_frames(),
            bins: F_IN,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }

    /// Full-width trunk (512 channels at the top) with 256 GRU units.
    pub fn full_scale(variant: Variant, in_channels: usize) -> Self {
        Self { conv_channels: [64, 128, 256, 512], gru_hidden: 256, fc1_dim: 256, ..Self::desk(variant, in_channels) }
    }

    pub fn for_features(variant: Variant, kind: FeatureKind, geometry: &ArrayGeometry) -> Self {
        Self::desk(variant, kind.channels(geometry))
    }

    pub fn output_frames(&self) -> usize {
        self.input_frames / TRUNK_STRIDE
    }

    pub fn trunk_bins(&self) -> usize {
        self.bins / TRUNK_STRIDE
    }

    /// Width of the per-frame feature vector entering FC1.
    pub fn head_input(&self) -> usize {
        if self.variant.recurrent() {
            2 * self.gru_hidden
        } else {
            self.conv_channels[3]
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.conv_channels.contains(&0) || self.fc1_dim == 0 || self.n_views == 0 {
            return Err(Error::config("model widths must be positive"));
        }
        if self.input_frames == 0 || self.input_frames % TRUNK_STRIDE != 0 || self.bins == 0 || self.bins % TRUNK_STRIDE != 0 {
            return Err(Error::config(format!(
                "input {}×{} is not divisible by the trunk stride {TRUNK_STRIDE}",
                self.input_frames, self.bins
            )));
        }
        if self.variant == Variant::CnnF && self.input_frames != SHORT_FRAMES {
            return Err(Error::config(format!("CNN-F takes {SHORT_FRAMES}-frame inputs, got {}", self.input_frames)));
        }
        if self.variant.recurrent() && (self.gru_hidden == 0 || self.gru_layers == 0) {
            return Err(Error::config("CRNN needs a recurrent stage"));
        }
        if !(self.bn_eps > 0.0 && (0.0..=1.0).contains(&self.bn_momentum)) {
            return Err(Error::config("batch-norm eps must be positive and momentum in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    /// Non-trainable buffers (batch-norm running statistics) live in a
    /// separate array.
    pub buffer: bool,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvUnit {
    pub cin: usize,
    pub cout: usize,
    pub weight: Range<usize>,
    pub bias: Range<usize>,
    pub gamma: Range<usize>,
    pub beta: Range<usize>,
    pub running_mean: Range<usize>,
    pub running_var: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GruDir {
    pub input: usize,
    pub hidden: usize,
    pub w_ih: Range<usize>,
    pub w_hh: Range<usize>,
    pub b_ih: Range<usize>,
    pub b_hh: Range<usize>,
}

/// Offsets of every named tensor in the flat parameter and buffer arrays.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub tensors: Vec<TensorInfo>,
    /// Eight conv units, two per block.
    pub units: Vec<ConvUnit>,
    /// Per layer, forward then backward direction.
    pub gru: Vec<[GruDir; 2]>,
    pub fc1_weight: Range<usize>,
    pub fc1_bias: Range<usize>,
    pub fc2_weight: Range<usize>,
    pub fc2_bias: Range<usize>,
    pub n_params: usize,
    pub n_buffers: usize,
}

struct Builder {
    tensors: Vec<TensorInfo>,
    params: usize,
    buffers: usize,
}

impl Builder {
    fn push(&mut self, name: String, shape: &[usize], buffer: bool) -> Range<usize> {
        let len: usize = shape.iter().product();
        let offset = if buffer { &mut self.buffers } else { &mut self.params };
        let r = *offset..*offset + len;
        self.tensors.push(TensorInfo { name, shape: shape.to_vec(), offset: *offset, buffer });
        *offset += len;
        r
    }
}

impl Layout {
    pub fn new(cfg: &CrnnConfig) -> Self {
        let mut b = Builder { tensors: Vec::new(), params: 0, buffers: 0 };
        let mut units = Vec::new();
        let mut cin = cfg.in_channels;
        for (block, &cout) in cfg.conv_channels.iter().enumerate() {
            for u in 0..2 {
                let p = format!("conv{block}.{u}");
                let weight = b.push(format!("{p}.weight"), &[cout, cin, 3, 3], false);
                let bias = b.push(format!("{p}.bias"), &[cout], false);
                let gamma = b.push(format!("{p}.bn.gamma"), &[cout], false);
                let beta = b.push(format!("{p}.bn.beta"), &[cout], false);
                let running_mean = b.push(format!("{p}.bn.running_mean"), &[cout], true);
                let running_var = b.push(format!("{p}.bn.running_var"), &[cout], true);
                units.push(ConvUnit { cin, cout, weight, bias, gamma, beta, running_mean, running_var });
                cin = cout;
            }
        }
        let mut gru = Vec::new();
        if cfg.variant.recurrent() {
            let h = cfg.gru_hidden;
            let mut input = cfg.conv_channels[3];
            for layer in 0..cfg.gru_layers {
                let mut dir = |d: &str| {
                    let p = format!("gru{layer}.{d}");
                    GruDir {
                        input,
                        hidden: h,
                        w_ih: b.push(format!("{p}.w_ih"), &[3 * h, input], false),
                        w_hh: b.push(format!("{p}.w_hh"), &[3 * h, h], false),
                        b_ih: b.push(format!("{p}.b_ih"), &[3 * h], false),
                        b_hh: b.push(format!("{p}.b_hh"), &[3 * h], false),
                    }
                };
                let fwd = dir("fwd");
                let bwd = dir("bwd");
                gru.push([fwd, bwd]);
                input = 2 * h;
            }
        }
        let head = cfg.head_input();
        let fc1_weight = b.push("fc1.weight".into(), &[cfg.fc1_dim, head], false);
        let fc1_bias = b.push("fc1.bias".into(), &[cfg.fc1_dim], false);
        let fc2_weight = b.push("fc2.weight".into(), &[2, cfg.fc1_dim + cfg.n_views], false);
        let fc2_bias = b.push("fc2.bias".into(), &[2], false);
        Layout { tensors: b.tensors, units, gru, fc1_weight, fc1_bias, fc2_weight, fc2_bias, n_params: b.params, n_buffers: b.buffers }
    }

    pub fn find(&self, name: &str) -> Option<&TensorInfo> {
        self.tensors.iter().find(|t| t.name == name)
    }
}
