use crate::actions::{AIM_CHOICES, KEY_COUNT};
use crate::sensors::{AUDIO_DIM, GRID, LAYERS, SCALAR_DIM, SPATIAL_DIM};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const KERNEL: usize = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("unknown preset {0:?} (expected one of A-F or A-small)")]
    UnknownPreset(String),
    #[error("invalid network config: {0}")]
    Invalid(String),
}

/// Widths of the per-stream encoders. The visual stream feeds the flattened
/// convolution output straight into the concatenation unless `visual_dense`
/// is set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderDims {
    #[serde(default)]
    pub visual_dense: Option<usize>,
    pub scalar_dense: usize,
    pub audio_dense: usize,
    pub spatial_dense: usize,
}

impl EncoderDims {
    pub fn uniform(width: usize) -> Self {
        EncoderDims { visual_dense: None, scalar_dense: width, audio_dense: width, spatial_dense: width }
    }
}

/// Layer layout of one model in the family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub name: String,
    pub conv_filters: usize,
    pub encoders: EncoderDims,
    pub pre_lstm_dense: Vec<usize>,
    pub lstm_widths: Vec<usize>,
    pub post_lstm_dense: Vec<usize>,
    pub dropout: f64,
}

pub const PRESET_NAMES: [&str; 6] = ["A", "B", "C", "D", "E", "F"];

impl NetworkConfig {
    /// Builds a config whose scalar/audio/spatial encoders are
    /// `4 * conv_filters` wide.
    pub fn new(
        name: &str,
        conv_filters: usize,
        pre_lstm_dense: &[usize],
        lstm_widths: &[usize],
        post_lstm_dense: &[usize],
    ) -> Self {
        NetworkConfig {
            name: name.to_string(),
            conv_filters,
            encoders: EncoderDims::uniform(4 * conv_filters),
            pre_lstm_dense: pre_lstm_dense.to_vec(),
            lstm_widths: lstm_widths.to_vec(),
            post_lstm_dense: post_lstm_dense.to_vec(),
            dropout: 0.5,
        }
    }

    /// Models A-F. D uses 32 filters; see the README for why.
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let cfg = match name.to_ascii_uppercase().as_str() {
            "A" => Self::new("A", 8, &[256], &[128], &[64]),
            "B" => Self::new("B", 16, &[512], &[256], &[128]),
            "C" => Self::new("C", 16, &[512], &[768], &[256]),
            "D" => Self::new("D", 32, &[1024], &[1024], &[512, 256]),
            "E" => Self::new("E", 32, &[1024, 1024], &[1024, 1024], &[1024, 512, 256]),
            "F" => Self::new("F", 48, &[1792, 1024, 1024], &[1024, 1024], &[1024, 512, 256]),
            "A-SMALL" => Self::a_small(),
            _ => return Err(ConfigError::UnknownPreset(name.to_string())),
        };
        Ok(cfg)
    }

    /// Desk-scale analogue of preset A used by tests and examples.
    pub fn a_small() -> Self {
        Self::new("A-small", 4, &[64], &[32], &[16])
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let widths = std::iter::once(self.conv_filters)
            .chain(self.encoders.visual_dense)
            .chain([self.encoders.scalar_dense, self.encoders.audio_dense, self.encoders.spatial_dense])
            .chain(self.pre_lstm_dense.iter().copied())
            .chain(self.lstm_widths.iter().copied())
            .chain(self.post_lstm_dense.iter().copied());
        for w in widths {
            if w == 0 {
                return Err(ConfigError::Invalid("every width must be >= 1".into()));
            }
        }
        if !(1..=2).contains(&self.lstm_widths.len()) {
            return Err(ConfigError::Invalid("lstm_widths must have 1 or 2 entries".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ConfigError::Invalid("dropout must be in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn conv_output_len(&self) -> usize {
        GRID * GRID * self.conv_filters
    }

    pub fn visual_width(&self) -> usize {
        self.encoders.visual_dense.unwrap_or_else(|| self.conv_output_len())
    }

    pub fn concat_width(&self) -> usize {
        self.visual_width()
            + self.encoders.scalar_dense
            + self.encoders.audio_dense
            + self.encoders.spatial_dense
    }

    pub fn lstm_input_width(&self) -> usize {
        self.pre_lstm_dense.last().copied().unwrap_or_else(|| self.concat_width())
    }

    pub fn trunk_width(&self) -> usize {
        self.post_lstm_dense
            .last()
            .copied()
            .unwrap_or_else(|| *self.lstm_widths.last().expect("validated"))
    }
}

fn dense(inputs: usize, outputs: usize) -> usize {
    inputs * outputs + outputs
}

/// Closed-form learnable parameter count.
pub fn count_params(cfg: &NetworkConfig) -> usize {
    let k = cfg.conv_filters;
    let mut total = k * (KERNEL * KERNEL * LAYERS + 1);
    if let Some(v) = cfg.encoders.visual_dense {
        total += dense(GRID * GRID * k, v);
    }
    total += dense(SCALAR_DIM, cfg.encoders.scalar_dense);
    total += dense(AUDIO_DIM, cfg.encoders.audio_dense);
    total += dense(SPATIAL_DIM, cfg.encoders.spatial_dense);
    let mut width = cfg.concat_width();
    for &w in &cfg.pre_lstm_dense {
        total += dense(width, w);
        width = w;
    }
    for &h in &cfg.lstm_widths {
        total += 4 * ((width + h) * h + h);
        width = h;
    }
    for &w in &cfg.post_lstm_dense {
        total += dense(width, w);
        width = w;
    }
    total + dense(width, AIM_CHOICES) + dense(width, KEY_COUNT)
}
