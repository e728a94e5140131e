use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dsp::PROSODY_CHANNELS;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    Teacher,
    Student,
    BaselinePlain,
    BaselineLocalConcat,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Teacher,
        Architecture::Student,
        Architecture::BaselinePlain,
        Architecture::BaselineLocalConcat,
    ];
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Architecture::Teacher => "Teacher",
            Architecture::Student => "Student",
            Architecture::BaselinePlain => "BaselinePlain",
            Architecture::BaselineLocalConcat => "BaselineLocalConcat",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Teacher" => Ok(Architecture::Teacher),
            "Student" => Ok(Architecture::Student),
            "BaselinePlain" => Ok(Architecture::BaselinePlain),
            "BaselineLocalConcat" => Ok(Architecture::BaselineLocalConcat),
            other => Err(Error::Config(format!("unknown architecture `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncoderKind {
    AcousticConv,
    ProsodyConv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub in_channels: usize,
    pub hidden_channels: usize,
    pub n_layers: usize,
    pub kernel: usize,
    /// Stride of the first layer; acoustic encoders only.
    pub downsample_factor: usize,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!("encoder kernel must be odd (got {})", self.kernel)));
        }
        if !matches!(self.downsample_factor, 1 | 2) {
            return Err(Error::Config(format!(
                "downsample_factor must be 1 or 2 (got {})",
                self.downsample_factor
            )));
        }
        if self.kind == EncoderKind::ProsodyConv && self.downsample_factor != 1 {
            return Err(Error::Config("prosody encoder preserves frame count; downsample must be 1".into()));
        }
        if self.n_layers == 0 || self.hidden_channels == 0 || self.in_channels == 0 {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn output_frames(&self, input_frames: usize) -> usize {
        input_frames.div_ceil(self.downsample_factor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeySource {
    SelfFeatures,
    ProsodyFeatures,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SapConfig {
    pub key_source: KeySource,
    pub key_dim: usize,
}

/// Which of the six prosodic channels a model may see. Disabled channels
/// are zeroed before any layer consumes them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureMask(pub [bool; 6]);

impl Default for FeatureMask {
    fn default() -> Self {
        Self::all()
    }
}

impl FeatureMask {
    pub fn all() -> Self {
        Self([true; 6])
    }

    pub fn without_pitch() -> Self {
        Self([false, false, false, true, true, true])
    }

    pub fn without_energy() -> Self {
        Self([true, true, true, false, false, false])
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }

    pub fn enabled(&self, channel: usize) -> bool {
        self.0[channel]
    }
}

impl Serialize for FeatureMask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let names: Vec<&str> = PROSODY_CHANNELS
            .iter()
            .zip(self.0)
            .filter_map(|(n, on)| on.then_some(*n))
            .collect();
        names.serialize(s)
    }
}

impl<'de> Deserialize<'de> for FeatureMask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let names = Vec::<String>::deserialize(d)?;
        let mut mask = [false; 6];
        for n in names {
            let i = PROSODY_CHANNELS
                .iter()
                .position(|c| *c == n)
                .ok_or_else(|| serde::de::Error::custom(format!("unknown prosody channel `{n}`")))?;
            mask[i] = true;
        }
        Ok(FeatureMask(mask))
    }
}

/// Size knobs shared by every architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelDims {
    pub hidden: usize,
    pub n_layers: usize,
    pub kernel: usize,
    pub downsample: usize,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    /// Attention keys come from the prosodic track instead of the pooled
    /// features.
    pub prosody_attention: bool,
    pub feature_mask: FeatureMask,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            hidden: 64,
            n_layers: 3,
            kernel: 5,
            downsample: 2,
            lstm_hidden: 32,
            lstm_layers: 2,
            prosody_attention: false,
            feature_mask: FeatureMask::all(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Architecture,
    pub n_intents: usize,
    pub encoder: EncoderConfig,
    pub sap: SapConfig,
    pub lstm_hidden: Option<usize>,
    pub lstm_layers: usize,
    pub feature_mask: FeatureMask,
}

impl ModelConfig {
    pub fn new(arch: Architecture, dims: &ModelDims, n_intents: usize) -> Result<Self> {
        if n_intents < 2 {
            return Err(Error::Config(format!("need at least 2 intents (got {n_intents})")));
        }
        let encoder = match arch {
            Architecture::Teacher => EncoderConfig {
                kind: EncoderKind::ProsodyConv,
                in_channels: 6,
                hidden_channels: dims.hidden,
                n_layers: dims.n_layers,
                kernel: dims.kernel,
                downsample_factor: 1,
            },
            _ => EncoderConfig {
                kind: EncoderKind::AcousticConv,
                in_channels: 80,
                hidden_channels: dims.hidden,
                n_layers: dims.n_layers,
                kernel: dims.kernel,
                downsample_factor: dims.downsample,
            },
        };
        encoder.validate()?;
        let lstm_hidden = (arch == Architecture::BaselineLocalConcat).then_some(dims.lstm_hidden);
        let pooled_dim = lstm_hidden.unwrap_or(dims.hidden);
        let sap = if dims.prosody_attention {
            SapConfig {
                key_source: KeySource::ProsodyFeatures,
                key_dim: 6,
            }
        } else {
            SapConfig {
                key_source: KeySource::SelfFeatures,
                key_dim: pooled_dim,
            }
        };
        let consumes_prosody = arch == Architecture::Teacher
            || arch == Architecture::BaselineLocalConcat
            || dims.prosody_attention;
        if consumes_prosody && dims.feature_mask.is_empty() {
            return Err(Error::Config("feature_mask must keep at least one prosody channel".into()));
        }
        Ok(Self {
            arch,
            n_intents,
            encoder,
            sap,
            lstm_hidden,
            lstm_layers: if lstm_hidden.is_some() { dims.lstm_layers } else { 0 },
            feature_mask: dims.feature_mask,
        })
    }

    /// Width of the vector fed to the classifier.
    pub fn pooled_dim(&self) -> usize {
        self.lstm_hidden.unwrap_or(self.encoder.hidden_channels)
    }

    pub fn uses_prosody(&self) -> bool {
        self.arch == Architecture::Teacher
            || self.arch == Architecture::BaselineLocalConcat
            || self.sap.key_source == KeySource::ProsodyFeatures
    }

    pub fn uses_mel(&self) -> bool {
        self.arch != Architecture::Teacher
    }
}
