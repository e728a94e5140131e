use std::collections::BTreeMap;

use super::{align_frames, sap_forward, Architecture, KeySource, ModelConfig, ModelDims};
use crate::autodiff::{init_uniform, lstm_forward, Graph, LstmLayer, ParamSet, Tensor, Var};
use crate::dsp::Matrix;
use crate::{Error, Result};

/// Model inputs for one utterance: raw log-mel (`T x 80`) and the
/// normalized prosodic track (`T x 6`), frame-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub mel: Matrix,
    pub prosody: Matrix,
}

impl Features {
    pub fn frames(&self) -> usize {
        self.mel.rows()
    }
}

/// How parameters enter a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamMode {
    /// Named, differentiable leaves.
    Trainable,
    /// Constants; no gradient buffers exist for them.
    Frozen,
}

/// Graph handles produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardOut {
    /// Encoder output `z_F`, `T' x H`.
    pub frame_features: Var,
    /// Attention weights over pooled frames, `T'' x 1`.
    pub alpha: Var,
    /// Pooled utterance vector `z_U`, `1 x D`.
    pub pooled: Var,
    /// `1 x n_intents`
    pub logits: Var,
}

#[derive(Clone, Copy)]
enum Source<'a> {
    Mode(ParamMode),
    Bound(&'a BTreeMap<String, Var>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
}

/// Scalar per-utterance standardization of log-mel values (one mean and
/// one standard deviation over the whole matrix), keeping the spectral
/// envelope while removing overall level.
pub fn standardize_mel(mel: &Matrix) -> Matrix {
    let n = mel.data().len().max(1) as f64;
    let mean = mel.data().iter().sum::<f64>() / n;
    let var = mel.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let mut out = mel.clone();
    for v in out.data_mut() {
        *v = if std < 1e-8 { 0.0 } else { (*v - mean) / std };
    }
    out
}

/// Parameter name -> `(shape, fan_in)` for a configuration.
fn layout(config: &ModelConfig) -> BTreeMap<String, (Vec<usize>, usize)> {
    let mut m = BTreeMap::new();
    let enc = &config.encoder;
    let mut cin = enc.in_channels;
    for i in 0..enc.n_layers {
        m.insert(
            format!("encoder.conv{i}.weight"),
            (vec![enc.kernel, cin, enc.hidden_channels], enc.kernel * cin),
        );
        m.insert(format!("encoder.conv{i}.bias"), (vec![enc.hidden_channels], 0));
        cin = enc.hidden_channels;
    }
    if let Some(h) = config.lstm_hidden {
        let mut cin = enc.hidden_channels + 6;
        for l in 0..config.lstm_layers {
            m.insert(format!("lstm.l{l}.w_ih"), (vec![cin, 4 * h], cin));
            m.insert(format!("lstm.l{l}.w_hh"), (vec![h, 4 * h], h));
            m.insert(format!("lstm.l{l}.bias"), (vec![4 * h], 0));
            cin = h;
        }
    }
    m.insert("sap.w".into(), (vec![config.sap.key_dim, 1], config.sap.key_dim));
    let d = config.pooled_dim();
    m.insert("classifier.weight".into(), (vec![d, config.n_intents], d));
    m.insert("classifier.bias".into(), (vec![config.n_intents], 0));
    m
}

pub fn expected_shapes(config: &ModelConfig) -> BTreeMap<String, Vec<usize>> {
    layout(config).into_iter().map(|(k, (s, _))| (k, s)).collect()
}

/// Seeded initialization: weights Uniform(-sqrt(1/fan_in), sqrt(1/fan_in)),
/// biases zero. Each parameter draws from its own name-derived stream.
pub fn build_model(arch: Architecture, dims: &ModelDims, n_intents: usize, seed: u64) -> Result<Model> {
    let config = ModelConfig::new(arch, dims, n_intents)?;
    let mut params = ParamSet::new();
    for (name, (shape, fan_in)) in layout(&config) {
        let t = if name.ends_with("bias") {
            Tensor::zeros(&shape)
        } else {
            init_uniform(seed, &name, &shape, fan_in)
        };
        params.insert(name, t)?;
    }
    Ok(Model { config, params })
}

impl Model {
    pub fn arch(&self) -> Architecture {
        self.config.arch
    }

    fn p(&self, g: &mut Graph, name: &str, src: Source<'_>) -> Result<Var> {
        match src {
            Source::Mode(ParamMode::Trainable) => g.param(name, self.params.get(name)?),
            Source::Mode(ParamMode::Frozen) => g.constant(self.params.get(name)?.clone()),
            Source::Bound(vars) => vars
                .get(name)
                .copied()
                .ok_or_else(|| Error::Config(format!("parameter `{name}` not bound"))),
        }
    }

    /// The prosodic track with masked channels zeroed.
    pub fn masked_prosody(&self, prosody: &Matrix) -> Result<Matrix> {
        if prosody.cols() != 6 {
            return Err(Error::ShapeMismatch {
                op: "prosody input",
                lhs: vec![prosody.rows(), prosody.cols()],
                rhs: vec![prosody.rows(), 6],
            });
        }
        let mut out = prosody.clone();
        let mask = self.config.feature_mask;
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                if !mask.enabled(c) {
                    *v = 0.0;
                }
            }
        }
        Ok(out)
    }

    /// Frames produced by the encoder for `input_frames` input frames.
    pub fn encoded_frames(&self, input_frames: usize) -> usize {
        self.config.encoder.output_frames(input_frames)
    }

    fn encoder(&self, g: &mut Graph, x: Var, mode: Source<'_>) -> Result<Var> {
        let enc = self.config.encoder;
        let mut h = x;
        for i in 0..enc.n_layers {
            let w = self.p(g, &format!("encoder.conv{i}.weight"), mode)?;
            let b = self.p(g, &format!("encoder.conv{i}.bias"), mode)?;
            let stride = if i == 0 { enc.downsample_factor } else { 1 };
            let y = g.conv1d(h, w, b, stride)?;
            h = g.gelu(y)?;
        }
        Ok(h)
    }

    fn input_matrix(&self, features: &Features) -> Result<Matrix> {
        let (m, expected) = if self.config.uses_mel() {
            (standardize_mel(&features.mel), self.config.encoder.in_channels)
        } else {
            (self.masked_prosody(&features.prosody)?, 6)
        };
        if m.cols() != expected {
            return Err(Error::ShapeMismatch {
                op: "encoder input",
                lhs: vec![m.rows(), m.cols()],
                rhs: vec![m.rows(), expected],
            });
        }
        Ok(m)
    }

    /// Forward pass for one utterance.
    pub fn forward(&self, g: &mut Graph, features: &Features, mode: ParamMode) -> Result<ForwardOut> {
        self.forward_from(g, features, Source::Mode(mode))
    }

    /// Forward pass reading parameters from graph nodes the caller already
    /// created, keyed by parameter name.
    pub fn forward_bound(&self, g: &mut Graph, features: &Features, vars: &BTreeMap<String, Var>) -> Result<ForwardOut> {
        self.forward_from(g, features, Source::Bound(vars))
    }

    fn forward_from(&self, g: &mut Graph, features: &Features, mode: Source<'_>) -> Result<ForwardOut> {
        let cfg = self.config;
        if features.mel.rows() != features.prosody.rows() {
            return Err(Error::Alignment {
                from: features.prosody.rows(),
                to: features.mel.rows(),
            });
        }
        let x = g.constant(Tensor::from_matrix(&self.input_matrix(features)?))?;
        let z_f = self.encoder(g, x, mode)?;
        let frames = g.value(z_f).rows();
        let aligned_prosody = || -> Result<Matrix> {
            align_frames(&self.masked_prosody(&features.prosody)?, frames)
        };

        let pooled_input = match cfg.lstm_hidden {
            Some(_) => {
                let p = g.constant(Tensor::from_matrix(&aligned_prosody()?))?;
                let joined = g.concat_cols(z_f, p)?;
                let mut layers = Vec::with_capacity(cfg.lstm_layers);
                for l in 0..cfg.lstm_layers {
                    layers.push(LstmLayer {
                        w_ih: self.p(g, &format!("lstm.l{l}.w_ih"), mode)?,
                        w_hh: self.p(g, &format!("lstm.l{l}.w_hh"), mode)?,
                        bias: self.p(g, &format!("lstm.l{l}.bias"), mode)?,
                    });
                }
                lstm_forward(g, joined, &layers)?
            }
            None => z_f,
        };
        let keys = match cfg.sap.key_source {
            KeySource::SelfFeatures => pooled_input,
            KeySource::ProsodyFeatures => g.constant(Tensor::from_matrix(&aligned_prosody()?))?,
        };
        let w = self.p(g, "sap.w", mode)?;
        let (pooled, alpha) = sap_forward(g, pooled_input, keys, w)?;
        let cw = self.p(g, "classifier.weight", mode)?;
        let cb = self.p(g, "classifier.bias", mode)?;
        let logits = g.matmul(pooled, cw)?;
        let logits = g.add_row_bias(logits, cb)?;
        Ok(ForwardOut {
            frame_features: z_f,
            alpha,
            pooled,
            logits,
        })
    }

    /// Logits and attention weights without building gradients.
    pub fn infer(&self, features: &Features) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, features, ParamMode::Frozen)?;
        Ok((g.value(out.logits).data().to_vec(), g.value(out.alpha).data().to_vec()))
    }

    /// Argmax class; ties go to the lower index.
    pub fn predict(&self, features: &Features) -> Result<usize> {
        let (logits, _) = self.infer(features)?;
        Ok(argmax(&logits))
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}
