//! The two asymmetric branches: a visual encoder that summarises a clip as a
//! single `1×D_v` vector, and a 1D-CNN audio encoder that keeps time.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ops::conv1d_out_len;
use crate::numerics::{BoundParams, ParamId, ParamStore, Tape, Tensor, Var};

/// Visual input for one clip.
#[derive(Clone, Debug, PartialEq)]
pub enum VisualInput {
    /// Grayscale frames, `[N_f, H, W]`.
    Frames(Tensor),
    /// Precomputed clip descriptor, `[1, D_v]`.
    Features(Tensor),
}

/// Frame-level acoustic features, `[T_a, F_a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioInput {
    pub features: Tensor,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VisualEncoderConfig {
    /// Clip descriptors are used as-is; `dim` is `D_v`.
    Passthrough { dim: usize },
    /// Shared square kernel over every frame, ReLU, mean over all frame
    /// positions, then a linear map to `out_dim`.
    Conv {
        height: usize,
        width: usize,
        kernel: usize,
        stride: usize,
        channels: usize,
        out_dim: usize,
    },
}

impl VisualEncoderConfig {
    pub fn output_dim(&self) -> usize {
        match *self {
            Self::Passthrough { dim } => dim,
            Self::Conv { out_dim, .. } => out_dim,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Self::Passthrough { dim: 0 } => {
                Err(Error::InvalidConfig("visual dim must be positive".into()))
            }
            Self::Conv {
                height,
                width,
                kernel,
                stride,
                channels,
                out_dim,
            } => {
                if height < 8 || width < 8 {
                    return Err(Error::InvalidConfig(format!(
                        "frame geometry {height}x{width} below the 8x8 minimum"
                    )));
                }
                if kernel == 0 || kernel > height.min(width) || stride == 0 {
                    return Err(Error::InvalidConfig(format!(
                        "visual kernel {kernel} / stride {stride} invalid for {height}x{width}"
                    )));
                }
                if channels == 0 || out_dim == 0 {
                    return Err(Error::InvalidConfig(
                        "visual widths must be positive".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AudioLayer {
    pub channels: usize,
    pub width: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AudioEncoderConfig {
    /// `F_a`, features per audio frame.
    pub input_features: usize,
    pub layers: Vec<AudioLayer>,
}

impl AudioEncoderConfig {
    /// `D_a`: channels of the last layer, or `F_a` for an empty stack.
    pub fn output_dim(&self) -> usize {
        self.layers
            .last()
            .map_or(self.input_features, |l| l.channels)
    }

    /// Smallest `T_a` for which every layer still has at least one output step.
    pub fn min_len(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .fold(1, |need, l| (need - 1) * l.stride + l.width)
    }

    /// Output length for an input of `len` steps.
    pub fn output_len(&self, len: usize) -> Result<usize> {
        if len < self.min_len() {
            return Err(Error::SequenceTooShort {
                required: self.min_len(),
                got: len,
            });
        }
        self.layers
            .iter()
            .try_fold(len, |t, l| conv1d_out_len(t, l.width, l.stride))
    }

    fn validate(&self) -> Result<()> {
        if self.input_features == 0 {
            return Err(Error::InvalidConfig(
                "audio input_features must be positive".into(),
            ));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.channels == 0 || l.width == 0 || l.stride == 0 {
                return Err(Error::InvalidConfig(format!(
                    "audio layer {i} has a zero extent: {l:?}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub visual: VisualEncoderConfig,
    pub audio: AudioEncoderConfig,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        self.visual.validate()?;
        self.audio.validate()
    }
}

#[derive(Clone, Debug)]
struct VisualConvParams {
    kernel: ParamId,
    bias: ParamId,
    proj_w: ParamId,
    proj_b: ParamId,
}

#[derive(Clone, Debug)]
struct AudioConvParams {
    kernels: ParamId,
    bias: ParamId,
    stride: usize,
}

/// Parameter layout of both branches inside a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct EncoderParams {
    config: EncoderConfig,
    visual: Option<VisualConvParams>,
    audio: Vec<AudioConvParams>,
}

/// Glorot-uniform matrix.
pub(crate) fn glorot(rng: &mut impl Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("positive extents")
}

impl EncoderParams {
    /// Registers encoder parameters in `store`, drawing weights from `rng`.
    pub fn init(
        config: &EncoderConfig,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let visual = match config.visual {
            VisualEncoderConfig::Passthrough { .. } => None,
            VisualEncoderConfig::Conv {
                kernel,
                channels,
                out_dim,
                ..
            } => {
                let k2 = kernel * kernel;
                Some(VisualConvParams {
                    kernel: store.add(
                        "visual.conv.kernel",
                        glorot(rng, &[k2, channels], k2, channels),
                    ),
                    bias: store.add("visual.conv.bias", Tensor::zeros(&[1, channels])),
                    proj_w: store.add(
                        "visual.proj.weight",
                        glorot(rng, &[channels, out_dim], channels, out_dim),
                    ),
                    proj_b: store.add("visual.proj.bias", Tensor::zeros(&[1, out_dim])),
                })
            }
        };
        let mut audio = Vec::with_capacity(config.audio.layers.len());
        let mut f_in = config.audio.input_features;
        for (i, l) in config.audio.layers.iter().enumerate() {
            let fan_in = l.width * f_in;
            let kernels = glorot(rng, &[l.channels, l.width, f_in], fan_in, l.channels);
            audio.push(AudioConvParams {
                kernels: store.add(format!("audio.conv{i}.kernels"), kernels),
                bias: store.add(
                    format!("audio.conv{i}.bias"),
                    Tensor::zeros(&[1, l.channels]),
                ),
                stride: l.stride,
            });
            f_in = l.channels;
        }
        Ok(Self {
            config: config.clone(),
            visual,
            audio,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// Visual branch on a tape; the result is always `1×D_v`.
    pub fn encode_visual(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        input: &VisualInput,
    ) -> Result<Var> {
        match (&self.config.visual, input) {
            (VisualEncoderConfig::Passthrough { dim }, VisualInput::Features(f)) => {
                if f.shape() != [1, *dim] {
                    return Err(Error::BadFrameGeometry(format!(
                        "expected clip features of shape [1, {dim}], got {:?}",
                        f.shape()
                    )));
                }
                Ok(tape.constant(f.clone()))
            }
            (
                &VisualEncoderConfig::Conv {
                    height,
                    width,
                    kernel,
                    stride,
                    ..
                },
                VisualInput::Frames(frames),
            ) => {
                let vp = self.visual.as_ref().expect("conv encoder has parameters");
                let patches = im2col(frames, height, width, kernel, stride)?;
                let x = tape.constant(patches);
                let conv = tape.affine(x, p.var(vp.kernel), p.var(vp.bias))?;
                let act = tape.relu(conv)?;
                let pooled = tape.mean_pool_time(act)?;
                tape.affine(pooled, p.var(vp.proj_w), p.var(vp.proj_b))
            }
            (cfg, _) => Err(Error::BadFrameGeometry(format!(
                "visual input kind does not match encoder {cfg:?}"
            ))),
        }
    }

    /// Audio branch on a tape; the result is `T'_a × D_a`, in input time order.
    pub fn encode_audio(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        input: &AudioInput,
    ) -> Result<Var> {
        let (t, f) = input.features.dims2()?;
        if f != self.config.audio.input_features {
            return Err(Error::ShapeMismatch {
                op: "encode_audio",
                left: input.features.shape().to_vec(),
                right: vec![t, self.config.audio.input_features],
            });
        }
        self.config.audio.output_len(t)?;
        let mut x = tape.constant(input.features.clone());
        for layer in &self.audio {
            let conv = tape.conv1d(x, p.var(layer.kernels), layer.stride)?;
            let biased = tape.add_row(conv, p.var(layer.bias))?;
            x = tape.relu(biased)?;
        }
        Ok(x)
    }
}

/// Unrolls every `k×k` patch of every frame into one row of a
/// `[N_f · patches, k²]` matrix.
fn im2col(frames: &Tensor, height: usize, width: usize, k: usize, stride: usize) -> Result<Tensor> {
    let [n_f, h, w] = frames.shape()[..] else {
        return Err(Error::BadFrameGeometry(format!(
            "frames must be [N_f, H, W], got {:?}",
            frames.shape()
        )));
    };
    if n_f < 2 {
        return Err(Error::BadFrameGeometry(format!(
            "need at least 2 frames (onset and apex), got {n_f}"
        )));
    }
    if h != height || w != width {
        return Err(Error::BadFrameGeometry(format!(
            "expected {height}x{width} frames, got {h}x{w}"
        )));
    }
    let ph = (h - k) / stride + 1;
    let pw = (w - k) / stride + 1;
    let d = frames.data();
    let mut out = Vec::with_capacity(n_f * ph * pw * k * k);
    for f in 0..n_f {
        let frame = &d[f * h * w..(f + 1) * h * w];
        for py in 0..ph {
            for px in 0..pw {
                for dy in 0..k {
                    let row = (py * stride + dy) * w + px * stride;
                    out.extend_from_slice(&frame[row..row + k]);
                }
            }
        }
    }
    Tensor::new(vec![n_f * ph * pw, k * k], out)
}
