use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::attention::{av_attention, va_attention, AttentionParams};
use crate::data::AVSample;
use crate::encoders::{glorot, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::numerics::ops::argmax;
use crate::numerics::{BoundParams, ParamId, ParamStore, Tape, Tensor, Var};
use crate::rng;

/// Which path of the model produces the logits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Visual,
    Audio,
    Fused,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Visual, Modality::Audio, Modality::Fused];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Visual => "visual",
            Modality::Audio => "audio",
            Modality::Fused => "fused",
        }
    }

    /// Row label used in ablation tables.
    pub fn table_label(self) -> &'static str {
        match self {
            Modality::Visual => "Visual",
            Modality::Audio => "Audio",
            Modality::Fused => "Visual+Audio",
        }
    }

    pub fn needs_visual(self) -> bool {
        self != Modality::Audio
    }

    pub fn needs_audio(self) -> bool {
        self != Modality::Visual
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "visual" => Ok(Modality::Visual),
            "audio" => Ok(Modality::Audio),
            "fused" => Ok(Modality::Fused),
            other => Err(Error::InvalidConfig(format!("unknown modality `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `D_c`, the shared latent width.
    pub latent_dim: usize,
    /// `h`.
    pub heads: usize,
    /// `d_k`; defaults to `D_c / h`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_dim: Option<usize>,
    /// `d_v`; defaults to `D_c / h`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_dim: Option<usize>,
    pub classes: usize,
    pub encoders: EncoderConfig,
}

impl ModelConfig {
    pub fn key_dim(&self) -> usize {
        self.key_dim.unwrap_or(self.latent_dim / self.heads.max(1))
    }

    pub fn value_dim(&self) -> usize {
        self.value_dim
            .unwrap_or(self.latent_dim / self.heads.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.latent_dim == 0 {
            return bad("latent_dim must be positive".into());
        }
        if self.heads == 0 {
            return bad("heads must be at least 1".into());
        }
        if (self.key_dim.is_none() || self.value_dim.is_none())
            && !self.latent_dim.is_multiple_of(self.heads)
        {
            return bad(format!(
                "latent_dim {} is not divisible by heads {}; set key_dim and value_dim explicitly",
                self.latent_dim, self.heads
            ));
        }
        if self.key_dim() == 0 || self.value_dim() == 0 {
            return bad("key_dim and value_dim must be positive".into());
        }
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        self.encoders.validate()
    }
}

#[derive(Clone, Copy, Debug)]
struct Affine {
    weight: ParamId,
    bias: ParamId,
}

impl Affine {
    fn init(
        name: &str,
        fan_in: usize,
        fan_out: usize,
        store: &mut ParamStore,
        rng: &mut impl rand::Rng,
    ) -> Self {
        Self {
            weight: store.add(
                format!("{name}.weight"),
                glorot(rng, &[fan_in, fan_out], fan_in, fan_out),
            ),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[1, fan_out])),
        }
    }

    fn apply(&self, tape: &mut Tape, p: &BoundParams, x: Var) -> Result<Var> {
        tape.affine(x, p.var(self.weight), p.var(self.bias))
    }
}

/// Layout of projections, both attention streams and the three heads.
#[derive(Clone, Debug)]
pub struct FusionParams {
    proj_visual: Affine,
    proj_audio: Affine,
    pub va: AttentionParams,
    pub av: AttentionParams,
    classifier: Affine,
    visual_head: Affine,
    audio_head: Affine,
}

impl FusionParams {
    fn init(cfg: &ModelConfig, store: &mut ParamStore, rng: &mut impl rand::Rng) -> Self {
        let dc = cfg.latent_dim;
        let (dk, dv) = (cfg.key_dim(), cfg.value_dim());
        Self {
            proj_visual: Affine::init(
                "proj.visual",
                cfg.encoders.visual.output_dim(),
                dc,
                store,
                rng,
            ),
            proj_audio: Affine::init(
                "proj.audio",
                cfg.encoders.audio.output_dim(),
                dc,
                store,
                rng,
            ),
            va: AttentionParams::init("va", dc, cfg.heads, dk, dv, store, rng),
            av: AttentionParams::init("av", dc, cfg.heads, dk, dv, store, rng),
            classifier: Affine::init("classifier", 2 * dc, cfg.classes, store, rng),
            visual_head: Affine::init("head.visual", dc, cfg.classes, store, rng),
            audio_head: Affine::init("head.audio", dc, cfg.classes, store, rng),
        }
    }

    pub fn classifier_weight(&self) -> ParamId {
        self.classifier.weight
    }

    pub fn classifier_bias(&self) -> ParamId {
        self.classifier.bias
    }

    pub fn visual_projection(&self) -> (ParamId, ParamId) {
        (self.proj_visual.weight, self.proj_visual.bias)
    }

    pub fn audio_projection(&self) -> (ParamId, ParamId) {
        (self.proj_audio.weight, self.proj_audio.bias)
    }
}

/// Intermediate tape handles of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub logits: Var,
    /// `v'`, `1×D_c`.
    pub visual_latent: Option<Var>,
    /// `A'`, `T_a×D_c`.
    pub audio_latent: Option<Var>,
    /// `ṽ`, `1×D_c`.
    pub va_output: Option<Var>,
    /// `Ã`, `T_a×D_c`.
    pub av_output: Option<Var>,
    pub va_weights: Vec<Var>,
    pub av_weights: Vec<Var>,
}

/// Every learnable parameter plus the configuration that shaped them.
#[derive(Clone, Debug)]
pub struct FusionModel {
    config: ModelConfig,
    params: ParamStore,
    encoders: EncoderParams,
    fusion: FusionParams,
}

impl FusionModel {
    /// Fresh model; weights come from the `"init"` sub-stream of `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(seed, "init");
        let mut params = ParamStore::new();
        let encoders = EncoderParams::init(&config.encoders, &mut params, &mut rng)?;
        let fusion = FusionParams::init(&config, &mut params, &mut rng);
        Ok(Self {
            config,
            params,
            encoders,
            fusion,
        })
    }

    /// Rebuilds a model around existing parameter values; names and shapes
    /// must match the layout `config` implies.
    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let mut model = Self::init(config, 0)?;
        if model.params.len() != params.len() {
            return Err(Error::CheckpointMismatch(format!(
                "expected {} tensors, found {}",
                model.params.len(),
                params.len()
            )));
        }
        for ((name, t), (other_name, other)) in model.params.iter().zip(params.iter()) {
            if name != other_name || t.shape() != other.shape() {
                return Err(Error::CheckpointMismatch(format!(
                    "expected `{name}` {:?}, found `{other_name}` {:?}",
                    t.shape(),
                    other.shape()
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn encoders(&self) -> &EncoderParams {
        &self.encoders
    }

    pub fn fusion(&self) -> &FusionParams {
        &self.fusion
    }

    /// `(v', A')`: independent affine maps into the `D_c` space.
    pub fn project_features(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        visual: Var,
        audio: Var,
    ) -> Result<(Var, Var)> {
        let v = self.fusion.proj_visual.apply(tape, p, visual)?;
        let a = self.fusion.proj_audio.apply(tape, p, audio)?;
        Ok((v, a))
    }

    /// Mean-pools `Ã` over time, concatenates with `ṽ`, applies the classifier.
    pub fn fuse_and_classify(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        va_out: Var,
        av_out: Var,
    ) -> Result<Var> {
        let pooled = tape.mean_pool_time(av_out)?;
        let fused = tape.concat_cols(&[va_out, pooled])?;
        self.fusion.classifier.apply(tape, p, fused)
    }

    /// Forward pass for one sample along the requested path.
    pub fn forward_traced(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        sample: &AVSample,
        modality: Modality,
    ) -> Result<ForwardTrace> {
        let missing = |m: &'static str| Error::MissingModality {
            clip: sample.clip_id.clone(),
            modality: m,
        };
        let visual = if modality.needs_visual() {
            let input = sample.visual.as_ref().ok_or_else(|| missing("visual"))?;
            Some(self.encoders.encode_visual(tape, p, input)?)
        } else {
            None
        };
        let audio = if modality.needs_audio() {
            let input = sample.audio.as_ref().ok_or_else(|| missing("audio"))?;
            Some(self.encoders.encode_audio(tape, p, input)?)
        } else {
            None
        };
        let visual_latent = visual
            .map(|v| self.fusion.proj_visual.apply(tape, p, v))
            .transpose()?;
        let audio_latent = audio
            .map(|a| self.fusion.proj_audio.apply(tape, p, a))
            .transpose()?;

        let (mut va_output, mut av_output) = (None, None);
        let (mut va_weights, mut av_weights) = (Vec::new(), Vec::new());
        let logits = match (modality, visual_latent, audio_latent) {
            (Modality::Visual, Some(v), _) => self.fusion.visual_head.apply(tape, p, v)?,
            (Modality::Audio, _, Some(a)) => {
                let pooled = tape.mean_pool_time(a)?;
                self.fusion.audio_head.apply(tape, p, pooled)?
            }
            (Modality::Fused, Some(v), Some(a)) => {
                let va = va_attention(tape, v, a, &self.fusion.va.vars(p))?;
                let av = av_attention(tape, a, v, &self.fusion.av.vars(p))?;
                va_output = Some(va.output);
                av_output = Some(av.output);
                va_weights = va.weights;
                av_weights = av.weights;
                self.fuse_and_classify(tape, p, va.output, av.output)?
            }
            _ => unreachable!("modality inputs were resolved above"),
        };
        Ok(ForwardTrace {
            logits,
            visual_latent,
            audio_latent,
            va_output,
            av_output,
            va_weights,
            av_weights,
        })
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        sample: &AVSample,
        modality: Modality,
    ) -> Result<Var> {
        Ok(self.forward_traced(tape, p, sample, modality)?.logits)
    }

    /// `1×C` logits computed on a private tape.
    pub fn logits(&self, sample: &AVSample, modality: Modality) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = tape.bind(&self.params);
        let l = self.forward(&mut tape, &p, sample, modality)?;
        Ok(tape.value(l).clone())
    }

    /// Arg-max class; ties go to the lowest index.
    pub fn predict(&self, sample: &AVSample, modality: Modality) -> Result<usize> {
        Ok(argmax(self.logits(sample, modality)?.data()))
    }

    /// Records the mean (optionally class-weighted) cross-entropy of `batch`
    /// evaluated at `params` on `tape`.
    pub fn batch_loss_on(
        &self,
        tape: &mut Tape,
        params: &ParamStore,
        batch: &[&AVSample],
        modality: Modality,
        class_weights: Option<&[f64]>,
    ) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::EmptyTrainSet);
        }
        let p = tape.bind(params);
        let mut total: Option<Var> = None;
        for s in batch {
            if s.label >= self.config.classes {
                return Err(Error::LabelOutOfRange {
                    label: s.label,
                    classes: self.config.classes,
                });
            }
            let logits = self.forward(tape, &p, s, modality)?;
            let w = class_weights.map_or(1.0, |w| w[s.label]);
            let l = tape.cross_entropy(logits, s.label, w)?;
            total = Some(match total {
                Some(acc) => tape.add(acc, l)?,
                None => l,
            });
        }
        tape.scale(total.expect("non-empty batch"), 1.0 / batch.len() as f64)
    }

    /// Batch loss at arbitrary parameter values (used for finite differences).
    pub fn loss_at(
        &self,
        params: &ParamStore,
        batch: &[&AVSample],
        modality: Modality,
        class_weights: Option<&[f64]>,
    ) -> Result<f64> {
        let mut tape = Tape::new();
        let l = self.batch_loss_on(&mut tape, params, batch, modality, class_weights)?;
        Ok(tape.value(l).data()[0])
    }

    /// Batch loss and one gradient tensor per parameter (store order).
    pub fn loss_and_grads(
        &self,
        batch: &[&AVSample],
        modality: Modality,
        class_weights: Option<&[f64]>,
    ) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let l = self.batch_loss_on(&mut tape, &self.params, batch, modality, class_weights)?;
        let grads = tape.backward(l)?.param_grads(&self.params);
        Ok((tape.value(l).data()[0], grads))
    }
}
