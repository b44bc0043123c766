//! Seeded synthetic audio-visual dataset generator.
//!
//! Each class is mapped to a template group per modality. Classes sharing a
//! group in one modality are indistinguishable there, so the group maps
//! decide which classes each channel can separate. Every subject carries a
//! fixed offset added to all of its samples, and i.i.d. Gaussian noise is
//! added per value.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::annotation::{AnnotationRecord, Emotion};
use super::manifest::{Dataset, VisualLayout};
use super::sample::AVSample;
use crate::encoders::{AudioInput, VisualInput};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SynthVisual {
    Features {
        dim: usize,
    },
    Frames {
        frames: usize,
        height: usize,
        width: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub subjects: usize,
    pub samples_per_subject: usize,
    pub class_names: Vec<String>,
    /// Sampling probability per class; non-negative, summing to 1.
    pub class_weights: Vec<f64>,
    /// Template group per class in the visual channel.
    pub visual_groups: Vec<usize>,
    /// Template group per class in the audio channel.
    pub audio_groups: Vec<usize>,
    /// Standard deviation of per-value noise.
    pub noise: f64,
    /// Standard deviation of the per-subject offset.
    pub subject_shift: f64,
    /// Standard deviation of template entries.
    #[serde(default = "one")]
    pub template_scale: f64,
    /// `T_a`.
    pub audio_steps: usize,
    /// `F_a`.
    pub audio_features: usize,
    pub visual: SynthVisual,
}

fn one() -> f64 {
    1.0
}

impl SyntheticSpec {
    /// Three classes with complementary channels: vision separates Positive
    /// from {Negative, Surprise}, audio separates Surprise from
    /// {Positive, Negative}. Only the fused view separates all three.
    pub fn standard(seed: u64) -> Self {
        Self {
            seed,
            subjects: 10,
            samples_per_subject: 24,
            class_names: vec!["Positive".into(), "Negative".into(), "Surprise".into()],
            class_weights: vec![0.35, 0.30, 0.35],
            visual_groups: vec![0, 1, 1],
            audio_groups: vec![0, 0, 1],
            noise: 0.7,
            subject_shift: 0.5,
            template_scale: 1.0,
            audio_steps: 16,
            audio_features: 8,
            visual: SynthVisual::Features { dim: 16 },
        }
    }

    /// Parses and validates a TOML spec.
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text)
            .map_err(|e| Error::InvalidSpec(e.to_string().trim_end().to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        let c = self.class_names.len();
        if c < 2 {
            return bad(format!("class_names: need at least 2 classes, got {c}"));
        }
        if self.subjects == 0 {
            return bad("subjects: must be positive".into());
        }
        if self.samples_per_subject == 0 {
            return bad("samples_per_subject: must be positive".into());
        }
        for (field, len) in [
            ("class_weights", self.class_weights.len()),
            ("visual_groups", self.visual_groups.len()),
            ("audio_groups", self.audio_groups.len()),
        ] {
            if len != c {
                return bad(format!("{field}: expected {c} entries, got {len}"));
            }
        }
        if self
            .class_weights
            .iter()
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return bad("class_weights: entries must be finite and non-negative".into());
        }
        let total: f64 = self.class_weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("class_weights: must sum to 1, got {total}"));
        }
        for (field, v) in [
            ("noise", self.noise),
            ("subject_shift", self.subject_shift),
            ("template_scale", self.template_scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{field}: must be finite and non-negative, got {v}"));
            }
        }
        if self.audio_steps == 0 || self.audio_features == 0 {
            return bad("audio_steps and audio_features must be positive".into());
        }
        match self.visual {
            SynthVisual::Features { dim: 0 } => bad("visual.dim: must be positive".into()),
            SynthVisual::Frames {
                frames,
                height,
                width,
            } if frames < 2 || height < 8 || width < 8 => bad(format!(
                "visual: need frames >= 2 and 8x8 minimum, got {frames}x{height}x{width}"
            )),
            _ => Ok(()),
        }
    }

    fn visual_len(&self) -> usize {
        match self.visual {
            SynthVisual::Features { dim } => dim,
            SynthVisual::Frames { height, width, .. } => height * width,
        }
    }
}

fn gaussian(rng: &mut impl Rng, n: usize, sd: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        })
        .collect()
}

fn templates(rng: &mut impl Rng, groups: &[usize], n: usize, sd: f64) -> Vec<Vec<f64>> {
    let count = groups.iter().max().map_or(0, |g| g + 1);
    (0..count).map(|_| gaussian(rng, n, sd)).collect()
}

/// A generated dataset plus matching synthetic annotation records.
#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub dataset: Dataset,
    pub annotations: Vec<AnnotationRecord>,
}

pub fn subject_name(i: usize) -> String {
    format!("S{:02}", i + 1)
}

/// Generates the whole dataset as a pure function of `spec`.
pub fn synthesize_dataset(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, "synth");
    let v_len = spec.visual_len();
    let a_len = spec.audio_steps * spec.audio_features;

    let v_templates = templates(&mut rng, &spec.visual_groups, v_len, spec.template_scale);
    let a_templates = templates(&mut rng, &spec.audio_groups, a_len, spec.template_scale);
    let offsets: Vec<(Vec<f64>, Vec<f64>)> = (0..spec.subjects)
        .map(|_| {
            (
                gaussian(&mut rng, v_len, spec.subject_shift),
                gaussian(&mut rng, spec.audio_features, spec.subject_shift),
            )
        })
        .collect();
    let picker = WeightedIndex::new(&spec.class_weights)
        .map_err(|e| Error::InvalidSpec(format!("class_weights: {e}")))?;
    let noise =
        Normal::new(0.0, spec.noise).map_err(|e| Error::InvalidSpec(format!("noise: {e}")))?;

    let mut samples = Vec::with_capacity(spec.subjects * spec.samples_per_subject);
    for (s, (v_off, a_off)) in offsets.iter().enumerate() {
        for i in 0..spec.samples_per_subject {
            let label = picker.sample(&mut rng);
            let vt = &v_templates[spec.visual_groups[label]];
            let visual = match spec.visual {
                SynthVisual::Features { dim } => {
                    let data = (0..dim)
                        .map(|j| vt[j] + v_off[j] + noise.sample(&mut rng))
                        .collect();
                    VisualInput::Features(Tensor::new(vec![1, dim], data)?)
                }
                SynthVisual::Frames {
                    frames,
                    height,
                    width,
                } => {
                    let mut data = Vec::with_capacity(frames * v_len);
                    for f in 0..frames {
                        // Intensity ramps from onset to apex.
                        let ramp = (f + 1) as f64 / frames as f64;
                        for j in 0..v_len {
                            data.push(ramp * vt[j] + v_off[j] + noise.sample(&mut rng));
                        }
                    }
                    VisualInput::Frames(Tensor::new(vec![frames, height, width], data)?)
                }
            };
            let at = &a_templates[spec.audio_groups[label]];
            let audio: Vec<f64> = (0..a_len)
                .map(|j| at[j] + a_off[j % spec.audio_features] + noise.sample(&mut rng))
                .collect();
            samples.push(AVSample {
                clip_id: format!("{}_{:04}", subject_name(s), i),
                subject_id: subject_name(s),
                visual: Some(visual),
                audio: Some(AudioInput {
                    features: Tensor::new(vec![spec.audio_steps, spec.audio_features], audio)?,
                }),
                label,
                label_name: spec.class_names[label].clone(),
            });
        }
    }

    let annotations = synth_annotations(spec, &samples);
    let visual = match spec.visual {
        SynthVisual::Features { dim } => VisualLayout::Features { dim },
        SynthVisual::Frames { height, width, .. } => VisualLayout::Frames { height, width },
    };
    Ok(SyntheticDataset {
        dataset: Dataset {
            class_names: spec.class_names.clone(),
            visual,
            audio_features: spec.audio_features,
            samples,
        },
        annotations,
    })
}

fn au_pool(emotion: Emotion) -> &'static [&'static str] {
    match emotion {
        Emotion::Positive => &["AU6", "AU12", "AU25"],
        Emotion::Negative => &["AU4", "AU7", "AU15", "AU17"],
        Emotion::Surprise => &["AU1", "AU2", "AU5", "AU26"],
        Emotion::Others => &["AU14", "AU24", "AU43"],
    }
}

/// Valid records (100 fps, at most 50 frames) with AUs drawn from a
/// per-emotion pool; drawn from their own sub-stream.
fn synth_annotations(spec: &SyntheticSpec, samples: &[AVSample]) -> Vec<AnnotationRecord> {
    let mut rng = rng::stream(spec.seed, "annotations");
    samples
        .iter()
        .map(|s| {
            let emotion = Emotion::from_name(&s.label_name).unwrap_or(Emotion::Others);
            let onset = rng.random_range(0..10_000u64);
            let rise = rng.random_range(1..=20u64);
            let fall = rng.random_range(1..=(50 - rise));
            let pool = au_pool(emotion);
            let mut au_codes: std::collections::BTreeSet<String> = pool
                .iter()
                .filter(|_| rng.random_bool(0.6))
                .map(|c| c.to_string())
                .collect();
            if au_codes.is_empty() {
                au_codes.insert(pool[0].to_string());
            }
            if rng.random_bool(0.8) {
                au_codes.insert("AU50".into());
            }
            AnnotationRecord {
                clip_id: s.clip_id.clone(),
                subject_id: s.subject_id.clone(),
                onset_frame: onset,
                apex_frame: onset + rise,
                offset_frame: onset + rise + fall,
                fps: 100.0,
                au_codes,
                emotion,
            }
        })
        .collect()
}
