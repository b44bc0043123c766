//! LOSO evaluation runs and the three-way modality ablation.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::{loso_splits, Fold, FoldPlan};
use super::metrics::{ClassMetrics, ConfusionMatrix};
use super::train::{train_model, TrainConfig};
use crate::data::{AVSample, Dataset, VisualLayout};
use crate::encoders::{AudioEncoderConfig, AudioLayer, EncoderConfig, VisualEncoderConfig};
use crate::error::{Error, Result};
use crate::fusion::{Modality, ModelConfig};
use crate::rng;

/// Everything that shapes a run apart from the data and the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

impl ExperimentConfig {
    /// Desk-scale defaults sized to a dataset layout: `D_c = 16`, two heads,
    /// two width-3 audio conv layers, 40 epochs of Adam at `1e-3`.
    pub fn standard(visual: VisualLayout, audio_features: usize, classes: usize) -> Self {
        let visual = match visual {
            VisualLayout::Features { dim } => VisualEncoderConfig::Passthrough { dim },
            VisualLayout::Frames { height, width } => VisualEncoderConfig::Conv {
                height,
                width,
                kernel: 3,
                stride: 2,
                channels: 8,
                out_dim: 16,
            },
        };
        let layer = AudioLayer {
            channels: 16,
            width: 3,
            stride: 1,
        };
        Self {
            model: ModelConfig {
                latent_dim: 16,
                heads: 2,
                key_dim: None,
                value_dim: None,
                classes,
                encoders: EncoderConfig {
                    visual,
                    audio: AudioEncoderConfig {
                        input_features: audio_features,
                        layers: vec![layer, layer],
                    },
                },
            },
            train: TrainConfig {
                epochs: 40,
                batch_size: 16,
                ..TrainConfig::default()
            },
        }
    }

    pub fn for_dataset(data: &Dataset) -> Self {
        Self::standard(data.visual, data.audio_features, data.classes())
    }
}

/// How folds are scheduled. Both produce identical reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Sequential,
    Parallel,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prediction {
    pub clip_id: String,
    pub subject_id: String,
    pub predicted: usize,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldResult {
    pub subject: String,
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub accuracy: f64,
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NamedClassMetrics {
    pub class: String,
    #[serde(flatten)]
    pub metrics: ClassMetrics,
}

/// Metrics over the pooled held-out predictions of every fold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub modality: Modality,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub fold_plan_hash: String,
    pub class_names: Vec<String>,
    pub accuracy: f64,
    pub uf1: f64,
    pub per_class: Vec<NamedClassMetrics>,
    /// Classes with no true and no predicted instances.
    pub degenerate_classes: Vec<String>,
    pub confusion: ConfusionMatrix,
    pub folds: Vec<FoldResult>,
    pub predictions: Vec<Prediction>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let w = self
            .class_names
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(5)
            .max(5);
        let _ = writeln!(
            out,
            "modality: {}  seed: {}",
            self.modality.table_label(),
            self.seed
        );
        let _ = writeln!(out, "fold plan: {}", self.fold_plan_hash);
        let _ = writeln!(
            out,
            "Acc: {:.2}%  UF1: {:.4}  ({} samples, {} folds)\n",
            100.0 * self.accuracy,
            self.uf1,
            self.predictions.len(),
            self.folds.len()
        );
        let _ = writeln!(
            out,
            "{:<w$}  {:>9}  {:>6}  {:>6}  {:>7}",
            "Class", "Precision", "Recall", "F1", "Support"
        );
        for m in &self.per_class {
            let flag = if m.metrics.degenerate {
                "  (degenerate)"
            } else {
                ""
            };
            let _ = writeln!(
                out,
                "{:<w$}  {:>9.4}  {:>6.4}  {:>6.4}  {:>7}{flag}",
                m.class, m.metrics.precision, m.metrics.recall, m.metrics.f1, m.metrics.support
            );
        }
        let _ = writeln!(out, "\nconfusion (rows true, columns predicted):");
        for (name, row) in self.class_names.iter().zip(&self.confusion.counts) {
            let cells: Vec<String> = row.iter().map(|c| format!("{c:>6}")).collect();
            let _ = writeln!(out, "{name:<w$}  {}", cells.join(""));
        }
        out
    }
}

fn class_names(samples: &[AVSample], classes: usize) -> Vec<String> {
    (0..classes)
        .map(|c| {
            samples
                .iter()
                .find(|s| s.label == c)
                .map_or_else(|| format!("class{c}"), |s| s.label_name.clone())
        })
        .collect()
}

fn check_inputs(
    samples: &[AVSample],
    classes: usize,
    needs_visual: bool,
    needs_audio: bool,
) -> Result<()> {
    for s in samples {
        let missing = |modality| Error::MissingModality {
            clip: s.clip_id.clone(),
            modality,
        };
        if needs_visual && s.visual.is_none() {
            return Err(missing("visual"));
        }
        if needs_audio && s.audio.is_none() {
            return Err(missing("audio"));
        }
        if s.label >= classes {
            return Err(Error::LabelOutOfRange {
                label: s.label,
                classes,
            });
        }
    }
    Ok(())
}

/// Seed for one fold; shared by every modality so the three ablation
/// settings start from the same weights and sample order.
pub fn fold_seed(seed: u64, subject: &str) -> u64 {
    rng::derive_seed(seed, &format!("fold:{subject}"))
}

fn run_fold(
    samples: &[AVSample],
    fold: &Fold,
    cfg: &ExperimentConfig,
    modality: Modality,
    seed: u64,
) -> Result<(FoldResult, Vec<Prediction>)> {
    if fold
        .train
        .iter()
        .any(|&i| samples[i].subject_id == fold.subject)
    {
        return Err(Error::SubjectLeakage(fold.subject.clone()));
    }
    let seed = fold_seed(seed, &fold.subject);
    let train: Vec<&AVSample> = fold.train.iter().map(|&i| &samples[i]).collect();
    let trained = train_model(&train, &cfg.model, &cfg.train, modality, seed)?;
    let preds = fold
        .test
        .iter()
        .map(|&i| {
            let s = &samples[i];
            Ok(Prediction {
                clip_id: s.clip_id.clone(),
                subject_id: s.subject_id.clone(),
                predicted: trained.model.predict(s, modality)?,
                label: s.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let correct = preds.iter().filter(|p| p.predicted == p.label).count();
    log::info!(
        "{} fold {}: {correct}/{} correct",
        modality.as_str(),
        fold.subject,
        preds.len()
    );
    Ok((
        FoldResult {
            subject: fold.subject.clone(),
            seed,
            train_size: fold.train.len(),
            test_size: fold.test.len(),
            accuracy: correct as f64 / preds.len() as f64,
            final_loss: trained.losses.last().copied().unwrap_or(f64::NAN),
        },
        preds,
    ))
}

fn run_plan(
    samples: &[AVSample],
    plan: &FoldPlan,
    hash: &str,
    cfg: &ExperimentConfig,
    modality: Modality,
    seed: u64,
    exec: Execution,
) -> Result<EvalReport> {
    let results: Vec<Result<(FoldResult, Vec<Prediction>)>> = match exec {
        Execution::Sequential => plan
            .folds
            .iter()
            .map(|f| run_fold(samples, f, cfg, modality, seed))
            .collect(),
        Execution::Parallel => plan
            .folds
            .par_iter()
            .map(|f| run_fold(samples, f, cfg, modality, seed))
            .collect(),
    };
    let mut folds = Vec::with_capacity(results.len());
    let mut predictions = Vec::with_capacity(samples.len());
    for r in results {
        let (fold, preds) = r?;
        folds.push(fold);
        predictions.extend(preds);
    }
    let classes = cfg.model.classes;
    let (p, l): (Vec<usize>, Vec<usize>) =
        predictions.iter().map(|x| (x.predicted, x.label)).unzip();
    let confusion = ConfusionMatrix::build(&p, &l, classes)?;
    let names = class_names(samples, classes);
    let per_class: Vec<NamedClassMetrics> = confusion
        .per_class()
        .into_iter()
        .zip(&names)
        .map(|(metrics, class)| NamedClassMetrics {
            class: class.clone(),
            metrics,
        })
        .collect();
    Ok(EvalReport {
        modality,
        seed,
        config: cfg.clone(),
        fold_plan_hash: hash.to_string(),
        accuracy: confusion.accuracy(),
        uf1: confusion.uf1(),
        degenerate_classes: per_class
            .iter()
            .filter(|m| m.metrics.degenerate)
            .map(|m| m.class.clone())
            .collect(),
        per_class,
        class_names: names,
        confusion,
        folds,
        predictions,
    })
}

/// Trains one fresh model per LOSO fold and scores the pooled held-out
/// predictions.
pub fn run_loso(
    samples: &[AVSample],
    cfg: &ExperimentConfig,
    modality: Modality,
    seed: u64,
    exec: Execution,
) -> Result<EvalReport> {
    cfg.model.validate()?;
    cfg.train.validate(cfg.model.classes)?;
    check_inputs(
        samples,
        cfg.model.classes,
        modality.needs_visual(),
        modality.needs_audio(),
    )?;
    let plan = loso_splits(samples)?;
    let hash = plan.hash(samples);
    run_plan(samples, &plan, &hash, cfg, modality, seed, exec)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub modality: Modality,
    pub label: String,
    pub accuracy: f64,
    pub uf1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationSummary {
    pub seed: u64,
    pub fold_plan_hash: String,
    pub rows: Vec<AblationRow>,
}

impl AblationSummary {
    pub fn row(&self, modality: Modality) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.modality == modality)
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:<14}  {:>7}  {:>6}\n", "Modality Type", "Acc (%)", "UF1");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<14}  {:>7.2}  {:>6.4}",
                r.label,
                100.0 * r.accuracy,
                r.uf1
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ablation {
    /// Visual, audio and fused, in that order.
    pub reports: Vec<EvalReport>,
    pub summary: AblationSummary,
}

/// Runs the visual-only, audio-only and fused settings over one shared fold
/// plan with identical per-fold seeds and budgets.
pub fn run_ablation(
    samples: &[AVSample],
    cfg: &ExperimentConfig,
    seed: u64,
    exec: Execution,
) -> Result<Ablation> {
    cfg.model.validate()?;
    cfg.train.validate(cfg.model.classes)?;
    check_inputs(samples, cfg.model.classes, true, true)?;
    let plan = loso_splits(samples)?;
    let hash = plan.hash(samples);
    let reports = Modality::ALL
        .iter()
        .map(|&m| run_plan(samples, &plan, &hash, cfg, m, seed, exec))
        .collect::<Result<Vec<_>>>()?;
    let rows = reports
        .iter()
        .map(|r| AblationRow {
            modality: r.modality,
            label: r.modality.table_label().to_string(),
            accuracy: r.accuracy,
            uf1: r.uf1,
        })
        .collect();
    Ok(Ablation {
        summary: AblationSummary {
            seed,
            fold_plan_hash: hash,
            rows,
        },
        reports,
    })
}
