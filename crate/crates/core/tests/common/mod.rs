//! Shared fixtures and independent reference implementations for the
//! integration suites. Nothing here calls into the crate's numerics.

#![allow(dead_code)]

use amfnet::data::{synthesize_dataset, AVSample, Dataset, SynthVisual, SyntheticSpec};
use amfnet::encoders::{AudioEncoderConfig, AudioLayer, EncoderConfig, VisualEncoderConfig};
use amfnet::eval::{ExperimentConfig, TrainConfig};
use amfnet::fusion::ModelConfig;
use amfnet::numerics::Tensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_mat(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Mat {
    (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| scale * rng.random_range(-1.0..1.0))
                .collect()
        })
        .collect()
}

pub fn tensor(m: &Mat) -> Tensor {
    Tensor::from_rows(m).unwrap()
}

pub fn rows_of(t: &Tensor) -> Mat {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

/// Multi-head attention written out index by index.
pub fn oracle_multi_head(q: &Mat, k: &Mat, v: &Mat, heads: &[[Mat; 3]], wo: &Mat) -> Mat {
    let proj = |x: &Mat, w: &Mat| -> Mat {
        x.iter()
            .map(|row| {
                (0..w[0].len())
                    .map(|j| (0..row.len()).map(|i| row[i] * w[i][j]).sum())
                    .collect()
            })
            .collect()
    };
    let mut concat: Mat = vec![Vec::new(); q.len()];
    for [wq, wk, wv] in heads {
        let (qp, kp, vp) = (proj(q, wq), proj(k, wk), proj(v, wv));
        let d_k = wk[0].len() as f64;
        for (a, qrow) in qp.iter().enumerate() {
            let scores: Vec<f64> = kp
                .iter()
                .map(|krow| qrow.iter().zip(krow).map(|(x, y)| x * y).sum::<f64>() / d_k.sqrt())
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for j in 0..vp[0].len() {
                concat[a].push((0..vp.len()).map(|b| e[b] / z * vp[b][j]).sum());
            }
        }
    }
    proj(&concat, wo)
}

/// Accuracy and macro-F1 counted pair by pair for each class.
pub fn oracle_metrics(preds: &[usize], labels: &[usize], classes: usize) -> (f64, f64) {
    let n = preds.len();
    let correct = (0..n).filter(|&i| preds[i] == labels[i]).count();
    let mut f1_sum = 0.0;
    for c in 0..classes {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for i in 0..n {
            match (preds[i] == c, labels[i] == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        if tp + fp + fn_ > 0 {
            f1_sum += 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
        }
    }
    (correct as f64 / n as f64, f1_sum / classes as f64)
}

/// Model sized to a dataset with `latent`, `heads` and one audio conv layer.
pub fn model_for(data: &Dataset, latent: usize, heads: usize, conv_width: usize) -> ModelConfig {
    let visual = match data.visual {
        amfnet::data::VisualLayout::Features { dim } => VisualEncoderConfig::Passthrough { dim },
        amfnet::data::VisualLayout::Frames { height, width } => VisualEncoderConfig::Conv {
            height,
            width,
            kernel: 3,
            stride: 2,
            channels: 3,
            out_dim: 5,
        },
    };
    ModelConfig {
        latent_dim: latent,
        heads,
        key_dim: None,
        value_dim: None,
        classes: data.classes(),
        encoders: EncoderConfig {
            visual,
            audio: AudioEncoderConfig {
                input_features: data.audio_features,
                layers: vec![AudioLayer {
                    channels: 6,
                    width: conv_width,
                    stride: 1,
                }],
            },
        },
    }
}

/// A fast dataset: `subjects` × `per_subject`, short sequences, low noise.
pub fn small_dataset(seed: u64, subjects: usize, per_subject: usize, noise: f64) -> Dataset {
    let mut spec = SyntheticSpec::standard(seed);
    spec.subjects = subjects;
    spec.samples_per_subject = per_subject;
    spec.audio_steps = 8;
    spec.audio_features = 4;
    spec.noise = noise;
    spec.visual = SynthVisual::Features { dim: 6 };
    synthesize_dataset(&spec).unwrap().dataset
}

pub fn small_experiment(data: &Dataset, epochs: usize) -> ExperimentConfig {
    ExperimentConfig {
        model: model_for(data, 8, 2, 3),
        train: TrainConfig {
            epochs,
            batch_size: 8,
            ..TrainConfig::default()
        },
    }
}

pub fn refs(samples: &[AVSample]) -> Vec<&AVSample> {
    samples.iter().collect()
}

/// The gradient-check problem: `D_c = 8`, two heads, three classes and two
/// samples whose seven audio steps become `T_a = 5` after a width-3 conv.
pub fn gradcheck_problem(seed: u64, visual: SynthVisual) -> (ModelConfig, Vec<AVSample>) {
    let mut spec = SyntheticSpec::standard(seed);
    spec.subjects = 1;
    spec.samples_per_subject = 2;
    spec.audio_steps = 7;
    spec.audio_features = 4;
    spec.visual = visual;
    let data = synthesize_dataset(&spec).unwrap().dataset;
    (model_for(&data, 8, 2, 3), data.samples)
}
