//! Mini-batch Adam training with a fixed epoch budget.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::AVSample;
use crate::error::{Error, Result};
use crate::fusion::{FusionModel, Modality, ModelConfig};
use crate::numerics::{Adam, AdamConfig};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub adam: AdamConfig,
    /// Per-class loss weights; unweighted when absent.
    #[serde(default)]
    pub class_weights: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            adam: AdamConfig::default(),
            class_weights: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, classes: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        let a = &self.adam;
        if !(a.lr.is_finite() && a.lr >= 0.0) {
            return bad(format!(
                "adam.lr must be finite and non-negative, got {}",
                a.lr
            ));
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if a.eps.is_nan() || a.eps <= 0.0 {
            return bad("adam.eps must be positive".into());
        }
        if let Some(w) = &self.class_weights {
            if w.len() != classes {
                return bad(format!(
                    "class_weights has {} entries for {classes} classes",
                    w.len()
                ));
            }
            if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return bad("class_weights must be finite and non-negative".into());
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub model: FusionModel,
    /// Mean batch loss per epoch.
    pub losses: Vec<f64>,
}

/// Trains a fresh model. Initial weights come from the `"init"` stream of
/// `seed` and the per-epoch sample order from its `"shuffle"` stream.
pub fn train_model(
    samples: &[&AVSample],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    modality: Modality,
    seed: u64,
) -> Result<Trained> {
    if samples.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    cfg.validate(model_cfg.classes)?;
    let mut model = FusionModel::init(model_cfg.clone(), seed)?;
    let mut adam = Adam::new(cfg.adam, model.params());
    let mut shuffle = rng::stream(seed, "shuffle");
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let (mut sum, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&AVSample> = chunk.iter().map(|&i| samples[i]).collect();
            let (loss, grads) = model
                .loss_and_grads(&batch, modality, cfg.class_weights.as_deref())
                .map_err(|e| match e {
                    Error::NonFinite(_) => Error::DivergedLoss { epoch },
                    other => other,
                })?;
            if !loss.is_finite() {
                return Err(Error::DivergedLoss { epoch });
            }
            adam.step(model.params_mut(), &grads).map_err(|e| match e {
                Error::NonFiniteGradient(_) => Error::DivergedLoss { epoch },
                other => other,
            })?;
            sum += loss;
            batches += 1;
        }
        let mean = sum / batches as f64;
        log::debug!("{} epoch {epoch}: loss {mean:.6}", modality.as_str());
        losses.push(mean);
    }
    Ok(Trained { model, losses })
}
