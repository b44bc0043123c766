//! Central finite-difference gradient checking.

use rand::seq::index::sample;
use serde::Serialize;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::Result;
use crate::rng;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub h: f64,
    /// Maximum tolerated relative error.
    pub tol: f64,
    /// Check at most this many coordinates per parameter (all when `None`).
    pub max_coords: Option<usize>,
    /// Seeds coordinate sampling.
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tol: 1e-4,
            max_coords: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub coords_checked: usize,
    pub max_rel_error: f64,
    /// Flat index of the worst coordinate with its analytic and numeric values.
    pub worst: Option<(usize, f64, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub tol: f64,
    pub h: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tol
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(|p| p.max_rel_error >= self.tol)
    }
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares `analytic` (one tensor per parameter, store order) against central
/// differences of `f` evaluated on perturbed copies of `store`.
pub fn grad_check<F>(
    store: &ParamStore,
    analytic: &[Tensor],
    mut f: F,
    cfg: GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    assert!(cfg.h > 0.0, "finite-difference step must be positive");
    assert_eq!(analytic.len(), store.len());
    let mut probe = store.clone();
    let mut sampler = rng::stream(cfg.seed, "gradcheck");
    let mut params = Vec::with_capacity(store.len());

    for id in store.ids() {
        let n = store.get(id).len();
        let coords: Vec<usize> = match cfg.max_coords {
            Some(k) if k < n => {
                let mut picked = sample(&mut sampler, n, k).into_vec();
                picked.sort_unstable();
                picked
            }
            _ => (0..n).collect(),
        };
        let mut check = ParamCheck {
            name: store.name(id).to_string(),
            coords_checked: coords.len(),
            max_rel_error: 0.0,
            worst: None,
        };
        for j in coords {
            let original = store.get(id).data()[j];
            probe.get_mut(id).data_mut()[j] = original + cfg.h;
            let plus = f(&probe)?;
            probe.get_mut(id).data_mut()[j] = original - cfg.h;
            let minus = f(&probe)?;
            probe.get_mut(id).data_mut()[j] = original;

            let numeric = (plus - minus) / (2.0 * cfg.h);
            let a = analytic[id.0].data()[j];
            let err = relative_error(a, numeric);
            if check.worst.is_none() || err > check.max_rel_error {
                check.max_rel_error = err;
                check.worst = Some((j, a, numeric));
            }
        }
        params.push(check);
    }
    Ok(GradCheckReport {
        tol: cfg.tol,
        h: cfg.h,
        params,
    })
}
