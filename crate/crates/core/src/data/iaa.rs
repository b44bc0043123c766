//! Inter-annotator agreement over Action Unit sets.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::annotation::AnnotationRecord;
use crate::error::{Error, Result};

/// `2·|A1 ∩ A2| / (|A1| + |A2|)`; two empty sets agree vacuously (`1.0`).
pub fn compute_iaa(a1: &BTreeSet<String>, a2: &BTreeSet<String>) -> f64 {
    let total = a1.len() + a2.len();
    if total == 0 {
        return 1.0;
    }
    let shared = a1.intersection(a2).count();
    2.0 * shared as f64 / total as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClipAgreement {
    pub clip_id: String,
    pub r: f64,
    pub shared: usize,
    pub coded: usize,
    /// Both annotators coded no AUs; `r` is the vacuous 1.0.
    pub both_empty: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgreementReport {
    pub clips: Vec<ClipAgreement>,
    /// Mean of the per-clip scores.
    pub mean_per_clip: f64,
    /// `2·Σ|A1 ∩ A2| / Σ(|A1| + |A2|)` over all clips.
    pub pooled: f64,
}

impl AgreementReport {
    pub fn flagged(&self) -> impl Iterator<Item = &ClipAgreement> {
        self.clips.iter().filter(|c| c.both_empty)
    }
}

/// Aligns two annotation passes by `clip_id` and scores every clip.
pub fn compare_annotations(
    a: &[AnnotationRecord],
    b: &[AnnotationRecord],
) -> Result<AgreementReport> {
    let index = |recs: &[AnnotationRecord]| -> Result<BTreeMap<String, BTreeSet<String>>> {
        let mut map = BTreeMap::new();
        for r in recs {
            if map.insert(r.clip_id.clone(), r.au_codes.clone()).is_some() {
                return Err(Error::Format {
                    what: "annotation file",
                    detail: format!("duplicate clip_id `{}`", r.clip_id),
                });
            }
        }
        Ok(map)
    };
    let (ma, mb) = (index(a)?, index(b)?);
    let unmatched: Vec<String> = ma
        .keys()
        .filter(|k| !mb.contains_key(*k))
        .chain(mb.keys().filter(|k| !ma.contains_key(*k)))
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if !unmatched.is_empty() {
        return Err(Error::UnmatchedClips(unmatched));
    }

    let clips: Vec<ClipAgreement> = ma
        .iter()
        .map(|(clip, sa)| {
            let sb = &mb[clip];
            ClipAgreement {
                clip_id: clip.clone(),
                r: compute_iaa(sa, sb),
                shared: sa.intersection(sb).count(),
                coded: sa.len() + sb.len(),
                both_empty: sa.is_empty() && sb.is_empty(),
            }
        })
        .collect();
    let mean_per_clip = if clips.is_empty() {
        1.0
    } else {
        clips.iter().map(|c| c.r).sum::<f64>() / clips.len() as f64
    };
    let (shared, coded) = clips
        .iter()
        .fold((0, 0), |(s, c), x| (s + x.shared, c + x.coded));
    let pooled = if coded == 0 {
        1.0
    } else {
        2.0 * shared as f64 / coded as f64
    };
    Ok(AgreementReport {
        clips,
        mean_per_clip,
        pooled,
    })
}
