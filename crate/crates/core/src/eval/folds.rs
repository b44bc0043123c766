//! Leave-one-subject-out fold plans.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::AVSample;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Fold {
    pub subject: String,
    /// Indices into the sample slice the plan was built from.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

/// One fold per distinct subject, ordered by subject id.
pub fn loso_splits(samples: &[AVSample]) -> Result<FoldPlan> {
    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_subject.entry(s.subject_id.as_str()).or_default().push(i);
    }
    if by_subject.len() < 2 {
        return Err(Error::TooFewSubjects(by_subject.len()));
    }
    let folds = by_subject
        .iter()
        .map(|(subject, test)| Fold {
            subject: subject.to_string(),
            train: (0..samples.len())
                .filter(|&i| samples[i].subject_id != *subject)
                .collect(),
            test: test.clone(),
        })
        .collect();
    let plan = FoldPlan { folds };
    plan.verify(samples)?;
    Ok(plan)
}

impl FoldPlan {
    /// Checks the partition and no-leakage invariants against `samples`.
    pub fn verify(&self, samples: &[AVSample]) -> Result<()> {
        let broken = |detail: String| Error::Format {
            what: "fold plan",
            detail,
        };
        let mut seen = vec![false; samples.len()];
        let mut subjects = BTreeSet::new();
        for fold in &self.folds {
            if !subjects.insert(fold.subject.as_str()) {
                return Err(broken(format!("subject `{}` has two folds", fold.subject)));
            }
            for &i in &fold.test {
                let s = samples
                    .get(i)
                    .ok_or_else(|| broken(format!("index {i} out of range")))?;
                if s.subject_id != fold.subject {
                    return Err(broken(format!(
                        "`{}` tested in fold `{}`",
                        s.clip_id, fold.subject
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(broken(format!("`{}` tested twice", s.clip_id)));
                }
            }
            for &i in &fold.train {
                let s = samples
                    .get(i)
                    .ok_or_else(|| broken(format!("index {i} out of range")))?;
                if s.subject_id == fold.subject {
                    return Err(Error::SubjectLeakage(fold.subject.clone()));
                }
            }
        }
        if let Some(i) = seen.iter().position(|&b| !b) {
            return Err(broken(format!("`{}` is never tested", samples[i].clip_id)));
        }
        let distinct: BTreeSet<&str> = samples.iter().map(|s| s.subject_id.as_str()).collect();
        if distinct.len() != subjects.len() {
            return Err(broken("fold count differs from subject count".into()));
        }
        Ok(())
    }

    /// SHA-256 over subjects and clip ids of every fold, hex encoded.
    pub fn hash(&self, samples: &[AVSample]) -> String {
        let mut h = Sha256::new();
        for fold in &self.folds {
            h.update(b"fold\0");
            h.update(fold.subject.as_bytes());
            for (tag, idx) in [(b"train\0", &fold.train), (b"test\0\0", &fold.test)] {
                h.update(tag);
                for &i in idx {
                    h.update(samples[i].clip_id.as_bytes());
                    h.update(b"\0");
                }
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
