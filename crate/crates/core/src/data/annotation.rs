//! Annotation records and the micro-expression validity gate.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest admissible micro-expression, in seconds (inclusive).
pub const MAX_DURATION_SECS: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Emotion {
    Positive,
    Negative,
    Surprise,
    Others,
}

impl Emotion {
    pub const ALL: [Emotion; 4] = [
        Emotion::Positive,
        Emotion::Negative,
        Emotion::Surprise,
        Emotion::Others,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Positive => "Positive",
            Emotion::Negative => "Negative",
            Emotion::Surprise => "Surprise",
            Emotion::Others => "Others",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }
}

/// Default three-class task; `Others` is annotated but not classified.
pub const THREE_CLASS: [Emotion; 3] = [Emotion::Positive, Emotion::Negative, Emotion::Surprise];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub clip_id: String,
    pub subject_id: String,
    pub onset_frame: u64,
    pub apex_frame: u64,
    pub offset_frame: u64,
    pub fps: f64,
    pub au_codes: BTreeSet<String>,
    pub emotion: Emotion,
}

impl AnnotationRecord {
    /// `(offset − onset) / fps`, saturating at zero for reversed frames.
    pub fn duration_secs(&self) -> f64 {
        self.offset_frame.saturating_sub(self.onset_frame) as f64 / self.fps
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Violation {
    EmptyClipId,
    EmptySubjectId,
    NonPositiveFps(f64),
    ApexBeforeOnset { onset: u64, apex: u64 },
    OffsetBeforeApex { apex: u64, offset: u64 },
    TooLong { seconds: f64 },
    NoActionUnits,
    MalformedActionUnit(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyClipId => write!(f, "empty clip_id"),
            Violation::EmptySubjectId => write!(f, "empty subject_id"),
            Violation::NonPositiveFps(fps) => write!(f, "fps {fps} is not positive"),
            Violation::ApexBeforeOnset { onset, apex } => {
                write!(f, "apex frame {apex} precedes onset frame {onset}")
            }
            Violation::OffsetBeforeApex { apex, offset } => {
                write!(f, "offset frame {offset} precedes apex frame {apex}")
            }
            Violation::TooLong { seconds } => {
                write!(f, "duration {seconds} s exceeds {MAX_DURATION_SECS} s")
            }
            Violation::NoActionUnits => write!(f, "no AU codes"),
            Violation::MalformedActionUnit(code) => write!(f, "malformed AU code `{code}`"),
        }
    }
}

/// `AU` followed by one or more digits, e.g. `AU4`, `AU50`.
pub fn is_au_code(code: &str) -> bool {
    code.strip_prefix("AU")
        .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
}

/// Every invariant a validated micro-expression must satisfy; empty means valid.
pub fn validate_annotation(r: &AnnotationRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    if r.clip_id.trim().is_empty() {
        out.push(Violation::EmptyClipId);
    }
    if r.subject_id.trim().is_empty() {
        out.push(Violation::EmptySubjectId);
    }
    if r.apex_frame < r.onset_frame {
        out.push(Violation::ApexBeforeOnset {
            onset: r.onset_frame,
            apex: r.apex_frame,
        });
    }
    if r.offset_frame < r.apex_frame {
        out.push(Violation::OffsetBeforeApex {
            apex: r.apex_frame,
            offset: r.offset_frame,
        });
    }
    if !(r.fps > 0.0 && r.fps.is_finite()) {
        out.push(Violation::NonPositiveFps(r.fps));
    } else {
        // frames / fps <= 0.5  <=>  2 * frames <= fps, exact for integer frames.
        let frames = r.offset_frame.saturating_sub(r.onset_frame) as f64;
        if 2.0 * frames > r.fps {
            out.push(Violation::TooLong {
                seconds: r.duration_secs(),
            });
        }
    }
    if r.au_codes.is_empty() {
        out.push(Violation::NoActionUnits);
    }
    for code in &r.au_codes {
        if !is_au_code(code) {
            out.push(Violation::MalformedActionUnit(code.clone()));
        }
    }
    out
}

/// Reads one JSON record per non-blank line.
pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Format {
                what: "annotation file",
                detail: format!("{}:{}: {e}", path.display(), i + 1),
            })
        })
        .collect()
}

pub fn write_annotations(path: &Path, records: &[AnnotationRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("annotation serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
