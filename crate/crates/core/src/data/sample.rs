use crate::encoders::{AudioInput, VisualInput};

/// One micro-expression instance.
#[derive(Clone, Debug, PartialEq)]
pub struct AVSample {
    pub clip_id: String,
    pub subject_id: String,
    pub visual: Option<VisualInput>,
    pub audio: Option<AudioInput>,
    pub label: usize,
    pub label_name: String,
}
