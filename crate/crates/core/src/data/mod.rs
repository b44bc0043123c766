//! Samples, manifests, annotation records, agreement scores and the
//! synthetic dataset generator.

pub mod annotation;
pub mod features;
pub mod iaa;
pub mod manifest;
mod sample;
pub mod stats;
pub mod synth;

pub use annotation::{
    read_annotations, validate_annotation, write_annotations, AnnotationRecord, Emotion, Violation,
};
pub use features::{read_features, write_features};
pub use iaa::{compare_annotations, compute_iaa, AgreementReport, ClipAgreement};
pub use manifest::{load_manifest, write_dataset, Dataset, VisualLayout};
pub use sample::AVSample;
pub use stats::{class_distribution, class_distribution_of, ClassDistribution};
pub use synth::{synthesize_dataset, SynthVisual, SyntheticDataset, SyntheticSpec};
