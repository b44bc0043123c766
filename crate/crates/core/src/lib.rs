//! Asymmetric audio-visual fusion for micro-expression recognition.
//!
//! A visual branch summarises a clip as one global vector, an audio branch
//! keeps a temporal feature sequence, and two parallel multi-head
//! cross-attention streams fuse them before a pooled linear classifier.
//! Around the model sit leave-one-subject-out evaluation, Acc/UF1 metrics,
//! annotation tooling and a seeded synthetic dataset generator.

pub mod data;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod numerics;
pub mod rng;

pub use error::{Error, Result};
