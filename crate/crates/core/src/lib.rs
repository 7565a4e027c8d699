//! Forensic voice-comparison evaluation: corpus preparation, embeddings,
//! cosine scoring, logistic-regression calibration to likelihood ratios, and
//! Cllr / Cllr_min / EER / Tippet metrics with duration and task breakdowns.

pub mod audio;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod metrics;
pub mod model;
pub mod prep;
pub mod scoring;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
