//! Multi-scale speaker diarization: uniform multi-scale segmentation,
//! spectral clustering initialization, a neural multi-scale decoder with
//! dynamic scale weights, and DER scoring.

pub mod clusterer;
pub mod error;
pub mod msdd;
pub mod neuralkit;
pub mod pipeline;
pub mod scorer;
pub mod segmenter;
pub mod synthembed;
pub mod types;

pub use error::{Error, Result};
