//! Desk-scale speaker diarization: a sequence-to-sequence target-speaker
//! activity model with memory-aware speaker embeddings and a shared/soft
//! mixture-of-experts variant, plus synthetic data generation,
//! clustering-based initialization, training, and DER/JER scoring.

pub mod convsim;
pub mod error;
pub mod fbank;
pub mod numerics;
pub mod scoring;

pub use error::{CoreError, Result};
