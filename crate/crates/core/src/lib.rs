//! Difficulty-controllable question generation.
//!
//! A sentence, an answer span inside it and a difficulty label (easy or hard)
//! go in; a question comes out. The crate holds the whole pipeline: a small
//! reverse-mode autodiff engine, the encoder/decoder with proximity-aware
//! position embeddings and a global difficulty variable, teacher-forced
//! training, the reader-based difficulty labeling protocol and the metrics
//! used to check that generated questions honor the requested difficulty.

pub mod corpus;
pub mod evalkit;
pub mod labeler;
pub mod proximity;
pub mod tensor;
pub mod trainer;
pub mod model;
