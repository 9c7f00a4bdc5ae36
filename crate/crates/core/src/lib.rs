//! A desk-scale testbed for measuring how video resolution affects
//! visual-only (lip-reading) viseme recognition.
//!
//! The pipeline: build shape+appearance models from landmarked key frames,
//! degrade frames through a resolution ladder, extract per-resolution
//! features, train viseme GMM-HMMs, decode under unigram/bigram word
//! networks, and score accuracy against resting lip height in pixels.

pub mod aam;
pub mod error;
pub mod geometry;
pub mod imaging;
pub mod lexicon;
pub mod scoring;

pub use error::{Error, Result};
