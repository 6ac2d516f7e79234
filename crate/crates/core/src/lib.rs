//! CTC-trained sequence labelling for extractive-style headline generation.
//!
//! A bidirectional LSTM emits one label distribution per input frame; the
//! headline is the collapsed best path. Training uses the connectionist
//! temporal classification loss, so the output may be shorter than the
//! document but never longer than its frame count.

pub mod corpus;
pub mod ctc;
pub mod decode;
pub mod error;
pub mod evaluation;
pub mod headline;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod par;
pub mod selfcheck;
pub mod synthetic;
pub mod text;

pub use error::{Error, Result};
