//! City classification from urban soundscapes.
//!
//! The pipeline runs end to end in this crate: decode or synthesise audio,
//! extract normalised log-mel features, train a small CNN from scratch under
//! one of seven labelling schemes (plain cities, scene-specific classifiers,
//! scene-city pairs, grouped scenes, grouped pairs, 16-class multi-label,
//! or a two-head multi-task model), and score the predictions with the
//! matching evaluation protocol.
//!
//! The `citysound` binary drives the same code from the command line; see the
//! README for the experiment matrix.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod labels;
pub mod models;
pub mod nnet;

pub use error::{Error, Result};
