//! Std companion of `mtsx-core`: file formats, model files, parallel
//! execution and the `mtsx` command-line pipeline.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod modelio;
pub mod par;

pub use error::{MtsxError, Result};
