//! Experiment harness, file formats and CLI support for `lscrit-core`.
//!
//! [`config`] parses experiment descriptions, [`harness`] runs them,
//! [`report`] serializes the results and [`io`] handles dataset and draw
//! files.

pub mod config;
pub mod error;
pub mod harness;
pub mod io;
pub mod report;

pub use error::{Error, Result};
pub use lscrit_core;
