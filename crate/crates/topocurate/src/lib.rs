//! File formats, parallel orchestration and the `topocurate` command line
//! around [`topocurate_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod graphfile;
pub mod io;
pub mod manifest;
pub mod report;
pub mod scores;
pub mod synth;

pub use error::{Error, Result};
