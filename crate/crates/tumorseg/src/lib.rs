//! Filesystem, file formats, campaigns and CLI on top of `tumorseg-core`.

pub mod campaign;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod history;
pub mod io;
pub mod manifest;
pub mod overlay;
pub mod plot;
pub mod report;

pub use error::{Error, Result};
