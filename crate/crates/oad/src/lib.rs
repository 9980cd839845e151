//! File formats, configuration, threading, and the command pipeline for
//! open-set audio pattern discovery. The algorithms live in `oad-core`;
//! this crate owns everything that touches the filesystem.

pub mod config;
pub mod csvio;
pub mod formats;
pub mod manifest_io;
pub mod pipeline;
pub mod report;
pub mod threads;
pub mod wav;

pub use pipeline::CliError;
pub use threads::ThreadExec;
