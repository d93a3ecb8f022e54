//! Command-line front end for `varbound-core`: configuration, quote files,
//! the staged pipeline and its artifacts, and synthetic quote books.

pub mod config;
pub mod io;
pub mod pipeline;
pub mod synth;
