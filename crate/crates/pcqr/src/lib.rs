//! File formats, experiment reports and the `pcqr` command-line tool built
//! on [`pcqr_core`].

#![deny(missing_docs)]

pub mod artifacts;
pub mod cli;
pub mod dataset;
mod error;
pub mod fsutil;
pub mod kv;
pub mod model_io;
pub mod report;
pub mod settings;

pub use error::{Error, Result};
