//! File formats, WAV I/O, the threaded streaming runner and the `avse`
//! command line, on top of the `no_std` [`avse_core`] engine.

mod binio;

pub mod atomic;
pub mod catalog;
pub mod cli;
pub mod clock;
pub mod error;
pub mod export;
pub mod runner;
pub mod rvne;
pub mod rvnw;
pub mod stub;
pub mod telemetry;
pub mod wav;

pub use avse_core as core;
pub use error::{FormatError, Result};
