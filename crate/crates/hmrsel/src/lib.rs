//! File formats, configuration, reports and the `hmrsel` command line on
//! top of `hmrsel-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod idx;
pub mod pipeline;
pub mod report;
pub mod toy;
pub mod weights;

pub use config::RunConfig;
pub use error::{HarnessError, Result};
