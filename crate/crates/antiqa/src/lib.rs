//! File formats, pipeline commands and command-line surface for antiqa.
//!
//! The numerical work lives in `antiqa-core`; this crate reads and writes
//! manifests, score files, calibration curves, checkpoints and reports, and
//! strings the core operations into the `antiqa` commands.
//!
//! Every file carries a `schema` field. JSON-lines files put it in a header
//! object on the first line.

pub mod bench;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod hash;
pub mod imageio;
pub mod jsonl;
pub mod manifest;
pub mod report;
pub mod scores;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use manifest::{Kind, Manifest, Record, Split};
