//! Core of the ANTIQA text-in-image quality toolkit.
//!
//! Everything in this crate is pure computation over in-memory buffers and
//! builds without the standard library (`--no-default-features`), needing
//! only `alloc`. File formats, image decoding, timing and the command line
//! live in the companion `antiqa` crate.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`tensor`] | dense tensors and a reverse-mode differentiation tape |
//! | [`preproc`] | crop filtering, perspective rectification, model input |
//! | [`net`] | the ANTIQA network: construction, forward pass, cost accounting |
//! | [`train`] | losses, AdamW, step schedule, the training loop, checkpoints |
//! | [`calibrate`] | five-parameter logistic confidence-to-MOS mapping |
//! | [`gradcheck`] | finite-difference audit of every tape operation and the network |
//! | [`metrics`] | PLCC, SROCC, normalized Levenshtein similarity, trimmed MOS |
//! | [`aggregate`] | crop-to-image score pooling |
//! | [`harness`] | within-group correlation, best-of-K selection, synthetic data |

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod aggregate;
pub mod calibrate;
pub mod gradcheck;
pub mod harness;
pub mod image;
pub mod math;
pub mod metrics;
pub mod net;
pub mod preproc;
pub mod rng;
pub mod tensor;
pub mod train;

pub use image::RgbImage;
pub use net::{ArchConfig, ModelParams};
pub use tensor::{Tape, Tensor, Var};
