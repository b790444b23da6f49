//! Real-time remote-photoplethysmography signal engine.
//!
//! Per-frame facial ROI color samples run through a fixed signal chain --
//! region means, CIE-Lab a* extraction, a rolling 12 s window with a
//! warm-up/stability state machine, 61-tap FIR filtering, and spectral peak
//! estimation -- on a 33 ms tick. Results are published to a shared
//! container and served as a seven-value REST record plus two MJPEG
//! streams.

pub mod buffer;
pub mod cli;
pub mod color;
pub mod config;
pub mod error;
pub mod eval;
pub mod filter;
pub mod ingest;
pub mod net;
pub mod pipeline;
pub mod roi;
pub mod spectral;

pub use error::{Error, Result};
