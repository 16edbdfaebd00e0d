//! Multimodal daily-log pipeline over egocentric audio and IMU streams.
//!
//! The crate is organised the way data flows through the system:
//!
//! * [`signals`] synthesises scenes with exact geometric ground truth and
//!   extracts the deterministic features (log-Mel, GCC-PHAT) every learned
//!   component consumes.
//! * [`temporal`] aligns audio and IMU embeddings contrastively and
//!   aggregates per-window evidence into multi-label scenario predictions.
//! * [`spatial`] localizes sound sources into eight direction/distance
//!   classes, optionally compensating for the wearer's head motion.
//! * [`har`] fuses modality tokens (audio, IMU, scenario text) into a
//!   single-label activity prediction.
//! * [`llm_collab`] turns evidence into prompts, gates cloud queries on
//!   local confidence and fine-tunes the local scenario head on the answers.
//! * [`harness`] is the user-facing layer: corpus generation, metrics,
//!   ablations, the daily-log report and the CLI commands.

pub mod error;
pub mod har;
pub mod harness;
pub mod llm_collab;
pub mod nn;
pub mod signals;
pub mod spatial;
pub mod temporal;

pub use error::{Error, Result};
