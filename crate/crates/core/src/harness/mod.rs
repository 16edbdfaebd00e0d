//! Corpus generation, metrics, ablations, daily-log reports and the
//! user-facing command implementations.

pub mod metrics;
pub mod world;
pub mod har;
pub mod scenario;
pub mod spatial;
pub mod collab;
pub mod config;
pub mod corpus;
pub mod experiments;
pub mod ablation;
pub mod report;
pub mod daily;
pub mod pipeline;
