//! The single TOML configuration file. Every section and field is optional;
//! missing values take the defaults below, which are the sizes used by the
//! acceptance experiments.
//!
//! ```toml
//! seed = 7
//!
//! [world]            # synthetic scenario/activity world (16 kHz mono, 200 Hz IMU)
//! ambient_gain = 0.25
//!
//! [corpus]           # window counts written by `generate`
//! scenario_train = 240          # sequences (15 windows of 2 s each)
//! scenario_test = 60
//! drift_pool = 240              # short muffled episodes offered to the LLM
//! drift_val = 60
//! drift_test = 60
//! har_train_per_class = 40      # 5 s activity windows per activity
//! har_test_per_class = 20
//! spatial_static_train = 800    # 1 s binaural 48 kHz scenes
//! spatial_moving_train = 800
//! spatial_static_test_pairs = 100   # front/back mirror pairs
//! spatial_moving_test = 200
//!
//! [sequence]         # normal scenario sequences
//! p_key = 0.35
//!
//! [drift]            # drift episodes: 3 windows, sparse key frames
//! windows = 3
//!
//! [drift_world]      # drift rendering: covered microphone
//! foreground_gain = 0.5
//!
//! [temporal]
//! contrastive_epochs = 4
//! aggregator_epochs = 80
//!
//! [llm]
//! mode = "rules"     # rules | oracle | random | remote
//! noise = 0.0        # probability a mock answer is replaced at random
//! threshold = 0.5
//! max_in_flight = 4
//! evidence_seconds = 5.0
//!
//! [llm.fine_tune]
//! min_records = 32
//! lr = 1e-3
//!
//! [daily_log]
//! segments = 6
//! segment_minutes = 10.0
//! horizon_minutes = 10.0   # trailing normalisation horizon
//! step_minutes = 1.0
//! ```
//!
//! Sections not shown (`features`, `spatial_corpus`, `spatial`, `har`,
//! `events`, `motion`) mirror the fields of the corresponding option
//! structs. [`EgologConfig::to_toml`] writes the full resolved config.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::collab::CollabSettings;
use super::corpus::CorpusKind;
use super::daily::DailyLogSettings;
use super::spatial::SpatialCorpusConfig;
use super::world::{SequenceConfig, WorldConfig};
use crate::error::{Error, Result};
use crate::har::HarTrainOptions;
use crate::llm_collab::{EventTrainOptions, MotionTrainOptions};
use crate::signals::FeatureConfig;
use crate::spatial::SpatialTrainOptions;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusCounts {
    pub scenario_train: usize,
    pub scenario_test: usize,
    pub drift_pool: usize,
    pub drift_val: usize,
    pub drift_test: usize,
    pub har_train_per_class: usize,
    pub har_test_per_class: usize,
    pub spatial_static_train: usize,
    pub spatial_moving_train: usize,
    pub spatial_static_test_pairs: usize,
    pub spatial_moving_test: usize,
}

impl Default for CorpusCounts {
    fn default() -> Self {
        Self {
            scenario_train: 240,
            scenario_test: 60,
            drift_pool: 240,
            drift_val: 60,
            drift_test: 60,
            har_train_per_class: 40,
            har_test_per_class: 20,
            spatial_static_train: 800,
            spatial_moving_train: 800,
            spatial_static_test_pairs: 100,
            spatial_moving_test: 200,
        }
    }
}

impl CorpusCounts {
    /// Every count zero: `generate` writes an empty manifest.
    pub fn empty() -> Self {
        Self {
            scenario_train: 0,
            scenario_test: 0,
            drift_pool: 0,
            drift_val: 0,
            drift_test: 0,
            har_train_per_class: 0,
            har_test_per_class: 0,
            spatial_static_train: 0,
            spatial_moving_train: 0,
            spatial_static_test_pairs: 0,
            spatial_moving_test: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemporalSettings {
    pub contrastive_epochs: usize,
    pub contrastive_batch: usize,
    pub contrastive_lr: f64,
    /// Every n-th eligible window is used for contrastive training.
    pub contrastive_stride: usize,
    pub aggregator_epochs: usize,
    pub aggregator_batch: usize,
    pub aggregator_lr: f64,
    pub hidden: usize,
}

impl Default for TemporalSettings {
    fn default() -> Self {
        Self {
            contrastive_epochs: 4,
            contrastive_batch: 64,
            contrastive_lr: 1e-3,
            contrastive_stride: 2,
            aggregator_epochs: 80,
            aggregator_batch: 32,
            aggregator_lr: 2e-3,
            hidden: 128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmMode {
    /// Offline rule table over the prompt evidence.
    #[default]
    Rules,
    /// Answers the oracle label; an upper bound for the feedback loop.
    Oracle,
    Random,
    /// HTTP endpoint from `EGOLOG_LLM_ENDPOINT`.
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSettings {
    pub mode: LlmMode,
    /// Probability that a mock answer is replaced by a random category.
    pub noise: f64,
    #[serde(flatten)]
    pub collab: CollabSettings,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            mode: LlmMode::Rules,
            noise: 0.0,
            collab: CollabSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EgologConfig {
    pub seed: u64,
    pub world: WorldConfig,
    pub features: FeatureConfig,
    pub corpus: CorpusCounts,
    pub sequence: SequenceConfig,
    pub drift: SequenceConfig,
    /// World the drift corpus is rendered in.
    pub drift_world: WorldConfig,
    pub spatial_corpus: SpatialCorpusConfig,
    pub temporal: TemporalSettings,
    pub spatial: SpatialTrainOptions,
    pub har: HarTrainOptions,
    pub llm: LlmSettings,
    pub events: EventTrainOptions,
    pub motion: MotionTrainOptions,
    pub daily_log: DailyLogSettings,
}

impl Default for EgologConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            world: WorldConfig::default(),
            features: FeatureConfig::default(),
            corpus: CorpusCounts::default(),
            sequence: SequenceConfig::default(),
            drift: SequenceConfig::drift(),
            drift_world: WorldConfig::drift(),
            spatial_corpus: SpatialCorpusConfig::default(),
            temporal: TemporalSettings::default(),
            spatial: SpatialTrainOptions::default(),
            har: HarTrainOptions::default(),
            llm: LlmSettings::default(),
            events: EventTrainOptions::default(),
            motion: MotionTrainOptions::default(),
            daily_log: DailyLogSettings::default(),
        }
    }
}

impl EgologConfig {
    /// Drift sequences render in the drift world; everything else in `world`.
    pub fn world_for(&self, kind: CorpusKind) -> &WorldConfig {
        if kind == CorpusKind::Drift {
            &self.drift_world
        } else {
            &self.world
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_partial_files() {
        let cfg = EgologConfig::default();
        let back = EgologConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        let partial = EgologConfig::from_toml("seed = 3\n[corpus]\nhar_train_per_class = 10\n[llm]\nmode = \"oracle\"\n").unwrap();
        assert_eq!(partial.seed, 3);
        assert_eq!(partial.corpus.har_train_per_class, 10);
        assert_eq!(partial.corpus.scenario_train, 240);
        assert_eq!(partial.llm.mode, LlmMode::Oracle);
        assert!(EgologConfig::from_toml("seed = \"x\"").is_err());
    }
}
