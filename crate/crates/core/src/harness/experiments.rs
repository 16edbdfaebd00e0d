//! Training and evaluation pipelines shared by the CLI and the experiment
//! tests. Data comes either from the on-disk corpus or is synthesised with
//! the same seeds `generate` uses.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{EgologConfig, LlmMode};
use super::corpus::{
    load_har_plans, load_sequences, load_spatial_samples, part, sequence_id, sub_seed, CorpusKind, DatasetManifest,
    Split,
};
use super::har::{har_plans, har_samples, HarPlan};
use super::metrics::{evaluate_accuracy, evaluate_multilabel_f1};
use super::scenario::{scenario_sequences, sequence_samples, window_inputs, ScenarioSequence};
use super::spatial::{mirror_pair_plans, render_plans, rotating_plans, static_plans};
use super::world::{activity_names, scenario_names, WindowContent, SCENARIOS};
use crate::error::{Error, Result};
use crate::har::{HarConfig, HarModel, HarSample, HarTrainOptions, TokenSet};
use crate::llm_collab::{LlmClient, MockLlm, RemoteLlm};
use crate::spatial::{SpatialConfig, SpatialModel, SpatialSample, SpatialTrainOptions};
use crate::temporal::{
    Aggregator, ContrastiveSample, SequenceSample, TemporalConfig, TemporalModel, TrainOptions, WindowFeature,
};

/// Named sequences with their encoder inputs.
pub struct ScenarioSet {
    pub ids: Vec<String>,
    pub sequences: Vec<ScenarioSequence>,
    pub inputs: Vec<Vec<ContrastiveSample>>,
}

impl ScenarioSet {
    fn build(named: Vec<(String, ScenarioSequence)>, cfg: &EgologConfig, kind: CorpusKind) -> Result<Self> {
        let (ids, sequences): (Vec<_>, Vec<_>) = named.into_iter().unzip();
        let inputs = window_inputs(&sequences, cfg.world_for(kind), &cfg.features)?;
        Ok(Self { ids, sequences, inputs })
    }

    fn synthesize(cfg: &EgologConfig, kind: CorpusKind, split: Split, n: usize, part: u64) -> Result<Self> {
        let seq_cfg = if kind == CorpusKind::Drift { &cfg.drift } else { &cfg.sequence };
        let named = scenario_sequences(n, seq_cfg, sub_seed(cfg.seed, part))
            .into_iter()
            .enumerate()
            .map(|(i, s)| (sequence_id(kind, split, i), s))
            .collect();
        Self::build(named, cfg, kind)
    }

    fn load(manifest: &DatasetManifest, root: &Path, cfg: &EgologConfig, kind: CorpusKind, split: Split) -> Result<Self> {
        Self::build(load_sequences(manifest, root, kind, split)?, cfg, kind)
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Oracle scenario names of sequence `i`.
    pub fn labels(&self, i: usize) -> Vec<String> {
        self.sequences[i].plan.scenarios().into_iter().map(|c| SCENARIOS[c].to_string()).collect()
    }

    pub fn embed(&self, model: &TemporalModel) -> Result<Vec<SequenceSample>> {
        sequence_samples(model, &self.sequences, &self.inputs)
    }
}

/// Every scenario corpus of one experiment.
pub struct ScenarioData {
    pub train: ScenarioSet,
    pub test: ScenarioSet,
    pub drift_pool: ScenarioSet,
    pub drift_val: ScenarioSet,
    pub drift_test: ScenarioSet,
}

impl ScenarioData {
    pub fn synthesize(cfg: &EgologConfig) -> Result<Self> {
        let c = &cfg.corpus;
        Ok(Self {
            train: ScenarioSet::synthesize(cfg, CorpusKind::Scenario, Split::Train, c.scenario_train, part::SCENARIO_TRAIN)?,
            test: ScenarioSet::synthesize(cfg, CorpusKind::Scenario, Split::Test, c.scenario_test, part::SCENARIO_TEST)?,
            drift_pool: ScenarioSet::synthesize(cfg, CorpusKind::Drift, Split::Train, c.drift_pool, part::DRIFT_POOL)?,
            drift_val: ScenarioSet::synthesize(cfg, CorpusKind::Drift, Split::Val, c.drift_val, part::DRIFT_VAL)?,
            drift_test: ScenarioSet::synthesize(cfg, CorpusKind::Drift, Split::Test, c.drift_test, part::DRIFT_TEST)?,
        })
    }

    pub fn load(manifest: &DatasetManifest, root: &Path, cfg: &EgologConfig) -> Result<Self> {
        Ok(Self {
            train: ScenarioSet::load(manifest, root, cfg, CorpusKind::Scenario, Split::Train)?,
            test: ScenarioSet::load(manifest, root, cfg, CorpusKind::Scenario, Split::Test)?,
            drift_pool: ScenarioSet::load(manifest, root, cfg, CorpusKind::Drift, Split::Train)?,
            drift_val: ScenarioSet::load(manifest, root, cfg, CorpusKind::Drift, Split::Val)?,
            drift_test: ScenarioSet::load(manifest, root, cfg, CorpusKind::Drift, Split::Test)?,
        })
    }
}

/// Windows used for contrastive alignment: every `stride`-th window whose
/// sound and motion come from the wearer (distractors are excluded).
pub fn contrastive_samples(set: &ScenarioSet, stride: usize) -> Vec<ContrastiveSample> {
    set.sequences
        .iter()
        .zip(&set.inputs)
        .flat_map(|(s, x)| s.plan.windows.iter().zip(x))
        .filter(|(w, _)| !matches!(w, WindowContent::Distractor { .. }))
        .map(|(_, x)| x.clone())
        .step_by(stride.max(1))
        .collect()
}

/// Contrastive encoders (skipped when `contrastive` is false, leaving them
/// at their random initialisation) followed by the sequence stage.
pub fn train_temporal(cfg: &EgologConfig, train: &ScenarioSet, aggregator: Aggregator, contrastive: bool) -> Result<TemporalModel> {
    let mut model = train_encoders(cfg, train, aggregator, contrastive)?;
    train_sequence_stage(cfg, &mut model, train)?;
    Ok(model)
}

/// A fresh model with only the encoder stage trained.
pub fn train_encoders(cfg: &EgologConfig, train: &ScenarioSet, aggregator: Aggregator, contrastive: bool) -> Result<TemporalModel> {
    if train.is_empty() {
        return Err(Error::Empty("scenario training corpus"));
    }
    let t = &cfg.temporal;
    let config = TemporalConfig {
        hidden: t.hidden,
        aggregator,
        features: cfg.features,
        scenarios: scenario_names(),
        ..TemporalConfig::default()
    };
    let mut model = TemporalModel::new(config, cfg.seed)?;
    if contrastive {
        let samples = contrastive_samples(train, t.contrastive_stride);
        let opts = TrainOptions {
            epochs: t.contrastive_epochs,
            batch_size: t.contrastive_batch,
            lr: t.contrastive_lr,
            seed: cfg.seed,
            ..TrainOptions::default()
        };
        model.train_contrastive(&samples, &opts)?;
    }
    Ok(model)
}

/// Aggregator and head on top of frozen encoders.
pub fn train_sequence_stage(cfg: &EgologConfig, model: &mut TemporalModel, train: &ScenarioSet) -> Result<()> {
    if train.is_empty() {
        return Err(Error::Empty("scenario training corpus"));
    }
    let t = &cfg.temporal;
    let seqs = train.embed(model)?;
    let opts = TrainOptions {
        epochs: t.aggregator_epochs,
        batch_size: t.aggregator_batch,
        lr: t.aggregator_lr,
        seed: cfg.seed.wrapping_add(1),
        ..TrainOptions::default()
    };
    model.train_aggregator(&seqs, &opts)?;
    Ok(())
}

/// Multi-label F1 over the first `windows` windows of every sequence (all
/// windows when `None`).
pub fn scenario_f1(model: &TemporalModel, samples: &[SequenceSample], windows: Option<usize>) -> Result<f64> {
    let cut = |s: &SequenceSample| windows.unwrap_or(s.windows.len()).min(s.windows.len());
    let views: Vec<&[WindowFeature]> = samples.iter().map(|s| &s.windows[..cut(s)]).collect();
    if views.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let probs: Vec<Vec<f32>> = model.predict(&views)?.into_iter().map(|p| p.probabilities).collect();
    let truth: Vec<Vec<usize>> = samples
        .iter()
        .map(|s| {
            let mut v: Vec<usize> = s.window_labels[..cut(s)].iter().flatten().copied().collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    evaluate_multilabel_f1(&probs, &truth)
}

/// F1 at each horizon in seconds.
pub fn horizon_f1(model: &TemporalModel, samples: &[SequenceSample], horizons: &[f64]) -> Result<Vec<(f64, f64)>> {
    horizons
        .iter()
        .map(|&h| Ok((h, scenario_f1(model, samples, Some(TemporalModel::horizon_windows(h)))?)))
        .collect()
}

pub fn synth_har_samples(cfg: &EgologConfig, split: Split) -> Result<Vec<HarSample>> {
    let (n, p) = match split {
        Split::Test => (cfg.corpus.har_test_per_class, part::HAR_TEST),
        _ => (cfg.corpus.har_train_per_class, part::HAR_TRAIN),
    };
    har_samples(&har_plans(n, sub_seed(cfg.seed, p)), &cfg.world, &cfg.features)
}

pub fn load_har_samples(manifest: &DatasetManifest, root: &Path, cfg: &EgologConfig, split: Split) -> Result<Vec<HarSample>> {
    let plans: Vec<HarPlan> = load_har_plans(manifest, root, split)?;
    har_samples(&plans, &cfg.world, &cfg.features)
}

pub fn train_har(cfg: &EgologConfig, train: &[HarSample], set: TokenSet) -> Result<HarModel> {
    let config = HarConfig {
        activities: activity_names(),
        scenarios: scenario_names(),
        features: cfg.features,
        ..HarConfig::default()
    };
    let mut model = HarModel::new(config, cfg.seed)?;
    let opts = HarTrainOptions {
        seed: cfg.seed,
        ..cfg.har.clone()
    };
    model.train(train, set, &opts)?;
    Ok(model)
}

pub fn har_accuracy(model: &HarModel, test: &[HarSample], set: TokenSet) -> Result<f64> {
    let pred: Vec<usize> = model.predict(test, set)?.iter().map(|p| p.top1).collect();
    let truth: Vec<usize> = test.iter().map(|s| s.activity).collect();
    evaluate_accuracy(&pred, &truth)
}

/// Accuracy of uniform random guesses, seeded.
pub fn random_accuracy(test: &[HarSample], classes: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pred: Vec<usize> = test.iter().map(|_| rng.random_range(0..classes)).collect();
    let truth: Vec<usize> = test.iter().map(|s| s.activity).collect();
    evaluate_accuracy(&pred, &truth)
}

/// Localization corpora: training mixes static and rotating scenes.
pub struct SpatialData {
    pub train: Vec<SpatialSample>,
    pub static_test: Vec<SpatialSample>,
    pub moving_test: Vec<SpatialSample>,
}

impl SpatialData {
    pub fn synthesize(cfg: &EgologConfig) -> Result<Self> {
        let (c, sc, f) = (&cfg.corpus, &cfg.spatial_corpus, &cfg.features);
        let s = |p| sub_seed(cfg.seed, p);
        let mut plans = static_plans(c.spatial_static_train, sc, s(part::SPATIAL_STATIC_TRAIN));
        plans.extend(rotating_plans(c.spatial_moving_train, sc, s(part::SPATIAL_MOVING_TRAIN)));
        Ok(Self {
            train: render_plans(&plans, sc, f)?,
            static_test: render_plans(
                &mirror_pair_plans(c.spatial_static_test_pairs, sc, s(part::SPATIAL_STATIC_TEST)),
                sc,
                f,
            )?,
            moving_test: render_plans(&rotating_plans(c.spatial_moving_test, sc, s(part::SPATIAL_MOVING_TEST)), sc, f)?,
        })
    }

    pub fn load(manifest: &DatasetManifest, root: &Path, cfg: &EgologConfig) -> Result<Self> {
        let f = &cfg.features;
        let mut train = load_spatial_samples(manifest, root, Split::Train, Some(false), f)?;
        train.extend(load_spatial_samples(manifest, root, Split::Train, Some(true), f)?);
        Ok(Self {
            train,
            static_test: load_spatial_samples(manifest, root, Split::Test, Some(false), f)?,
            moving_test: load_spatial_samples(manifest, root, Split::Test, Some(true), f)?,
        })
    }
}

pub fn train_spatial(cfg: &EgologConfig, train: &[SpatialSample], compensated: bool) -> Result<SpatialModel> {
    let config = SpatialConfig {
        compensated,
        near_threshold: cfg.spatial_corpus.near_threshold,
        features: cfg.features,
        ..SpatialConfig::default()
    };
    let mut model = SpatialModel::new(config, cfg.seed)?;
    let opts = SpatialTrainOptions {
        seed: cfg.seed,
        ..cfg.spatial.clone()
    };
    model.train(train, &opts)?;
    Ok(model)
}

/// Frame accuracy over frames where the source is audible.
pub fn spatial_accuracy(model: &SpatialModel, samples: &[SpatialSample]) -> Result<f64> {
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for (p, s) in model.predict(samples)?.iter().zip(samples) {
        for (k, c) in p.frame_classes().into_iter().enumerate() {
            if s.mask[k] > 0.0 {
                pred.push(c);
                truth.push(s.labels[k][0]);
            }
        }
    }
    evaluate_accuracy(&pred, &truth)
}

/// The cloud-model stand-in selected in the config. `truth` maps sequence
/// ids to oracle labels for the oracle mode.
pub fn llm_client(cfg: &EgologConfig, truth: impl FnOnce() -> std::collections::HashMap<String, String>) -> Result<Box<dyn LlmClient>> {
    let seed = cfg.seed;
    let noisy = |m: MockLlm| m.with_noise(cfg.llm.noise, seed);
    Ok(match cfg.llm.mode {
        LlmMode::Rules => Box::new(noisy(MockLlm::rule_table())),
        LlmMode::Oracle => Box::new(noisy(MockLlm::oracle(truth()))),
        LlmMode::Random => Box::new(MockLlm::random(seed)),
        LlmMode::Remote => Box::new(RemoteLlm::from_env()?),
    })
}
