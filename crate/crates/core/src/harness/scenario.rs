//! Scenario-sequence corpora and the scenario recognition experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::corpus::WindowFiles;
use super::world::{plan_sequence, synth_window, SequenceConfig, SequencePlan, WorldConfig, SCENARIOS};
use crate::error::{Error, Result};
use crate::signals::{AudioClip, FeatureConfig, ImuSequence, SensorWindow};
use crate::temporal::{audio_input, imu_input, ContrastiveSample, SequenceSample, TemporalModel, WINDOW_SECONDS};

/// A planned sequence plus one seed per window. Windows are rendered on
/// demand, or read from disk when `files` is set.
#[derive(Debug, Clone)]
pub struct ScenarioSequence {
    pub plan: SequencePlan,
    pub seeds: Vec<u64>,
    pub files: Option<Vec<WindowFiles>>,
}

impl ScenarioSequence {
    pub fn len(&self) -> usize {
        self.plan.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plan.windows.is_empty()
    }

    pub fn window(&self, k: usize, world: &WorldConfig) -> Result<SensorWindow> {
        let content = self
            .plan
            .windows
            .get(k)
            .ok_or(Error::IndexOutOfRange { index: k, len: self.len() })?;
        let mut w = match &self.files {
            Some(files) => files[k].load()?,
            None => synth_window(content, WINDOW_SECONDS, world, self.seeds[k])?,
        };
        w.start_time = k as f64 * WINDOW_SECONDS;
        Ok(w)
    }

    /// `duration` seconds centred on window `k`, clipped to the sequence.
    pub fn span_around(&self, k: usize, duration: f64, world: &WorldConfig) -> Result<SensorWindow> {
        let total = self.len() as f64 * WINDOW_SECONDS;
        let duration = duration.min(total);
        let centre = (k as f64 + 0.5) * WINDOW_SECONDS;
        self.span((centre - duration / 2.0).clamp(0.0, total - duration), duration, world)
    }

    /// `duration` seconds from `start`, stitched from the covering windows.
    pub fn span(&self, start: f64, duration: f64, world: &WorldConfig) -> Result<SensorWindow> {
        let total = self.len() as f64 * WINDOW_SECONDS;
        if !(duration > 0.0 && start >= 0.0 && start + duration <= total + 1e-9) {
            return Err(Error::invalid(format!(
                "span [{start}, {}) outside the {total} s sequence",
                start + duration
            )));
        }
        let first = (start / WINDOW_SECONDS).floor() as usize;
        let last = (((start + duration) / WINDOW_SECONDS - 1e-9).ceil() as usize).clamp(first + 1, self.len());
        let windows: Vec<SensorWindow> = (first..last).map(|i| self.window(i, world)).collect::<Result<_>>()?;
        let sr = world.audio_rate;
        let mut audio = Vec::new();
        for w in &windows {
            audio.extend(w.audio.channel(0).iter().copied());
        }
        let imus: Vec<ImuSequence> = windows.iter().map(|w| w.imu.clone()).collect();
        let imu = ImuSequence::concat(&imus)?;
        let offset = start - first as f64 * WINDOW_SECONDS;
        let a0 = (offset * f64::from(sr)).round() as usize;
        let an = ((duration * f64::from(sr)).round() as usize).min(audio.len() - a0);
        let i0 = (offset * f64::from(world.imu_rate)).round() as usize;
        let i_n = ((duration * f64::from(world.imu_rate)).round() as usize).min(imu.frames() - i0);
        let clip = AudioClip::from_channels(&[audio[a0..a0 + an].to_vec()], sr)?;
        SensorWindow::new(clip, imu.slice_frames(i0, i_n)?, start)
    }
}

/// `n` sequences with primary scenarios cycling through the vocabulary.
pub fn scenario_sequences(n: usize, cfg: &SequenceConfig, seed: u64) -> Vec<ScenarioSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let plan = plan_sequence(cfg, i % SCENARIOS.len(), &mut rng);
            let seeds = (0..plan.windows.len()).map(|_| rng.random()).collect();
            ScenarioSequence { plan, seeds, files: None }
        })
        .collect()
}

/// Encoder inputs for every window of every sequence.
pub fn window_inputs(
    seqs: &[ScenarioSequence],
    world: &WorldConfig,
    features: &FeatureConfig,
) -> Result<Vec<Vec<ContrastiveSample>>> {
    seqs.par_iter()
        .map(|s| {
            (0..s.len())
                .map(|k| {
                    let w = s.window(k, world)?;
                    Ok(ContrastiveSample {
                        audio: audio_input(&w.audio, features)?,
                        imu: imu_input(&w.imu)?,
                        scenario: s.plan.window_scenarios[k].first().map(|c| SCENARIOS[*c].to_string()),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

/// Embeds every window and pairs the result with the per-window labels.
pub fn sequence_samples(
    model: &TemporalModel,
    seqs: &[ScenarioSequence],
    inputs: &[Vec<ContrastiveSample>],
) -> Result<Vec<SequenceSample>> {
    seqs.iter()
        .zip(inputs)
        .map(|(s, x)| {
            Ok(SequenceSample {
                windows: model.embed(x)?,
                window_labels: s.plan.window_scenarios.clone(),
            })
        })
        .collect()
}
