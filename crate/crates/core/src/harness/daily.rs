//! A synthetic day for the daily-log report: consecutive scenario segments
//! turned into a time-ordered prediction stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{WindowPrediction, DEFAULT_HORIZON_MINUTES, DEFAULT_STEP_MINUTES};
use super::scenario::{window_inputs, ScenarioSequence};
use super::world::{plan_sequence, SequenceConfig, WorldConfig, SCENARIOS};
use crate::error::{Error, Result};
use crate::har::{HarModel, HAR_WINDOW_SECONDS};
use crate::signals::FeatureConfig;
use crate::spatial::Gate;
use crate::temporal::{TemporalModel, WINDOW_SECONDS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DailyLogSettings {
    pub segments: usize,
    pub segment_minutes: f64,
    /// Trailing horizon of the scenario row.
    pub horizon_minutes: f64,
    pub step_minutes: f64,
    /// Scenario decision window, seconds.
    pub scenario_window_seconds: f64,
}

impl Default for DailyLogSettings {
    fn default() -> Self {
        Self {
            segments: 6,
            segment_minutes: 10.0,
            horizon_minutes: DEFAULT_HORIZON_MINUTES,
            step_minutes: DEFAULT_STEP_MINUTES,
            scenario_window_seconds: 30.0,
        }
    }
}

/// One long single-scenario sequence per segment. Consecutive segments
/// always change scenario.
pub fn plan_day(settings: &DailyLogSettings, sequence: &SequenceConfig, seed: u64) -> Result<Vec<ScenarioSequence>> {
    let windows = (settings.segment_minutes * 60.0 / WINDOW_SECONDS).round() as usize;
    if windows == 0 {
        return Err(Error::invalid("daily-log segments must be at least one window long"));
    }
    let cfg = SequenceConfig {
        windows,
        p_two_scenarios: 0.0,
        p_idle_sequence: 0.0,
        ..sequence.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut previous: Option<usize> = None;
    let mut out = Vec::with_capacity(settings.segments);
    for _ in 0..settings.segments {
        let mut primary = rng.random_range(0..SCENARIOS.len());
        if previous == Some(primary) {
            primary = (primary + 1) % SCENARIOS.len();
        }
        previous = Some(primary);
        let plan = plan_sequence(&cfg, primary, &mut rng);
        let seeds = (0..plan.windows.len()).map(|_| rng.random()).collect();
        out.push(ScenarioSequence { plan, seeds, files: None });
    }
    Ok(out)
}

/// Runs both recognisers over the day with hop = half the task window.
/// Scenario decisions cover the trailing `scenario_window_seconds`; every
/// activity window carries the most recent decision and is conditioned on
/// its top-1 scenario.
pub fn prediction_stream(
    day: &[ScenarioSequence],
    settings: &DailyLogSettings,
    world: &WorldConfig,
    features: &FeatureConfig,
    scenario_model: &TemporalModel,
    har_model: &HarModel,
) -> Result<Vec<WindowPrediction>> {
    let horizon = TemporalModel::horizon_windows(settings.scenario_window_seconds).max(1);
    let scenario_hop = (horizon / 2).max(1);
    let har_hop = HAR_WINDOW_SECONDS / 2.0;
    let mut stream = Vec::new();
    let mut offset = 0.0;
    for seq in day {
        let inputs = window_inputs(std::slice::from_ref(seq), world, features)?.remove(0);
        let feats = scenario_model.embed(&inputs)?;
        // Decision k covers windows [end - horizon, end).
        let ends: Vec<usize> = (1..=feats.len()).filter(|e| e % scenario_hop == 0 || *e == feats.len()).collect();
        let views: Vec<_> = ends.iter().map(|&e| &feats[e.saturating_sub(horizon)..e]).collect();
        let decisions = scenario_model.predict(&views)?;
        let total = seq.len() as f64 * WINDOW_SECONDS;
        let starts: Vec<f64> = (0..)
            .map(|i| i as f64 * har_hop)
            .take_while(|s| s + HAR_WINDOW_SECONDS <= total + 1e-9)
            .collect();
        let rows: Vec<WindowPrediction> = starts
            .par_iter()
            .map(|&start| {
                // Latest decision whose span ends at or before this window's end.
                let end_window = ((start + HAR_WINDOW_SECONDS) / WINDOW_SECONDS).floor() as usize;
                let d = ends.iter().rposition(|&e| e <= end_window.max(ends[0])).unwrap_or(0);
                let probs = &decisions[d].probabilities;
                let label = scenario_model.scenarios()[decisions[d].top1()].as_str();
                let window = seq.span(start, HAR_WINDOW_SECONDS, world)?;
                let activity = har_model.predict_window(&window, Some(&[label]), Gate::AudioOk)?;
                Ok(WindowPrediction {
                    time: offset + start,
                    scenario_probabilities: probs.iter().map(|&p| f64::from(p)).collect(),
                    activity: activity.top1,
                })
            })
            .collect::<Result<_>>()?;
        stream.extend(rows);
        offset += total;
    }
    Ok(stream)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn day_plan_changes_scenario_between_segments() {
        let settings = DailyLogSettings {
            segments: 8,
            segment_minutes: 1.0,
            ..DailyLogSettings::default()
        };
        let day = plan_day(&settings, &SequenceConfig::default(), 3).unwrap();
        assert_eq!(day.len(), 8);
        for w in day.windows(2) {
            assert_ne!(w[0].plan.scenarios(), w[1].plan.scenarios());
        }
        assert!(day.iter().all(|s| s.len() == 30 && s.plan.scenarios().len() == 1));
        assert_eq!(plan_day(&settings, &SequenceConfig::default(), 3).unwrap()[5].seeds, day[5].seeds);
    }
}
