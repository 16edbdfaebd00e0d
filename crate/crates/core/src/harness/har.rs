//! Activity-recognition corpora over the synthetic world.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::corpus::WindowFiles;
use super::world::{synth_window, WindowContent, WorldConfig, ACTIVITIES};
use crate::error::Result;
use crate::har::{HarSample, HAR_WINDOW_SECONDS};
use crate::signals::{FeatureConfig, SensorWindow};

/// One activity window: the activity, its scenario label and render seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarPlan {
    pub activity: usize,
    pub seed: u64,
    /// Read the window from disk instead of rendering it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub files: Option<WindowFiles>,
}

impl HarPlan {
    pub fn scenario(&self) -> &'static str {
        ACTIVITIES[self.activity].scenario
    }

    pub fn window(&self, world: &WorldConfig) -> Result<SensorWindow> {
        if let Some(files) = &self.files {
            return files.load();
        }
        synth_window(
            &WindowContent::Activity {
                activity: self.activity,
            },
            HAR_WINDOW_SECONDS,
            world,
            self.seed,
        )
    }
}

/// `per_class` windows of every activity, interleaved by class.
pub fn har_plans(per_class: usize, seed: u64) -> Vec<HarPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..per_class)
        .flat_map(|_| (0..ACTIVITIES.len()).map(|a| (a, 0u64)).collect::<Vec<_>>())
        .map(|(activity, _)| HarPlan {
            activity,
            seed: rng.random(),
            files: None,
        })
        .collect()
}

/// Encoder inputs for every plan. Scenario tokens use the plan's scenario.
pub fn har_samples(plans: &[HarPlan], world: &WorldConfig, features: &FeatureConfig) -> Result<Vec<HarSample>> {
    plans
        .par_iter()
        .map(|p| HarSample::from_window(&p.window(world)?, features, p.activity, vec![p.scenario().to_string()]))
        .collect()
}
