//! 8-class sound localization (4 directions × near/far) from binaural
//! features, with an IMU motion-compensation branch, a classical GCC
//! baseline and the far-field gate.

mod model;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::{gcc_features, AudioClip, Distance, FeatureConfig, SpatialLabel, NUM_SPATIAL_CLASSES};

pub use model::{
    imu_frames, pad_frames, MotionFeatures, SpatialConfig, SpatialModel, SpatialSample, SpatialTrainOptions,
    MOTION_FEATURES, POOL,
};

pub const DEFAULT_GATE_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    /// One source per frame: rows are a softmax over the 8 classes.
    #[default]
    Softmax,
    /// Overlapping sources: independent sigmoid per class.
    Sigmoid,
}

/// Per-frame class probabilities at T/5 resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialPrediction {
    pub frame_probs: Array2<f32>,
    pub mode: HeadMode,
    /// Max over frames of the near-class mass (softmax) or of the largest
    /// near-class probability (sigmoid).
    pub near_confidence: f64,
    pub far_confidence: f64,
}

impl SpatialPrediction {
    pub fn new(frame_probs: Array2<f32>, mode: HeadMode) -> Result<Self> {
        if frame_probs.ncols() != NUM_SPATIAL_CLASSES {
            return Err(Error::Shape(format!(
                "expected {NUM_SPATIAL_CLASSES} classes, got {}",
                frame_probs.ncols()
            )));
        }
        if frame_probs.iter().any(|p| !p.is_finite() || !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("frame probabilities must lie in [0, 1]"));
        }
        let mass = |distance: Distance| -> f64 {
            frame_probs
                .rows()
                .into_iter()
                .map(|row| {
                    let vals = SpatialLabel::all()
                        .filter(|l| l.distance == distance)
                        .map(|l| f64::from(row[l.class_index()]));
                    match mode {
                        HeadMode::Softmax => vals.sum::<f64>().min(1.0),
                        HeadMode::Sigmoid => vals.fold(0.0, f64::max),
                    }
                })
                .fold(0.0, f64::max)
        };
        let near_confidence = mass(Distance::Near);
        let far_confidence = mass(Distance::Far);
        Ok(Self {
            frame_probs,
            mode,
            near_confidence,
            far_confidence,
        })
    }

    pub fn frames(&self) -> usize {
        self.frame_probs.nrows()
    }

    /// Arg-max class per frame.
    pub fn frame_classes(&self) -> Vec<usize> {
        self.frame_probs
            .rows()
            .into_iter()
            .map(|r| crate::temporal::argmax(r.as_slice().expect("contiguous rows")))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    AudioOk,
    FarFieldDominant,
}

/// `FarFieldDominant` iff the far confidence strictly exceeds `threshold`.
pub fn near_far_gate(pred: &SpatialPrediction, threshold: f64) -> Gate {
    if pred.far_confidence > threshold {
        Gate::FarFieldDominant
    } else {
        Gate::AudioOk
    }
}

/// Per-frame azimuth (radians, positive = left) from the GCC-PHAT peak lag:
/// `asin(lag · c / spacing)`. Cannot tell front from back; every estimate
/// lies in [-π/2, π/2].
pub fn classical_doa_baseline(
    audio: &AudioClip,
    cfg: &FeatureConfig,
    mic_spacing: f64,
    speed_of_sound: f64,
) -> Result<Vec<f64>> {
    if audio.channels() < 2 {
        return Err(Error::Shape("DOA baseline needs two channels".into()));
    }
    if !(mic_spacing > 0.0) || !(speed_of_sound > 0.0) {
        return Err(Error::invalid("mic spacing and speed of sound must be positive"));
    }
    if audio.samples().iter().all(|v| *v == 0.0) {
        return Err(Error::Degenerate("silent input has no direction".into()));
    }
    let gcc = gcc_features(audio, cfg)?;
    let half = cfg.n_lags as f64 / 2.0;
    Ok(gcc
        .rows()
        .into_iter()
        .map(|row| {
            let r = row.as_slice().expect("contiguous rows");
            let best = crate::temporal::argmax(r);
            let mut offset = 0.0;
            if best > 0 && best + 1 < r.len() {
                let (l, c, rr) = (f64::from(r[best - 1]), f64::from(r[best]), f64::from(r[best + 1]));
                let denom = l - 2.0 * c + rr;
                if denom.abs() > 1e-12 {
                    offset = (0.5 * (l - rr) / denom).clamp(-0.5, 0.5);
                }
            }
            // Positive lag: the right ear hears it later, so it is on the left.
            let lag = (best as f64 + offset - half) * cfg.lag_step_seconds;
            (lag * speed_of_sound / mic_spacing).clamp(-1.0, 1.0).asin()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn pred(far_mass: f32) -> SpatialPrediction {
        let near = (1.0 - far_mass) / 4.0;
        let far = far_mass / 4.0;
        SpatialPrediction::new(array![[near, far, near, far, near, far, near, far]], HeadMode::Softmax).unwrap()
    }

    #[test]
    fn gate_examples() {
        assert_eq!(near_far_gate(&pred(0.95), DEFAULT_GATE_THRESHOLD), Gate::FarFieldDominant);
        assert_eq!(near_far_gate(&pred(0.5), DEFAULT_GATE_THRESHOLD), Gate::AudioOk);
        let exact = SpatialPrediction {
            far_confidence: 0.9,
            ..pred(0.9)
        };
        assert_eq!(near_far_gate(&exact, 0.9), Gate::AudioOk);
    }

    #[test]
    fn confidences_are_max_over_frames() {
        let p = SpatialPrediction::new(
            array![[0.7, 0.1, 0.1, 0.1, 0.0, 0.0, 0.0, 0.0], [0.0, 0.6, 0.0, 0.2, 0.0, 0.1, 0.0, 0.1]],
            HeadMode::Softmax,
        )
        .unwrap();
        assert!((p.near_confidence - 0.8).abs() < 1e-6);
        assert!((p.far_confidence - 1.0).abs() < 1e-6);
        assert_eq!(p.frame_classes(), vec![0, 1]);
    }

    #[test]
    fn baseline_endpoints() {
        let cfg = FeatureConfig::default();
        let n = 4800;
        let mut rng_state = 1u64;
        let noise: Vec<f32> = (0..n + 40)
            .map(|_| {
                rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((rng_state >> 33) as f32 / (1u64 << 31) as f32) - 0.5
            })
            .collect();
        let same = AudioClip::from_channels(&[noise[..n].to_vec(), noise[..n].to_vec()], 48_000).unwrap();
        let az = classical_doa_baseline(&same, &cfg, 0.18, 343.0).unwrap();
        assert!(az.iter().all(|a| a.abs() < 1e-9));
        // Right channel 25 samples late: the source sits at the left ear.
        let left = noise[25..n + 25].to_vec();
        let right = noise[..n].to_vec();
        let clip = AudioClip::from_channels(&[left, right], 48_000).unwrap();
        let spacing = 25.0 / 48_000.0 * 343.0;
        let az = classical_doa_baseline(&clip, &cfg, spacing, 343.0).unwrap();
        let mean = az.iter().sum::<f64>() / az.len() as f64;
        assert!((mean - std::f64::consts::FRAC_PI_2).abs() < 0.2, "{mean}");
        let silent = AudioClip::from_channels(&[vec![0.0; n], vec![0.0; n]], 48_000).unwrap();
        assert!(classical_doa_baseline(&silent, &cfg, 0.18, 343.0).is_err());
    }
}
