//! Localization corpora: static scenes (with front/back mirror pairs for
//! testing) and rotating-listener scenes.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::sounds::{synthesize, SoundParams};
use crate::signals::{
    render_binaural, stack_spatial_features, synth_imu, AudioClip, FeatureConfig, ImuSequence, Point, Scene, SourceSpec, Trajectory,
    Waveform, DEFAULT_NEAR_THRESHOLD,
};
use crate::spatial::{imu_frames, pad_frames, SpatialSample, POOL};

/// Source classes with mostly continuous energy.
pub const LOCALIZATION_SOURCES: [&str; 9] = [
    "speech",
    "music",
    "electric_guitar",
    "piano",
    "sizzling",
    "water_running",
    "vacuum",
    "traffic",
    "laughter",
];

const PRE_ROLL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpatialCorpusConfig {
    pub duration: f64,
    pub near_range: (f64, f64),
    pub far_range: (f64, f64),
    /// Rotation speed range for moving scenes, degrees per second.
    pub rotation_deg_per_s: (f64, f64),
    pub snr_db: f64,
    pub source_gain: f64,
    /// Relative ± jitter on the source gain.
    pub gain_jitter: f64,
    pub near_threshold: f64,
}

impl Default for SpatialCorpusConfig {
    fn default() -> Self {
        Self {
            duration: 1.0,
            near_range: (0.4, 1.2),
            far_range: (2.0, 5.0),
            rotation_deg_per_s: (90.0, 200.0),
            snr_db: 30.0,
            source_gain: 0.3,
            gain_jitter: 0.1,
            near_threshold: DEFAULT_NEAR_THRESHOLD,
        }
    }
}

/// Everything needed to render one localization window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialScenePlan {
    pub class_index: usize,
    /// Source position in the world frame (listener starts at the origin
    /// facing +x).
    pub position: Point,
    /// Heading rate, rad/s; zero for static scenes.
    pub rotation: f64,
    pub gain: f64,
    pub seed: u64,
}

impl SpatialScenePlan {
    pub fn scene(&self, cfg: &SpatialCorpusConfig) -> Result<Scene> {
        let sr = 48_000;
        let class = LOCALIZATION_SOURCES[self.class_index % LOCALIZATION_SOURCES.len()];
        let samples = synthesize(class, SoundParams::default(), sr, cfg.duration + 2.0 * PRE_ROLL, self.seed)?;
        let signal = Waveform {
            samples: samples.into(),
            sample_rate: sr,
            start_time: -PRE_ROLL,
        };
        let traj = if self.rotation == 0.0 {
            Trajectory::stationary([0.0, 0.0], 0.0, cfg.duration)
        } else {
            Trajectory::spinning([0.0, 0.0], 0.0, self.rotation, cfg.duration)
        };
        let mut scene = Scene::binaural(traj).with_source(SourceSpec::new(self.position, signal, class, self.gain)?);
        scene.snr_db = Some(cfg.snr_db);
        Ok(scene)
    }

    /// Front/back mirror image across the ear axis.
    pub fn mirrored(&self) -> Self {
        Self {
            position: [-self.position[0], self.position[1]],
            ..*self
        }
    }

    pub fn render(&self, cfg: &SpatialCorpusConfig, features: &FeatureConfig) -> Result<SpatialSample> {
        let (audio, imu, annotation) = self.render_window(cfg, features)?;
        spatial_sample(&audio, &imu, &annotation, features)
    }

    /// Binaural audio, IMU and the per-frame oracle annotation.
    pub fn render_window(
        &self,
        cfg: &SpatialCorpusConfig,
        features: &FeatureConfig,
    ) -> Result<(AudioClip, ImuSequence, FrameAnnotation)> {
        let scene = self.scene(cfg)?;
        let audio = render_binaural(&scene, cfg.duration, self.seed ^ 0xA5A5)?;
        let imu = synth_imu(&scene, cfg.duration, self.seed ^ 0x5A5A)?;
        let out_frames = features.n_frames(audio.frames(), audio.sample_rate()).div_ceil(POOL);
        let frame_s = cfg.duration / out_frames as f64;
        let src = &scene.sources[0];
        let mut labels = Vec::with_capacity(out_frames);
        let mut energy = Vec::with_capacity(out_frames);
        for k in 0..out_frames {
            let mid = (k as f64 + 0.5) * frame_s;
            labels.push(scene.label_at(0, mid, cfg.near_threshold)?.class_index());
            let n = 64;
            let e: f64 = (0..n)
                .map(|i| f64::from(src.signal.value_at((k as f64 + i as f64 / n as f64) * frame_s)).powi(2))
                .sum::<f64>()
                / n as f64;
            energy.push(e);
        }
        let mean = energy.iter().sum::<f64>() / energy.len().max(1) as f64;
        let mask = energy.iter().map(|e| f32::from(u8::from(*e > 0.05 * mean))).collect();
        Ok((audio, imu, FrameAnnotation { labels, mask }))
    }
}

/// Oracle class per output frame and the mask of frames where the source is
/// audible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    pub labels: Vec<usize>,
    pub mask: Vec<f32>,
}

/// Model input for one recorded window.
pub fn spatial_sample(
    audio: &AudioClip,
    imu: &ImuSequence,
    annotation: &FrameAnnotation,
    features: &FeatureConfig,
) -> Result<SpatialSample> {
    let feats = pad_frames(&stack_spatial_features(audio, features)?.tensor);
    let t = feats.len_of(ndarray::Axis(1));
    if t / POOL != annotation.labels.len() || annotation.mask.len() != annotation.labels.len() {
        return Err(Error::Shape(format!(
            "{} output frames but {} labels and {} mask values",
            t / POOL,
            annotation.labels.len(),
            annotation.mask.len()
        )));
    }
    Ok(SpatialSample {
        imu: imu_frames(imu, t)?,
        features: feats,
        labels: annotation.labels.iter().map(|l| vec![*l]).collect(),
        mask: annotation.mask.clone(),
    })
}

fn random_plan(cfg: &SpatialCorpusConfig, rotating: bool, rng: &mut ChaCha8Rng) -> SpatialScenePlan {
    let near = rng.random_bool(0.5);
    let (lo, hi) = if near { cfg.near_range } else { cfg.far_range };
    let r = rng.random_range(lo..hi);
    let az = rng.random_range(0.0..2.0 * PI);
    let rotation = if rotating {
        let (a, b) = cfg.rotation_deg_per_s;
        let w = rng.random_range(a..b).to_radians();
        if rng.random_bool(0.5) {
            w
        } else {
            -w
        }
    } else {
        0.0
    };
    let jitter = rng.random_range(-cfg.gain_jitter..=cfg.gain_jitter);
    SpatialScenePlan {
        class_index: rng.random_range(0..LOCALIZATION_SOURCES.len()),
        position: [r * az.cos(), r * az.sin()],
        rotation,
        gain: cfg.source_gain * (1.0 + jitter),
        seed: rng.random(),
    }
}

/// `n` static plans at uniformly random positions.
pub fn static_plans(n: usize, cfg: &SpatialCorpusConfig, seed: u64) -> Vec<SpatialScenePlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_plan(cfg, false, &mut rng)).collect()
}

/// `2·pairs` static plans: each random plan followed by its front/back
/// mirror rendered with the same seeds.
pub fn mirror_pair_plans(pairs: usize, cfg: &SpatialCorpusConfig, seed: u64) -> Vec<SpatialScenePlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..pairs)
        .flat_map(|_| {
            let p = random_plan(cfg, false, &mut rng);
            [p, p.mirrored()]
        })
        .collect()
}

/// `n` plans with the listener turning in place.
pub fn rotating_plans(n: usize, cfg: &SpatialCorpusConfig, seed: u64) -> Vec<SpatialScenePlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_plan(cfg, true, &mut rng)).collect()
}

pub fn render_plans(
    plans: &[SpatialScenePlan],
    cfg: &SpatialCorpusConfig,
    features: &FeatureConfig,
) -> Result<Vec<SpatialSample>> {
    plans.par_iter().map(|p| p.render(cfg, features)).collect()
}
