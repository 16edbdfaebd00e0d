//! Synthetic daily-life world: activities with paired sound and motion
//! signatures, scenarios built from them, and sequence plans with key frames.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::sounds::{synthesize, SoundParams, AMBIENT};
use crate::signals::{synth_imu, AudioClip, ImuSequence, MotionComponent, Scene, SensorWindow, Trajectory};

pub const SCENARIOS: [&str; 6] = ["cooking", "cleaning", "office_work", "socializing", "exercise", "commuting"];

pub const MOTION_CLASSES: [&str; 4] = ["walking", "moving", "standing up", "sitting down"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionPattern {
    Still,
    Chop,
    Stir,
    Scrub,
    PushPull,
    Jolt,
    GaitFast,
    GaitSlow,
    Bounce,
    StandUp,
    SitDown,
}

impl MotionPattern {
    pub const ALL: [MotionPattern; 11] = [
        MotionPattern::Still,
        MotionPattern::Chop,
        MotionPattern::Stir,
        MotionPattern::Scrub,
        MotionPattern::PushPull,
        MotionPattern::Jolt,
        MotionPattern::GaitFast,
        MotionPattern::GaitSlow,
        MotionPattern::Bounce,
        MotionPattern::StandUp,
        MotionPattern::SitDown,
    ];

    /// Coarse class used in prompts.
    pub fn motion_class(self) -> &'static str {
        match self {
            MotionPattern::GaitFast | MotionPattern::GaitSlow => "walking",
            MotionPattern::StandUp => "standing up",
            MotionPattern::SitDown => "sitting down",
            _ => "moving",
        }
    }

    /// Body-frame overlay with ±10 % jitter on rates and amplitudes.
    pub fn components(self, duration: f64, rng: &mut ChaCha8Rng) -> Vec<MotionComponent> {
        let mut j = |x: f64| x * rng.random_range(0.9..1.1);
        let sin = |channel, freq, amplitude, phase| MotionComponent::Sinusoid {
            channel,
            freq,
            amplitude,
            phase,
        };
        let imp = |channel, rate, amplitude, width, phase| MotionComponent::Impulses {
            channel,
            rate,
            amplitude,
            width,
            phase,
        };
        let (p1, p2) = (j(PI), j(PI));
        match self {
            MotionPattern::Still => vec![sin(0, j(0.3), j(0.05), p1)],
            MotionPattern::Chop => vec![imp(2, j(2.5), j(6.0), 0.04, j(0.5)), sin(4, j(2.5), j(0.6), p1)],
            MotionPattern::Stir => {
                let f = j(1.5);
                vec![sin(0, f, j(1.5), p1), sin(1, f, j(1.5), p1 + PI / 2.0), sin(5, f, j(0.4), p2)]
            }
            MotionPattern::Scrub => vec![sin(1, j(4.0), j(2.5), p1), sin(3, j(4.0), j(0.8), p2)],
            MotionPattern::PushPull => vec![sin(0, j(0.8), j(3.0), p1), sin(5, j(0.8), j(0.3), p2)],
            MotionPattern::Jolt => vec![imp(1, j(2.5), j(8.0), 0.025, j(0.5))],
            MotionPattern::GaitFast => vec![
                sin(2, j(2.8), j(6.0), p1),
                sin(0, j(1.4), j(2.0), p2),
                sin(5, j(1.4), j(0.5), p2),
            ],
            MotionPattern::GaitSlow => vec![
                sin(2, j(1.8), j(2.5), p1),
                sin(0, j(0.9), j(1.0), p2),
                sin(5, j(0.9), j(0.3), p2),
            ],
            MotionPattern::Bounce => vec![sin(2, j(2.2), j(9.0), p1), sin(4, j(2.2), j(0.3), p2)],
            MotionPattern::StandUp | MotionPattern::SitDown => {
                let sign = if self == MotionPattern::StandUp { 1.0 } else { -1.0 };
                let dur = j(1.2).min(duration * 0.8);
                let start = j((duration - dur).max(1e-3) / 2.0);
                vec![
                    MotionComponent::Step {
                        channel: 2,
                        start,
                        duration: dur,
                        displacement: sign * j(0.45),
                    },
                    MotionComponent::Step {
                        channel: 4,
                        start,
                        duration: dur,
                        displacement: sign * j(0.5),
                    },
                ]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activity {
    pub name: &'static str,
    pub scenario: &'static str,
    pub sound: &'static str,
    pub sound_rate: Option<f64>,
    pub motion: MotionPattern,
}

const fn act(
    name: &'static str,
    scenario: &'static str,
    sound: &'static str,
    sound_rate: Option<f64>,
    motion: MotionPattern,
) -> Activity {
    Activity {
        name,
        scenario,
        sound,
        sound_rate,
        motion,
    }
}

/// Two pairs share both sound and motion and differ only by scenario
/// (rinsing_food/washing_hands, talking_meeting/chatting); running and
/// jumping_rope share sound; typing, talking and chatting share motion.
pub const ACTIVITIES: [Activity; 12] = [
    act("chopping", "cooking", "chopping", None, MotionPattern::Chop),
    act("stirring", "cooking", "sizzling", None, MotionPattern::Stir),
    act("rinsing_food", "cooking", "water_running", None, MotionPattern::Scrub),
    act("washing_hands", "cleaning", "water_running", None, MotionPattern::Scrub),
    act("vacuuming", "cleaning", "vacuum", None, MotionPattern::PushPull),
    act("typing", "office_work", "keyboard_typing", None, MotionPattern::Still),
    act("talking_meeting", "office_work", "speech", None, MotionPattern::Still),
    act("chatting", "socializing", "speech", None, MotionPattern::Still),
    act("clapping", "socializing", "clapping", None, MotionPattern::Jolt),
    act("running", "exercise", "footsteps", Some(3.0), MotionPattern::GaitFast),
    act("jumping_rope", "exercise", "footsteps", Some(3.0), MotionPattern::Bounce),
    act("walking_outside", "commuting", "traffic", None, MotionPattern::GaitSlow),
];

pub fn activity_names() -> Vec<String> {
    ACTIVITIES.iter().map(|a| a.name.to_string()).collect()
}

pub fn scenario_names() -> Vec<String> {
    SCENARIOS.iter().map(|s| s.to_string()).collect()
}

pub fn scenario_index(name: &str) -> Option<usize> {
    SCENARIOS.iter().position(|s| *s == name)
}

pub fn activities_of(scenario: usize) -> Vec<usize> {
    (0..ACTIVITIES.len())
        .filter(|&a| ACTIVITIES[a].scenario == SCENARIOS[scenario])
        .collect()
}

/// What a window contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindowContent {
    /// Sound and motion of one activity: a key frame.
    Activity { activity: usize },
    /// Room tone and no motion.
    Idle,
    /// Slow footsteps and slow gait.
    IndoorWalk,
    /// Sound of `activity` with no matching motion (e.g. a TV or a neighbour).
    Distractor { activity: usize },
    /// Room tone while standing up or sitting down.
    Posture { stand_up: bool },
}

impl WindowContent {
    pub fn is_key_frame(&self) -> bool {
        matches!(self, WindowContent::Activity { .. })
    }

    pub fn sound(&self) -> (&'static str, Option<f64>) {
        match *self {
            WindowContent::Activity { activity } | WindowContent::Distractor { activity } => {
                (ACTIVITIES[activity].sound, ACTIVITIES[activity].sound_rate)
            }
            WindowContent::Idle | WindowContent::Posture { .. } => (AMBIENT, None),
            WindowContent::IndoorWalk => ("footsteps", Some(1.8)),
        }
    }

    pub fn motion(&self) -> MotionPattern {
        match *self {
            WindowContent::Activity { activity } => ACTIVITIES[activity].motion,
            WindowContent::Idle | WindowContent::Distractor { .. } => MotionPattern::Still,
            WindowContent::IndoorWalk => MotionPattern::GaitSlow,
            WindowContent::Posture { stand_up } => {
                if stand_up {
                    MotionPattern::StandUp
                } else {
                    MotionPattern::SitDown
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub audio_rate: u32,
    pub imu_rate: u32,
    /// Gain of the room tone mixed under every window.
    pub ambient_gain: f64,
    /// Gain of the foreground sound; distractors play at half this.
    pub foreground_gain: f64,
    pub noise_std: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            audio_rate: 16_000,
            imu_rate: 200,
            ambient_gain: 0.25,
            foreground_gain: 1.0,
            noise_std: 0.003,
        }
    }
}

impl WorldConfig {
    /// The drift deployment: the microphone is covered, so foreground sound
    /// arrives at half amplitude.
    pub fn drift() -> Self {
        Self {
            foreground_gain: 0.5,
            ..Self::default()
        }
    }
}

/// Renders one mono window of `content`; a pure function of the arguments.
pub fn synth_window(content: &WindowContent, duration: f64, cfg: &WorldConfig, seed: u64) -> Result<SensorWindow> {
    if !(duration > 0.0) {
        return Err(Error::invalid("window duration must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (duration * f64::from(cfg.audio_rate)).round() as usize;
    let ambient = synthesize(AMBIENT, SoundParams::default(), cfg.audio_rate, duration, rng.random())?;
    let (sound, rate) = content.sound();
    let mut mix: Vec<f64> = ambient.iter().map(|v| f64::from(*v) * cfg.ambient_gain).collect();
    if sound != AMBIENT {
        let rate = rate.map(|r| r * rng.random_range(0.9..1.1));
        let fg = synthesize(sound, SoundParams { rate_hz: rate }, cfg.audio_rate, duration, rng.random())?;
        let gain = match content {
            WindowContent::Distractor { .. } => 0.5,
            _ => 1.0,
        } * cfg.foreground_gain
            * rng.random_range(0.7..1.3);
        for (m, v) in mix.iter_mut().zip(&fg) {
            *m += f64::from(*v) * gain;
        }
    }
    let noise = Normal::new(0.0, cfg.noise_std.max(0.0)).map_err(|e| Error::invalid(e.to_string()))?;
    let samples: Vec<f32> = mix
        .iter()
        .take(n)
        .map(|m| (m + noise.sample(&mut rng)).clamp(-1.0, 1.0) as f32)
        .collect();
    let audio = AudioClip::new(Array2::from_shape_vec((1, samples.len()), samples).expect("shape"), cfg.audio_rate)?;

    let mut scene = Scene::binaural(Trajectory::stationary([0.0, 0.0], 0.0, duration));
    scene.imu_rate = cfg.imu_rate;
    scene.motion = content.motion().components(duration, &mut rng);
    let imu = synth_imu(&scene, duration, rng.random())?;
    SensorWindow::new(audio, imu, 0.0)
}

/// IMU of a standing wearer performing `pattern`; no audio is rendered.
pub fn synth_motion(pattern: MotionPattern, duration: f64, imu_rate: u32, seed: u64) -> Result<ImuSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = Scene::binaural(Trajectory::stationary([0.0, 0.0], 0.0, duration));
    scene.imu_rate = imu_rate;
    scene.motion = pattern.components(duration, &mut rng);
    synth_imu(&scene, duration, rng.random())
}

/// Window contents and per-window scenario labels of one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequencePlan {
    pub windows: Vec<WindowContent>,
    pub window_scenarios: Vec<Vec<usize>>,
}

impl SequencePlan {
    pub fn scenarios(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.window_scenarios.iter().flatten().copied().collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SequenceConfig {
    pub windows: usize,
    /// Probability that a window is a key frame of its scenario.
    pub p_key: f64,
    /// Probability that a non-key window is a distractor rather than generic.
    pub p_distractor: f64,
    /// Probability that a sequence spans two scenarios (first and second half).
    pub p_two_scenarios: f64,
    /// Probability that a sequence has no key frame at all: the wearer is in
    /// the scenario but nothing characteristic happens.
    pub p_idle_sequence: f64,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            windows: 15,
            p_key: 0.35,
            p_distractor: 0.15,
            p_two_scenarios: 0.2,
            p_idle_sequence: 0.1,
        }
    }
}

impl SequenceConfig {
    /// The drift setting: short single-scenario episodes (6 s) with sparse
    /// key frames and no idle episodes.
    pub fn drift() -> Self {
        Self {
            windows: 3,
            p_key: 0.12,
            p_two_scenarios: 0.0,
            p_idle_sequence: 0.0,
            ..Self::default()
        }
    }
}

/// Plans a sequence. Unless the sequence is idle, every scenario segment
/// gets at least one key frame.
pub fn plan_sequence(cfg: &SequenceConfig, primary: usize, rng: &mut ChaCha8Rng) -> SequencePlan {
    let n = cfg.windows.max(1);
    let idle = rng.random_bool(cfg.p_idle_sequence.clamp(0.0, 1.0));
    let two = n >= 4 && rng.random_bool(cfg.p_two_scenarios.clamp(0.0, 1.0));
    let secondary = if two {
        let mut s = rng.random_range(0..SCENARIOS.len() - 1);
        if s >= primary {
            s += 1;
        }
        Some(s)
    } else {
        None
    };
    let split = if two { n / 2 } else { n };
    let mut windows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for k in 0..n {
        let scenario = if k < split { primary } else { secondary.unwrap_or(primary) };
        let content = if !idle && rng.random_bool(cfg.p_key.clamp(0.0, 1.0)) {
            key_frame(scenario, rng)
        } else if rng.random_bool(cfg.p_distractor.clamp(0.0, 1.0)) {
            WindowContent::Distractor {
                activity: rng.random_range(0..ACTIVITIES.len()),
            }
        } else {
            match rng.random_range(0..10) {
                0..=4 => WindowContent::Idle,
                5..=8 => WindowContent::IndoorWalk,
                _ => WindowContent::Posture {
                    stand_up: rng.random_bool(0.5),
                },
            }
        };
        windows.push(content);
        labels.push(vec![scenario]);
    }
    for (lo, hi) in [(0, split), (split, n)] {
        if !idle && lo < hi && !windows[lo..hi].iter().any(WindowContent::is_key_frame) {
            let k = rng.random_range(lo..hi);
            windows[k] = key_frame(labels[k][0], rng);
        }
    }
    SequencePlan {
        windows,
        window_scenarios: labels,
    }
}

fn key_frame(scenario: usize, rng: &mut ChaCha8Rng) -> WindowContent {
    let acts = activities_of(scenario);
    WindowContent::Activity {
        activity: acts[rng.random_range(0..acts.len())],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activities_partition_the_scenarios() {
        let sizes: Vec<usize> = (0..SCENARIOS.len()).map(|s| activities_of(s).len()).collect();
        assert_eq!(sizes, vec![3, 2, 2, 2, 2, 1]);
    }

    #[test]
    fn window_is_deterministic_and_aligned() {
        let cfg = WorldConfig::default();
        let c = WindowContent::Activity { activity: 0 };
        let a = synth_window(&c, 2.0, &cfg, 5).unwrap();
        let b = synth_window(&c, 2.0, &cfg, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.audio.frames(), 32_000);
        assert_eq!(a.imu.frames(), 400);
    }

    #[test]
    fn plans_have_key_frames_per_segment() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let normal = SequenceConfig {
            p_idle_sequence: 0.0,
            ..SequenceConfig::default()
        };
        for i in 0..200 {
            let cfg = if i % 2 == 0 { normal.clone() } else { SequenceConfig::drift() };
            let p = plan_sequence(&cfg, i % 6, &mut rng);
            assert_eq!(p.windows.len(), cfg.windows);
            for s in p.scenarios() {
                assert!(p
                    .windows
                    .iter()
                    .zip(&p.window_scenarios)
                    .any(|(w, l)| w.is_key_frame() && l.contains(&s)));
            }
        }
    }

    #[test]
    fn idle_sequences_have_no_key_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let idle = SequenceConfig {
            p_idle_sequence: 1.0,
            ..SequenceConfig::default()
        };
        for i in 0..50 {
            let p = plan_sequence(&idle, i % 6, &mut rng);
            assert!(!p.windows.iter().any(WindowContent::is_key_frame));
        }
    }

    #[test]
    fn motion_classes() {
        assert_eq!(MotionPattern::GaitFast.motion_class(), "walking");
        assert_eq!(MotionPattern::StandUp.motion_class(), "standing up");
        assert_eq!(MotionPattern::Chop.motion_class(), "moving");
        for p in MotionPattern::ALL {
            assert!(MOTION_CLASSES.contains(&p.motion_class()));
        }
    }
}
