//! Planar scene geometry: microphones on the wearer, static sources in the
//! world, and the wearer's trajectory.
//!
//! Coordinates are meters. The body frame has x pointing forward and y to
//! the wearer's left; headings are counter-clockwise radians from world x.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::labels::{label_quantize, SpatialLabel};
use super::motion::MotionComponent;
use super::types::{DEFAULT_AUDIO_RATE, DEFAULT_IMU_RATE};
use crate::error::{Error, Result};

pub type Point = [f64; 2];

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;
/// Half the inter-ear spacing of the default binaural pair.
pub const DEFAULT_EAR_OFFSET: f64 = 0.09;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub time: f64,
    pub position: Point,
    pub heading: f64,
}

/// Timestamped poses. Positions are interpolated with a Catmull-Rom spline so
/// the IMU synthesiser has a finite second derivative; headings are
/// interpolated linearly and are expected to be unwrapped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Pose>", into = "Vec<Pose>")]
pub struct Trajectory {
    poses: Vec<Pose>,
}

impl TryFrom<Vec<Pose>> for Trajectory {
    type Error = Error;

    fn try_from(poses: Vec<Pose>) -> Result<Self> {
        Trajectory::new(poses)
    }
}

impl From<Trajectory> for Vec<Pose> {
    fn from(t: Trajectory) -> Self {
        t.poses
    }
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::Empty("trajectory"));
        }
        if poses.windows(2).any(|w| w[1].time <= w[0].time) {
            return Err(Error::invalid(
                "trajectory timestamps must be strictly increasing",
            ));
        }
        if poses
            .iter()
            .any(|p| !(p.time.is_finite() && p.heading.is_finite() && p.position.iter().all(|v| v.is_finite())))
        {
            return Err(Error::NonFinite("trajectory"));
        }
        Ok(Self { poses })
    }

    /// A wearer standing still at `position` for `[0, duration]`.
    pub fn stationary(position: Point, heading: f64, duration: f64) -> Self {
        Self {
            poses: vec![
                Pose {
                    time: 0.0,
                    position,
                    heading,
                },
                Pose {
                    time: duration,
                    position,
                    heading,
                },
            ],
        }
    }

    /// In-place rotation at constant angular rate.
    pub fn spinning(position: Point, heading0: f64, rate: f64, duration: f64) -> Self {
        Self {
            poses: vec![
                Pose {
                    time: 0.0,
                    position,
                    heading: heading0,
                },
                Pose {
                    time: duration,
                    position,
                    heading: heading0 + rate * duration,
                },
            ],
        }
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn span(&self) -> (f64, f64) {
        (self.poses[0].time, self.poses[self.poses.len() - 1].time)
    }

    pub fn covers(&self, start: f64, end: f64) -> bool {
        let (a, b) = self.span();
        a <= start + 1e-9 && end <= b + 1e-9
    }

    pub fn pose_at(&self, time: f64) -> Result<Pose> {
        let (start, end) = self.span();
        if !(time >= start - 1e-9 && time <= end + 1e-9) {
            return Err(Error::OutsideTrajectory { time, start, end });
        }
        Ok(self.pose_at_clamped(time))
    }

    /// Pose at `time`, clamped to the trajectory span.
    pub fn pose_at_clamped(&self, time: f64) -> Pose {
        let n = self.poses.len();
        if n == 1 {
            return Pose { time, ..self.poses[0] };
        }
        let (start, end) = self.span();
        let t = time.clamp(start, end);
        let seg = match self
            .poses
            .partition_point(|p| p.time <= t)
        {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let p1 = self.poses[seg];
        let p2 = self.poses[seg + 1];
        let u = (t - p1.time) / (p2.time - p1.time);
        let p0 = if seg == 0 { p1 } else { self.poses[seg - 1] };
        let p3 = if seg + 2 < n { self.poses[seg + 2] } else { p2 };
        let mut position = [0.0; 2];
        for (axis, out) in position.iter_mut().enumerate() {
            *out = catmull_rom(
                p0.position[axis],
                p1.position[axis],
                p2.position[axis],
                p3.position[axis],
                u,
            );
        }
        Pose {
            time,
            position,
            heading: p1.heading + u * (p2.heading - p1.heading),
        }
    }
}

fn catmull_rom(p0: f64, p1: f64, p2: f64, p3: f64, u: f64) -> f64 {
    let u2 = u * u;
    let u3 = u2 * u;
    0.5 * ((2.0 * p1)
        + (-p0 + p2) * u
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u2
        + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * u3)
}

/// Sampled mono signal. Sample 0 sits at `start_time` seconds so sources
/// can carry pre-roll for propagation delay.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Arc<[f32]>,
    pub sample_rate: u32,
    pub start_time: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self {
            samples: samples.into(),
            sample_rate,
            start_time: 0.0,
        }
    }

    /// Linearly interpolated value at `time`; zero outside the recording.
    #[inline]
    pub fn value_at(&self, time: f64) -> f32 {
        let pos = (time - self.start_time) * f64::from(self.sample_rate);
        if pos < 0.0 {
            return 0.0;
        }
        let i = pos.floor() as usize;
        if i + 1 >= self.samples.len() {
            return if i < self.samples.len() && pos == i as f64 {
                self.samples[i]
            } else {
                0.0
            };
        }
        let frac = (pos - i as f64) as f32;
        self.samples[i] * (1.0 - frac) + self.samples[i + 1] * frac
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub position: Point,
    pub signal: Waveform,
    pub event_class: String,
    pub gain: f64,
}

impl SourceSpec {
    pub fn new(position: Point, signal: Waveform, event_class: impl Into<String>, gain: f64) -> Result<Self> {
        if !(gain >= 0.0) {
            return Err(Error::invalid("source gain must be non-negative"));
        }
        Ok(Self {
            position,
            signal,
            event_class: event_class.into(),
            gain,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuNoise {
    pub accel_std: f64,
    pub gyro_std: f64,
}

impl Default for ImuNoise {
    fn default() -> Self {
        Self {
            accel_std: 0.02,
            gyro_std: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// Microphone positions in the body frame.
    pub mic_positions: Vec<Point>,
    pub sources: Vec<SourceSpec>,
    pub listener_trajectory: Trajectory,
    pub speed_of_sound: f64,
    pub sample_rate: u32,
    pub imu_rate: u32,
    /// Additive noise relative to the clean mix; `None` leaves only the floor.
    pub snr_db: Option<f64>,
    /// Absolute noise standard deviation that is always present.
    pub noise_floor: f64,
    pub imu_noise: ImuNoise,
    /// Body-motion overlay added on top of the trajectory-derived IMU signal.
    pub motion: Vec<MotionComponent>,
}

impl Scene {
    pub fn new(mic_positions: Vec<Point>, listener_trajectory: Trajectory) -> Result<Self> {
        if mic_positions.is_empty() {
            return Err(Error::invalid("scene needs at least one microphone"));
        }
        Ok(Self {
            mic_positions,
            sources: Vec::new(),
            listener_trajectory,
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
            sample_rate: DEFAULT_AUDIO_RATE,
            imu_rate: DEFAULT_IMU_RATE,
            snr_db: None,
            noise_floor: 1e-4,
            imu_noise: ImuNoise::default(),
            motion: Vec::new(),
        })
    }

    /// Two ears 18 cm apart on the body y axis; channel 0 is the left ear.
    pub fn binaural(listener_trajectory: Trajectory) -> Self {
        Self::new(
            vec![[0.0, DEFAULT_EAR_OFFSET], [0.0, -DEFAULT_EAR_OFFSET]],
            listener_trajectory,
        )
        .expect("two microphones")
    }

    pub fn validate(&self) -> Result<()> {
        if self.mic_positions.is_empty() {
            return Err(Error::invalid("scene needs at least one microphone"));
        }
        if !(self.speed_of_sound > 0.0) {
            return Err(Error::invalid("speed of sound must be positive"));
        }
        if self.sample_rate == 0 || self.imu_rate == 0 {
            return Err(Error::invalid("sample rates must be positive"));
        }
        if self.sources.iter().any(|s| !(s.gain >= 0.0)) {
            return Err(Error::invalid("source gain must be non-negative"));
        }
        Ok(())
    }

    pub fn with_source(mut self, source: SourceSpec) -> Self {
        self.sources.push(source);
        self
    }

    /// World position of microphone `mic` for the given pose.
    #[inline]
    pub fn mic_world(&self, mic: usize, pose: &Pose) -> Point {
        body_to_world(self.mic_positions[mic], pose)
    }

    /// Source position relative to the wearer, in the body frame.
    pub fn relative_position(&self, source_index: usize, time: f64) -> Result<Point> {
        let source = self.source(source_index)?;
        let pose = self.listener_trajectory.pose_at(time)?;
        Ok(world_to_body(source.position, &pose))
    }

    pub fn label_at(&self, source_index: usize, time: f64, near_threshold: f64) -> Result<SpatialLabel> {
        let rel = self.relative_position(source_index, time)?;
        label_quantize(rel, near_threshold)
    }

    fn source(&self, index: usize) -> Result<&SourceSpec> {
        self.sources.get(index).ok_or(Error::IndexOutOfRange {
            index,
            len: self.sources.len(),
        })
    }
}

#[inline]
pub fn body_to_world(p: Point, pose: &Pose) -> Point {
    let (s, c) = pose.heading.sin_cos();
    [
        pose.position[0] + c * p[0] - s * p[1],
        pose.position[1] + s * p[0] + c * p[1],
    ]
}

#[inline]
pub fn world_to_body(p: Point, pose: &Pose) -> Point {
    let (s, c) = pose.heading.sin_cos();
    let dx = p[0] - pose.position[0];
    let dy = p[1] - pose.position[1];
    [c * dx + s * dy, -s * dx + c * dy]
}

#[inline]
pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Closed-form arrival-time difference `t_i - t_j` of source `source_index`
/// at microphones `mic_i` and `mic_j`, with the array placed at the wearer's
/// pose at `time`.
pub fn tdoa_oracle(scene: &Scene, source_index: usize, mic_i: usize, mic_j: usize, time: f64) -> Result<f64> {
    let n_mics = scene.mic_positions.len();
    for mic in [mic_i, mic_j] {
        if mic >= n_mics {
            return Err(Error::IndexOutOfRange {
                index: mic,
                len: n_mics,
            });
        }
    }
    let source = scene.source(source_index)?;
    let pose = scene.listener_trajectory.pose_at(time)?;
    let pi = scene.mic_world(mic_i, &pose);
    let pj = scene.mic_world(mic_j, &pose);
    Ok((distance(source.position, pi) - distance(source.position, pj)) / scene.speed_of_sound)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_scene(source: Point) -> Scene {
        let traj = Trajectory::stationary([0.0, 0.0], 0.0, 1.0);
        let mut scene = Scene::new(vec![[-0.09, 0.0], [0.09, 0.0]], traj).unwrap();
        scene.sources.push(SourceSpec::new(source, Waveform::new(vec![0.0], 48_000), "x", 1.0).unwrap());
        scene
    }

    #[test]
    fn tdoa_symmetric_source_is_zero() {
        let scene = pair_scene([0.0, 2.0]);
        assert_eq!(tdoa_oracle(&scene, 0, 0, 1, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn tdoa_endfire_source() {
        let scene = pair_scene([10.0, 0.0]);
        let t = tdoa_oracle(&scene, 0, 0, 1, 0.0).unwrap();
        let expected = (10.09 - 9.91) / 343.0;
        assert!((t - expected).abs() < 1e-15, "{t} vs {expected}");
        assert!((t - 5.248e-4).abs() < 1e-7);
    }

    #[test]
    fn tdoa_same_mic_is_zero() {
        let scene = pair_scene([3.0, 1.0]);
        assert_eq!(tdoa_oracle(&scene, 0, 1, 1, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn tdoa_errors() {
        let scene = pair_scene([3.0, 1.0]);
        assert!(matches!(
            tdoa_oracle(&scene, 0, 0, 2, 0.0),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            tdoa_oracle(&scene, 1, 0, 1, 0.0),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            tdoa_oracle(&scene, 0, 0, 1, 1.5),
            Err(Error::OutsideTrajectory { .. })
        ));
    }

    #[test]
    fn rotation_moves_array() {
        // Facing +y, the left ear points to -x.
        let traj = Trajectory::stationary([0.0, 0.0], std::f64::consts::FRAC_PI_2, 1.0);
        let mut scene = Scene::binaural(traj);
        scene.sources.push(SourceSpec::new([-5.0, 0.0], Waveform::new(vec![0.0], 48_000), "x", 1.0).unwrap());
        let t = tdoa_oracle(&scene, 0, 0, 1, 0.0).unwrap();
        assert!(t < 0.0, "left ear should hear it first");
        let rel = scene.relative_position(0, 0.0).unwrap();
        assert!(rel[1] > 4.99 && rel[0].abs() < 1e-9);
    }

    #[test]
    fn trajectory_rejects_non_increasing() {
        let p = Pose { time: 0.0, position: [0.0, 0.0], heading: 0.0 };
        assert!(Trajectory::new(vec![p, p]).is_err());
    }

    #[test]
    fn catmull_rom_passes_through_knots() {
        let poses = vec![
            Pose { time: 0.0, position: [0.0, 0.0], heading: 0.0 },
            Pose { time: 1.0, position: [1.0, 0.5], heading: 0.2 },
            Pose { time: 2.0, position: [1.5, 2.0], heading: 0.4 },
        ];
        let t = Trajectory::new(poses).unwrap();
        let p = t.pose_at(1.0).unwrap();
        assert!((p.position[0] - 1.0).abs() < 1e-12 && (p.position[1] - 0.5).abs() < 1e-12);
        assert!((p.heading - 0.2).abs() < 1e-12);
    }

    #[test]
    fn waveform_interpolates() {
        let w = Waveform::new(vec![0.0, 1.0, 0.0], 10);
        assert!((w.value_at(0.05) - 0.5).abs() < 1e-6);
        assert_eq!(w.value_at(-0.1), 0.0);
        assert_eq!(w.value_at(1.0), 0.0);
    }
}
