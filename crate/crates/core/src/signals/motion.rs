use std::f64::consts::PI;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scene::Scene;
use super::types::{ImuSequence, GRAVITY};
use crate::error::{Error, Result};

/// Step used for the finite-difference derivatives of the trajectory.
const DERIVATIVE_STEP: f64 = 1e-3;

/// Body-frame motion added on top of the trajectory-derived IMU signal.
/// `channel` indexes `ax, ay, az, gx, gy, gz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MotionComponent {
    Sinusoid {
        channel: usize,
        freq: f64,
        amplitude: f64,
        phase: f64,
    },
    /// Train of decaying half-sine jolts, e.g. footfalls or chops.
    Impulses {
        channel: usize,
        rate: f64,
        amplitude: f64,
        width: f64,
        phase: f64,
    },
    /// Smooth raised-cosine displacement (accelerometer channels) or
    /// rotation (gyroscope channels) of `displacement` over `duration`.
    Step {
        channel: usize,
        start: f64,
        duration: f64,
        displacement: f64,
    },
}

impl MotionComponent {
    fn channel(&self) -> usize {
        match self {
            MotionComponent::Sinusoid { channel, .. }
            | MotionComponent::Impulses { channel, .. }
            | MotionComponent::Step { channel, .. } => *channel,
        }
    }

    /// Contribution at time `t`.
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            MotionComponent::Sinusoid {
                freq,
                amplitude,
                phase,
                ..
            } => amplitude * (2.0 * PI * freq * t + phase).sin(),
            MotionComponent::Impulses {
                rate,
                amplitude,
                width,
                phase,
                ..
            } => {
                let period = 1.0 / rate;
                let local = (t + phase * period).rem_euclid(period);
                if local < width {
                    amplitude * (PI * local / width).sin()
                } else {
                    0.0
                }
            }
            MotionComponent::Step {
                channel,
                start,
                duration,
                displacement,
            } => {
                let u = (t - start) / duration;
                if !(0.0..=1.0).contains(&u) {
                    return 0.0;
                }
                let w = PI / duration;
                if channel < 3 {
                    0.5 * displacement * w * w * (PI * u).cos()
                } else {
                    0.5 * displacement * w * (PI * u).sin()
                }
            }
        }
    }
}

/// Synthesise the 6-axis IMU trace for the wearer's trajectory in `scene`.
///
/// Accelerometer = second derivative of the position rotated into the body
/// frame, plus gravity on z, plus the motion overlay and noise. Gyroscope z =
/// heading rate plus overlay and noise.
pub fn synth_imu(scene: &Scene, duration: f64, seed: u64) -> Result<ImuSequence> {
    if !(duration > 0.0) {
        return Err(Error::invalid("imu duration must be positive"));
    }
    if scene.imu_rate == 0 {
        return Err(Error::invalid("imu rate must be positive"));
    }
    let traj = &scene.listener_trajectory;
    if !traj.covers(0.0, duration) {
        let (start, end) = traj.span();
        return Err(Error::invalid(format!(
            "trajectory [{start}, {end}] shorter than requested {duration}s"
        )));
    }
    if let Some(bad) = scene.motion.iter().find(|m| m.channel() >= ImuSequence::CHANNELS) {
        return Err(Error::invalid(format!("motion channel {} out of range", bad.channel())));
    }
    let fs = f64::from(scene.imu_rate);
    let frames = (duration * fs).round() as usize;
    let (span_start, span_end) = traj.span();
    let h = DERIVATIVE_STEP;
    let mut out = Array2::<f64>::zeros((ImuSequence::CHANNELS, frames));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let accel_noise = noise(scene.imu_noise.accel_std)?;
    let gyro_noise = noise(scene.imu_noise.gyro_std)?;

    for k in 0..frames {
        let t = k as f64 / fs;
        // Central differences, shifted inward at the span edges.
        let tc = t.clamp(span_start + h, (span_end - h).max(span_start + h));
        let p_minus = traj.pose_at_clamped(tc - h);
        let p_mid = traj.pose_at_clamped(tc);
        let p_plus = traj.pose_at_clamped(tc + h);
        let mut acc_world = [0.0; 2];
        for (axis, a) in acc_world.iter_mut().enumerate() {
            *a = (p_plus.position[axis] - 2.0 * p_mid.position[axis] + p_minus.position[axis]) / (h * h);
        }
        let heading_rate = (p_plus.heading - p_minus.heading) / (2.0 * h);
        let heading = traj.pose_at_clamped(t).heading;
        let (s, c) = heading.sin_cos();
        let mut sample = [
            c * acc_world[0] + s * acc_world[1],
            -s * acc_world[0] + c * acc_world[1],
            GRAVITY,
            0.0,
            0.0,
            heading_rate,
        ];
        for m in &scene.motion {
            sample[m.channel()] += m.value(t);
        }
        for (ch, v) in sample.iter().enumerate() {
            let n = if ch < 3 { &accel_noise } else { &gyro_noise };
            out[[ch, k]] = v + n.as_ref().map_or(0.0, |d| d.sample(&mut rng));
        }
    }
    ImuSequence::new(out.mapv(|v| v as f32), scene.imu_rate)
}

fn noise(std: f64) -> Result<Option<Normal<f64>>> {
    if std <= 0.0 {
        return Ok(None);
    }
    Normal::new(0.0, std)
        .map(Some)
        .map_err(|e| Error::invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::scene::{ImuNoise, Pose, Trajectory};

    fn quiet(traj: Trajectory) -> Scene {
        let mut s = Scene::binaural(traj);
        s.imu_noise = ImuNoise {
            accel_std: 0.0,
            gyro_std: 0.0,
        };
        s
    }

    #[test]
    fn stationary_reads_gravity_only() {
        let scene = quiet(Trajectory::stationary([1.0, 2.0], 0.3, 2.0));
        let imu = synth_imu(&scene, 2.0, 0).unwrap();
        for k in 0..imu.frames() {
            let col = imu.samples().column(k);
            assert!(col[0].abs() < 1e-6 && col[1].abs() < 1e-6);
            assert!((col[2] - 9.81).abs() < 1e-6);
            assert!(col[3].abs() < 1e-6 && col[4].abs() < 1e-6 && col[5].abs() < 1e-6);
        }
    }

    #[test]
    fn constant_spin_shows_on_gyro_z() {
        let omega = 1.3;
        let scene = quiet(Trajectory::spinning([0.0, 0.0], 0.0, omega, 2.0));
        let imu = synth_imu(&scene, 2.0, 0).unwrap();
        // Finite-difference oracle over the trajectory itself.
        let traj = &scene.listener_trajectory;
        let fd = (traj.pose_at(1.5).unwrap().heading - traj.pose_at(0.5).unwrap().heading) / 1.0;
        let gz = imu.samples().row(5);
        let mean = gz.iter().map(|v| f64::from(*v)).sum::<f64>() / gz.len() as f64;
        assert!((mean - fd).abs() < 1e-5 && (mean - omega).abs() < 1e-5, "{mean}");
    }

    #[test]
    fn same_seed_bit_identical() {
        let mut scene = Scene::binaural(Trajectory::spinning([0.0, 0.0], 0.0, 0.5, 1.0));
        scene.motion.push(MotionComponent::Sinusoid { channel: 2, freq: 1.8, amplitude: 1.0, phase: 0.0 });
        let a = synth_imu(&scene, 1.0, 77).unwrap();
        let b = synth_imu(&scene, 1.0, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_acceleration_in_body_frame() {
        // Accelerating along world +y while facing +y: forward (x) accel.
        let poses = (0..=20)
            .map(|i| {
                let t = i as f64 * 0.1;
                Pose { time: t, position: [0.0, 0.5 * t * t], heading: std::f64::consts::FRAC_PI_2 }
            })
            .collect();
        let scene = quiet(Trajectory::new(poses).unwrap());
        let imu = synth_imu(&scene, 2.0, 0).unwrap();
        let k = 200;
        assert!((imu.samples()[[0, k]] - 1.0).abs() < 1e-2, "{}", imu.samples()[[0, k]]);
        assert!(imu.samples()[[1, k]].abs() < 1e-2);
    }

    #[test]
    fn short_trajectory_errors() {
        let scene = quiet(Trajectory::stationary([0.0, 0.0], 0.0, 1.0));
        assert!(synth_imu(&scene, 2.0, 0).is_err());
    }

    #[test]
    fn step_integrates_to_displacement() {
        let step = MotionComponent::Step { channel: 5, start: 0.0, duration: 1.0, displacement: 0.8 };
        let n = 10_000;
        let total: f64 = (0..n).map(|i| step.value((i as f64 + 0.5) / n as f64) / n as f64).sum();
        assert!((total - 0.8).abs() < 1e-6);
    }
}
