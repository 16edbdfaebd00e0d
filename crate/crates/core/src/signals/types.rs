use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

pub const DEFAULT_AUDIO_RATE: u32 = 48_000;
pub const DEFAULT_IMU_RATE: u32 = 200;
pub const GRAVITY: f64 = 9.81;

/// Multi-channel audio, `[channels × frames]`, samples in `[-1, 1]`.
///
/// Device recordings are stereo or 4-channel. Mono clips are accepted as
/// well because downmixes and single-microphone inputs flow through the same
/// feature code; feature extractors that need a channel pair reject them.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Array2<f32>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Array2<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("audio sample rate must be positive"));
        }
        let channels = samples.nrows();
        if !matches!(channels, 1 | 2 | 4) {
            return Err(Error::Shape(format!(
                "audio must have 1, 2 or 4 channels, got {channels}"
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("audio samples"));
        }
        if samples.iter().any(|v| v.abs() > 1.0) {
            return Err(Error::invalid("audio samples must lie in [-1, 1]"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn from_channels(channels: &[Vec<f32>], sample_rate: u32) -> Result<Self> {
        let frames = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != frames) {
            return Err(Error::Shape("channels differ in length".into()));
        }
        let flat: Vec<f32> = channels.iter().flatten().copied().collect();
        let samples = Array2::from_shape_vec((channels.len(), frames), flat)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(samples, sample_rate)
    }

    pub fn samples(&self) -> &Array2<f32> {
        &self.samples
    }

    pub fn channel(&self, index: usize) -> ArrayView1<'_, f32> {
        self.samples.row(index)
    }

    pub fn channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn frames(&self) -> usize {
        self.samples.ncols()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.frames() as f64 / f64::from(self.sample_rate)
    }

    /// Average of all channels.
    pub fn mono(&self) -> Vec<f32> {
        self.samples
            .mean_axis(Axis(0))
            .map(|a| a.to_vec())
            .unwrap_or_default()
    }

    /// Two-channel view used by the binaural feature path.
    pub fn stereo_pair(&self, pair: (usize, usize)) -> Result<(Vec<f32>, Vec<f32>)> {
        if self.channels() < 2 {
            return Err(Error::Shape(
                "a channel pair needs at least two channels".into(),
            ));
        }
        for idx in [pair.0, pair.1] {
            if idx >= self.channels() {
                return Err(Error::IndexOutOfRange {
                    index: idx,
                    len: self.channels(),
                });
            }
        }
        Ok((self.channel(pair.0).to_vec(), self.channel(pair.1).to_vec()))
    }

    pub fn scaled(&self, gain: f32) -> Result<Self> {
        Self::new(self.samples.mapv(|v| (v * gain).clamp(-1.0, 1.0)), self.sample_rate)
    }

    /// Sub-clip `[start, start + len)` in frames.
    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.frames() {
            return Err(Error::invalid("audio slice exceeds clip"));
        }
        let s = self
            .samples
            .slice(ndarray::s![.., start..start + len])
            .to_owned();
        Self::new(s, self.sample_rate)
    }
}

/// Six-axis IMU trace: rows are `ax, ay, az` (m/s²) and `gx, gy, gz` (rad/s).
#[derive(Debug, Clone, PartialEq)]
pub struct ImuSequence {
    samples: Array2<f32>,
    sample_rate: u32,
}

impl ImuSequence {
    pub const CHANNELS: usize = 6;

    pub fn new(samples: Array2<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("imu sample rate must be positive"));
        }
        if samples.nrows() != Self::CHANNELS {
            return Err(Error::Shape(format!(
                "imu must have 6 channels, got {}",
                samples.nrows()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("imu samples"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &Array2<f32> {
        &self.samples
    }

    pub fn frames(&self) -> usize {
        self.samples.ncols()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.frames() as f64 / f64::from(self.sample_rate)
    }

    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.frames() {
            return Err(Error::invalid("imu slice exceeds sequence"));
        }
        let s = self
            .samples
            .slice(ndarray::s![.., start..start + len])
            .to_owned();
        Self::new(s, self.sample_rate)
    }

    /// Concatenate sequences recorded at the same rate.
    pub fn concat(parts: &[ImuSequence]) -> Result<Self> {
        let first = parts.first().ok_or(Error::Empty("imu parts"))?;
        if parts.iter().any(|p| p.sample_rate != first.sample_rate) {
            return Err(Error::invalid("imu parts differ in sample rate"));
        }
        let views: Vec<_> = parts.iter().map(|p| p.samples.view()).collect();
        let joined = ndarray::concatenate(Axis(1), &views).map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(joined, first.sample_rate)
    }
}

/// Time-aligned audio and IMU slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorWindow {
    pub audio: AudioClip,
    pub imu: ImuSequence,
    pub start_time: f64,
    pub duration: f64,
}

impl SensorWindow {
    pub fn new(audio: AudioClip, imu: ImuSequence, start_time: f64) -> Result<Self> {
        let tolerance = 1.0 / f64::from(imu.sample_rate().min(audio.sample_rate()));
        if (audio.duration() - imu.duration()).abs() >= tolerance {
            return Err(Error::invalid(format!(
                "audio ({:.4}s) and imu ({:.4}s) durations disagree",
                audio.duration(),
                imu.duration()
            )));
        }
        let duration = audio.duration();
        Ok(Self {
            audio,
            imu,
            start_time,
            duration,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_three_channels() {
        let err = AudioClip::new(Array2::zeros((3, 10)), 48_000).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn rejects_out_of_range_samples() {
        let mut s = Array2::zeros((2, 4));
        s[[0, 1]] = 1.5;
        assert!(AudioClip::new(s, 48_000).is_err());
    }

    #[test]
    fn window_checks_alignment() {
        let audio = AudioClip::new(Array2::zeros((2, 48_000)), 48_000).unwrap();
        let imu = ImuSequence::new(Array2::zeros((6, 200)), 200).unwrap();
        assert!(SensorWindow::new(audio.clone(), imu, 0.0).is_ok());
        let short = ImuSequence::new(Array2::zeros((6, 190)), 200).unwrap();
        assert!(SensorWindow::new(audio, short, 0.0).is_err());
    }

    #[test]
    fn imu_requires_six_channels() {
        assert!(ImuSequence::new(Array2::zeros((5, 10)), 200).is_err());
    }
}
