//! On-disk formats: 16-bit PCM WAV audio, IMU CSV, and JSON scene files.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::motion::MotionComponent;
use super::scene::{ImuNoise, Point, Scene, SourceSpec, Trajectory, Waveform};
use super::sounds::{synthesize, SoundParams};
use super::types::{AudioClip, ImuSequence, DEFAULT_AUDIO_RATE, DEFAULT_IMU_RATE};
use crate::error::{Error, Result};

pub const IMU_CSV_HEADER: [&str; 7] = ["timestamp", "ax", "ay", "az", "gx", "gy", "gz"];

pub fn write_wav(path: &Path, audio: &AudioClip) -> Result<()> {
    let spec = hound::WavSpec {
        channels: audio.channels() as u16,
        sample_rate: audio.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    let samples = audio.samples();
    for k in 0..audio.frames() {
        for c in 0..audio.channels() {
            let v = (samples[[c, k]] * 32767.0).round().clamp(-32768.0, 32767.0) as i16;
            writer.write_sample(v)?;
        }
    }
    writer.finalize()?;
    Ok(())
}

pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::invalid(format!(
            "{}: expected 16-bit PCM",
            path.display()
        )));
    }
    let channels = usize::from(spec.channels);
    let interleaved: Vec<i16> = reader.samples::<i16>().collect::<std::result::Result<_, _>>()?;
    let frames = interleaved.len() / channels.max(1);
    let mut samples = Array2::<f32>::zeros((channels, frames));
    for (i, v) in interleaved.into_iter().enumerate() {
        samples[[i % channels, i / channels]] = (f32::from(v) / 32767.0).clamp(-1.0, 1.0);
    }
    AudioClip::new(samples, spec.sample_rate)
}

pub fn write_imu_csv(path: &Path, imu: &ImuSequence) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(IMU_CSV_HEADER)?;
    let fs = f64::from(imu.sample_rate());
    let s = imu.samples();
    for k in 0..imu.frames() {
        let mut row = vec![format!("{}", k as f64 / fs)];
        row.extend((0..6).map(|c| format!("{}", s[[c, k]])));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read an IMU CSV; the sample rate is recovered from the timestamps.
pub fn read_imu_csv(path: &Path) -> Result<ImuSequence> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != IMU_CSV_HEADER {
        return Err(Error::invalid(format!(
            "{}: expected header {}",
            path.display(),
            IMU_CSV_HEADER.join(",")
        )));
    }
    let mut times = Vec::new();
    let mut cols: Vec<Vec<f32>> = vec![Vec::new(); 6];
    for rec in r.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::invalid("short imu row"))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::invalid(format!("bad imu value: {e}")))
        };
        times.push(parse(0)?);
        for (c, col) in cols.iter_mut().enumerate() {
            col.push(parse(c + 1)? as f32);
        }
    }
    let rate = if times.len() >= 2 {
        let span = times[times.len() - 1] - times[0];
        ((times.len() - 1) as f64 / span).round() as u32
    } else {
        DEFAULT_IMU_RATE
    };
    let frames = times.len();
    let flat: Vec<f32> = cols.into_iter().flatten().collect();
    let samples = Array2::from_shape_vec((6, frames), flat).map_err(|e| Error::Shape(e.to_string()))?;
    ImuSequence::new(samples, rate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SignalRef {
    File { file: PathBuf },
    Generator {
        generator: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rate_hz: Option<f64>,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDescription {
    pub position: Point,
    pub class: String,
    pub gain: f64,
    pub signal: SignalRef,
}

fn default_speed() -> f64 {
    super::scene::DEFAULT_SPEED_OF_SOUND
}

fn default_audio_rate() -> u32 {
    DEFAULT_AUDIO_RATE
}

fn default_imu_rate() -> u32 {
    DEFAULT_IMU_RATE
}

fn default_noise_floor() -> f64 {
    1e-4
}

/// JSON scene file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDescription {
    pub mics: Vec<Point>,
    pub sources: Vec<SourceDescription>,
    pub trajectory: Trajectory,
    #[serde(default = "default_speed")]
    pub speed_of_sound: f64,
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_audio_rate")]
    pub sample_rate: u32,
    #[serde(default = "default_imu_rate")]
    pub imu_rate: u32,
    #[serde(default = "default_noise_floor")]
    pub noise_floor: f64,
    #[serde(default)]
    pub imu_noise: ImuNoise,
    #[serde(default)]
    pub motion: Vec<MotionComponent>,
}

/// Pre-roll given to generated source signals so propagation delay never
/// reaches before the start of the recording.
const PRE_ROLL: f64 = 0.05;

impl SceneDescription {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Materialise source signals; file paths resolve against `base_dir`.
    pub fn resolve(&self, base_dir: &Path, duration: f64) -> Result<Scene> {
        let mut scene = Scene::new(self.mics.clone(), self.trajectory.clone())?;
        scene.speed_of_sound = self.speed_of_sound;
        scene.snr_db = self.snr_db;
        scene.sample_rate = self.sample_rate;
        scene.imu_rate = self.imu_rate;
        scene.noise_floor = self.noise_floor;
        scene.imu_noise = self.imu_noise;
        scene.motion = self.motion.clone();
        for src in &self.sources {
            let signal = match &src.signal {
                SignalRef::File { file } => {
                    let clip = read_wav(&base_dir.join(file))?;
                    Waveform::new(clip.mono(), clip.sample_rate())
                }
                SignalRef::Generator {
                    generator,
                    rate_hz,
                    seed,
                } => {
                    let params = SoundParams { rate_hz: *rate_hz };
                    let samples = synthesize(generator, params, self.sample_rate, duration + 2.0 * PRE_ROLL, *seed)?;
                    Waveform {
                        samples: samples.into(),
                        sample_rate: self.sample_rate,
                        start_time: -PRE_ROLL,
                    }
                }
            };
            scene.sources.push(SourceSpec::new(src.position, signal, src.class.clone(), src.gain)?);
        }
        scene.validate()?;
        Ok(scene)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_roundtrip_within_quantisation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let clip = AudioClip::from_channels(&[vec![0.0, 0.5, -0.25, 0.999], vec![0.1, -0.1, 0.0, -1.0]], 48_000).unwrap();
        write_wav(&path, &clip).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.channels(), 2);
        assert_eq!(back.sample_rate(), 48_000);
        for (a, b) in clip.samples().iter().zip(back.samples().iter()) {
            assert!((a - b).abs() < 1.0 / 32767.0);
        }
    }

    #[test]
    fn imu_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imu.csv");
        let mut s = Array2::<f32>::zeros((6, 400));
        s.row_mut(2).fill(9.81);
        s[[5, 7]] = 0.25;
        let imu = ImuSequence::new(s, 200).unwrap();
        write_imu_csv(&path, &imu).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("timestamp,ax,ay,az,gx,gy,gz\n"));
        let back = read_imu_csv(&path).unwrap();
        assert_eq!(back, imu);
    }

    #[test]
    fn imu_csv_rejects_bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imu.csv");
        std::fs::write(&path, "t,a,b,c,d,e,f\n0,0,0,0,0,0,0\n").unwrap();
        assert!(read_imu_csv(&path).is_err());
    }

    #[test]
    fn scene_json_parses_and_resolves() {
        let json = r#"{
            "mics": [[0.0, 0.09], [0.0, -0.09]],
            "sources": [{"position": [2.0, 1.0], "class": "speech", "gain": 1.0,
                         "signal": {"generator": "speech", "seed": 4}}],
            "trajectory": [{"time": 0.0, "position": [0.0, 0.0], "heading": 0.0},
                           {"time": 1.0, "position": [0.0, 0.0], "heading": 0.5}],
            "speed_of_sound": 343.0,
            "snr_db": 20.0,
            "seed": 9
        }"#;
        let desc: SceneDescription = serde_json::from_str(json).unwrap();
        assert_eq!(desc.seed, 9);
        let scene = desc.resolve(Path::new("."), 1.0).unwrap();
        assert_eq!(scene.sources.len(), 1);
        assert_eq!(scene.sources[0].event_class, "speech");
        let text = serde_json::to_string(&desc).unwrap();
        let back: SceneDescription = serde_json::from_str(&text).unwrap();
        assert_eq!(back, desc);
    }
}
