//! Deterministic front-end features: log-Mel spectrograms and GCC-PHAT.

use std::cell::RefCell;
use std::sync::Arc;

use ndarray::{Array2, Array3};
use rustfft::num_complex::Complex32;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::types::AudioClip;
use crate::error::{Error, Result};

pub const N_MELS: usize = 64;
pub const N_LAGS: usize = 64;
pub const LOG_EPS: f32 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub frame_seconds: f64,
    pub hop_seconds: f64,
    pub n_mels: usize,
    pub n_lags: usize,
    /// Lag spacing of the GCC bins, seconds; one sample at 48 kHz.
    pub lag_step_seconds: f64,
    /// Channels used for binaural features on 4-channel devices.
    pub stereo_pair: (usize, usize),
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            frame_seconds: 0.025,
            hop_seconds: 0.010,
            n_mels: N_MELS,
            n_lags: N_LAGS,
            lag_step_seconds: 1.0 / 48_000.0,
            stereo_pair: (0, 1),
        }
    }
}

impl FeatureConfig {
    pub fn frame_len(&self, sample_rate: u32) -> usize {
        (self.frame_seconds * f64::from(sample_rate)).round() as usize
    }

    pub fn hop_len(&self, sample_rate: u32) -> usize {
        (self.hop_seconds * f64::from(sample_rate)).round().max(1.0) as usize
    }

    /// Frames produced for `n` samples: one per hop, zero-padded at the end.
    pub fn n_frames(&self, n: usize, sample_rate: u32) -> usize {
        n / self.hop_len(sample_rate)
    }
}

/// `[3 × T × 64]`: left log-Mel, right log-Mel, GCC-PHAT.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFeatures {
    pub tensor: Array3<f32>,
    pub frame_hop: f64,
}

impl SpatialFeatures {
    pub fn frames(&self) -> usize {
        self.tensor.shape()[1]
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f32>> = RefCell::new(FftPlanner::new());
}

fn forward_fft(n: usize) -> Arc<dyn Fft<f32>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

fn inverse_fft(n: usize) -> Arc<dyn Fft<f32>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular HTK filterbank from 0 Hz to Nyquist, peak weight 1. Each row
/// is `(first FFT bin, weights)`.
pub struct MelFilterbank {
    pub bands: Vec<(usize, Vec<f32>)>,
    pub centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: u32) -> Self {
        let nyquist = f64::from(sample_rate) / 2.0;
        let max_mel = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(max_mel * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = f64::from(sample_rate) / n_fft as f64;
        let n_bins = n_fft / 2 + 1;
        let mut bands = Vec::with_capacity(n_mels);
        for m in 0..n_mels {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let first = (lo / bin_hz).floor() as usize;
            let last = ((hi / bin_hz).ceil() as usize).min(n_bins - 1);
            let weights = (first..=last)
                .map(|b| {
                    let f = b as f64 * bin_hz;
                    let w = if f <= center {
                        (f - lo) / (center - lo)
                    } else {
                        (hi - f) / (hi - center)
                    };
                    w.max(0.0) as f32
                })
                .collect();
            bands.push((first, weights));
        }
        Self {
            bands,
            centers_hz: edges[1..=n_mels].to_vec(),
        }
    }

    pub fn apply(&self, magnitude: &[f32], out: &mut [f32]) {
        for (o, (first, weights)) in out.iter_mut().zip(&self.bands) {
            *o = weights
                .iter()
                .zip(&magnitude[*first..])
                .map(|(w, m)| w * m)
                .sum();
        }
    }
}

fn hann(len: usize) -> Vec<f32> {
    (0..len)
        .map(|n| (0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos()) as f32)
        .collect()
}

fn check_length(n: usize, cfg: &FeatureConfig, sample_rate: u32) -> Result<()> {
    if n == 0 {
        return Err(Error::Empty("audio"));
    }
    let frame = cfg.frame_len(sample_rate);
    if n < frame {
        return Err(Error::invalid(format!(
            "clip of {n} samples is shorter than one {frame}-sample frame"
        )));
    }
    Ok(())
}

/// Windowed, zero-padded spectra for one channel: `frames × (n_fft)`.
fn spectra(x: &[f32], cfg: &FeatureConfig, sample_rate: u32, n_fft: usize) -> Vec<Vec<Complex32>> {
    let frame = cfg.frame_len(sample_rate);
    let hop = cfg.hop_len(sample_rate);
    let n_frames = cfg.n_frames(x.len(), sample_rate);
    let window = hann(frame);
    let fft = forward_fft(n_fft);
    (0..n_frames)
        .map(|f| {
            let start = f * hop;
            let mut buf = vec![Complex32::new(0.0, 0.0); n_fft];
            for (k, w) in window.iter().enumerate() {
                if let Some(v) = x.get(start + k) {
                    buf[k].re = v * w;
                }
            }
            fft.process(&mut buf);
            buf
        })
        .collect()
}

/// Log-Mel spectrogram of every channel: `[channels × T × n_mels]`.
///
/// STFT magnitude → Mel filterbank → `ln(x + 1e-6)`.
pub fn log_mel(audio: &AudioClip, cfg: &FeatureConfig) -> Result<Array3<f32>> {
    let channels: Vec<Vec<f32>> = (0..audio.channels()).map(|c| audio.channel(c).to_vec()).collect();
    log_mel_channels(&channels, audio.sample_rate(), cfg)
}

/// Log-Mel spectrogram of a single raw channel: `[T × n_mels]`.
pub fn log_mel_mono(x: &[f32], sample_rate: u32, cfg: &FeatureConfig) -> Result<Array2<f32>> {
    let out = log_mel_channels(&[x.to_vec()], sample_rate, cfg)?;
    Ok(out.index_axis_move(ndarray::Axis(0), 0))
}

fn log_mel_channels(channels: &[Vec<f32>], sample_rate: u32, cfg: &FeatureConfig) -> Result<Array3<f32>> {
    if cfg.n_mels == 0 {
        return Err(Error::invalid("n_mels must be positive"));
    }
    let n = channels.first().map_or(0, Vec::len);
    check_length(n, cfg, sample_rate)?;
    let n_fft = cfg.frame_len(sample_rate).next_power_of_two();
    let bank = MelFilterbank::new(cfg.n_mels, n_fft, sample_rate);
    let n_frames = cfg.n_frames(n, sample_rate);
    let mut out = Array3::<f32>::zeros((channels.len(), n_frames, cfg.n_mels));
    let mut mag = vec![0f32; n_fft / 2 + 1];
    let mut mel = vec![0f32; cfg.n_mels];
    for (c, x) in channels.iter().enumerate() {
        for (f, spec) in spectra(x, cfg, sample_rate, n_fft).into_iter().enumerate() {
            for (m, s) in mag.iter_mut().zip(&spec) {
                *m = s.norm();
            }
            bank.apply(&mag, &mut mel);
            for (b, v) in mel.iter().enumerate() {
                out[[c, f, b]] = (v + LOG_EPS).ln();
            }
        }
    }
    Ok(out)
}

/// Per-frame GCC-PHAT between the configured channel pair: `[T × n_lags]`.
///
/// Bin `k` holds lag `(k - n_lags/2) · lag_step`; positive lags mean the
/// second channel lags the first (source on the first channel's side).
/// Values are the PHAT correlation scaled by the FFT length, so a perfectly
/// coherent pair peaks at 1 and every value lies in `[-1, 1]`.
pub fn gcc_features(audio: &AudioClip, cfg: &FeatureConfig) -> Result<Array2<f32>> {
    if audio.channels() < 2 {
        return Err(Error::Shape("GCC needs two channels".into()));
    }
    let (a, b) = audio.stereo_pair(cfg.stereo_pair)?;
    gcc_pair(&a, &b, audio.sample_rate(), cfg)
}

pub fn gcc_pair(a: &[f32], b: &[f32], sample_rate: u32, cfg: &FeatureConfig) -> Result<Array2<f32>> {
    if a.len() != b.len() {
        return Err(Error::Shape("GCC channels differ in length".into()));
    }
    if cfg.n_lags == 0 {
        return Err(Error::invalid("n_lags must be positive"));
    }
    check_length(a.len(), cfg, sample_rate)?;
    let half = cfg.n_lags as f64 / 2.0;
    let max_lag_samples = (half * cfg.lag_step_seconds * f64::from(sample_rate)).ceil() as usize + 1;
    let n_fft = (cfg.frame_len(sample_rate) + max_lag_samples).next_power_of_two();
    let sa = spectra(a, cfg, sample_rate, n_fft);
    let sb = spectra(b, cfg, sample_rate, n_fft);
    let ifft = inverse_fft(n_fft);
    let scale = 1.0 / n_fft as f32;
    let lag_positions: Vec<f64> = (0..cfg.n_lags)
        .map(|k| (k as f64 - half) * cfg.lag_step_seconds * f64::from(sample_rate))
        .collect();
    let mut out = Array2::<f32>::zeros((sa.len(), cfg.n_lags));
    let mut cross = vec![Complex32::new(0.0, 0.0); n_fft];
    for (f, (xa, xb)) in sa.iter().zip(&sb).enumerate() {
        let energy: f32 = xa.iter().chain(xb.iter()).map(|c| c.norm_sqr()).sum();
        let floor = 1e-12 * (energy / n_fft as f32).max(f32::MIN_POSITIVE);
        for ((c, pa), pb) in cross.iter_mut().zip(xa).zip(xb) {
            let prod = pa.conj() * pb;
            let norm = prod.norm();
            // Bins without energy carry no phase information; treat them as
            // coherent at zero lag.
            *c = if norm > floor { prod / norm } else { Complex32::new(1.0, 0.0) };
        }
        ifft.process(&mut cross);
        for (k, &pos) in lag_positions.iter().enumerate() {
            let lo = pos.floor();
            let frac = (pos - lo) as f32;
            let at = |lag: i64| -> f32 {
                let idx = lag.rem_euclid(n_fft as i64) as usize;
                cross[idx].re * scale
            };
            let v = at(lo as i64) * (1.0 - frac) + at(lo as i64 + 1) * frac;
            out[[f, k]] = v.clamp(-1.0, 1.0);
        }
    }
    Ok(out)
}

/// Stack left/right log-Mel and GCC into `[3 × T × 64]`.
pub fn stack_spatial_features(audio: &AudioClip, cfg: &FeatureConfig) -> Result<SpatialFeatures> {
    if cfg.n_mels != cfg.n_lags {
        return Err(Error::invalid("spatial features need n_mels == n_lags"));
    }
    let (left, right) = audio.stereo_pair(cfg.stereo_pair)?;
    let mel = log_mel_channels(&[left.clone(), right.clone()], audio.sample_rate(), cfg)?;
    let gcc = gcc_pair(&left, &right, audio.sample_rate(), cfg)?;
    let frames = gcc.nrows();
    let mut tensor = Array3::<f32>::zeros((3, frames, cfg.n_mels));
    tensor.slice_mut(ndarray::s![0..2, .., ..]).assign(&mel);
    tensor.slice_mut(ndarray::s![2, .., ..]).assign(&gcc);
    if tensor.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spatial features"));
    }
    Ok(SpatialFeatures {
        tensor,
        frame_hop: cfg.hop_seconds,
    })
}

/// Integer-lag TDoA estimate `t_first - t_second` (seconds) from the mean
/// GCC-PHAT over all frames, refined by parabolic interpolation.
pub fn estimate_tdoa(audio: &AudioClip, cfg: &FeatureConfig) -> Result<f64> {
    let gcc = gcc_features(audio, cfg)?;
    let mean = gcc
        .mean_axis(ndarray::Axis(0))
        .ok_or(Error::Empty("gcc frames"))?;
    let (best, _) = mean
        .iter()
        .enumerate()
        .fold((0usize, f32::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let mut offset = 0.0;
    if best > 0 && best + 1 < mean.len() {
        let (l, c, r) = (f64::from(mean[best - 1]), f64::from(mean[best]), f64::from(mean[best + 1]));
        let denom = l - 2.0 * c + r;
        if denom.abs() > 1e-12 {
            offset = (0.5 * (l - r) / denom).clamp(-0.5, 0.5);
        }
    }
    let lag_steps = best as f64 + offset - cfg.n_lags as f64 / 2.0;
    // Positive lag: second channel arrives later, so t_first - t_second < 0.
    Ok(-lag_steps * cfg.lag_step_seconds)
}
