//! Procedural sound-event generators used by the synthetic scenes.
//!
//! Every generator is a pure function of `(class, params, sample rate,
//! duration, seed)`. Signals are normalised to a fixed RMS so the source gain
//! alone controls loudness.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Event classes the generators and the event classifier share.
pub const EVENT_CLASSES: [&str; 16] = [
    "speech",
    "laughter",
    "music",
    "electric_guitar",
    "piano",
    "chopping",
    "sizzling",
    "water_running",
    "dishes_clinking",
    "vacuum",
    "keyboard_typing",
    "clapping",
    "footsteps",
    "traffic",
    "bicycle",
    "wiping",
];

/// Room tone; generated like an event but never reported as one.
pub const AMBIENT: &str = "ambient";

const TARGET_RMS: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SoundParams {
    /// Repetition rate for impulsive classes (claps, steps, chops).
    pub rate_hz: Option<f64>,
}

pub fn is_event_class(name: &str) -> bool {
    EVENT_CLASSES.contains(&name)
}

pub fn synthesize(class: &str, params: SoundParams, sample_rate: u32, duration: f64, seed: u64) -> Result<Vec<f32>> {
    if sample_rate == 0 || !(duration > 0.0) {
        return Err(Error::invalid("sound synthesis needs positive rate and duration"));
    }
    let n = (duration * f64::from(sample_rate)).round() as usize;
    let sr = f64::from(sample_rate);
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed ^ hash_name(class)),
        sr,
        n,
    };
    let nyq = 0.45 * sr;
    let signal = match class {
        AMBIENT => {
            let low = g.band_noise(20.0, 500.0);
            let white = g.white();
            low.iter().zip(&white).map(|(a, b)| a + 0.05 * b).collect::<Vec<_>>()
        }
        "speech" => {
            let f0 = 120.0 + 80.0 * g.unit();
            g.voice(f0, 4.0, &[500.0, 1500.0, 2500.0])
        }
        "laughter" => {
            let f0 = 240.0 + 60.0 * g.unit();
            g.voice(f0, 5.5, &[700.0, 1800.0])
        }
        "music" => g.chords(),
        "electric_guitar" => g.guitar(),
        "piano" => g.piano(),
        "chopping" => {
            let rate = params.rate_hz.unwrap_or(3.0);
            let clicks = g.bursts(rate, 0.025, 800.0, 3000.0, 0.15);
            let thud = g.tone_bursts(rate, 0.03, 150.0, 0.0);
            add(&clicks, &thud, 0.6)
        }
        "sizzling" => {
            let hiss = g.band_noise(3000.0, 7000f64.min(nyq));
            let crackle = g.sparse_clicks(40.0, 0.002, 2500.0, 7000f64.min(nyq));
            add(&hiss, &crackle, 1.5)
        }
        "water_running" => {
            let noise = g.band_noise(400.0, 2500.0);
            g.modulate(&noise, 0.5, 0.3)
        }
        "dishes_clinking" => g.pings(2.5, 2500.0, 3500.0, 0.08),
        "vacuum" => {
            let hum = g.harmonic(130.0, 12, |h| 1.0 / h as f64);
            let noise = g.band_noise(300.0, 3000.0);
            add(&hum, &noise, 1.2)
        }
        "keyboard_typing" => g.bursts(params.rate_hz.unwrap_or(7.0), 0.004, 2000.0, 6000f64.min(nyq), 0.35),
        "clapping" => g.bursts(params.rate_hz.unwrap_or(2.5), 0.012, 1000.0, 5000f64.min(nyq), 0.1),
        "footsteps" => g.bursts(params.rate_hz.unwrap_or(1.8), 0.04, 60.0, 400.0, 0.05),
        "traffic" => {
            let rumble = g.band_noise(40.0, 400.0);
            let f0 = 70.0 + 20.0 * g.unit();
            let engine = g.harmonic(f0, 6, |h| 0.5 / h as f64);
            add(&rumble, &engine, 0.8)
        }
        "bicycle" => {
            let ticks = g.bursts(params.rate_hz.unwrap_or(14.0), 0.002, 3000.0, 6000f64.min(nyq), 0.2);
            let wind = g.band_noise(100.0, 800.0);
            add(&ticks, &wind, 0.7)
        }
        "wiping" => {
            let noise = g.band_noise(300.0, 3000.0);
            g.modulate(&noise, 1.5, 0.9)
        }
        other => return Err(Error::invalid(format!("unknown sound class {other:?}"))),
    };
    Ok(normalise(signal))
}

fn hash_name(name: &str) -> u64 {
    // FNV-1a, stable across platforms and releases.
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn add(a: &[f64], b: &[f64], weight_b: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + weight_b * y).collect()
}

fn normalise(signal: Vec<f64>) -> Vec<f32> {
    let rms = (signal.iter().map(|v| v * v).sum::<f64>() / signal.len().max(1) as f64).sqrt();
    let mut scale = if rms > 0.0 { TARGET_RMS / rms } else { 0.0 };
    let peak = signal.iter().fold(0.0f64, |m, v| m.max(v.abs())) * scale;
    if peak > 0.9 {
        scale *= 0.9 / peak;
    }
    signal.into_iter().map(|v| (v * scale) as f32).collect()
}

struct Gen {
    rng: ChaCha8Rng,
    sr: f64,
    n: usize,
}

impl Gen {
    fn unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    fn white(&mut self) -> Vec<f64> {
        (0..self.n).map(|_| StandardNormal.sample(&mut self.rng)).collect()
    }

    fn band_noise(&mut self, lo: f64, hi: f64) -> Vec<f64> {
        let mut x = self.white();
        Biquad::highpass(lo, self.sr).run(&mut x);
        Biquad::lowpass(hi.min(0.45 * self.sr), self.sr).run(&mut x);
        x
    }

    fn modulate(&mut self, x: &[f64], rate: f64, depth: f64) -> Vec<f64> {
        let phase = 2.0 * PI * self.unit();
        x.iter()
            .enumerate()
            .map(|(i, v)| {
                let t = i as f64 / self.sr;
                v * (1.0 - depth * 0.5 * (1.0 + (2.0 * PI * rate * t + phase).sin()))
            })
            .collect()
    }

    fn harmonic(&mut self, f0: f64, count: usize, weight: impl Fn(usize) -> f64) -> Vec<f64> {
        let phases: Vec<f64> = (0..count).map(|_| 2.0 * PI * self.unit()).collect();
        (0..self.n)
            .map(|i| {
                let t = i as f64 / self.sr;
                (1..=count)
                    .filter(|&h| f0 * (h as f64) < 0.45 * self.sr)
                    .map(|h| weight(h) * (2.0 * PI * f0 * h as f64 * t + phases[h - 1]).sin())
                    .sum()
            })
            .collect()
    }

    /// Onset times of a jittered impulse train.
    fn onsets(&mut self, rate: f64) -> Vec<f64> {
        let period = 1.0 / rate;
        let duration = self.n as f64 / self.sr;
        let mut t = period * self.unit();
        let mut out = Vec::new();
        while t < duration {
            out.push(t);
            t += period * (0.85 + 0.3 * self.unit());
        }
        out
    }

    /// Exponentially decaying band-limited noise bursts.
    fn bursts(&mut self, rate: f64, decay: f64, lo: f64, hi: f64, floor: f64) -> Vec<f64> {
        let noise = self.band_noise(lo, hi);
        let onsets = self.onsets(rate);
        let mut env = vec![0.0; self.n];
        for t0 in onsets {
            let start = (t0 * self.sr) as usize;
            let len = ((6.0 * decay) * self.sr) as usize;
            let amp = 0.7 + 0.3 * self.unit();
            for k in 0..len.min(self.n.saturating_sub(start)) {
                env[start + k] += amp * (-(k as f64) / (decay * self.sr)).exp();
            }
        }
        noise.iter().zip(&env).map(|(x, e)| x * (e + floor * 0.1)).collect()
    }

    fn tone_bursts(&mut self, rate: f64, decay: f64, freq: f64, _floor: f64) -> Vec<f64> {
        let onsets = self.onsets(rate);
        let mut out = vec![0.0; self.n];
        for t0 in onsets {
            let start = (t0 * self.sr) as usize;
            let len = ((6.0 * decay) * self.sr) as usize;
            for k in 0..len.min(self.n.saturating_sub(start)) {
                let t = k as f64 / self.sr;
                out[start + k] += (-(t / decay)).exp() * (2.0 * PI * freq * t).sin();
            }
        }
        out
    }

    fn sparse_clicks(&mut self, rate: f64, decay: f64, lo: f64, hi: f64) -> Vec<f64> {
        let p = rate / self.sr;
        let mut impulses = vec![0.0; self.n];
        for v in impulses.iter_mut() {
            if self.unit() < p {
                *v = 1.0;
            }
        }
        let mut env = vec![0.0; self.n];
        let mut level: f64 = 0.0;
        let k = (-1.0 / (decay * self.sr)).exp();
        for (e, imp) in env.iter_mut().zip(&impulses) {
            level = level * k + imp;
            *e = level;
        }
        let noise = self.band_noise(lo, hi);
        noise.iter().zip(&env).map(|(x, e)| x * e).collect()
    }

    fn pings(&mut self, rate: f64, f_lo: f64, f_hi: f64, decay: f64) -> Vec<f64> {
        let onsets = self.onsets(rate);
        let mut out = vec![0.0; self.n];
        for t0 in onsets {
            let f = (f_lo + (f_hi - f_lo) * self.unit()).min(0.45 * self.sr);
            let start = (t0 * self.sr) as usize;
            let len = ((6.0 * decay) * self.sr) as usize;
            for k in 0..len.min(self.n.saturating_sub(start)) {
                let t = k as f64 / self.sr;
                out[start + k] += (-(t / decay)).exp() * ((2.0 * PI * f * t).sin() + 0.4 * (2.0 * PI * 2.7 * f.min(0.16 * self.sr) * t).sin());
            }
        }
        out
    }

    /// Harmonic voice with formant weighting and a syllabic envelope.
    fn voice(&mut self, f0: f64, syllable_rate: f64, formants: &[f64]) -> Vec<f64> {
        let phase = 2.0 * PI * self.unit();
        let vib = 2.0 * PI * self.unit();
        let onsets = self.onsets(syllable_rate);
        let syllable_len = 0.6 / syllable_rate;
        let mut env = vec![0.0; self.n];
        for (i, t0) in onsets.into_iter().enumerate() {
            if i > 0 && self.unit() < 0.2 {
                continue;
            }
            let start = (t0 * self.sr) as usize;
            let len = (syllable_len * self.sr) as usize;
            for k in 0..len.min(self.n.saturating_sub(start)) {
                env[start + k] += (PI * k as f64 / len as f64).sin().powi(2);
            }
        }
        let nyq = 0.45 * self.sr;
        let weights: Vec<f64> = (1..=40)
            .map(|h| {
                let f = f0 * h as f64;
                if f >= nyq.min(4000.0) {
                    return 0.0;
                }
                formants
                    .iter()
                    .map(|&fc| (-((f - fc) / 250.0).powi(2)).exp())
                    .sum::<f64>()
                    + 0.05 / h as f64
            })
            .collect();
        let mut acc = 0.0;
        (0..self.n)
            .map(|i| {
                let t = i as f64 / self.sr;
                let inst = f0 * (1.0 + 0.03 * (2.0 * PI * 5.0 * t + vib).sin());
                acc += 2.0 * PI * inst / self.sr;
                let s: f64 = weights
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| **w > 0.0)
                    .map(|(h, w)| w * ((h + 1) as f64 * acc + phase).sin())
                    .sum();
                s * env[i]
            })
            .collect()
    }

    fn note(&mut self, out: &mut [f64], start: usize, len: usize, f0: f64, decay: f64, shape: fn(f64) -> f64) {
        let phase = 2.0 * PI * self.unit();
        for k in 0..len.min(out.len().saturating_sub(start)) {
            let t = k as f64 / self.sr;
            let env = (-(t / decay)).exp() * (1.0 - (-(t / 0.005)).exp());
            let mut s = 0.0;
            for h in 1..=8 {
                let f = f0 * h as f64;
                if f < 0.45 * self.sr {
                    s += (2.0 * PI * f * t + phase * h as f64).sin() / h as f64;
                }
            }
            out[start + k] += env * shape(s);
        }
    }

    fn chords(&mut self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        let chord_len = (0.5 * self.sr) as usize;
        let roots = [220.0, 246.9, 261.6, 293.7, 329.6];
        let mut start = 0;
        while start < self.n {
            let root = roots[(self.unit() * roots.len() as f64) as usize % roots.len()];
            for ratio in [1.0, 1.26, 1.5] {
                self.note(&mut out, start, chord_len, root * ratio, 0.4, |s| s);
            }
            start += chord_len;
        }
        out
    }

    fn guitar(&mut self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        let len = (0.25 * self.sr) as usize;
        let notes = [110.0, 146.8, 196.0, 164.8];
        let mut start = 0;
        while start < self.n {
            let f = notes[(self.unit() * notes.len() as f64) as usize % notes.len()];
            self.note(&mut out, start, len, f, 0.5, |s| (3.0 * s).tanh());
            start += len;
        }
        out
    }

    fn piano(&mut self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        let len = (0.3 * self.sr) as usize;
        let mut start = 0;
        while start < self.n {
            let f = 261.6 * 2f64.powf(self.unit());
            self.note(&mut out, start, 2 * len, f, 0.15, |s| s);
            start += len;
        }
        out
    }
}

/// Second-order IIR section (RBJ cookbook).
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn lowpass(fc: f64, sr: f64) -> Self {
        let w = 2.0 * PI * fc / sr;
        let alpha = w.sin() / (2.0 * std::f64::consts::FRAC_1_SQRT_2);
        let cw = w.cos();
        let a0 = 1.0 + alpha;
        Self {
            b: [(1.0 - cw) / 2.0 / a0, (1.0 - cw) / a0, (1.0 - cw) / 2.0 / a0],
            a: [-2.0 * cw / a0, (1.0 - alpha) / a0],
        }
    }

    fn highpass(fc: f64, sr: f64) -> Self {
        let w = 2.0 * PI * fc / sr;
        let alpha = w.sin() / (2.0 * std::f64::consts::FRAC_1_SQRT_2);
        let cw = w.cos();
        let a0 = 1.0 + alpha;
        Self {
            b: [(1.0 + cw) / 2.0 / a0, -(1.0 + cw) / a0, (1.0 + cw) / 2.0 / a0],
            a: [-2.0 * cw / a0, (1.0 - alpha) / a0],
        }
    }

    fn run(&self, x: &mut [f64]) {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for v in x.iter_mut() {
            let y = self.b[0] * *v + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
            x2 = x1;
            x1 = *v;
            y2 = y1;
            y1 = y;
            *v = y;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_classes_synthesize_within_range() {
        for class in EVENT_CLASSES.iter().chain([&AMBIENT]) {
            let s = synthesize(class, SoundParams::default(), 16_000, 0.5, 3).unwrap();
            assert_eq!(s.len(), 8000);
            assert!(s.iter().all(|v| v.is_finite() && v.abs() <= 0.9 + 1e-6), "{class}");
            assert!(s.iter().any(|v| *v != 0.0), "{class}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synthesize("speech", SoundParams::default(), 16_000, 0.3, 9).unwrap();
        let b = synthesize("speech", SoundParams::default(), 16_000, 0.3, 9).unwrap();
        let c = synthesize("speech", SoundParams::default(), 16_000, 0.3, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn unknown_class_errors() {
        assert!(synthesize("kazoo", SoundParams::default(), 16_000, 0.3, 1).is_err());
    }
}
