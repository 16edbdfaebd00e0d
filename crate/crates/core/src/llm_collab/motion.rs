//! Four-way motion description (walking, moving, standing up, sitting down)
//! from IMU traces.

use std::path::Path;

use candle_core::{DType, Device, Tensor};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::world::{synth_motion, MotionPattern, MOTION_CLASSES};
use crate::nn::{batches, soft_cross_entropy, Adam, Checkpoint, Conv1d, Linear, ParamStore};
use crate::signals::ImuSequence;
use crate::temporal::resample_imu;

/// Steps per second after resampling.
const RATE: f64 = 100.0;
const MIN_SECONDS: f64 = 2.0;
/// Residual energy (g and rad/s / π units) below which a trace is sensor
/// noise only.
const NOISE_FLOOR: f64 = 0.01;
/// Class reported for noise-floor traces.
const FALLBACK: &str = "moving";
const CHECKPOINT_KIND: &str = "motion_classifier";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionPrediction {
    pub class: String,
    pub confidence: f64,
    /// Set when the trace is at the noise floor and `class` is the fallback.
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionTrainOptions {
    pub traces_per_pattern: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for MotionTrainOptions {
    fn default() -> Self {
        Self {
            traces_per_pattern: 40,
            epochs: 25,
            lr: 2e-3,
            seed: 0,
        }
    }
}

/// Labelled synthetic traces, half 2 s and half 5 s long.
pub fn motion_training_set(per_pattern: usize, seed: u64) -> Result<Vec<(ImuSequence, usize)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plans = Vec::new();
    for p in MotionPattern::ALL {
        let class = MOTION_CLASSES
            .iter()
            .position(|c| *c == p.motion_class())
            .expect("motion class in vocabulary");
        for i in 0..per_pattern {
            let d = if i % 2 == 0 { 2.0 } else { 5.0 };
            plans.push((p, d, class, rng.random::<u64>()));
        }
    }
    plans
        .par_iter()
        .map(|&(p, d, c, s)| Ok((synth_motion(p, d, 200, s)?, c)))
        .collect()
}

pub struct MotionClassifier {
    ps: ParamStore,
    c1: Conv1d,
    c2: Conv1d,
    head: Linear,
}

impl MotionClassifier {
    pub fn new(seed: u64) -> Result<Self> {
        let mut ps = ParamStore::new(DType::F32, seed);
        let c1 = Conv1d::new(&mut ps, "c1", 6, 32, 9, 2, 4)?;
        let c2 = Conv1d::new(&mut ps, "c2", 32, 64, 5, 2, 2)?;
        let head = Linear::new(&mut ps, "head", 128, MOTION_CLASSES.len())?;
        Ok(Self { ps, c1, c2, head })
    }

    pub fn classes(&self) -> Vec<String> {
        MOTION_CLASSES.iter().map(|s| s.to_string()).collect()
    }

    fn input(imu: &ImuSequence) -> Result<Array2<f32>> {
        if imu.duration() + 1e-9 < MIN_SECONDS {
            return Err(Error::invalid(format!(
                "motion classification needs at least {MIN_SECONDS} s of IMU, got {:.2} s",
                imu.duration()
            )));
        }
        let steps = (imu.duration() * RATE).round() as usize;
        let mut x = resample_imu(imu, steps)?;
        // Remove the static offset (gravity, sensor bias) per channel.
        for mut row in x.rows_mut() {
            let m = row.mean().unwrap_or(0.0);
            row.mapv_inplace(|v| v - m);
        }
        Ok(x)
    }

    fn energy(x: &Array2<f32>) -> f64 {
        let n = x.ncols().max(1) as f64;
        (x.iter().map(|v| f64::from(*v).powi(2)).sum::<f64>() / n).sqrt()
    }

    fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.c1.forward(x)?.relu()?;
        let h = self.c2.forward(&h)?.relu()?;
        let pooled = Tensor::cat(&[h.mean(2)?, h.max(2)?], 1)?;
        self.head.forward(&pooled)
    }

    pub fn classify(&self, imu: &ImuSequence) -> Result<MotionPrediction> {
        let x = Self::input(imu)?;
        if Self::energy(&x) < NOISE_FLOOR {
            return Ok(MotionPrediction {
                class: FALLBACK.to_string(),
                confidence: 1.0 / MOTION_CLASSES.len() as f64,
                low_confidence: true,
            });
        }
        let t = Tensor::from_vec(x.iter().copied().collect(), (1, 6, x.ncols()), &Device::Cpu)?;
        let p = candle_nn::ops::softmax(&self.logits(&t)?, 1)?.get(0)?.to_vec1::<f32>()?;
        let k = crate::temporal::argmax(&p);
        Ok(MotionPrediction {
            class: MOTION_CLASSES[k].to_string(),
            confidence: f64::from(p[k]),
            low_confidence: false,
        })
    }

    /// Batches are formed per trace length so no padding is needed.
    pub fn train(&mut self, data: &[(ImuSequence, usize)], opts: &MotionTrainOptions) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Err(Error::Empty("motion traces"));
        }
        let inputs: Vec<Array2<f32>> = data.iter().map(|(s, _)| Self::input(s)).collect::<Result<_>>()?;
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (i, x) in inputs.iter().enumerate() {
            groups.entry(x.ncols()).or_default().push(i);
        }
        let k = MOTION_CLASSES.len();
        let mut opt = Adam::new(self.ps.all_vars(), opts.lr)?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut history = Vec::with_capacity(opts.epochs);
        for _ in 0..opts.epochs {
            let mut total = 0.0;
            let mut count = 0;
            for (&steps, members) in &groups {
                for idx in batches(members.len(), 32, &mut rng) {
                    let ids: Vec<usize> = idx.iter().map(|&i| members[i]).collect();
                    let flat: Vec<f32> = ids.iter().flat_map(|&i| inputs[i].iter().copied()).collect();
                    let x = Tensor::from_vec(flat, (ids.len(), 6, steps), &Device::Cpu)?;
                    let mut y = vec![0f32; ids.len() * k];
                    for (b, &i) in ids.iter().enumerate() {
                        y[b * k + data[i].1] = 1.0;
                    }
                    let y = Tensor::from_vec(y, (ids.len(), k), &Device::Cpu)?;
                    let loss = soft_cross_entropy(&self.logits(&x)?, &y, None)?;
                    opt.step(&loss, Some(5.0))?;
                    total += f64::from(loss.to_scalar::<f32>()?);
                    count += 1;
                }
            }
            history.push(total / count.max(1) as f64);
        }
        Ok(history)
    }

    pub fn trained_default(opts: &MotionTrainOptions) -> Result<Self> {
        let data = motion_training_set(opts.traces_per_pattern, opts.seed)?;
        let mut m = Self::new(opts.seed)?;
        m.train(&data, opts)?;
        Ok(m)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::new(CHECKPOINT_KIND, &serde_json::json!({}), self.classes(), self.ps.tensors())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        if ck.vocab != MOTION_CLASSES {
            return Err(Error::Checkpoint("motion vocabulary differs".into()));
        }
        let m = Self::new(0)?;
        m.ps.load_tensors(&ck.tensors)?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{synth_imu, Scene, Trajectory};

    #[test]
    fn noise_floor_falls_back() {
        let m = MotionClassifier::new(0).unwrap();
        let scene = Scene::binaural(Trajectory::stationary([0.0, 0.0], 0.0, 3.0));
        let imu = synth_imu(&scene, 3.0, 1).unwrap();
        let p = m.classify(&imu).unwrap();
        assert_eq!(p.class, "moving");
        assert!(p.low_confidence);
    }

    #[test]
    fn short_input_is_rejected() {
        let m = MotionClassifier::new(0).unwrap();
        let imu = synth_motion(MotionPattern::GaitFast, 1.0, 200, 0).unwrap();
        assert!(m.classify(&imu).is_err());
    }
}
