use std::path::Path;

use candle_core::{DType, Device, Tensor};
use ndarray::{Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HeadMode, SpatialPrediction};
use crate::error::{Error, Result};
use crate::nn::{
    batches, bce_with_logits, soft_cross_entropy, Adam, Checkpoint, Conv1d, Gru, Linear, ParamStore,
    TransformerLayer,
};
use crate::signals::{FeatureConfig, ImuSequence, SpatialFeatures, DEFAULT_NEAR_THRESHOLD, NUM_SPATIAL_CLASSES};
use crate::temporal::resample_imu;

/// Temporal downsampling between feature frames and output frames.
pub const POOL: usize = 5;
/// Width of the motion-branch representation.
pub const MOTION_FEATURES: usize = 384;

// Fixed input scaling. Not data dependent, so absolute level (the near/far
// cue) survives. GCC-PHAT values are an order of magnitude smaller than the
// log-Mel spread and are boosted to match.
const MEL_SCALE: f32 = 0.5;
const GCC_GAIN: f32 = 10.0;

const CHECKPOINT_KIND: &str = "spatial";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpatialConfig {
    /// Adds the IMU motion branch fused after the recurrent layer.
    pub compensated: bool,
    pub head_mode: HeadMode,
    pub width: usize,
    pub motion_width: usize,
    pub heads: usize,
    pub near_threshold: f64,
    /// Weight of the auxiliary loss on the motion-branch frame scores.
    pub motion_score_weight: f64,
    pub features: FeatureConfig,
}

impl Default for SpatialConfig {
    fn default() -> Self {
        Self {
            compensated: false,
            head_mode: HeadMode::Softmax,
            width: 64,
            motion_width: 64,
            heads: 4,
            near_threshold: DEFAULT_NEAR_THRESHOLD,
            motion_score_weight: 0.1,
            features: FeatureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpatialTrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for SpatialTrainOptions {
    fn default() -> Self {
        Self {
            epochs: 8,
            batch_size: 32,
            lr: 2e-3,
            seed: 0,
        }
    }
}

/// One training/evaluation window.
#[derive(Debug, Clone)]
pub struct SpatialSample {
    /// `[3 × T × 64]`, T divisible by 5.
    pub features: Array3<f32>,
    /// `[T × 6]` scaled IMU at the feature frame rate.
    pub imu: Array2<f32>,
    /// Active classes per output frame (T/5 entries).
    pub labels: Vec<Vec<usize>>,
    /// 1 for frames with source energy, 0 for silence.
    pub mask: Vec<f32>,
}

/// `[384 × T]` motion representation.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionFeatures {
    pub hidden: Array2<f32>,
}

/// IMU resampled to `frames` steps and scaled, as `[T × 6]`.
pub fn imu_frames(imu: &ImuSequence, frames: usize) -> Result<Array2<f32>> {
    Ok(resample_imu(imu, frames)?.reversed_axes().as_standard_layout().to_owned())
}

/// Pads the time axis to a multiple of 5 by repeating the last frame.
pub fn pad_frames(features: &Array3<f32>) -> Array3<f32> {
    let t = features.len_of(Axis(1));
    let target = t.div_ceil(POOL) * POOL;
    if t == target || t == 0 {
        return features.clone();
    }
    let (c, _, m) = features.dim();
    Array3::from_shape_fn((c, target, m), |(ci, ti, mi)| features[[ci, ti.min(t - 1), mi]])
}

struct MotionBranch {
    input: Linear,
    layers: Vec<TransformerLayer>,
    proj: Linear,
    score: Linear,
}

impl MotionBranch {
    fn new(ps: &mut ParamStore, width: usize, heads: usize) -> Result<Self> {
        Ok(Self {
            input: Linear::new(ps, "motion.input", 6, width)?,
            layers: vec![
                TransformerLayer::new(ps, "motion.layer0", width, heads, 2 * width)?,
                TransformerLayer::new(ps, "motion.layer1", width, heads, 2 * width)?,
            ],
            proj: Linear::new(ps, "motion.proj", width, MOTION_FEATURES)?,
            score: Linear::new(ps, "motion.score", MOTION_FEATURES, NUM_SPATIAL_CLASSES)?,
        })
    }

    /// `[B, T, 6]` → (`[B, T, 384]`, pooled scores `[B, T/5, 8]`).
    fn forward(&self, imu: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut h = self.input.forward(imu)?;
        for layer in &self.layers {
            h = layer.forward(&h, None)?;
        }
        let feat = self.proj.forward(&h)?.relu()?;
        let scores = pool_time(&self.score.forward(&feat)?)?;
        Ok((feat, scores))
    }
}

/// Joins the recurrent audio state with pooled motion features. The
/// front/back cue is the product of the interaural-delay trend and the turn
/// direction, so besides the concatenation the audio state is also gated
/// multiplicatively by a projection of the motion features. Residual on the
/// audio state.
struct Fusion {
    gate: Linear,
    out: Linear,
}

impl Fusion {
    fn new(ps: &mut ParamStore, width: usize) -> Result<Self> {
        Ok(Self {
            gate: Linear::new(ps, "fuse.gate", MOTION_FEATURES, width)?,
            out: Linear::new(ps, "fuse.out", 2 * width + MOTION_FEATURES, width)?,
        })
    }

    fn forward(&self, audio: &Tensor, motion: &Tensor) -> Result<Tensor> {
        let gated = (audio * self.gate.forward(motion)?)?;
        let z = self.out.forward(&Tensor::cat(&[audio, motion, &gated], 2)?)?.relu()?;
        Ok((audio + z)?)
    }
}

/// Average-pool `[B, T, F]` by 5 along time.
fn pool_time(x: &Tensor) -> Result<Tensor> {
    let (b, t, f) = x.dims3()?;
    Ok(x.reshape((b, t / POOL, POOL, f))?.mean(2)?)
}

/// Conv → GRU → attention → linear localizer, optionally motion-compensated.
pub struct SpatialModel {
    config: SpatialConfig,
    ps: ParamStore,
    c1: Conv1d,
    c2: Conv1d,
    c3: Conv1d,
    gru: Gru,
    motion: Option<MotionBranch>,
    fuse: Option<Fusion>,
    attn: TransformerLayer,
    head: Linear,
    in_scale: Tensor,
}

impl SpatialModel {
    pub fn new(config: SpatialConfig, seed: u64) -> Result<Self> {
        let n_bins = config.features.n_mels;
        if config.features.n_lags != n_bins {
            return Err(Error::invalid("spatial model needs n_mels == n_lags"));
        }
        let mut ps = ParamStore::new(DType::F32, seed);
        let w = config.width;
        let channels = 3 * n_bins;
        let c1 = Conv1d::new(&mut ps, "audio.c1", channels, w, 3, 1, 1)?;
        let c2 = Conv1d::new(&mut ps, "audio.c2", w, w, 3, 1, 1)?;
        let c3 = Conv1d::new(&mut ps, "audio.c3", w, w, POOL, POOL, 0)?;
        let gru = Gru::new(&mut ps, "audio.gru", w, w)?;
        let (motion, fuse) = if config.compensated {
            (
                Some(MotionBranch::new(&mut ps, config.motion_width, config.heads)?),
                Some(Fusion::new(&mut ps, w)?),
            )
        } else {
            (None, None)
        };
        let attn = TransformerLayer::new(&mut ps, "attn", w, config.heads, 2 * w)?;
        let head = Linear::new(&mut ps, "head", w, NUM_SPATIAL_CLASSES)?;
        let mut scale = vec![GCC_GAIN; channels];
        scale[..2 * n_bins].fill(MEL_SCALE);
        Ok(Self {
            config,
            ps,
            c1,
            c2,
            c3,
            gru,
            motion,
            fuse,
            attn,
            head,
            in_scale: Tensor::from_vec(scale, (1, channels, 1), &Device::Cpu)?,
        })
    }

    pub fn config(&self) -> &SpatialConfig {
        &self.config
    }

    pub fn is_compensated(&self) -> bool {
        self.config.compensated
    }

    pub fn num_params(&self) -> usize {
        self.ps.num_params()
    }

    /// `[B, 3, T, M]` features and optional `[B, T, 6]` IMU → logits
    /// `[B, T/5, 8]` and motion scores.
    fn forward(&self, x: &Tensor, imu: Option<&Tensor>) -> Result<(Tensor, Option<Tensor>)> {
        let (b, c, t, m) = x.dims4()?;
        if t % POOL != 0 {
            return Err(Error::Shape(format!("frame count {t} is not a multiple of {POOL}")));
        }
        // [B, 3, T, M] → [B, 3·M, T]
        let x = x.permute((0, 1, 3, 2))?.reshape((b, c * m, t))?;
        let x = x.broadcast_mul(&self.in_scale)?;
        let h = self.c1.forward(&x)?.relu()?;
        let h = self.c2.forward(&h)?.relu()?;
        let h = self.c3.forward(&h)?.relu()?.transpose(1, 2)?.contiguous()?;
        let g = self.gru.forward(&h, None)?;
        let (z, scores) = match (&self.motion, &self.fuse) {
            (Some(branch), Some(fuse)) => {
                let imu = imu.ok_or_else(|| Error::invalid("compensated model needs IMU input"))?;
                let (feat, scores) = branch.forward(imu)?;
                let z = fuse.forward(&g, &pool_time(&feat)?)?;
                (z, Some(scores))
            }
            _ => (g, None),
        };
        let z = self.attn.forward(&z, None)?;
        Ok((self.head.forward(&z)?, scores))
    }

    fn probabilities(&self, logits: &Tensor) -> Result<Tensor> {
        Ok(match self.config.head_mode {
            HeadMode::Softmax => candle_nn::ops::softmax(logits, 2)?,
            HeadMode::Sigmoid => candle_nn::ops::sigmoid(logits)?,
        })
    }

    fn features_tensor(items: &[&Array3<f32>]) -> Result<Tensor> {
        let dim = items.first().map(|a| a.dim()).ok_or(Error::Empty("batch"))?;
        let mut flat = Vec::with_capacity(items.len() * dim.0 * dim.1 * dim.2);
        for a in items {
            if a.dim() != dim {
                return Err(Error::Shape("feature shapes differ within a batch".into()));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("spatial features"));
            }
            flat.extend(a.iter().copied());
        }
        Ok(Tensor::from_vec(flat, (items.len(), dim.0, dim.1, dim.2), &Device::Cpu)?)
    }

    fn imu_tensor(items: &[&Array2<f32>]) -> Result<Tensor> {
        let dim = items.first().map(|a| a.dim()).ok_or(Error::Empty("batch"))?;
        let mut flat = Vec::with_capacity(items.len() * dim.0 * dim.1);
        for a in items {
            if a.dim() != dim {
                return Err(Error::Shape("imu shapes differ within a batch".into()));
            }
            flat.extend(a.iter().copied());
        }
        Ok(Tensor::from_vec(flat, (items.len(), dim.0, dim.1), &Device::Cpu)?)
    }

    fn to_predictions(&self, probs: &Tensor) -> Result<Vec<SpatialPrediction>> {
        let (b, f, c) = probs.dims3()?;
        let flat = probs.flatten_all()?.to_vec1::<f32>()?;
        (0..b)
            .map(|i| {
                let rows = Array2::from_shape_vec((f, c), flat[i * f * c..(i + 1) * f * c].to_vec())
                    .expect("shape")
                    .mapv(|v| v.clamp(0.0, 1.0));
                SpatialPrediction::new(rows, self.config.head_mode)
            })
            .collect()
    }

    fn check_features(&self, features: &SpatialFeatures) -> Result<Array3<f32>> {
        let (c, _, m) = features.tensor.dim();
        if c != 3 || m != self.config.features.n_mels {
            return Err(Error::Shape(format!("expected [3 × T × {}], got {:?}", self.config.features.n_mels, features.tensor.dim())));
        }
        if features.tensor.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spatial features"));
        }
        Ok(pad_frames(&features.tensor))
    }

    /// Audio-only localization; the model must have been built without the
    /// motion branch.
    pub fn localize_audio_only(&self, features: &SpatialFeatures) -> Result<SpatialPrediction> {
        if self.config.compensated {
            return Err(Error::invalid("motion-compensated model needs IMU; use localize_compensated"));
        }
        let x = self.check_features(features)?;
        let (logits, _) = self.forward(&Self::features_tensor(&[&x])?, None)?;
        Ok(self.to_predictions(&self.probabilities(&logits)?)?.remove(0))
    }

    pub fn localize_compensated(&self, features: &SpatialFeatures, imu: &ImuSequence) -> Result<SpatialPrediction> {
        if !self.config.compensated {
            return Err(Error::invalid("model has no motion branch; use localize_audio_only"));
        }
        let x = self.check_features(features)?;
        let t_feat = features.frames() as f64 * features.frame_hop;
        if (imu.duration() - t_feat).abs() > features.frame_hop + 1e-9 {
            return Err(Error::invalid(format!(
                "imu ({:.3} s) and audio features ({t_feat:.3} s) are misaligned",
                imu.duration()
            )));
        }
        let imu_x = imu_frames(imu, x.len_of(Axis(1)))?;
        let (logits, _) = self.forward(&Self::features_tensor(&[&x])?, Some(&Self::imu_tensor(&[&imu_x])?))?;
        Ok(self.to_predictions(&self.probabilities(&logits)?)?.remove(0))
    }

    /// Motion representation `[384 × T]` and pooled frame scores `[T/5 × 8]`.
    pub fn motion_branch(&self, imu: &ImuSequence, frames: usize) -> Result<(MotionFeatures, Array2<f32>)> {
        let branch = self
            .motion
            .as_ref()
            .ok_or_else(|| Error::invalid("model has no motion branch"))?;
        if frames == 0 || frames % POOL != 0 {
            return Err(Error::Shape(format!("frame count {frames} is not a positive multiple of {POOL}")));
        }
        let x = imu_frames(imu, frames)?;
        let (feat, scores) = branch.forward(&Self::imu_tensor(&[&x])?)?;
        let feat = feat.squeeze(0)?.t()?.contiguous()?;
        let hidden = Array2::from_shape_vec((MOTION_FEATURES, frames), feat.flatten_all()?.to_vec1::<f32>()?)
            .expect("shape");
        let scores = scores.squeeze(0)?;
        let scores = Array2::from_shape_vec((frames / POOL, NUM_SPATIAL_CLASSES), scores.flatten_all()?.to_vec1::<f32>()?)
            .expect("shape");
        Ok((MotionFeatures { hidden }, scores))
    }

    /// Batched prediction over prepared samples.
    pub fn predict(&self, samples: &[SpatialSample]) -> Result<Vec<SpatialPrediction>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(32) {
            let (logits, _) = self.forward_samples(chunk)?;
            out.extend(self.to_predictions(&self.probabilities(&logits)?)?);
        }
        Ok(out)
    }

    fn forward_samples(&self, chunk: &[SpatialSample]) -> Result<(Tensor, Option<Tensor>)> {
        let x = Self::features_tensor(&chunk.iter().map(|s| &s.features).collect::<Vec<_>>())?;
        let imu = if self.config.compensated {
            Some(Self::imu_tensor(&chunk.iter().map(|s| &s.imu).collect::<Vec<_>>())?)
        } else {
            None
        };
        self.forward(&x, imu.as_ref())
    }

    /// Masked per-frame loss on a batch of samples.
    pub fn loss(&self, chunk: &[SpatialSample]) -> Result<Tensor> {
        let (logits, scores) = self.forward_samples(chunk)?;
        let (b, f, c) = logits.dims3()?;
        let mut targets = vec![0f32; b * f * c];
        let mut weights = vec![0f32; b * f];
        for (i, s) in chunk.iter().enumerate() {
            if s.labels.len() != f || s.mask.len() != f {
                return Err(Error::Shape(format!("sample has {} labels for {f} frames", s.labels.len())));
            }
            for k in 0..f {
                weights[i * f + k] = s.mask[k];
                let active = &s.labels[k];
                for &cls in active {
                    if cls >= c {
                        return Err(Error::IndexOutOfRange { index: cls, len: c });
                    }
                    let share = match self.config.head_mode {
                        HeadMode::Softmax => 1.0 / active.len() as f32,
                        HeadMode::Sigmoid => 1.0,
                    };
                    targets[(i * f + k) * c + cls] = share;
                }
            }
        }
        let y = Tensor::from_vec(targets, (b * f, c), &Device::Cpu)?;
        let w = Tensor::from_vec(weights, b * f, &Device::Cpu)?;
        let flat = logits.reshape((b * f, c))?;
        let mut loss = match self.config.head_mode {
            HeadMode::Softmax => soft_cross_entropy(&flat, &y, Some(&w))?,
            HeadMode::Sigmoid => bce_with_logits(&flat, &y)?,
        };
        if let Some(scores) = scores {
            if self.config.motion_score_weight > 0.0 {
                let aux = soft_cross_entropy(&scores.reshape((b * f, c))?, &y, Some(&w))?;
                loss = (loss + (aux * self.config.motion_score_weight)?)?;
            }
        }
        Ok(loss)
    }

    pub fn train(&mut self, samples: &[SpatialSample], opts: &SpatialTrainOptions) -> Result<Vec<f64>> {
        if samples.is_empty() {
            return Err(Error::Empty("training samples"));
        }
        let mut opt = Adam::new(self.ps.all_vars(), opts.lr)?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut history = Vec::with_capacity(opts.epochs);
        for epoch in 0..opts.epochs {
            // Cosine decay to 10 % of the base rate.
            let progress = epoch as f64 / opts.epochs.max(1) as f64;
            opt.set_lr(opts.lr * (0.1 + 0.9 * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())));
            let mut total = 0.0;
            let mut count = 0;
            for idx in batches(samples.len(), opts.batch_size, &mut rng) {
                let chunk: Vec<SpatialSample> = idx.iter().map(|&i| samples[i].clone()).collect();
                let loss = self.loss(&chunk)?;
                opt.step(&loss, Some(5.0))?;
                total += f64::from(loss.to_scalar::<f32>()?);
                count += 1;
            }
            history.push(total / count.max(1) as f64);
            log::debug!("spatial epoch {epoch} loss {:.4}", history[epoch]);
        }
        Ok(history)
    }

    /// Parameters in deterministic name order, flattened (for gradient checks).
    pub fn parameter_names(&self) -> Vec<String> {
        self.ps.names().map(str::to_string).collect()
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let vocab = crate::signals::SpatialLabel::all().map(|l| l.to_string()).collect();
        Checkpoint::new(CHECKPOINT_KIND, &self.config, vocab, self.ps.tensors())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let expected: Vec<String> = crate::signals::SpatialLabel::all().map(|l| l.to_string()).collect();
        if ck.vocab != expected {
            return Err(Error::Checkpoint("spatial class vocabulary differs from this build".into()));
        }
        let model = Self::new(ck.config()?, 0)?;
        model.ps.load_tensors(&ck.tensors)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
