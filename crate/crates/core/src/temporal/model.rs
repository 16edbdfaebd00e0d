use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{LossMode, PositiveMode, TemperatureParam, TAU_MAX, TAU_MIN};
use super::{keyframe_similarity, Embedding, Modality, ScenarioPrediction, EMBED_DIM, WINDOW_SECONDS};
use crate::error::{Error, Result};
use crate::nn::{
    batches, bce_with_logits, l2_normalize, masked_mean, soft_cross_entropy, Adam, Checkpoint, Conv1d, Gru, Init,
    Linear, ParamStore, TransformerLayer,
};
use crate::signals::types::GRAVITY;
use crate::signals::{log_mel_mono, AudioClip, FeatureConfig, ImuSequence, SensorWindow};

/// Log-Mel frames fed to the audio encoder (2 s at a 10 ms hop).
pub const AUDIO_INPUT_FRAMES: usize = 200;
/// IMU steps fed to the IMU encoder (2 s at 200 Hz).
pub const IMU_INPUT_FRAMES: usize = 400;

const CHECKPOINT_KIND: &str = "temporal";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    #[default]
    Recurrent,
    Attention,
    /// Per-window projection and a masked mean; ignores order.
    MeanPool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemporalConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub aggregator: Aggregator,
    pub loss_mode: LossMode,
    pub positive_mode: PositiveMode,
    pub features: FeatureConfig,
    pub scenarios: Vec<String>,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        Self {
            embed_dim: EMBED_DIM,
            hidden: 128,
            aggregator: Aggregator::Recurrent,
            loss_mode: LossMode::PaperAxis0,
            positive_mode: PositiveMode::SelfOnly,
            features: FeatureConfig::default(),
            scenarios: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Random global gain in `[1/4, 4]` applied to audio during contrastive training.
    pub gain_augment: bool,
    /// Fraction of aggregator batches trained on random sub-sequences.
    pub crop_fraction: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 64,
            lr: 1e-3,
            seed: 0,
            gain_augment: true,
            crop_fraction: 0.5,
        }
    }
}

/// Encoder inputs for one two-second window.
#[derive(Debug, Clone)]
pub struct ContrastiveSample {
    /// Raw log-Mel `[n_mels × 200]`.
    pub audio: Array2<f32>,
    /// Scaled IMU `[6 × 400]`.
    pub imu: Array2<f32>,
    pub scenario: Option<String>,
}

/// Per-window input to the sequence stage.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFeature {
    pub audio: Embedding,
    pub imu: Embedding,
    pub similarity: f32,
}

impl WindowFeature {
    pub fn new(audio: Embedding, imu: Embedding) -> Result<Self> {
        let similarity = keyframe_similarity(&audio, &imu)?.similarity as f32;
        Ok(Self { audio, imu, similarity })
    }

    fn flat(&self) -> impl Iterator<Item = f32> + '_ {
        self.audio
            .values()
            .iter()
            .chain(self.imu.values())
            .copied()
            .chain(std::iter::once(self.similarity))
    }
}

#[derive(Debug, Clone)]
pub struct SequenceSample {
    pub windows: Vec<WindowFeature>,
    /// Scenario ids active in each window.
    pub window_labels: Vec<Vec<usize>>,
}

impl SequenceSample {
    pub fn labels(&self) -> Vec<usize> {
        union(&self.window_labels)
    }
}

fn union(parts: &[Vec<usize>]) -> Vec<usize> {
    let mut out: Vec<usize> = parts.iter().flatten().copied().collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Raw log-Mel of the mono mix, `[n_mels × 200]`.
pub fn audio_input(clip: &AudioClip, cfg: &FeatureConfig) -> Result<Array2<f32>> {
    let mel = log_mel_mono(&clip.mono(), clip.sample_rate(), cfg)?;
    let (t, m) = mel.dim();
    Ok(Array2::from_shape_fn((m, AUDIO_INPUT_FRAMES), |(b, f)| mel[[f.min(t - 1), b]]))
}

/// IMU resampled to 400 steps; accelerometer in g, gyroscope in rad/s / π.
pub fn imu_input(imu: &ImuSequence) -> Result<Array2<f32>> {
    resample_imu(imu, IMU_INPUT_FRAMES)
}

pub fn resample_imu(imu: &ImuSequence, steps: usize) -> Result<Array2<f32>> {
    let n = imu.frames();
    if n == 0 {
        return Err(Error::Empty("imu sequence"));
    }
    let s = imu.samples();
    let mut out = Array2::zeros((6, steps));
    for k in 0..steps {
        let pos = (k as f64 + 0.5) * n as f64 / steps as f64 - 0.5;
        let pos = pos.clamp(0.0, (n - 1) as f64);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        let frac = (pos - i0 as f64) as f32;
        for c in 0..6 {
            let v = s[[c, i0]] * (1.0 - frac) + s[[c, i1]] * frac;
            out[[c, k]] = if c < 3 { v / GRAVITY as f32 } else { v / std::f32::consts::PI };
        }
    }
    Ok(out)
}

/// Log-Mel as if the waveform had been scaled by `gain`.
pub fn augment_gain(log_mel: &Array2<f32>, gain: f32) -> Array2<f32> {
    let eps = crate::signals::features::LOG_EPS;
    log_mel.mapv(|v| (gain * (v.exp() - eps).max(0.0) + eps).ln())
}

struct AudioEncoder {
    c1: Conv1d,
    c2: Conv1d,
    c3: Conv1d,
    proj: Linear,
}

impl AudioEncoder {
    fn new(ps: &mut ParamStore, n_mels: usize, dim: usize) -> Result<Self> {
        Ok(Self {
            c1: Conv1d::new(ps, "audio.c1", n_mels, 64, 5, 2, 2)?,
            c2: Conv1d::new(ps, "audio.c2", 64, 64, 5, 2, 2)?,
            c3: Conv1d::new(ps, "audio.c3", 64, 128, 3, 2, 1)?,
            proj: Linear::new(ps, "audio.proj", 256, dim)?,
        })
    }

    /// `[B, n_mels, T]` raw log-Mel → `[B, D]` unit rows. The per-clip mean
    /// is removed first, which cancels global gain.
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.flatten_from(1)?.mean_keepdim(1)?.unsqueeze(2)?;
        let x = x.broadcast_sub(&mean)?;
        let h = self.c1.forward(&x)?.relu()?;
        let h = self.c2.forward(&h)?.relu()?;
        let h = self.c3.forward(&h)?.relu()?;
        let pooled = Tensor::cat(&[h.mean(2)?, h.max(2)?], 1)?;
        l2_normalize(&self.proj.forward(&pooled)?)
    }
}

struct ImuEncoder {
    c1: Conv1d,
    c2: Conv1d,
    c3: Conv1d,
    proj: Linear,
}

impl ImuEncoder {
    fn new(ps: &mut ParamStore, dim: usize) -> Result<Self> {
        Ok(Self {
            c1: Conv1d::new(ps, "imu.c1", 6, 32, 9, 4, 4)?,
            c2: Conv1d::new(ps, "imu.c2", 32, 64, 5, 2, 2)?,
            c3: Conv1d::new(ps, "imu.c3", 64, 128, 3, 2, 1)?,
            proj: Linear::new(ps, "imu.proj", 256, dim)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.c1.forward(x)?.relu()?;
        let h = self.c2.forward(&h)?.relu()?;
        let h = self.c3.forward(&h)?.relu()?;
        let pooled = Tensor::cat(&[h.mean(2)?, h.max(2)?], 1)?;
        l2_normalize(&self.proj.forward(&pooled)?)
    }
}

enum SequenceNet {
    Recurrent(Gru),
    Attention { input: Linear, layer: TransformerLayer },
    MeanPool(Linear),
}

impl SequenceNet {
    /// `[B, S, F]` with `[B, S]` mask (valid steps first) → `[B, H]`.
    fn forward(&self, x: &Tensor, mask: &Tensor) -> Result<Tensor> {
        match self {
            // Padded steps carry the state through, so the last state is the
            // final valid one.
            SequenceNet::Recurrent(gru) => {
                let states = gru.forward(x, Some(mask))?;
                let s = states.dim(1)?;
                Ok(states.narrow(1, s - 1, 1)?.squeeze(1)?)
            }
            SequenceNet::Attention { input, layer } => {
                let h = input.forward(x)?.tanh()?;
                let h = layer.forward(&h, Some(mask))?;
                masked_mean(&h, Some(mask))
            }
            SequenceNet::MeanPool(input) => masked_mean(&input.forward(x)?.tanh()?, Some(mask)),
        }
    }
}

/// Contrastive encoders plus the sequence-level scenario classifier.
pub struct TemporalModel {
    config: TemporalConfig,
    ps: ParamStore,
    audio: AudioEncoder,
    imu: ImuEncoder,
    tau: Tensor,
    seq: SequenceNet,
    head: Linear,
}

impl TemporalModel {
    pub fn new(config: TemporalConfig, seed: u64) -> Result<Self> {
        if config.scenarios.is_empty() {
            return Err(Error::Empty("scenario vocabulary"));
        }
        let mut ps = ParamStore::new(DType::F32, seed);
        let d = config.embed_dim;
        let audio = AudioEncoder::new(&mut ps, config.features.n_mels, d)?;
        let imu = ImuEncoder::new(&mut ps, d)?;
        let tau = ps.var("tau", &[1], Init::Zeros)?;
        let feat = 2 * d + 1;
        let seq = match config.aggregator {
            Aggregator::Recurrent => SequenceNet::Recurrent(Gru::new(&mut ps, "agg.gru", feat, config.hidden)?),
            Aggregator::Attention => SequenceNet::Attention {
                input: Linear::new(&mut ps, "agg.input", feat, config.hidden)?,
                layer: TransformerLayer::new(&mut ps, "agg.layer", config.hidden, 4, 2 * config.hidden)?,
            },
            Aggregator::MeanPool => SequenceNet::MeanPool(Linear::new(&mut ps, "agg.input", feat, config.hidden)?),
        };
        let head = Linear::new(&mut ps, "head", config.hidden, config.scenarios.len())?;
        Ok(Self {
            config,
            ps,
            audio,
            imu,
            tau,
            seq,
            head,
        })
    }

    pub fn config(&self) -> &TemporalConfig {
        &self.config
    }

    pub fn scenarios(&self) -> &[String] {
        &self.config.scenarios
    }

    pub fn num_params(&self) -> usize {
        self.ps.num_params()
    }

    pub fn temperature(&self) -> Result<TemperatureParam> {
        let v = self.tau.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?[0];
        TemperatureParam::new(v)
    }

    fn check_window(window: &SensorWindow) -> Result<()> {
        let tol = 1.0 / f64::from(window.imu.sample_rate().min(window.audio.sample_rate())) + 1e-9;
        if (window.duration - WINDOW_SECONDS).abs() > tol {
            return Err(Error::invalid(format!(
                "temporal encoders take {WINDOW_SECONDS} s windows, got {:.3} s",
                window.duration
            )));
        }
        Ok(())
    }

    pub fn encode_audio(&self, window: &SensorWindow) -> Result<Embedding> {
        Self::check_window(window)?;
        let x = audio_input(&window.audio, &self.config.features)?;
        let out = self.audio.forward(&stack(&[&x])?)?;
        Embedding::new(row(&out, 0)?, Modality::Audio)
    }

    pub fn encode_imu(&self, window: &SensorWindow) -> Result<Embedding> {
        Self::check_window(window)?;
        let x = imu_input(&window.imu)?;
        let out = self.imu.forward(&stack(&[&x])?)?;
        Embedding::new(row(&out, 0)?, Modality::Imu)
    }

    pub fn window_feature(&self, window: &SensorWindow) -> Result<WindowFeature> {
        WindowFeature::new(self.encode_audio(window)?, self.encode_imu(window)?)
    }

    /// Batched embedding of precomputed encoder inputs.
    pub fn embed(&self, samples: &[ContrastiveSample]) -> Result<Vec<WindowFeature>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(64) {
            let a: Vec<&Array2<f32>> = chunk.iter().map(|s| &s.audio).collect();
            let i: Vec<&Array2<f32>> = chunk.iter().map(|s| &s.imu).collect();
            let ea = self.audio.forward(&stack(&a)?)?;
            let ei = self.imu.forward(&stack(&i)?)?;
            for k in 0..chunk.len() {
                out.push(WindowFeature::new(
                    Embedding::new(row(&ea, k)?, Modality::Audio)?,
                    Embedding::new(row(&ei, k)?, Modality::Imu)?,
                )?);
            }
        }
        Ok(out)
    }

    /// Windows that fit in `horizon` seconds.
    pub fn horizon_windows(horizon: f64) -> usize {
        ((horizon / WINDOW_SECONDS + 1e-9).floor() as usize).max(1)
    }

    pub fn aggregate_sequence(&self, windows: &[WindowFeature], horizon: f64) -> Result<ScenarioPrediction> {
        if windows.is_empty() {
            return Err(Error::Empty("window sequence"));
        }
        let max = Self::horizon_windows(horizon);
        if windows.len() > max {
            return Err(Error::invalid(format!(
                "{} windows exceed the {horizon} s horizon ({max} windows)",
                windows.len()
            )));
        }
        Ok(self.predict(&[windows])?.remove(0))
    }

    /// Batched sequence prediction; sequences may differ in length.
    pub fn predict(&self, sequences: &[&[WindowFeature]]) -> Result<Vec<ScenarioPrediction>> {
        let mut out = Vec::with_capacity(sequences.len());
        for chunk in sequences.chunks(64) {
            let (x, mask) = self.sequence_batch(chunk)?;
            let probs = candle_nn::ops::sigmoid(&self.sequence_logits(&x, &mask)?)?.to_vec2::<f32>()?;
            for p in probs {
                out.push(ScenarioPrediction::new(p.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())?);
            }
        }
        Ok(out)
    }

    fn sequence_logits(&self, x: &Tensor, mask: &Tensor) -> Result<Tensor> {
        self.head.forward(&self.seq.forward(x, mask)?)
    }

    fn sequence_batch(&self, seqs: &[&[WindowFeature]]) -> Result<(Tensor, Tensor)> {
        let feat = 2 * self.config.embed_dim + 1;
        let s_max = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        if s_max == 0 {
            return Err(Error::Empty("window sequence"));
        }
        let mut x = vec![0f32; seqs.len() * s_max * feat];
        let mut m = vec![0f32; seqs.len() * s_max];
        for (b, seq) in seqs.iter().enumerate() {
            for (t, w) in seq.iter().enumerate() {
                if w.audio.width() != self.config.embed_dim || w.imu.width() != self.config.embed_dim {
                    return Err(Error::Shape("window feature width differs from the model".into()));
                }
                let base = (b * s_max + t) * feat;
                for (k, v) in w.flat().enumerate() {
                    x[base + k] = v;
                }
                m[b * s_max + t] = 1.0;
            }
        }
        Ok((
            Tensor::from_vec(x, (seqs.len(), s_max, feat), &Device::Cpu)?,
            Tensor::from_vec(m, (seqs.len(), s_max), &Device::Cpu)?,
        ))
    }

    /// Contrastive training of both encoders and the temperature. Returns the
    /// mean loss per epoch.
    pub fn train_contrastive(&mut self, samples: &[ContrastiveSample], opts: &TrainOptions) -> Result<Vec<f64>> {
        if samples.len() < 2 {
            return Err(Error::invalid("contrastive training needs at least two samples"));
        }
        let mut vars = self.ps.vars_with_prefix("audio.");
        vars.extend(self.ps.vars_with_prefix("imu."));
        vars.extend(self.ps.vars_with_prefix("tau"));
        let mut opt = Adam::new(vars, opts.lr)?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let tau_var = self.ps.get("tau").expect("tau declared").clone();
        let mut history = Vec::with_capacity(opts.epochs);
        for _ in 0..opts.epochs {
            let mut total = 0.0;
            let mut count = 0;
            for idx in batches(samples.len(), opts.batch_size, &mut rng) {
                if idx.len() < 2 {
                    continue;
                }
                let audio: Vec<Array2<f32>> = idx
                    .iter()
                    .map(|&i| {
                        if opts.gain_augment {
                            let g = 4f32.powf(rng.random_range(-1.0f32..=1.0));
                            augment_gain(&samples[i].audio, g)
                        } else {
                            samples[i].audio.clone()
                        }
                    })
                    .collect();
                let imu: Vec<&Array2<f32>> = idx.iter().map(|&i| &samples[i].imu).collect();
                let ea = self.audio.forward(&stack(&audio.iter().collect::<Vec<_>>())?)?;
                let ei = self.imu.forward(&stack(&imu)?)?;
                let logits = ea.matmul(&ei.t()?)?.broadcast_mul(&self.tau.exp()?)?;
                let mask = self.positive_mask(samples, &idx)?;
                let loss = tensor_contrastive_loss(&logits, &mask, self.config.loss_mode)?;
                opt.step(&loss, Some(5.0))?;
                let tau = self.temperature()?.tau;
                if !(TAU_MIN..=TAU_MAX).contains(&tau) {
                    tau_var.set(&Tensor::new(&[tau.clamp(TAU_MIN, TAU_MAX) as f32], &Device::Cpu)?)?;
                }
                total += f64::from(loss.to_scalar::<f32>()?);
                count += 1;
            }
            history.push(total / count.max(1) as f64);
            log::debug!("contrastive epoch loss {:.4}", history.last().copied().unwrap_or(0.0));
        }
        Ok(history)
    }

    fn positive_mask(&self, samples: &[ContrastiveSample], idx: &[usize]) -> Result<Tensor> {
        let n = idx.len();
        let mut m = vec![0f32; n * n];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                let pos = match self.config.positive_mode {
                    PositiveMode::SelfOnly => a == b,
                    PositiveMode::SameScenario => {
                        let (si, sj) = (&samples[i].scenario, &samples[j].scenario);
                        if si.is_none() || sj.is_none() {
                            return Err(Error::invalid("same_scenario mode needs scenario ids"));
                        }
                        a == b || si == sj
                    }
                };
                m[a * n + b] = f32::from(u8::from(pos));
            }
        }
        Ok(Tensor::from_vec(m, (n, n), &Device::Cpu)?)
    }

    /// Trains the sequence stage (and head) on frozen window features.
    pub fn train_aggregator(&mut self, seqs: &[SequenceSample], opts: &TrainOptions) -> Result<Vec<f64>> {
        let mut vars = self.ps.vars_with_prefix("agg.");
        vars.extend(self.ps.vars_with_prefix("head."));
        self.train_sequences(seqs, opts, vars)
    }

    /// Trains only the linear scenario head; encoders and the sequence
    /// network stay frozen.
    pub fn train_head(&mut self, seqs: &[SequenceSample], opts: &TrainOptions) -> Result<Vec<f64>> {
        let vars = self.ps.vars_with_prefix("head.");
        self.train_sequences(seqs, opts, vars)
    }

    fn train_sequences(
        &mut self,
        seqs: &[SequenceSample],
        opts: &TrainOptions,
        vars: Vec<candle_core::Var>,
    ) -> Result<Vec<f64>> {
        if seqs.is_empty() {
            return Err(Error::Empty("training sequences"));
        }
        let n_classes = self.config.scenarios.len();
        let mut opt = Adam::new(vars, opts.lr)?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut history = Vec::with_capacity(opts.epochs);
        for _ in 0..opts.epochs {
            let mut total = 0.0;
            let mut count = 0;
            for idx in batches(seqs.len(), opts.batch_size, &mut rng) {
                let crop = rng.random_bool(opts.crop_fraction.clamp(0.0, 1.0));
                let mut views: Vec<&[WindowFeature]> = Vec::with_capacity(idx.len());
                let mut targets = vec![0f32; idx.len() * n_classes];
                for (b, &i) in idx.iter().enumerate() {
                    let s = &seqs[i];
                    let n = s.windows.len();
                    let (start, len) = if crop && n > 1 {
                        let len = rng.random_range(1..=n);
                        (rng.random_range(0..=n - len), len)
                    } else {
                        (0, n)
                    };
                    views.push(&s.windows[start..start + len]);
                    for c in union(&s.window_labels[start..start + len]) {
                        if c >= n_classes {
                            return Err(Error::IndexOutOfRange { index: c, len: n_classes });
                        }
                        targets[b * n_classes + c] = 1.0;
                    }
                }
                let (x, mask) = self.sequence_batch(&views)?;
                let logits = self.sequence_logits(&x, &mask)?;
                let y = Tensor::from_vec(targets, (idx.len(), n_classes), &Device::Cpu)?;
                let loss = bce_with_logits(&logits, &y)?;
                opt.step(&loss, Some(5.0))?;
                total += f64::from(loss.to_scalar::<f32>()?);
                count += 1;
            }
            history.push(total / count.max(1) as f64);
        }
        Ok(history)
    }

    /// Deep copy of every parameter.
    pub fn parameters(&self) -> Result<BTreeMap<String, Tensor>> {
        self.ps.snapshot()
    }

    pub fn load_parameters(&self, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
        self.ps.load_tensors(tensors)
    }

    /// Independent copy; training the copy leaves `self` untouched.
    pub fn try_clone(&self) -> Result<Self> {
        let copy = Self::new(self.config.clone(), 0)?;
        copy.load_parameters(&self.parameters()?)?;
        Ok(copy)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::new(CHECKPOINT_KIND, &self.config, self.config.scenarios.clone(), self.ps.tensors())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let config: TemporalConfig = ck.config()?;
        let model = Self::new(config, 0)?;
        model.load_parameters(&ck.tensors)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Contrastive loss on tensors, targets uniform over each column's (axis 0)
/// or row's (axis 1) positives.
pub(crate) fn tensor_contrastive_loss(logits: &Tensor, mask: &Tensor, mode: LossMode) -> Result<Tensor> {
    let cols = mask.t()?.contiguous()?;
    let q0 = cols.broadcast_div(&cols.sum_keepdim(1)?)?;
    let axis0 = soft_cross_entropy(&logits.t()?.contiguous()?, &q0, None)?;
    match mode {
        LossMode::PaperAxis0 => Ok(axis0),
        LossMode::Symmetric => {
            let q1 = mask.broadcast_div(&mask.sum_keepdim(1)?)?;
            let axis1 = soft_cross_entropy(logits, &q1, None)?;
            Ok(((axis0 + axis1)? * 0.5)?)
        }
    }
}

fn stack(items: &[&Array2<f32>]) -> Result<Tensor> {
    let (r, c) = items.first().map(|a| a.dim()).ok_or(Error::Empty("batch"))?;
    let mut flat = Vec::with_capacity(items.len() * r * c);
    for a in items {
        if a.dim() != (r, c) {
            return Err(Error::Shape(format!("batch item {:?} differs from {:?}", a.dim(), (r, c))));
        }
        flat.extend(a.iter().copied());
    }
    Ok(Tensor::from_vec(flat, (items.len(), r, c), &Device::Cpu)?)
}

fn row(t: &Tensor, i: usize) -> Result<Vec<f32>> {
    Ok(t.get(i)?.to_dtype(DType::F32)?.to_vec1::<f32>()?)
}

