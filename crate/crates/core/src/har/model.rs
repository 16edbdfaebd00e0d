use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    apply_policy, interference_policy, ActivityPrediction, FusedFeature, ModalityToken, HAR_WINDOW_SECONDS,
};
use crate::error::{Error, Result};
use crate::nn::{batches, l2_normalize, soft_cross_entropy, Adam, Checkpoint, Conv1d, Init, Linear, ParamStore, TransformerLayer};
use crate::signals::{log_mel_mono, AudioClip, FeatureConfig, ImuSequence, SensorWindow};
use crate::spatial::Gate;
use crate::temporal::{resample_imu, Embedding, Modality, EMBED_DIM};

/// Log-Mel frames per HAR window (5 s at a 10 ms hop).
pub const HAR_AUDIO_FRAMES: usize = 500;
/// IMU steps per HAR window (5 s at 200 Hz).
pub const HAR_IMU_FRAMES: usize = 1000;

const CHECKPOINT_KIND: &str = "har";
const OOV: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarConfig {
    pub embed_dim: usize,
    pub heads: usize,
    pub fusion_layers: usize,
    pub label_smoothing: f64,
    pub activities: Vec<String>,
    pub scenarios: Vec<String>,
    pub features: FeatureConfig,
}

impl Default for HarConfig {
    fn default() -> Self {
        Self {
            embed_dim: EMBED_DIM,
            heads: 4,
            fusion_layers: 2,
            label_smoothing: 0.05,
            activities: Vec::new(),
            scenarios: Vec::new(),
            features: FeatureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarTrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for HarTrainOptions {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 32,
            lr: 1e-3,
            seed: 0,
        }
    }
}

/// Which modality tokens enter the fusion encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSet {
    pub audio: bool,
    pub imu: bool,
    pub scenario: bool,
}

impl TokenSet {
    pub const AUDIO: Self = Self {
        audio: true,
        imu: false,
        scenario: false,
    };
    pub const IMU: Self = Self {
        audio: false,
        imu: true,
        scenario: false,
    };
    pub const MULTIMODAL: Self = Self {
        audio: true,
        imu: true,
        scenario: false,
    };
    pub const WITH_SCENARIO: Self = Self {
        audio: true,
        imu: true,
        scenario: true,
    };

    /// The token set left after the interference policy for `gate`.
    pub fn gated(self, gate: Gate) -> Self {
        match interference_policy(gate) {
            super::InterferenceMode::ImuOnly => Self { audio: false, ..self },
            super::InterferenceMode::FullMultimodal => self,
        }
    }

    fn count(self) -> usize {
        usize::from(self.audio) + usize::from(self.imu) + usize::from(self.scenario)
    }
}

/// Encoder inputs and labels for one window.
#[derive(Debug, Clone)]
pub struct HarSample {
    /// Raw log-Mel `[n_mels × 500]`.
    pub audio: Array2<f32>,
    /// Scaled IMU `[6 × 1000]`.
    pub imu: Array2<f32>,
    pub activity: usize,
    pub scenarios: Vec<String>,
}

impl HarSample {
    pub fn from_window(window: &SensorWindow, features: &FeatureConfig, activity: usize, scenarios: Vec<String>) -> Result<Self> {
        Ok(Self {
            audio: har_audio_input(&window.audio, features)?,
            imu: har_imu_input(&window.imu)?,
            activity,
            scenarios,
        })
    }
}

fn check_length(duration: f64) -> Result<()> {
    if duration > HAR_WINDOW_SECONDS + 0.01 {
        return Err(Error::invalid(format!(
            "{duration:.2} s exceeds the {HAR_WINDOW_SECONDS} s HAR window; split the stream into windows first"
        )));
    }
    Ok(())
}

/// Log-Mel of the mono mix, zero-padded (log floor) to the 5 s window.
pub fn har_audio_input(clip: &AudioClip, cfg: &FeatureConfig) -> Result<Array2<f32>> {
    check_length(clip.duration())?;
    let mel = log_mel_mono(&clip.mono(), clip.sample_rate(), cfg)?;
    let (t, m) = mel.dim();
    let floor = crate::signals::features::LOG_EPS.ln();
    Ok(Array2::from_shape_fn((m, HAR_AUDIO_FRAMES), |(b, f)| if f < t { mel[[f, b]] } else { floor }))
}

/// IMU at 200 Hz steps, zero-padded to the 5 s window.
pub fn har_imu_input(imu: &ImuSequence) -> Result<Array2<f32>> {
    check_length(imu.duration())?;
    let steps = ((imu.duration() / HAR_WINDOW_SECONDS) * HAR_IMU_FRAMES as f64).round().max(1.0) as usize;
    let x = resample_imu(imu, steps.min(HAR_IMU_FRAMES))?;
    Ok(Array2::from_shape_fn((6, HAR_IMU_FRAMES), |(c, k)| if k < x.ncols() { x[[c, k]] } else { 0.0 }))
}

struct Encoder {
    c1: Conv1d,
    c2: Conv1d,
    c3: Conv1d,
    proj: Linear,
    centre: bool,
}

impl Encoder {
    fn audio(ps: &mut ParamStore, n_mels: usize, dim: usize) -> Result<Self> {
        Ok(Self {
            c1: Conv1d::new(ps, "audio.c1", n_mels, 64, 8, 4, 2)?,
            c2: Conv1d::new(ps, "audio.c2", 64, 128, 5, 2, 2)?,
            c3: Conv1d::new(ps, "audio.c3", 128, 128, 3, 2, 1)?,
            proj: Linear::new(ps, "audio.proj", 256, dim)?,
            centre: true,
        })
    }

    fn imu(ps: &mut ParamStore, dim: usize) -> Result<Self> {
        Ok(Self {
            c1: Conv1d::new(ps, "imu.c1", 6, 32, 9, 4, 4)?,
            c2: Conv1d::new(ps, "imu.c2", 32, 64, 5, 2, 2)?,
            c3: Conv1d::new(ps, "imu.c3", 64, 128, 3, 2, 1)?,
            proj: Linear::new(ps, "imu.proj", 256, dim)?,
            centre: false,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let x = if self.centre {
            let mean = x.flatten_from(1)?.mean_keepdim(1)?.unsqueeze(2)?;
            x.broadcast_sub(&mean)?
        } else {
            x.clone()
        };
        let h = self.c1.forward(&x)?.relu()?;
        let h = self.c2.forward(&h)?.relu()?;
        let h = self.c3.forward(&h)?.relu()?;
        let pooled = Tensor::cat(&[h.mean(2)?, h.max(2)?], 1)?;
        self.proj.forward(&pooled)
    }
}

/// Audio and IMU encoders, scenario lookup table, modality embeddings,
/// fusion encoder and activity head.
pub struct HarModel {
    config: HarConfig,
    ps: ParamStore,
    audio: Encoder,
    imu: Encoder,
    table: Tensor,
    modality: [Tensor; 3],
    layers: Vec<TransformerLayer>,
    head: Linear,
}

impl HarModel {
    pub fn new(config: HarConfig, seed: u64) -> Result<Self> {
        if config.activities.is_empty() {
            return Err(Error::Empty("activity vocabulary"));
        }
        let mut ps = ParamStore::new(DType::F32, seed);
        let d = config.embed_dim;
        let audio = Encoder::audio(&mut ps, config.features.n_mels, d)?;
        let imu = Encoder::imu(&mut ps, d)?;
        let table = ps.var("text.table", &[config.scenarios.len() + 1, d], Init::Normal(1.0))?;
        let modality = [
            ps.var("modality.audio", &[d], Init::Normal(0.1))?,
            ps.var("modality.imu", &[d], Init::Normal(0.1))?,
            ps.var("modality.text", &[d], Init::Normal(0.1))?,
        ];
        let layers = (0..config.fusion_layers)
            .map(|k| TransformerLayer::new(&mut ps, &format!("fusion.layer{k}"), d, config.heads, 2 * d))
            .collect::<Result<Vec<_>>>()?;
        let head = Linear::new(&mut ps, "head", d, config.activities.len())?;
        Ok(Self {
            config,
            ps,
            audio,
            imu,
            table,
            modality,
            layers,
            head,
        })
    }

    pub fn config(&self) -> &HarConfig {
        &self.config
    }

    pub fn activities(&self) -> &[String] {
        &self.config.activities
    }

    fn modality_index(m: Modality) -> usize {
        match m {
            Modality::Audio => 0,
            Modality::Imu => 1,
            Modality::Text => 2,
        }
    }

    fn modality_embedding(&self, m: Modality) -> Result<Vec<f32>> {
        Ok(self.modality[Self::modality_index(m)].to_vec1::<f32>()?)
    }

    fn scenario_row(&self, label: &str) -> usize {
        match self.config.scenarios.iter().position(|s| s == label) {
            Some(i) => i,
            None => {
                log::warn!("unknown scenario label {label:?}; using the {OOV} embedding");
                self.config.scenarios.len()
            }
        }
    }

    /// Per-sample mixing weights over table rows: uniform over the labels.
    fn scenario_weights(&self, labels: &[Vec<String>]) -> Result<Tensor> {
        let rows = self.config.scenarios.len() + 1;
        let mut w = vec![0f32; labels.len() * rows];
        for (b, ls) in labels.iter().enumerate() {
            if ls.is_empty() {
                return Err(Error::Empty("scenario labels"));
            }
            for l in ls {
                w[b * rows + self.scenario_row(l)] += 1.0 / ls.len() as f32;
            }
        }
        Ok(Tensor::from_vec(w, (labels.len(), rows), &Device::Cpu)?)
    }

    fn scenario_tensor(&self, labels: &[Vec<String>]) -> Result<Tensor> {
        let rows = l2_normalize(&self.table)?;
        l2_normalize(&self.scenario_weights(labels)?.matmul(&rows)?)
    }

    /// Lookup-table embedding; several labels give the renormalised mean of
    /// their unit rows. Unknown labels map to a dedicated OOV row.
    pub fn scenario_text_embedding(&self, labels: &[&str]) -> Result<Embedding> {
        let owned = vec![labels.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
        let t = self.scenario_tensor(&owned)?;
        Embedding::new(t.get(0)?.to_vec1::<f32>()?, Modality::Text)
    }

    pub fn encode_audio(&self, audio: &AudioClip) -> Result<Embedding> {
        let x = har_audio_input(audio, &self.config.features)?;
        let e = self.audio.forward(&stack(&[&x])?)?;
        Embedding::new(e.get(0)?.to_vec1::<f32>()?, Modality::Audio)
    }

    pub fn encode_imu(&self, imu: &ImuSequence) -> Result<Embedding> {
        let x = har_imu_input(imu)?;
        let e = self.imu.forward(&stack(&[&x])?)?;
        Embedding::new(e.get(0)?.to_vec1::<f32>()?, Modality::Imu)
    }

    /// Tokens for the present modalities: `feature + e_m`.
    pub fn build_tokens(
        &self,
        audio_e: &Embedding,
        imu_e: &Embedding,
        scenario_e: Option<&Embedding>,
    ) -> Result<Vec<ModalityToken>> {
        let d = self.config.embed_dim;
        let mut out = Vec::with_capacity(3);
        for e in [Some(audio_e), Some(imu_e), scenario_e].into_iter().flatten() {
            if e.width() != d {
                return Err(Error::Shape(format!("token width {} differs from model width {d}", e.width())));
            }
            out.push(ModalityToken::new(e.clone(), self.modality_embedding(e.modality())?)?);
        }
        Ok(out)
    }

    /// Two-layer encoder over the token set, mean of the outputs. Tokens are
    /// put in a canonical modality order first, so any permutation of the
    /// input gives a bit-identical result.
    pub fn fuse(&self, tokens: &[ModalityToken]) -> Result<FusedFeature> {
        if tokens.is_empty() {
            return Err(Error::Empty("token list"));
        }
        let mut ordered: Vec<&ModalityToken> = tokens.iter().collect();
        ordered.sort_by(|a, b| {
            Self::modality_index(a.modality)
                .cmp(&Self::modality_index(b.modality))
                .then_with(|| {
                    let ka: Vec<u32> = a.value.iter().map(|v| v.to_bits()).collect();
                    let kb: Vec<u32> = b.value.iter().map(|v| v.to_bits()).collect();
                    ka.cmp(&kb)
                })
        });
        let d = self.config.embed_dim;
        let flat: Vec<f32> = ordered.iter().flat_map(|t| t.value.iter().copied()).collect();
        if flat.len() != ordered.len() * d {
            return Err(Error::Shape("token width differs from model width".into()));
        }
        let x = Tensor::from_vec(flat, (1, ordered.len(), d), &Device::Cpu)?;
        let z = self.fusion(&x)?;
        Ok(FusedFeature {
            values: z.get(0)?.to_vec1::<f32>()?,
        })
    }

    fn fusion(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(&h, None)?;
        }
        Ok(h.mean(1)?)
    }

    pub fn classify_activity(&self, z: &FusedFeature) -> Result<ActivityPrediction> {
        let x = Tensor::from_vec(z.values.clone(), (1, z.values.len()), &Device::Cpu)?;
        let p = candle_nn::ops::softmax(&self.head.forward(&x)?, 1)?;
        ActivityPrediction::from_probabilities(p.get(0)?.to_vec1::<f32>()?)
    }

    /// Full single-window path: gate → policy → tokens → fusion → head. In
    /// `imu_only` mode the audio is never read.
    pub fn predict_window(&self, window: &SensorWindow, scenarios: Option<&[&str]>, gate: Gate) -> Result<ActivityPrediction> {
        let mode = interference_policy(gate);
        let imu_e = self.encode_imu(&window.imu)?;
        let scen_e = scenarios.map(|s| self.scenario_text_embedding(s)).transpose()?;
        let mut tokens = Vec::with_capacity(3);
        if mode == super::InterferenceMode::FullMultimodal {
            let audio_e = self.encode_audio(&window.audio)?;
            tokens.push(ModalityToken::new(audio_e.clone(), self.modality_embedding(Modality::Audio)?)?);
        }
        tokens.push(ModalityToken::new(imu_e, self.modality_embedding(Modality::Imu)?)?);
        if let Some(e) = scen_e {
            tokens.push(ModalityToken::new(e, self.modality_embedding(Modality::Text)?)?);
        }
        let tokens = apply_policy(tokens, mode);
        self.classify_activity(&self.fuse(&tokens)?)
    }

    /// Logits `[B, A]` for a batch with the given token set.
    fn logits(&self, samples: &[&HarSample], set: TokenSet) -> Result<Tensor> {
        if set.count() == 0 {
            return Err(Error::Empty("token set"));
        }
        let b = samples.len();
        let d = self.config.embed_dim;
        let mut tokens = Vec::with_capacity(3);
        if set.audio {
            let a = self.audio.forward(&stack(&samples.iter().map(|s| &s.audio).collect::<Vec<_>>())?)?;
            tokens.push(a.broadcast_add(&self.modality[0])?);
        }
        if set.imu {
            let i = self.imu.forward(&stack(&samples.iter().map(|s| &s.imu).collect::<Vec<_>>())?)?;
            tokens.push(i.broadcast_add(&self.modality[1])?);
        }
        if set.scenario {
            let labels: Vec<Vec<String>> = samples.iter().map(|s| s.scenarios.clone()).collect();
            tokens.push(self.scenario_tensor(&labels)?.broadcast_add(&self.modality[2])?);
        }
        let x = Tensor::stack(&tokens, 1)?;
        debug_assert_eq!(x.dims(), &[b, set.count(), d]);
        self.head.forward(&self.fusion(&x)?)
    }

    pub fn predict(&self, samples: &[HarSample], set: TokenSet) -> Result<Vec<ActivityPrediction>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(64) {
            let refs: Vec<&HarSample> = chunk.iter().collect();
            let p = candle_nn::ops::softmax(&self.logits(&refs, set)?, 1)?.to_vec2::<f32>()?;
            for row in p {
                out.push(ActivityPrediction::from_probabilities(row)?);
            }
        }
        Ok(out)
    }

    /// Label-smoothed cross-entropy on a batch.
    pub fn loss(&self, samples: &[&HarSample], set: TokenSet) -> Result<Tensor> {
        let logits = self.logits(samples, set)?;
        let k = self.config.activities.len();
        let eps = self.config.label_smoothing as f32;
        let mut y = vec![eps / k as f32; samples.len() * k];
        for (b, s) in samples.iter().enumerate() {
            if s.activity >= k {
                return Err(Error::IndexOutOfRange { index: s.activity, len: k });
            }
            y[b * k + s.activity] += 1.0 - eps;
        }
        soft_cross_entropy(&logits, &Tensor::from_vec(y, (samples.len(), k), &Device::Cpu)?, None)
    }

    /// Loss of one window routed through the interference policy. A gated
    /// window never touches the audio encoder, so its gradient there is zero.
    pub fn gated_loss(&self, sample: &HarSample, set: TokenSet, gate: Gate) -> Result<Tensor> {
        self.loss(&[sample], set.gated(gate))
    }

    /// Audio-encoder parameters (for gradient inspection).
    pub fn audio_encoder_vars(&self) -> Vec<Var> {
        self.ps.vars_with_prefix("audio.")
    }

    pub fn train(&mut self, samples: &[HarSample], set: TokenSet, opts: &HarTrainOptions) -> Result<Vec<f64>> {
        if samples.is_empty() {
            return Err(Error::Empty("training samples"));
        }
        let mut opt = Adam::new(self.ps.all_vars(), opts.lr)?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut history = Vec::with_capacity(opts.epochs);
        for _ in 0..opts.epochs {
            let mut total = 0.0;
            let mut count = 0;
            for idx in batches(samples.len(), opts.batch_size, &mut rng) {
                let refs: Vec<&HarSample> = idx.iter().map(|&i| &samples[i]).collect();
                let loss = self.loss(&refs, set)?;
                opt.step(&loss, Some(5.0))?;
                total += f64::from(loss.to_scalar::<f32>()?);
                count += 1;
            }
            history.push(total / count.max(1) as f64);
        }
        Ok(history)
    }

    pub fn parameters(&self) -> Result<BTreeMap<String, Tensor>> {
        self.ps.snapshot()
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::new(CHECKPOINT_KIND, &self.config, self.config.activities.clone(), self.ps.tensors())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let config: HarConfig = ck.config()?;
        if ck.vocab != config.activities {
            return Err(Error::Checkpoint("activity vocabulary does not match the config".into()));
        }
        let model = Self::new(config, 0)?;
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
