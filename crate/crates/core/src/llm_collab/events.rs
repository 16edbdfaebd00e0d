//! Sound-event tagging over the synthetic event vocabulary and the
//! child → parent → grandparent ontology reduction.

use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{batches, bce_with_logits, Adam, Checkpoint, Init, Linear, ParamStore};
use crate::signals::sounds::{synthesize, SoundParams, AMBIENT, EVENT_CLASSES};
use crate::signals::{log_mel_mono, AudioClip, FeatureConfig};

/// Events at or below this probability are dropped.
pub const EVENT_THRESHOLD: f64 = 0.3;
pub const MAX_EVENTS: usize = 5;
/// Below this RMS the clip is treated as silence.
const SILENCE_RMS: f64 = 1e-4;

const SHIPPED_ONTOLOGY: &str = include_str!("../../data/ontology.tsv");
const CHECKPOINT_KIND: &str = "event_classifier";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundEvent {
    pub class_name: String,
    pub probability: f64,
    pub reduced_class: String,
}

/// Two-level class hierarchy loaded from `child<TAB>parent[<TAB>grandparent]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OntologyMap {
    entries: BTreeMap<String, (String, Option<String>)>,
}

impl OntologyMap {
    /// Blank lines and `#` comments are skipped; a child listed twice is an
    /// error.
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            if cols.len() < 2 || cols.len() > 3 || cols[0].is_empty() || cols[1].is_empty() {
                return Err(Error::invalid(format!("ontology line {}: expected 2 or 3 tab-separated columns", n + 1)));
            }
            let grand = cols.get(2).filter(|g| !g.is_empty()).map(|g| g.to_string());
            if entries.insert(cols[0].to_string(), (cols[1].to_string(), grand)).is_some() {
                return Err(Error::invalid(format!("ontology line {}: {} has two parents", n + 1, cols[0])));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tsv(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// The map shipped for the synthetic event vocabulary.
    pub fn shipped() -> Self {
        Self::from_tsv(SHIPPED_ONTOLOGY).expect("shipped ontology parses")
    }

    pub fn parent(&self, child: &str) -> Option<&str> {
        self.entries.get(child).map(|(p, _)| p.as_str())
    }

    /// Grandparent when defined, else parent.
    pub fn reduced(&self, child: &str) -> Option<&str> {
        self.entries
            .get(child)
            .map(|(p, g)| g.as_deref().unwrap_or(p.as_str()))
    }

    /// Distinct reduced classes.
    pub fn reduced_classes(&self) -> Vec<String> {
        let mut v: Vec<String> = self.entries.keys().filter_map(|c| self.reduced(c)).map(str::to_string).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Sets `reduced_class`; unmapped classes pass through unchanged.
pub fn reduce_ontology(event: &SoundEvent, map: &OntologyMap) -> SoundEvent {
    let reduced = match map.reduced(&event.class_name) {
        Some(r) => r.to_string(),
        None => {
            log::warn!("sound class {:?} is not in the ontology; keeping it", event.class_name);
            event.class_name.clone()
        }
    };
    SoundEvent {
        reduced_class: reduced,
        ..event.clone()
    }
}

/// Keeps probabilities above the threshold, sorted descending, at most five.
/// Ties keep vocabulary order.
pub fn select_events(probabilities: &[f64], classes: &[String]) -> Vec<SoundEvent> {
    let mut idx: Vec<usize> = (0..probabilities.len().min(classes.len()))
        .filter(|&i| probabilities[i] > EVENT_THRESHOLD)
        .collect();
    idx.sort_by(|&a, &b| probabilities[b].total_cmp(&probabilities[a]).then(a.cmp(&b)));
    idx.truncate(MAX_EVENTS);
    idx.into_iter()
        .map(|i| SoundEvent {
            class_name: classes[i].clone(),
            probability: probabilities[i],
            reduced_class: classes[i].clone(),
        })
        .collect()
}

pub fn detect_sound_events(audio: &AudioClip, classifier: &EventClassifier) -> Result<Vec<SoundEvent>> {
    let probs = classifier.probabilities(audio)?;
    Ok(select_events(&probs, classifier.classes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EventTrainOptions {
    pub clips_per_class: usize,
    pub clip_seconds: f64,
    pub sample_rate: u32,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for EventTrainOptions {
    fn default() -> Self {
        Self {
            clips_per_class: 40,
            clip_seconds: 2.0,
            sample_rate: 16_000,
            epochs: 60,
            lr: 2e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EventConfig {
    classes: Vec<String>,
    hidden: usize,
    features: FeatureConfig,
}

/// MLP over per-band mean and standard deviation of the log-Mel, one sigmoid
/// per class.
pub struct EventClassifier {
    config: EventConfig,
    ps: ParamStore,
    l1: Linear,
    l2: Linear,
    norm_mean: Tensor,
    norm_std: Tensor,
}

impl EventClassifier {
    pub fn new(classes: Vec<String>, features: FeatureConfig, seed: u64) -> Result<Self> {
        Self::with_config(
            EventConfig {
                classes,
                hidden: 128,
                features,
            },
            seed,
        )
    }

    fn with_config(config: EventConfig, seed: u64) -> Result<Self> {
        if config.classes.is_empty() {
            return Err(Error::Empty("event vocabulary"));
        }
        let mut ps = ParamStore::new(DType::F32, seed);
        let input = 2 * config.features.n_mels;
        let l1 = Linear::new(&mut ps, "l1", input, config.hidden)?;
        let l2 = Linear::new(&mut ps, "l2", config.hidden, config.classes.len())?;
        let norm_mean = ps.var("norm.mean", &[input], Init::Zeros)?;
        let norm_std = ps.var("norm.std", &[input], Init::Ones)?;
        Ok(Self {
            config,
            ps,
            l1,
            l2,
            norm_mean,
            norm_std,
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.config.classes
    }

    /// `[mean ‖ std]` of each Mel band over time.
    pub fn features(&self, audio: &AudioClip) -> Result<Vec<f32>> {
        let mel = log_mel_mono(&audio.mono(), audio.sample_rate(), &self.config.features)?;
        Ok(summary(&mel))
    }

    pub fn probabilities(&self, audio: &AudioClip) -> Result<Vec<f64>> {
        let mono = audio.mono();
        let rms = (mono.iter().map(|v| f64::from(*v).powi(2)).sum::<f64>() / mono.len().max(1) as f64).sqrt();
        if rms < SILENCE_RMS {
            return Ok(vec![0.0; self.config.classes.len()]);
        }
        let f = self.features(audio)?;
        let x = Tensor::from_vec(f, (1, 2 * self.config.features.n_mels), &Device::Cpu)?;
        let p = candle_nn::ops::sigmoid(&self.logits(&x)?)?;
        Ok(p.get(0)?.to_vec1::<f32>()?.into_iter().map(f64::from).collect())
    }

    fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let x = x.broadcast_sub(&self.norm_mean)?.broadcast_div(&self.norm_std)?;
        self.l2.forward(&self.l1.forward(&x)?.relu()?)
    }

    /// Trains on procedurally generated clips: single events, pairs, and room
    /// tone alone, each at a random gain over room tone.
    pub fn train(&mut self, opts: &EventTrainOptions) -> Result<Vec<f64>> {
        let (x, y) = self.training_set(opts)?;
        let n = y.len() / self.config.classes.len();
        let width = 2 * self.config.features.n_mels;
        let xs = Array2::from_shape_vec((n, width), x).map_err(|e| Error::Shape(e.to_string()))?;
        let mean: Vec<f32> = xs.mean_axis(ndarray::Axis(0)).expect("non-empty").to_vec();
        let std: Vec<f32> = xs.std_axis(ndarray::Axis(0), 0.0).iter().map(|s| s.max(1e-3)).collect();
        self.ps
            .get("norm.mean")
            .expect("declared")
            .set(&Tensor::from_vec(mean, width, &Device::Cpu)?)?;
        self.ps
            .get("norm.std")
            .expect("declared")
            .set(&Tensor::from_vec(std, width, &Device::Cpu)?)?;

        let k = self.config.classes.len();
        let mut vars = self.ps.vars_with_prefix("l1.");
        vars.extend(self.ps.vars_with_prefix("l2."));
        let mut opt = Adam::new(vars, opts.lr)?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
        let mut history = Vec::with_capacity(opts.epochs);
        for _ in 0..opts.epochs {
            let mut total = 0.0;
            let mut count = 0;
            for idx in batches(n, 64, &mut rng) {
                let bx: Vec<f32> = idx.iter().flat_map(|&i| xs.row(i).to_vec()).collect();
                let by: Vec<f32> = idx.iter().flat_map(|&i| y[i * k..(i + 1) * k].to_vec()).collect();
                let bx = Tensor::from_vec(bx, (idx.len(), width), &Device::Cpu)?;
                let by = Tensor::from_vec(by, (idx.len(), k), &Device::Cpu)?;
                let loss = bce_with_logits(&self.logits(&bx)?, &by)?;
                opt.step(&loss, Some(5.0))?;
                total += f64::from(loss.to_scalar::<f32>()?);
                count += 1;
            }
            history.push(total / count.max(1) as f64);
        }
        Ok(history)
    }

    fn training_set(&self, opts: &EventTrainOptions) -> Result<(Vec<f32>, Vec<f32>)> {
        let k = self.config.classes.len();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        // (active classes, gains, seed) per clip
        let mut plans: Vec<(Vec<usize>, Vec<f64>, f64, u64)> = Vec::new();
        for c in 0..k {
            for _ in 0..opts.clips_per_class {
                plans.push((vec![c], vec![rng.random_range(0.25..1.3)], rng.random_range(0.0..0.4), rng.random()));
                let mut other = rng.random_range(0..k - 1);
                if other >= c {
                    other += 1;
                }
                if k > 1 {
                    plans.push((
                        vec![c, other],
                        vec![rng.random_range(0.25..1.3), rng.random_range(0.25..1.3)],
                        rng.random_range(0.0..0.4),
                        rng.random(),
                    ));
                }
            }
        }
        for _ in 0..opts.clips_per_class * 2 {
            plans.push((vec![], vec![], rng.random_range(0.05..0.6), rng.random()));
        }
        let rows: Vec<(Vec<f32>, Vec<f32>)> = plans
            .par_iter()
            .map(|(classes, gains, ambient, seed)| {
                let mut r = ChaCha8Rng::seed_from_u64(*seed);
                let sr = opts.sample_rate;
                let d = opts.clip_seconds;
                let mut mix: Vec<f64> = synthesize(AMBIENT, SoundParams::default(), sr, d, r.random())?
                    .iter()
                    .map(|v| f64::from(*v) * ambient)
                    .collect();
                let mut y = vec![0f32; k];
                for (&c, &g) in classes.iter().zip(gains) {
                    let s = synthesize(&self.config.classes[c], SoundParams::default(), sr, d, r.random())?;
                    for (m, v) in mix.iter_mut().zip(&s) {
                        *m += f64::from(*v) * g;
                    }
                    y[c] = 1.0;
                }
                let mono: Vec<f32> = mix.iter().map(|v| v.clamp(-1.0, 1.0) as f32).collect();
                let mel = log_mel_mono(&mono, sr, &self.config.features)?;
                Ok((summary(&mel), y))
            })
            .collect::<Result<_>>()?;
        let mut x = Vec::with_capacity(rows.len() * 2 * self.config.features.n_mels);
        let mut y = Vec::with_capacity(rows.len() * k);
        for (f, l) in rows {
            x.extend(f);
            y.extend(l);
        }
        Ok((x, y))
    }

    /// Classifier over the synthetic event vocabulary, trained in place.
    pub fn trained_default(opts: &EventTrainOptions) -> Result<Self> {
        let classes = EVENT_CLASSES.iter().map(|s| s.to_string()).collect();
        let mut m = Self::new(classes, FeatureConfig::default(), opts.seed)?;
        m.train(opts)?;
        Ok(m)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::new(CHECKPOINT_KIND, &self.config, self.config.classes.clone(), self.ps.tensors())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let m = Self::with_config(ck.config()?, 0)?;
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

fn summary(mel: &Array2<f32>) -> Vec<f32> {
    let mean = mel.mean_axis(ndarray::Axis(0)).expect("frames");
    let std = mel.std_axis(ndarray::Axis(0), 0.0);
    mean.iter().chain(std.iter()).copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn threshold_filter() {
        let e = select_events(&[0.9, 0.5, 0.2], &names(3));
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].class_name, "c0");
        assert!(select_events(&[0.3, 0.1], &names(2)).is_empty());
    }

    #[test]
    fn top_five_cap() {
        let e = select_events(&[0.8; 7], &names(7));
        assert_eq!(e.len(), 5);
        let p = [0.4, 0.95, 0.31, 0.7, 0.99, 0.5, 0.6];
        let e = select_events(&p, &names(7));
        let probs: Vec<f64> = e.iter().map(|e| e.probability).collect();
        assert_eq!(probs, vec![0.99, 0.95, 0.7, 0.6, 0.5]);
    }

    #[test]
    fn shipped_ontology() {
        let map = OntologyMap::shipped();
        let ev = |c: &str| SoundEvent {
            class_name: c.into(),
            probability: 0.7,
            reduced_class: c.into(),
        };
        assert_eq!(reduce_ontology(&ev("electric_guitar"), &map).reduced_class, "music");
        assert_eq!(reduce_ontology(&ev("music"), &map).reduced_class, "music");
        assert_eq!(
            reduce_ontology(&ev("chopping"), &map).reduced_class,
            reduce_ontology(&ev("sizzling"), &map).reduced_class
        );
        let r = reduce_ontology(&ev("unknown_thing"), &map);
        assert_eq!(r.reduced_class, "unknown_thing");
        assert_eq!(r.probability, 0.7);
        for c in EVENT_CLASSES {
            assert!(map.parent(c).is_some(), "{c} unmapped");
        }
        assert!(map.reduced_classes().len() <= 50);
    }

    #[test]
    fn ontology_rejects_two_parents() {
        assert!(OntologyMap::from_tsv("a\tb\na\tc\n").is_err());
        assert!(OntologyMap::from_tsv("a\n").is_err());
    }

    #[test]
    fn silence_has_no_events() {
        let m = EventClassifier::new(names(4), FeatureConfig::default(), 0).unwrap();
        let clip = AudioClip::from_channels(&[vec![0.0; 16_000]], 16_000).unwrap();
        assert!(detect_sound_events(&clip, &m).unwrap().is_empty());
    }
}
