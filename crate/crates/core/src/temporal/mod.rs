//! Audio–IMU contrastive alignment, key-frame scoring and sequence
//! aggregation into multi-label scenario predictions.

mod loss;
mod model;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use loss::{
    contrastive_logits, contrastive_loss, contrastive_loss_grad, contrastive_loss_with_targets, positive_pair_labels,
    BatchMeta, LossMode, PositiveMode, TemperatureParam,
};
pub use model::{
    audio_input, augment_gain, imu_input, resample_imu, Aggregator, ContrastiveSample, SequenceSample, TemporalConfig,
    TemporalModel, TrainOptions, WindowFeature, AUDIO_INPUT_FRAMES, IMU_INPUT_FRAMES,
};

/// Embedding width used by every encoder.
pub const EMBED_DIM: usize = 128;
/// Span of one temporal sample.
pub const WINDOW_SECONDS: f64 = 2.0;
/// Default aggregation horizon: 15 two-second windows.
pub const DEFAULT_HORIZON_SECONDS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Audio,
    Imu,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    values: Vec<f32>,
    modality: Modality,
}

impl Embedding {
    pub fn new(values: Vec<f32>, modality: Modality) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("embedding"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding"));
        }
        Ok(Self { values, modality })
    }

    /// Rescales to unit L2 norm.
    pub fn normalized(values: Vec<f32>, modality: Modality) -> Result<Self> {
        let norm = values.iter().map(|v| f64::from(*v).powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Degenerate("zero embedding cannot be normalised".into()));
        }
        Self::new(values.iter().map(|v| (f64::from(*v) / norm) as f32).collect(), modality)
    }

    pub fn zeros(width: usize, modality: Modality) -> Self {
        Self {
            values: vec![0.0; width],
            modality,
        }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn width(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| f64::from(*v).powi(2)).sum::<f64>().sqrt()
    }
}

/// Cosine similarity between the paired audio and IMU embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyFrameScore {
    pub similarity: f64,
}

/// Cosine similarity of two embeddings; symmetric bit-for-bit.
pub fn keyframe_similarity(audio_e: &Embedding, imu_e: &Embedding) -> Result<KeyFrameScore> {
    if audio_e.width() != imu_e.width() {
        return Err(Error::Shape(format!(
            "embedding widths differ: {} vs {}",
            audio_e.width(),
            imu_e.width()
        )));
    }
    let (na, nb) = (audio_e.norm(), imu_e.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("zero embedding has no direction".into()));
    }
    let dot: f64 = audio_e
        .values
        .iter()
        .zip(&imu_e.values)
        .map(|(a, b)| f64::from(*a) * f64::from(*b))
        .sum();
    Ok(KeyFrameScore {
        similarity: (dot / (na * nb)).clamp(-1.0, 1.0),
    })
}

/// Independent per-scenario sigmoid probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPrediction {
    pub probabilities: Vec<f32>,
    pub confidence: f32,
}

impl ScenarioPrediction {
    pub fn new(probabilities: Vec<f32>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::Empty("scenario probabilities"));
        }
        if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("scenario probabilities must lie in [0, 1]"));
        }
        let confidence = probabilities.iter().copied().fold(0.0, f32::max);
        Ok(Self {
            probabilities,
            confidence,
        })
    }

    pub fn top1(&self) -> usize {
        argmax(&self.probabilities)
    }

    /// Classes at or above `threshold`.
    pub fn active(&self, threshold: f32) -> Vec<usize> {
        (0..self.probabilities.len())
            .filter(|&k| self.probabilities[k] >= threshold)
            .collect()
    }
}

pub(crate) fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(v: &[f32]) -> Embedding {
        Embedding::new(v.to_vec(), Modality::Audio).unwrap()
    }

    #[test]
    fn similarity_examples() {
        let a = emb(&[0.6, 0.8]);
        assert!((keyframe_similarity(&a, &a).unwrap().similarity - 1.0).abs() < 1e-12);
        let b = emb(&[-0.8, 0.6]);
        assert_eq!(keyframe_similarity(&a, &b).unwrap().similarity, 0.0);
        let c = emb(&[-0.6, -0.8]);
        assert!((keyframe_similarity(&a, &c).unwrap().similarity + 1.0).abs() < 1e-12);
    }

    #[test]
    fn similarity_is_symmetric_bitwise() {
        let a = emb(&[0.1, -0.3, 0.77, 0.2]);
        let b = emb(&[0.5, 0.31, -0.2, 0.9]);
        assert_eq!(
            keyframe_similarity(&a, &b).unwrap().similarity.to_bits(),
            keyframe_similarity(&b, &a).unwrap().similarity.to_bits()
        );
    }

    #[test]
    fn zero_vector_is_rejected() {
        assert!(keyframe_similarity(&emb(&[0.0, 0.0]), &emb(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn prediction_confidence_is_max() {
        let p = ScenarioPrediction::new(vec![0.2, 0.7, 0.4]).unwrap();
        assert_eq!(p.confidence, 0.7);
        assert_eq!(p.top1(), 1);
        assert_eq!(p.active(0.3), vec![1, 2]);
        assert!(ScenarioPrediction::new(vec![1.2]).is_err());
    }
}
