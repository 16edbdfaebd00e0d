//! Scenario-conditioned activity recognition: modality tokens fused by a
//! small transformer, with a far-field interference policy.

mod model;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::Gate;
use crate::temporal::{Embedding, Modality};

pub use model::{HarConfig, HarModel, HarSample, HarTrainOptions, TokenSet, HAR_AUDIO_FRAMES, HAR_IMU_FRAMES};

/// Default HAR window length, seconds.
pub const HAR_WINDOW_SECONDS: f64 = 5.0;

/// `feature + modality_embedding`, one per modality present.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityToken {
    pub modality: Modality,
    pub feature: Embedding,
    pub modality_embedding: Vec<f32>,
    pub value: Vec<f32>,
}

impl ModalityToken {
    pub fn new(feature: Embedding, modality_embedding: Vec<f32>) -> Result<Self> {
        if feature.width() != modality_embedding.len() {
            return Err(Error::Shape(format!(
                "feature width {} differs from modality embedding width {}",
                feature.width(),
                modality_embedding.len()
            )));
        }
        let value = feature
            .values()
            .iter()
            .zip(&modality_embedding)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self {
            modality: feature.modality(),
            feature,
            modality_embedding,
            value,
        })
    }
}

/// Mean-pooled fusion output.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeature {
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityPrediction {
    pub probabilities: Vec<f32>,
    pub top1: usize,
    pub confidence: f32,
}

impl ActivityPrediction {
    pub fn from_probabilities(probabilities: Vec<f32>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::Empty("activity probabilities"));
        }
        let top1 = crate::temporal::argmax(&probabilities);
        Ok(Self {
            confidence: probabilities[top1],
            top1,
            probabilities,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceMode {
    FullMultimodal,
    ImuOnly,
}

/// Far-field dominated windows drop the audio token.
pub fn interference_policy(gate: Gate) -> InterferenceMode {
    match gate {
        Gate::FarFieldDominant => InterferenceMode::ImuOnly,
        Gate::AudioOk => InterferenceMode::FullMultimodal,
    }
}

/// Removes the audio token in `ImuOnly` mode.
pub fn apply_policy(tokens: Vec<ModalityToken>, mode: InterferenceMode) -> Vec<ModalityToken> {
    match mode {
        InterferenceMode::FullMultimodal => tokens,
        InterferenceMode::ImuOnly => tokens.into_iter().filter(|t| t.modality != Modality::Audio).collect(),
    }
}

/// Placeholder for distance-based sound extraction on gated windows; the
/// audio passes through unchanged.
pub fn distance_based_extraction(audio: &crate::signals::AudioClip) -> crate::signals::AudioClip {
    audio.clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_is_additive() {
        let f = Embedding::zeros(3, Modality::Imu);
        let t = ModalityToken::new(f, vec![0.5, -1.0, 2.0]).unwrap();
        assert_eq!(t.value, vec![0.5, -1.0, 2.0]);
        assert!(ModalityToken::new(Embedding::zeros(2, Modality::Imu), vec![0.0; 3]).is_err());
    }

    #[test]
    fn policy_drops_audio_only_when_gated() {
        assert_eq!(interference_policy(Gate::FarFieldDominant), InterferenceMode::ImuOnly);
        assert_eq!(interference_policy(Gate::AudioOk), InterferenceMode::FullMultimodal);
        let tokens = vec![
            ModalityToken::new(Embedding::zeros(2, Modality::Audio), vec![0.0; 2]).unwrap(),
            ModalityToken::new(Embedding::zeros(2, Modality::Imu), vec![0.0; 2]).unwrap(),
        ];
        assert_eq!(apply_policy(tokens.clone(), InterferenceMode::FullMultimodal).len(), 2);
        let kept = apply_policy(tokens, InterferenceMode::ImuOnly);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].modality, Modality::Imu);
    }

    #[test]
    fn prediction_top1_is_argmax() {
        let p = ActivityPrediction::from_probabilities(vec![0.1, 0.6, 0.3]).unwrap();
        assert_eq!((p.top1, p.confidence), (1, 0.6));
    }
}
