//! Head-only fine-tuning of the local scenario model on accepted
//! pseudo-labels, gated by a held-out validation check.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::store::PseudoLabelRecord;
use crate::error::Result;
use crate::harness::metrics::evaluate_multilabel_f1;
use crate::temporal::{SequenceSample, TemporalModel, TrainOptions, WindowFeature};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FineTuneConfig {
    /// Fewer accepted records than this is a no-op.
    pub min_records: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        Self {
            min_records: 32,
            epochs: 60,
            batch_size: 16,
            lr: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneOutcome {
    pub records_used: usize,
    /// True when the new head replaced the old one.
    pub applied: bool,
    /// True when training ran but validation F1 dropped.
    pub rolled_back: bool,
    pub val_f1_before: Option<f64>,
    pub val_f1_after: Option<f64>,
}

impl FineTuneOutcome {
    fn skipped(records_used: usize) -> Self {
        Self {
            records_used,
            applied: false,
            rolled_back: false,
            val_f1_before: None,
            val_f1_after: None,
        }
    }
}

fn validation_f1(model: &TemporalModel, validation: &[SequenceSample]) -> Result<f64> {
    let views: Vec<&[WindowFeature]> = validation.iter().map(|s| s.windows.as_slice()).collect();
    let probs: Vec<Vec<f32>> = model.predict(&views)?.into_iter().map(|p| p.probabilities).collect();
    let truth: Vec<Vec<usize>> = validation.iter().map(SequenceSample::labels).collect();
    evaluate_multilabel_f1(&probs, &truth)
}

/// Fine-tunes the scenario head of `model` on records with an accepted label
/// whose window features are in `features`. The candidate is trained on a
/// copy and swapped in only if validation F1 does not drop, so readers of
/// `model` never see partially updated weights. Labels outside the model's
/// vocabulary are skipped; no classes are added.
pub fn fine_tune_local(
    model: &mut TemporalModel,
    records: &[PseudoLabelRecord],
    features: &HashMap<String, Vec<WindowFeature>>,
    validation: &[SequenceSample],
    cfg: &FineTuneConfig,
) -> Result<FineTuneOutcome> {
    // Store order depends on response arrival; sort for reproducibility.
    let mut usable: Vec<(&str, usize)> = records
        .iter()
        .filter_map(|r| {
            let label = r.llm_label.as_deref()?;
            let class = model.scenarios().iter().position(|s| s == label)?;
            features.contains_key(&r.window_id).then_some((r.window_id.as_str(), class))
        })
        .collect();
    usable.sort();
    usable.dedup_by(|a, b| a.0 == b.0);
    if usable.is_empty() || usable.len() < cfg.min_records {
        log::info!("{} usable pseudo-labels, below {}; not fine-tuning", usable.len(), cfg.min_records);
        return Ok(FineTuneOutcome::skipped(usable.len()));
    }
    let samples: Vec<SequenceSample> = usable
        .iter()
        .map(|(id, class)| {
            let windows = features[*id].clone();
            let n = windows.len();
            SequenceSample {
                windows,
                window_labels: vec![vec![*class]; n],
            }
        })
        .collect();
    let mut candidate = model.try_clone()?;
    let opts = TrainOptions {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        seed: cfg.seed,
        gain_augment: false,
        crop_fraction: 0.0,
    };
    candidate.train_head(&samples, &opts)?;
    if validation.is_empty() {
        log::warn!("no validation split; applying the fine-tuned head unchecked");
        *model = candidate;
        return Ok(FineTuneOutcome {
            applied: true,
            ..FineTuneOutcome::skipped(samples.len())
        });
    }
    let before = validation_f1(model, validation)?;
    let after = validation_f1(&candidate, validation)?;
    let keep = after >= before;
    if keep {
        *model = candidate;
    } else {
        log::warn!("validation F1 fell from {before:.4} to {after:.4}; rolling back");
    }
    Ok(FineTuneOutcome {
        records_used: samples.len(),
        applied: keep,
        rolled_back: !keep,
        val_f1_before: Some(before),
        val_f1_after: Some(after),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::temporal::TemporalConfig;

    #[test]
    fn empty_store_is_a_bitwise_noop() {
        let cfg = TemporalConfig {
            scenarios: vec!["a".into(), "b".into()],
            ..Default::default()
        };
        let mut m = TemporalModel::new(cfg, 3).unwrap();
        let before = m.to_checkpoint().unwrap().to_bytes().unwrap();
        let out = fine_tune_local(&mut m, &[], &HashMap::new(), &[], &FineTuneConfig::default()).unwrap();
        assert!(!out.applied);
        assert_eq!(m.to_checkpoint().unwrap().to_bytes().unwrap(), before);
    }
}
