//! Collaborative scenario recognition: gate the local model, summarise the
//! evidence of uncertain sequences into prompts, collect pseudo-labels and
//! fine-tune the scenario head.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scenario::ScenarioSequence;
use super::world::{WindowContent, WorldConfig};
use crate::error::{Error, Result};
use crate::llm_collab::{
    build_prompt, detect_sound_events, dispatch_queries, fine_tune_local, reduce_ontology, DispatchOutcome,
    EventClassifier, FineTuneConfig, FineTuneOutcome, LlmClient, MotionClassifier, OntologyMap, PromptContext,
    PseudoLabelStore, QueryItem, SpatialTag, TaggedEvent, DEFAULT_MAX_IN_FLIGHT, DEFAULT_QUERY_THRESHOLD,
    QUERY_SPAN_SECONDS,
};
use crate::signals::Direction;
use crate::temporal::{SequenceSample, TemporalModel, WindowFeature, WINDOW_SECONDS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollabSettings {
    pub threshold: f64,
    pub max_in_flight: usize,
    pub evidence_seconds: f64,
    pub fine_tune: FineTuneConfig,
}

impl Default for CollabSettings {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_QUERY_THRESHOLD,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            evidence_seconds: QUERY_SPAN_SECONDS,
            fine_tune: FineTuneConfig::default(),
        }
    }
}

/// Frozen helpers used to describe the evidence of a query.
pub struct EvidenceTools<'a> {
    pub events: &'a EventClassifier,
    pub motion: &'a MotionClassifier,
    pub ontology: &'a OntologyMap,
}

/// One sequence handed to the collaborative loop.
pub struct CollabItem<'a> {
    pub id: String,
    pub sequence: &'a ScenarioSequence,
    pub features: &'a [WindowFeature],
    /// Stream time of the first window, seconds.
    pub start_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollabReport {
    pub sequences: usize,
    /// Sequences whose local confidence was below the threshold.
    pub low_confidence: usize,
    pub queries: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub fine_tune: FineTuneOutcome,
}

/// Window whose evidence is summarised: the strongest audio-motion match.
fn evidence_window(features: &[WindowFeature]) -> usize {
    let mut best = 0;
    for (k, f) in features.iter().enumerate() {
        if f.similarity > features[best].similarity {
            best = k;
        }
    }
    best
}

/// Near/far tags from the scene plan: sounds of foreground windows are near
/// and in front, distractor sounds are far in a direction drawn from the
/// window seed. Events matching neither are treated as near.
fn tag_event(class: &str, seq: &ScenarioSequence, windows: std::ops::Range<usize>) -> SpatialTag {
    let mut far = None;
    for k in windows {
        let content = seq.plan.windows[k];
        if content.sound().0 != class {
            continue;
        }
        match content {
            WindowContent::Distractor { .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seq.seeds[k] ^ 0xd1);
                far.get_or_insert(Direction::ALL[rng.random_range(0..Direction::ALL.len())]);
            }
            _ => return SpatialTag::Near,
        }
    }
    far.map_or(SpatialTag::Near, SpatialTag::Far)
}

/// Prompt context for sequence `item` given the local top-1 estimate.
pub fn evidence_context(
    item: &CollabItem<'_>,
    world: &WorldConfig,
    tools: &EvidenceTools<'_>,
    preliminary: (String, f64),
    categories: &[String],
    evidence_seconds: f64,
) -> Result<PromptContext> {
    let k = evidence_window(item.features);
    let span = item.sequence.span_around(k, evidence_seconds, world)?;
    let first = (span.start_time / WINDOW_SECONDS).floor() as usize;
    let last = (((span.start_time + span.duration) / WINDOW_SECONDS - 1e-9).ceil() as usize).min(item.sequence.len());
    let events = detect_sound_events(&span.audio, tools.events)?;
    let sound_events = events
        .iter()
        .map(|e| TaggedEvent {
            tag: tag_event(&e.class_name, item.sequence, first..last),
            event: reduce_ontology(e, tools.ontology),
        })
        .collect();
    let motion = tools.motion.classify(&span.imu)?;
    Ok(PromptContext {
        sound_events,
        motion_class: Some(motion.class),
        preliminary_scenario: preliminary,
        category_list: categories.to_vec(),
    })
}

/// Runs the gate over `items`, queries `client` for the uncertain ones,
/// appends every answer to `store` and fine-tunes the head of `model` on the
/// accepted labels, validated on `validation`.
#[allow(clippy::too_many_arguments)]
pub fn collab_run(
    model: &mut TemporalModel,
    items: &[CollabItem<'_>],
    validation: &[SequenceSample],
    world: &WorldConfig,
    tools: &EvidenceTools<'_>,
    client: &dyn LlmClient,
    store: &PseudoLabelStore,
    settings: &CollabSettings,
) -> Result<(CollabReport, DispatchOutcome)> {
    let categories = model.scenarios().to_vec();
    let views: Vec<&[WindowFeature]> = items.iter().map(|it| it.features).collect();
    if views.iter().any(|v| v.is_empty()) {
        return Err(Error::Empty("sequence features"));
    }
    let predictions = if views.is_empty() { Vec::new() } else { model.predict(&views)? };
    let mut queries = Vec::with_capacity(items.len());
    let mut low_confidence = 0;
    for (it, p) in items.iter().zip(&predictions) {
        let label = categories[p.top1()].clone();
        let confidence = f64::from(p.confidence);
        // Prompts are only rendered for windows that will be sent.
        let prompt = if crate::llm_collab::should_query(confidence, settings.threshold)? {
            low_confidence += 1;
            let ctx = evidence_context(
                it,
                world,
                tools,
                (label.clone(), confidence),
                &categories,
                settings.evidence_seconds,
            )?;
            build_prompt(&ctx)?
        } else {
            String::new()
        };
        queries.push(QueryItem {
            window_id: it.id.clone(),
            prompt,
            local_label: label,
            local_confidence: confidence,
            timestamp: it.start_time,
        });
    }
    let outcome = dispatch_queries(
        &queries,
        client,
        &categories,
        store,
        settings.threshold,
        settings.max_in_flight,
    )?;
    let features: HashMap<String, Vec<WindowFeature>> =
        items.iter().map(|it| (it.id.clone(), it.features.to_vec())).collect();
    let fine_tune = fine_tune_local(model, &store.labelled(), &features, validation, &settings.fine_tune)?;
    let report = CollabReport {
        sequences: items.len(),
        low_confidence,
        queries: outcome.queries,
        accepted: outcome.accepted,
        rejected: outcome.rejected,
        fine_tune,
    };
    Ok((report, outcome))
}
