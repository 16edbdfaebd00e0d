//! Evidence-to-prompt assembly, confidence-gated cloud queries and
//! pseudo-label fine-tuning of the local scenario head.

mod client;
mod dispatch;
mod events;
mod finetune;
mod motion;
mod store;

pub use client::{LlmClient, LlmRequest, MockLlm, RemoteLlm, ENDPOINT_ENV, TOKEN_ENV};
pub use dispatch::{dispatch_queries, DispatchOutcome, QueryItem, DEFAULT_MAX_IN_FLIGHT};
pub use events::{
    detect_sound_events, reduce_ontology, EventClassifier, EventTrainOptions, OntologyMap, SoundEvent,
    EVENT_THRESHOLD, MAX_EVENTS,
};
pub use finetune::{fine_tune_local, FineTuneConfig, FineTuneOutcome};
pub use motion::{motion_training_set, MotionClassifier, MotionPrediction, MotionTrainOptions};
pub use store::{PseudoLabelRecord, PseudoLabelStore};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::Direction;

/// Below this local confidence a window is sent to the cloud model.
pub const DEFAULT_QUERY_THRESHOLD: f64 = 0.5;
/// Seconds of evidence summarised in one query.
pub const QUERY_SPAN_SECONDS: f64 = 5.0;

const PREAMBLE: &str = "You are an expert in human activity analysis. You will receive audio and IMU recognition results, including extra information on potential scenarios. Using this information, reason and refine the person\u{2019}s scenario. The scenario must be one of the following categories: [List of categories]. Your output must be a single line containing just one word or phrase.";
const CATEGORY_PLACEHOLDER: &str = "[List of categories]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "field", content = "direction", rename_all = "snake_case")]
pub enum SpatialTag {
    Near,
    Far(Direction),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedEvent {
    pub event: SoundEvent,
    pub tag: SpatialTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    pub sound_events: Vec<TaggedEvent>,
    pub motion_class: Option<String>,
    /// Local top-1 label and its confidence.
    pub preliminary_scenario: (String, f64),
    pub category_list: Vec<String>,
}

impl PromptContext {
    /// Near and far events in the same span. No separation is applied; both
    /// templates are emitted and callers can surface this flag.
    pub fn has_mixed_field(&self) -> bool {
        let near = self.sound_events.iter().any(|e| e.tag == SpatialTag::Near);
        let far = self.sound_events.iter().any(|e| matches!(e.tag, SpatialTag::Far(_)));
        near && far
    }
}

fn display_name(class: &str) -> String {
    class.replace('_', " ")
}

/// Assembles the prompt. Pure: equal contexts give byte-identical strings.
pub fn build_prompt(ctx: &PromptContext) -> Result<String> {
    if ctx.category_list.is_empty() {
        return Err(Error::Empty("category list"));
    }
    let mut lines = vec![PREAMBLE.replace(CATEGORY_PLACEHOLDER, &ctx.category_list.join(", "))];
    for e in &ctx.sound_events {
        let name = display_name(&e.event.reduced_class);
        lines.push(match e.tag {
            SpatialTag::Near => format!(
                "the {name} is happening in the near front of the user, which is likely to be related to human activity."
            ),
            SpatialTag::Far(d) => format!("the {name} is happening in the {}.", d.as_str()),
        });
    }
    if let Some(m) = &ctx.motion_class {
        lines.push(format!("the detected motion is {m}."));
    }
    let (label, conf) = &ctx.preliminary_scenario;
    lines.push(format!("the preliminary scenario estimation is {label}, {conf:.2}."));
    Ok(lines.join("\n"))
}

/// True iff `confidence < threshold`; a confidence equal to the threshold
/// stays local.
pub fn should_query(local_confidence: f64, threshold: f64) -> Result<bool> {
    if !(0.0..=1.0).contains(&local_confidence) {
        return Err(Error::invalid(format!("confidence {local_confidence} outside [0, 1]")));
    }
    Ok(local_confidence < threshold)
}

/// First line, trimmed, matched case-insensitively against the categories.
/// Anything else is rejected.
pub fn parse_llm_response(raw: &str, category_list: &[String]) -> Result<String> {
    let first = raw.lines().next().unwrap_or("").trim();
    let first = first.trim_end_matches('.').trim();
    category_list
        .iter()
        .find(|c| c.eq_ignore_ascii_case(first) || display_name(c).eq_ignore_ascii_case(first))
        .cloned()
        .ok_or_else(|| Error::Llm(format!("response {first:?} is not one of the categories")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cats() -> Vec<String> {
        ["cooking", "cleaning", "office_work"].iter().map(|s| s.to_string()).collect()
    }

    fn event(name: &str, p: f64) -> SoundEvent {
        SoundEvent {
            class_name: name.into(),
            probability: p,
            reduced_class: name.into(),
        }
    }

    #[test]
    fn degenerate_prompt_is_preamble_and_estimate() {
        let ctx = PromptContext {
            sound_events: vec![],
            motion_class: None,
            preliminary_scenario: ("cooking".into(), 0.4),
            category_list: cats(),
        };
        let p = build_prompt(&ctx).unwrap();
        let lines: Vec<&str> = p.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].contains("categories: cooking, cleaning, office_work. Your output"));
        assert_eq!(lines[1], "the preliminary scenario estimation is cooking, 0.40.");
    }

    #[test]
    fn templates() {
        let ctx = PromptContext {
            sound_events: vec![
                TaggedEvent {
                    event: event("clapping", 0.9),
                    tag: SpatialTag::Near,
                },
                TaggedEvent {
                    event: event("music", 0.6),
                    tag: SpatialTag::Far(Direction::Back),
                },
            ],
            motion_class: Some("walking".into()),
            preliminary_scenario: ("cleaning".into(), 0.123),
            category_list: cats(),
        };
        let p = build_prompt(&ctx).unwrap();
        assert!(p.contains("the clapping is happening in the near front of the user"));
        assert!(p.contains("the music is happening in the back."));
        assert!(p.contains("\nthe detected motion is walking.\n"));
        assert!(p.ends_with("estimation is cleaning, 0.12."));
        assert!(ctx.has_mixed_field());
        assert_eq!(p, build_prompt(&ctx).unwrap());
        assert!(build_prompt(&PromptContext {
            category_list: vec![],
            ..ctx
        })
        .is_err());
    }

    #[test]
    fn gate_is_strict() {
        assert!(should_query(0.4, 0.5).unwrap());
        assert!(!should_query(0.6, 0.5).unwrap());
        assert!(!should_query(0.5, 0.5).unwrap());
        assert!(should_query(1.5, 0.5).is_err());
        assert!(should_query(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn response_parsing() {
        let c = cats();
        assert_eq!(parse_llm_response("Cooking", &c).unwrap(), "cooking");
        assert_eq!(parse_llm_response("  cleaning \nbecause water", &c).unwrap(), "cleaning");
        assert_eq!(parse_llm_response("Office work", &c).unwrap(), "office_work");
        assert!(parse_llm_response("I think maybe cooking", &c).is_err());
        assert!(parse_llm_response("", &c).is_err());
    }
}
