//! Ablation suites: activity recognition by token set and scenario
//! recognition by pipeline stage. Tables are written as CSV plus an SVG bar
//! chart.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::collab::{collab_run, CollabItem, CollabReport, EvidenceTools};
use super::config::EgologConfig;
use super::experiments::{
    har_accuracy, random_accuracy, scenario_f1, train_har, train_temporal, ScenarioData,
};
use super::world::ACTIVITIES;
use crate::error::{Error, Result};
use crate::har::{HarSample, TokenSet};
use crate::llm_collab::{LlmClient, PseudoLabelStore};
use crate::temporal::{Aggregator, TemporalModel, WINDOW_SECONDS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub suite: String,
    pub metric: String,
    pub rows: Vec<AblationRow>,
}

const CSV_HEADER: [&str; 4] = ["suite", "row", "metric", "value"];

impl AblationTable {
    pub fn new(suite: &str, metric: &str) -> Self {
        Self {
            suite: suite.to_string(),
            metric: metric.to_string(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, value: f64) {
        self.rows.push(AblationRow {
            name: name.to_string(),
            value,
        });
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.name == name).map(|r| r.value)
    }

    /// Values use the shortest representation that parses back exactly.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([self.suite.as_str(), r.name.as_str(), self.metric.as_str(), &format!("{}", r.value)])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        if r.headers()?.iter().collect::<Vec<_>>() != CSV_HEADER {
            return Err(Error::invalid(format!("ablation csv must start with {}", CSV_HEADER.join(","))));
        }
        let mut table: Option<Self> = None;
        for rec in r.records() {
            let rec = rec?;
            let value: f64 = rec[3].parse().map_err(|e| Error::invalid(format!("bad value {:?}: {e}", &rec[3])))?;
            let t = table.get_or_insert_with(|| Self::new(&rec[0], &rec[2]));
            if t.suite != rec[0] || t.metric != rec[2] {
                return Err(Error::invalid("ablation csv mixes suites or metrics"));
            }
            t.push(&rec[1], value);
        }
        table.ok_or(Error::Empty("ablation csv"))
    }

    /// Horizontal bar chart, one bar per row, values in [0, 1].
    pub fn to_svg(&self) -> String {
        let (label_w, bar_w, row_h) = (150.0, 360.0, 28.0);
        let height = 50.0 + row_h * self.rows.len() as f64;
        let width = label_w + bar_w + 70.0;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="13">"#
        );
        let _ = writeln!(
            s,
            r#"<text x="10" y="22" font-weight="bold">{} ({})</text>"#,
            xml_escape(&self.suite),
            xml_escape(&self.metric)
        );
        for (i, r) in self.rows.iter().enumerate() {
            let y = 36.0 + row_h * i as f64;
            let w = bar_w * r.value.clamp(0.0, 1.0);
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                label_w - 8.0,
                y + 15.0,
                xml_escape(&r.name)
            );
            let _ = writeln!(s, r##"<rect x="{label_w}" y="{y}" width="{w:.1}" height="20" fill="#4c78a8"/>"##);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{}">{:.3}</text>"#, label_w + w + 6.0, y + 15.0, r.value);
        }
        s.push_str("</svg>\n");
        s
    }
}

pub(crate) fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Activity suite: random, audio only, IMU only, audio + IMU, and audio +
/// IMU + scenario token. Accuracy on `test`.
pub fn activity_ablation(cfg: &EgologConfig, train: &[HarSample], test: &[HarSample]) -> Result<AblationTable> {
    let mut table = AblationTable::new("activity", "accuracy");
    table.push("random", random_accuracy(test, ACTIVITIES.len(), cfg.seed)?);
    for (name, set) in [
        ("unimodal-audio", TokenSet::AUDIO),
        ("unimodal-imu", TokenSet::IMU),
        ("multimodal", TokenSet::MULTIMODAL),
        ("+scenario", TokenSet::WITH_SCENARIO),
    ] {
        let model = train_har(cfg, train, set)?;
        let acc = har_accuracy(&model, test, set)?;
        log::info!("activity ablation {name}: {acc:.4}");
        table.push(name, acc);
    }
    Ok(table)
}

/// Scenario suite on the drift test split, F1:
/// `multimodal` untrained encoders with order-free pooling;
/// `+contrastive` aligned encoders, same pooling;
/// `+sequence` aligned encoders with the recurrent aggregator;
/// `+LLM feedback` the same model after one collaborative fine-tune on the
/// drift pool.
pub fn scenario_ablation(
    cfg: &EgologConfig,
    data: &ScenarioData,
    tools: &EvidenceTools<'_>,
    client: &dyn LlmClient,
) -> Result<ScenarioAblation> {
    let mut table = AblationTable::new("scenario", "f1");
    for (name, aggregator, contrastive) in [
        ("multimodal", Aggregator::MeanPool, false),
        ("+contrastive", Aggregator::MeanPool, true),
    ] {
        let model = train_temporal(cfg, &data.train, aggregator, contrastive)?;
        let f1 = scenario_f1(&model, &data.drift_test.embed(&model)?, None)?;
        log::info!("scenario ablation {name}: {f1:.4}");
        table.push(name, f1);
    }
    let sequence_model = train_temporal(cfg, &data.train, Aggregator::Recurrent, true)?;
    let test = data.drift_test.embed(&sequence_model)?;
    table.push("+sequence", scenario_f1(&sequence_model, &test, None)?);
    let mut refined_model = sequence_model.try_clone()?;
    let (report, _) = feedback_round(cfg, &mut refined_model, data, tools, client, &PseudoLabelStore::in_memory())?;
    table.push("+LLM feedback", scenario_f1(&refined_model, &test, None)?);
    Ok(ScenarioAblation {
        table,
        report,
        sequence_model,
        refined_model,
    })
}

pub struct ScenarioAblation {
    pub table: AblationTable,
    pub report: CollabReport,
    /// The `+sequence` model.
    pub sequence_model: TemporalModel,
    /// The same model after the feedback round.
    pub refined_model: TemporalModel,
}

/// One collaborative round over the drift pool, validated on the drift
/// validation split.
pub fn feedback_round(
    cfg: &EgologConfig,
    model: &mut TemporalModel,
    data: &ScenarioData,
    tools: &EvidenceTools<'_>,
    client: &dyn LlmClient,
    store: &PseudoLabelStore,
) -> Result<(CollabReport, HashMap<String, String>)> {
    let pool = data.drift_pool.embed(model)?;
    let val = data.drift_val.embed(model)?;
    let seq_seconds = cfg.drift.windows as f64 * WINDOW_SECONDS;
    let items: Vec<CollabItem<'_>> = pool
        .iter()
        .enumerate()
        .map(|(i, s)| CollabItem {
            id: data.drift_pool.ids[i].clone(),
            sequence: &data.drift_pool.sequences[i],
            features: &s.windows,
            start_time: i as f64 * seq_seconds,
        })
        .collect();
    let (report, outcome) = collab_run(model, &items, &val, &cfg.drift_world, tools, client, store, &cfg.llm.collab)?;
    Ok((report, outcome.labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_exactly() {
        let mut t = AblationTable::new("activity", "accuracy");
        t.push("random", 1.0 / 12.0);
        t.push("+scenario", 0.1 + 0.2);
        t.push("with, comma", 1.0);
        let back = AblationTable::from_csv(&t.to_csv().unwrap()).unwrap();
        assert_eq!(back, t);
        assert!(AblationTable::from_csv("suite,row,metric,value\n").is_err());
        assert!(AblationTable::from_csv("a,b\n").is_err());
        let svg = t.to_svg();
        assert!(svg.starts_with("<svg") && svg.contains("+scenario") && svg.contains("with, comma"));
    }
}
