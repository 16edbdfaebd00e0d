//! The CLI verbs as library calls. Everything lives under a workspace root:
//!
//! ```text
//! <root>/corpus/manifest.json, audio/, imu/, scenes/   written by `generate`
//! <root>/models/<name>.ckpt                            written by `train`
//! <root>/reports/                                      metrics, tables, figures
//! ```

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::ablation::{activity_ablation, feedback_round, scenario_ablation, AblationTable};
use super::collab::{CollabReport, EvidenceTools};
use super::config::EgologConfig;
use super::corpus::{generate_corpus, sub_seed, DatasetManifest, Split, MANIFEST_FILE};
use super::daily::{plan_day, prediction_stream};
use super::experiments::{
    har_accuracy, horizon_f1, llm_client, load_har_samples, scenario_f1, spatial_accuracy, train_encoders, train_har,
    train_sequence_stage, train_spatial, ScenarioData, ScenarioSet, SpatialData,
};
use super::report::{generate_daily_log, DailyLogReport};
use super::world::{activity_names, scenario_names};
use crate::error::{Error, Result};
use crate::har::{HarModel, TokenSet};
use crate::llm_collab::{EventClassifier, MotionClassifier, OntologyMap, PseudoLabelStore};
use crate::spatial::SpatialModel;
use crate::temporal::{Aggregator, TemporalModel};

pub const MODELS_DIR: &str = "models";
pub const REPORTS_DIR: &str = "reports";

/// Sub-seed of the synthetic day rendered by `daily-log`.
const DAY_PART: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainTarget {
    /// Contrastive audio and IMU encoders.
    Temporal,
    /// Sequence aggregator and scenario head on the saved encoders.
    Scenario,
    /// Audio-only and motion-compensated localisers.
    Spatial,
    /// Scenario-conditioned activity recogniser.
    Har,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Activity,
    Scenario,
}

impl Suite {
    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Activity => "activity",
            Suite::Scenario => "scenario",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn model(&self, name: &str) -> PathBuf {
        self.root.join(MODELS_DIR).join(format!("{name}.ckpt"))
    }

    pub fn report(&self, file: &str) -> PathBuf {
        self.root.join(REPORTS_DIR).join(file)
    }

    /// Loads and validates the manifest; fails before any training if a
    /// file is missing or a window's durations disagree.
    pub fn manifest(&self) -> Result<DatasetManifest> {
        let path = self.root.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(Error::invalid(format!("{} not found; run `generate` first", path.display())));
        }
        DatasetManifest::load(&path, &self.root)
    }

    fn ensure_dirs(&self) -> Result<()> {
        for d in [MODELS_DIR, REPORTS_DIR] {
            let p = self.root.join(d);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }

    fn require(&self, name: &str, producer: &str) -> Result<PathBuf> {
        let p = self.model(name);
        if !p.exists() {
            return Err(Error::invalid(format!("{} not found; run `{producer}` first", p.display())));
        }
        Ok(p)
    }

    fn write(&self, file: &str, contents: &str) -> Result<PathBuf> {
        self.ensure_dirs()?;
        let p = self.report(file);
        std::fs::write(&p, contents).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }
}

pub fn generate(ws: &Workspace, cfg: &EgologConfig) -> Result<DatasetManifest> {
    generate_corpus(cfg, cfg.seed, &ws.root)
}

/// Trains `target` from the workspace corpus and returns the checkpoints
/// written.
pub fn train(ws: &Workspace, cfg: &EgologConfig, target: TrainTarget) -> Result<Vec<PathBuf>> {
    let manifest = ws.manifest()?;
    ws.ensure_dirs()?;
    match target {
        TrainTarget::Temporal => {
            let data = ScenarioData::load(&manifest, &ws.root, cfg)?;
            let model = train_encoders(cfg, &data.train, Aggregator::Recurrent, true)?;
            let p = ws.model("temporal");
            model.save(&p)?;
            Ok(vec![p])
        }
        TrainTarget::Scenario => {
            let mut model = TemporalModel::load(&ws.require("temporal", "train temporal")?)?;
            let data = ScenarioData::load(&manifest, &ws.root, cfg)?;
            train_sequence_stage(cfg, &mut model, &data.train)?;
            let p = ws.model("scenario");
            model.save(&p)?;
            Ok(vec![p])
        }
        TrainTarget::Spatial => {
            let data = SpatialData::load(&manifest, &ws.root, cfg)?;
            let mut out = Vec::new();
            for (name, compensated) in [("spatial-audio", false), ("spatial-compensated", true)] {
                let model = train_spatial(cfg, &data.train, compensated)?;
                let p = ws.model(name);
                model.save(&p)?;
                out.push(p);
            }
            Ok(out)
        }
        TrainTarget::Har => {
            let train = load_har_samples(&manifest, &ws.root, cfg, Split::Train)?;
            let model = train_har(cfg, &train, TokenSet::WITH_SCENARIO)?;
            let p = ws.model("har");
            model.save(&p)?;
            Ok(vec![p])
        }
    }
}

/// Named scalar results, written as `metric,value` CSV.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub rows: Vec<(String, f64)>,
}

impl Metrics {
    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        self.rows.push((name.into(), value));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.rows.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "value"])?;
        for (n, v) in &self.rows {
            w.write_record([n.as_str(), &format!("{v}")])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut m = Self::default();
        for rec in r.records() {
            let rec = rec?;
            let v: f64 = rec[1].parse().map_err(|e| Error::invalid(format!("bad value {:?}: {e}", &rec[1])))?;
            m.push(&rec[0], v);
        }
        Ok(m)
    }
}

/// Evaluates every trained checkpoint on the test splits and writes
/// `reports/metrics.csv`. Missing checkpoints are skipped; none at all is an
/// error.
pub fn eval(ws: &Workspace, cfg: &EgologConfig) -> Result<Metrics> {
    let manifest = ws.manifest()?;
    let mut m = Metrics::default();
    if ws.model("scenario").exists() {
        let model = TemporalModel::load(&ws.model("scenario"))?;
        let data = ScenarioData::load(&manifest, &ws.root, cfg)?;
        if !data.test.is_empty() {
            let test = data.test.embed(&model)?;
            m.push("scenario_f1", scenario_f1(&model, &test, None)?);
            for (h, f1) in horizon_f1(&model, &test, &[5.0, 30.0])? {
                m.push(format!("scenario_f1_{h}s"), f1);
            }
        }
        if !data.drift_test.is_empty() {
            m.push("drift_f1", scenario_f1(&model, &data.drift_test.embed(&model)?, None)?);
        }
    }
    if ws.model("spatial-audio").exists() && ws.model("spatial-compensated").exists() {
        let data = SpatialData::load(&manifest, &ws.root, cfg)?;
        for (name, file) in [("audio_only", "spatial-audio"), ("compensated", "spatial-compensated")] {
            let model = SpatialModel::load(&ws.model(file))?;
            if !data.static_test.is_empty() {
                m.push(format!("spatial_static_{name}"), spatial_accuracy(&model, &data.static_test)?);
            }
            if !data.moving_test.is_empty() {
                m.push(format!("spatial_moving_{name}"), spatial_accuracy(&model, &data.moving_test)?);
            }
        }
    }
    if ws.model("har").exists() {
        let model = HarModel::load(&ws.model("har"))?;
        let test = load_har_samples(&manifest, &ws.root, cfg, Split::Test)?;
        if !test.is_empty() {
            m.push("activity_accuracy", har_accuracy(&model, &test, TokenSet::WITH_SCENARIO)?);
            m.push("activity_accuracy_no_scenario", har_accuracy(&model, &test, TokenSet::MULTIMODAL)?);
        }
    }
    if m.rows.is_empty() {
        return Err(Error::invalid("nothing to evaluate; train a model first"));
    }
    ws.write("metrics.csv", &m.to_csv()?)?;
    Ok(m)
}

/// Event and motion classifiers for prompt evidence, trained once and cached
/// in the workspace.
fn evidence_models(ws: &Workspace, cfg: &EgologConfig) -> Result<(EventClassifier, MotionClassifier)> {
    ws.ensure_dirs()?;
    let ev = ws.model("events");
    let events = if ev.exists() {
        EventClassifier::load(&ev)?
    } else {
        let m = EventClassifier::trained_default(&cfg.events)?;
        m.save(&ev)?;
        m
    };
    let mo = ws.model("motion");
    let motion = if mo.exists() {
        MotionClassifier::load(&mo)?
    } else {
        let m = MotionClassifier::trained_default(&cfg.motion)?;
        m.save(&mo)?;
        m
    };
    Ok((events, motion))
}

fn oracle_labels(set: &ScenarioSet) -> HashMap<String, String> {
    (0..set.len())
        .map(|i| (set.ids[i].clone(), set.labels(i).first().cloned().unwrap_or_default()))
        .collect()
}

/// Runs one suite, trains in-run, and writes `reports/ablation-<suite>.csv`
/// and `.svg`.
pub fn ablate(ws: &Workspace, cfg: &EgologConfig, suite: Suite) -> Result<AblationTable> {
    let manifest = ws.manifest()?;
    let table = match suite {
        Suite::Activity => {
            let train = load_har_samples(&manifest, &ws.root, cfg, Split::Train)?;
            let test = load_har_samples(&manifest, &ws.root, cfg, Split::Test)?;
            activity_ablation(cfg, &train, &test)?
        }
        Suite::Scenario => {
            let data = ScenarioData::load(&manifest, &ws.root, cfg)?;
            let (events, motion) = evidence_models(ws, cfg)?;
            let ontology = OntologyMap::shipped();
            let tools = EvidenceTools {
                events: &events,
                motion: &motion,
                ontology: &ontology,
            };
            let client = llm_client(cfg, || oracle_labels(&data.drift_pool))?;
            scenario_ablation(cfg, &data, &tools, client.as_ref())?.table
        }
    };
    let stem = format!("ablation-{}", suite.as_str());
    ws.write(&format!("{stem}.csv"), &table.to_csv()?)?;
    ws.write(&format!("{stem}.svg"), &table.to_svg())?;
    Ok(table)
}

/// One collaborative round over the drift pool with the trained scenario
/// model. Appends to `reports/pseudo_labels.ndjson`, writes
/// `reports/collab.json` and the refined model `models/scenario-collab.ckpt`.
pub fn collab(ws: &Workspace, cfg: &EgologConfig) -> Result<CollabReport> {
    let manifest = ws.manifest()?;
    let mut model = TemporalModel::load(&ws.require("scenario", "train scenario")?)?;
    let data = ScenarioData::load(&manifest, &ws.root, cfg)?;
    if data.drift_pool.is_empty() {
        return Err(Error::Empty("drift pool"));
    }
    let (events, motion) = evidence_models(ws, cfg)?;
    let ontology = OntologyMap::shipped();
    let tools = EvidenceTools {
        events: &events,
        motion: &motion,
        ontology: &ontology,
    };
    let client = llm_client(cfg, || oracle_labels(&data.drift_pool))?;
    let store = PseudoLabelStore::open(&ws.report("pseudo_labels.ndjson"))?;
    let (report, _) = feedback_round(cfg, &mut model, &data, &tools, client.as_ref(), &store)?;
    model.save(&ws.model("scenario-collab"))?;
    ws.write("collab.json", &serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

/// Renders a synthetic day, runs the trained scenario and activity models
/// over it and writes `reports/daily_log.json` and `.svg`.
pub fn daily_log(ws: &Workspace, cfg: &EgologConfig) -> Result<DailyLogReport> {
    let scenario = TemporalModel::load(&ws.require("scenario", "train scenario")?)?;
    let har = HarModel::load(&ws.require("har", "train har")?)?;
    let s = &cfg.daily_log;
    let day = plan_day(s, &cfg.sequence, sub_seed(cfg.seed, DAY_PART))?;
    let stream = prediction_stream(&day, s, &cfg.world, &cfg.features, &scenario, &har)?;
    let report = generate_daily_log(&stream, &scenario_names(), &activity_names(), s.horizon_minutes, s.step_minutes)?;
    ws.write("daily_log.json", &serde_json::to_string_pretty(&report)?)?;
    ws.write("daily_log.svg", &report.to_svg())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_csv_round_trips() {
        let mut m = Metrics::default();
        m.push("scenario_f1", 0.1 + 0.2);
        m.push("activity_accuracy", 2.0 / 3.0);
        assert_eq!(Metrics::from_csv(&m.to_csv().unwrap()).unwrap(), m);
        assert_eq!(m.get("activity_accuracy"), Some(2.0 / 3.0));
    }
}
