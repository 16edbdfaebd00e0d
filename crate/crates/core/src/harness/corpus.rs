//! On-disk corpora: the dataset manifest, `generate_corpus`, validation and
//! loaders back into the in-memory experiment types.
//!
//! Layout under the workspace root:
//!
//! ```text
//! corpus/manifest.json
//! corpus/audio/<id>.wav     16-bit PCM
//! corpus/imu/<id>.csv       timestamp, ax, ay, az, gx, gy, gz
//! corpus/scenes/<id>.json   spatial scene plans (trajectory reference)
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::EgologConfig;
use super::har::{har_plans, HarPlan};
use super::scenario::{scenario_sequences, ScenarioSequence};
use super::spatial::{mirror_pair_plans, rotating_plans, spatial_sample, static_plans, FrameAnnotation, SpatialScenePlan};
use super::world::{scenario_index, SequencePlan, WindowContent, ACTIVITIES, SCENARIOS};
use crate::error::{Error, Result};
use crate::signals::io::{read_imu_csv, read_wav, write_imu_csv, write_wav};
use crate::signals::{AudioClip, FeatureConfig, ImuSequence, SensorWindow};
use crate::spatial::SpatialSample;
use crate::temporal::WINDOW_SECONDS;

pub const CORPUS_DIR: &str = "corpus";
pub const MANIFEST_FILE: &str = "corpus/manifest.json";
const MANIFEST_VERSION: u32 = 1;

/// Per-part seeds derived from the corpus seed. In-memory experiments use the
/// same derivation, so they see exactly the windows `generate` writes.
pub mod part {
    pub const SCENARIO_TRAIN: u64 = 1;
    pub const SCENARIO_TEST: u64 = 2;
    pub const DRIFT_POOL: u64 = 3;
    pub const DRIFT_VAL: u64 = 4;
    pub const DRIFT_TEST: u64 = 5;
    pub const HAR_TRAIN: u64 = 6;
    pub const HAR_TEST: u64 = 7;
    pub const SPATIAL_STATIC_TRAIN: u64 = 8;
    pub const SPATIAL_MOVING_TRAIN: u64 = 9;
    pub const SPATIAL_STATIC_TEST: u64 = 10;
    pub const SPATIAL_MOVING_TEST: u64 = 11;
}

pub fn sub_seed(seed: u64, part: u64) -> u64 {
    seed.wrapping_mul(1000).wrapping_add(part)
}

/// Id of sequence `i` in a scenario or drift corpus.
pub fn sequence_id(kind: CorpusKind, split: Split, i: usize) -> String {
    let prefix = match kind {
        CorpusKind::Drift => "drift",
        _ => "scn",
    };
    format!("{prefix}-{}-{i:04}", split.as_str())
}

/// Audio and IMU files of one window, relative to the workspace root once
/// stored in a manifest and absolute once loaded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowFiles {
    pub audio: PathBuf,
    pub imu: PathBuf,
}

impl WindowFiles {
    pub fn load(&self) -> Result<SensorWindow> {
        SensorWindow::new(read_wav(&self.audio)?, read_imu_csv(&self.imu)?, 0.0)
    }

    fn under(&self, root: &Path) -> Self {
        Self {
            audio: root.join(&self.audio),
            imu: root.join(&self.imu),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusKind {
    /// Scenario sequences with regular key frames.
    Scenario,
    /// Scenario sequences with sparse key frames; the train split is the
    /// unlabelled pool offered to the LLM.
    Drift,
    /// Single 5 s activity windows.
    Har,
    /// Binaural localization windows.
    Spatial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceRef {
    pub id: String,
    pub index: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialRef {
    /// Scene plan the window was rendered from.
    pub trajectory: PathBuf,
    pub moving: bool,
    pub frames: FrameAnnotation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub kind: CorpusKind,
    pub split: Split,
    pub audio: PathBuf,
    pub imu: PathBuf,
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activity: Option<String>,
    #[serde(default)]
    pub scenarios: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial: Option<SpatialRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<SequenceRef>,
    /// What the synthetic window contains; scenario corpora only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<WindowContent>,
    pub seed: u64,
}

impl ManifestEntry {
    pub fn files(&self) -> WindowFiles {
        WindowFiles {
            audio: self.audio.clone(),
            imu: self.imu.clone(),
        }
    }

    /// Grouping key for split disjointness: sequences move as a whole.
    fn group(&self) -> String {
        match &self.sequence {
            Some(s) => format!("{:?}/{}", self.kind, s.id),
            None => format!("{:?}/{}", self.kind, self.id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn empty(seed: u64) -> Self {
        Self {
            version: MANIFEST_VERSION,
            seed,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// Loads and validates against `root`.
    pub fn load(path: &Path, root: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        m.validate(root)?;
        Ok(m)
    }

    pub fn select(&self, kind: CorpusKind, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.kind == kind && e.split == split)
    }

    /// Ids unique, files present, no sequence or window in two splits, and
    /// audio and IMU durations agreeing to within one IMU sample.
    pub fn validate(&self, root: &Path) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::invalid(format!("unsupported manifest version {}", self.version)));
        }
        let mut ids = HashSet::new();
        let mut groups: HashMap<String, Split> = HashMap::new();
        for e in &self.entries {
            if !ids.insert(e.id.as_str()) {
                return Err(Error::invalid(format!("duplicate window id {}", e.id)));
            }
            if let Some(prev) = groups.insert(e.group(), e.split) {
                if prev != e.split {
                    return Err(Error::invalid(format!(
                        "{} appears in both the {} and {} splits",
                        e.group(),
                        prev.as_str(),
                        e.split.as_str()
                    )));
                }
            }
        }
        self.entries.par_iter().try_for_each(|e| check_files(e, root))
    }
}

fn check_files(e: &ManifestEntry, root: &Path) -> Result<()> {
    let audio = root.join(&e.audio);
    let imu = root.join(&e.imu);
    for p in [&audio, &imu] {
        if !p.is_file() {
            return Err(Error::invalid(format!("{}: missing file {}", e.id, p.display())));
        }
    }
    if let Some(s) = &e.spatial {
        let t = root.join(&s.trajectory);
        if !t.is_file() {
            return Err(Error::invalid(format!("{}: missing file {}", e.id, t.display())));
        }
    }
    let reader = hound::WavReader::open(&audio)?;
    let spec = reader.spec();
    let audio_s = f64::from(reader.duration()) / f64::from(spec.sample_rate);
    let imu_seq = read_imu_csv(&imu)?;
    let imu_s = imu_seq.frames() as f64 / f64::from(imu_seq.sample_rate());
    let tol = 1.0 / f64::from(imu_seq.sample_rate()) + 1.0 / f64::from(spec.sample_rate);
    if (audio_s - imu_s).abs() > tol {
        return Err(Error::invalid(format!(
            "{}: audio lasts {audio_s:.4} s but IMU {imu_s:.4} s",
            e.id
        )));
    }
    Ok(())
}

/// One window to be written, before it is rendered.
enum Job {
    Scenario {
        seq: ScenarioSequence,
        k: usize,
    },
    Har(HarPlan),
    Spatial(SpatialScenePlan),
}

struct Pending {
    entry: ManifestEntry,
    job: Job,
}

fn rel(dir: &str, id: &str, ext: &str) -> PathBuf {
    Path::new(CORPUS_DIR).join(dir).join(format!("{id}.{ext}"))
}

fn pending(id: String, kind: CorpusKind, split: Split, duration: f64, seed: u64, job: Job) -> Pending {
    Pending {
        entry: ManifestEntry {
            audio: rel("audio", &id, "wav"),
            imu: rel("imu", &id, "csv"),
            id,
            kind,
            split,
            duration,
            activity: None,
            scenarios: Vec::new(),
            spatial: None,
            sequence: None,
            content: None,
            seed,
        },
        job,
    }
}

fn sequence_jobs(out: &mut Vec<Pending>, kind: CorpusKind, split: Split, seqs: Vec<ScenarioSequence>) {
    for (i, seq) in seqs.into_iter().enumerate() {
        let seq_id = sequence_id(kind, split, i);
        for k in 0..seq.len() {
            let mut p = pending(
                format!("{seq_id}-{k:02}"),
                kind,
                split,
                WINDOW_SECONDS,
                seq.seeds[k],
                Job::Scenario { seq: seq.clone(), k },
            );
            let content = seq.plan.windows[k];
            p.entry.scenarios = seq.plan.window_scenarios[k].iter().map(|c| SCENARIOS[*c].to_string()).collect();
            if let WindowContent::Activity { activity } = content {
                p.entry.activity = Some(ACTIVITIES[activity].name.to_string());
            }
            p.entry.content = Some(content);
            p.entry.sequence = Some(SequenceRef {
                id: seq_id.clone(),
                index: k,
                length: seq.len(),
            });
            out.push(p);
        }
    }
}

/// Renders every corpus named by `config` and writes it under `root`.
/// Deterministic per seed: the same inputs give byte-identical files.
pub fn generate_corpus(config: &EgologConfig, seed: u64, root: &Path) -> Result<DatasetManifest> {
    for dir in ["audio", "imu", "scenes"] {
        let d = root.join(CORPUS_DIR).join(dir);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let c = &config.corpus;
    let sub = |k: u64| sub_seed(seed, k);
    use part::*;
    let mut jobs = Vec::new();
    for (split, n, k) in [(Split::Train, c.scenario_train, SCENARIO_TRAIN), (Split::Test, c.scenario_test, SCENARIO_TEST)] {
        sequence_jobs(&mut jobs, CorpusKind::Scenario, split, scenario_sequences(n, &config.sequence, sub(k)));
    }
    for (split, n, k) in [(Split::Train, c.drift_pool, DRIFT_POOL), (Split::Val, c.drift_val, DRIFT_VAL), (Split::Test, c.drift_test, DRIFT_TEST)] {
        sequence_jobs(&mut jobs, CorpusKind::Drift, split, scenario_sequences(n, &config.drift, sub(k)));
    }
    for (split, n, k) in [(Split::Train, c.har_train_per_class, HAR_TRAIN), (Split::Test, c.har_test_per_class, HAR_TEST)] {
        for (i, plan) in har_plans(n, sub(k)).into_iter().enumerate() {
            let mut p = pending(
                format!("har-{}-{i:04}", split.as_str()),
                CorpusKind::Har,
                split,
                crate::har::HAR_WINDOW_SECONDS,
                plan.seed,
                Job::Har(plan.clone()),
            );
            p.entry.activity = Some(ACTIVITIES[plan.activity].name.to_string());
            p.entry.scenarios = vec![plan.scenario().to_string()];
            jobs.push(p);
        }
    }
    let sc = &config.spatial_corpus;
    let spatial_sets = [
        (Split::Train, false, static_plans(c.spatial_static_train, sc, sub(SPATIAL_STATIC_TRAIN))),
        (Split::Train, true, rotating_plans(c.spatial_moving_train, sc, sub(SPATIAL_MOVING_TRAIN))),
        (Split::Test, false, mirror_pair_plans(c.spatial_static_test_pairs, sc, sub(SPATIAL_STATIC_TEST))),
        (Split::Test, true, rotating_plans(c.spatial_moving_test, sc, sub(SPATIAL_MOVING_TEST))),
    ];
    for (split, moving, plans) in spatial_sets {
        let tag = if moving { "moving" } else { "static" };
        for (i, plan) in plans.into_iter().enumerate() {
            let id = format!("sp-{tag}-{}-{i:04}", split.as_str());
            let mut p = pending(id.clone(), CorpusKind::Spatial, split, sc.duration, plan.seed, Job::Spatial(plan));
            p.entry.spatial = Some(SpatialRef {
                trajectory: rel("scenes", &id, "json"),
                moving,
                frames: FrameAnnotation {
                    labels: Vec::new(),
                    mask: Vec::new(),
                },
            });
            jobs.push(p);
        }
    }

    let entries: Vec<ManifestEntry> = jobs
        .into_par_iter()
        .map(|p| write_window(p, config, root))
        .collect::<Result<_>>()?;
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        seed,
        entries,
    };
    manifest.save(&root.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn write_window(p: Pending, config: &EgologConfig, root: &Path) -> Result<ManifestEntry> {
    let Pending { mut entry, job } = p;
    let (audio, imu): (AudioClip, ImuSequence) = match job {
        Job::Scenario { seq, k } => {
            let w = seq.window(k, config.world_for(entry.kind))?;
            (w.audio, w.imu)
        }
        Job::Har(plan) => {
            let w = plan.window(&config.world)?;
            (w.audio, w.imu)
        }
        Job::Spatial(plan) => {
            let (audio, imu, frames) = plan.render_window(&config.spatial_corpus, &config.features)?;
            let spatial = entry.spatial.as_mut().expect("spatial job has a spatial ref");
            spatial.frames = frames;
            let path = root.join(&spatial.trajectory);
            std::fs::write(&path, serde_json::to_string_pretty(&plan)?).map_err(|e| Error::io(&path, e))?;
            (audio, imu)
        }
    };
    write_wav(&root.join(&entry.audio), &audio)?;
    write_imu_csv(&root.join(&entry.imu), &imu)?;
    Ok(entry)
}

/// Scenario sequences of one kind and split, read from disk.
pub fn load_sequences(
    manifest: &DatasetManifest,
    root: &Path,
    kind: CorpusKind,
    split: Split,
) -> Result<Vec<(String, ScenarioSequence)>> {
    let mut groups: BTreeMap<String, Vec<&ManifestEntry>> = BTreeMap::new();
    for e in manifest.select(kind, split) {
        let s = e
            .sequence
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("{}: scenario window without a sequence", e.id)))?;
        groups.entry(s.id.clone()).or_default().push(e);
    }
    groups
        .into_iter()
        .map(|(id, mut entries)| {
            entries.sort_by_key(|e| e.sequence.as_ref().map(|s| s.index));
            let n = entries.len();
            if entries.iter().enumerate().any(|(k, e)| e.sequence.as_ref().is_none_or(|s| s.index != k || s.length != n)) {
                return Err(Error::invalid(format!("sequence {id} has missing or extra windows")));
            }
            let mut plan = SequencePlan {
                windows: Vec::with_capacity(n),
                window_scenarios: Vec::with_capacity(n),
            };
            for e in &entries {
                plan.windows.push(e.content.ok_or_else(|| Error::invalid(format!("{}: missing content", e.id)))?);
                let labels = e
                    .scenarios
                    .iter()
                    .map(|s| scenario_index(s).ok_or_else(|| Error::invalid(format!("{}: unknown scenario {s}", e.id))))
                    .collect::<Result<Vec<_>>>()?;
                plan.window_scenarios.push(labels);
            }
            let seq = ScenarioSequence {
                plan,
                seeds: entries.iter().map(|e| e.seed).collect(),
                files: Some(entries.iter().map(|e| e.files().under(root)).collect()),
            };
            Ok((id, seq))
        })
        .collect()
}

pub fn load_har_plans(manifest: &DatasetManifest, root: &Path, split: Split) -> Result<Vec<HarPlan>> {
    manifest
        .select(CorpusKind::Har, split)
        .map(|e| {
            let name = e.activity.as_deref().unwrap_or_default();
            let activity = ACTIVITIES
                .iter()
                .position(|a| a.name == name)
                .ok_or_else(|| Error::invalid(format!("{}: unknown activity {name:?}", e.id)))?;
            Ok(HarPlan {
                activity,
                seed: e.seed,
                files: Some(e.files().under(root)),
            })
        })
        .collect()
}

/// Spatial samples of one split; `moving` selects static or rotating scenes.
pub fn load_spatial_samples(
    manifest: &DatasetManifest,
    root: &Path,
    split: Split,
    moving: Option<bool>,
    features: &FeatureConfig,
) -> Result<Vec<SpatialSample>> {
    let entries: Vec<&ManifestEntry> = manifest
        .select(CorpusKind::Spatial, split)
        .filter(|e| e.spatial.as_ref().is_some_and(|s| moving.is_none_or(|m| m == s.moving)))
        .collect();
    entries
        .par_iter()
        .map(|e| {
            let w = e.files().under(root).load()?;
            let s = e.spatial.as_ref().expect("filtered on spatial");
            spatial_sample(&w.audio, &w.imu, &s.frames, features)
        })
        .collect()
}
