//! Evaluation scenarios: trial generation (pairwise or enrollment), the
//! calibration/evaluation split, global metrics and breakdown matrices by
//! sample duration and speech task.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::embeddings::{self, EmbeddingSet, EnrollFilter, EnrollmentVector};
use crate::error::{Error, Result};
use crate::metrics::{self, GlobalMetrics, GridSpec, TippetCurve};
use crate::model::{self, label_trial, EmbeddingRecord, Manifest, ScoredTrial, Trial};
use crate::scoring::{self, CalibrationConfig, CalibrationModel, VectorLookup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Pairwise,
    Enrollment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrialScope {
    /// Session-1 known side against session-2 unknown side.
    CrossSession,
    /// Every unordered pair of distinct samples from sessions 1 and 2.
    AllSessions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    Duration,
    Task,
}

macro_rules! kebab_enum {
    ($ty:ty, $what:literal, $($variant:path => $name:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $name),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(Error::InvalidArgument(format!(concat!("unknown ", $what, " {:?}"), other))),
                }
            }
        }
    };
}

kebab_enum!(Mode, "mode", Mode::Pairwise => "pairwise", Mode::Enrollment => "enrollment");
kebab_enum!(TrialScope, "trial scope", TrialScope::CrossSession => "cross-session", TrialScope::AllSessions => "all-sessions");
kebab_enum!(Axis, "breakdown axis", Axis::Duration => "duration", Axis::Task => "task");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub split: String,
    pub speaker_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct TrialSet {
    pub trials: Vec<Trial>,
    pub exclusions: Vec<Exclusion>,
    /// Populated in enrollment mode.
    pub enrollments: Vec<EnrollmentVector>,
}

/// Records of the manifest's non-augmented session-1/2 samples, in manifest
/// order. Every manifest row must have an embedding with matching metadata.
fn manifest_samples<'a>(manifest: &Manifest, set: &'a EmbeddingSet) -> Result<Vec<&'a EmbeddingRecord>> {
    let index = set.index();
    let mut missing = Vec::new();
    let mut out = Vec::new();
    for r in &manifest.recordings {
        if r.is_augmented() || !(1..=2).contains(&r.session) {
            continue;
        }
        match index.get(r.recording_id.as_str()) {
            None => missing.push(r.recording_id.clone()),
            Some(e) => {
                if e.speaker_id != r.speaker_id || e.session != r.session {
                    return Err(Error::Validation(format!(
                        "{}: embedding metadata (speaker {}, session {}) disagrees with manifest (speaker {}, session {})",
                        r.recording_id, e.speaker_id, e.session, r.speaker_id, r.session
                    )));
                }
                out.push(*e);
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingRefs(missing));
    }
    Ok(out)
}

fn split_name(manifest: &Manifest) -> String {
    serde_json::to_value(manifest.role)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Cross-session trials for the manifest's speakers.
pub fn generate_trials(manifest: &Manifest, set: &EmbeddingSet, mode: Mode) -> Result<TrialSet> {
    generate_trials_scoped(manifest, set, mode, TrialScope::CrossSession)
}

pub fn generate_trials_scoped(
    manifest: &Manifest,
    set: &EmbeddingSet,
    mode: Mode,
    scope: TrialScope,
) -> Result<TrialSet> {
    let samples = manifest_samples(manifest, set)?;
    match (mode, scope) {
        (Mode::Pairwise, TrialScope::AllSessions) => {
            let mut trials = Vec::new();
            for (i, a) in samples.iter().enumerate() {
                for b in &samples[i + 1..] {
                    trials.push(Trial {
                        known_ref: a.sample_id.clone(),
                        unknown_ref: b.sample_id.clone(),
                        label: label_trial(&a.speaker_id, &b.speaker_id)?,
                    });
                }
            }
            Ok(TrialSet {
                trials,
                ..Default::default()
            })
        }
        (Mode::Enrollment, TrialScope::AllSessions) => Err(Error::InvalidArgument(
            "enrollment mode only supports cross-session trials".into(),
        )),
        (mode, TrialScope::CrossSession) => cross_session(manifest, &samples, mode),
    }
}

fn cross_session(manifest: &Manifest, samples: &[&EmbeddingRecord], mode: Mode) -> Result<TrialSet> {
    let mut has = HashMap::<&str, [bool; 2]>::new();
    let mut order = Vec::new();
    for s in samples {
        let e = has.entry(s.speaker_id.as_str()).or_insert_with(|| {
            order.push(s.speaker_id.as_str());
            [false; 2]
        });
        e[(s.session - 1) as usize] = true;
    }
    let split = split_name(manifest);
    let mut exclusions = Vec::new();
    let mut keep = HashSet::new();
    for spk in &order {
        let [s1, s2] = has[spk];
        if s1 && s2 {
            keep.insert(*spk);
        } else {
            let reason = if s1 {
                "no session-2 samples"
            } else {
                "no session-1 samples"
            };
            warn!(speaker = *spk, split = %split, reason, "speaker excluded from trials");
            exclusions.push(Exclusion {
                split: split.clone(),
                speaker_id: spk.to_string(),
                reason: reason.to_string(),
            });
        }
    }
    let known: Vec<&EmbeddingRecord> = samples
        .iter()
        .copied()
        .filter(|s| s.session == 1 && keep.contains(s.speaker_id.as_str()))
        .collect();
    let unknown: Vec<&EmbeddingRecord> = samples
        .iter()
        .copied()
        .filter(|s| s.session == 2 && keep.contains(s.speaker_id.as_str()))
        .collect();

    let mut out = TrialSet {
        exclusions,
        ..Default::default()
    };
    match mode {
        Mode::Pairwise => {
            for k in &known {
                for u in &unknown {
                    out.trials.push(Trial {
                        known_ref: k.sample_id.clone(),
                        unknown_ref: u.sample_id.clone(),
                        label: label_trial(&k.speaker_id, &u.speaker_id)?,
                    });
                }
            }
        }
        Mode::Enrollment => {
            let subset = EmbeddingSet {
                dim: known.first().map_or(0, |r| r.dim),
                records: known.iter().map(|r| (*r).clone()).collect(),
                source_tag: String::new(),
            };
            out.enrollments = embeddings::enroll_all(&subset, &EnrollFilter::default());
            for e in &out.enrollments {
                let known_ref = e.sample_id();
                for u in &unknown {
                    out.trials.push(Trial {
                        known_ref: known_ref.clone(),
                        unknown_ref: u.sample_id.clone(),
                        label: label_trial(&e.speaker_id, &u.speaker_id)?,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Duration and task of a sample, used as breakdown keys.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleKeys {
    pub duration_s: f64,
    pub task: u32,
}

pub fn sample_keys(set: &EmbeddingSet) -> HashMap<String, SampleKeys> {
    set.records
        .iter()
        .map(|r| {
            (
                r.sample_id.clone(),
                SampleKeys {
                    duration_s: r.duration_s,
                    task: r.task,
                },
            )
        })
        .collect()
}

/// Minimum per-cell trial counts for a cell to be reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellMinimums {
    pub so: usize,
    pub r#do: usize,
}

impl Default for CellMinimums {
    fn default() -> Self {
        CellMinimums { so: 5, r#do: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n_so: usize,
    pub n_do: usize,
    /// `None` when the cell is below the minimum populations.
    pub cllr_min: Option<f64>,
    pub eer: Option<f64>,
}

impl Cell {
    pub fn is_reported(&self) -> bool {
        self.eer.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownMatrix {
    pub axis: Axis,
    pub mode: Mode,
    pub row_keys: Vec<String>,
    pub col_keys: Vec<String>,
    pub cells: Vec<Vec<Cell>>,
    /// Trials whose refs lacked a usable key on this axis.
    pub n_unkeyed: usize,
}

pub const ENROLLED_ROW: &str = "enrolled";

fn axis_keys(axis: Axis) -> Vec<u32> {
    match axis {
        Axis::Duration => (crate::audio::MIN_CHUNK_S..=crate::audio::MAX_CHUNK_S).collect(),
        Axis::Task => (1..=3).collect(),
    }
}

fn key_of(axis: Axis, k: &SampleKeys) -> Option<u32> {
    match axis {
        Axis::Duration => {
            let d = k.duration_s.round();
            let valid = d >= crate::audio::MIN_CHUNK_S as f64 && d <= crate::audio::MAX_CHUNK_S as f64;
            valid.then_some(d as u32)
        }
        Axis::Task => (1..=3).contains(&k.task).then_some(k.task),
    }
}

/// Metrics per (known-side key, unknown-side key) cell. In enrollment mode the
/// known side has no single duration or task, so there is one row.
pub fn breakdown(
    scored: &[ScoredTrial],
    keys: &HashMap<String, SampleKeys>,
    axis: Axis,
    mode: Mode,
    mins: CellMinimums,
) -> Result<BreakdownMatrix> {
    let cols = axis_keys(axis);
    let col_index = |k: u32| cols.iter().position(|&c| c == k);
    let n_rows = match mode {
        Mode::Pairwise => cols.len(),
        Mode::Enrollment => 1,
    };
    let mut buckets: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); n_rows * cols.len()];
    let mut n_unkeyed = 0;
    for s in scored {
        let col = keys
            .get(&s.trial.unknown_ref)
            .and_then(|k| key_of(axis, k))
            .and_then(col_index);
        let row = match mode {
            Mode::Pairwise => keys
                .get(&s.trial.known_ref)
                .and_then(|k| key_of(axis, k))
                .and_then(col_index),
            Mode::Enrollment => s.trial.known_ref.starts_with(model::ENROLL_PREFIX).then_some(0),
        };
        match (row, col) {
            (Some(r), Some(c)) => {
                let b = &mut buckets[r * cols.len() + c];
                if s.is_same() {
                    b.0.push(s.score);
                } else {
                    b.1.push(s.score);
                }
            }
            _ => n_unkeyed += 1,
        }
    }
    let flat: Vec<Cell> = buckets
        .par_iter()
        .map(|(so, dso)| {
            let reported = so.len() >= mins.so.max(1) && dso.len() >= mins.r#do.max(1);
            let (cllr_min, eer) = if reported {
                (
                    Some(metrics::cllr_min_scores(so, dso).expect("both labels present")),
                    Some(metrics::eer_scores(so, dso).expect("both labels present")),
                )
            } else {
                (None, None)
            };
            Cell {
                n_so: so.len(),
                n_do: dso.len(),
                cllr_min,
                eer,
            }
        })
        .collect();
    let col_keys: Vec<String> = cols.iter().map(u32::to_string).collect();
    let row_keys = match mode {
        Mode::Pairwise => col_keys.clone(),
        Mode::Enrollment => vec![ENROLLED_ROW.to_string()],
    };
    Ok(BreakdownMatrix {
        axis,
        mode,
        row_keys,
        col_keys,
        cells: flat.chunks(cols.len()).map(<[Cell]>::to_vec).collect(),
        n_unkeyed,
    })
}

impl BreakdownMatrix {
    pub fn cell(&self, row: &str, col: &str) -> Option<&Cell> {
        let r = self.row_keys.iter().position(|k| k == row)?;
        let c = self.col_keys.iter().position(|k| k == col)?;
        Some(&self.cells[r][c])
    }

    /// Total trials across all cells.
    pub fn n_trials(&self) -> usize {
        self.cells.iter().flatten().map(|c| c.n_so + c.n_do).sum()
    }

    fn table(&self, value: impl Fn(&Cell) -> String) -> String {
        let mut text = format!("known\\unknown,{}\n", self.col_keys.join(","));
        for (key, row) in self.row_keys.iter().zip(&self.cells) {
            let vals: Vec<String> = row.iter().map(&value).collect();
            text.push_str(&format!("{key},{}\n", vals.join(",")));
        }
        text
    }

    /// Writes `<axis>_eer.csv`, `<axis>_cllr_min.csv`, `<axis>_n_so.csv` and
    /// `<axis>_n_do.csv`; absent cells are left blank.
    pub fn write_csvs(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let tables = [
            ("eer", self.table(|c| opt(c.eer))),
            ("cllr_min", self.table(|c| opt(c.cllr_min))),
            ("n_so", self.table(|c| c.n_so.to_string())),
            ("n_do", self.table(|c| c.n_do.to_string())),
        ];
        let mut paths = Vec::new();
        for (name, text) in tables {
            let path = dir.join(format!("{}_{name}.csv", self.axis));
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            paths.push(path);
        }
        Ok(paths)
    }
}

/// Everything that shapes an evaluation apart from the input files.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub mode: Mode,
    pub breakdowns: BTreeSet<Axis>,
    pub mins: CellMinimums,
    pub calibration: CalibrationConfig,
    /// Defaults to all-session pairs in pairwise mode and cross-session trials
    /// in enrollment mode.
    pub calibration_scope: Option<TrialScope>,
    pub tippet_grid: GridSpec,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            mode: Mode::Pairwise,
            breakdowns: [Axis::Duration, Axis::Task].into_iter().collect(),
            mins: CellMinimums::default(),
            calibration: CalibrationConfig::default(),
            calibration_scope: None,
            tippet_grid: GridSpec::default(),
        }
    }
}

impl EvalSettings {
    pub fn effective_calibration_scope(&self) -> TrialScope {
        self.calibration_scope.unwrap_or(match self.mode {
            Mode::Pairwise => TrialScope::AllSessions,
            Mode::Enrollment => TrialScope::CrossSession,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrices {
    pub duration: Option<BreakdownMatrix>,
    pub task: Option<BreakdownMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub mode: Mode,
    pub calibration_scope: TrialScope,
    pub calibration_dataset: String,
    pub evaluation_dataset: String,
    pub embedding_source: String,
    pub embedding_dim: usize,
    pub n_calibration_trials: usize,
    pub n_evaluation_trials: usize,
    pub n_same_origin: usize,
    pub n_different_origin: usize,
    pub posterior_clip: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub timestamp_unix_s: u64,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub global: GlobalMetrics,
    pub tippet_csv: String,
    pub matrices: Matrices,
    pub exclusions: Vec<Exclusion>,
    pub warnings: Vec<String>,
    pub scenario: ScenarioSummary,
    pub calibration: CalibrationModel,
    pub meta: ReportMeta,
}

impl EvaluationReport {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// In-memory result of one scenario.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvaluationReport,
    pub model: CalibrationModel,
    pub calibration_scores: Vec<ScoredTrial>,
    pub evaluation_scores: Vec<ScoredTrial>,
    pub enrollments: Vec<EnrollmentVector>,
    pub tippet: TippetCurve,
}

pub const TIPPET_CSV: &str = "tippet.csv";

/// Errors if the two manifests share any speaker.
pub fn check_disjoint(calibration: &Manifest, evaluation: &Manifest) -> Result<()> {
    let cal = calibration.speakers();
    let mut shared: Vec<String> = evaluation
        .speakers()
        .into_iter()
        .filter(|s| cal.contains(s))
        .map(str::to_string)
        .collect();
    if shared.is_empty() {
        return Ok(());
    }
    shared.sort();
    Err(Error::SpeakerOverlap(shared))
}

/// Fits calibration on the calibration split and evaluates the evaluation
/// split, without touching the filesystem.
pub fn evaluate(
    calibration: &Manifest,
    evaluation: &Manifest,
    set: &EmbeddingSet,
    settings: &EvalSettings,
) -> Result<Evaluation> {
    check_disjoint(calibration, evaluation)?;
    settings.calibration.validate()?;
    let scope = settings.effective_calibration_scope();

    let cal_trials = generate_trials_scoped(calibration, set, settings.mode, scope)?;
    let cal_lookup = VectorLookup::new(set).with_enrollments(&cal_trials.enrollments);
    let cal_scores = scoring::score_trials(&cal_trials.trials, &cal_lookup)?;
    info!(trials = cal_scores.len(), %scope, "scored calibration trials");
    let model = scoring::fit_calibration(&cal_scores, &settings.calibration)?;
    info!(
        weight = model.weight,
        bias = model.bias,
        clip = settings.calibration.clip,
        "fitted calibration"
    );

    let eval_trials = generate_trials(evaluation, set, settings.mode)?;
    if eval_trials.trials.is_empty() {
        return Err(Error::Validation("empty evaluation trial set".into()));
    }
    let eval_lookup = VectorLookup::new(set).with_enrollments(&eval_trials.enrollments);
    let eval_scores = scoring::score_trials(&eval_trials.trials, &eval_lookup)?;
    info!(trials = eval_scores.len(), "scored evaluation trials");

    let global = global_metrics(&eval_scores, &model, settings.calibration.clip)?;
    let lrs = scoring::calibrated_log_lrs(&model, &eval_scores, settings.calibration.clip);
    let tippet = metrics::tippet(&lrs, &settings.tippet_grid)?;

    let keys = sample_keys(set);
    let matrix = |axis| -> Result<Option<BreakdownMatrix>> {
        if settings.breakdowns.contains(&axis) {
            breakdown(&eval_scores, &keys, axis, settings.mode, settings.mins).map(Some)
        } else {
            Ok(None)
        }
    };
    let matrices = Matrices {
        duration: matrix(Axis::Duration)?,
        task: matrix(Axis::Task)?,
    };

    let mut warnings = Vec::new();
    if global.eer > 0.5 {
        warnings.push(format!(
            "EER {:.3} exceeds 0.5: scores are ordered against the labels",
            global.eer
        ));
    }
    if model.weight <= 0.0 {
        warnings.push(format!(
            "calibration weight {} is not positive: LRs do not increase with score",
            model.weight
        ));
    }
    for w in &warnings {
        warn!("{w}");
    }

    let mut exclusions = cal_trials.exclusions.clone();
    exclusions.extend(eval_trials.exclusions.iter().cloned());
    let n_same = eval_scores.iter().filter(|s| s.is_same()).count();
    let report = EvaluationReport {
        global,
        tippet_csv: TIPPET_CSV.to_string(),
        matrices,
        exclusions,
        warnings,
        scenario: ScenarioSummary {
            mode: settings.mode,
            calibration_scope: scope,
            calibration_dataset: calibration.dataset_name.clone(),
            evaluation_dataset: evaluation.dataset_name.clone(),
            embedding_source: set.source_tag.clone(),
            embedding_dim: set.dim,
            n_calibration_trials: cal_scores.len(),
            n_evaluation_trials: eval_scores.len(),
            n_same_origin: n_same,
            n_different_origin: eval_scores.len() - n_same,
            posterior_clip: settings.calibration.clip,
        },
        calibration: model,
        meta: ReportMeta {
            timestamp_unix_s: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        },
    };
    Ok(Evaluation {
        report,
        model,
        calibration_scores: cal_scores,
        evaluation_scores: eval_scores,
        enrollments: eval_trials.enrollments,
        tippet,
    })
}

/// Cllr of the calibrated LRs, Cllr_min and EER of the raw scores.
pub fn global_metrics(scored: &[ScoredTrial], model: &CalibrationModel, clip: f64) -> Result<GlobalMetrics> {
    let lrs = scoring::calibrated_log_lrs(model, scored, clip);
    let cllr = metrics::cllr(&lrs)?;
    let cllr_min = metrics::cllr_min(scored)?;
    Ok(GlobalMetrics {
        cllr,
        cllr_min,
        cllr_cal: metrics::cllr_cal(cllr, cllr_min),
        eer: metrics::eer(scored)?,
    })
}

/// File inputs of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub calibration_manifest: PathBuf,
    pub evaluation_manifest: PathBuf,
    pub embeddings: Vec<PathBuf>,
    pub settings: EvalSettings,
}

/// Names of the files `run_pipeline` writes into the output directory.
pub mod outputs {
    pub const REPORT: &str = "report.json";
    pub const CALIBRATION_MODEL: &str = "calibration.json";
    pub const CALIBRATION_SCORES: &str = "calibration_scores.csv";
    pub const EVALUATION_TRIALS: &str = "trials.csv";
    pub const EVALUATION_SCORES: &str = "scores.csv";
    pub const ENROLLMENTS: &str = "enrollments.jsonl";
}

/// Loads the scenario inputs, evaluates, and writes the report, scores,
/// calibration model, tippet curve and matrix CSVs into `out_dir`.
pub fn run_pipeline(config: &ScenarioConfig, out_dir: &Path) -> Result<EvaluationReport> {
    let calibration = Manifest::read(&config.calibration_manifest)?;
    let evaluation = Manifest::read(&config.evaluation_manifest)?;
    for m in [&calibration, &evaluation] {
        let violations = model::validate_manifest(m);
        if !violations.is_empty() {
            let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(Error::Validation(format!("{}: {}", m.dataset_name, list.join("; "))));
        }
    }
    if config.embeddings.is_empty() {
        return Err(Error::InvalidArgument("no embedding files given".into()));
    }
    let sets = config
        .embeddings
        .iter()
        .map(|p| embeddings::ingest(p))
        .collect::<Result<Vec<_>>>()?;
    let set = if sets.len() == 1 {
        sets.into_iter().next().expect("one set")
    } else {
        EmbeddingSet::merge(sets)?
    };

    let result = evaluate(&calibration, &evaluation, &set, &config.settings)?;

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let trials: Vec<Trial> = result.evaluation_scores.iter().map(|s| s.trial.clone()).collect();
    model::write_trials(&out_dir.join(outputs::EVALUATION_TRIALS), &trials)?;
    model::write_scores(&out_dir.join(outputs::EVALUATION_SCORES), &result.evaluation_scores)?;
    model::write_scores(&out_dir.join(outputs::CALIBRATION_SCORES), &result.calibration_scores)?;
    result.model.write(&out_dir.join(outputs::CALIBRATION_MODEL))?;
    result.tippet.write_csv(&out_dir.join(TIPPET_CSV))?;
    if !result.enrollments.is_empty() {
        let recs: Vec<EmbeddingRecord> = result.enrollments.iter().map(EnrollmentVector::to_record).collect();
        model::write_jsonl(&out_dir.join(outputs::ENROLLMENTS), &recs)?;
    }
    for m in [&result.report.matrices.duration, &result.report.matrices.task]
        .into_iter()
        .flatten()
    {
        m.write_csvs(out_dir)?;
    }
    result.report.write(&out_dir.join(outputs::REPORT))?;
    Ok(result.report)
}
