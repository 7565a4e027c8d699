//! Corpus and trial data model plus the interchange file formats shared by
//! every stage: `manifest.csv` + `manifest.meta.json`, `embeddings.jsonl`,
//! `trials.csv` and `scores.csv`.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Suffix separator marking augmented variants in sample ids.
pub const AUGMENT_MARK: char = '+';

/// Prefix of enrollment-vector sample ids (`enroll:<speaker_id>`).
pub const ENROLL_PREFIX: &str = "enroll:";

/// Tolerance on cosine scores leaving [-1, 1] through rounding.
pub const SCORE_EPS: f64 = 1e-9;

/// One row of a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub recording_id: String,
    pub speaker_id: String,
    pub session: u32,
    pub task: u32,
    pub path: PathBuf,
    pub sample_rate_hz: u32,
    /// Present on chunk-level manifests emitted by `prep`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
}

impl RecordingMeta {
    pub fn is_augmented(&self) -> bool {
        is_augmented_id(&self.recording_id)
    }
}

pub fn is_augmented_id(id: &str) -> bool {
    id.contains(AUGMENT_MARK)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManifestRole {
    EmbedTrain,
    Calibration,
    Evaluation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub dataset_name: String,
    pub role: ManifestRole,
    pub recordings: Vec<RecordingMeta>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestMeta {
    dataset_name: String,
    role: ManifestRole,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub recording_id: String,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.recording_id, self.reason)
    }
}

impl Manifest {
    pub fn speakers(&self) -> HashSet<&str> {
        self.recordings.iter().map(|r| r.speaker_id.as_str()).collect()
    }

    /// Reads `<name>.csv` and its `<name>.meta.json` sidecar.
    pub fn read(csv_path: &Path) -> Result<Manifest> {
        let meta_path = sidecar_path(csv_path);
        let meta_text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: ManifestMeta =
            serde_json::from_str(&meta_text).map_err(|e| Error::parse(&meta_path, e.to_string()))?;

        let file = File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
        let mut reader = csv::Reader::from_reader(BufReader::new(file));
        let headers = reader
            .headers()
            .map_err(|e| Error::parse(csv_path, e.to_string()))?
            .clone();
        let expected = [
            "recording_id",
            "speaker_id",
            "session",
            "task",
            "path",
            "sample_rate_hz",
        ];
        let base: Vec<&str> = headers.iter().take(expected.len()).collect();
        let extra: Vec<&str> = headers.iter().skip(expected.len()).collect();
        if base != expected || !(extra.is_empty() || extra == ["duration_s"]) {
            return Err(Error::parse(
                csv_path,
                format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>()),
            ));
        }
        let mut recordings = Vec::new();
        for (i, row) in reader.deserialize::<RecordingMeta>().enumerate() {
            // header is line 1
            let row = row.map_err(|e| Error::parse(csv_path, format!("line {}: {e}", i + 2)))?;
            recordings.push(row);
        }
        Ok(Manifest {
            dataset_name: meta.dataset_name,
            role: meta.role,
            recordings,
        })
    }

    pub fn write(&self, csv_path: &Path) -> Result<()> {
        let with_duration = self.recordings.iter().any(|r| r.duration_s.is_some());
        let file = File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let io = |e: csv::Error| Error::parse(csv_path, e.to_string());
        let mut header = vec![
            "recording_id",
            "speaker_id",
            "session",
            "task",
            "path",
            "sample_rate_hz",
        ];
        if with_duration {
            header.push("duration_s");
        }
        w.write_record(&header).map_err(io)?;
        for r in &self.recordings {
            let mut rec = vec![
                r.recording_id.clone(),
                r.speaker_id.clone(),
                r.session.to_string(),
                r.task.to_string(),
                r.path.to_string_lossy().into_owned(),
                r.sample_rate_hz.to_string(),
            ];
            if with_duration {
                rec.push(r.duration_s.map(|d| d.to_string()).unwrap_or_default());
            }
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(csv_path, e))?;

        let meta_path = sidecar_path(csv_path);
        let meta = ManifestMeta {
            dataset_name: self.dataset_name.clone(),
            role: self.role,
        };
        let text = serde_json::to_string_pretty(&meta).expect("manifest meta serializes");
        std::fs::write(&meta_path, text + "\n").map_err(|e| Error::io(&meta_path, e))
    }
}

/// `dir/name.csv` -> `dir/name.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Returns one violation per breached invariant; empty means valid.
pub fn validate_manifest(manifest: &Manifest) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for r in &manifest.recordings {
        let mut push = |reason: &str| {
            out.push(Violation {
                recording_id: r.recording_id.clone(),
                reason: reason.to_string(),
            })
        };
        if r.recording_id.is_empty() {
            push("empty recording_id");
        } else if !seen.insert(r.recording_id.as_str()) {
            push("duplicate recording_id");
        }
        if r.speaker_id.is_empty() {
            push("empty speaker_id");
        }
        if !(1..=3).contains(&r.session) {
            push("session out of range");
        }
        if !(1..=3).contains(&r.task) {
            push("task out of range");
        }
        if r.sample_rate_hz == 0 {
            push("sample_rate_hz must be positive");
        }
        if let Some(d) = r.duration_s {
            if !(d.is_finite() && d > 0.0) {
                push("duration_s must be positive");
            }
        }
    }
    out
}

/// Ground-truth origin of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    SameOrigin,
    DifferentOrigin,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::SameOrigin => "same-origin",
            Label::DifferentOrigin => "different-origin",
        }
    }

    pub fn is_same(self) -> bool {
        self == Label::SameOrigin
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "same-origin" => Ok(Label::SameOrigin),
            "different-origin" => Ok(Label::DifferentOrigin),
            other => Err(Error::InvalidArgument(format!("unknown label {other:?}"))),
        }
    }
}

/// Speaker ids are compared as exact, case-sensitive strings.
pub fn label_trial(known_speaker: &str, unknown_speaker: &str) -> Result<Label> {
    if known_speaker.is_empty() || unknown_speaker.is_empty() {
        return Err(Error::InvalidArgument("empty speaker id".into()));
    }
    Ok(if known_speaker == unknown_speaker {
        Label::SameOrigin
    } else {
        Label::DifferentOrigin
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub sample_id: String,
    pub speaker_id: String,
    pub session: u32,
    pub task: u32,
    pub duration_s: f64,
    pub dim: usize,
    pub vector: Vec<f64>,
}

impl EmbeddingRecord {
    /// Checks the per-record invariants, returning a reason on failure.
    pub fn check(&self) -> std::result::Result<(), String> {
        if self.sample_id.is_empty() {
            return Err("empty sample_id".into());
        }
        if self.dim == 0 {
            return Err("dim must be positive".into());
        }
        if self.vector.len() != self.dim {
            return Err(format!(
                "vector length {} does not match dim {}",
                self.vector.len(),
                self.dim
            ));
        }
        if let Some(i) = self.vector.iter().position(|v| !v.is_finite()) {
            return Err(format!("non-finite vector entry at index {i}"));
        }
        if self.vector.iter().all(|v| *v == 0.0) {
            return Err("zero-norm vector".into());
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err("duration_s must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trial {
    pub known_ref: String,
    pub unknown_ref: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrial {
    #[serde(flatten)]
    pub trial: Trial,
    pub score: f64,
}

impl ScoredTrial {
    pub fn is_same(&self) -> bool {
        self.trial.label.is_same()
    }
}

/// Splits scored trials into (same-origin, different-origin) score arrays.
pub fn split_by_label(scored: &[ScoredTrial]) -> (Vec<f64>, Vec<f64>) {
    let mut so = Vec::new();
    let mut dso = Vec::new();
    for s in scored {
        if s.is_same() {
            so.push(s.score);
        } else {
            dso.push(s.score);
        }
    }
    (so, dso)
}

pub fn read_trials(path: &Path) -> Result<Vec<Trial>> {
    read_csv(path, &["known_ref", "unknown_ref", "label"])
}

pub fn write_trials(path: &Path, trials: &[Trial]) -> Result<()> {
    write_csv(
        path,
        &["known_ref", "unknown_ref", "label"],
        trials
            .iter()
            .map(|t| vec![t.known_ref.clone(), t.unknown_ref.clone(), t.label.to_string()]),
    )
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoredTrial>> {
    #[derive(Deserialize)]
    struct Row {
        known_ref: String,
        unknown_ref: String,
        label: Label,
        score: f64,
    }
    let rows: Vec<Row> = read_csv(path, &["known_ref", "unknown_ref", "label", "score"])?;
    let mut out = Vec::with_capacity(rows.len());
    for (i, r) in rows.into_iter().enumerate() {
        if !r.score.is_finite() || r.score.abs() > 1.0 + SCORE_EPS {
            return Err(Error::parse(
                path,
                format!("line {}: score {} outside [-1, 1]", i + 2, r.score),
            ));
        }
        out.push(ScoredTrial {
            trial: Trial {
                known_ref: r.known_ref,
                unknown_ref: r.unknown_ref,
                label: r.label,
            },
            score: r.score,
        });
    }
    Ok(out)
}

pub fn write_scores(path: &Path, scored: &[ScoredTrial]) -> Result<()> {
    write_csv(
        path,
        &["known_ref", "unknown_ref", "label", "score"],
        scored.iter().map(|s| {
            vec![
                s.trial.known_ref.clone(),
                s.trial.unknown_ref.clone(),
                s.trial.label.to_string(),
                s.score.to_string(),
            ]
        }),
    )
}

fn read_csv<T: serde::de::DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let found = reader.headers().map_err(|e| Error::parse(path, e.to_string()))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::parse(
            path,
            format!(
                "expected header {}, found {}",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::parse(path, format!("line {}: {e}", i + 2))))
        .collect()
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header).map_err(|e| Error::parse(path, e.to_string()))?;
    for row in rows {
        w.write_record(&row).map_err(|e| Error::parse(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes records as JSON Lines, one object per line.
pub fn write_jsonl(path: &Path, records: &[EmbeddingRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::parse(path, e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads JSON Lines records without cross-record validation. Blank lines are
/// skipped; errors carry the 1-based line number.
pub fn read_jsonl(path: &Path) -> Result<Vec<(usize, EmbeddingRecord)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, format!("line {}: {e}", i + 1)))?;
        out.push((i + 1, rec));
    }
    Ok(out)
}
