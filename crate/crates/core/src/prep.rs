//! Manifest-level preparation: turns recordings into protocol chunks on disk
//! and computes baseline embeddings for a chunk manifest.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::audio::{self, AudioSignal, VadParams};
use crate::embeddings::{BaselineEmbedder, EmbeddingSet, BASELINE_DIM, BASELINE_TAG};
use crate::error::{Error, Result};
use crate::model::{self, EmbeddingRecord, Manifest, RecordingMeta, AUGMENT_MARK};

pub const CHUNK_DIR: &str = "chunks";
pub const CHUNK_MANIFEST: &str = "chunks.csv";
const STAGING_DIR: &str = ".chunks.staging";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentOptions {
    pub time_scales: Vec<f64>,
    pub snr_db: f64,
    pub noise_variants: usize,
    pub seed: u64,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        AugmentOptions {
            time_scales: vec![0.95, 1.05],
            snr_db: 15.0,
            noise_variants: 1,
            seed: 0,
        }
    }
}

impl AugmentOptions {
    pub fn validate(&self) -> Result<()> {
        if let Some(f) = self.time_scales.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
            return Err(Error::InvalidArgument(format!("time-scale factor {f} must be > 0")));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::InvalidArgument("SNR must be finite".into()));
        }
        Ok(())
    }

    /// Variants produced per original chunk.
    pub fn n_variants(&self) -> usize {
        self.time_scales.len() + self.noise_variants
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrepOptions {
    pub vad: VadParams,
    pub augment: Option<AugmentOptions>,
    /// Abort on the first failing recording and leave no output behind.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub recording_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingCount {
    pub recording_id: String,
    pub chunks: usize,
    pub augmented: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PrepSummary {
    pub n_recordings: usize,
    pub n_chunks: usize,
    pub n_augmented: usize,
    /// Successful recordings, in manifest order.
    pub per_recording: Vec<RecordingCount>,
    pub failures: Vec<Failure>,
}

/// FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Noise seed of one augmented variant, independent of processing order.
pub fn variant_seed(base_seed: u64, variant_id: &str) -> u64 {
    base_seed ^ fnv1a(variant_id)
}

pub fn resolve(base_dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base_dir.join(path)
    }
}

struct Prepared {
    id: String,
    meta: RecordingMeta,
    signal: AudioSignal,
}

fn chunk_row(src: &RecordingMeta, id: String, signal: &AudioSignal) -> RecordingMeta {
    RecordingMeta {
        path: Path::new(CHUNK_DIR).join(format!("{id}.wav")),
        recording_id: id,
        speaker_id: src.speaker_id.clone(),
        session: src.session,
        task: src.task,
        sample_rate_hz: signal.sample_rate_hz,
        duration_s: Some(signal.duration_s()),
    }
}

fn prepare_recording(rec: &RecordingMeta, base_dir: &Path, opts: &PrepOptions) -> Result<Vec<Prepared>> {
    let signal = audio::load_wav(&resolve(base_dir, &rec.path))?;
    if signal.sample_rate_hz != rec.sample_rate_hz {
        return Err(Error::Validation(format!(
            "{}: file is {} Hz, manifest says {} Hz",
            rec.recording_id, signal.sample_rate_hz, rec.sample_rate_hz
        )));
    }
    let voiced = audio::remove_silence(&signal, &opts.vad)?;
    let plan = audio::plan_durations(voiced.duration_s())?;
    let chunks = audio::split_chunks(&rec.recording_id, &voiced, &plan)?;
    let mut out = Vec::new();
    for chunk in chunks {
        let id = chunk.id();
        if let Some(aug) = &opts.augment {
            for &f in &aug.time_scales {
                let vid = format!("{id}{AUGMENT_MARK}ts{f}");
                let s = audio::augment_time_scale(&chunk.samples, f)?;
                out.push(Prepared {
                    meta: chunk_row(rec, vid.clone(), &s),
                    id: vid,
                    signal: s,
                });
            }
            for k in 1..=aug.noise_variants {
                let vid = format!("{id}{AUGMENT_MARK}noise{k}");
                let s = audio::augment_add_noise(&chunk.samples, aug.snr_db, variant_seed(aug.seed, &vid))?;
                out.push(Prepared {
                    meta: chunk_row(rec, vid.clone(), &s),
                    id: vid,
                    signal: s,
                });
            }
        }
        let meta = chunk_row(rec, id.clone(), &chunk.samples);
        out.push(Prepared {
            id,
            meta,
            signal: chunk.samples,
        });
    }
    // originals first, then their variants, in chunk order
    out.sort_by_key(|p| model::is_augmented_id(&p.id));
    Ok(out)
}

/// Runs silence removal, chunking and optional augmentation over every
/// recording, writing `chunks/<id>.wav` and `chunks.csv` (plus sidecar) into
/// `out_dir`. Chunk paths in the output manifest are relative to `out_dir`.
///
/// Without `strict`, failing recordings are logged, skipped and listed in the
/// summary. With `strict`, the first failure aborts and nothing is written.
pub fn prepare_manifest(
    manifest: &Manifest,
    base_dir: &Path,
    out_dir: &Path,
    opts: &PrepOptions,
) -> Result<(Manifest, PrepSummary)> {
    let violations = model::validate_manifest(manifest);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(Error::Validation(list.join("; ")));
    }
    opts.vad.validate()?;
    if let Some(a) = &opts.augment {
        a.validate()?;
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let staging = out_dir.join(STAGING_DIR);
    if staging.exists() {
        std::fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    std::fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;

    let results: Vec<Result<Vec<RecordingMeta>>> = manifest
        .recordings
        .par_iter()
        .map(|rec| {
            let prepared = prepare_recording(rec, base_dir, opts)?;
            let mut rows = Vec::with_capacity(prepared.len());
            for p in prepared {
                audio::write_wav(&staging.join(format!("{}.wav", p.id)), &p.signal)?;
                rows.push(p.meta);
            }
            Ok(rows)
        })
        .collect();

    let mut summary = PrepSummary {
        n_recordings: manifest.recordings.len(),
        ..Default::default()
    };
    let mut recordings = Vec::new();
    for (rec, result) in manifest.recordings.iter().zip(results) {
        match result {
            Ok(rows) => {
                let augmented = rows.iter().filter(|r| r.is_augmented()).count();
                summary.per_recording.push(RecordingCount {
                    recording_id: rec.recording_id.clone(),
                    chunks: rows.len() - augmented,
                    augmented,
                });
                recordings.extend(rows);
            }
            Err(e) if opts.strict => {
                let _ = std::fs::remove_dir_all(&staging);
                return Err(e);
            }
            Err(e) => {
                warn!(recording = %rec.recording_id, error = %e, "skipping recording");
                summary.failures.push(Failure {
                    recording_id: rec.recording_id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    summary.n_augmented = recordings.iter().filter(|r| r.is_augmented()).count();
    summary.n_chunks = recordings.len() - summary.n_augmented;

    let chunk_dir = out_dir.join(CHUNK_DIR);
    std::fs::create_dir_all(&chunk_dir).map_err(|e| Error::io(&chunk_dir, e))?;
    for r in &recordings {
        let name = r.path.file_name().expect("chunk path has a file name");
        let from = staging.join(name);
        std::fs::rename(&from, chunk_dir.join(name)).map_err(|e| Error::io(&from, e))?;
    }
    std::fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;

    let out = Manifest {
        dataset_name: manifest.dataset_name.clone(),
        role: manifest.role,
        recordings,
    };
    out.write(&out_dir.join(CHUNK_MANIFEST))?;
    info!(
        recordings = summary.n_recordings,
        chunks = summary.n_chunks,
        augmented = summary.n_augmented,
        failed = summary.failures.len(),
        "prepared corpus"
    );
    Ok((out, summary))
}

/// Baseline embeddings for every manifest row, in manifest order.
pub fn embed_manifest(manifest: &Manifest, base_dir: &Path) -> Result<EmbeddingSet> {
    let records = manifest
        .recordings
        .par_iter()
        .map(|r| -> Result<EmbeddingRecord> {
            let signal = audio::load_wav(&resolve(base_dir, &r.path))?;
            let vector = BaselineEmbedder::new(signal.sample_rate_hz).embed(&signal)?;
            Ok(EmbeddingRecord {
                sample_id: r.recording_id.clone(),
                speaker_id: r.speaker_id.clone(),
                session: r.session,
                task: r.task,
                duration_s: r.duration_s.unwrap_or_else(|| signal.duration_s()),
                dim: BASELINE_DIM,
                vector,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EmbeddingSet::new(records, BASELINE_TAG)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ManifestRole;

    fn tone(seconds: f64, sr: u32) -> AudioSignal {
        let n = (seconds * sr as f64) as usize;
        let samples = (0..n)
            .map(|i| 0.3 * (2.0 * std::f64::consts::PI * 200.0 * i as f64 / sr as f64).sin())
            .collect();
        AudioSignal::new(samples, sr).unwrap()
    }

    fn corpus(dir: &Path, ids: &[(&str, f64)]) -> Manifest {
        let recordings = ids
            .iter()
            .map(|(id, secs)| {
                let path = PathBuf::from(format!("{id}.wav"));
                if *secs > 0.0 {
                    audio::write_wav(&dir.join(&path), &tone(*secs, 8000)).unwrap();
                }
                RecordingMeta {
                    recording_id: id.to_string(),
                    speaker_id: "s".into(),
                    session: 1,
                    task: 1,
                    path,
                    sample_rate_hz: 8000,
                    duration_s: None,
                }
            })
            .collect();
        Manifest {
            dataset_name: "d".into(),
            role: ManifestRole::Evaluation,
            recordings,
        }
    }

    #[test]
    fn chunks_and_variants_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path(), &[("r1", 14.0)]);
        let out = dir.path().join("out");
        let opts = PrepOptions {
            augment: Some(AugmentOptions::default()),
            ..Default::default()
        };
        let (chunks, summary) = prepare_manifest(&m, dir.path(), &out, &opts).unwrap();
        assert_eq!(summary.n_chunks, 4);
        assert_eq!(summary.n_augmented, 12);
        assert_eq!(chunks.recordings.len(), 16);
        assert_eq!(chunks.recordings[0].recording_id, "r1_0_2000");
        for r in &chunks.recordings {
            assert!(out.join(&r.path).exists());
        }
        let back = Manifest::read(&out.join(CHUNK_MANIFEST)).unwrap();
        assert_eq!(back, chunks);
        assert!(!out.join(STAGING_DIR).exists());
    }

    #[test]
    fn lenient_mode_skips_failures() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path(), &[("ok", 5.0), ("gone", 0.0), ("short", 1.0)]);
        let (chunks, summary) =
            prepare_manifest(&m, dir.path(), &dir.path().join("o"), &PrepOptions::default()).unwrap();
        assert_eq!(summary.failures.len(), 2);
        assert!(chunks.recordings.iter().all(|r| r.recording_id.starts_with("ok_")));
    }

    #[test]
    fn strict_mode_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path(), &[("ok", 5.0), ("gone", 0.0)]);
        let out = dir.path().join("o");
        let opts = PrepOptions {
            strict: true,
            ..Default::default()
        };
        let err = prepare_manifest(&m, dir.path(), &out, &opts).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(!out.join(CHUNK_MANIFEST).exists());
        assert!(!out.join(CHUNK_DIR).exists());
        assert!(!out.join(STAGING_DIR).exists());
    }

    #[test]
    fn embedding_a_chunk_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path(), &[("r1", 6.0)]);
        let (chunks, _) = prepare_manifest(&m, dir.path(), dir.path(), &PrepOptions::default()).unwrap();
        let set = embed_manifest(&chunks, dir.path()).unwrap();
        assert_eq!(set.records.len(), chunks.recordings.len());
        assert_eq!(set.dim, BASELINE_DIM);
        assert_eq!(set.records[0].duration_s, 2.0);
    }

    #[test]
    fn seeds_depend_on_variant_id_only() {
        assert_eq!(variant_seed(7, "a+noise1"), variant_seed(7, "a+noise1"));
        assert_ne!(variant_seed(7, "a+noise1"), variant_seed(7, "b+noise1"));
    }
}
