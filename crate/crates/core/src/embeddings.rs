//! Embedding sets: JSONL ingest, the built-in mel-statistics baseline
//! embedder, and per-speaker enrollment by averaging.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::audio::AudioSignal;
use crate::error::{Error, Result};
use crate::model::{self, EmbeddingRecord, ENROLL_PREFIX};

pub const BASELINE_BANDS: usize = 24;
pub const BASELINE_DIM: usize = 2 * BASELINE_BANDS;
pub const BASELINE_TAG: &str = "baseline-48";

const LOG_FLOOR: f64 = 1e-10;
const MIN_BASELINE_S: f64 = 0.5;

/// Energies are computed on the 16-bit PCM sample scale, so typical speech
/// log-energies sit far above the log floor.
const PCM_SCALE: f64 = 32768.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub dim: usize,
    pub records: Vec<EmbeddingRecord>,
    pub source_tag: String,
}

impl EmbeddingSet {
    /// Validates records: per-record invariants, a shared dim and unique ids.
    pub fn new(records: Vec<EmbeddingRecord>, source_tag: impl Into<String>) -> Result<Self> {
        let numbered = records.into_iter().enumerate().map(|(i, r)| (i + 1, r)).collect();
        Self::from_numbered(numbered, source_tag.into())
    }

    fn from_numbered(records: Vec<(usize, EmbeddingRecord)>, source_tag: String) -> Result<Self> {
        let Some((_, first)) = records.first() else {
            return Err(Error::Validation("empty embedding set".into()));
        };
        let dim = first.dim;
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(records.len());
        for (line, r) in records {
            if r.dim != dim || r.vector.len() != dim {
                let got = if r.dim != dim { r.dim } else { r.vector.len() };
                return Err(Error::Validation(format!(
                    "line {line}: dim mismatch (expected {dim}, got {got})"
                )));
            }
            r.check()
                .map_err(|reason| Error::Validation(format!("line {line}: {reason}")))?;
            if !seen.insert(r.sample_id.clone()) {
                return Err(Error::Validation(format!(
                    "line {line}: duplicate sample_id {}",
                    r.sample_id
                )));
            }
            out.push(r);
        }
        Ok(EmbeddingSet {
            dim,
            records: out,
            source_tag,
        })
    }

    /// Concatenates sets that share a dim.
    pub fn merge(sets: Vec<EmbeddingSet>) -> Result<Self> {
        let tag = sets.iter().map(|s| s.source_tag.as_str()).collect::<Vec<_>>().join("+");
        let records: Vec<EmbeddingRecord> = sets.into_iter().flat_map(|s| s.records).collect();
        Self::new(records, tag)
    }

    pub fn get(&self, sample_id: &str) -> Option<&EmbeddingRecord> {
        self.records.iter().find(|r| r.sample_id == sample_id)
    }

    pub fn index(&self) -> HashMap<&str, &EmbeddingRecord> {
        self.records.iter().map(|r| (r.sample_id.as_str(), r)).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        model::write_jsonl(path, &self.records)
    }
}

/// Reads and validates an `embeddings.jsonl` file. The source tag defaults to
/// the file stem.
pub fn ingest(path: &Path) -> Result<EmbeddingSet> {
    let records = model::read_jsonl(path)?;
    let tag = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    EmbeddingSet::from_numbered(records, tag).map_err(|e| match e {
        Error::Validation(msg) => Error::parse(path, msg),
        other => other,
    })
}

/// Mean and standard deviation of 24 log mel-band energies, L2-normalized.
///
/// Frames are 25 ms with a 10 ms hop, Hamming-windowed, zero-padded to the
/// next power of two. The filterbank is 24 triangles spaced evenly on the HTK
/// mel scale from 0 Hz to Nyquist.
pub struct BaselineEmbedder {
    sample_rate_hz: u32,
    frame: usize,
    hop: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    filters: Vec<Vec<(usize, f64)>>,
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Sparse triangular filter weights `(bin, weight)` for each band.
pub fn mel_filterbank(n_bands: usize, nfft: usize, sample_rate_hz: u32) -> Vec<Vec<(usize, f64)>> {
    let nyquist = sample_rate_hz as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_bands + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_bands + 1) as f64))
        .collect();
    let bin_hz = sample_rate_hz as f64 / nfft as f64;
    (0..n_bands)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..=nfft / 2)
                .filter_map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = if f > lo && f <= mid {
                        (f - lo) / (mid - lo)
                    } else if f > mid && f < hi {
                        (hi - f) / (hi - mid)
                    } else {
                        0.0
                    };
                    (w > 0.0).then_some((k, w))
                })
                .collect()
        })
        .collect()
}

impl BaselineEmbedder {
    pub fn new(sample_rate_hz: u32) -> Self {
        let sr = sample_rate_hz as f64;
        let frame = ((0.025 * sr).round() as usize).max(2);
        let hop = ((0.010 * sr).round() as usize).max(1);
        let nfft = frame.next_power_of_two();
        let window = (0..frame)
            .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (frame - 1) as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(nfft);
        BaselineEmbedder {
            sample_rate_hz,
            frame,
            hop,
            window,
            fft,
            filters: mel_filterbank(BASELINE_BANDS, nfft, sample_rate_hz),
        }
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    /// Per-frame log mel energies, `[frame][band]`.
    pub fn log_mel_frames(&self, samples: &[f64]) -> Vec<[f64; BASELINE_BANDS]> {
        if samples.len() < self.frame {
            return Vec::new();
        }
        let nfft = self.fft.len();
        let n_frames = (samples.len() - self.frame) / self.hop + 1;
        let mut buf = vec![Complex::new(0.0, 0.0); nfft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; nfft / 2 + 1];
        let mut out = Vec::with_capacity(n_frames);
        for k in 0..n_frames {
            let start = k * self.hop;
            for (i, c) in buf.iter_mut().enumerate() {
                *c = if i < self.frame {
                    Complex::new(samples[start + i] * PCM_SCALE * self.window[i], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            let mut bands = [0.0; BASELINE_BANDS];
            for (b, filt) in bands.iter_mut().zip(&self.filters) {
                let e: f64 = filt.iter().map(|&(bin, w)| w * power[bin]).sum();
                *b = (e + LOG_FLOOR).ln();
            }
            out.push(bands);
        }
        out
    }

    pub fn embed(&self, signal: &AudioSignal) -> Result<Vec<f64>> {
        if signal.sample_rate_hz != self.sample_rate_hz {
            return Err(Error::InvalidArgument(format!(
                "embedder built for {} Hz, got {} Hz",
                self.sample_rate_hz, signal.sample_rate_hz
            )));
        }
        if signal.duration_s() < MIN_BASELINE_S {
            return Err(Error::InvalidArgument(format!(
                "baseline embedding needs at least {MIN_BASELINE_S} s, got {:.3} s",
                signal.duration_s()
            )));
        }
        let frames = self.log_mel_frames(&signal.samples);
        let n = frames.len() as f64;
        let mut v = vec![0.0; BASELINE_DIM];
        for f in &frames {
            for (m, &e) in f.iter().enumerate() {
                v[m] += e;
            }
        }
        for m in 0..BASELINE_BANDS {
            v[m] /= n;
        }
        for f in &frames {
            for (m, &e) in f.iter().enumerate() {
                v[BASELINE_BANDS + m] += (e - v[m]).powi(2);
            }
        }
        for m in 0..BASELINE_BANDS {
            v[BASELINE_BANDS + m] = (v[BASELINE_BANDS + m] / n).sqrt();
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Degenerate("zero baseline embedding".into()));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(v)
    }
}

/// One-off baseline embedding; prefer reusing a [`BaselineEmbedder`] for many chunks.
pub fn baseline_embed(chunk: &AudioSignal) -> Result<Vec<f64>> {
    BaselineEmbedder::new(chunk.sample_rate_hz).embed(chunk)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrollmentVector {
    pub speaker_id: String,
    pub vector: Vec<f64>,
    pub n_samples: usize,
    /// Sum of contributor durations.
    pub duration_s: f64,
}

impl EnrollmentVector {
    pub fn sample_id(&self) -> String {
        enrollment_ref(&self.speaker_id)
    }

    /// Interchange form: session 1, task 0.
    pub fn to_record(&self) -> EmbeddingRecord {
        EmbeddingRecord {
            sample_id: self.sample_id(),
            speaker_id: self.speaker_id.clone(),
            session: 1,
            task: 0,
            duration_s: self.duration_s,
            dim: self.vector.len(),
            vector: self.vector.clone(),
        }
    }
}

pub fn enrollment_ref(speaker_id: &str) -> String {
    format!("{ENROLL_PREFIX}{speaker_id}")
}

/// Which records contribute to an enrollment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnrollFilter {
    pub sessions: Vec<u32>,
    pub include_augmented: bool,
}

impl Default for EnrollFilter {
    fn default() -> Self {
        EnrollFilter {
            sessions: vec![1],
            include_augmented: false,
        }
    }
}

impl EnrollFilter {
    pub fn accepts(&self, r: &EmbeddingRecord) -> bool {
        self.sessions.contains(&r.session) && (self.include_augmented || !model::is_augmented_id(&r.sample_id))
    }
}

/// Element-wise mean of the speaker's passing vectors, not re-normalized.
pub fn enroll(set: &EmbeddingSet, speaker_id: &str, filter: &EnrollFilter) -> Result<EnrollmentVector> {
    let members: Vec<&EmbeddingRecord> = set
        .records
        .iter()
        .filter(|r| r.speaker_id == speaker_id && filter.accepts(r))
        .collect();
    enroll_records(speaker_id, &members)
}

fn enroll_records(speaker_id: &str, members: &[&EmbeddingRecord]) -> Result<EnrollmentVector> {
    let Some(first) = members.first() else {
        return Err(Error::MissingSpeaker(speaker_id.to_string()));
    };
    let mut sum = vec![0.0; first.dim];
    for r in members {
        for (s, v) in sum.iter_mut().zip(&r.vector) {
            *s += v;
        }
    }
    let n = members.len();
    sum.iter_mut().for_each(|s| *s /= n as f64);
    Ok(EnrollmentVector {
        speaker_id: speaker_id.to_string(),
        vector: sum,
        n_samples: n,
        duration_s: members.iter().map(|r| r.duration_s).sum(),
    })
}

/// Enrolls every speaker that has at least one passing record, in order of
/// first appearance.
pub fn enroll_all(set: &EmbeddingSet, filter: &EnrollFilter) -> Vec<EnrollmentVector> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&EmbeddingRecord>> = HashMap::new();
    for r in set.records.iter().filter(|r| filter.accepts(r)) {
        groups
            .entry(r.speaker_id.as_str())
            .or_insert_with(|| {
                order.push(r.speaker_id.as_str());
                Vec::new()
            })
            .push(r);
    }
    order
        .into_iter()
        .map(|spk| enroll_records(spk, &groups[spk]).expect("group is non-empty"))
        .collect()
}
