//! Seeded synthetic corpora for tests, demos and self-checks.
//!
//! Two generators: Gaussian speaker clusters directly in embedding space, and
//! a small formant-synthesis "voice" corpus that exercises the full audio
//! path (silence removal, chunking, baseline embeddings).

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::audio::{self, AudioSignal, VadParams, MAX_CHUNK_S, MIN_CHUNK_S};
use crate::embeddings::{BaselineEmbedder, EmbeddingSet, BASELINE_DIM, BASELINE_TAG};
use crate::error::Result;
use crate::model::{EmbeddingRecord, Manifest, ManifestRole, RecordingMeta};
use crate::prep::CHUNK_DIR;

pub const CALIBRATION_MANIFEST: &str = "calibration.csv";
pub const EVALUATION_MANIFEST: &str = "evaluation.csv";
pub const EMBEDDINGS: &str = "embeddings.jsonl";

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub calibration: Manifest,
    pub evaluation: Manifest,
    pub embeddings: EmbeddingSet,
}

impl SynthCorpus {
    /// Writes both manifests and the embeddings file; returns their paths in
    /// that order.
    pub fn write(&self, dir: &Path) -> Result<[PathBuf; 3]> {
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
        let paths = [
            dir.join(CALIBRATION_MANIFEST),
            dir.join(EVALUATION_MANIFEST),
            dir.join(EMBEDDINGS),
        ];
        self.calibration.write(&paths[0])?;
        self.evaluation.write(&paths[1])?;
        self.embeddings.write(&paths[2])?;
        Ok(paths)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    pub n_calibration_speakers: usize,
    pub n_evaluation_speakers: usize,
    pub dim: usize,
    /// Per-coordinate spread of speaker centres.
    pub between_sd: f64,
    /// Per-coordinate within-speaker spread of a 2 s sample of task 1; it
    /// shrinks with the square root of duration.
    pub within_sd: f64,
    /// Multiplier on the within-speaker spread for tasks 1, 2 and 3.
    pub task_noise: [f64; 3],
    pub seed: u64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        ClusterSpec {
            n_calibration_speakers: 10,
            n_evaluation_speakers: 12,
            dim: 32,
            between_sd: 1.0,
            within_sd: 0.8,
            task_noise: [1.0, 1.0, 1.0],
            seed: 1,
        }
    }
}

fn speaker_ids(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i:02}")).collect()
}

fn cluster_split(
    spec: &ClusterSpec,
    prefix: &str,
    n: usize,
    role: ManifestRole,
    rng: &mut ChaCha8Rng,
) -> (Manifest, Vec<EmbeddingRecord>) {
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for spk in speaker_ids(prefix, n) {
        let centre: Vec<f64> = (0..spec.dim).map(|_| spec.between_sd * unit.sample(rng)).collect();
        for session in 1..=2 {
            for task in 1..=3u32 {
                for d in MIN_CHUNK_S..=MAX_CHUNK_S {
                    let sd = spec.within_sd * spec.task_noise[task as usize - 1] * (2.0 / d as f64).sqrt();
                    let vector: Vec<f64> = centre.iter().map(|c| c + sd * unit.sample(rng)).collect();
                    let id = format!("{spk}_s{session}_t{task}_{d}");
                    rows.push(RecordingMeta {
                        recording_id: id.clone(),
                        speaker_id: spk.clone(),
                        session,
                        task,
                        path: PathBuf::from(format!("chunks/{id}.wav")),
                        sample_rate_hz: 16000,
                        duration_s: Some(d as f64),
                    });
                    records.push(EmbeddingRecord {
                        sample_id: id,
                        speaker_id: spk.clone(),
                        session,
                        task,
                        duration_s: d as f64,
                        dim: spec.dim,
                        vector,
                    });
                }
            }
        }
    }
    let manifest = Manifest {
        dataset_name: format!("synthetic-clusters-{prefix}"),
        role,
        recordings: rows,
    };
    (manifest, records)
}

/// One sample per (speaker, session, task, duration 2..=10 s), with disjoint
/// calibration (`cal`) and evaluation (`ev`) speakers.
pub fn cluster_corpus(spec: &ClusterSpec) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (calibration, mut records) = cluster_split(
        spec,
        "cal",
        spec.n_calibration_speakers,
        ManifestRole::Calibration,
        &mut rng,
    );
    let (evaluation, eval_records) = cluster_split(
        spec,
        "ev",
        spec.n_evaluation_speakers,
        ManifestRole::Evaluation,
        &mut rng,
    );
    records.extend(eval_records);
    SynthCorpus {
        calibration,
        evaluation,
        embeddings: EmbeddingSet::new(records, "synthetic-clusters").expect("generated records are valid"),
    }
}

/// Vowel formants (F1, F2, F3) of an average adult male tract.
const VOWELS: [[f64; 3]; 3] = [[730.0, 1090.0, 2440.0], [270.0, 2290.0, 3010.0], [300.0, 870.0, 2240.0]];
const BANDWIDTHS: [f64; 3] = [90.0, 110.0, 170.0];
const TABLE_LEN: usize = 2048;
/// Fraction of the canonical vowel contrast each voice keeps.
const VOWEL_SPREAD: f64 = 0.2;
const N_TRAITS: usize = 8;

/// Per-speaker source and tract parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct VoiceProfile {
    pub f0_hz: f64,
    /// Formants of each vowel after tract-length scaling and individual offsets.
    pub formants: [[f64; 3]; 3],
    /// Spectral tilt of the glottal source, as a power of harmonic number.
    pub tilt: f64,
    /// Higher resonances that do not move with the vowel.
    pub fixed_resonances: [f64; 2],
}

impl VoiceProfile {
    pub fn random(rng: &mut impl Rng) -> Self {
        let u: [f64; N_TRAITS] = std::array::from_fn(|_| rng.gen());
        Self::from_unit(&u, rng)
    }

    /// Maps a point of the unit trait cube to a voice; `rng` adds small
    /// per-formant jitter.
    fn from_unit(u: &[f64; N_TRAITS], rng: &mut impl Rng) -> Self {
        let lerp = |t: f64, lo: f64, hi: f64| lo + t * (hi - lo);
        let tract = lerp(u[0], 0.8, 1.3);
        let offsets = [u[1], u[2], u[3]].map(|t| lerp(t, -0.12, 0.12));
        let mut formants = [[0.0; 3]; 3];
        for (v, canonical) in formants.iter_mut().zip(VOWELS) {
            for (i, f) in v.iter_mut().enumerate() {
                // vowels pulled towards the neutral tract
                let neutral = 500.0 * (2 * i + 1) as f64;
                let shaped = neutral + VOWEL_SPREAD * (canonical[i] - neutral);
                *f = shaped * tract * (1.0 + offsets[i] + rng.gen_range(-0.03..0.03));
            }
        }
        VoiceProfile {
            f0_hz: lerp(u[4], 95.0, 230.0),
            formants,
            tilt: lerp(u[5], 0.8, 1.6),
            fixed_resonances: [lerp(u[6], 2600.0, 3300.0), lerp(u[7], 3300.0, 3900.0)],
        }
    }

    /// `n` voices spread over the trait space by Latin hypercube sampling, so
    /// that no two speakers end up near-identical by chance.
    pub fn stratified(n: usize, rng: &mut impl Rng) -> Vec<Self> {
        let strata: Vec<Vec<usize>> = (0..N_TRAITS)
            .map(|_| {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(rng);
                p
            })
            .collect();
        (0..n)
            .map(|i| {
                let u: [f64; N_TRAITS] = std::array::from_fn(|t| (strata[t][i] as f64 + rng.gen::<f64>()) / n as f64);
                Self::from_unit(&u, rng)
            })
            .collect()
    }

    /// Small session-to-session drift.
    fn drift(&self, amount: f64, rng: &mut impl Rng) -> Self {
        let mut p = self.clone();
        p.f0_hz *= 1.0 + amount * rng.gen_range(-0.03..0.03);
        let scale = 1.0 + amount * rng.gen_range(-0.015..0.015);
        for v in &mut p.formants {
            for f in v.iter_mut() {
                *f *= scale;
            }
        }
        p
    }

    fn envelope(&self, vowel: usize, hz: f64) -> f64 {
        let resonance = |f: f64, b: f64| {
            let r = hz / f;
            1.0 / ((1.0 - r * r).powi(2) + (hz * b / (f * f)).powi(2)).sqrt()
        };
        let vowel_part: f64 = self.formants[vowel]
            .iter()
            .zip(BANDWIDTHS)
            .map(|(&f, b)| resonance(f, b))
            .product();
        vowel_part
            * self
                .fixed_resonances
                .iter()
                .map(|&f| resonance(f, 200.0))
                .product::<f64>()
    }

    /// One pitch period of the vowel as a wavetable, peak-normalized.
    fn wavetable(&self, vowel: usize, sample_rate_hz: u32) -> Vec<f64> {
        let nyquist = sample_rate_hz as f64 / 2.0;
        let n_harm = ((0.95 * nyquist) / self.f0_hz).floor() as usize;
        let amps: Vec<f64> = (1..=n_harm)
            .map(|k| self.envelope(vowel, k as f64 * self.f0_hz) * (k as f64).powf(-self.tilt))
            .collect();
        let mut table: Vec<f64> = (0..TABLE_LEN)
            .map(|i| {
                let ph = 2.0 * PI * i as f64 / TABLE_LEN as f64;
                amps.iter()
                    .enumerate()
                    .map(|(k, a)| a * ((k + 1) as f64 * ph).sin())
                    .sum()
            })
            .collect();
        let peak = table.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        table.iter_mut().for_each(|v| *v /= peak);
        table
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoiceSpec {
    pub n_calibration_speakers: usize,
    pub n_evaluation_speakers: usize,
    pub sample_rate_hz: u32,
    /// Speech (non-pause) seconds per recording.
    pub voiced_s: f64,
    /// Scale of session-to-session voice drift; 0 disables it.
    pub drift: f64,
    pub seed: u64,
}

impl Default for VoiceSpec {
    fn default() -> Self {
        VoiceSpec {
            n_calibration_speakers: 10,
            n_evaluation_speakers: 20,
            sample_rate_hz: 8000,
            voiced_s: 52.0,
            drift: 1.0,
            seed: 7,
        }
    }
}

/// Vowel preferences per task: read speech is balanced, the other two tasks
/// lean on one vowel each.
const TASK_VOWEL_WEIGHTS: [[f64; 3]; 3] = [[1.0, 1.0, 1.0], [1.4, 1.0, 0.7], [0.7, 1.0, 1.4]];

fn pick(weights: &[f64; 3], rng: &mut impl Rng) -> usize {
    let mut x = rng.gen_range(0.0..weights.iter().sum::<f64>());
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    2
}

/// Syllable-rate amplitude modulation over phrases, separated by near-silent
/// pauses.
pub fn synth_speech(profile: &VoiceProfile, task: u32, voiced_s: f64, sample_rate_hz: u32, seed: u64) -> AudioSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = sample_rate_hz as f64;
    let tables: Vec<Vec<f64>> = (0..3).map(|v| profile.wavetable(v, sample_rate_hz)).collect();
    let weights = &TASK_VOWEL_WEIGHTS[(task as usize).clamp(1, 3) - 1];
    let breath = Normal::new(0.0, 0.003).expect("valid sd");
    let floor = Normal::new(0.0, 1e-4).expect("valid sd");
    let gain = 0.5;

    let mut out = Vec::with_capacity(((voiced_s * 1.25 + 1.0) * sr) as usize);
    let mut phase = 0.0f64;
    let mut spoken = 0usize;
    let target = (voiced_s * sr) as usize;
    let lead = (0.3 * sr) as usize;
    out.extend((0..lead).map(|_| floor.sample(&mut rng)));
    while spoken < target {
        let phrase = ((rng.gen_range(1.5..4.0) * sr) as usize).min(target - spoken).max(1);
        let vib = rng.gen_range(0.0..2.0 * PI);
        let mut i = 0;
        while i < phrase {
            let syl = ((rng.gen_range(0.15..0.35) * sr) as usize).min(phrase - i);
            let table = &tables[pick(weights, &mut rng)];
            for j in 0..syl {
                let t = (spoken + i + j) as f64 / sr;
                let f0 = profile.f0_hz * (1.0 + 0.04 * (2.0 * PI * 0.7 * t + vib).sin());
                phase = (phase + f0 / sr).fract();
                let x = phase * TABLE_LEN as f64;
                let k = x as usize;
                let frac = x - k as f64;
                let v = table[k] * (1.0 - frac) + table[(k + 1) % TABLE_LEN] * frac;
                let env = 0.35 + 0.65 * (PI * j as f64 / syl as f64).sin().powi(2);
                out.push(gain * env * v + breath.sample(&mut rng));
            }
            i += syl;
        }
        spoken += phrase;
        let pause = (rng.gen_range(0.3..0.8) * sr) as usize;
        out.extend((0..pause).map(|_| floor.sample(&mut rng)));
    }
    AudioSignal {
        samples: out,
        sample_rate_hz,
    }
}

fn voice_jobs(spec: &VoiceSpec) -> Vec<(ManifestRole, RecordingMeta, VoiceProfile, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut jobs = Vec::new();
    for (prefix, n, role) in [
        ("cal", spec.n_calibration_speakers, ManifestRole::Calibration),
        ("ev", spec.n_evaluation_speakers, ManifestRole::Evaluation),
    ] {
        let profiles = VoiceProfile::stratified(n, &mut rng);
        for (spk, profile) in speaker_ids(prefix, n).into_iter().zip(profiles) {
            for session in 1..=2 {
                let session_profile = profile.drift(spec.drift, &mut rng);
                for task in 1..=3 {
                    let id = format!("{spk}_s{session}_t{task}");
                    let meta = RecordingMeta {
                        path: PathBuf::from("wav").join(format!("{id}.wav")),
                        recording_id: id,
                        speaker_id: spk.clone(),
                        session,
                        task,
                        sample_rate_hz: spec.sample_rate_hz,
                        duration_s: None,
                    };
                    jobs.push((role, meta, session_profile.clone(), rng.gen::<u64>()));
                }
            }
        }
    }
    jobs
}

fn split_manifests(spec: &VoiceSpec, rows: Vec<(ManifestRole, RecordingMeta)>) -> (Manifest, Manifest) {
    let (cal, eval): (Vec<_>, Vec<_>) = rows.into_iter().partition(|(r, _)| *r == ManifestRole::Calibration);
    let make = |role, prefix: &str, rows: Vec<(ManifestRole, RecordingMeta)>| Manifest {
        dataset_name: format!("synthetic-voices-{prefix}-{}", spec.seed),
        role,
        recordings: rows.into_iter().map(|(_, m)| m).collect(),
    };
    (
        make(ManifestRole::Calibration, "cal", cal),
        make(ManifestRole::Evaluation, "ev", eval),
    )
}

/// Writes one WAV per (speaker, session, task) under `dir/wav` and the two
/// recording-level manifests into `dir`. Returns (calibration, evaluation)
/// manifest paths.
pub fn write_voice_corpus(spec: &VoiceSpec, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let wav_dir = dir.join("wav");
    std::fs::create_dir_all(&wav_dir).map_err(|e| crate::Error::io(&wav_dir, e))?;
    let jobs = voice_jobs(spec);
    jobs.par_iter().try_for_each(|(_, meta, profile, seed)| {
        let signal = synth_speech(profile, meta.task, spec.voiced_s, spec.sample_rate_hz, *seed);
        audio::write_wav(&dir.join(&meta.path), &signal)
    })?;
    let (calibration, evaluation) = split_manifests(spec, jobs.into_iter().map(|(r, m, _, _)| (r, m)).collect());
    let cal = dir.join(CALIBRATION_MANIFEST);
    let eval = dir.join(EVALUATION_MANIFEST);
    calibration.write(&cal)?;
    evaluation.write(&eval)?;
    Ok((cal, eval))
}

/// The same corpus as [`write_voice_corpus`], run through silence removal,
/// chunking and the baseline embedder in memory. Manifests are chunk-level.
pub fn voice_corpus(spec: &VoiceSpec) -> Result<SynthCorpus> {
    let vad = VadParams::default();
    let jobs = voice_jobs(spec);
    let per_recording = jobs
        .par_iter()
        .map(
            |(role, meta, profile, seed)| -> Result<Vec<(ManifestRole, RecordingMeta, EmbeddingRecord)>> {
                let signal = synth_speech(profile, meta.task, spec.voiced_s, spec.sample_rate_hz, *seed);
                let voiced = audio::remove_silence(&signal, &vad)?;
                let plan = audio::plan_durations(voiced.duration_s())?;
                let embedder = BaselineEmbedder::new(spec.sample_rate_hz);
                audio::split_chunks(&meta.recording_id, &voiced, &plan)?
                    .into_iter()
                    .map(|chunk| {
                        let id = chunk.id();
                        let row = RecordingMeta {
                            path: PathBuf::from(CHUNK_DIR).join(format!("{id}.wav")),
                            recording_id: id.clone(),
                            duration_s: Some(chunk.duration_s),
                            ..meta.clone()
                        };
                        let record = EmbeddingRecord {
                            sample_id: id,
                            speaker_id: meta.speaker_id.clone(),
                            session: meta.session,
                            task: meta.task,
                            duration_s: chunk.duration_s,
                            dim: BASELINE_DIM,
                            vector: embedder.embed(&chunk.samples)?,
                        };
                        Ok((*role, row, record))
                    })
                    .collect()
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for (role, row, record) in per_recording.into_iter().flatten() {
        rows.push((role, row));
        records.push(record);
    }
    let (calibration, evaluation) = split_manifests(spec, rows);
    Ok(SynthCorpus {
        calibration,
        evaluation,
        embeddings: EmbeddingSet::new(records, BASELINE_TAG)?,
    })
}
