//! Corpus preparation: WAV I/O, energy-based silence removal, duration
//! planning, overlapped chunking and augmentation.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Shortest and longest protocol chunk, in seconds.
pub const MIN_CHUNK_S: u32 = 2;
pub const MAX_CHUNK_S: u32 = 10;

/// Fraction of the previous chunk that the next chunk overlaps.
pub const OVERLAP: f64 = 0.1;

const PLAN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidArgument("empty signal".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument("non-finite sample".into()));
        }
        Ok(AudioSignal {
            samples,
            sample_rate_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Mean squared amplitude.
    pub fn power(&self) -> f64 {
        mean_square(&self.samples)
    }
}

fn mean_square(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Reads a 16-bit PCM WAV file, averaging channels to mono.
pub fn load_wav(path: &Path) -> Result<AudioSignal> {
    let mut reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Format {
            field: "format_tag",
            message: format!("{}: only integer PCM is supported", path.display()),
        });
    }
    if spec.bits_per_sample != 16 {
        return Err(Error::Format {
            field: "bits_per_sample",
            message: format!("{}: {} bits, expected 16", path.display(), spec.bits_per_sample),
        });
    }
    let channels = spec.channels.max(1) as usize;
    let raw: Vec<i16> = reader
        .samples::<i16>()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| wav_error(path, e))?;
    if raw.len() % channels != 0 {
        return Err(Error::Format {
            field: "data_size",
            message: format!("{}: truncated sample frame", path.display()),
        });
    }
    let samples: Vec<f64> = raw
        .chunks_exact(channels)
        .map(|frame| frame.iter().map(|&s| s as f64 / 32768.0).sum::<f64>() / channels as f64)
        .collect();
    AudioSignal::new(samples, spec.sample_rate).map_err(|_| Error::Format {
        field: "data_size",
        message: format!("{}: no samples", path.display()),
    })
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        // hound reports short reads as `Other` ("Failed to read enough bytes")
        hound::Error::IoError(io)
            if !matches!(io.kind(), std::io::ErrorKind::UnexpectedEof | std::io::ErrorKind::Other) =>
        {
            Error::io(path, io)
        }
        hound::Error::IoError(_) => Error::Format {
            field: "data_size",
            message: format!("{}: truncated file", path.display()),
        },
        hound::Error::FormatError(msg) => Error::Format {
            field: "header",
            message: format!("{}: {msg}", path.display()),
        },
        hound::Error::Unsupported => Error::Format {
            field: "format_tag",
            message: format!("{}: unsupported encoding", path.display()),
        },
        other => Error::Format {
            field: "header",
            message: format!("{}: {other}", path.display()),
        },
    }
}

/// Writes a mono 16-bit PCM WAV, clamping samples to the representable range.
pub fn write_wav(path: &Path, signal: &AudioSignal) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in &signal.samples {
        let v = (s * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        writer.write_sample(v).map_err(|e| wav_error(path, e))?;
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

/// Frame-energy voice activity detection parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VadParams {
    pub frame_ms: f64,
    pub hop_ms: f64,
    /// Threshold relative to the loudest frame, in dB (negative).
    pub threshold_db: f64,
}

impl Default for VadParams {
    fn default() -> Self {
        VadParams {
            frame_ms: 25.0,
            hop_ms: 10.0,
            threshold_db: -35.0,
        }
    }
}

impl VadParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.hop_ms > 0.0 && self.frame_ms >= self.hop_ms) {
            return Err(Error::InvalidArgument(format!(
                "VAD needs frame_ms >= hop_ms > 0 (got {} / {})",
                self.frame_ms, self.hop_ms
            )));
        }
        if !self.threshold_db.is_finite() {
            return Err(Error::InvalidArgument("VAD threshold must be finite".into()));
        }
        Ok(())
    }

    /// (frame, hop) lengths in samples, at least one each.
    pub fn lengths(&self, sample_rate_hz: u32) -> (usize, usize) {
        let sr = sample_rate_hz as f64;
        let frame = ((self.frame_ms * sr / 1000.0).round() as usize).max(1);
        let hop = ((self.hop_ms * sr / 1000.0).round() as usize).clamp(1, frame);
        (frame, hop)
    }
}

/// Per-frame log energy (dB of mean square) of full frames.
pub fn frame_energies_db(samples: &[f64], frame: usize, hop: usize) -> Vec<f64> {
    if samples.len() < frame {
        return Vec::new();
    }
    let n_frames = (samples.len() - frame) / hop + 1;
    (0..n_frames)
        .map(|k| {
            let ms = mean_square(&samples[k * hop..k * hop + frame]);
            if ms > 0.0 {
                10.0 * ms.log10()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

/// Removes silent stretches.
///
/// Each full frame owns the `hop` samples at its start; the final frame also
/// owns the rest of its window. A frame's samples are kept when its energy is
/// above `peak + threshold_db`. Samples past the last full frame are dropped.
pub fn remove_silence(signal: &AudioSignal, params: &VadParams) -> Result<AudioSignal> {
    params.validate()?;
    let (frame, hop) = params.lengths(signal.sample_rate_hz);
    let energies = frame_energies_db(&signal.samples, frame, hop);
    let peak = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return Err(Error::EmptyVoiced);
    }
    let threshold = peak + params.threshold_db;
    let last = energies.len() - 1;
    let mut out = Vec::with_capacity(signal.len());
    for (k, &e) in energies.iter().enumerate() {
        if e > threshold {
            let start = k * hop;
            let end = if k == last { start + frame } else { start + hop };
            out.extend_from_slice(&signal.samples[start..end]);
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyVoiced);
    }
    Ok(AudioSignal {
        samples: out,
        sample_rate_hz: signal.sample_rate_hz,
    })
}

/// Chunk durations for a voiced stretch of `total_voiced_s` seconds.
///
/// Cycles 2, 3, ..., 10, 2, ... and stops at the first chunk that would run
/// past the end, where each chunk starts 90% of the previous duration after
/// the previous start.
pub fn plan_durations(total_voiced_s: f64) -> Result<Vec<u32>> {
    if !(total_voiced_s >= MIN_CHUNK_S as f64 - PLAN_EPS) {
        return Err(Error::TooShort(total_voiced_s));
    }
    let mut plan = Vec::new();
    let mut start = 0.0;
    for d in (MIN_CHUNK_S..=MAX_CHUNK_S).cycle() {
        if start + d as f64 > total_voiced_s + PLAN_EPS {
            break;
        }
        plan.push(d);
        start += (1.0 - OVERLAP) * d as f64;
    }
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub source_recording_id: String,
    pub start_s: f64,
    pub duration_s: f64,
    pub samples: AudioSignal,
}

impl Chunk {
    pub fn start_ms(&self) -> u64 {
        (self.start_s * 1000.0).round() as u64
    }

    pub fn duration_ms(&self) -> u64 {
        (self.duration_s * 1000.0).round() as u64
    }

    /// Deterministic id `<recording_id>_<start_ms>_<dur_ms>`.
    pub fn id(&self) -> String {
        format!(
            "{}_{}_{}",
            self.source_recording_id,
            self.start_ms(),
            self.duration_ms()
        )
    }
}

/// Cuts `signal` according to `plan`; the first chunk that would overrun the
/// signal end is discarded together with the rest of the plan.
pub fn split_chunks(recording_id: &str, signal: &AudioSignal, plan: &[u32]) -> Result<Vec<Chunk>> {
    if plan.is_empty() {
        return Err(Error::InvalidArgument("empty chunk plan".into()));
    }
    let sr = signal.sample_rate_hz as f64;
    let mut chunks = Vec::with_capacity(plan.len());
    let mut start_s = 0.0;
    for &d in plan {
        let start = (start_s * sr).round() as usize;
        let len = (d as f64 * sr).round() as usize;
        if start + len > signal.len() {
            break;
        }
        chunks.push(Chunk {
            source_recording_id: recording_id.to_string(),
            start_s: start as f64 / sr,
            duration_s: d as f64,
            samples: AudioSignal {
                samples: signal.samples[start..start + len].to_vec(),
                sample_rate_hz: signal.sample_rate_hz,
            },
        });
        start_s += (1.0 - OVERLAP) * d as f64;
    }
    Ok(chunks)
}

/// Output length of a time-scaled signal: floor(factor * n), at least one sample.
pub fn scaled_len(n: usize, factor: f64) -> usize {
    ((factor * n as f64 + 1e-9).floor() as usize).max(1)
}

/// Stretches (factor > 1) or compresses (factor < 1) the signal by linear
/// interpolation over the sample sequence. Pitch shifts with the duration.
pub fn augment_time_scale(signal: &AudioSignal, factor: f64) -> Result<AudioSignal> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "time-scale factor {factor} must be > 0"
        )));
    }
    let n = signal.len();
    let m = scaled_len(n, factor);
    let x = &signal.samples;
    let samples = if m == 1 || n == 1 {
        vec![x[0]; m]
    } else {
        let step = (n - 1) as f64 / (m - 1) as f64;
        (0..m)
            .map(|j| {
                let pos = j as f64 * step;
                let i = (pos.floor() as usize).min(n - 2);
                let frac = pos - i as f64;
                x[i] + (x[i + 1] - x[i]) * frac
            })
            .collect()
    };
    Ok(AudioSignal {
        samples,
        sample_rate_hz: signal.sample_rate_hz,
    })
}

/// Zero-mean uniform white noise whose power is exactly
/// `signal_power / 10^(snr_db / 10)`.
pub fn white_noise_for_snr(signal_power: f64, n: usize, snr_db: f64, seed: u64) -> Result<Vec<f64>> {
    if !(signal_power > 0.0 && signal_power.is_finite()) {
        return Err(Error::InvalidArgument(
            "SNR is undefined for a zero-power signal".into(),
        ));
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidArgument("SNR must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mean = noise.iter().sum::<f64>() / n as f64;
    noise.iter_mut().for_each(|v| *v -= mean);
    let power = mean_square(&noise);
    if power == 0.0 {
        return Ok(noise);
    }
    let target = signal_power / 10f64.powf(snr_db / 10.0);
    let gain = (target / power).sqrt();
    noise.iter_mut().for_each(|v| *v *= gain);
    Ok(noise)
}

/// Adds seeded white noise at the requested SNR, clipping to [-1, 1].
pub fn augment_add_noise(signal: &AudioSignal, snr_db: f64, seed: u64) -> Result<AudioSignal> {
    let noise = white_noise_for_snr(signal.power(), signal.len(), snr_db, seed)?;
    let samples = signal
        .samples
        .iter()
        .zip(&noise)
        .map(|(s, n)| (s + n).clamp(-1.0, 1.0))
        .collect();
    Ok(AudioSignal {
        samples,
        sample_rate_hz: signal.sample_rate_hz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SR: u32 = 16000;

    fn sine(freq: f64, amp: f64, seconds: f64) -> Vec<f64> {
        let n = (seconds * SR as f64).round() as usize;
        (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / SR as f64).sin())
            .collect()
    }

    fn sig(samples: Vec<f64>) -> AudioSignal {
        AudioSignal::new(samples, SR).unwrap()
    }

    #[test]
    fn silence_only_is_empty_voiced() {
        let err = remove_silence(&sig(vec![0.0; SR as usize]), &VadParams::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyVoiced));
    }

    #[test]
    fn full_scale_sine_is_kept() {
        let s = sig(sine(1000.0, 1.0, 1.0));
        let out = remove_silence(&s, &VadParams::default()).unwrap();
        let (frame, _) = VadParams::default().lengths(SR);
        assert!(out.len() <= s.len());
        assert!(s.len() - out.len() < frame);
    }

    #[test]
    fn gap_is_removed() {
        let mut x = sine(440.0, 0.8, 1.0);
        x.extend(vec![0.0; SR as usize]);
        x.extend(sine(440.0, 0.8, 1.0));
        let s = sig(x);
        let params = VadParams::default();
        let out = remove_silence(&s, &params).unwrap();

        // Independent count: frames whose mean energy clears the threshold,
        // each contributing its hop (the last one its whole window).
        let (frame, hop) = params.lengths(SR);
        let n_frames = (s.len() - frame) / hop + 1;
        let energy = |k: usize| {
            let w = &s.samples[k * hop..k * hop + frame];
            w.iter().map(|v| v * v).sum::<f64>() / frame as f64
        };
        let peak = (0..n_frames).map(energy).fold(0.0, f64::max);
        let floor = peak * 10f64.powf(params.threshold_db / 10.0);
        let expected: usize = (0..n_frames)
            .filter(|&k| energy(k) > floor)
            .map(|k| if k == n_frames - 1 { frame } else { hop })
            .sum();
        assert_eq!(out.len(), expected);
        assert!((out.duration_s() - 2.0).abs() <= 0.025, "{}", out.duration_s());
    }

    #[test]
    fn invalid_vad_params() {
        let p = VadParams {
            frame_ms: 5.0,
            hop_ms: 10.0,
            threshold_db: -35.0,
        };
        assert!(remove_silence(&sig(vec![0.5; 1000]), &p).is_err());
    }

    #[test]
    fn plan_examples() {
        assert_eq!(plan_durations(2.0).unwrap(), vec![2]);
        assert_eq!(plan_durations(4.7).unwrap(), vec![2]);
        assert_eq!(plan_durations(4.8).unwrap(), vec![2, 3]);
        assert!(matches!(plan_durations(1.99), Err(Error::TooShort(_))));
    }

    #[test]
    fn plan_sixty_seconds_is_balanced() {
        let plan = plan_durations(60.0).unwrap();
        let counts: Vec<usize> = (2..=10).map(|d| plan.iter().filter(|&&p| p == d).count()).collect();
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1, "{counts:?}");
    }

    #[test]
    fn split_discards_overrun() {
        let s = sig(vec![0.1; 10 * SR as usize]);
        let chunks = split_chunks("r", &s, &[4, 4, 4]).unwrap();
        let starts: Vec<f64> = chunks.iter().map(|c| c.start_s).collect();
        assert_eq!(starts, vec![0.0, 3.6]);
        assert_eq!(chunks[1].id(), "r_3600_4000");
        // 10% shared between equal-duration neighbours
        let overlap = chunks[0].start_s + chunks[0].duration_s - chunks[1].start_s;
        assert!((overlap - 0.4).abs() < 1.0 / SR as f64);
    }

    #[test]
    fn split_exact_fit_and_empty_plan() {
        let s = sig(vec![0.1; 2 * SR as usize]);
        let chunks = split_chunks("r", &s, &[2]).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].samples.len(), s.len());
        assert!(split_chunks("r", &s, &[]).is_err());
    }

    #[test]
    fn time_scale_counts_and_constants() {
        let s = sig(vec![0.25; 16000]);
        assert_eq!(augment_time_scale(&s, 1.0).unwrap().len(), 16000);
        let slow = augment_time_scale(&s, 0.95).unwrap();
        assert_eq!(slow.len(), 15200);
        assert!(slow.samples.iter().all(|&v| v == 0.25));
        assert_eq!(augment_time_scale(&s, 1.05).unwrap().len(), 16800);
        assert!(augment_time_scale(&s, 0.0).is_err());
        assert!(augment_time_scale(&s, -1.0).is_err());
    }

    #[test]
    fn time_scale_identity_preserves_samples() {
        let s = sig(sine(300.0, 0.5, 0.1));
        assert_eq!(augment_time_scale(&s, 1.0).unwrap(), s);
    }

    #[test]
    fn noise_power_matches_snr_on_unit_power_signal() {
        // Square wave of unit power; residual measured on the additive
        // component since clipping would otherwise remove part of it.
        let x: Vec<f64> = (0..16000).map(|i| if (i / 40) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let s = sig(x);
        assert!((s.power() - 1.0).abs() < 1e-12);
        let noise = white_noise_for_snr(s.power(), s.len(), 15.0, 7).unwrap();
        let p = noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64;
        let expected = 10f64.powf(-1.5);
        assert!((p - expected).abs() / expected < 0.05, "{p}");
    }

    #[test]
    fn noise_residual_without_clipping() {
        let s = sig(sine(200.0, 0.5, 1.0));
        let out = augment_add_noise(&s, 15.0, 11).unwrap();
        let noise = white_noise_for_snr(s.power(), s.len(), 15.0, 11).unwrap();
        for ((o, x), n) in out.samples.iter().zip(&s.samples).zip(&noise) {
            assert!((o - x - n).abs() < 1e-15);
        }
    }

    #[test]
    fn noise_is_seeded_and_vanishes_at_high_snr() {
        let s = sig(sine(200.0, 0.5, 1.0));
        assert_eq!(
            augment_add_noise(&s, 15.0, 3).unwrap(),
            augment_add_noise(&s, 15.0, 3).unwrap()
        );
        assert_ne!(
            augment_add_noise(&s, 15.0, 3).unwrap(),
            augment_add_noise(&s, 15.0, 4).unwrap()
        );
        let quiet = augment_add_noise(&s, 100.0, 3).unwrap();
        let rms = (quiet
            .samples
            .iter()
            .zip(&s.samples)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / s.len() as f64)
            .sqrt();
        assert!(rms < 1e-4);
        assert!(augment_add_noise(&sig(vec![0.0; 100]), 15.0, 1).is_err());
    }

    #[test]
    fn wav_round_trip_and_formats() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("half.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: SR,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..SR {
            w.write_sample(16384i16).unwrap();
        }
        w.finalize().unwrap();
        let s = load_wav(&path).unwrap();
        assert_eq!(s.len(), 16000);
        assert!(s.samples.iter().all(|&v| v == 0.5));

        let stereo = dir.path().join("stereo.wav");
        let spec2 = hound::WavSpec { channels: 2, ..spec };
        let mut w = hound::WavWriter::create(&stereo, spec2).unwrap();
        for _ in 0..100 {
            w.write_sample(16384i16).unwrap();
            w.write_sample(-16384i16).unwrap();
        }
        w.finalize().unwrap();
        let s = load_wav(&stereo).unwrap();
        assert_eq!(s.len(), 100);
        assert!(s.samples.iter().all(|&v| v == 0.0));

        let eight = dir.path().join("eight.wav");
        let spec8 = hound::WavSpec {
            bits_per_sample: 8,
            ..spec
        };
        let mut w = hound::WavWriter::create(&eight, spec8).unwrap();
        for _ in 0..100 {
            w.write_sample(10i8).unwrap();
        }
        w.finalize().unwrap();
        assert!(matches!(
            load_wav(&eight),
            Err(Error::Format {
                field: "bits_per_sample",
                ..
            })
        ));

        let out = dir.path().join("out.wav");
        let orig = sig(vec![0.5, -0.25, 0.0, 0.125]);
        write_wav(&out, &orig).unwrap();
        assert_eq!(load_wav(&out).unwrap(), orig);
    }

    #[test]
    fn truncated_wav_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        write_wav(&path, &sig(vec![0.1; 1000])).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 501]).unwrap();
        assert!(matches!(load_wav(&path), Err(Error::Format { .. })));
        std::fs::write(&path, &bytes[..20]).unwrap();
        assert!(matches!(load_wav(&path), Err(Error::Format { .. })));
    }

    /// Voiced stretches of full-scale tone separated by digital silence, all
    /// aligned to the 10 ms hop, ending with a voiced stretch whose final
    /// frame closes exactly at the signal end.
    fn aligned_signal(pattern: &[(bool, usize)]) -> AudioSignal {
        let hop = 160;
        let mut x = Vec::new();
        for &(voiced, hops) in pattern {
            for i in 0..hops * hop {
                x.push(if voiced { (i as f64 * 0.3).sin() * 0.9 } else { 0.0 });
            }
        }
        x.extend((0..240).map(|i| (i as f64 * 0.3).sin() * 0.9));
        sig(x)
    }

    proptest! {
        #[test]
        fn silence_removal_is_idempotent(
            gaps in proptest::collection::vec((3usize..30, 1usize..30), 1..6)
        ) {
            let mut pattern = Vec::new();
            for (voiced, silent) in gaps {
                pattern.push((true, voiced));
                pattern.push((false, silent));
            }
            pattern.push((true, 3));
            let s = aligned_signal(&pattern);
            let p = VadParams::default();
            let once = remove_silence(&s, &p).unwrap();
            let twice = remove_silence(&once, &p).unwrap();
            prop_assert!(once.len() <= s.len());
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn chunks_respect_protocol(total in 2.0f64..80.0) {
            let n = (total * 1000.0) as usize;
            let s = AudioSignal::new(vec![0.1; n], 1000).unwrap();
            let plan = plan_durations(s.duration_s()).unwrap();
            let chunks = split_chunks("r", &s, &plan).unwrap();
            prop_assert_eq!(chunks.len(), plan.len());
            for w in chunks.windows(2) {
                let prev_end = w[0].start_s + w[0].duration_s;
                let overlap = prev_end - w[1].start_s;
                prop_assert!((overlap - 0.1 * w[0].duration_s).abs() <= 1.0 / 1000.0 + 1e-12);
            }
            for c in &chunks {
                prop_assert!((2.0..=10.0).contains(&c.duration_s));
                prop_assert!(c.start_s >= 0.0);
                prop_assert!(c.start_s + c.duration_s <= s.duration_s() + 1e-12);
            }
        }
    }
}
