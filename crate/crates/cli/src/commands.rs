use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Serialize;
use voicelr::audio::VadParams;
use voicelr::embeddings::{self, EmbeddingSet, EnrollFilter};
use voicelr::evaluation::{self, Axis, CellMinimums, EvalSettings, EvaluationReport, Mode, ScenarioConfig, TrialScope};
use voicelr::metrics::GridSpec;
use voicelr::model::{self, EmbeddingRecord, Manifest};
use voicelr::prep::{self, AugmentOptions, PrepOptions};
use voicelr::scoring::{self, CalibrationConfig, VectorLookup, Weighting};
use voicelr::synth;
use voicelr::{Error, Result};

use crate::config::{echo, require_inputs, required, FileConfig, OutputLock};
use crate::{
    CalibrateArgs, CalibrationFlags, EmbedArgs, EnrollArgs, EvaluateArgs, PrepArgs, ReportArgs, ScoreArgs, SynthArgs,
    TrialsArgs,
};

pub const EFFECTIVE_CONFIG: &str = "effective_config.toml";

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// `dir/name.ext` -> `dir/name.effective.toml`, the config echo of a
/// single-file output.
fn echo_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parent_dir(out).join(format!("{stem}.effective.toml"))
}

fn load_embeddings(paths: &[PathBuf]) -> Result<EmbeddingSet> {
    require_inputs(paths.iter().map(PathBuf::as_path))?;
    let mut sets = paths
        .iter()
        .map(|p| embeddings::ingest(p))
        .collect::<Result<Vec<_>>>()?;
    if sets.len() == 1 {
        Ok(sets.pop().expect("one set"))
    } else {
        EmbeddingSet::merge(sets)
    }
}

/// Removes a directory this command created if it is still empty.
fn cleanup_if_empty(dir: &Path, existed: bool) {
    if !existed {
        let _ = std::fs::remove_dir(dir);
    }
}

#[derive(Serialize)]
struct VadEffective {
    frame_ms: f64,
    hop_ms: f64,
    threshold_db: f64,
}

#[derive(Serialize)]
struct PrepEffective {
    manifest: PathBuf,
    base_dir: PathBuf,
    out_dir: PathBuf,
    strict: bool,
    augment: bool,
    vad: VadEffective,
    #[serde(skip_serializing_if = "Option::is_none")]
    augmentation: Option<AugmentOptions>,
}

pub fn prep(a: PrepArgs, file: &FileConfig) -> Result<()> {
    let f = &file.prep;
    let manifest_path = required(a.manifest, f.manifest.clone(), "prep.manifest")?;
    let out_dir = required(a.out_dir, f.out_dir.clone(), "prep.out_dir")?;
    let base_dir = a
        .base_dir
        .or(f.base_dir.clone())
        .unwrap_or_else(|| parent_dir(&manifest_path));
    let d = VadParams::default();
    let vad = VadParams {
        frame_ms: a.vad_frame_ms.or(f.vad.frame_ms).unwrap_or(d.frame_ms),
        hop_ms: a.vad_hop_ms.or(f.vad.hop_ms).unwrap_or(d.hop_ms),
        threshold_db: a.vad_threshold_db.or(f.vad.threshold_db).unwrap_or(d.threshold_db),
    };
    let augment = a.augment || f.augment.unwrap_or(false);
    let fa = &f.augmentation;
    let da = AugmentOptions::default();
    let augmentation = augment.then(|| AugmentOptions {
        time_scales: a.time_scales.or(fa.time_scales.clone()).unwrap_or(da.time_scales),
        snr_db: a.snr_db.or(fa.snr_db).unwrap_or(da.snr_db),
        noise_variants: a.noise_variants.or(fa.noise_variants).unwrap_or(da.noise_variants),
        seed: a.seed.or(fa.seed).unwrap_or(da.seed),
    });
    let strict = a.strict || f.strict.unwrap_or(false);
    let effective = PrepEffective {
        manifest: manifest_path.clone(),
        base_dir: base_dir.clone(),
        out_dir: out_dir.clone(),
        strict,
        augment,
        vad: VadEffective {
            frame_ms: vad.frame_ms,
            hop_ms: vad.hop_ms,
            threshold_db: vad.threshold_db,
        },
        augmentation: augmentation.clone(),
    };
    echo("prep", &effective, None)?;

    require_inputs([manifest_path.as_path(), base_dir.as_path()])?;
    let manifest = Manifest::read(&manifest_path)?;
    if strict {
        let wavs: Vec<PathBuf> = manifest
            .recordings
            .iter()
            .map(|r| prep::resolve(&base_dir, &r.path))
            .collect();
        require_inputs(wavs.iter().map(PathBuf::as_path))?;
    }
    let existed = out_dir.exists();
    let opts = PrepOptions {
        vad,
        augment: augmentation,
        strict,
    };
    let result = (|| {
        let _lock = OutputLock::acquire(&out_dir)?;
        prep::prepare_manifest(&manifest, &base_dir, &out_dir, &opts)
    })();
    let (_, summary) = match result {
        Ok(r) => r,
        Err(e) => {
            cleanup_if_empty(&out_dir, existed);
            return Err(e);
        }
    };
    echo("prep", &effective, Some(&out_dir.join(EFFECTIVE_CONFIG)))?;
    println!("recording_id\tchunks\taugmented");
    for c in &summary.per_recording {
        println!("{}\t{}\t{}", c.recording_id, c.chunks, c.augmented);
    }
    for fail in &summary.failures {
        eprintln!("skipped {}: {}", fail.recording_id, fail.error);
    }
    println!(
        "{} recordings, {} chunks, {} augmented variants, {} skipped -> {}",
        summary.n_recordings,
        summary.n_chunks,
        summary.n_augmented,
        summary.failures.len(),
        out_dir.join(prep::CHUNK_MANIFEST).display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EmbedEffective {
    manifest: PathBuf,
    base_dir: PathBuf,
    out: PathBuf,
    embedder: &'static str,
}

pub fn embed(a: EmbedArgs, file: &FileConfig) -> Result<()> {
    let f = &file.embed;
    let manifest_path = required(a.manifest, f.manifest.clone(), "embed.manifest")?;
    let out = required(a.out, f.out.clone(), "embed.out")?;
    let base_dir = a
        .base_dir
        .or(f.base_dir.clone())
        .unwrap_or_else(|| parent_dir(&manifest_path));
    let effective = EmbedEffective {
        manifest: manifest_path.clone(),
        base_dir: base_dir.clone(),
        out: out.clone(),
        embedder: embeddings::BASELINE_TAG,
    };
    echo("embed", &effective, None)?;
    require_inputs([manifest_path.as_path(), base_dir.as_path()])?;
    let manifest = Manifest::read(&manifest_path)?;
    let set = prep::embed_manifest(&manifest, &base_dir)?;
    let _lock = OutputLock::acquire(&parent_dir(&out))?;
    set.write(&out)?;
    echo("embed", &effective, Some(&echo_path(&out)))?;
    println!(
        "{} embeddings (dim {}) -> {}",
        set.records.len(),
        set.dim,
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EnrollEffective {
    embeddings: Vec<PathBuf>,
    out: PathBuf,
    sessions: Vec<u32>,
    include_augmented: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    speakers: Option<Vec<String>>,
}

pub fn enroll(a: EnrollArgs, file: &FileConfig) -> Result<()> {
    let f = &file.enroll;
    let filter = EnrollFilter {
        sessions: a
            .sessions
            .or(f.sessions.clone())
            .unwrap_or_else(|| EnrollFilter::default().sessions),
        include_augmented: a.include_augmented || f.include_augmented.unwrap_or(false),
    };
    let effective = EnrollEffective {
        embeddings: a.embeddings.clone(),
        out: a.out.clone(),
        sessions: filter.sessions.clone(),
        include_augmented: filter.include_augmented,
        speakers: a.speakers.clone(),
    };
    echo("enroll", &effective, None)?;
    let set = load_embeddings(&a.embeddings)?;
    let enrolled = match &a.speakers {
        Some(list) => list
            .iter()
            .map(|s| embeddings::enroll(&set, s, &filter))
            .collect::<Result<Vec<_>>>()?,
        None => embeddings::enroll_all(&set, &filter),
    };
    if enrolled.is_empty() {
        return Err(Error::Validation(
            "no speaker has samples passing the enrollment filter".into(),
        ));
    }
    let records: Vec<EmbeddingRecord> = enrolled.iter().map(|e| e.to_record()).collect();
    let _lock = OutputLock::acquire(&parent_dir(&a.out))?;
    model::write_jsonl(&a.out, &records)?;
    echo("enroll", &effective, Some(&echo_path(&a.out)))?;
    for e in &enrolled {
        println!("{}\t{} samples\t{:.1} s", e.sample_id(), e.n_samples, e.duration_s);
    }
    Ok(())
}

#[derive(Serialize)]
struct TrialsEffective {
    manifest: PathBuf,
    embeddings: Vec<PathBuf>,
    mode: String,
    scope: String,
    out: PathBuf,
}

pub const ENROLLMENTS_FILE: &str = "enrollments.jsonl";

pub fn trials(a: TrialsArgs, file: &FileConfig) -> Result<()> {
    let f = &file.trials;
    let mode: Mode = a.mode.or(f.mode.clone()).unwrap_or_else(|| "pairwise".into()).parse()?;
    let scope: TrialScope = a
        .scope
        .or(f.scope.clone())
        .unwrap_or_else(|| "cross-session".into())
        .parse()?;
    let effective = TrialsEffective {
        manifest: a.manifest.clone(),
        embeddings: a.embeddings.clone(),
        mode: mode.to_string(),
        scope: scope.to_string(),
        out: a.out.clone(),
    };
    echo("trials", &effective, None)?;
    require_inputs([a.manifest.as_path()])?;
    let manifest = Manifest::read(&a.manifest)?;
    let set = load_embeddings(&a.embeddings)?;
    let ts = evaluation::generate_trials_scoped(&manifest, &set, mode, scope)?;
    let dir = parent_dir(&a.out);
    let _lock = OutputLock::acquire(&dir)?;
    model::write_trials(&a.out, &ts.trials)?;
    if mode == Mode::Enrollment {
        let records: Vec<EmbeddingRecord> = ts.enrollments.iter().map(|e| e.to_record()).collect();
        model::write_jsonl(&dir.join(ENROLLMENTS_FILE), &records)?;
    }
    echo("trials", &effective, Some(&echo_path(&a.out)))?;
    for x in &ts.exclusions {
        eprintln!("excluded speaker {}: {}", x.speaker_id, x.reason);
    }
    let n_same = ts.trials.iter().filter(|t| t.label.is_same()).count();
    println!(
        "{} trials ({} same-origin, {} different-origin), {} speakers excluded -> {}",
        ts.trials.len(),
        n_same,
        ts.trials.len() - n_same,
        ts.exclusions.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ScoreEffective {
    trials: PathBuf,
    embeddings: Vec<PathBuf>,
    out: PathBuf,
    score: &'static str,
}

pub fn score(a: ScoreArgs) -> Result<()> {
    let effective = ScoreEffective {
        trials: a.trials.clone(),
        embeddings: a.embeddings.clone(),
        out: a.out.clone(),
        score: "cosine",
    };
    echo("score", &effective, None)?;
    require_inputs([a.trials.as_path()])?;
    let trials = model::read_trials(&a.trials)?;
    if trials.is_empty() {
        return Err(Error::Validation("empty trial set".into()));
    }
    let set = load_embeddings(&a.embeddings)?;
    let scored = scoring::score_trials(&trials, &VectorLookup::new(&set))?;
    let _lock = OutputLock::acquire(&parent_dir(&a.out))?;
    model::write_scores(&a.out, &scored)?;
    echo("score", &effective, Some(&echo_path(&a.out)))?;
    println!("{} scores -> {}", scored.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct CalibrationEffective {
    weighting: String,
    l2: f64,
    clip: f64,
}

impl From<&CalibrationConfig> for CalibrationEffective {
    fn from(c: &CalibrationConfig) -> Self {
        CalibrationEffective {
            weighting: c.weighting.to_string(),
            l2: c.l2,
            clip: c.clip,
        }
    }
}

fn calibration_config(flags: &CalibrationFlags, file: &FileConfig) -> Result<CalibrationConfig> {
    let f = &file.calibration;
    let mut cfg = if flags.compat || f.compat.unwrap_or(false) {
        CalibrationConfig::compat()
    } else {
        CalibrationConfig::default()
    };
    if let Some(w) = flags.weighting.clone().or(f.weighting.clone()) {
        cfg.weighting = w.parse::<Weighting>()?;
    }
    if let Some(l2) = flags.l2.or(f.l2) {
        cfg.l2 = l2;
    }
    if let Some(clip) = flags.clip.or(f.clip) {
        cfg.clip = clip;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct CalibrateEffective {
    scores: PathBuf,
    out: PathBuf,
    calibration: CalibrationEffective,
}

pub fn calibrate(a: CalibrateArgs, file: &FileConfig) -> Result<()> {
    let cfg = calibration_config(&a.calibration, file)?;
    let effective = CalibrateEffective {
        scores: a.scores.clone(),
        out: a.out.clone(),
        calibration: (&cfg).into(),
    };
    echo("calibrate", &effective, None)?;
    require_inputs([a.scores.as_path()])?;
    let scored = model::read_scores(&a.scores)?;
    let fitted = scoring::fit_calibration(&scored, &cfg)?;
    let _lock = OutputLock::acquire(&parent_dir(&a.out))?;
    fitted.write(&a.out)?;
    echo("calibrate", &effective, Some(&echo_path(&a.out)))?;
    println!(
        "weight {} bias {} ({} same-origin, {} different-origin) -> {}",
        fitted.weight,
        fitted.bias,
        fitted.training_meta.n_same,
        fitted.training_meta.n_diff,
        a.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TippetEffective {
    step: f64,
    margin: f64,
}

#[derive(Serialize)]
struct EvaluateEffective {
    mode: String,
    calibration_manifest: PathBuf,
    evaluation_manifest: PathBuf,
    embeddings: Vec<PathBuf>,
    breakdowns: Vec<String>,
    min_cell_so: usize,
    min_cell_do: usize,
    calibration_scope: String,
    out_dir: PathBuf,
    calibration: CalibrationEffective,
    tippet: TippetEffective,
}

pub fn evaluate(a: EvaluateArgs, file: &FileConfig) -> Result<()> {
    let f = &file.evaluate;
    let mode: Mode = a.mode.or(f.mode.clone()).unwrap_or_else(|| "pairwise".into()).parse()?;
    let calibration_manifest = required(
        a.calibration_manifest,
        f.calibration_manifest.clone(),
        "evaluate.calibration_manifest",
    )?;
    let evaluation_manifest = required(
        a.evaluation_manifest,
        f.evaluation_manifest.clone(),
        "evaluate.evaluation_manifest",
    )?;
    let embeddings = if a.embeddings.is_empty() {
        required(None, f.embeddings.clone(), "evaluate.embeddings")?
    } else {
        a.embeddings
    };
    let out_dir = required(a.out_dir, f.out_dir.clone(), "evaluate.out_dir")?;
    let breakdowns = a
        .breakdowns
        .or(f.breakdowns.clone())
        .unwrap_or_else(|| vec!["duration".into(), "task".into()])
        .iter()
        .map(|s| s.parse::<Axis>())
        .collect::<Result<BTreeSet<_>>>()?;
    let defaults = CellMinimums::default();
    let mins = CellMinimums {
        so: a.min_cell_so.or(f.min_cell_so).unwrap_or(defaults.so),
        r#do: a.min_cell_do.or(f.min_cell_do).unwrap_or(defaults.r#do),
    };
    let calibration_scope = a
        .calibration_scope
        .or(file.calibration.scope.clone())
        .map(|s| s.parse::<TrialScope>())
        .transpose()?;
    let grid_defaults = GridSpec::default();
    let tippet_grid = GridSpec {
        step: a.tippet_step.or(file.tippet.step).unwrap_or(grid_defaults.step),
        margin: a.tippet_margin.or(file.tippet.margin).unwrap_or(grid_defaults.margin),
    };
    let settings = EvalSettings {
        mode,
        breakdowns,
        mins,
        calibration: calibration_config(&a.calibration, file)?,
        calibration_scope,
        tippet_grid,
    };
    let effective = EvaluateEffective {
        mode: mode.to_string(),
        calibration_manifest: calibration_manifest.clone(),
        evaluation_manifest: evaluation_manifest.clone(),
        embeddings: embeddings.clone(),
        breakdowns: settings.breakdowns.iter().map(ToString::to_string).collect(),
        min_cell_so: mins.so,
        min_cell_do: mins.r#do,
        calibration_scope: settings.effective_calibration_scope().to_string(),
        out_dir: out_dir.clone(),
        calibration: (&settings.calibration).into(),
        tippet: TippetEffective {
            step: tippet_grid.step,
            margin: tippet_grid.margin,
        },
    };
    echo("evaluate", &effective, None)?;
    require_inputs(
        [calibration_manifest.as_path(), evaluation_manifest.as_path()]
            .into_iter()
            .chain(embeddings.iter().map(PathBuf::as_path)),
    )?;

    let config = ScenarioConfig {
        calibration_manifest,
        evaluation_manifest,
        embeddings,
        settings,
    };
    let existed = out_dir.exists();
    let result = (|| {
        let _lock = OutputLock::acquire(&out_dir)?;
        evaluation::run_pipeline(&config, &out_dir)
    })();
    let report = match result {
        Ok(r) => r,
        Err(e) => {
            cleanup_if_empty(&out_dir, existed);
            return Err(e);
        }
    };
    echo("evaluate", &effective, Some(&out_dir.join(EFFECTIVE_CONFIG)))?;
    print_summary(&report);
    println!("report -> {}", out_dir.join(evaluation::outputs::REPORT).display());
    Ok(())
}

fn print_summary(r: &EvaluationReport) {
    let g = &r.global;
    let s = &r.scenario;
    println!(
        "{} mode: {} trials ({} same-origin, {} different-origin); calibration on {} {} trials",
        s.mode,
        s.n_evaluation_trials,
        s.n_same_origin,
        s.n_different_origin,
        s.n_calibration_trials,
        s.calibration_scope
    );
    println!(
        "Cllr {:.4}  Cllr_min {:.4}  Cllr_cal {:.4}  EER {:.2}%",
        g.cllr,
        g.cllr_min,
        g.cllr_cal,
        100.0 * g.eer
    );
    for w in &r.warnings {
        println!("warning: {w}");
    }
    for x in &r.exclusions {
        println!("excluded {} speaker {}: {}", x.split, x.speaker_id, x.reason);
    }
}

pub fn report(a: ReportArgs) -> Result<()> {
    let r = EvaluationReport::read(&a.report)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
        return Ok(());
    }
    print_summary(&r);
    println!(
        "calibration: weight {} bias {} ({})",
        r.calibration.weight, r.calibration.bias, r.calibration.training_meta.weighting
    );
    for m in [&r.matrices.duration, &r.matrices.task].into_iter().flatten() {
        println!("\nEER (%) by {}, known side down, unknown side across", m.axis);
        print!("{:>10}", "");
        for c in &m.col_keys {
            print!("{c:>7}");
        }
        println!();
        for (key, row) in m.row_keys.iter().zip(&m.cells) {
            print!("{key:>10}");
            for cell in row {
                match cell.eer {
                    Some(e) => print!("{:>7.2}", 100.0 * e),
                    None => print!("{:>7}", "-"),
                }
            }
            println!();
        }
    }
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    eprintln!(
        "# effective configuration of `voicelr synth`\nkind = {:?}\nseed = {}\ncalibration_speakers = {}\nevaluation_speakers = {}",
        a.kind, a.seed, a.calibration_speakers, a.evaluation_speakers
    );
    match a.kind.as_str() {
        "clusters" => {
            let spec = synth::ClusterSpec {
                n_calibration_speakers: a.calibration_speakers,
                n_evaluation_speakers: a.evaluation_speakers,
                seed: a.seed,
                ..Default::default()
            };
            let paths = synth::cluster_corpus(&spec).write(&a.out_dir)?;
            for p in paths {
                println!("{}", p.display());
            }
        }
        "voices" => {
            let spec = synth::VoiceSpec {
                n_calibration_speakers: a.calibration_speakers,
                n_evaluation_speakers: a.evaluation_speakers,
                voiced_s: a.voiced_s,
                seed: a.seed,
                ..Default::default()
            };
            let (cal, eval) = synth::write_voice_corpus(&spec, &a.out_dir)?;
            println!("{}\n{}", cal.display(), eval.display());
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown synthetic corpus kind {other:?}"
            )));
        }
    }
    Ok(())
}
