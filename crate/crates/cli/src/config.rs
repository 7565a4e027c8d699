//! TOML config file: one section per stage, every key optional. Relative
//! paths are resolved against the config file's directory. Command-line flags
//! take precedence over file values, which take precedence over defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use voicelr::{Error, Result};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub prep: PrepSection,
    #[serde(default)]
    pub embed: EmbedSection,
    #[serde(default)]
    pub enroll: EnrollSection,
    #[serde(default)]
    pub trials: TrialsSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    #[serde(default)]
    pub tippet: TippetSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrepSection {
    pub manifest: Option<PathBuf>,
    pub base_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub strict: Option<bool>,
    pub augment: Option<bool>,
    #[serde(default)]
    pub vad: VadSection,
    #[serde(default)]
    pub augmentation: AugmentSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VadSection {
    pub frame_ms: Option<f64>,
    pub hop_ms: Option<f64>,
    pub threshold_db: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSection {
    pub time_scales: Option<Vec<f64>>,
    pub snr_db: Option<f64>,
    pub noise_variants: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedSection {
    pub manifest: Option<PathBuf>,
    pub base_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnrollSection {
    pub sessions: Option<Vec<u32>>,
    pub include_augmented: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialsSection {
    pub mode: Option<String>,
    pub scope: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub weighting: Option<String>,
    pub l2: Option<f64>,
    pub clip: Option<f64>,
    /// Shorthand for unweighted fitting with l2 = 1.
    pub compat: Option<bool>,
    /// Trial set the calibration is fitted on: "all-sessions" or "cross-session".
    pub scope: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    pub mode: Option<String>,
    pub calibration_manifest: Option<PathBuf>,
    pub evaluation_manifest: Option<PathBuf>,
    pub embeddings: Option<Vec<PathBuf>>,
    pub breakdowns: Option<Vec<String>>,
    pub min_cell_so: Option<usize>,
    pub min_cell_do: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TippetSection {
    pub step: Option<f64>,
    pub margin: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: FileConfig = toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        fix(&mut self.prep.manifest);
        fix(&mut self.prep.base_dir);
        fix(&mut self.prep.out_dir);
        fix(&mut self.embed.manifest);
        fix(&mut self.embed.base_dir);
        fix(&mut self.embed.out);
        fix(&mut self.evaluate.calibration_manifest);
        fix(&mut self.evaluate.evaluation_manifest);
        fix(&mut self.evaluate.out_dir);
        if let Some(list) = &mut self.evaluate.embeddings {
            for p in list.iter_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        }
    }
}

/// Flag value, else file value, else an error naming the missing setting.
pub fn required<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T> {
    flag.or(file)
        .ok_or_else(|| Error::InvalidArgument(format!("missing required setting `{name}` (flag or config file)")))
}

/// Errors with an I/O failure unless every input path exists.
pub fn require_inputs<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for p in paths {
        if !p.exists() {
            return Err(Error::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "input does not exist"),
            ));
        }
    }
    Ok(())
}

/// Serializes the effective settings of a command, prints them to stderr and,
/// when `echo_to` is given, writes them there for provenance.
pub fn echo<T: Serialize>(command: &str, effective: &T, echo_to: Option<&Path>) -> Result<()> {
    let body = toml::to_string_pretty(effective).expect("effective config serializes");
    let text = format!("# effective configuration of `voicelr {command}`\n{body}");
    eprintln!("{text}");
    if let Some(path) = echo_to {
        std::fs::write(path, &text).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Exclusive advisory lock on an output directory, released on drop.
pub struct OutputLock {
    path: PathBuf,
}

pub const LOCK_FILE: &str = ".voicelr.lock";

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<OutputLock> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use std::io::Write;
                let _ = writeln!(f, "{}", std::process::id());
                Ok(OutputLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::io(
                &path,
                std::io::Error::new(
                    e.kind(),
                    "output directory is in use by another run; delete the lock file if it is stale",
                ),
            )),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
