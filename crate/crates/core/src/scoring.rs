//! Cosine scoring of trials, logistic-regression calibration of scores, and
//! conversion of calibrated posteriors to likelihood ratios.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embeddings::{EmbeddingSet, EnrollmentVector};
use crate::error::{Error, Result};
use crate::metrics::LabeledLogLRs;
use crate::model::{ScoredTrial, Trial};

/// Default posterior clip; keeps likelihood ratios finite and non-zero.
pub const DEFAULT_CLIP: f64 = 1e-15;

/// Gradient tolerance per unit of total sample weight.
const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 200;

/// Normalized dot product `a.b / (|a| |b|)`, clamped to [-1, 1].
pub fn cosine_score(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let (mut dot, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::InvalidArgument("zero-norm vector".into()));
    }
    Ok((dot / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0))
}

/// Resolves trial references to vectors: sample ids from embedding sets and
/// `enroll:<speaker>` ids from enrollment vectors.
#[derive(Debug, Default)]
pub struct VectorLookup<'a> {
    vectors: HashMap<&'a str, &'a [f64]>,
    enrollment_ids: Vec<String>,
    enrollments: Vec<&'a [f64]>,
}

impl<'a> VectorLookup<'a> {
    pub fn new(set: &'a EmbeddingSet) -> Self {
        let vectors = set
            .records
            .iter()
            .map(|r| (r.sample_id.as_str(), r.vector.as_slice()))
            .collect();
        VectorLookup {
            vectors,
            ..Default::default()
        }
    }

    pub fn with_enrollments(mut self, enrollments: &'a [EnrollmentVector]) -> Self {
        for e in enrollments {
            self.enrollment_ids.push(e.sample_id());
            self.enrollments.push(&e.vector);
        }
        self
    }

    pub fn get(&self, reference: &str) -> Option<&'a [f64]> {
        self.enrollment_ids
            .iter()
            .position(|id| id == reference)
            .map(|i| self.enrollments[i])
            .or_else(|| self.vectors.get(reference).copied())
    }
}

/// Scores every trial in input order. Fails listing every unresolvable ref.
pub fn score_trials(trials: &[Trial], lookup: &VectorLookup<'_>) -> Result<Vec<ScoredTrial>> {
    // Enrollment refs are few; index them once so lookups stay O(1).
    let enroll: HashMap<&str, &[f64]> = lookup
        .enrollment_ids
        .iter()
        .map(String::as_str)
        .zip(lookup.enrollments.iter().copied())
        .collect();
    let resolve = |r: &str| enroll.get(r).copied().or_else(|| lookup.vectors.get(r).copied());

    let mut missing: Vec<String> = Vec::new();
    for t in trials {
        for r in [&t.known_ref, &t.unknown_ref] {
            if resolve(r).is_none() && !missing.contains(r) {
                missing.push(r.clone());
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingRefs(missing));
    }
    trials
        .par_iter()
        .map(|t| {
            let a = resolve(&t.known_ref).expect("checked above");
            let b = resolve(&t.unknown_ref).expect("checked above");
            Ok(ScoredTrial {
                trial: t.clone(),
                score: cosine_score(a, b)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Each class carries total weight 1/2.
    EqualPrior,
    /// Every trial carries weight 1.
    Unweighted,
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::EqualPrior => "equal-prior",
            Weighting::Unweighted => "unweighted",
        })
    }
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal-prior" => Ok(Weighting::EqualPrior),
            "unweighted" => Ok(Weighting::Unweighted),
            other => Err(Error::InvalidArgument(format!("unknown weighting {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationConfig {
    pub weighting: Weighting,
    /// Penalty strength on the weight: objective + l2/2 * weight^2. The bias is
    /// not penalized.
    pub l2: f64,
    pub clip: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            weighting: Weighting::EqualPrior,
            l2: 0.0,
            clip: DEFAULT_CLIP,
        }
    }
}

impl CalibrationConfig {
    /// Unweighted with unit inverse regularization strength, the usual
    /// statistics-package default.
    pub fn compat() -> Self {
        CalibrationConfig {
            weighting: Weighting::Unweighted,
            l2: 1.0,
            clip: DEFAULT_CLIP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::InvalidArgument(format!("l2 must be >= 0, got {}", self.l2)));
        }
        if !(self.clip > 0.0 && self.clip < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "clip must be in (0, 0.5), got {}",
                self.clip
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub n_same: usize,
    pub n_diff: usize,
    pub weighting: Weighting,
    pub l2: f64,
}

/// Affine map from score to log posterior odds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub weight: f64,
    pub bias: f64,
    #[serde(flatten)]
    pub training_meta: TrainingMeta,
}

impl CalibrationModel {
    pub fn log_odds(&self, score: f64) -> f64 {
        self.weight * score + self.bias
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: CalibrationModel = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        if !(m.weight.is_finite() && m.bias.is_finite()) {
            return Err(Error::parse(path, "non-finite calibration parameters"));
        }
        Ok(m)
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("model serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

struct Objective<'a> {
    scores: &'a [f64],
    targets: &'a [f64],
    weights: &'a [f64],
    l2: f64,
}

impl Objective<'_> {
    fn value(&self, w: f64, b: f64) -> f64 {
        let mut f = 0.0;
        for ((&s, &y), &c) in self.scores.iter().zip(self.targets).zip(self.weights) {
            let z = w * s + b;
            f += c * (y * softplus(-z) + (1.0 - y) * softplus(z));
        }
        f + 0.5 * self.l2 * w * w
    }

    /// Gradient and Hessian in (weight, bias).
    fn derivatives(&self, w: f64, b: f64) -> ([f64; 2], [[f64; 2]; 2]) {
        let mut g = [self.l2 * w, 0.0];
        let mut h = [[self.l2, 0.0], [0.0, 0.0]];
        for ((&s, &y), &c) in self.scores.iter().zip(self.targets).zip(self.weights) {
            let p = sigmoid(w * s + b);
            let r = c * (p - y);
            g[0] += r * s;
            g[1] += r;
            let k = c * p * (1.0 - p);
            h[0][0] += k * s * s;
            h[0][1] += k * s;
            h[1][1] += k;
        }
        h[1][0] = h[0][1];
        (g, h)
    }
}

fn newton_direction(g: [f64; 2], h: [[f64; 2]; 2]) -> [f64; 2] {
    let mut ridge = 0.0;
    let scale = h[0][0].abs().max(h[1][1].abs()).max(f64::MIN_POSITIVE);
    loop {
        let a = h[0][0] + ridge;
        let d = h[1][1] + ridge;
        let det = a * d - h[0][1] * h[1][0];
        if det > 1e-14 * scale * scale && a > 0.0 {
            return [-(d * g[0] - h[0][1] * g[1]) / det, -(a * g[1] - h[1][0] * g[0]) / det];
        }
        ridge = if ridge == 0.0 {
            1e-10 * scale.max(1e-300)
        } else {
            ridge * 10.0
        };
        if !ridge.is_finite() {
            return [-g[0], -g[1]];
        }
    }
}

/// Fits the logistic calibration by damped Newton iterations on the
/// (optionally class-weighted, optionally penalized) cross-entropy.
pub fn fit_calibration(scored: &[ScoredTrial], config: &CalibrationConfig) -> Result<CalibrationModel> {
    config.validate()?;
    let n_same = scored.iter().filter(|s| s.is_same()).count();
    let n_diff = scored.len() - n_same;
    if n_same == 0 || n_diff == 0 {
        return Err(Error::Degenerate(format!(
            "calibration needs both labels (same-origin {n_same}, different-origin {n_diff})"
        )));
    }
    let scores: Vec<f64> = scored.iter().map(|s| s.score).collect();
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("non-finite score".into()));
    }
    if scores.iter().all(|&s| s == scores[0]) {
        return Err(Error::Degenerate("all calibration scores are identical".into()));
    }
    let targets: Vec<f64> = scored.iter().map(|s| if s.is_same() { 1.0 } else { 0.0 }).collect();
    let weights: Vec<f64> = scored
        .iter()
        .map(|s| match config.weighting {
            Weighting::Unweighted => 1.0,
            Weighting::EqualPrior if s.is_same() => 0.5 / n_same as f64,
            Weighting::EqualPrior => 0.5 / n_diff as f64,
        })
        .collect();
    let obj = Objective {
        scores: &scores,
        targets: &targets,
        weights: &weights,
        l2: config.l2,
    };

    // unweighted objectives grow with the trial count, and so does their
    // gradient rounding noise
    let tol = GRAD_TOL * weights.iter().sum::<f64>().max(1.0);
    let (mut w, mut b) = (0.0, 0.0);
    let mut f = obj.value(w, b);
    let mut grad_norm = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let (g, h) = obj.derivatives(w, b);
        grad_norm = g[0].hypot(g[1]);
        if grad_norm < tol {
            let meta = TrainingMeta {
                n_same,
                n_diff,
                weighting: config.weighting,
                l2: config.l2,
            };
            return Ok(CalibrationModel {
                weight: w,
                bias: b,
                training_meta: meta,
            });
        }
        let d = newton_direction(g, h);
        let slope = g[0] * d[0] + g[1] * d[1];
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-12 {
            let (nw, nb) = (w + t * d[0], b + t * d[1]);
            let nf = obj.value(nw, nb);
            if nf.is_finite() && nf <= f + 1e-4 * t * slope {
                accepted = Some((nw, nb, nf));
                break;
            }
            t *= 0.5;
        }
        let (nw, nb, nf) = match accepted {
            Some(step) => step,
            None => {
                // Objective flat at working precision: take the full step if
                // it still shrinks the gradient.
                let (nw, nb) = (w + d[0], b + d[1]);
                let (ng, _) = obj.derivatives(nw, nb);
                if ng[0].hypot(ng[1]) < grad_norm {
                    (nw, nb, obj.value(nw, nb))
                } else {
                    return Err(Error::NonConvergence { grad_norm });
                }
            }
        };
        w = nw;
        b = nb;
        f = nf;
    }
    Err(Error::NonConvergence { grad_norm })
}

/// Calibrated P(same origin | score) with the default clip.
pub fn posterior(model: &CalibrationModel, score: f64) -> f64 {
    posterior_clipped(model, score, DEFAULT_CLIP)
}

pub fn posterior_clipped(model: &CalibrationModel, score: f64, clip: f64) -> f64 {
    sigmoid(model.log_odds(score)).clamp(clip, 1.0 - clip)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodRatio {
    pub lr: f64,
    pub log10_lr: f64,
}

/// Posterior odds `p / (1 - p)`.
pub fn to_lr(p_same: f64) -> Result<LikelihoodRatio> {
    if !(p_same > 0.0 && p_same < 1.0) {
        return Err(Error::InvalidArgument(format!("posterior {p_same} outside (0, 1)")));
    }
    let lr = p_same / (1.0 - p_same);
    Ok(LikelihoodRatio {
        lr,
        log10_lr: lr.log10(),
    })
}

/// Applies `model` to every trial and splits the log10 LRs by label.
pub fn calibrated_log_lrs(model: &CalibrationModel, scored: &[ScoredTrial], clip: f64) -> LabeledLogLRs {
    let mut so = Vec::new();
    let mut dso = Vec::new();
    for s in scored {
        let lr = to_lr(posterior_clipped(model, s.score, clip)).expect("clipped posterior");
        if s.is_same() {
            so.push(lr.log10_lr);
        } else {
            dso.push(lr.log10_lr);
        }
    }
    LabeledLogLRs {
        same_origin: so,
        different_origin: dso,
    }
}
