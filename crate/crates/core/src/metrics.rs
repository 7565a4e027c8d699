//! Likelihood-ratio and detection metrics.
//!
//! `cllr` is the log-likelihood-ratio cost in its base-2 logarithmic form:
//!
//! ```text
//! Cllr = 1/2 [ mean_so log2(1 + 1/LR) + mean_do log2(1 + LR) ]
//! ```
//!
//! `cllr_min` is the same cost after the optimal monotone recalibration of the
//! raw scores, found by pool-adjacent-violators (PAV) isotonic regression with
//! the empirical prior odds divided out. Calibration loss is the difference.
//! `eer` interpolates linearly between the two operating points that bracket
//! FAR = FRR, accepting a trial when `score >= threshold`.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{split_by_label, ScoredTrial};

/// log10 likelihood ratios split by ground truth.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledLogLRs {
    pub same_origin: Vec<f64>,
    pub different_origin: Vec<f64>,
}

impl LabeledLogLRs {
    fn check(&self) -> Result<()> {
        if self.same_origin.is_empty() || self.different_origin.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "metrics need both labels (same-origin {}, different-origin {})",
                self.same_origin.len(),
                self.different_origin.len()
            )));
        }
        if self
            .same_origin
            .iter()
            .chain(&self.different_origin)
            .any(|v| v.is_nan())
        {
            return Err(Error::InvalidArgument("NaN log likelihood ratio".into()));
        }
        Ok(())
    }
}

/// log2(1 + exp(x)) without overflow.
fn log2_1p_exp(x: f64) -> f64 {
    let sp = if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    };
    sp / std::f64::consts::LN_2
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len() as f64;
    xs.sum::<f64>() / n
}

pub fn cllr(lrs: &LabeledLogLRs) -> Result<f64> {
    lrs.check()?;
    let ln10 = std::f64::consts::LN_10;
    let so = mean(lrs.same_origin.iter().map(|l| log2_1p_exp(-l * ln10)));
    let dso = mean(lrs.different_origin.iter().map(|l| log2_1p_exp(l * ln10)));
    Ok(0.5 * (so + dso))
}

fn check_labels(n_same: usize, n_diff: usize) -> Result<()> {
    if n_same == 0 || n_diff == 0 {
        return Err(Error::InvalidArgument(format!(
            "need both labels (same-origin {n_same}, different-origin {n_diff})"
        )));
    }
    Ok(())
}

/// Isotonic regression of the 0/1 labels on the scores.
///
/// Returns one posterior per input, in input order. Tied scores are pooled
/// into one block before fitting.
pub fn pav(scores: &[f64], is_same: &[bool]) -> Result<Vec<f64>> {
    if scores.len() != is_same.len() {
        return Err(Error::InvalidArgument("scores and labels differ in length".into()));
    }
    let n_same = is_same.iter().filter(|&&s| s).count();
    check_labels(n_same, scores.len() - n_same)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    struct Block {
        sum: f64,
        count: usize,
        end: usize,
    }
    let mut blocks: Vec<Block> = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut sum = 0.0;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            sum += is_same[order[j]] as u8 as f64;
            j += 1;
        }
        blocks.push(Block {
            sum,
            count: j - i,
            end: j,
        });
        while blocks.len() > 1 {
            let b = &blocks[blocks.len() - 1];
            let a = &blocks[blocks.len() - 2];
            if a.sum * b.count as f64 > b.sum * a.count as f64 {
                let b = blocks.pop().expect("len > 1");
                let a = blocks.last_mut().expect("len > 0");
                a.sum += b.sum;
                a.count += b.count;
                a.end = b.end;
            } else {
                break;
            }
        }
        i = j;
    }
    let mut out = vec![0.0; scores.len()];
    let mut start = 0;
    for b in &blocks {
        let p = b.sum / b.count as f64;
        for &idx in &order[start..b.end] {
            out[idx] = p;
        }
        start = b.end;
    }
    Ok(out)
}

/// Cllr of the PAV-optimal calibration of `so` and `do` scores.
pub fn cllr_min_scores(same: &[f64], diff: &[f64]) -> Result<f64> {
    check_labels(same.len(), diff.len())?;
    let scores: Vec<f64> = same.iter().chain(diff).copied().collect();
    let labels: Vec<bool> = (0..scores.len()).map(|i| i < same.len()).collect();
    let post = pav(&scores, &labels)?;
    let prior_odds = same.len() as f64 / diff.len() as f64;
    let (post_so, post_do) = post.split_at(same.len());
    // Posterior 1 only occurs in same-origin-only blocks and 0 in
    // different-origin-only blocks, where the penalties are exactly zero.
    let so = mean(post_so.iter().map(|&p| (1.0 + (1.0 - p) / p * prior_odds).log2()));
    let dso = mean(post_do.iter().map(|&p| (1.0 + p / (1.0 - p) / prior_odds).log2()));
    Ok(0.5 * (so + dso))
}

pub fn cllr_min(scored: &[ScoredTrial]) -> Result<f64> {
    let (so, dso) = split_by_label(scored);
    cllr_min_scores(&so, &dso)
}

/// Equal error rate from raw same-origin and different-origin scores.
pub fn eer_scores(same: &[f64], diff: &[f64]) -> Result<f64> {
    check_labels(same.len(), diff.len())?;
    if same.iter().chain(diff).any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let mut pooled: Vec<(f64, bool)> = same
        .iter()
        .map(|&s| (s, true))
        .chain(diff.iter().map(|&s| (s, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (n_so, n_do) = (same.len() as f64, diff.len() as f64);

    // (FAR, FRR) at each distinct score threshold, then at +inf.
    let mut points = Vec::with_capacity(pooled.len() + 1);
    let (mut same_below, mut diff_below) = (0usize, 0usize);
    let mut i = 0;
    while i < pooled.len() {
        points.push(((n_do - diff_below as f64) / n_do, same_below as f64 / n_so));
        let t = pooled[i].0;
        while i < pooled.len() && pooled[i].0 == t {
            if pooled[i].1 {
                same_below += 1;
            } else {
                diff_below += 1;
            }
            i += 1;
        }
    }
    points.push((0.0, 1.0));

    for w in points.windows(2) {
        let (far0, frr0) = w[0];
        let (far1, frr1) = w[1];
        let d1 = far1 - frr1;
        match d1.partial_cmp(&0.0) {
            Some(Ordering::Greater) => continue,
            Some(Ordering::Equal) => return Ok(far1),
            _ => {
                let d0 = far0 - frr0;
                let alpha = d0 / (d0 - d1);
                return Ok(far0 + alpha * (far1 - far0));
            }
        }
    }
    unreachable!("FAR - FRR ends at -1")
}

pub fn eer(scored: &[ScoredTrial]) -> Result<f64> {
    let (so, dso) = split_by_label(scored);
    eer_scores(&so, &dso)
}

/// Tippet threshold grid: from `min - margin` to `max + margin` in `step`s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub step: f64,
    pub margin: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            step: 0.01,
            margin: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TippetCurve {
    pub thresholds: Vec<f64>,
    pub p_so_ge: Vec<f64>,
    pub p_do_ge: Vec<f64>,
}

/// Fraction of `sorted` values that are `>= t`.
fn fraction_ge(sorted: &[f64], t: f64) -> f64 {
    let below = sorted.partition_point(|&v| v < t);
    (sorted.len() - below) as f64 / sorted.len() as f64
}

/// Empirical survival fractions of the log10 LRs of each label.
pub fn tippet(lrs: &LabeledLogLRs, grid: &GridSpec) -> Result<TippetCurve> {
    lrs.check()?;
    if !(grid.step > 0.0 && grid.step.is_finite() && grid.margin >= 0.0) {
        return Err(Error::InvalidArgument("tippet grid step must be positive".into()));
    }
    let mut so = lrs.same_origin.clone();
    let mut dso = lrs.different_origin.clone();
    if so.iter().chain(&dso).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite log likelihood ratio".into()));
    }
    so.sort_by(f64::total_cmp);
    dso.sort_by(f64::total_cmp);
    let lo = so[0].min(dso[0]) - grid.margin;
    let hi = so[so.len() - 1].max(dso[dso.len() - 1]) + grid.margin;
    let n = ((hi - lo) / grid.step - 1e-9).ceil().max(0.0) as usize;
    let thresholds: Vec<f64> = (0..=n).map(|k| lo + k as f64 * grid.step).collect();
    Ok(TippetCurve {
        p_so_ge: thresholds.iter().map(|&t| fraction_ge(&so, t)).collect(),
        p_do_ge: thresholds.iter().map(|&t| fraction_ge(&dso, t)).collect(),
        thresholds,
    })
}

impl TippetCurve {
    /// CSV with header `threshold_log10lr,p_so_ge,p_do_ge`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from("threshold_log10lr,p_so_ge,p_do_ge\n");
        for ((t, s), d) in self.thresholds.iter().zip(&self.p_so_ge).zip(&self.p_do_ge) {
            text.push_str(&format!("{t},{s},{d}\n"));
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Global metrics of one scored trial set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalMetrics {
    pub cllr: f64,
    pub cllr_min: f64,
    pub cllr_cal: f64,
    pub eer: f64,
}

/// Calibration loss: `cllr - cllr_min`.
pub fn cllr_cal(cllr: f64, cllr_min: f64) -> f64 {
    cllr - cllr_min
}
