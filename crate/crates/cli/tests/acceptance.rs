//! Acceptance suite. Runs every criterion in sequence and prints one
//! PASS/FAIL line for each; exits non-zero if any fails.

use std::collections::HashMap;
use std::panic::{self, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use voicelr::audio::{self, AudioSignal};
use voicelr::evaluation::EvaluationReport;
use voicelr::metrics::{self, LabeledLogLRs};
use voicelr::model::{self, Manifest};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [(&str, Option<Duration>, fn() -> Outcome); 9] = [
        ("cllr identities", Some(Duration::from_secs(1)), cllr_identities),
        (
            "cllr decomposition reproduces the reference rows",
            None,
            table_consistency,
        ),
        (
            "pav matches exhaustive block pooling",
            Some(Duration::from_secs(10)),
            pav_oracle,
        ),
        ("eer matches a threshold sweep", None, eer_oracle),
        ("rank invariance of cllr_min and eer", None, rank_invariance),
        (
            "gaussian separability",
            Some(Duration::from_secs(30)),
            gaussian_separability,
        ),
        (
            "end-to-end synthetic corpus run",
            Some(Duration::from_secs(300)),
            end_to_end,
        ),
        ("chunking protocol", None, chunking_protocol),
        ("augmentation", None, augmentation),
    ];
    // panics surface as FAIL lines, not as default hook noise
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let t0 = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = t0.elapsed();
        let outcome = match (outcome, budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("took {elapsed:.1?}, budget {b:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{elapsed:.2?}]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{elapsed:.2?}]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}

fn log10_lrs(so: &[f64], dso: &[f64]) -> LabeledLogLRs {
    LabeledLogLRs {
        same_origin: so.iter().map(|lr| lr.log10()).collect(),
        different_origin: dso.iter().map(|lr| lr.log10()).collect(),
    }
}

fn cllr_identities() -> Outcome {
    let neutral = metrics::cllr(&log10_lrs(&[1.0; 3], &[1.0; 5])).map_err(|e| e.to_string())?;
    ensure!((neutral - 1.0).abs() <= 1e-12, "all LR = 1 gives {neutral}");
    let v = metrics::cllr(&log10_lrs(&[4.0, 4.0], &[0.25, 0.25])).map_err(|e| e.to_string())?;
    let want = 1.25f64.log2();
    ensure!((v - want).abs() <= 1e-12, "LR 4 / 0.25 gives {v}, want {want}");
    Ok(format!("neutral {neutral}, 4|0.25 -> {v:.15}"))
}

fn table_consistency() -> Outcome {
    let rows = [(0.632, 0.601, 0.031, 0.001), (0.517, 0.411, 0.105, 0.002)];
    let mut parts = Vec::new();
    for (cllr, min, published, tol) in rows {
        let cal = metrics::cllr_cal(cllr, min);
        ensure!(
            (cal - published).abs() <= tol + 1e-12,
            "{cllr} - {min} = {cal}, reference {published} ± {tol}"
        );
        parts.push(format!("{cal:.3} vs {published}"));
    }
    Ok(parts.join(", "))
}

/// Isotonic fit by trying every partition of the tied score atoms into
/// contiguous blocks: the feasible (monotone) partition with least squared
/// error is the solution.
fn isotonic_oracle(scores: &[f64], labels: &[bool]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // atoms: (count, positives) per distinct score
    let mut atoms: Vec<(f64, f64, f64)> = Vec::new();
    for &i in &order {
        let y = labels[i] as u8 as f64;
        match atoms.last_mut() {
            Some(a) if a.0 == scores[i] => {
                a.1 += 1.0;
                a.2 += y;
            }
            _ => atoms.push((scores[i], 1.0, y)),
        }
    }
    let m = atoms.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for cuts in 0u32..(1 << (m - 1)) {
        let mut means = Vec::with_capacity(m);
        let (mut n, mut pos, mut start) = (0.0, 0.0, 0);
        let mut blocks = Vec::new();
        for (k, a) in atoms.iter().enumerate() {
            n += a.1;
            pos += a.2;
            if k == m - 1 || cuts & (1 << k) != 0 {
                blocks.push((start, k, pos / n));
                (n, pos, start) = (0.0, 0.0, k + 1);
            }
        }
        if blocks.windows(2).any(|w| w[0].2 > w[1].2) {
            continue;
        }
        let mut sse = 0.0;
        for &(s, e, mean) in &blocks {
            for a in &atoms[s..=e] {
                means.push(mean);
                sse += a.2 * (1.0 - mean).powi(2) + (a.1 - a.2) * mean.powi(2);
            }
        }
        if best.as_ref().map_or(true, |(b, _)| sse < *b - 1e-15) {
            best = Some((sse, means));
        }
    }
    let means = best
        .expect("the finest partition of a sorted sequence may be infeasible, the coarsest never is")
        .1;
    let lookup: HashMap<u64, f64> = atoms.iter().zip(&means).map(|(a, &m)| (a.0.to_bits(), m)).collect();
    scores.iter().map(|s| lookup[&s.to_bits()]).collect()
}

fn pav_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let n = rng.gen_range(2..=12);
        // a coarse grid so ties occur
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..8) as f64 * 0.25).collect();
        let labels: Vec<bool> = loop {
            // scored trials always carry both labels
            let l: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            if l.contains(&true) && l.contains(&false) {
                break l;
            }
        };
        let got = metrics::pav(&scores, &labels).map_err(|e| format!("case {case}: {e}"))?;
        let want = isotonic_oracle(&scores, &labels);
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
        ensure!(worst <= 1e-9, "case {case}: {got:?} vs {want:?}");
    }
    Ok(format!("200 instances, max deviation {worst:.1e}"))
}

/// FAR and FRR at every candidate threshold by direct counting, then linear
/// interpolation across the first sign change of FAR - FRR.
fn eer_sweep(same: &[f64], diff: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = same.iter().chain(diff).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let rates = |t: f64| {
        let far = diff.iter().filter(|&&d| d >= t).count() as f64 / diff.len() as f64;
        let frr = same.iter().filter(|&&s| s < t).count() as f64 / same.len() as f64;
        (far, frr)
    };
    let mut points: Vec<(f64, f64)> = thresholds.into_iter().map(rates).collect();
    points.push((0.0, 1.0));
    let mut prev = points[0];
    if prev.0 - prev.1 <= 0.0 {
        return prev.0;
    }
    for &p in &points[1..] {
        let (d0, d1) = (prev.0 - prev.1, p.0 - p.1);
        if d1 <= 0.0 {
            return prev.0 + d0 / (d0 - d1) * (p.0 - prev.0);
        }
        prev = p;
    }
    unreachable!()
}

fn eer_oracle() -> Outcome {
    let example = metrics::eer_scores(&[0.9, 0.8, 0.3], &[0.7, 0.2, 0.1]).map_err(|e| e.to_string())?;
    ensure!(example == 1.0 / 3.0, "worked example gives {example}, want 1/3");
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let n = rng.gen_range(2..=50);
        let n_so = rng.gen_range(1..n);
        let draw = |rng: &mut ChaCha8Rng, k: usize, shift: i32| -> Vec<f64> {
            (0..k).map(|_| (rng.gen_range(0..20) + shift) as f64 / 10.0).collect()
        };
        let same = draw(&mut rng, n_so, 4);
        let diff = draw(&mut rng, n - n_so, 0);
        let got = metrics::eer_scores(&same, &diff).map_err(|e| format!("case {case}: {e}"))?;
        let want = eer_sweep(&same, &diff);
        worst = worst.max((got - want).abs());
        ensure!(
            worst <= 1e-9,
            "case {case}: {got} vs {want} (same {same:?}, diff {diff:?})"
        );
    }
    Ok(format!(
        "example = 1/3 exactly, 200 instances, max deviation {worst:.1e}"
    ))
}

fn rank_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let same: Vec<f64> = (0..200)
        .map(|_| Normal::new(1.0, 1.0).unwrap().sample(&mut rng))
        .collect();
    let diff: Vec<f64> = (0..300)
        .map(|_| Normal::new(-0.5, 1.0).unwrap().sample(&mut rng))
        .collect();
    let base_min = metrics::cllr_min_scores(&same, &diff).map_err(|e| e.to_string())?;
    let base_eer = metrics::eer_scores(&same, &diff).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for k in 0..20 {
        let a = rng.gen_range(0.1..5.0);
        let b = rng.gen_range(-3.0..3.0);
        let c = rng.gen_range(0.2..1.0);
        let f = move |x: f64| -> f64 {
            match k % 4 {
                0 => a * x + b,
                1 => (c * x).exp() + b,
                2 => x.powi(3) + a * x,
                _ => (c * x).tanh() * a + b,
            }
        };
        let ts: Vec<f64> = same.iter().map(|&x| f(x)).collect();
        let td: Vec<f64> = diff.iter().map(|&x| f(x)).collect();
        let m = metrics::cllr_min_scores(&ts, &td).map_err(|e| e.to_string())?;
        let e = metrics::eer_scores(&ts, &td).map_err(|e| e.to_string())?;
        worst = worst.max((m - base_min).abs()).max((e - base_eer).abs());
        ensure!(
            worst <= 1e-10,
            "transform {k}: cllr_min {m} vs {base_min}, eer {e} vs {base_eer}"
        );
    }
    Ok(format!("500 trials, 20 transforms, max change {worst:.1e}"))
}

/// Cllr_min by an independent route: the isotonic posteriors are the slopes
/// of the greatest convex minorant of the cumulative-positives diagram.
fn cllr_min_gcm(same: &[f64], diff: &[f64]) -> f64 {
    let mut pooled: Vec<(f64, bool)> = same
        .iter()
        .map(|&s| (s, true))
        .chain(diff.iter().map(|&s| (s, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    // diagram vertices at tie-group boundaries
    let mut xs = vec![0.0];
    let mut ys = vec![0.0];
    let mut i = 0;
    while i < pooled.len() {
        let t = pooled[i].0;
        let (mut x, mut y) = (*xs.last().unwrap(), *ys.last().unwrap());
        while i < pooled.len() && pooled[i].0 == t {
            x += 1.0;
            y += pooled[i].1 as u8 as f64;
            i += 1;
        }
        xs.push(x);
        ys.push(y);
    }
    // lower convex hull (monotone chain)
    let mut hull: Vec<usize> = Vec::new();
    for k in 0..xs.len() {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (xs[b] - xs[a]) * (ys[k] - ys[a]) - (ys[b] - ys[a]) * (xs[k] - xs[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(k);
    }
    let prior_odds = same.len() as f64 / diff.len() as f64;
    let (mut so_cost, mut do_cost) = (0.0, 0.0);
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        let n = xs[b] - xs[a];
        let pos = ys[b] - ys[a];
        let p = pos / n;
        if pos > 0.0 {
            so_cost += pos * (1.0 + (1.0 - p) / p * prior_odds).log2();
        }
        if n - pos > 0.0 {
            do_cost += (n - pos) * (1.0 + p / (1.0 - p) / prior_odds).log2();
        }
    }
    0.5 * (so_cost / same.len() as f64 + do_cost / diff.len() as f64)
}

fn gaussian_separability() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let same: Vec<f64> = (0..10_000)
        .map(|_| Normal::new(1.0, 1.0).unwrap().sample(&mut rng))
        .collect();
    let diff: Vec<f64> = (0..10_000)
        .map(|_| Normal::new(-1.0, 1.0).unwrap().sample(&mut rng))
        .collect();
    let eer = metrics::eer_scores(&same, &diff).map_err(|e| e.to_string())?;
    // Phi(-1)
    let analytic = 0.158_655_253_931_457_05;
    ensure!((eer - analytic).abs() <= 0.01, "EER {eer} vs Phi(-1) {analytic}");
    let min = metrics::cllr_min_scores(&same, &diff).map_err(|e| e.to_string())?;
    let oracle = cllr_min_gcm(&same, &diff);
    ensure!((min - oracle).abs() <= 0.02, "Cllr_min {min} vs oracle {oracle}");
    Ok(format!(
        "EER {eer:.4} (Phi(-1) {analytic:.4}), Cllr_min {min:.6} vs oracle {oracle:.6}"
    ))
}

fn run(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_voicelr"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "voicelr {} exited {:?}: {}",
            args.first().unwrap_or(&""),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).lines().last().unwrap_or("")
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn end_to_end() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = tmp.path();
    let p = |rel: &str| d.join(rel).to_str().unwrap().to_string();
    run(&[
        "synth",
        "--kind",
        "voices",
        "--evaluation-speakers",
        "20",
        "--out-dir",
        &p("corpus"),
    ])?;
    for split in ["calibration", "evaluation"] {
        run(&[
            "prep",
            "--strict",
            "--manifest",
            &p(&format!("corpus/{split}.csv")),
            "--out-dir",
            &p(split),
        ])?;
        run(&[
            "embed",
            "--manifest",
            &p(&format!("{split}/chunks.csv")),
            "--out",
            &p(&format!("{split}/embeddings.jsonl")),
        ])?;
    }
    let mut reports = Vec::new();
    for mode in ["pairwise", "enrollment"] {
        run(&[
            "evaluate",
            "--mode",
            mode,
            "--calibration-manifest",
            &p("calibration/chunks.csv"),
            "--evaluation-manifest",
            &p("evaluation/chunks.csv"),
            "--embeddings",
            &p("calibration/embeddings.jsonl"),
            "--embeddings",
            &p("evaluation/embeddings.jsonl"),
            "--out-dir",
            &p(mode),
        ])?;
        reports.push(EvaluationReport::read(&d.join(mode).join("report.json")).map_err(|e| e.to_string())?);
    }
    let (pw, en) = (&reports[0], &reports[1]);
    let eval_speakers = Manifest::read(&d.join("evaluation/chunks.csv")).map_err(|e| e.to_string())?;
    ensure!(
        eval_speakers.speakers().len() == 20,
        "{} evaluation speakers",
        eval_speakers.speakers().len()
    );
    let g = &pw.global;
    ensure!(g.eer < 0.02, "pairwise EER {}", g.eer);
    ensure!(g.cllr_min < 0.1, "pairwise Cllr_min {}", g.cllr_min);
    ensure!(
        en.global.eer <= g.eer,
        "enrollment EER {} > pairwise {}",
        en.global.eer,
        g.eer
    );

    // the duration matrix is 9x9 and its cells partition the scored trials
    let m = pw.matrices.duration.as_ref().ok_or("no duration matrix")?;
    let keys: Vec<String> = (2..=10).map(|k| k.to_string()).collect();
    ensure!(
        m.row_keys == keys && m.col_keys == keys,
        "keys {:?} x {:?}",
        m.row_keys,
        m.col_keys
    );
    ensure!(
        m.cells.iter().flatten().all(|c| c.n_so + c.n_do > 0),
        "empty duration cell"
    );
    let scored = model::read_scores(&d.join("pairwise/scores.csv")).map_err(|e| e.to_string())?;
    let mut duration = HashMap::new();
    for split in ["calibration", "evaluation"] {
        let manifest = Manifest::read(&d.join(split).join("chunks.csv")).map_err(|e| e.to_string())?;
        for r in manifest.recordings {
            duration.insert(
                r.recording_id,
                r.duration_s.ok_or("chunk without duration")?.round() as u32,
            );
        }
    }
    let mut counts: HashMap<(u32, u32), (usize, usize)> = HashMap::new();
    for s in &scored {
        let e = counts
            .entry((duration[&s.trial.known_ref], duration[&s.trial.unknown_ref]))
            .or_default();
        if s.is_same() {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    for (r, row) in m.cells.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            let want = counts.get(&(r as u32 + 2, c as u32 + 2)).copied().unwrap_or_default();
            ensure!(
                (cell.n_so, cell.n_do) == want,
                "cell ({}, {}): {:?} vs {want:?}",
                r + 2,
                c + 2,
                (cell.n_so, cell.n_do)
            );
        }
    }
    ensure!(
        m.n_trials() == scored.len() && m.n_unkeyed == 0,
        "matrix covers {} of {}",
        m.n_trials(),
        scored.len()
    );
    Ok(format!(
        "pairwise EER {:.4} Cllr_min {:.4}, enrollment EER {:.4}, {} trials in 81 cells",
        g.eer,
        g.cllr_min,
        en.global.eer,
        scored.len()
    ))
}

fn chunking_protocol() -> Outcome {
    let sr = 16_000u32;
    let signal = AudioSignal::new(vec![0.1; 60 * sr as usize], sr).map_err(|e| e.to_string())?;
    let plan = audio::plan_durations(signal.duration_s()).map_err(|e| e.to_string())?;
    let chunks = audio::split_chunks("r", &signal, &plan).map_err(|e| e.to_string())?;
    let mut per: HashMap<u32, usize> = HashMap::new();
    for c in &chunks {
        let d = c.duration_s as u32;
        ensure!(
            (2..=10).contains(&d) && c.duration_s == d as f64,
            "duration {}",
            c.duration_s
        );
        ensure!(
            c.samples.len() == (d * sr) as usize,
            "chunk of {} samples for {d} s",
            c.samples.len()
        );
        *per.entry(d).or_default() += 1;
    }
    for w in chunks.windows(2) {
        let start0 = (w[0].start_s * sr as f64).round();
        let start1 = (w[1].start_s * sr as f64).round();
        let overlap = start0 + w[0].samples.len() as f64 - start1;
        let want = 0.1 * w[0].samples.len() as f64;
        ensure!(
            (overlap - want).abs() <= 1.0,
            "overlap {overlap} samples after a {} s chunk",
            w[0].duration_s
        );
    }
    let (lo, hi) = (
        per.values().min().copied().unwrap_or(0),
        per.values().max().copied().unwrap_or(0),
    );
    ensure!(per.len() == 9 && hi - lo <= 1, "per-duration counts {per:?}");
    Ok(format!("{} chunks, per-duration counts {lo}..{hi}", chunks.len()))
}

fn augmentation() -> Outcome {
    let sr = 8000u32;
    let samples: Vec<f64> = (0..5 * sr as usize)
        .map(|i| 0.3 * (2.0 * std::f64::consts::PI * 220.0 * i as f64 / sr as f64).sin())
        .collect();
    let clean = AudioSignal::new(samples, sr).map_err(|e| e.to_string())?;
    let noisy = audio::augment_add_noise(&clean, 15.0, 3).map_err(|e| e.to_string())?;
    let noise_power = clean
        .samples
        .iter()
        .zip(&noisy.samples)
        .map(|(c, n)| (n - c).powi(2))
        .sum::<f64>()
        / clean.len() as f64;
    let snr = 10.0 * (clean.power() / noise_power).log10();
    ensure!((snr - 15.0).abs() <= 0.05 * 15.0, "SNR {snr} dB");

    for n in [19usize, 997, 8000, 12_347, 480_001] {
        let s = AudioSignal::new(vec![0.2; n], sr).map_err(|e| e.to_string())?;
        let slow = audio::augment_time_scale(&s, 0.95).map_err(|e| e.to_string())?.len();
        let fast = audio::augment_time_scale(&s, 1.05).map_err(|e| e.to_string())?.len();
        let (want_slow, want_fast) = (95 * n / 100, 105 * n / 100);
        ensure!(
            slow == want_slow && fast == want_fast,
            "N={n}: {slow}/{fast} vs {want_slow}/{want_fast}"
        );
    }
    Ok(format!("SNR {snr:.3} dB, lengths exact for 5 sizes"))
}
