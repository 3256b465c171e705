//! Region (J) and boundary (F) similarity, existence accuracies and the
//! combined final score.
//!
//! Conventions:
//! * a frame where prediction and ground truth are both empty scores
//!   J = F = 1;
//! * a mask's boundary is every set pixel with at least one unset
//!   4-neighbour, pixels outside the image counting as unset;
//! * boundary matching tolerates a Euclidean distance of `tolerance` pixels,
//!   by default `ceil(0.008 * diagonal)`;
//! * J&F averages only over target-present expressions. No-target
//!   expressions feed N-acc, target-present ones T-acc.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BinaryMask, Masklet};

/// Intersection over union; 1.0 when both masks are empty.
pub fn jaccard(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let (inter, union) = pred.overlap_counts(gt)?;
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// `ceil(0.008 * sqrt(w² + h²))`, computed exactly in integers:
/// the smallest `t` with `(125 t)² >= w² + h²`.
pub fn default_boundary_tolerance(width: usize, height: usize) -> usize {
    let d2 = (width as u128).pow(2) + (height as u128).pow(2);
    let mut t = 0u128;
    while 15_625 * t * t < d2 {
        t += 1;
    }
    t as usize
}

/// Set pixels with an unset (or out-of-image) 4-neighbour.
pub fn boundary_map(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = mask.dims();
    let mut out = BinaryMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let edge = x == 0
                || y == 0
                || x + 1 == w
                || y + 1 == h
                || !mask.get(x - 1, y)
                || !mask.get(x + 1, y)
                || !mask.get(x, y - 1)
                || !mask.get(x, y + 1);
            if edge {
                out.set(x, y, true);
            }
        }
    }
    out
}

fn isqrt(n: usize) -> usize {
    let mut r = 0usize;
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// Dilation by a Euclidean disk of `radius`: a pixel is set iff some set
/// pixel lies within distance `radius` of it.
pub fn dilate_disk(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let (w, h) = mask.dims();
    if radius == 0 {
        return mask.clone();
    }
    let half: Vec<usize> = (0..=radius).map(|dy| isqrt(radius * radius - dy * dy)).collect();
    let mut out = BinaryMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let y0 = y.saturating_sub(radius);
            let y1 = (y + radius).min(h - 1);
            for yy in y0..=y1 {
                let r = half[yy.abs_diff(y)];
                let x0 = x.saturating_sub(r);
                let x1 = (x + r).min(w - 1);
                fill_row(&mut out, yy * w + x0, yy * w + x1 + 1);
            }
        }
    }
    out
}

fn fill_row(mask: &mut BinaryMask, start: usize, end: usize) {
    for i in start..end {
        mask.set_index(i, true);
    }
}

/// Boundary F-measure with a pixel tolerance.
///
/// Precision is the share of predicted boundary pixels within `tolerance` of
/// a ground-truth boundary pixel, recall the converse. Both boundaries empty
/// gives 1.0; one empty gives 0.0.
pub fn boundary_f(pred: &BinaryMask, gt: &BinaryMask, tolerance: usize) -> Result<f64> {
    pred.check_dims(gt.dims())?;
    let pb = boundary_map(pred);
    let gb = boundary_map(gt);
    let (np, ng) = (pb.count_ones(), gb.count_ones());
    if np == 0 && ng == 0 {
        return Ok(1.0);
    }
    if np == 0 || ng == 0 {
        return Ok(0.0);
    }
    let (pred_hits, _) = pb.overlap_counts(&dilate_disk(&gb, tolerance))?;
    let (gt_hits, _) = gb.overlap_counts(&dilate_disk(&pb, tolerance))?;
    let precision = pred_hits as f64 / np as f64;
    let recall = gt_hits as f64 / ng as f64;
    Ok(if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    })
}

/// Scores for one expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionScore {
    pub expression_id: String,
    /// Mean per-frame J; `None` for no-target expressions.
    pub j: Option<f64>,
    /// Mean per-frame F; `None` for no-target expressions.
    pub f: Option<f64>,
    pub predicted_nonempty: bool,
    pub gt_target_present: bool,
}

/// Scores `pred` against `gt`; `gt` is `None` for a no-target expression.
/// `tolerance` of `None` uses [`default_boundary_tolerance`].
pub fn score_expression(
    pred: &Masklet,
    gt: Option<&Masklet>,
    tolerance: Option<usize>,
) -> Result<ExpressionScore> {
    let (j, f) = match gt {
        None => (None, None),
        Some(gt) => {
            if gt.len() != pred.len() {
                return Err(Error::FrameCount {
                    expected: gt.len(),
                    found: pred.len(),
                });
            }
            if gt.dims() != pred.dims() {
                return Err(Error::DimensionMismatch {
                    expected: gt.dims(),
                    found: pred.dims(),
                });
            }
            let tol = tolerance.unwrap_or_else(|| default_boundary_tolerance(gt.dims().0, gt.dims().1));
            let n = pred.len().max(1) as f64;
            let mut j_sum = 0.0;
            let mut f_sum = 0.0;
            for (p, g) in pred.masks().iter().zip(gt.masks()) {
                j_sum += jaccard(p, g)?;
                f_sum += boundary_f(p, g, tol)?;
            }
            (Some(j_sum / n), Some(f_sum / n))
        }
    };
    Ok(ExpressionScore {
        expression_id: pred.expression_id().into(),
        j,
        f,
        predicted_nonempty: !pred.is_null(),
        gt_target_present: gt.is_some(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub n_target: usize,
    pub n_notarget: usize,
}

/// Aggregate metrics, all in percent. A metric is `None` when the scored set
/// has no expression of the kind it needs; `final` is then `None` too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_expression: Vec<ExpressionScore>,
    pub jf: Option<f64>,
    pub n_acc: Option<f64>,
    pub t_acc: Option<f64>,
    #[serde(rename = "final")]
    pub final_score: Option<f64>,
    pub counts: Counts,
}

/// Rounds a non-negative value half-up to two decimals.
pub fn round2(x: f64) -> f64 {
    ((x * 100.0 + 0.5 + 1e-9) as u64) as f64 / 100.0
}

/// Mean of J&F, N-acc and T-acc, rounded half-up to two decimals.
pub fn final_score(jf: f64, n_acc: f64, t_acc: f64) -> f64 {
    round2((jf + n_acc + t_acc) / 3.0)
}

pub fn aggregate(scores: &[ExpressionScore]) -> Result<MetricsReport> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    let mut jf_sum = 0.0;
    let (mut n_target, mut n_notarget) = (0usize, 0usize);
    let (mut hits_target, mut hits_notarget) = (0usize, 0usize);
    for s in scores {
        if s.gt_target_present {
            n_target += 1;
            jf_sum += (s.j.unwrap_or(0.0) + s.f.unwrap_or(0.0)) / 2.0;
            hits_target += s.predicted_nonempty as usize;
        } else {
            n_notarget += 1;
            hits_notarget += !s.predicted_nonempty as usize;
        }
    }
    let pct = |num: f64, den: usize| (den > 0).then(|| 100.0 * num / den as f64);
    let jf = pct(jf_sum, n_target);
    let t_acc = pct(hits_target as f64, n_target);
    let n_acc = pct(hits_notarget as f64, n_notarget);
    let final_score = match (jf, n_acc, t_acc) {
        (Some(a), Some(b), Some(c)) => Some(final_score(a, b, c)),
        _ => None,
    };
    Ok(MetricsReport {
        per_expression: scores.to_vec(),
        jf,
        n_acc,
        t_acc,
        final_score,
        counts: Counts {
            n_target,
            n_notarget,
        },
    })
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.2}"),
        None => String::from("n/a"),
    }
}

/// Plain-text rendering of a report: per-expression rows, then the summary.
pub fn render_table(report: &MetricsReport) -> String {
    let width = report
        .per_expression
        .iter()
        .map(|s| s.expression_id.len())
        .max()
        .unwrap_or(0)
        .max("expression".len());
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>6}  {:>6}  {:>6}  {:>8}", "expression", "J", "F", "target", "nonempty");
    for s in &report.per_expression {
        let pc = |v: Option<f64>| cell(v.map(|x| x * 100.0));
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>8}",
            s.expression_id,
            pc(s.j),
            pc(s.f),
            if s.gt_target_present { "yes" } else { "no" },
            if s.predicted_nonempty { "yes" } else { "no" },
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{:>8}  {:>8}  {:>8}  {:>8}", "J&F", "N-acc", "T-acc", "Final");
    let _ = writeln!(
        out,
        "{:>8}  {:>8}  {:>8}  {:>8}",
        cell(report.jf),
        cell(report.n_acc),
        cell(report.t_acc),
        cell(report.final_score)
    );
    let _ = writeln!(
        out,
        "expressions: {} target, {} no-target",
        report.counts.n_target, report.counts.n_notarget
    );
    out
}
