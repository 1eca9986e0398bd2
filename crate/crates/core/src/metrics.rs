//! Segmentation and classifier evaluation.
//!
//! Variation of information is computed in nats from the pixel contingency
//! table. Ground-truth id 0 marks unlabeled pixels and is excluded by the
//! callers that pass `ignore_zero_y = true`.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{LabelId, LabelMap};
use crate::imageops::{adjacency_pairs, contingency, Contingency};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub vi: f64,
    /// Conditional entropy of the first map given the second (false merges).
    pub h_x_given_y: f64,
    /// Conditional entropy of the second map given the first (false splits).
    pub h_y_given_x: f64,
}

pub fn vi(x: &LabelMap, y: &LabelMap, ignore_zero_y: bool) -> Result<MetricValue> {
    let table = contingency(x, y, ignore_zero_y)?;
    vi_from_table(&table)
}

pub fn vi_from_table(table: &Contingency) -> Result<MetricValue> {
    if table.total == 0 {
        return Err(Error::EmptyOverlap);
    }
    let n = table.total as f64;
    let rows = table.row_sums();
    let cols = table.col_sums();
    let mut h_x_given_y = 0.0;
    let mut h_y_given_x = 0.0;
    for (&(i, j), &nij) in &table.counts {
        let nij = nij as f64;
        let p = nij / n;
        h_x_given_y -= p * (nij / cols[&j] as f64).ln();
        h_y_given_x -= p * (nij / rows[&i] as f64).ln();
    }
    // -0.0 and rounding noise on identical maps
    let h_x_given_y = h_x_given_y.max(0.0);
    let h_y_given_x = h_y_given_x.max(0.0);
    Ok(MetricValue {
        vi: h_x_given_y + h_y_given_x,
        h_x_given_y,
        h_y_given_x,
    })
}

/// Maps every automatic segment to the ground-truth id it overlaps most
/// (ground-truth 0 ignored). Segments with no labeled overlap are absent.
/// Ties go to the smaller ground-truth id. Also returns, per segment, the
/// fraction of its pixels covered by that id.
pub fn max_overlap_map(
    auto: &LabelMap,
    gt: &LabelMap,
) -> Result<BTreeMap<LabelId, (LabelId, f64)>> {
    let table = contingency(auto, gt, false)?;
    let sizes = table.row_sums();
    let mut best: BTreeMap<LabelId, (LabelId, u64)> = BTreeMap::new();
    for (&(a, g), &n) in &table.counts {
        if g == 0 {
            continue;
        }
        let e = best.entry(a).or_insert((g, n));
        if n > e.1 {
            *e = (g, n);
        }
    }
    Ok(best
        .into_iter()
        .map(|(a, (g, n))| (a, (g, n as f64 / sizes[&a] as f64)))
        .collect())
}

/// Relabels each automatic segment with its maximum-overlap ground-truth id.
/// Segments without any labeled overlap keep a fresh id above every
/// ground-truth id so they stay distinct.
pub fn max_overlap_relabel(auto: &LabelMap, gt: &LabelMap) -> Result<LabelMap> {
    let map = max_overlap_map(auto, gt)?;
    let base = gt.max_label();
    Ok(auto.map(|&a| match map.get(&a) {
        Some(&(g, _)) => g,
        None if a == 0 => 0,
        None => base + a,
    }))
}

/// VI reachable by split corrections alone: relabel by maximum overlap, then
/// compare with the ground truth (unlabeled ground truth excluded).
pub fn best_possible_vi(auto: &LabelMap, gt: &LabelMap) -> Result<MetricValue> {
    let relabeled = max_overlap_relabel(auto, gt)?;
    vi(&relabeled, gt, true)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCensus {
    pub split_errors: usize,
    pub merge_errors: usize,
}

/// Minimum share of a segment a second ground-truth cell must cover before
/// the segment counts as a merge error.
pub const MERGE_OVERLAP_FLOOR: f64 = 0.25;

pub fn error_census(auto: &LabelMap, gt: &LabelMap) -> Result<ErrorCensus> {
    let map = max_overlap_map(auto, gt)?;
    let split_errors = adjacency_pairs(auto)
        .into_iter()
        .filter(|(a, b)| match (map.get(a), map.get(b)) {
            (Some((ga, _)), Some((gb, _))) => ga == gb,
            _ => false,
        })
        .count();

    let table = contingency(auto, gt, false)?;
    let sizes = table.row_sums();
    let mut big_overlaps: HashMap<LabelId, usize> = HashMap::new();
    for (&(a, g), &n) in &table.counts {
        if a != 0 && g != 0 && n as f64 >= MERGE_OVERLAP_FLOOR * sizes[&a] as f64 {
            *big_overlaps.entry(a).or_insert(0) += 1;
        }
    }
    let merge_errors = big_overlaps.values().filter(|&&k| k >= 2).count();
    Ok(ErrorCensus {
        split_errors,
        merge_errors,
    })
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Sample standard deviation; zero for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values).unwrap();
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Decreasing; the first point (`+inf`) classifies nothing as positive.
    pub thresholds: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    pub auc: f64,
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Threshold sweep over the distinct scores (positive means `score >= t`),
/// area by the trapezoid rule. Tied scores enter the curve together.
pub fn roc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    check_inputs(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));

    let mut thresholds = vec![f64::INFINITY];
    let mut tpr = vec![0.0];
    let mut fpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let t = scores[order[k]];
        while k < order.len() && scores[order[k]] == t {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        thresholds.push(t);
        tpr.push(tp as f64 / pos as f64);
        fpr.push(fp as f64 / neg as f64);
    }
    let auc = fpr
        .windows(2)
        .zip(tpr.windows(2))
        .map(|(f, t)| (f[1] - f[0]) * (t[1] + t[0]) * 0.5)
        .sum();
    Ok(RocCurve {
        thresholds,
        tpr,
        fpr,
        auc,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 with `score > threshold` as the positive call.
/// Undefined ratios (no predicted or no actual positives) are reported as 0.
pub fn prf1(scores: &[f64], labels: &[bool], threshold: f64) -> Result<PrecisionRecall> {
    check_inputs(scores, labels)?;
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s > threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(PrecisionRecall {
        precision,
        recall,
        f1,
    })
}
