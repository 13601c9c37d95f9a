//! Scoring rescaled saliency maps against a ground-truth mask, and ranking
//! channels by average importance.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tsdata::{pool_saliency, rescale_abs_minmax, GroundTruthMask, SaliencyMap, Scale};

pub const DEFAULT_THRESHOLD: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub pr_auc: f64,
    pub roc_auc: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtReport {
    /// Arithmetic mean of the per-instance values.
    pub mean: GtMetrics,
    pub per_instance: Vec<GtMetrics>,
}

fn check_shape(w: &SaliencyMap, g: &GroundTruthMask) -> Result<()> {
    if w.shape() != g.shape() {
        return Err(Error::ShapeMismatch { expected: g.shape(), found: w.shape() });
    }
    Ok(())
}

fn check_both_classes(g: &GroundTruthMask) -> Result<()> {
    let ones = g.ones();
    if ones == 0 || ones == g.cells().len() {
        return Err(Error::DegenerateMask);
    }
    Ok(())
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Cells strictly above `threshold` count as predicted informative.
/// Precision is 0 when nothing is predicted.
pub fn threshold_metrics(w: &SaliencyMap, g: &GroundTruthMask, threshold: f64) -> Result<(f64, f64, f64)> {
    check_shape(w, g)?;
    if w.scale() != Scale::Rescaled0to100 {
        return Err(Error::NotRescaled);
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&v, &truth) in w.weights().iter().zip(g.cells()) {
        match (v > threshold, truth) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = if tp + fneg > 0 { tp as f64 / (tp + fneg) as f64 } else { 0.0 };
    Ok((precision, recall, f1_score(precision, recall)))
}

/// Cells sorted by descending score, grouped into runs of equal score, each
/// run reported as (positives, negatives).
fn tie_groups(w: &SaliencyMap, g: &GroundTruthMask) -> Vec<(usize, usize)> {
    let mut cells: Vec<(f64, bool)> = w.weights().iter().copied().zip(g.cells().iter().copied()).collect();
    cells.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut last = None;
    for (score, truth) in cells {
        if last != Some(score) {
            groups.push((0, 0));
            last = Some(score);
        }
        let grp = groups.last_mut().expect("group pushed");
        if truth {
            grp.0 += 1;
        } else {
            grp.1 += 1;
        }
    }
    groups
}

/// Probability that a random informative cell outscores a random
/// uninformative one, ties counting one half.
pub fn roc_auc(w: &SaliencyMap, g: &GroundTruthMask) -> Result<f64> {
    check_shape(w, g)?;
    check_both_classes(g)?;
    let positives = g.ones() as u64;
    let negatives = g.cells().len() as u64 - positives;
    // twice the Mann-Whitney count, kept integral
    let mut negatives_below = negatives;
    let mut twice: u64 = 0;
    for (p, n) in tie_groups(w, g) {
        negatives_below -= n as u64;
        twice += p as u64 * (2 * negatives_below + n as u64);
    }
    Ok(twice as f64 / (2 * positives * negatives) as f64)
}

/// Average precision: the precision at each distinct score threshold,
/// weighted by the recall gained there.
pub fn pr_auc(w: &SaliencyMap, g: &GroundTruthMask) -> Result<f64> {
    check_shape(w, g)?;
    check_both_classes(g)?;
    let positives = g.ones();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = 0.0;
    for (p, n) in tie_groups(w, g) {
        tp += p;
        fp += n;
        if p > 0 {
            ap += (p as f64 / positives as f64) * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(ap)
}

pub fn gt_metrics(w: &SaliencyMap, g: &GroundTruthMask, threshold: f64) -> Result<GtMetrics> {
    let (precision, recall, f1) = threshold_metrics(w, g, threshold)?;
    Ok(GtMetrics { precision, recall, f1, pr_auc: pr_auc(w, g)?, roc_auc: roc_auc(w, g)?, threshold })
}

/// Bring any map onto the mask grid: average consecutive columns down to the
/// mask's resolution, then rescale. Already rescaled maps on the grid pass
/// through unchanged.
pub fn align_to_mask(w: &SaliencyMap, g: &GroundTruthMask) -> Result<SaliencyMap> {
    if w.channels() != g.channels() || w.columns() % g.columns() != 0 {
        return Err(Error::ShapeMismatch { expected: g.shape(), found: w.shape() });
    }
    if w.columns() == g.columns() {
        return Ok(match w.scale() {
            Scale::Raw => rescale_abs_minmax(w),
            Scale::Rescaled0to100 => w.clone(),
        });
    }
    Ok(rescale_abs_minmax(&pool_saliency(w, w.columns() / g.columns())?))
}

pub fn evaluate_explainer(maps: &[SaliencyMap], g: &GroundTruthMask, threshold: f64) -> Result<GtReport> {
    if maps.is_empty() {
        return Err(Error::InvalidArgument("no explanations to evaluate".into()));
    }
    let per_instance = maps.iter().map(|w| gt_metrics(w, g, threshold)).collect::<Result<Vec<_>>>()?;
    let n = per_instance.len() as f64;
    let avg = |f: fn(&GtMetrics) -> f64| per_instance.iter().map(f).sum::<f64>() / n;
    let mean = GtMetrics {
        precision: avg(|m| m.precision),
        recall: avg(|m| m.recall),
        f1: avg(|m| m.f1),
        pr_auc: avg(|m| m.pr_auc),
        roc_auc: avg(|m| m.roc_auc),
        threshold,
    };
    Ok(GtReport { mean, per_instance })
}

/// Channels ordered by mean rescaled |weight| over instances and columns,
/// normalized so the top channel scores 1. Ties keep channel order.
pub fn rank_channels(maps: &[SaliencyMap]) -> Result<Vec<(usize, f64)>> {
    let first = maps.first().ok_or_else(|| Error::InvalidArgument("no explanations to rank".into()))?;
    let d = first.channels();
    let mut total = vec![0.0; d];
    for w in maps {
        if w.channels() != d {
            return Err(Error::ShapeMismatch { expected: first.shape(), found: w.shape() });
        }
        let r = match w.scale() {
            Scale::Raw => rescale_abs_minmax(w),
            Scale::Rescaled0to100 => w.clone(),
        };
        for (c, t) in total.iter_mut().enumerate() {
            *t += r.row(c).iter().sum::<f64>() / r.columns() as f64;
        }
    }
    let top = total.iter().cloned().fold(0.0, f64::max);
    let mut ranked: Vec<(usize, f64)> =
        total.iter().enumerate().map(|(c, &t)| (c, if top > 0.0 { t / top } else { 0.0 })).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked)
}
