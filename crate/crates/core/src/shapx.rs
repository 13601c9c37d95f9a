//! Segment-level Shapley attributions: kernel SHAP by constrained weighted
//! least squares, an exact enumeration for small games, and the two
//! multivariate strategies (one concatenated series, or one model per
//! channel).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::linear::EnsembleModel;
use crate::model::{argmax, Classifier};
use crate::rng;
use crate::tsdata::{concat_channels, unflatten_saliency, LabeledDataset, MultiSeries, SaliencyMap, Scale};

pub const EXACT_LIMIT: usize = 12;
pub const DEFAULT_SAMPLE_CAP: usize = 2048;
const RESAMPLE_ATTEMPTS: u64 = 4;

/// Cut points splitting `0..len` into near-equal segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentSpec {
    bounds: Vec<usize>,
}

impl SegmentSpec {
    pub fn n_segments(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn bounds(&self) -> &[usize] {
        &self.bounds
    }

    pub fn range(&self, i: usize) -> core::ops::Range<usize> {
        self.bounds[i]..self.bounds[i + 1]
    }

    pub fn widths(&self) -> Vec<usize> {
        self.bounds.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// `m` segments over `0..len`; the first `len % m` segments are one longer.
pub fn segment_bounds(len: usize, m: usize) -> Result<SegmentSpec> {
    if m == 0 || m > len {
        return Err(Error::InvalidArgument(format!("{m} segments over {len} points")));
    }
    let (base, extra) = (len / m, len % m);
    let mut bounds = Vec::with_capacity(m + 1);
    let mut at = 0;
    bounds.push(0);
    for i in 0..m {
        at += base + usize::from(i < extra);
        bounds.push(at);
    }
    Ok(SegmentSpec { bounds })
}

/// Kept segments come from `x`, the rest from `background`.
pub fn mask_instance(x: &[f64], coalition: &[bool], background: &[f64], seg: &SegmentSpec) -> Vec<f64> {
    assert_eq!(x.len(), background.len(), "background length");
    assert_eq!(coalition.len(), seg.n_segments(), "coalition length");
    let mut out = background.to_vec();
    for (i, &keep) in coalition.iter().enumerate() {
        if keep {
            let r = seg.range(i);
            out[r.clone()].copy_from_slice(&x[r]);
        }
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Kernel weight of one coalition of size `z` among `m` players.
pub fn shapley_kernel_weight(m: usize, z: usize) -> Result<f64> {
    if z == 0 || z >= m {
        return Err(Error::DomainError { size: z, players: m });
    }
    Ok((m - 1) as f64 / (binomial(m, z) * (z * (m - z)) as f64))
}

/// A cooperative game over segments, evaluated a batch of coalitions at a
/// time.
pub trait CoalitionGame {
    fn players(&self) -> usize;
    fn values(&self, coalitions: &[Vec<bool>]) -> Vec<f64>;
}

/// One class probability of a classifier as segments of a univariate series
/// are swapped for the background.
pub struct ClassifierGame<'a> {
    pub model: &'a dyn Classifier,
    pub x: &'a [f64],
    pub background: &'a [f64],
    pub segments: SegmentSpec,
    pub class: usize,
}

impl CoalitionGame for ClassifierGame<'_> {
    fn players(&self) -> usize {
        self.segments.n_segments()
    }

    fn values(&self, coalitions: &[Vec<bool>]) -> Vec<f64> {
        let len = self.x.len();
        let inputs: Vec<MultiSeries> = coalitions
            .iter()
            .map(|c| {
                MultiSeries::new(1, len, mask_instance(self.x, c, self.background, &self.segments))
                    .expect("masked series stays finite")
            })
            .collect();
        self.model.predict_proba_batch(&inputs).into_iter().map(|p| p[self.class]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapExplanation {
    pub phi: Vec<f64>,
    /// Game value of the empty coalition.
    pub base_value: f64,
    /// Game value of the full coalition.
    pub full_value: f64,
    pub efficiency_residual: f64,
    pub evaluations: usize,
    pub exhaustive: bool,
}

impl ShapExplanation {
    fn new(phi: Vec<f64>, base_value: f64, full_value: f64, evaluations: usize, exhaustive: bool) -> Self {
        let efficiency_residual = phi.iter().sum::<f64>() + base_value - full_value;
        Self { phi, base_value, full_value, efficiency_residual, evaluations, exhaustive }
    }
}

/// Coalitions with their regression weights; duplicates merged.
#[derive(Default)]
struct Design {
    rows: BTreeMap<Vec<bool>, f64>,
}

impl Design {
    fn add(&mut self, c: Vec<bool>, w: f64) {
        *self.rows.entry(c).or_insert(0.0) += w;
    }
}

/// Visit every `z`-subset of `0..m` in lexicographic order.
fn for_each_subset(m: usize, z: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..z).collect();
    loop {
        f(&idx);
        let Some(i) = (0..z).rev().find(|&i| idx[i] != i + m - z) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..z {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn coalition_of(m: usize, members: &[usize]) -> Vec<bool> {
    let mut c = vec![false; m];
    members.iter().for_each(|&i| c[i] = true);
    c
}

/// Every proper non-empty coalition at its kernel weight.
fn exhaustive_design(m: usize) -> Design {
    let mut d = Design::default();
    for z in 1..m {
        let w = shapley_kernel_weight(m, z).expect("0 < z < m");
        for_each_subset(m, z, |s| d.add(coalition_of(m, s), w));
    }
    d
}

/// Enumerate whole size classes (paired with their complements) from the
/// outside in while the budget covers them, then spend the rest on random
/// complement pairs drawn from the remaining kernel mass.
fn sampled_design(m: usize, budget: usize, r: &mut rng::Rng) -> Design {
    let mass: Vec<f64> = (0..m).map(|z| if z == 0 { 0.0 } else { (m - 1) as f64 / (z * (m - z)) as f64 }).collect();
    let mut d = Design::default();
    let mut left = budget;
    let mut remaining: Vec<usize> = (1..m).collect();
    for z in 1..=(m - 1) / 2 + (m - 1) % 2 {
        let pair = z != m - z;
        let count = binomial(m, z) * if pair { 2.0 } else { 1.0 };
        let total: f64 = remaining.iter().map(|&s| mass[s]).sum();
        let share = (mass[z] + if pair { mass[m - z] } else { 0.0 }) / total;
        if (left as f64) * share + 1e-9 < count {
            break;
        }
        let w = shapley_kernel_weight(m, z).expect("0 < z < m");
        for_each_subset(m, z, |s| {
            let c = coalition_of(m, s);
            if pair {
                d.add(c.iter().map(|b| !b).collect(), w);
            }
            d.add(c, w);
        });
        left -= count as usize;
        remaining.retain(|&s| s != z && s != m - z);
    }
    if remaining.is_empty() || left < 2 {
        return d;
    }
    let total: f64 = remaining.iter().map(|&s| mass[s]).sum();
    let draws = left / 2;
    let w = total / (2 * draws) as f64;
    for _ in 0..draws {
        let mut u = r.random::<f64>() * total;
        let mut z = *remaining.last().expect("non-empty");
        for &s in &remaining {
            if u < mass[s] {
                z = s;
                break;
            }
            u -= mass[s];
        }
        let members = sample(r, m, z).into_vec();
        let c = coalition_of(m, &members);
        d.add(c.iter().map(|b| !b).collect(), w);
        d.add(c, w);
    }
    d
}

/// Weighted least squares of `v(S) - v(empty)` on the coalition indicators
/// with the attributions constrained to sum to `v(full) - v(empty)`. The
/// last player is eliminated through the constraint.
fn solve_constrained(design: &Design, values: &[f64], m: usize, base: f64, full: f64) -> Result<Vec<f64>> {
    let delta = full - base;
    let p = m - 1;
    let mut xtwx = Matrix::zeros(p, p);
    let mut xtwy = vec![0.0; p];
    let mut row = vec![0.0; p];
    for ((c, &w), &v) in design.rows.iter().zip(values) {
        let last = if c[p] { 1.0 } else { 0.0 };
        for j in 0..p {
            row[j] = if c[j] { 1.0 } else { 0.0 } - last;
        }
        let y = v - base - last * delta;
        for a in 0..p {
            if row[a] == 0.0 {
                continue;
            }
            let wa = w * row[a];
            xtwy[a] += wa * y;
            for b in 0..=a {
                if row[b] != 0.0 {
                    xtwx.set(a, b, xtwx.get(a, b) + wa * row[b]);
                }
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtwx.set(b, a, xtwx.get(a, b));
        }
    }
    let head = Cholesky::factor(&xtwx)?.solve(&xtwy);
    let last = delta - head.iter().sum::<f64>();
    let mut phi = head;
    phi.push(last);
    Ok(phi)
}

/// Kernel SHAP attributions. All `2^M` coalitions are used when that fits in
/// `n_samples`; otherwise `n_samples - 2` inner coalitions are chosen as
/// described on [`sampled_design`], redrawing if the system is singular.
pub fn kernel_shap(game: &dyn CoalitionGame, n_samples: usize, seed: u64) -> Result<ShapExplanation> {
    let m = game.players();
    if m == 0 {
        return Err(Error::InvalidArgument("game without players".into()));
    }
    let ends = game.values(&[vec![false; m], vec![true; m]]);
    let (base, full) = (ends[0], ends[1]);
    if m == 1 {
        return Ok(ShapExplanation::new(vec![full - base], base, full, 2, true));
    }
    let exhaustive = m < usize::BITS as usize - 1 && (1usize << m) <= n_samples;
    if !exhaustive && n_samples < m + 2 {
        return Err(Error::InvalidArgument(format!("{n_samples} samples for {m} segments")));
    }
    let attempts = if exhaustive { 1 } else { RESAMPLE_ATTEMPTS };
    let mut last_err = Error::SingularSystem;
    for attempt in 0..attempts {
        let design = if exhaustive {
            exhaustive_design(m)
        } else {
            sampled_design(m, n_samples - 2, &mut rng::stream(seed, &[attempt]))
        };
        let coalitions: Vec<Vec<bool>> = design.rows.keys().cloned().collect();
        let values = game.values(&coalitions);
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model output".into()));
        }
        match solve_constrained(&design, &values, m, base, full) {
            Ok(phi) => return Ok(ShapExplanation::new(phi, base, full, coalitions.len() + 2, exhaustive)),
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

/// Shapley values by averaging marginal contributions over all subsets.
pub fn exact_shap(game: &dyn CoalitionGame) -> Result<ShapExplanation> {
    let m = game.players();
    if m > EXACT_LIMIT {
        return Err(Error::TooManySegments(m));
    }
    let all: Vec<Vec<bool>> = (0..1usize << m).map(|bits| (0..m).map(|i| bits >> i & 1 == 1).collect()).collect();
    let v = game.values(&all);
    let fact: Vec<f64> = (0..=m).scan(1.0, |f, i| {
        if i > 0 {
            *f *= i as f64;
        }
        Some(*f)
    }).collect();
    let mut phi = vec![0.0; m];
    for (i, p) in phi.iter_mut().enumerate() {
        for bits in 0..1usize << m {
            if bits >> i & 1 == 1 {
                continue;
            }
            let s = bits.count_ones() as usize;
            let w = fact[s] * fact[m - s - 1] / fact[m];
            *p += w * (v[bits | 1 << i] - v[bits]);
        }
    }
    Ok(ShapExplanation::new(phi, v[0], v[(1 << m) - 1], 1 << m, true))
}

/// Per-time-point mean of the training instances.
pub fn training_background(train: &LabeledDataset) -> Result<MultiSeries> {
    let (d, len) = train.dims().ok_or_else(|| Error::InvalidArgument("empty training set".into()))?;
    let mut acc = vec![0.0; d * len];
    for x in &train.instances {
        crate::linalg::axpy(1.0, x.values(), &mut acc);
    }
    acc.iter_mut().for_each(|v| *v /= train.len() as f64);
    MultiSeries::new(d, len, acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapConfig {
    pub segments_per_channel: usize,
    /// Model evaluations per kernel SHAP run; `None` means `min(2^M, 2048)`.
    pub n_samples: Option<usize>,
    pub seed: u64,
}

impl Default for ShapConfig {
    fn default() -> Self {
        Self { segments_per_channel: 10, n_samples: None, seed: 0 }
    }
}

impl ShapConfig {
    pub fn samples_for(&self, m: usize) -> usize {
        self.n_samples.unwrap_or(if m < 12 { 1 << m } else { DEFAULT_SAMPLE_CAP })
    }
}

fn segment_width(len: usize, s: usize) -> Result<usize> {
    if s == 0 || len % s != 0 {
        return Err(Error::NonDivisibleWindow { window: s, len });
    }
    Ok(len / s)
}

/// Raw `d x segments` map plus the per-row explanations behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiShap {
    pub map: SaliencyMap,
    pub parts: Vec<ShapExplanation>,
    pub class: usize,
}

/// Explain a model over the concatenated series with `d * segments`
/// segments, then fold the attributions back to `d` rows.
pub fn explain_concatenated(
    model: &dyn Classifier,
    x: &MultiSeries,
    background: &MultiSeries,
    cfg: &ShapConfig,
) -> Result<MultiShap> {
    let (d, len) = (x.channels(), x.length());
    if background.shape() != x.shape() {
        return Err(Error::ShapeMismatch { expected: x.shape(), found: background.shape() });
    }
    let s = cfg.segments_per_channel;
    let width = segment_width(len, s)?;
    let xc = concat_channels(x);
    let bc = concat_channels(background);
    let class = argmax(&model.predict_proba(&xc));
    let m = d * s;
    let game =
        ClassifierGame { model, x: xc.values(), background: bc.values(), segments: segment_bounds(d * len, m)?, class };
    let e = kernel_shap(&game, cfg.samples_for(m), cfg.seed)?;
    let flat = SaliencyMap::new(1, m, e.phi.clone(), Scale::Raw, width)?;
    Ok(MultiShap { map: unflatten_saliency(&flat, d, s)?, parts: vec![e], class })
}

/// Explain each channel's member of the ensemble on its own channel and
/// stack the rows. Every row explains the ensemble's predicted class.
pub fn explain_channel_by_channel(
    ensemble: &EnsembleModel,
    x: &MultiSeries,
    background: &MultiSeries,
    cfg: &ShapConfig,
) -> Result<MultiShap> {
    let (d, len) = (x.channels(), x.length());
    if ensemble.channels() != d || background.shape() != x.shape() {
        return Err(Error::ShapeMismatch { expected: x.shape(), found: background.shape() });
    }
    let s = cfg.segments_per_channel;
    let width = segment_width(len, s)?;
    let class = argmax(&ensemble.predict_proba(x));
    let mut parts = Vec::with_capacity(d);
    for c in 0..d {
        let game = ClassifierGame {
            model: ensemble.member(c),
            x: x.row(c),
            background: background.row(c),
            segments: segment_bounds(len, s)?,
            class,
        };
        parts.push(kernel_shap(&game, cfg.samples_for(s), rng::derive(cfg.seed, c as u64))?);
    }
    let weights = parts.iter().flat_map(|e| e.phi.iter().copied()).collect();
    Ok(MultiShap { map: SaliencyMap::new(d, s, weights, Scale::Raw, width)?, parts, class })
}
