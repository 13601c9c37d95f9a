//! Core data model: multivariate series, labeled splits, saliency maps and
//! ground-truth masks, plus the reshaping steps that bring saliency maps from
//! different explainers onto a common grid.
//!
//! All grids are stored row-major: channel first, then time (or segment).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result, Shape};

/// One `d x L` multivariate series.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSeries {
    d: usize,
    len: usize,
    values: Vec<f64>,
}

impl MultiSeries {
    pub fn new(d: usize, len: usize, values: Vec<f64>) -> Result<Self> {
        if d == 0 || len == 0 {
            return Err(Error::InvalidShape(format!("series must be at least 1x1, got {d}x{len}")));
        }
        if values.len() != d * len {
            return Err(Error::DimensionMismatch(format!(
                "{d}x{len} series needs {} values, got {}",
                d * len,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("series cell ({}, {})", i / len, i % len)));
        }
        Ok(Self { d, len, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        let len = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != len) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::new(d, len, rows.concat())
    }

    pub fn zeros(d: usize, len: usize) -> Self {
        assert!(d > 0 && len > 0);
        Self { d, len, values: alloc::vec![0.0; d * len] }
    }

    pub fn channels(&self) -> usize {
        self.d
    }

    pub fn length(&self) -> usize {
        self.len
    }

    pub fn shape(&self) -> Shape {
        Shape(self.d, self.len)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access for in-crate builders; callers must keep values finite.
    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.values[c * self.len..(c + 1) * self.len]
    }

    pub fn get(&self, c: usize, t: usize) -> f64 {
        self.values[c * self.len + t]
    }

    /// Channel `c` as a univariate series.
    pub fn channel(&self, c: usize) -> MultiSeries {
        MultiSeries { d: 1, len: self.len, values: self.row(c).to_vec() }
    }
}

/// A train or test split.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub instances: Vec<MultiSeries>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub seed: u64,
    pub name: String,
}

impl LabeledDataset {
    pub fn new(
        instances: Vec<MultiSeries>,
        labels: Vec<usize>,
        n_classes: usize,
        seed: u64,
        name: impl Into<String>,
    ) -> Result<Self> {
        if instances.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} instances but {} labels",
                instances.len(),
                labels.len()
            )));
        }
        if n_classes == 0 {
            return Err(Error::InvalidArgument("n_classes must be positive".into()));
        }
        if let Some(first) = instances.first() {
            if let Some(bad) = instances.iter().find(|x| x.shape() != first.shape()) {
                return Err(Error::ShapeMismatch { expected: first.shape(), found: bad.shape() });
            }
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidArgument(format!("label {l} outside 0..{n_classes}")));
        }
        Ok(Self { instances, labels, n_classes, seed, name: name.into() })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// `(d, L)` of the instances, `None` for an empty split.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.instances.first().map(|x| (x.channels(), x.length()))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// The same split with every instance flattened to `1 x (d*L)`.
    pub fn concatenated(&self) -> LabeledDataset {
        LabeledDataset {
            instances: self.instances.iter().map(concat_channels).collect(),
            labels: self.labels.clone(),
            n_classes: self.n_classes,
            seed: self.seed,
            name: format!("{}-concat", self.name),
        }
    }

    /// Channel `c` of every instance as a univariate split.
    pub fn channel(&self, c: usize) -> LabeledDataset {
        LabeledDataset {
            instances: self.instances.iter().map(|x| x.channel(c)).collect(),
            labels: self.labels.clone(),
            n_classes: self.n_classes,
            seed: self.seed,
            name: format!("{}-ch{c}", self.name),
        }
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            instances: idx.iter().map(|&i| self.instances[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            seed: self.seed,
            name: self.name.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Raw,
    Rescaled0to100,
}

/// A `d x S` importance grid for one explained instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    d: usize,
    s: usize,
    weights: Vec<f64>,
    scale: Scale,
    segment_width: usize,
}

impl SaliencyMap {
    pub fn new(d: usize, s: usize, weights: Vec<f64>, scale: Scale, segment_width: usize) -> Result<Self> {
        if d == 0 || s == 0 || segment_width == 0 {
            return Err(Error::InvalidShape(format!("saliency map {d}x{s}, segment width {segment_width}")));
        }
        if weights.len() != d * s {
            return Err(Error::DimensionMismatch(format!(
                "{d}x{s} saliency needs {} values, got {}",
                d * s,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("saliency weight".into()));
        }
        if scale == Scale::Rescaled0to100 && weights.iter().any(|w| !(0.0..=100.0).contains(w)) {
            return Err(Error::InvalidArgument("rescaled weights must lie in [0, 100]".into()));
        }
        Ok(Self { d, s, weights, scale, segment_width })
    }

    /// Raw map at full time resolution.
    pub fn raw(d: usize, len: usize, weights: Vec<f64>) -> Result<Self> {
        Self::new(d, len, weights, Scale::Raw, 1)
    }

    pub fn channels(&self) -> usize {
        self.d
    }

    pub fn columns(&self) -> usize {
        self.s
    }

    pub fn shape(&self) -> Shape {
        Shape(self.d, self.s)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn segment_width(&self) -> usize {
        self.segment_width
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.weights[c * self.s..(c + 1) * self.s]
    }

    pub fn get(&self, c: usize, s: usize) -> f64 {
        self.weights[c * self.s + s]
    }

    /// Repeat every column `segment_width` times to reach time resolution.
    pub fn upsampled(&self) -> SaliencyMap {
        if self.segment_width == 1 {
            return self.clone();
        }
        let w = self.segment_width;
        let weights = self
            .weights
            .chunks(self.s)
            .flat_map(|row| row.iter().flat_map(move |&v| core::iter::repeat_n(v, w)))
            .collect();
        SaliencyMap { d: self.d, s: self.s * w, weights, scale: self.scale, segment_width: 1 }
    }

    /// Row-flatten to a `1 x (d*S)` map.
    pub fn flattened(&self) -> SaliencyMap {
        SaliencyMap { d: 1, s: self.d * self.s, weights: self.weights.clone(), ..*self }
    }

    /// Reorder rows so that output row `i` is input row `order[i]`.
    pub fn permute_rows(&self, order: &[usize]) -> SaliencyMap {
        let weights = order.iter().flat_map(|&c| self.row(c).iter().copied()).collect();
        SaliencyMap { weights, ..*self }
    }
}

/// Binary informative-cell grid for synthetic data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthMask {
    d: usize,
    s: usize,
    cells: Vec<bool>,
}

impl GroundTruthMask {
    pub fn new(d: usize, s: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != d * s || d == 0 || s == 0 {
            return Err(Error::DimensionMismatch(format!("{d}x{s} mask with {} cells", cells.len())));
        }
        if cells.iter().all(|&c| c) || cells.iter().all(|&c| !c) {
            return Err(Error::DegenerateMask);
        }
        Ok(Self { d, s, cells })
    }

    pub fn channels(&self) -> usize {
        self.d
    }

    pub fn columns(&self) -> usize {
        self.s
    }

    pub fn shape(&self) -> Shape {
        Shape(self.d, self.s)
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn get(&self, c: usize, s: usize) -> bool {
        self.cells[c * self.s + s]
    }

    pub fn ones(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// The mask as a `0/100` rescaled saliency map of matching shape.
    pub fn as_saliency(&self, segment_width: usize) -> SaliencyMap {
        let weights = self.cells.iter().map(|&c| if c { 100.0 } else { 0.0 }).collect();
        SaliencyMap { d: self.d, s: self.s, weights, scale: Scale::Rescaled0to100, segment_width }
    }
}

/// Flatten channels into one univariate series, channel 0 first.
pub fn concat_channels(x: &MultiSeries) -> MultiSeries {
    MultiSeries { d: 1, len: x.d * x.len, values: x.values.clone() }
}

/// Average `window` consecutive columns of every row.
pub fn pool_saliency(w: &SaliencyMap, window: usize) -> Result<SaliencyMap> {
    if window == 0 || w.s % window != 0 {
        return Err(Error::NonDivisibleWindow { window, len: w.s });
    }
    let s = w.s / window;
    let weights = w
        .weights
        .chunks(window)
        .map(|chunk| chunk.iter().sum::<f64>() / window as f64)
        .collect();
    Ok(SaliencyMap { d: w.d, s, weights, scale: Scale::Raw, segment_width: w.segment_width * window })
}

/// Absolute value, then min-max onto `[0, 100]` over the whole grid.
/// A constant grid maps to all zeros.
pub fn rescale_abs_minmax(w: &SaliencyMap) -> SaliencyMap {
    let abs: Vec<f64> = w.weights.iter().map(|v| v.abs()).collect();
    let (lo, hi) = abs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let weights = if span > 0.0 {
        abs.iter().map(|&v| (100.0 * (v - lo) / span).clamp(0.0, 100.0)).collect()
    } else {
        alloc::vec![0.0; abs.len()]
    };
    SaliencyMap { weights, scale: Scale::Rescaled0to100, ..*w }
}

/// Reshape a `1 x (channels*per_channel)` map into `channels x per_channel`.
pub fn unflatten_saliency(v: &SaliencyMap, channels: usize, per_channel: usize) -> Result<SaliencyMap> {
    if v.d != 1 || channels == 0 || v.s != channels * per_channel {
        return Err(Error::ShapeMismatch {
            expected: Shape(1, channels * per_channel),
            found: v.shape(),
        });
    }
    Ok(SaliencyMap { d: channels, s: per_channel, weights: v.weights.clone(), ..*v })
}
