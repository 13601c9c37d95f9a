//! Synthetic two-class benchmarks with one discriminative box.
//!
//! A base process fills every channel independently; label 1 instances get
//! `+offset` added inside `box_channels x box_time`, label 0 instances get
//! `-offset`. Nothing outside the box depends on the label, so the box is the
//! ground truth of any explanation.
//!
//! Base processes (parameters are fixed here, not tuned):
//! - pseudo-periodic: `sin(2*pi*f*t/L + phase) + 0.1*N(0,1)`, `f ~ U(2,6)`,
//!   `phase ~ U(0, 2*pi)`, drawn per instance and channel;
//! - gaussian: iid `N(0,1)`;
//! - auto-regressive: AR(1) `x_t = phi*x_{t-1} + N(0,1)`, `phi = 0.9`,
//!   `x_0 ~ N(0,1)`.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Range;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;
use crate::tsdata::{GroundTruthMask, LabeledDataset, MultiSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SynthKind {
    PseudoPeriodic,
    Gaussian,
    AutoRegressive,
}

impl SynthKind {
    pub const ALL: [SynthKind; 3] = [SynthKind::PseudoPeriodic, SynthKind::Gaussian, SynthKind::AutoRegressive];

    pub fn name(self) -> &'static str {
        match self {
            SynthKind::PseudoPeriodic => "pseudo-periodic",
            SynthKind::Gaussian => "gaussian",
            SynthKind::AutoRegressive => "auto-regressive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Full description of a synthetic benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub n_train: usize,
    pub n_test: usize,
    pub d: usize,
    pub len: usize,
    pub box_channels: Range<usize>,
    pub box_time: Range<usize>,
    pub offset: f64,
    /// AR(1) coefficient; only read for [`SynthKind::AutoRegressive`].
    pub ar_coef: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(kind: SynthKind, seed: u64) -> Self {
        Self {
            kind,
            n_train: 100,
            n_test: 100,
            d: 20,
            len: 100,
            box_channels: 0..10,
            box_time: 10..20,
            offset: 1.0,
            ar_coef: 0.9,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.len == 0 {
            return Err(Error::InvalidShape(format!("{}x{}", self.d, self.len)));
        }
        if self.n_train < 2 || self.n_test < 2 {
            return Err(Error::InvalidArgument("each split needs at least 2 instances".into()));
        }
        let ok = |r: &Range<usize>, n: usize| r.start < r.end && r.end <= n;
        if !ok(&self.box_channels, self.d) || !ok(&self.box_time, self.len) {
            return Err(Error::InvalidArgument(format!(
                "box {:?} x {:?} outside {}x{}",
                self.box_channels, self.box_time, self.d, self.len
            )));
        }
        if !self.offset.is_finite() || !self.ar_coef.is_finite() {
            return Err(Error::NonFinite("offset or AR coefficient".into()));
        }
        Ok(())
    }

    /// Number of cells inside the box at time resolution.
    pub fn box_cells(&self) -> usize {
        self.box_channels.len() * self.box_time.len()
    }
}

const STREAM_TRAIN: u64 = 1;
const STREAM_TEST: u64 = 2;

/// Draw one `d x L` base series from `rng`.
pub fn generate_base(spec: &SynthSpec, rng: &mut rng::Rng) -> MultiSeries {
    let (d, len) = (spec.d, spec.len);
    let mut values = Vec::with_capacity(d * len);
    for _ in 0..d {
        match spec.kind {
            SynthKind::PseudoPeriodic => {
                let freq = rng.random_range(2.0..6.0);
                let phase = rng.random_range(0.0..2.0 * PI);
                for t in 0..len {
                    let noise: f64 = rng::normal(rng);
                    let angle = 2.0 * PI * freq * t as f64 / len as f64 + phase;
                    values.push(libm::sin(angle) + 0.1 * noise);
                }
            }
            SynthKind::Gaussian => {
                values.extend((0..len).map(|_| rng::normal(rng)));
            }
            SynthKind::AutoRegressive => {
                let mut prev: f64 = rng::normal(rng);
                values.push(prev);
                for _ in 1..len {
                    let noise: f64 = rng::normal(rng);
                    prev = spec.ar_coef * prev + noise;
                    values.push(prev);
                }
            }
        }
    }
    MultiSeries::new(d, len, values).expect("generated values are finite")
}

/// Shift the box by `+offset` (label 1) or `-offset` (label 0).
pub fn inject_box(x: &MultiSeries, spec: &SynthSpec, label: usize) -> Result<MultiSeries> {
    let sign = match label {
        0 => -1.0,
        1 => 1.0,
        _ => return Err(Error::InvalidArgument(format!("label {label} is not 0 or 1"))),
    };
    if spec.box_channels.end > x.channels() || spec.box_time.end > x.length() {
        return Err(Error::InvalidArgument("box lies outside the series".into()));
    }
    let mut out = x.clone();
    let len = x.length();
    let values = out.values_mut();
    for c in spec.box_channels.clone() {
        for t in spec.box_time.clone() {
            values[c * len + t] += sign * spec.offset;
        }
    }
    Ok(out)
}

/// Mask over `d x segments_per_channel`: a cell is informative iff its
/// segment lies inside the box. Segments straddling the box edge are an error.
pub fn ground_truth_mask(spec: &SynthSpec, segments_per_channel: usize) -> Result<GroundTruthMask> {
    if segments_per_channel == 0 || spec.len % segments_per_channel != 0 {
        return Err(Error::NonDivisibleWindow { window: segments_per_channel, len: spec.len });
    }
    let width = spec.len / segments_per_channel;
    let (start, end) = (spec.box_time.start, spec.box_time.end);
    if start % width != 0 || end % width != 0 {
        return Err(Error::MisalignedBox { start, end, width });
    }
    let seg = start / width..end / width;
    let cells = (0..spec.d)
        .flat_map(|c| {
            let seg = seg.clone();
            let inside = spec.box_channels.contains(&c);
            (0..segments_per_channel).map(move |s| inside && seg.contains(&s))
        })
        .collect();
    GroundTruthMask::new(spec.d, segments_per_channel, cells)
}

fn generate_split(spec: &SynthSpec, n: usize, stream: u64, name: &str) -> Result<LabeledDataset> {
    let split_seed = rng::derive(spec.seed, stream);
    let mut instances = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        // Alternating labels give ceil(n/2) positives and floor(n/2) negatives.
        let label = usize::from(i % 2 == 0);
        let mut r = rng::stream(split_seed, &[i as u64]);
        let base = generate_base(spec, &mut r);
        instances.push(inject_box(&base, spec, label)?);
        labels.push(label);
    }
    LabeledDataset::new(instances, labels, 2, split_seed, format!("{}-{name}", spec.kind.name()))
}

/// Train split, test split and the mask at 10 segments per channel when the
/// length allows it, full resolution otherwise.
pub fn generate_dataset(spec: &SynthSpec) -> Result<(LabeledDataset, LabeledDataset, GroundTruthMask)> {
    spec.validate()?;
    let train = generate_split(spec, spec.n_train, STREAM_TRAIN, "train")?;
    let test = generate_split(spec, spec.n_test, STREAM_TEST, "test")?;
    let mask = ground_truth_mask(spec, 10).or_else(|_| ground_truth_mask(spec, spec.len))?;
    Ok((train, test, mask))
}
