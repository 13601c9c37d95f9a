//! Channel-resolved saliency from class activation maps averaged over many
//! channel orders of the rotated stack.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::model::argmax;
use crate::rng;
use crate::tsdata::{MultiSeries, SaliencyMap, Scale};

use super::cnn::GapCnn;
use super::cx::{build_cx, identity, slot_channel};

/// Channel filter applied when finishing the map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelGate {
    /// Keep every channel.
    #[default]
    Off,
    /// Zero channels whose mean position variance is below the median.
    BelowMedian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DcamConfig {
    /// Number of channel orders; all `d!` are used when that is not more.
    pub k: usize,
    pub seed: u64,
    pub gate: ChannelGate,
}

impl Default for DcamConfig {
    fn default() -> Self {
        Self { k: 200, seed: 0, gate: ChannelGate::Off }
    }
}

/// Running per-(channel, time) sums of the cell-level class evidence, one
/// sample per row for every permutation added.
#[derive(Debug, Clone, PartialEq)]
pub struct DcamAccumulator {
    d: usize,
    len: usize,
    sum: Vec<f64>,
    sumsq: Vec<f64>,
    count: usize,
}

impl DcamAccumulator {
    pub fn new(d: usize, len: usize) -> Self {
        Self { d, len, sum: vec![0.0; d * len], sumsq: vec![0.0; d * len], count: 0 }
    }

    /// Permutations added so far.
    pub fn count(&self) -> usize {
        self.count
    }

    /// `cells` is the `(row, slot, time)` output of
    /// [`GapCnn::cam_cells`] for the stack built with `perm`.
    pub fn add(&mut self, perm: &[usize], cells: &[f64]) {
        let (d, len) = (self.d, self.len);
        assert_eq!(cells.len(), d * d * len, "cell map size");
        for r in 0..d {
            for s in 0..d {
                let c = slot_channel(perm, r, s);
                let src = &cells[(r * d + s) * len..(r * d + s + 1) * len];
                for ((a, q), &v) in self.sum[c * len..(c + 1) * len]
                    .iter_mut()
                    .zip(&mut self.sumsq[c * len..(c + 1) * len])
                    .zip(src)
                {
                    *a += v;
                    *q += v * v;
                }
            }
        }
        self.count += 1;
    }

    fn samples(&self) -> f64 {
        (self.count * self.d) as f64
    }

    /// Mean evidence per `(channel, time)` across rows and permutations.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.samples();
        self.sum.iter().map(|s| s / n).collect()
    }

    /// Population variance per `(channel, time)` across rows and permutations.
    pub fn variance(&self) -> Vec<f64> {
        let n = self.samples();
        self.sum.iter().zip(&self.sumsq).map(|(s, q)| (q / n - (s / n) * (s / n)).max(0.0)).collect()
    }

    /// Mean over time of each channel's position variance.
    pub fn channel_variance(&self) -> Vec<f64> {
        let v = self.variance();
        v.chunks(self.len).map(|c| c.iter().sum::<f64>() / self.len as f64).collect()
    }

    /// Centre each channel on its time average and, with
    /// [`ChannelGate::BelowMedian`], zero the channels whose position variance
    /// is below the median. With one channel the mean map is returned as is.
    pub fn finish(&self, gate: ChannelGate) -> Result<SaliencyMap> {
        if self.count == 0 {
            return Err(Error::InvalidArgument("no permutations accumulated".into()));
        }
        let (d, len) = (self.d, self.len);
        let mut w = self.mean();
        if d > 1 {
            let var = self.channel_variance();
            let cut = match gate {
                ChannelGate::Off => f64::NEG_INFINITY,
                ChannelGate::BelowMedian => median(&var),
            };
            for (c, row) in w.chunks_mut(len).enumerate() {
                if var[c] < cut {
                    row.iter_mut().for_each(|v| *v = 0.0);
                } else {
                    let m = row.iter().sum::<f64>() / len as f64;
                    row.iter_mut().for_each(|v| *v -= m);
                }
            }
        }
        SaliencyMap::new(d, len, w, Scale::Raw, 1)
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn factorial_at_most(d: usize, k: usize) -> bool {
    let mut f: usize = 1;
    for i in 2..=d {
        f = match f.checked_mul(i) {
            Some(v) if v <= k => v,
            _ => return false,
        };
    }
    f <= k
}

/// Next permutation in lexicographic order, or `false` after the last.
fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("successor exists");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// All `d!` orders when that is at most `k`, else `k` uniform draws.
pub fn permutations(d: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    if factorial_at_most(d, k) {
        let mut p = identity(d);
        let mut all = vec![p.clone()];
        while next_permutation(&mut p) {
            all.push(p.clone());
        }
        return all;
    }
    (0..k as u64)
        .map(|i| {
            let mut p = identity(d);
            p.shuffle(&mut rng::stream(seed, &[i]));
            p
        })
        .collect()
}

/// The class dCAM explains: the model's prediction on the identity stack.
pub fn explained_class(m: &GapCnn, x: &MultiSeries) -> Result<usize> {
    Ok(argmax(&m.logits(&build_cx(x, &identity(x.channels()))?)?))
}

pub fn permutation_cells(m: &GapCnn, x: &MultiSeries, perm: &[usize], class: usize) -> Result<Vec<f64>> {
    m.cam_cells(&build_cx(x, perm)?, class)
}

pub fn dcam(m: &GapCnn, x: &MultiSeries, cfg: &DcamConfig) -> Result<SaliencyMap> {
    if cfg.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let class = explained_class(m, x)?;
    let mut acc = DcamAccumulator::new(x.channels(), x.length());
    for perm in permutations(x.channels(), cfg.k, cfg.seed) {
        let cells = permutation_cells(m, x, &perm, class)?;
        acc.add(&perm, &cells);
    }
    acc.finish(cfg.gate)
}
