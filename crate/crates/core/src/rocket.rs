//! Random convolutional kernel transform.
//!
//! Each kernel is a dilated 1D convolution summed over a random subset of
//! channels. A series is summarised per kernel by two numbers: the proportion
//! of positive values (PPV) of the convolution output and its maximum.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng as _;

use crate::error::{Error, Result, Shape};
use crate::linalg::Matrix;
use crate::rng;
use crate::tsdata::{LabeledDataset, MultiSeries};

pub const KERNEL_LENGTHS: [usize; 3] = [7, 9, 11];
pub const DEFAULT_KERNELS: usize = 2_000;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub length: usize,
    /// Sorted channel indices the kernel reads.
    pub channels: Vec<usize>,
    /// `channels.len() x length`, each row mean-centered.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub dilation: usize,
    pub padding: usize,
}

impl KernelSpec {
    pub fn receptive_field(&self) -> usize {
        self.dilation * (self.length - 1) + 1
    }

    pub fn output_len(&self, len: usize) -> usize {
        (len + 2 * self.padding + 1).saturating_sub(self.receptive_field())
    }

    fn check(&self, d: usize, len: usize) -> Result<()> {
        if self.length == 0 || self.dilation == 0 || self.channels.is_empty() {
            return Err(Error::InvalidArgument("empty kernel".into()));
        }
        if self.weights.len() != self.channels.len() * self.length {
            return Err(Error::DimensionMismatch(format!(
                "kernel weights: {} for {} channels of length {}",
                self.weights.len(),
                self.channels.len(),
                self.length
            )));
        }
        if self.channels.iter().any(|&c| c >= d) {
            return Err(Error::ShapeMismatch { expected: Shape(d, len), found: Shape(self.channels[self.channels.len() - 1] + 1, len) });
        }
        if self.receptive_field() > len + 2 * self.padding {
            return Err(Error::InvalidArgument(format!(
                "receptive field {} exceeds padded length {}",
                self.receptive_field(),
                len + 2 * self.padding
            )));
        }
        Ok(())
    }

    fn sample(r: &mut rng::Rng, d: usize, len: usize) -> KernelSpec {
        let length = KERNEL_LENGTHS[r.random_range(0..KERNEL_LENGTHS.len())];
        let n_channels = if d == 1 { 1 } else { r.random_range(1..=d) };
        let mut channels = index::sample(r, d, n_channels).into_vec();
        channels.sort_unstable();
        let mut weights = Vec::with_capacity(n_channels * length);
        for _ in 0..n_channels {
            let row: Vec<f64> = (0..length).map(|_| rng::normal(r)).collect();
            let mean = row.iter().sum::<f64>() / length as f64;
            weights.extend(row.iter().map(|w| w - mean));
        }
        let bias = r.random_range(-1.0..1.0);
        let span = if len > length { libm::log2((len - 1) as f64 / (length - 1) as f64) } else { 0.0 };
        let exponent = if span > 0.0 { r.random_range(0.0..span) } else { 0.0 };
        let dilation = (libm::floor(libm::pow(2.0, exponent)) as usize).max(1);
        let mut padding = if r.random_bool(0.5) { (length - 1) * dilation / 2 } else { 0 };
        if dilation * (length - 1) + 1 > len + 2 * padding {
            padding = (length - 1) * dilation / 2;
        }
        KernelSpec { length, channels, weights, bias, dilation, padding }
    }

    /// Convolution output into `z` (resized to the output length).
    ///
    /// For every output position the terms are added in (channel, tap) order
    /// starting from the bias, exactly as a naive double loop would.
    pub fn convolve_into(&self, x: &MultiSeries, z: &mut Vec<f64>) {
        let len = x.length();
        let out = self.output_len(len);
        z.clear();
        z.resize(out, self.bias);
        for (ci, &c) in self.channels.iter().enumerate() {
            let row = x.row(c);
            let w = &self.weights[ci * self.length..(ci + 1) * self.length];
            match self.length {
                7 => accumulate::<7>(row, w, self.dilation, self.padding, z),
                9 => accumulate::<9>(row, w, self.dilation, self.padding, z),
                11 => accumulate::<11>(row, w, self.dilation, self.padding, z),
                _ => accumulate_any(row, w, self.dilation, self.padding, z),
            }
        }
    }
}

/// `z[t] += sum_j w[j] * row[t + j*dilation - padding]`, out-of-range taps skipped.
fn accumulate<const N: usize>(row: &[f64], w: &[f64], dilation: usize, padding: usize, z: &mut [f64]) {
    let w: [f64; N] = core::array::from_fn(|j| w[j]);
    let out = z.len();
    // Interior: every tap lands inside the row.
    let lo = padding.min(out);
    let last_tap = (N - 1) * dilation;
    let hi = (row.len() + padding).saturating_sub(last_tap).clamp(lo, out);
    if hi > lo {
        let n = hi - lo;
        let start = lo - padding;
        let taps: [&[f64]; N] = core::array::from_fn(|j| &row[start + j * dilation..start + j * dilation + n]);
        let zs = &mut z[lo..hi];
        assert!(taps.iter().all(|t| t.len() == n) && zs.len() == n);
        for i in 0..n {
            let mut s = zs[i];
            for j in 0..N {
                s += w[j] * taps[j][i];
            }
            zs[i] = s;
        }
    }
    for t in (0..lo).chain(hi..out) {
        let mut s = z[t];
        for (j, &wj) in w.iter().enumerate() {
            let idx = t + j * dilation;
            if idx >= padding && idx - padding < row.len() {
                s += wj * row[idx - padding];
            }
        }
        z[t] = s;
    }
}

fn accumulate_any(row: &[f64], w: &[f64], dilation: usize, padding: usize, z: &mut [f64]) {
    for (t, zt) in z.iter_mut().enumerate() {
        let mut s = *zt;
        for (j, &wj) in w.iter().enumerate() {
            let idx = t + j * dilation;
            if idx >= padding && idx - padding < row.len() {
                s += wj * row[idx - padding];
            }
        }
        *zt = s;
    }
}

/// `(ppv, max)` of the kernel's convolution output over `x`.
pub fn apply_kernel(x: &MultiSeries, k: &KernelSpec) -> Result<(f64, f64)> {
    k.check(x.channels(), x.length())?;
    let mut z = Vec::new();
    k.convolve_into(x, &mut z);
    Ok(summarise(&z))
}

fn summarise(z: &[f64]) -> (f64, f64) {
    let positive = z.iter().filter(|&&v| v > 0.0).count();
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (positive as f64 / z.len() as f64, max)
}

/// A sampled kernel set bound to one `(d, L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RocketTransform {
    kernels: Vec<KernelSpec>,
    seed: u64,
    d: usize,
    len: usize,
}

impl RocketTransform {
    pub fn from_kernels(kernels: Vec<KernelSpec>, seed: u64, d: usize, len: usize) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::InvalidArgument("at least one kernel is required".into()));
        }
        for k in &kernels {
            k.check(d, len)?;
        }
        Ok(Self { kernels, seed, d, len })
    }

    pub fn kernels(&self) -> &[KernelSpec] {
        &self.kernels
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fitted_for(&self) -> (usize, usize) {
        (self.d, self.len)
    }

    pub fn n_features(&self) -> usize {
        2 * self.kernels.len()
    }

    fn check_input(&self, x: &MultiSeries) -> Result<()> {
        if x.shape() != Shape(self.d, self.len) {
            return Err(Error::ShapeMismatch { expected: Shape(self.d, self.len), found: x.shape() });
        }
        Ok(())
    }

    /// Interleaved `(ppv, max)` per kernel.
    pub fn features(&self, x: &MultiSeries) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut out = Vec::with_capacity(self.n_features());
        let mut z = Vec::with_capacity(self.len);
        for k in &self.kernels {
            k.convolve_into(x, &mut z);
            let (ppv, max) = summarise(&z);
            out.push(ppv);
            out.push(max);
        }
        Ok(out)
    }
}

/// Sample `n_kernels` kernels for `d x len` inputs. Kernel `i` only depends
/// on `(seed, i)`.
pub fn sample_kernels(n_kernels: usize, d: usize, len: usize, seed: u64) -> Result<RocketTransform> {
    if n_kernels == 0 || d == 0 || len == 0 {
        return Err(Error::InvalidArgument(format!("{n_kernels} kernels for {d}x{len}")));
    }
    let kernels = (0..n_kernels)
        .map(|i| KernelSpec::sample(&mut rng::stream(seed, &[i as u64]), d, len))
        .collect();
    RocketTransform::from_kernels(kernels, seed, d, len)
}

/// Feature matrix, one row per instance.
pub fn transform(t: &RocketTransform, ds: &LabeledDataset) -> Result<Matrix> {
    let mut data = Vec::with_capacity(ds.len() * t.n_features());
    for x in &ds.instances {
        data.extend(t.features(x)?);
    }
    Ok(Matrix::from_vec(ds.len(), t.n_features(), data))
}

/// Transform from precomputed rows (e.g. produced in parallel).
pub fn assemble(rows: Vec<Vec<f64>>, n_features: usize) -> Matrix {
    let n = rows.len();
    let mut data = Vec::with_capacity(n * n_features);
    for r in rows {
        debug_assert_eq!(r.len(), n_features);
        data.extend(r);
    }
    Matrix::from_vec(n, n_features, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn naive(x: &MultiSeries, k: &KernelSpec) -> (f64, f64) {
        let len = x.length() as isize;
        let out = k.output_len(x.length());
        let mut pos = 0usize;
        let mut max = f64::NEG_INFINITY;
        for t in 0..out {
            let mut s = k.bias;
            for (ci, &c) in k.channels.iter().enumerate() {
                for j in 0..k.length {
                    let idx = t as isize + (j * k.dilation) as isize - k.padding as isize;
                    if idx >= 0 && idx < len {
                        s += k.weights[ci * k.length + j] * x.get(c, idx as usize);
                    }
                }
            }
            if s > 0.0 {
                pos += 1;
            }
            max = max.max(s);
        }
        (pos as f64 / out as f64, max)
    }

    fn kernel(length: usize, bias: f64) -> KernelSpec {
        KernelSpec { length, channels: vec![0], weights: vec![0.0; length], bias, dilation: 1, padding: 0 }
    }

    #[test]
    fn zero_series_reports_bias() {
        let x = MultiSeries::zeros(1, 30);
        assert_eq!(apply_kernel(&x, &kernel(7, 0.5)).unwrap(), (1.0, 0.5));
        assert_eq!(apply_kernel(&x, &kernel(7, -0.5)).unwrap(), (0.0, -0.5));
    }

    #[test]
    fn matches_naive_convolution() {
        let mut r = rng::stream(11, &[]);
        let x = MultiSeries::new(1, 20, (0..20).map(|_| rng::normal(&mut r)).collect()).unwrap();
        let mut k = kernel(7, 0.1);
        k.weights = (0..7).map(|_| rng::normal(&mut r)).collect();
        let (p, m) = apply_kernel(&x, &k).unwrap();
        let (pn, mn) = naive(&x, &k);
        assert_eq!((p, m), (pn, mn));

        // sampled kernels, dilated and padded, multivariate
        let x = MultiSeries::new(3, 50, (0..150).map(|_| rng::normal(&mut r)).collect()).unwrap();
        let t = sample_kernels(200, 3, 50, 5).unwrap();
        for k in t.kernels() {
            let (p, m) = apply_kernel(&x, k).unwrap();
            let (pn, mn) = naive(&x, k);
            assert_eq!((p, m), (pn, mn));
        }
    }

    #[test]
    fn univariate_kernels_use_channel_zero() {
        let t = sample_kernels(500, 1, 100, 3).unwrap();
        assert!(t.kernels().iter().all(|k| k.channels == vec![0]));
    }

    #[test]
    fn sampled_kernels_respect_bounds() {
        let t = sample_kernels(10_000, 20, 100, 1).unwrap();
        for k in t.kernels() {
            assert!(KERNEL_LENGTHS.contains(&k.length));
            assert!(k.receptive_field() <= 100 + 2 * k.padding);
            assert!(k.receptive_field() <= 199);
            assert!(k.padding == 0 || k.padding == (k.length - 1) * k.dilation / 2);
            assert!((-1.0..1.0).contains(&k.bias));
            assert!(!k.channels.is_empty() && k.channels.windows(2).all(|w| w[0] < w[1]));
            for row in k.weights.chunks(k.length) {
                assert!(row.iter().sum::<f64>().abs() < 1e-12);
            }
        }
        assert_eq!(t.n_features(), 20_000);
    }

    #[test]
    fn sampling_is_deterministic() {
        assert_eq!(sample_kernels(50, 4, 60, 9).unwrap(), sample_kernels(50, 4, 60, 9).unwrap());
        assert_ne!(sample_kernels(50, 4, 60, 9).unwrap(), sample_kernels(50, 4, 60, 10).unwrap());
    }

    #[test]
    fn short_series_force_padding() {
        let t = sample_kernels(100, 1, 5, 2).unwrap();
        for k in t.kernels() {
            assert_eq!(k.dilation, 1);
            assert!(k.output_len(5) >= 1);
        }
    }

    #[test]
    fn shape_is_checked() {
        let t = sample_kernels(3, 2, 30, 0).unwrap();
        assert!(matches!(t.features(&MultiSeries::zeros(2, 31)), Err(Error::ShapeMismatch { .. })));
    }
}
