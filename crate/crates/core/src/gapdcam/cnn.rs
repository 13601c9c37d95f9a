//! A two-layer convolutional network over the rotated channel stack, with
//! global average pooling before a dense softmax layer.
//!
//! Each row of the stack is a `d x L` plane (slots by time). Both conv
//! layers use 3x3 kernels over (slot, time) with zero padding and ReLU, and
//! share their weights across rows. The pooled feature for filter `g` is the
//! mean of its activation over rows, slots and time.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result, Shape};
use crate::linalg::{axpy, dot, Matrix};
use crate::model::{argmax, softmax, Classifier};
use crate::rng;
use crate::tsdata::{LabeledDataset, MultiSeries};

use super::cx::{build_cx, identity, CxTensor};

const TAPS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnnConfig {
    pub filters1: usize,
    pub filters2: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Stop after this many epochs without a lower mean training loss.
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            filters1: 16,
            filters2: 32,
            epochs: 200,
            lr: 1e-4,
            batch_size: 16,
            patience: 20,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Network parameters. Kernels are stored `[out][in][slot tap][time tap]`,
/// dense weights `[class][filter]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GapCnn {
    pub d: usize,
    pub len: usize,
    pub classes: usize,
    pub filters1: usize,
    pub filters2: usize,
    pub k1: Vec<f64>,
    pub b1: Vec<f64>,
    pub k2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Post-ReLU activations of one row.
#[derive(Debug, Clone)]
struct RowActivations {
    /// First layer, zero-padded to `(d + 2) x (L + 2)` per filter.
    h1: Vec<f64>,
    /// Second layer, `d x L` per filter.
    a2: Vec<f64>,
}

impl GapCnn {
    pub fn zeros(d: usize, len: usize, classes: usize, filters1: usize, filters2: usize) -> Self {
        Self {
            d,
            len,
            classes,
            filters1,
            filters2,
            k1: vec![0.0; filters1 * TAPS],
            b1: vec![0.0; filters1],
            k2: vec![0.0; filters2 * filters1 * TAPS],
            b2: vec![0.0; filters2],
            w: vec![0.0; classes * filters2],
            b: vec![0.0; classes],
        }
    }

    /// Uniform weights scaled by fan-in, zero biases.
    pub fn init(d: usize, len: usize, classes: usize, filters1: usize, filters2: usize, seed: u64) -> Self {
        let mut m = Self::zeros(d, len, classes, filters1, filters2);
        let mut r = rng::stream(seed, &[0]);
        let mut fill = |v: &mut [f64], bound: f64| v.iter_mut().for_each(|x| *x = r.random_range(-bound..bound));
        fill(&mut m.k1, libm::sqrt(6.0 / TAPS as f64));
        fill(&mut m.k2, libm::sqrt(6.0 / (TAPS * filters1) as f64));
        fill(&mut m.w, libm::sqrt(1.0 / filters2 as f64));
        m
    }

    /// Checks that every parameter block has the size its dimensions imply.
    pub fn validate(&self) -> Result<()> {
        let (f1, f2) = (self.filters1, self.filters2);
        let sizes = [
            (self.k1.len(), f1 * TAPS),
            (self.b1.len(), f1),
            (self.k2.len(), f2 * f1 * TAPS),
            (self.b2.len(), f2),
            (self.w.len(), self.classes * f2),
            (self.b.len(), self.classes),
        ];
        if self.d == 0 || self.len == 0 || self.classes < 2 || f1 == 0 || f2 == 0 {
            return Err(Error::InvalidShape(format!(
                "network {}x{} with {} classes and {f1}/{f2} filters",
                self.d, self.len, self.classes
            )));
        }
        if let Some((got, want)) = sizes.iter().find(|(g, w)| g != w) {
            return Err(Error::DimensionMismatch(format!("parameter block has {got} values, expected {want}")));
        }
        if self.blocks().iter().any(|b| b.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(())
    }

    pub fn blocks(&self) -> [&[f64]; 6] {
        [&self.k1, &self.b1, &self.k2, &self.b2, &self.w, &self.b]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 6] {
        [&mut self.k1, &mut self.b1, &mut self.k2, &mut self.b2, &mut self.w, &mut self.b]
    }

    pub fn n_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.d, self.len, self.classes, self.filters1, self.filters2)
    }

    fn check(&self, cx: &CxTensor) -> Result<()> {
        if cx.channels() != self.d || cx.length() != self.len {
            return Err(Error::ShapeMismatch {
                expected: Shape(self.d, self.len),
                found: Shape(cx.channels(), cx.length()),
            });
        }
        Ok(())
    }

    fn padded(&self) -> (usize, usize) {
        (self.d + 2, self.len + 2)
    }

    fn forward_row(&self, plane: &[f64]) -> RowActivations {
        let (d, len) = (self.d, self.len);
        let (pr, pc) = self.padded();
        let mut input = vec![0.0; pr * pc];
        for s in 0..d {
            input[(s + 1) * pc + 1..(s + 1) * pc + 1 + len].copy_from_slice(&plane[s * len..(s + 1) * len]);
        }
        let mut h1 = vec![0.0; self.filters1 * pr * pc];
        for f in 0..self.filters1 {
            let out = &mut h1[f * pr * pc..(f + 1) * pr * pc];
            for s in 0..d {
                let row = &mut out[(s + 1) * pc + 1..(s + 1) * pc + 1 + len];
                row.iter_mut().for_each(|v| *v = self.b1[f]);
                conv_taps(&self.k1[f * TAPS..(f + 1) * TAPS], &input, s, pc, len, row);
                row.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        let mut a2 = vec![0.0; self.filters2 * d * len];
        for g in 0..self.filters2 {
            for s in 0..d {
                let row = &mut a2[(g * d + s) * len..(g * d + s + 1) * len];
                row.iter_mut().for_each(|v| *v = self.b2[g]);
                for f in 0..self.filters1 {
                    let k = &self.k2[(g * self.filters1 + f) * TAPS..(g * self.filters1 + f + 1) * TAPS];
                    conv_taps(k, &h1[f * pr * pc..(f + 1) * pr * pc], s, pc, len, row);
                }
                row.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        RowActivations { h1, a2 }
    }

    fn forward(&self, cx: &CxTensor) -> (Vec<RowActivations>, Vec<f64>) {
        let rows: Vec<RowActivations> = (0..self.d).map(|r| self.forward_row(cx.row(r))).collect();
        let plane = self.d * self.len;
        let n = (self.d * plane) as f64;
        let pooled = (0..self.filters2)
            .map(|g| rows.iter().map(|a| a.a2[g * plane..(g + 1) * plane].iter().sum::<f64>()).sum::<f64>() / n)
            .collect();
        (rows, pooled)
    }

    /// Pooled feature per second-layer filter.
    pub fn pooled(&self, cx: &CxTensor) -> Result<Vec<f64>> {
        self.check(cx)?;
        Ok(self.forward(cx).1)
    }

    fn dense(&self, pooled: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|k| self.b[k] + dot(&self.w[k * self.filters2..(k + 1) * self.filters2], pooled))
            .collect()
    }

    pub fn logits(&self, cx: &CxTensor) -> Result<Vec<f64>> {
        Ok(self.dense(&self.pooled(cx)?))
    }

    pub fn proba_cx(&self, cx: &CxTensor) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(cx)?))
    }

    /// Class evidence per `(row, slot, time)`: the class-weighted sum of
    /// second-layer activations divided by `d`, so that summing over slots
    /// gives [`cam_rows`](Self::cam_rows). Laid out row-major.
    pub fn cam_cells(&self, cx: &CxTensor, class: usize) -> Result<Vec<f64>> {
        self.check(cx)?;
        self.check_class(class)?;
        let plane = self.d * self.len;
        let wk = &self.w[class * self.filters2..(class + 1) * self.filters2];
        let mut out = vec![0.0; self.d * plane];
        for r in 0..self.d {
            let a = self.forward_row(cx.row(r));
            let dst = &mut out[r * plane..(r + 1) * plane];
            for (g, &wg) in wk.iter().enumerate() {
                axpy(wg / self.d as f64, &a.a2[g * plane..(g + 1) * plane], dst);
            }
        }
        Ok(out)
    }

    /// Class activation map over `(row, time)`; its mean equals the class
    /// logit minus the class intercept.
    pub fn cam_rows(&self, cx: &CxTensor, class: usize) -> Result<Matrix> {
        let cells = self.cam_cells(cx, class)?;
        let (d, len) = (self.d, self.len);
        let mut m = Matrix::zeros(d, len);
        for r in 0..d {
            for s in 0..d {
                axpy(1.0, &cells[(r * d + s) * len..(r * d + s + 1) * len], m.row_mut(r));
            }
        }
        Ok(m)
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.classes {
            return Err(Error::InvalidArgument(format!("class {class} of {}", self.classes)));
        }
        Ok(())
    }

    /// Adds the gradient of `scale * cross_entropy(label)` to `grad` and
    /// returns the unscaled loss and the predicted class.
    fn accumulate_grad(&self, cx: &CxTensor, label: usize, scale: f64, grad: &mut GapCnn) -> (f64, usize) {
        let (d, len, f1, f2) = (self.d, self.len, self.filters1, self.filters2);
        let (pr, pc) = self.padded();
        let (rows, pooled) = self.forward(cx);
        let p = softmax(&self.dense(&pooled));
        let loss = -libm::log(p[label].max(f64::MIN_POSITIVE));
        let dlogit: Vec<f64> =
            p.iter().enumerate().map(|(k, &pk)| scale * (pk - if k == label { 1.0 } else { 0.0 })).collect();
        let mut dpool = vec![0.0; f2];
        for (k, &dl) in dlogit.iter().enumerate() {
            axpy(dl, &pooled, &mut grad.w[k * f2..(k + 1) * f2]);
            grad.b[k] += dl;
            axpy(dl, &self.w[k * f2..(k + 1) * f2], &mut dpool);
        }
        let per_cell = 1.0 / (d * d * len) as f64;
        let mut dz2 = vec![0.0; len];
        for (r, act) in rows.iter().enumerate() {
            let plane = cx.row(r);
            let mut dh1 = vec![0.0; f1 * pr * pc];
            for g in 0..f2 {
                let c = dpool[g] * per_cell;
                for s in 0..d {
                    let a = &act.a2[(g * d + s) * len..(g * d + s + 1) * len];
                    for (z, &v) in dz2.iter_mut().zip(a) {
                        *z = if v > 0.0 { c } else { 0.0 };
                    }
                    grad.b2[g] += dz2.iter().sum::<f64>();
                    for f in 0..f1 {
                        let idx = (g * f1 + f) * TAPS;
                        let h = &act.h1[f * pr * pc..(f + 1) * pr * pc];
                        let dh = &mut dh1[f * pr * pc..(f + 1) * pr * pc];
                        for ds in 0..3 {
                            let base = (s + ds) * pc;
                            for dt in 0..3 {
                                grad.k2[idx + ds * 3 + dt] += dot(&dz2, &h[base + dt..base + dt + len]);
                                axpy(self.k2[idx + ds * 3 + dt], &dz2, &mut dh[base + dt..base + dt + len]);
                            }
                        }
                    }
                }
            }
            let mut input = vec![0.0; pr * pc];
            for s in 0..d {
                input[(s + 1) * pc + 1..(s + 1) * pc + 1 + len].copy_from_slice(&plane[s * len..(s + 1) * len]);
            }
            let mut dz1 = vec![0.0; len];
            for f in 0..f1 {
                let h = &act.h1[f * pr * pc..(f + 1) * pr * pc];
                let dh = &dh1[f * pr * pc..(f + 1) * pr * pc];
                for s in 0..d {
                    let at = (s + 1) * pc + 1;
                    for ((z, &hv), &g) in dz1.iter_mut().zip(&h[at..at + len]).zip(&dh[at..at + len]) {
                        *z = if hv > 0.0 { g } else { 0.0 };
                    }
                    grad.b1[f] += dz1.iter().sum::<f64>();
                    for ds in 0..3 {
                        let base = (s + ds) * pc;
                        for dt in 0..3 {
                            grad.k1[f * TAPS + ds * 3 + dt] += dot(&dz1, &input[base + dt..base + dt + len]);
                        }
                    }
                }
            }
        }
        (loss, argmax(&p))
    }
}

/// `out[t] += sum_{ds, dt} k[ds][dt] * src[s + ds][t + dt]` over a padded plane.
fn conv_taps(k: &[f64], src: &[f64], s: usize, pc: usize, len: usize, out: &mut [f64]) {
    for ds in 0..3 {
        let base = (s + ds) * pc;
        for dt in 0..3 {
            let kv = k[ds * 3 + dt];
            for (o, &x) in out.iter_mut().zip(&src[base + dt..base + dt + len]) {
                *o += kv * x;
            }
        }
    }
}

/// Mean cross-entropy over `batch` and its gradient.
pub fn loss_and_grad(m: &GapCnn, batch: &[(&CxTensor, usize)]) -> (f64, GapCnn) {
    let mut grad = m.zeros_like();
    let scale = 1.0 / batch.len() as f64;
    let loss = batch.iter().map(|(cx, y)| m.accumulate_grad(cx, *y, scale, &mut grad).0).sum::<f64>();
    (loss * scale, grad)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training loss over the epoch's mini-batches.
    pub loss: f64,
    /// Accuracy of the predictions made during the epoch's forward passes.
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
    pub stopped_early: bool,
}

struct Adam {
    m: GapCnn,
    v: GapCnn,
    t: i32,
}

impl Adam {
    fn step(&mut self, params: &mut GapCnn, grad: &GapCnn, cfg: &CnnConfig) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(cfg.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(cfg.beta2, self.t as f64);
        let blocks = params.blocks_mut().into_iter().zip(grad.blocks()).zip(self.m.blocks_mut()).zip(self.v.blocks_mut());
        for (((p, g), m), v) in blocks {
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                p[i] -= cfg.lr * (m[i] / c1) / (libm::sqrt(v[i] / c2) + cfg.eps);
            }
        }
    }
}

/// Train on identity-permutation stacks of `ds`. `on_epoch` sees the model
/// after every epoch.
pub fn train_with(
    ds: &LabeledDataset,
    cfg: &CnnConfig,
    seed: u64,
    on_epoch: &mut dyn FnMut(&GapCnn, &EpochStats),
) -> Result<(GapCnn, TrainLog)> {
    let (d, len) = ds.dims().ok_or_else(|| Error::InvalidArgument("empty training set".into()))?;
    if ds.class_counts().iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::InvalidArgument("training needs at least two classes present".into()));
    }
    if cfg.batch_size == 0 || cfg.filters1 == 0 || cfg.filters2 == 0 || !(cfg.lr > 0.0) {
        return Err(Error::InvalidArgument("batch size, filter counts and lr must be positive".into()));
    }
    let stacks = ds.instances.iter().map(|x| build_cx(x, &identity(d))).collect::<Result<Vec<_>>>()?;
    let mut model = GapCnn::init(d, len, ds.n_classes, cfg.filters1, cfg.filters2, seed);
    let mut adam = Adam { m: model.zeros_like(), v: model.zeros_like(), t: 0 };
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::stream(seed, &[1, epoch as u64]));
        let (mut loss_sum, mut batches, mut hits) = (0.0, 0usize, 0usize);
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut grad = model.zeros_like();
            let scale = 1.0 / chunk.len() as f64;
            let mut loss = 0.0;
            for &i in chunk {
                let (l, pred) = model.accumulate_grad(&stacks[i], ds.labels[i], scale, &mut grad);
                loss += l * scale;
                hits += usize::from(pred == ds.labels[i]);
            }
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch}, batch {bi}; lower the learning rate"
                )));
            }
            adam.step(&mut model, &grad, cfg);
            loss_sum += loss;
            batches += 1;
        }
        let stats = EpochStats { epoch, loss: loss_sum / batches as f64, train_accuracy: hits as f64 / ds.len() as f64 };
        log.epochs.push(stats);
        on_epoch(&model, &stats);
        if stats.loss < best {
            best = stats.loss;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    model.validate()?;
    Ok((model, log))
}

pub fn train(ds: &LabeledDataset, cfg: &CnnConfig, seed: u64) -> Result<(GapCnn, TrainLog)> {
    train_with(ds, cfg, seed, &mut |_, _| {})
}

impl Classifier for GapCnn {
    fn n_classes(&self) -> usize {
        self.classes
    }

    fn predict_proba(&self, x: &MultiSeries) -> Vec<f64> {
        build_cx(x, &identity(x.channels()))
            .and_then(|cx| self.proba_cx(&cx))
            .unwrap_or_else(|e| panic!("{e}"))
    }
}
