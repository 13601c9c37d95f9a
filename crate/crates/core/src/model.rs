//! Classifier and trainer interfaces shared by explainers and referees.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::tsdata::{LabeledDataset, MultiSeries};

/// Anything that maps a series to a probability vector over classes.
pub trait Classifier: Send + Sync {
    fn n_classes(&self) -> usize;

    fn predict_proba(&self, x: &MultiSeries) -> Vec<f64>;

    /// Batch form; implementations may evaluate items in any order but must
    /// return results in input order.
    fn predict_proba_batch(&self, xs: &[MultiSeries]) -> Vec<Vec<f64>> {
        xs.iter().map(|x| self.predict_proba(x)).collect()
    }

    fn predict(&self, x: &MultiSeries) -> usize {
        argmax(&self.predict_proba(x))
    }
}

impl<C: Classifier + ?Sized> Classifier for Box<C> {
    fn n_classes(&self) -> usize {
        (**self).n_classes()
    }
    fn predict_proba(&self, x: &MultiSeries) -> Vec<f64> {
        (**self).predict_proba(x)
    }
    fn predict_proba_batch(&self, xs: &[MultiSeries]) -> Vec<Vec<f64>> {
        (**self).predict_proba_batch(xs)
    }
}

impl<C: Classifier + ?Sized> Classifier for &C {
    fn n_classes(&self) -> usize {
        (**self).n_classes()
    }
    fn predict_proba(&self, x: &MultiSeries) -> Vec<f64> {
        (**self).predict_proba(x)
    }
    fn predict_proba_batch(&self, xs: &[MultiSeries]) -> Vec<Vec<f64>> {
        (**self).predict_proba_batch(xs)
    }
}

pub type BoxedClassifier = Box<dyn Classifier>;

/// Fits a classifier on a split. `seed` feeds any randomness in the fit.
pub trait Trainer: Send + Sync {
    fn name(&self) -> String;
    fn fit(&self, train: &LabeledDataset, seed: u64) -> Result<BoxedClassifier>;
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| libm::exp(s - m)).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

pub fn predictions<C: Classifier + ?Sized>(model: &C, xs: &[MultiSeries]) -> Vec<usize> {
    model.predict_proba_batch(xs).iter().map(|p| argmax(p)).collect()
}

pub fn accuracy<C: Classifier + ?Sized>(model: &C, ds: &LabeledDataset) -> f64 {
    if ds.is_empty() {
        return 0.0;
    }
    let hits = predictions(model, &ds.instances)
        .iter()
        .zip(&ds.labels)
        .filter(|(p, l)| p == l)
        .count();
    hits as f64 / ds.len() as f64
}

/// Fraction of the most frequent class.
pub fn majority_rate(ds: &LabeledDataset) -> f64 {
    let counts = ds.class_counts();
    counts.iter().copied().max().unwrap_or(0) as f64 / ds.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_first_on_ties() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.2]), 1);
    }

    #[test]
    fn softmax_is_a_simplex_point() {
        let p = softmax(&[1000.0, 999.0, -5.0]);
        let s: f64 = p.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
