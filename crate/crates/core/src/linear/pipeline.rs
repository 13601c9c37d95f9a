//! Complete classifiers: ridge on raw values, and ROCKET features feeding a
//! ridge or logistic head. Each has a matching [`Trainer`].

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result, Shape};
use crate::linalg::Matrix;
use crate::model::{softmax, BoxedClassifier, Classifier, Trainer};
use crate::rocket::{sample_kernels, transform, RocketTransform, DEFAULT_KERNELS};
use crate::tsdata::{LabeledDataset, MultiSeries};

use super::logistic::{logistic_fit, LogisticConfig, LogisticModel};
use super::ridge::{default_alphas, ridge_fit_cv, RidgeModel};

fn dims_of(ds: &LabeledDataset) -> Result<(usize, usize)> {
    ds.dims().ok_or_else(|| Error::InvalidArgument("empty training set".into()))
}

/// Ridge on the raw values read channel-major, so feature `c * L + t` is
/// channel `c` at time `t`. Probabilities are the softmax of the scores.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRidgeClassifier {
    pub model: RidgeModel,
    pub d: usize,
    pub len: usize,
}

impl RawRidgeClassifier {
    pub fn fit(ds: &LabeledDataset, folds: usize, alphas: &[f64]) -> Result<Self> {
        let (d, len) = dims_of(ds)?;
        let x = Matrix::from_vec(ds.len(), d * len, ds.instances.iter().flat_map(|s| s.values().iter().copied()).collect());
        let model = ridge_fit_cv(&x, &ds.labels, ds.n_classes, folds, alphas)?;
        Ok(Self { model, d, len })
    }

    pub fn check(&self, x: &MultiSeries) -> Result<()> {
        if x.shape() != Shape(self.d, self.len) {
            return Err(Error::ShapeMismatch { expected: Shape(self.d, self.len), found: x.shape() });
        }
        Ok(())
    }

    pub fn scores(&self, x: &MultiSeries) -> Vec<f64> {
        self.model.scores(x.values())
    }
}

impl Classifier for RawRidgeClassifier {
    fn n_classes(&self) -> usize {
        self.model.classes
    }

    fn predict_proba(&self, x: &MultiSeries) -> Vec<f64> {
        if let Err(e) = self.check(x) {
            panic!("{e}");
        }
        softmax(&self.scores(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Logistic(LogisticModel),
    Ridge(RidgeModel),
}

impl Head {
    pub fn n_classes(&self) -> usize {
        match self {
            Head::Logistic(m) => m.n_classes(),
            Head::Ridge(m) => m.classes,
        }
    }

    pub fn predict_proba(&self, features: &[f64]) -> Vec<f64> {
        match self {
            Head::Logistic(m) => m.predict_proba(features),
            Head::Ridge(m) => softmax(&m.scores(features)),
        }
    }
}

/// ROCKET features followed by a linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct RocketClassifier {
    pub rocket: RocketTransform,
    pub head: Head,
}

impl RocketClassifier {
    pub fn fit_logistic(ds: &LabeledDataset, n_kernels: usize, cfg: &LogisticConfig, seed: u64) -> Result<Self> {
        let (d, len) = dims_of(ds)?;
        let rocket = sample_kernels(n_kernels, d, len, seed)?;
        let x = transform(&rocket, ds)?;
        let head = Head::Logistic(logistic_fit(&x, &ds.labels, ds.n_classes, cfg)?);
        Ok(Self { rocket, head })
    }

    pub fn fit_ridge(ds: &LabeledDataset, n_kernels: usize, folds: usize, alphas: &[f64], seed: u64) -> Result<Self> {
        let (d, len) = dims_of(ds)?;
        let rocket = sample_kernels(n_kernels, d, len, seed)?;
        let x = transform(&rocket, ds)?;
        let head = Head::Ridge(ridge_fit_cv(&x, &ds.labels, ds.n_classes, folds, alphas)?);
        Ok(Self { rocket, head })
    }

    pub fn try_predict_proba(&self, x: &MultiSeries) -> Result<Vec<f64>> {
        Ok(self.head.predict_proba(&self.rocket.features(x)?))
    }
}

impl Classifier for RocketClassifier {
    fn n_classes(&self) -> usize {
        self.head.n_classes()
    }

    fn predict_proba(&self, x: &MultiSeries) -> Vec<f64> {
        self.try_predict_proba(x).unwrap_or_else(|e| panic!("{e}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRidgeTrainer {
    pub folds: usize,
    pub alphas: Vec<f64>,
}

impl Default for RawRidgeTrainer {
    fn default() -> Self {
        Self { folds: 5, alphas: default_alphas() }
    }
}

impl Trainer for RawRidgeTrainer {
    fn name(&self) -> String {
        "ridge".into()
    }

    fn fit(&self, train: &LabeledDataset, _seed: u64) -> Result<BoxedClassifier> {
        Ok(Box::new(RawRidgeClassifier::fit(train, self.folds, &self.alphas)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocketLogisticTrainer {
    pub n_kernels: usize,
    pub config: LogisticConfig,
}

impl Default for RocketLogisticTrainer {
    fn default() -> Self {
        Self { n_kernels: DEFAULT_KERNELS, config: LogisticConfig::default() }
    }
}

impl Trainer for RocketLogisticTrainer {
    fn name(&self) -> String {
        format!("rocket{}-logistic", self.n_kernels)
    }

    fn fit(&self, train: &LabeledDataset, seed: u64) -> Result<BoxedClassifier> {
        Ok(Box::new(RocketClassifier::fit_logistic(train, self.n_kernels, &self.config, seed)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocketRidgeTrainer {
    pub n_kernels: usize,
    pub folds: usize,
    pub alphas: Vec<f64>,
}

impl Default for RocketRidgeTrainer {
    fn default() -> Self {
        Self { n_kernels: DEFAULT_KERNELS, folds: 5, alphas: default_alphas() }
    }
}

impl Trainer for RocketRidgeTrainer {
    fn name(&self) -> String {
        format!("rocket{}-ridge", self.n_kernels)
    }

    fn fit(&self, train: &LabeledDataset, seed: u64) -> Result<BoxedClassifier> {
        Ok(Box::new(RocketClassifier::fit_ridge(train, self.n_kernels, self.folds, &self.alphas, seed)?))
    }
}
