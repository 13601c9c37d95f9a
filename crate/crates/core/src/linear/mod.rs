//! Linear classification heads, the classifiers built from them, and the
//! per-channel ensemble.

pub mod ensemble;
pub mod logistic;
pub mod pipeline;
pub mod ridge;

pub use ensemble::{ensemble_fit, EnsembleModel};
pub use logistic::{logistic_fit, LogisticConfig, LogisticModel};
pub use pipeline::{Head, RawRidgeClassifier, RawRidgeTrainer, RocketClassifier, RocketLogisticTrainer, RocketRidgeTrainer};
pub use ridge::{default_alphas, ridge_explanation, ridge_fit, ridge_fit_cv, RidgeModel};
