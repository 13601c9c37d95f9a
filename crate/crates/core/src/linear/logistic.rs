//! Multinomial logistic regression fitted by full-batch gradient descent on
//! standardized features.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Matrix};
use crate::model::softmax;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticConfig {
    pub max_iter: usize,
    pub lr: f64,
    /// L2 penalty on the weights (not the intercepts) of the mean loss.
    pub l2: f64,
    /// Stop once the gradient norm drops below this.
    pub tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self { max_iter: 1000, lr: 1e-2, l2: 1e-2, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    /// `classes x features`, acting on standardized features.
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub iterations: usize,
    pub max_iter_reached: bool,
}

impl LogisticModel {
    pub fn n_classes(&self) -> usize {
        self.intercepts.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_mean.len()
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let z = self.standardize(x);
        self.weights.iter().zip(&self.intercepts).map(|(w, b)| b + dot(w, &z)).collect()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }
}

/// Flat parameter layout: class-major weights, then intercepts.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub classes: usize,
    pub features: usize,
    pub values: Vec<f64>,
}

impl Params {
    fn weight(&self, k: usize) -> &[f64] {
        &self.values[k * self.features..(k + 1) * self.features]
    }

    fn intercept(&self, k: usize) -> f64 {
        self.values[self.classes * self.features + k]
    }
}

/// Mean cross-entropy plus `l2/2 * |W|^2`, and its gradient.
pub fn loss_and_grad(p: &Params, x: &Matrix, y: &[usize], l2: f64) -> (f64, Vec<f64>) {
    let (k_n, f_n) = (p.classes, p.features);
    let n = x.rows() as f64;
    let mut grad = vec![0.0; p.values.len()];
    let mut loss = 0.0;
    for i in 0..x.rows() {
        let row = x.row(i);
        let logits: Vec<f64> = (0..k_n).map(|k| p.intercept(k) + dot(p.weight(k), row)).collect();
        let prob = softmax(&logits);
        loss -= libm::log(prob[y[i]].max(f64::MIN_POSITIVE));
        for k in 0..k_n {
            let r = (prob[k] - if y[i] == k { 1.0 } else { 0.0 }) / n;
            axpy(r, row, &mut grad[k * f_n..(k + 1) * f_n]);
            grad[k_n * f_n + k] += r;
        }
    }
    loss /= n;
    let w_len = k_n * f_n;
    loss += 0.5 * l2 * dot(&p.values[..w_len], &p.values[..w_len]);
    axpy(l2, &p.values[..w_len], &mut grad[..w_len]);
    (loss, grad)
}

/// Column means and standard deviations; zero-variance columns keep scale 1.
fn standardization(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let mean = x.col_means();
    let mut var = vec![0.0; x.cols()];
    for i in 0..x.rows() {
        for ((v, &xi), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
            *v += (xi - m) * (xi - m);
        }
    }
    let n = x.rows().max(1) as f64;
    let scale = var
        .into_iter()
        .map(|v| {
            let s = libm::sqrt(v / n);
            if s > 1e-12 { s } else { 1.0 }
        })
        .collect();
    (mean, scale)
}

pub fn logistic_fit(x: &Matrix, y: &[usize], classes: usize, cfg: &LogisticConfig) -> Result<LogisticModel> {
    if x.rows() != y.len() || x.rows() == 0 {
        return Err(Error::DimensionMismatch(format!("{} rows, {} labels", x.rows(), y.len())));
    }
    if x.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logistic features".into()));
    }
    if classes < 2 || y.iter().any(|&l| l >= classes) {
        return Err(Error::InvalidArgument("labels must lie in 0..classes with classes >= 2".into()));
    }
    let (feature_mean, feature_scale) = standardization(x);
    let mut xs = x.clone();
    for i in 0..xs.rows() {
        for ((v, m), s) in xs.row_mut(i).iter_mut().zip(&feature_mean).zip(&feature_scale) {
            *v = (*v - m) / s;
        }
    }
    let features = x.cols();
    let mut params = Params { classes, features, values: vec![0.0; classes * features + classes] };
    // Start intercepts at the centered log class priors.
    let mut counts = vec![0usize; classes];
    y.iter().for_each(|&l| counts[l] += 1);
    let logs: Vec<f64> = counts.iter().map(|&c| libm::log((c.max(1)) as f64 / y.len() as f64)).collect();
    let mean_log = logs.iter().sum::<f64>() / classes as f64;
    for k in 0..classes {
        params.values[classes * features + k] = logs[k] - mean_log;
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        let (loss, grad) = loss_and_grad(&params, &xs, y, cfg.l2);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("logistic loss at iteration {iterations}; lower the learning rate")));
        }
        if libm::sqrt(dot(&grad, &grad)) < cfg.tol {
            converged = true;
            break;
        }
        axpy(-cfg.lr, &grad, &mut params.values);
        iterations += 1;
    }
    let weights = (0..classes).map(|k| params.weight(k).to_vec()).collect();
    let intercepts = (0..classes).map(|k| params.intercept(k)).collect();
    Ok(LogisticModel {
        weights,
        intercepts,
        feature_mean,
        feature_scale,
        iterations,
        max_iter_reached: !converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    #[test]
    fn separable_single_feature() {
        let x = Matrix::from_rows(&[vec![-2.0], vec![-1.0], vec![-0.5], vec![0.5], vec![1.0], vec![2.0]]);
        let y = [0, 0, 0, 1, 1, 1];
        let m = logistic_fit(&x, &y, 2, &LogisticConfig::default()).unwrap();
        for i in 0..6 {
            assert_eq!(crate::model::argmax(&m.predict_proba(x.row(i))), y[i]);
        }
        let mut last = 0.0;
        for v in [-3.0, -1.0, 0.0, 1.0, 3.0] {
            let p = m.predict_proba(&[v])[1];
            assert!(p > last);
            last = p;
        }
    }

    #[test]
    fn constant_features_give_uniform_probabilities() {
        let x = Matrix::from_rows(&[vec![3.0], vec![3.0], vec![3.0], vec![3.0]]);
        let m = logistic_fit(&x, &[0, 1, 0, 1], 2, &LogisticConfig::default()).unwrap();
        assert_eq!(m.predict_proba(&[3.0]), vec![0.5, 0.5]);
        assert_eq!(m.intercepts, vec![0.0, 0.0]);
        assert!(!m.max_iter_reached);

        // unbalanced: intercepts already match the prior and never move
        let m = logistic_fit(&x, &[0, 0, 0, 1], 2, &LogisticConfig::default()).unwrap();
        let p = m.predict_proba(&[3.0]);
        assert!((p[0] - 0.75).abs() < 1e-12 && (p[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut r = rng::stream(2, &[]);
        let x = Matrix::from_vec(30, 4, (0..120).map(|_| rng::normal(&mut r)).collect());
        let y: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let m = logistic_fit(&x, &y, 3, &LogisticConfig { max_iter: 50, ..Default::default() }).unwrap();
        for _ in 0..100 {
            let v: Vec<f64> = (0..4).map(|_| 10.0 * rng::normal(&mut r)).collect();
            let p = m.predict_proba(&v);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|q| (0.0..=1.0).contains(q)));
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut r = rng::stream(17, &[]);
        let (n, f, k) = (12, 5, 3);
        let x = Matrix::from_vec(n, f, (0..n * f).map(|_| rng::normal(&mut r)).collect());
        let y: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let p = Params { classes: k, features: f, values: (0..k * f + k).map(|_| rng::normal(&mut r)).collect() };
        let l2 = 0.3;
        let (_, grad) = loss_and_grad(&p, &x, &y, l2);
        let h = 1e-5;
        for j in 0..p.values.len() {
            let mut plus = p.clone();
            plus.values[j] += h;
            let mut minus = p.clone();
            minus.values[j] -= h;
            let fd = (loss_and_grad(&plus, &x, &y, l2).0 - loss_and_grad(&minus, &x, &y, l2).0) / (2.0 * h);
            let rel = (fd - grad[j]).abs() / grad[j].abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-6, "param {j}: analytic {} fd {fd}", grad[j]);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = LogisticConfig { lr: 1e200, l2: 1.0, ..Default::default() };
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]);
        assert!(matches!(logistic_fit(&x, &[0, 0, 1], 2, &cfg), Err(Error::NonFinite(_))));
    }
}
