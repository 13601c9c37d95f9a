//! One-vs-rest ridge classification with k-fold selection of the
//! regularization strength.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result, Shape};
use crate::linalg::{axpy, dot, Cholesky, Matrix};
use crate::tsdata::{SaliencyMap, Scale};

/// Per-class weight vectors over the features plus intercepts.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub alpha: f64,
    pub classes: usize,
}

impl RidgeModel {
    pub fn n_features(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    /// Decision score per class.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights.iter().zip(&self.intercepts).map(|(w, b)| b + dot(w, x)).collect()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        crate::model::argmax(&self.scores(x))
    }
}

/// 10 strengths log-spaced over `[1e-3, 1e3]`.
pub fn default_alphas() -> Vec<f64> {
    (0..10).map(|i| libm::pow(10.0, -3.0 + 6.0 * i as f64 / 9.0)).collect()
}

/// `+1` for the sample's class, `-1` otherwise, one column per class.
fn targets(y: &[usize], classes: usize) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|k| y.iter().map(|&l| if l == k { 1.0 } else { -1.0 }).collect())
        .collect()
}

/// Centered design and targets, with the Gram matrix of whichever side is
/// smaller, reusable across strengths.
struct RidgeProblem {
    xc: Matrix,
    x_mean: Vec<f64>,
    yc: Vec<Vec<f64>>,
    y_mean: Vec<f64>,
    gram: Matrix,
    dual: bool,
}

impl RidgeProblem {
    fn new(x: &Matrix, y: &[usize], classes: usize) -> Self {
        let x_mean = x.col_means();
        let mut xc = x.clone();
        for i in 0..xc.rows() {
            axpy(-1.0, &x_mean, xc.row_mut(i));
        }
        let t = targets(y, classes);
        let n = y.len() as f64;
        let y_mean: Vec<f64> = t.iter().map(|col| col.iter().sum::<f64>() / n).collect();
        let yc = t
            .iter()
            .zip(&y_mean)
            .map(|(col, m)| col.iter().map(|v| v - m).collect())
            .collect();
        let dual = xc.cols() > xc.rows();
        let gram = if dual { xc.gram_rows() } else { xc.gram_cols() };
        Self { xc, x_mean, yc, y_mean, gram, dual }
    }

    fn solve(&self, alpha: f64) -> Result<RidgeModel> {
        let mut a = self.gram.clone();
        for i in 0..a.rows() {
            a.set(i, i, a.get(i, i) + alpha);
        }
        let chol = Cholesky::factor(&a)?;
        let mut weights = Vec::with_capacity(self.yc.len());
        let mut intercepts = Vec::with_capacity(self.yc.len());
        for (yk, ym) in self.yc.iter().zip(&self.y_mean) {
            let w = if self.dual {
                self.xc.t_mul_vec(&chol.solve(yk))
            } else {
                chol.solve(&self.xc.t_mul_vec(yk))
            };
            intercepts.push(ym - dot(&self.x_mean, &w));
            weights.push(w);
        }
        Ok(RidgeModel { weights, intercepts, alpha, classes: self.yc.len() })
    }
}

fn check_inputs(x: &Matrix, y: &[usize], classes: usize) -> Result<()> {
    if x.rows() != y.len() || x.rows() == 0 {
        return Err(Error::DimensionMismatch(format!("{} rows, {} labels", x.rows(), y.len())));
    }
    if x.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ridge features".into()));
    }
    if y.iter().any(|&l| l >= classes) {
        return Err(Error::InvalidArgument("label outside class range".into()));
    }
    let mut present = vec![false; classes];
    y.iter().for_each(|&l| present[l] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::InvalidArgument("ridge needs at least two classes present".into()));
    }
    Ok(())
}

/// Closed-form fit at a fixed strength.
pub fn ridge_fit(x: &Matrix, y: &[usize], classes: usize, alpha: f64) -> Result<RidgeModel> {
    check_inputs(x, y, classes)?;
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    RidgeProblem::new(x, y, classes).solve(alpha)
}

/// Stratified fold assignment: within each class, samples are dealt to folds
/// round-robin in index order.
pub fn stratified_folds(y: &[usize], classes: usize, folds: usize) -> Vec<usize> {
    let mut seen = vec![0usize; classes];
    y.iter()
        .map(|&l| {
            let f = seen[l] % folds;
            seen[l] += 1;
            f
        })
        .collect()
}

/// Fit with the strength minimizing mean held-out squared error of the
/// `+-1` targets over `folds` stratified folds, then refit on all data.
pub fn ridge_fit_cv(x: &Matrix, y: &[usize], classes: usize, folds: usize, alphas: &[f64]) -> Result<RidgeModel> {
    check_inputs(x, y, classes)?;
    if folds < 2 || y.len() < folds {
        return Err(Error::InvalidArgument(format!("{folds} folds for {} samples", y.len())));
    }
    if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::InvalidArgument("alphas must be positive".into()));
    }
    let counts = {
        let mut c = vec![0usize; classes];
        y.iter().for_each(|&l| c[l] += 1);
        c
    };
    let assignment = stratified_folds(y, classes, folds);
    let t = targets(y, classes);
    let mut errors = vec![0.0; alphas.len()];
    for fold in 0..folds {
        let (train, held): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| assignment[i] != fold);
        for (class, &count) in counts.iter().enumerate() {
            let in_train = train.iter().any(|&i| y[i] == class);
            if count > 0 && (!in_train || !held.iter().any(|&i| y[i] == class)) {
                return Err(Error::DegenerateFold { fold, class });
            }
        }
        let y_train: Vec<usize> = train.iter().map(|&i| y[i]).collect();
        let problem = RidgeProblem::new(&x.select_rows(&train), &y_train, classes);
        for (ai, &alpha) in alphas.iter().enumerate() {
            let m = problem.solve(alpha)?;
            for &i in &held {
                let s = m.scores(x.row(i));
                errors[ai] += s.iter().zip(&t).map(|(si, tk)| (si - tk[i]) * (si - tk[i])).sum::<f64>();
            }
        }
    }
    let best = (0..alphas.len()).fold(0, |b, i| if errors[i] < errors[b] { i } else { b });
    ridge_fit(x, y, classes, alphas[best])
}

/// The class weight vector of a model trained on concatenated raw series,
/// as a `d x L` map. Identical for every instance.
pub fn ridge_explanation(m: &RidgeModel, class_of_interest: usize, d: usize, len: usize) -> Result<SaliencyMap> {
    if m.n_features() != d * len {
        return Err(Error::ShapeMismatch { expected: Shape(d, len), found: Shape(1, m.n_features()) });
    }
    let w = m
        .weights
        .get(class_of_interest)
        .ok_or_else(|| Error::InvalidArgument(format!("class {class_of_interest} of {}", m.classes)))?;
    SaliencyMap::new(d, len, w.clone(), Scale::Raw, 1)
}
