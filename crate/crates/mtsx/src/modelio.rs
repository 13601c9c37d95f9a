//! Versioned text files for every trained model kind.
//!
//! One record per line, `key,value,...`. Nested models (ensemble members)
//! are written inline between `model,<kind>` and `end`.

use std::fmt::Write as _;
use std::path::Path;

use mtsx_core::gapdcam::GapCnn;
use mtsx_core::linear::{
    EnsembleModel, Head, LogisticModel, RawRidgeClassifier, RidgeModel, RocketClassifier,
};
use mtsx_core::model::{BoxedClassifier, Classifier};
use mtsx_core::rocket::{KernelSpec, RocketTransform};
use mtsx_core::{Error as CoreError, MultiSeries, Shape};

use crate::error::Result;
use crate::io::{read_text, write_text, Lines};

const MAGIC: &str = "mtsx-model,v1";

pub enum SavedModel {
    RawRidge(RawRidgeClassifier),
    Rocket(RocketClassifier),
    Cnn(GapCnn),
    Ensemble {
        parts: Vec<SavedModel>,
        model: EnsembleModel,
    },
}

impl Clone for SavedModel {
    fn clone(&self) -> Self {
        match self {
            SavedModel::RawRidge(m) => SavedModel::RawRidge(m.clone()),
            SavedModel::Rocket(m) => SavedModel::Rocket(m.clone()),
            SavedModel::Cnn(m) => SavedModel::Cnn(m.clone()),
            SavedModel::Ensemble { parts, .. } => {
                SavedModel::ensemble(parts.clone()).expect("validated on construction")
            }
        }
    }
}

impl std::fmt::Debug for SavedModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = self.input_shape();
        write!(f, "SavedModel({}, {}x{})", self.kind(), s.0, s.1)
    }
}

impl SavedModel {
    pub fn ensemble(parts: Vec<SavedModel>) -> Result<Self> {
        let members = parts
            .iter()
            .cloned()
            .map(|p| Box::new(p) as BoxedClassifier)
            .collect();
        Ok(SavedModel::Ensemble {
            model: EnsembleModel::from_members(members)?,
            parts,
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SavedModel::RawRidge(_) => "raw-ridge",
            SavedModel::Rocket(_) => "rocket",
            SavedModel::Cnn(_) => "cnn",
            SavedModel::Ensemble { .. } => "ensemble",
        }
    }

    /// Shape of the series the model accepts.
    pub fn input_shape(&self) -> Shape {
        match self {
            SavedModel::RawRidge(m) => Shape(m.d, m.len),
            SavedModel::Rocket(m) => {
                let (d, len) = m.rocket.fitted_for();
                Shape(d, len)
            }
            SavedModel::Cnn(m) => Shape(m.d, m.len),
            SavedModel::Ensemble { parts, .. } => Shape(parts.len(), parts[0].input_shape().1),
        }
    }

    pub fn check_input(&self, x: &MultiSeries) -> Result<()> {
        let expected = self.input_shape();
        if x.shape() != expected {
            return Err(CoreError::ShapeMismatch {
                expected,
                found: x.shape(),
            }
            .into());
        }
        Ok(())
    }
}

impl Classifier for SavedModel {
    fn n_classes(&self) -> usize {
        match self {
            SavedModel::RawRidge(m) => m.n_classes(),
            SavedModel::Rocket(m) => m.n_classes(),
            SavedModel::Cnn(m) => m.n_classes(),
            SavedModel::Ensemble { model, .. } => model.n_classes(),
        }
    }

    fn predict_proba(&self, x: &MultiSeries) -> Vec<f64> {
        match self {
            SavedModel::RawRidge(m) => m.predict_proba(x),
            SavedModel::Rocket(m) => m.predict_proba(x),
            SavedModel::Cnn(m) => m.predict_proba(x),
            SavedModel::Ensemble { model, .. } => model.predict_proba(x),
        }
    }
}

struct Writer(String);

impl Writer {
    fn floats(&mut self, key: &str, v: &[f64]) {
        self.0.push_str(key);
        for x in v {
            let _ = write!(self.0, ",{x:?}");
        }
        self.0.push('\n');
    }

    fn ints(&mut self, key: &str, v: &[usize]) {
        self.0.push_str(key);
        for x in v {
            let _ = write!(self.0, ",{x}");
        }
        self.0.push('\n');
    }

    fn line(&mut self, s: &str) {
        self.0.push_str(s);
        self.0.push('\n');
    }

    fn ridge(&mut self, m: &RidgeModel) {
        self.0
            .push_str(&format!("ridge,{},{:?}\n", m.classes, m.alpha));
        self.floats("intercepts", &m.intercepts);
        for w in &m.weights {
            self.floats("weight", w);
        }
    }

    fn logistic(&mut self, m: &LogisticModel) {
        self.ints(
            "logistic",
            &[
                m.n_classes(),
                m.n_features(),
                m.iterations,
                usize::from(m.max_iter_reached),
            ],
        );
        self.floats("intercepts", &m.intercepts);
        self.floats("feature_mean", &m.feature_mean);
        self.floats("feature_scale", &m.feature_scale);
        for w in &m.weights {
            self.floats("weight", w);
        }
    }

    fn model(&mut self, m: &SavedModel) {
        self.line(&format!("model,{}", m.kind()));
        match m {
            SavedModel::RawRidge(r) => {
                self.ints("shape", &[r.d, r.len]);
                self.ridge(&r.model);
            }
            SavedModel::Rocket(r) => {
                let (d, len) = r.rocket.fitted_for();
                self.ints("shape", &[d, len]);
                self.0.push_str(&format!(
                    "rocket,{},{}\n",
                    r.rocket.seed(),
                    r.rocket.kernels().len()
                ));
                for k in r.rocket.kernels() {
                    let _ = write!(
                        self.0,
                        "kernel,{},{},{},{:?},{}",
                        k.length,
                        k.dilation,
                        k.padding,
                        k.bias,
                        k.channels.len()
                    );
                    for c in &k.channels {
                        let _ = write!(self.0, ",{c}");
                    }
                    self.0.push('\n');
                    self.floats("kernel_weights", &k.weights);
                }
                match &r.head {
                    Head::Logistic(h) => self.logistic(h),
                    Head::Ridge(h) => self.ridge(h),
                }
            }
            SavedModel::Cnn(c) => {
                self.ints("cnn", &[c.d, c.len, c.classes, c.filters1, c.filters2]);
                for (name, block) in ["k1", "b1", "k2", "b2", "w", "b"].iter().zip(c.blocks()) {
                    self.floats(name, block);
                }
            }
            SavedModel::Ensemble { parts, .. } => {
                self.ints("members", &[parts.len()]);
                for p in parts {
                    self.model(p);
                }
            }
        }
        self.line("end");
    }
}

pub fn format_model(m: &SavedModel) -> String {
    let mut w = Writer(format!("{MAGIC}\n"));
    w.model(m);
    w.0
}

struct Reader<'a> {
    lines: Lines<'a>,
}

impl<'a> Reader<'a> {
    /// Next line, which must start with `key`; returns the remaining fields.
    fn record(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let line = self.lines.expect_line(key)?;
        let mut parts = line.split(',');
        if parts.next() != Some(key) {
            return Err(self
                .lines
                .err(format!("expected {key} record, found {line:?}")));
        }
        Ok(parts.collect())
    }

    fn num<T: std::str::FromStr>(&self, tok: &str) -> Result<T> {
        tok.trim()
            .parse()
            .map_err(|_| self.lines.err(format!("bad number {tok:?}")))
    }

    fn ints(&mut self, key: &str, n: usize) -> Result<Vec<usize>> {
        let f = self.record(key)?;
        if f.len() != n {
            return Err(self.lines.err(format!("{key} needs {n} fields")));
        }
        f.iter().map(|t| self.num(t)).collect()
    }

    fn floats(&mut self, key: &str, n: usize) -> Result<Vec<f64>> {
        let f = self.record(key)?;
        let v: Vec<f64> = f.iter().map(|t| self.num(t)).collect::<Result<_>>()?;
        if v.len() != n || v.iter().any(|x| !x.is_finite()) {
            return Err(self
                .lines
                .err(format!("{key} needs {n} finite values, found {}", v.len())));
        }
        Ok(v)
    }

    fn ridge(&mut self, features: usize) -> Result<RidgeModel> {
        let f = self.record("ridge")?;
        if f.len() != 2 {
            return Err(self.lines.err("ridge needs classes and alpha"));
        }
        let classes: usize = self.num(f[0])?;
        let alpha: f64 = self.num(f[1])?;
        let intercepts = self.floats("intercepts", classes)?;
        let weights = (0..classes)
            .map(|_| self.floats("weight", features))
            .collect::<Result<_>>()?;
        Ok(RidgeModel {
            weights,
            intercepts,
            alpha,
            classes,
        })
    }

    fn logistic(&mut self, features: usize) -> Result<LogisticModel> {
        let h = self.ints("logistic", 4)?;
        let (classes, f) = (h[0], h[1]);
        if f != features {
            return Err(self.lines.err(format!(
                "logistic head reads {f} features, transform makes {features}"
            )));
        }
        let intercepts = self.floats("intercepts", classes)?;
        let feature_mean = self.floats("feature_mean", f)?;
        let feature_scale = self.floats("feature_scale", f)?;
        let weights = (0..classes)
            .map(|_| self.floats("weight", f))
            .collect::<Result<_>>()?;
        Ok(LogisticModel {
            weights,
            intercepts,
            feature_mean,
            feature_scale,
            iterations: h[2],
            max_iter_reached: h[3] != 0,
        })
    }

    fn kernel(&mut self) -> Result<KernelSpec> {
        let f = self.record("kernel")?;
        if f.len() < 5 {
            return Err(self.lines.err("kernel record too short"));
        }
        let length: usize = self.num(f[0])?;
        let dilation: usize = self.num(f[1])?;
        let padding: usize = self.num(f[2])?;
        let bias: f64 = self.num(f[3])?;
        let nch: usize = self.num(f[4])?;
        if f.len() != 5 + nch {
            return Err(self.lines.err(format!(
                "kernel lists {} channels, header says {nch}",
                f.len() - 5
            )));
        }
        let channels = f[5..].iter().map(|t| self.num(t)).collect::<Result<_>>()?;
        let weights = self.floats("kernel_weights", nch * length)?;
        Ok(KernelSpec {
            length,
            channels,
            weights,
            bias,
            dilation,
            padding,
        })
    }

    fn model(&mut self) -> Result<SavedModel> {
        let kind = self.record("model")?;
        let m = match kind.as_slice() {
            ["raw-ridge"] => {
                let s = self.ints("shape", 2)?;
                let model = self.ridge(s[0] * s[1])?;
                SavedModel::RawRidge(RawRidgeClassifier {
                    model,
                    d: s[0],
                    len: s[1],
                })
            }
            ["rocket"] => {
                let s = self.ints("shape", 2)?;
                let r = self.record("rocket")?;
                if r.len() != 2 {
                    return Err(self.lines.err("rocket needs seed and kernel count"));
                }
                let seed: u64 = self.num(r[0])?;
                let n: usize = self.num(r[1])?;
                let kernels = (0..n).map(|_| self.kernel()).collect::<Result<Vec<_>>>()?;
                let rocket = RocketTransform::from_kernels(kernels, seed, s[0], s[1])?;
                let features = rocket.n_features();
                let head = match self.lines_peek_key() {
                    Some("logistic") => Head::Logistic(self.logistic(features)?),
                    Some("ridge") => Head::Ridge(self.ridge(features)?),
                    _ => return Err(self.lines.err("expected a logistic or ridge head")),
                };
                SavedModel::Rocket(RocketClassifier { rocket, head })
            }
            ["cnn"] => {
                let h = self.ints("cnn", 5)?;
                let mut c = GapCnn::zeros(h[0], h[1], h[2], h[3], h[4]);
                let sizes: Vec<usize> = c.blocks().iter().map(|b| b.len()).collect();
                for ((name, block), n) in ["k1", "b1", "k2", "b2", "w", "b"]
                    .iter()
                    .zip(c.blocks_mut())
                    .zip(sizes)
                {
                    block.copy_from_slice(&self.floats(name, n)?);
                }
                c.validate()?;
                SavedModel::Cnn(c)
            }
            ["ensemble"] => {
                let n = self.ints("members", 1)?[0];
                if n == 0 {
                    return Err(self.lines.err("ensemble without members"));
                }
                let parts = (0..n).map(|_| self.model()).collect::<Result<Vec<_>>>()?;
                if parts.iter().any(|p| p.input_shape().0 != 1) {
                    return Err(self.lines.err("ensemble members must be univariate"));
                }
                SavedModel::ensemble(parts)?
            }
            other => return Err(self.lines.err(format!("unknown model kind {other:?}"))),
        };
        self.record("end")?;
        Ok(m)
    }

    /// Key of the next record without consuming it.
    fn lines_peek_key(&self) -> Option<&'a str> {
        self.lines.peek().and_then(|l| l.split(',').next())
    }
}

pub fn parse_model(text: &str, path: &Path) -> Result<SavedModel> {
    let mut r = Reader {
        lines: Lines::new(path, text),
    };
    if r.lines.expect_line("header")? != MAGIC {
        return Err(r.lines.err(format!("expected {MAGIC} header")));
    }
    let m = r.model()?;
    r.lines.finish()?;
    Ok(m)
}

pub fn read_model(path: &Path) -> Result<SavedModel> {
    parse_model(&read_text(path)?, path)
}

pub fn write_model(path: &Path, m: &SavedModel) -> Result<()> {
    write_text(path, &format_model(m))
}

impl From<RawRidgeClassifier> for SavedModel {
    fn from(m: RawRidgeClassifier) -> Self {
        SavedModel::RawRidge(m)
    }
}

impl From<RocketClassifier> for SavedModel {
    fn from(m: RocketClassifier) -> Self {
        SavedModel::Rocket(m)
    }
}

impl From<GapCnn> for SavedModel {
    fn from(m: GapCnn) -> Self {
        SavedModel::Cnn(m)
    }
}
