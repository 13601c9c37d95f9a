//! Text formats for datasets (`mtscsv`) and saliency maps (`salcsv`).
//!
//! Numbers are written with Rust's shortest round-trip formatting, so every
//! value reads back bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mtsx_core::{
    Error as CoreError, GroundTruthMask, LabeledDataset, MultiSeries, SaliencyMap, Scale,
};

use crate::error::{MtsxError, Result};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn join(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 20);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{v:?}");
    }
    s
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| MtsxError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| MtsxError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| MtsxError::io(path, e))
}

/// Line cursor reporting 1-based line numbers.
pub(crate) struct Lines<'a> {
    path: &'a Path,
    iter: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    pub(crate) line: usize,
}

impl<'a> Lines<'a> {
    pub(crate) fn new(path: &'a Path, text: &'a str) -> Self {
        Self {
            path,
            iter: text.lines().enumerate().peekable(),
            line: 0,
        }
    }

    pub(crate) fn next_line(&mut self) -> Option<&'a str> {
        self.iter.next().map(|(i, l)| {
            self.line = i + 1;
            l
        })
    }

    pub(crate) fn peek(&self) -> Option<&'a str> {
        self.iter.clone().next().map(|(_, l)| l)
    }

    pub(crate) fn expect_line(&mut self, what: &str) -> Result<&'a str> {
        let line = self.line + 1;
        self.next_line()
            .ok_or_else(|| MtsxError::parse(self.path, line, format!("missing {what}")))
    }

    pub(crate) fn err(&self, message: impl Into<String>) -> MtsxError {
        MtsxError::parse(self.path, self.line, message)
    }

    pub(crate) fn floats(&self, text: &str, expected: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(expected);
        for tok in text.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| self.err(format!("not a number: {tok:?}")))?;
            if !v.is_finite() {
                return Err(self.err(format!("non-finite value {tok:?}")));
            }
            out.push(v);
        }
        if out.len() != expected {
            return Err(MtsxError::Core(CoreError::DimensionMismatch(format!(
                "{}:{}: expected {expected} values, found {}",
                self.path.display(),
                self.line,
                out.len()
            ))));
        }
        Ok(out)
    }

    pub(crate) fn finish(&mut self) -> Result<()> {
        while let Some(l) = self.next_line() {
            if !l.trim().is_empty() {
                return Err(MtsxError::Core(CoreError::DimensionMismatch(format!(
                    "{}:{}: unexpected trailing content",
                    self.path.display(),
                    self.line
                ))));
            }
        }
        Ok(())
    }
}

/// Parse `tag,v1,k=v,...` and return the key/value pairs in order.
fn header<'a>(lines: &mut Lines<'a>, tag: &str) -> Result<Vec<(&'a str, &'a str)>> {
    let first = lines.expect_line("header")?;
    let mut parts = first.split(',');
    if parts.next() != Some(tag) || parts.next() != Some("v1") {
        return Err(lines.err(format!("expected a {tag},v1 header")));
    }
    parts
        .map(|p| {
            p.split_once('=')
                .ok_or_else(|| lines.err(format!("bad header field {p:?}")))
        })
        .collect()
}

fn header_usize(lines: &Lines<'_>, fields: &[(&str, &str)], key: &str) -> Result<usize> {
    let v = fields
        .iter()
        .find(|(k, _)| *k == key)
        .ok_or_else(|| lines.err(format!("header lacks {key}")))?
        .1;
    v.parse()
        .map_err(|_| lines.err(format!("{key}={v} is not a count")))
}

pub fn format_dataset(ds: &LabeledDataset) -> Result<String> {
    let (d, len) = ds
        .dims()
        .ok_or_else(|| CoreError::InvalidArgument("cannot write an empty dataset".into()))?;
    let mut s = format!(
        "mtscsv,v1,d={d},L={len},n={},classes={}\n",
        ds.len(),
        ds.n_classes
    );
    for (x, l) in ds.instances.iter().zip(&ds.labels) {
        let _ = writeln!(s, "label,{l}");
        for c in 0..d {
            s.push_str(&join(x.row(c)));
            s.push('\n');
        }
    }
    Ok(s)
}

pub fn parse_dataset(text: &str, path: &Path) -> Result<LabeledDataset> {
    let mut lines = Lines::new(path, text);
    let fields = header(&mut lines, "mtscsv")?;
    let d = header_usize(&lines, &fields, "d")?;
    let len = header_usize(&lines, &fields, "L")?;
    let n = header_usize(&lines, &fields, "n")?;
    let classes = header_usize(&lines, &fields, "classes")?;
    let mut instances = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let Some(line) = lines.next_line() else {
            return Err(MtsxError::Core(CoreError::DimensionMismatch(format!(
                "{}: header promises {n} instances, found {i}",
                path.display()
            ))));
        };
        let label = line
            .strip_prefix("label,")
            .and_then(|v| v.trim().parse::<usize>().ok())
            .ok_or_else(|| lines.err(format!("expected label,<int>, found {line:?}")))?;
        let mut values = Vec::with_capacity(d * len);
        for c in 0..d {
            let row = lines.expect_line(&format!("channel {c} of instance {i}"))?;
            values.extend(lines.floats(row, len)?);
        }
        instances.push(MultiSeries::new(d, len, values)?);
        labels.push(label);
    }
    lines.finish()?;
    let name = path
        .file_stem()
        .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned());
    Ok(LabeledDataset::new(instances, labels, classes, 0, name)?)
}

pub fn read_dataset(path: &Path) -> Result<LabeledDataset> {
    parse_dataset(&read_text(path)?, path)
}

pub fn write_dataset(path: &Path, ds: &LabeledDataset) -> Result<()> {
    write_text(path, &format_dataset(ds)?)
}

fn scale_name(s: Scale) -> &'static str {
    match s {
        Scale::Raw => "raw",
        Scale::Rescaled0to100 => "0to100",
    }
}

pub fn format_saliency(w: &SaliencyMap) -> String {
    let mut s = format!(
        "salcsv,v1,d={},S={},scale={}\n",
        w.channels(),
        w.columns(),
        scale_name(w.scale())
    );
    for c in 0..w.channels() {
        s.push_str(&join(w.row(c)));
        s.push('\n');
    }
    s
}

/// The segment width is not stored; the result has width 1 until
/// [`with_series_length`] fixes it.
pub fn parse_saliency(text: &str, path: &Path) -> Result<SaliencyMap> {
    let mut lines = Lines::new(path, text);
    let fields = header(&mut lines, "salcsv")?;
    let d = header_usize(&lines, &fields, "d")?;
    let s = header_usize(&lines, &fields, "S")?;
    let scale = match fields.iter().find(|(k, _)| *k == "scale").map(|(_, v)| *v) {
        Some("raw") => Scale::Raw,
        Some("0to100") => Scale::Rescaled0to100,
        other => return Err(lines.err(format!("bad scale {other:?}"))),
    };
    let mut weights = Vec::with_capacity(d * s);
    for c in 0..d {
        let row = lines.expect_line(&format!("row {c}"))?;
        weights.extend(lines.floats(row, s)?);
    }
    lines.finish()?;
    Ok(SaliencyMap::new(d, s, weights, scale, 1)?)
}

pub fn read_saliency(path: &Path) -> Result<SaliencyMap> {
    parse_saliency(&read_text(path)?, path)
}

pub fn write_saliency(path: &Path, w: &SaliencyMap) -> Result<()> {
    write_text(path, &format_saliency(w))
}

/// Attach the segment width implied by series length `len`.
pub fn with_series_length(w: &SaliencyMap, len: usize) -> Result<SaliencyMap> {
    let s = w.columns();
    if len % s != 0 {
        return Err(CoreError::NonDivisibleWindow { window: s, len }.into());
    }
    Ok(SaliencyMap::new(
        w.channels(),
        s,
        w.weights().to_vec(),
        w.scale(),
        len / s,
    )?)
}

/// Masks are stored as rescaled saliency files holding only 0 and 100.
pub fn write_mask(path: &Path, g: &GroundTruthMask) -> Result<()> {
    write_saliency(path, &g.as_saliency(1))
}

pub fn read_mask(path: &Path) -> Result<GroundTruthMask> {
    let w = read_saliency(path)?;
    let mut cells = Vec::with_capacity(w.weights().len());
    for &v in w.weights() {
        cells.push(match v {
            0.0 => false,
            100.0 => true,
            _ => {
                return Err(MtsxError::parse(
                    path,
                    0,
                    format!("mask value {v} is neither 0 nor 100"),
                ))
            }
        });
    }
    Ok(GroundTruthMask::new(w.channels(), w.columns(), cells)?)
}

/// Every `*.salcsv` in `dir`, sorted by file name.
pub fn saliency_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| MtsxError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "salcsv"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn read_saliency_dir(dir: &Path) -> Result<Vec<SaliencyMap>> {
    saliency_files(dir)?
        .iter()
        .map(|p| read_saliency(p))
        .collect()
}
