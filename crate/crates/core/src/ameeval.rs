//! Perturbation-based faithfulness evaluation.
//!
//! The most salient cells of every test instance are replaced by statistics
//! of the test split, referee classifiers are scored on the perturbed split,
//! and explainers are ranked by how fast referee accuracy falls.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::model::{accuracy, majority_rate, BoxedClassifier, Classifier, Trainer};
use crate::rng;
use crate::tsdata::{LabeledDataset, MultiSeries, SaliencyMap, Scale};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Statistic {
    Mean,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scope {
    /// Per `(channel, time)` statistics.
    Local,
    /// Per channel, pooled over time.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PerturbationStrategy {
    pub statistic: Statistic,
    pub scope: Scope,
}

impl PerturbationStrategy {
    pub const ALL: [PerturbationStrategy; 4] = [
        PerturbationStrategy { statistic: Statistic::Mean, scope: Scope::Local },
        PerturbationStrategy { statistic: Statistic::Mean, scope: Scope::Global },
        PerturbationStrategy { statistic: Statistic::Gaussian, scope: Scope::Local },
        PerturbationStrategy { statistic: Statistic::Gaussian, scope: Scope::Global },
    ];

    pub fn name(self) -> &'static str {
        match (self.statistic, self.scope) {
            (Statistic::Mean, Scope::Local) => "mean-local",
            (Statistic::Mean, Scope::Global) => "mean-global",
            (Statistic::Gaussian, Scope::Local) => "gaussian-local",
            (Statistic::Gaussian, Scope::Global) => "gaussian-global",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }
}

/// Test-split statistics used as replacement values.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub d: usize,
    pub len: usize,
    /// `d x len`, row-major.
    pub local_mean: Vec<f64>,
    pub local_std: Vec<f64>,
    /// One value per channel.
    pub global_mean: Vec<f64>,
    pub global_std: Vec<f64>,
}

impl DatasetStats {
    pub fn mean(&self, scope: Scope, c: usize, t: usize) -> f64 {
        match scope {
            Scope::Local => self.local_mean[c * self.len + t],
            Scope::Global => self.global_mean[c],
        }
    }

    pub fn std(&self, scope: Scope, c: usize, t: usize) -> f64 {
        match scope {
            Scope::Local => self.local_std[c * self.len + t],
            Scope::Global => self.global_std[c],
        }
    }
}

/// Sample statistics with `n - 1` denominators.
pub fn dataset_stats(test: &LabeledDataset) -> Result<DatasetStats> {
    let (d, len) = test.dims().ok_or_else(|| Error::InvalidArgument("empty test split".into()))?;
    let n = test.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("statistics need at least 2 instances, got {n}")));
    }
    let cells = d * len;
    let mut local_mean = vec![0.0; cells];
    for x in &test.instances {
        for (m, v) in local_mean.iter_mut().zip(x.values()) {
            *m += v;
        }
    }
    local_mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut local_ss = vec![0.0; cells];
    for x in &test.instances {
        for ((s, v), m) in local_ss.iter_mut().zip(x.values()).zip(&local_mean) {
            *s += (v - m) * (v - m);
        }
    }
    let local_std = local_ss.iter().map(|s| libm::sqrt(s / (n - 1) as f64)).collect();

    let mut global_mean = vec![0.0; d];
    let mut global_std = vec![0.0; d];
    let count = (n * len) as f64;
    for c in 0..d {
        let sum: f64 = test.instances.iter().map(|x| x.row(c).iter().sum::<f64>()).sum();
        let m = sum / count;
        let ss: f64 = test
            .instances
            .iter()
            .map(|x| x.row(c).iter().map(|v| (v - m) * (v - m)).sum::<f64>())
            .sum();
        global_mean[c] = m;
        global_std[c] = libm::sqrt(ss / (count - 1.0));
    }
    Ok(DatasetStats { d, len, local_mean, local_std, global_mean, global_std })
}

/// `0, 0.1, ..., 1.0`.
pub fn default_fractions() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// `ceil(fraction * cells)`, guarded against representation error
/// (`0.3 * 2000` is not exactly 600 in binary).
pub fn perturbed_count(fraction: f64, cells: usize) -> usize {
    let k = libm::ceil(fraction * cells as f64 - 1e-9);
    (k.max(0.0) as usize).min(cells)
}

/// Cell indices of the upsampled map, most salient first; ties keep
/// `(channel, time)` order.
pub fn ranked_cells(w: &SaliencyMap) -> Result<Vec<usize>> {
    if w.scale() != Scale::Rescaled0to100 {
        return Err(Error::NotRescaled);
    }
    let up = w.upsampled();
    let v = up.weights();
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    Ok(idx)
}

/// Standard normal draw for one cell of one instance.
pub fn cell_noise(seed: u64, instance: usize, c: usize, t: usize) -> f64 {
    rng::normal(&mut rng::stream(seed, &[instance as u64, c as u64, t as u64]))
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("fraction {fraction} outside [0, 1]")));
    }
    Ok(())
}

fn replace_cells(
    x: &MultiSeries,
    cells: &[usize],
    strategy: PerturbationStrategy,
    stats: &DatasetStats,
    seed: u64,
    instance: usize,
) -> MultiSeries {
    let len = x.length();
    let mut v = x.values().to_vec();
    for &cell in cells {
        let (c, t) = (cell / len, cell % len);
        let mean = stats.mean(strategy.scope, c, t);
        v[cell] = match strategy.statistic {
            Statistic::Mean => mean,
            Statistic::Gaussian => mean + stats.std(strategy.scope, c, t) * cell_noise(seed, instance, c, t),
        };
    }
    MultiSeries::new(x.channels(), len, v).expect("shape preserved")
}

fn check_pair(x: &MultiSeries, w: &SaliencyMap, stats: &DatasetStats) -> Result<()> {
    if w.scale() != Scale::Rescaled0to100 {
        return Err(Error::NotRescaled);
    }
    let up = w.upsampled().shape();
    if up != x.shape() {
        return Err(Error::ShapeMismatch { expected: x.shape(), found: up });
    }
    if (stats.d, stats.len) != (x.channels(), x.length()) {
        return Err(Error::ShapeMismatch { expected: x.shape(), found: crate::Shape(stats.d, stats.len) });
    }
    Ok(())
}

/// Replace the `ceil(fraction * d * L)` most salient cells of `x`.
/// Gaussian draws depend on `(seed, instance, c, t)` only, so two
/// explainers that perturb the same cell perturb it identically.
pub fn perturb_topk(
    x: &MultiSeries,
    w: &SaliencyMap,
    fraction: f64,
    strategy: PerturbationStrategy,
    stats: &DatasetStats,
    seed: u64,
    instance: usize,
) -> Result<MultiSeries> {
    check_fraction(fraction)?;
    check_pair(x, w, stats)?;
    let order = ranked_cells(w)?;
    let k = perturbed_count(fraction, order.len());
    Ok(replace_cells(x, &order[..k], strategy, stats, seed, instance))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyDropCurve {
    pub explainer: String,
    pub referee: String,
    pub strategy: PerturbationStrategy,
    pub fractions: Vec<f64>,
    pub accuracies: Vec<f64>,
}

/// Referee accuracy on the perturbed test split at every fraction.
#[allow(clippy::too_many_arguments)]
pub fn drop_curve(
    explainer: &str,
    referee_name: &str,
    referee: &dyn Classifier,
    test: &LabeledDataset,
    explanations: &[SaliencyMap],
    strategy: PerturbationStrategy,
    fractions: &[f64],
    stats: &DatasetStats,
    seed: u64,
) -> Result<AccuracyDropCurve> {
    if explanations.len() != test.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} explanations for {} test instances",
            explanations.len(),
            test.len()
        )));
    }
    if fractions.is_empty() {
        return Err(Error::InvalidArgument("empty fraction grid".into()));
    }
    for &f in fractions {
        check_fraction(f)?;
    }
    let mut orders = Vec::with_capacity(test.len());
    for (x, w) in test.instances.iter().zip(explanations) {
        check_pair(x, w, stats)?;
        orders.push(ranked_cells(w)?);
    }
    let mut accuracies = Vec::with_capacity(fractions.len());
    for &f in fractions {
        let perturbed: Vec<MultiSeries> = test
            .instances
            .iter()
            .zip(&orders)
            .enumerate()
            .map(|(i, (x, order))| {
                let k = perturbed_count(f, order.len());
                replace_cells(x, &order[..k], strategy, stats, seed, i)
            })
            .collect();
        let ds = LabeledDataset {
            instances: perturbed,
            labels: test.labels.clone(),
            n_classes: test.n_classes,
            seed: test.seed,
            name: test.name.clone(),
        };
        accuracies.push(accuracy(referee, &ds));
    }
    Ok(AccuracyDropCurve {
        explainer: explainer.to_owned(),
        referee: referee_name.to_owned(),
        strategy,
        fractions: fractions.to_vec(),
        accuracies,
    })
}

/// Trapezoidal area divided by the fraction span.
pub fn curve_auc(c: &AccuracyDropCurve) -> Result<f64> {
    let (f, a) = (&c.fractions, &c.accuracies);
    if f.len() < 2 || f.len() != a.len() {
        return Err(Error::InvalidArgument(format!("{} fractions, {} accuracies", f.len(), a.len())));
    }
    let span = f[f.len() - 1] - f[0];
    if span <= 0.0 || f.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::InvalidArgument("fractions must be strictly increasing".into()));
    }
    let area: f64 = (1..f.len()).map(|i| (f[i] - f[i - 1]) * (a[i] + a[i - 1]) / 2.0).sum();
    Ok(area / span)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AucEntry {
    pub explainer: String,
    pub referee: String,
    pub strategy: PerturbationStrategy,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmeeRow {
    pub explainer: String,
    pub average_auc: f64,
    pub scaled_auc: f64,
    pub power: f64,
    /// 1 = lowest average AUC.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefereeSummary {
    pub name: String,
    pub clean_accuracy: f64,
    pub majority_rate: f64,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmeeReport {
    /// In order of first appearance of each explainer.
    pub rows: Vec<AmeeRow>,
    pub referees: Vec<RefereeSummary>,
}

/// Average AUC per explainer, min-max scaled; power is `1 - scaled`.
/// Equal averages share neither rank: the earlier explainer ranks first.
pub fn aggregate_and_rank(entries: &[AucEntry]) -> Result<AmeeReport> {
    let mut names: Vec<&str> = Vec::new();
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for e in entries {
        if !e.auc.is_finite() {
            return Err(Error::NonFinite(format!("AUC of {}", e.explainer)));
        }
        let i = match names.iter().position(|n| *n == e.explainer) {
            Some(i) => i,
            None => {
                names.push(&e.explainer);
                sums.push((0.0, 0));
                names.len() - 1
            }
        };
        sums[i].0 += e.auc;
        sums[i].1 += 1;
    }
    if names.len() < 2 {
        return Err(Error::InvalidArgument(format!("ranking needs at least 2 explainers, got {}", names.len())));
    }
    let avg: Vec<f64> = sums.iter().map(|(s, n)| s / *n as f64).collect();
    let lo = avg.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = avg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Err(Error::DegenerateSpread);
    }
    let mut order: Vec<usize> = (0..avg.len()).collect();
    order.sort_by(|&a, &b| avg[a].total_cmp(&avg[b]).then(a.cmp(&b)));
    let mut rank = vec![0; avg.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }
    let rows = names
        .iter()
        .zip(&avg)
        .zip(rank)
        .map(|((name, &a), rank)| {
            let scaled = (a - lo) / (hi - lo);
            AmeeRow { explainer: (*name).to_owned(), average_auc: a, scaled_auc: scaled, power: 1.0 - scaled, rank }
        })
        .collect();
    Ok(AmeeReport { rows, referees: Vec::new() })
}

/// One explainer: a name and one map per test instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Explainer {
    pub name: String,
    pub maps: Vec<SaliencyMap>,
}

pub struct Referee<'a> {
    pub trainer: &'a dyn Trainer,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmeeConfig {
    pub strategies: Vec<PerturbationStrategy>,
    pub fractions: Vec<f64>,
    /// Seed of the Gaussian replacement draws.
    pub seed: u64,
}

impl Default for AmeeConfig {
    fn default() -> Self {
        Self { strategies: PerturbationStrategy::ALL.to_vec(), fractions: default_fractions(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmeeRun {
    pub report: AmeeReport,
    /// Explainer-major, then referee, then strategy.
    pub curves: Vec<AccuracyDropCurve>,
}

fn ensure_unique<'a>(what: &str, names: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen: Vec<&str> = Vec::new();
    for n in names {
        if seen.contains(&n) {
            return Err(Error::InvalidArgument(format!("duplicate {what} name {n}")));
        }
        seen.push(n);
    }
    Ok(())
}

/// Train every referee on `train`, drop those at or below the test majority
/// rate, and evaluate the full explainer x referee x strategy product.
/// Splits and maps are used as given; callers that evaluate on the
/// concatenated form pass concatenated splits and flattened maps.
pub fn run_amee<E: Executor>(
    train: &LabeledDataset,
    test: &LabeledDataset,
    explainers: &[Explainer],
    referees: &[Referee<'_>],
    cfg: &AmeeConfig,
    exec: &E,
) -> Result<AmeeRun> {
    if cfg.strategies.is_empty() || referees.is_empty() {
        return Err(Error::InvalidArgument("at least one strategy and one referee are required".into()));
    }
    let referee_names: Vec<String> = referees.iter().map(|r| r.trainer.name()).collect();
    ensure_unique("explainer", explainers.iter().map(|e| e.name.as_str()))?;
    ensure_unique("referee", referee_names.iter().map(String::as_str))?;
    let stats = dataset_stats(test)?;

    let fitted: Vec<Result<BoxedClassifier>> = exec.map(referees.iter().collect(), |r| r.trainer.fit(train, r.seed));
    let base = majority_rate(test);
    let mut summaries = Vec::with_capacity(referees.len());
    let mut active: Vec<(usize, BoxedClassifier)> = Vec::new();
    for (i, model) in fitted.into_iter().enumerate() {
        let model = model?;
        let clean = accuracy(&model, test);
        let excluded = clean <= base;
        summaries.push(RefereeSummary {
            name: referee_names[i].clone(),
            clean_accuracy: clean,
            majority_rate: base,
            excluded,
        });
        if !excluded {
            active.push((i, model));
        }
    }
    if active.is_empty() {
        return Err(Error::InvalidArgument(format!("no referee beats the majority rate {base}")));
    }

    let mut jobs = Vec::new();
    for e in explainers {
        for (i, model) in &active {
            for &s in &cfg.strategies {
                jobs.push((e, *i, model, s));
            }
        }
    }
    let curves: Vec<Result<AccuracyDropCurve>> = exec.map(jobs, |(e, i, model, s)| {
        drop_curve(&e.name, &referee_names[i], &**model, test, &e.maps, s, &cfg.fractions, &stats, cfg.seed)
    });
    let curves: Vec<AccuracyDropCurve> = curves.into_iter().collect::<Result<_>>()?;
    let entries = curves
        .iter()
        .map(|c| {
            Ok(AucEntry {
                explainer: c.explainer.clone(),
                referee: c.referee.clone(),
                strategy: c.strategy,
                auc: curve_auc(c)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = aggregate_and_rank(&entries)?;
    report.referees = summaries;
    Ok(AmeeRun { report, curves })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::{ground_truth_maps, random_maps};
    use crate::exec::Sequential;
    use crate::linear::{RawRidgeTrainer, RocketRidgeTrainer};
    use crate::synthgen::{generate_dataset, SynthKind, SynthSpec};
    use crate::tsdata::GroundTruthMask;
    use proptest::prelude::*;

    fn ds(rows: Vec<Vec<Vec<f64>>>) -> LabeledDataset {
        let n = rows.len();
        let xs = rows.into_iter().map(|r| MultiSeries::from_rows(&r).unwrap()).collect();
        LabeledDataset::new(xs, (0..n).map(|i| i % 2).collect(), 2, 0, "t").unwrap()
    }

    fn rescaled(d: usize, s: usize, w: Vec<f64>) -> SaliencyMap {
        SaliencyMap::new(d, s, w, Scale::Rescaled0to100, 1).unwrap()
    }

    fn small_spec(seed: u64) -> SynthSpec {
        let mut spec = SynthSpec::new(SynthKind::PseudoPeriodic, seed);
        spec.n_train = 40;
        spec.n_test = 40;
        spec.d = 4;
        spec.len = 40;
        spec.box_channels = 0..2;
        spec.box_time = 10..20;
        spec
    }

    #[test]
    fn constant_dataset_statistics() {
        let t = ds(vec![vec![vec![2.5; 3]; 2]; 4]);
        let s = dataset_stats(&t).unwrap();
        assert!(s.local_mean.iter().chain(&s.global_mean).all(|&m| m == 2.5));
        assert!(s.local_std.iter().chain(&s.global_std).all(|&v| v == 0.0));
        assert!(dataset_stats(&ds(vec![vec![vec![1.0; 3]]])).is_err());
    }

    #[test]
    fn sample_denominators() {
        // two instances, values 0 and 2 at every cell: mean 1, sample std sqrt(2)
        let t = ds(vec![vec![vec![0.0, 0.0]], vec![vec![2.0, 2.0]]]);
        let s = dataset_stats(&t).unwrap();
        assert_eq!(s.local_mean, vec![1.0, 1.0]);
        assert!((s.local_std[0] - libm::sqrt(2.0)).abs() < 1e-15);
        // four values {0,0,2,2}: sample variance 4/3
        assert!((s.global_std[0] - libm::sqrt(4.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn global_mean_is_mean_of_local_means() {
        let (_, test, _) = generate_dataset(&SynthSpec::new(SynthKind::Gaussian, 3)).unwrap();
        let s = dataset_stats(&test).unwrap();
        for c in 0..s.d {
            let m = s.local_mean[c * s.len..(c + 1) * s.len].iter().sum::<f64>() / s.len as f64;
            assert!((m - s.global_mean[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn balanced_box_offsets_cancel_in_local_mean() {
        let spec = SynthSpec::new(SynthKind::PseudoPeriodic, 1);
        let (_, test, _) = generate_dataset(&spec).unwrap();
        let s = dataset_stats(&test).unwrap();
        // 50/50 split, so +1 and -1 cancel; what is left is the base mean,
        // zero in expectation with standard error about sqrt(0.51 / 100).
        let mut box_sum = 0.0;
        for c in spec.box_channels.clone() {
            for t in spec.box_time.clone() {
                let m = s.local_mean[c * spec.len + t];
                assert!(m.abs() < 0.35, "({c},{t}) mean {m}");
                box_sum += m;
                // the offsets add variance 1 on top of the base
                assert!(s.local_std[c * spec.len + t] > 1.0);
            }
        }
        assert!((box_sum / spec.box_cells() as f64).abs() < 0.15);
    }

    #[test]
    fn count_is_guarded_ceil() {
        assert_eq!(perturbed_count(0.3, 2000), 600);
        assert_eq!(perturbed_count(0.05, 2000), 100);
        assert_eq!(perturbed_count(0.0, 2000), 0);
        assert_eq!(perturbed_count(1.0, 2000), 2000);
        assert_eq!(perturbed_count(0.5, 3), 2);
    }

    #[test]
    fn ranking_breaks_ties_by_index() {
        let w = rescaled(2, 3, vec![50.0, 100.0, 50.0, 0.0, 100.0, 50.0]);
        assert_eq!(ranked_cells(&w).unwrap(), vec![1, 4, 0, 2, 5, 3]);
        // segment weights are repeated across their span
        let seg = SaliencyMap::new(1, 2, vec![10.0, 90.0], Scale::Rescaled0to100, 3).unwrap();
        assert_eq!(ranked_cells(&seg).unwrap(), vec![3, 4, 5, 0, 1, 2]);
        let raw = SaliencyMap::raw(1, 2, vec![1.0, 2.0]).unwrap();
        assert_eq!(ranked_cells(&raw), Err(Error::NotRescaled));
    }

    #[test]
    fn perturbation_extremes() {
        let t = ds(vec![
            vec![vec![1.0, 2.0, 3.0], vec![0.0, 0.0, 6.0]],
            vec![vec![3.0, 4.0, 5.0], vec![2.0, 2.0, 2.0]],
        ]);
        let s = dataset_stats(&t).unwrap();
        let x = &t.instances[0];
        let w = rescaled(2, 3, vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0]);
        for strat in PerturbationStrategy::ALL {
            assert_eq!(&perturb_topk(x, &w, 0.0, strat, &s, 1, 0).unwrap(), x);
        }
        let mg = PerturbationStrategy { statistic: Statistic::Mean, scope: Scope::Global };
        let all = perturb_topk(x, &w, 1.0, mg, &s, 1, 0).unwrap();
        assert_eq!(all.row(0), &[3.0; 3]);
        assert_eq!(all.row(1), &[2.0; 3]);
        let ml = PerturbationStrategy { statistic: Statistic::Mean, scope: Scope::Local };
        // half of 6 cells: the three highest, i.e. all of channel 1
        let half = perturb_topk(x, &w, 0.5, ml, &s, 1, 0).unwrap();
        assert_eq!(half.row(0), x.row(0));
        assert_eq!(half.row(1), &[1.0, 1.0, 4.0]);
        let raw = SaliencyMap::raw(2, 3, vec![0.0; 6]).unwrap();
        assert_eq!(perturb_topk(x, &raw, 0.5, ml, &s, 1, 0), Err(Error::NotRescaled));
        assert!(perturb_topk(x, &w, 1.5, ml, &s, 1, 0).is_err());
    }

    #[test]
    fn gaussian_draws_are_shared_and_scaled() {
        let t = ds(vec![vec![vec![0.0, 0.0, 0.0]], vec![vec![2.0, 2.0, 8.0]]]);
        let s = dataset_stats(&t).unwrap();
        let x = &t.instances[1];
        let gl = PerturbationStrategy { statistic: Statistic::Gaussian, scope: Scope::Local };
        let a = perturb_topk(x, &rescaled(1, 3, vec![0.0, 50.0, 100.0]), 1.0, gl, &s, 5, 1).unwrap();
        let b = perturb_topk(x, &rescaled(1, 3, vec![100.0, 100.0, 0.0]), 1.0, gl, &s, 5, 1).unwrap();
        assert_eq!(a, b);
        for t_ in 0..3 {
            let expected = s.local_mean[t_] + s.local_std[t_] * cell_noise(5, 1, 0, t_);
            assert_eq!(a.get(0, t_), expected);
        }
        // a different instance index gets different draws
        let c = perturb_topk(x, &rescaled(1, 3, vec![0.0, 50.0, 100.0]), 1.0, gl, &s, 5, 0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn ground_truth_at_five_percent_replaces_exactly_the_box() {
        let spec = SynthSpec::new(SynthKind::PseudoPeriodic, 4);
        let (_, test, mask) = generate_dataset(&spec).unwrap();
        let s = dataset_stats(&test).unwrap();
        let w = mask.as_saliency(spec.len / mask.columns());
        let ml = PerturbationStrategy { statistic: Statistic::Mean, scope: Scope::Local };
        for (i, x) in test.instances.iter().enumerate().take(5) {
            let p = perturb_topk(x, &w, 0.05, ml, &s, 0, i).unwrap();
            for c in 0..spec.d {
                for t in 0..spec.len {
                    let inside = spec.box_channels.contains(&c) && spec.box_time.contains(&t);
                    assert_eq!(p.get(c, t) != x.get(c, t), inside, "cell ({c},{t})");
                }
            }
        }
    }

    fn curve(fractions: Vec<f64>, accuracies: Vec<f64>) -> AccuracyDropCurve {
        AccuracyDropCurve {
            explainer: "e".into(),
            referee: "r".into(),
            strategy: PerturbationStrategy::ALL[0],
            fractions,
            accuracies,
        }
    }

    #[test]
    fn auc_examples() {
        let f = default_fractions();
        assert!((curve_auc(&curve(f.clone(), vec![0.8; 11])).unwrap() - 0.8).abs() < 1e-15);
        let lin: Vec<f64> = f.iter().map(|x| 1.0 - x).collect();
        assert!((curve_auc(&curve(f.clone(), lin)).unwrap() - 0.5).abs() < 1e-15);
        // normalised by span
        assert!((curve_auc(&curve(vec![0.2, 0.4], vec![1.0, 0.0])).unwrap() - 0.5).abs() < 1e-15);
        assert!(curve_auc(&curve(vec![0.0], vec![1.0])).is_err());
    }

    #[test]
    fn auc_matches_fine_grid_integration() {
        let f = default_fractions();
        let a = vec![0.98, 0.61, 0.55, 0.5, 0.52, 0.49, 0.47, 0.51, 0.5, 0.48, 0.5];
        let auc = curve_auc(&curve(f.clone(), a.clone())).unwrap();
        // midpoint rule on the piecewise-linear interpolant
        let steps = 200_000;
        let h = 1.0 / steps as f64;
        let mut total = 0.0;
        for j in 0..steps {
            let x = (j as f64 + 0.5) * h;
            let i = ((x * 10.0) as usize).min(9);
            let u = (x - f[i]) / (f[i + 1] - f[i]);
            total += h * (a[i] + u * (a[i + 1] - a[i]));
        }
        assert!((auc - total).abs() < 1e-9, "{auc} vs {total}");
    }

    fn entries(avgs: &[f64]) -> Vec<AucEntry> {
        avgs.iter()
            .enumerate()
            .map(|(i, &auc)| AucEntry {
                explainer: format!("e{i}"),
                referee: "r".into(),
                strategy: PerturbationStrategy::ALL[0],
                auc,
            })
            .collect()
    }

    #[test]
    fn ranking_example_table() {
        let r = aggregate_and_rank(&entries(&[0.29, 0.30, 0.45, 0.53, 0.55])).unwrap();
        let row = &r.rows[2];
        assert!((row.scaled_auc - 0.16 / 0.26).abs() < 1e-12);
        assert!((row.power - 0.39).abs() <= 0.03);
        assert_eq!(row.rank, 3);
        assert_eq!(r.rows[0].power, 1.0);
        assert_eq!(r.rows[4].power, 0.0);
        let two = aggregate_and_rank(&entries(&[0.7, 0.2])).unwrap();
        assert_eq!((two.rows[0].power, two.rows[1].power), (0.0, 1.0));
        assert_eq!((two.rows[0].rank, two.rows[1].rank), (2, 1));
        assert_eq!(aggregate_and_rank(&entries(&[0.4, 0.4])), Err(Error::DegenerateSpread));
        assert!(aggregate_and_rank(&entries(&[0.4])).is_err());
    }

    #[test]
    fn averages_over_referees_and_strategies() {
        let mut e = entries(&[0.2, 0.6]);
        e.push(AucEntry { explainer: "e0".into(), referee: "q".into(), strategy: PerturbationStrategy::ALL[1], auc: 0.4 });
        let r = aggregate_and_rank(&e).unwrap();
        assert!((r.rows[0].average_auc - 0.3).abs() < 1e-15);
        assert_eq!(r.rows[1].average_auc, 0.6);
    }

    proptest! {
        #[test]
        fn power_decreases_with_average(avgs in prop::collection::vec(0.0f64..1.0, 2..8), shift in -0.5f64..0.5) {
            let lo = avgs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = avgs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assume!(hi - lo > 1e-6);
            let r = aggregate_and_rank(&entries(&avgs)).unwrap();
            let mut ranks: Vec<usize> = r.rows.iter().map(|x| x.rank).collect();
            ranks.sort();
            prop_assert_eq!(ranks, (1..=avgs.len()).collect::<Vec<_>>());
            for a in &r.rows {
                prop_assert!((0.0..=1.0).contains(&a.scaled_auc));
                for b in &r.rows {
                    if a.average_auc < b.average_auc {
                        prop_assert!(a.power > b.power && a.rank < b.rank);
                    }
                }
            }
            let shifted: Vec<f64> = avgs.iter().map(|v| v + shift).collect();
            let s = aggregate_and_rank(&entries(&shifted)).unwrap();
            for (a, b) in r.rows.iter().zip(&s.rows) {
                prop_assert_eq!(a.rank, b.rank);
                prop_assert!((a.power - b.power).abs() < 1e-9);
            }
        }
    }

    fn flat(maps: &[SaliencyMap]) -> Vec<SaliencyMap> {
        maps.iter().map(SaliencyMap::flattened).collect()
    }

    fn gt_and_random(test: &LabeledDataset, mask: &GroundTruthMask, len: usize, seed: u64) -> Vec<Explainer> {
        let (d, n) = (mask.channels(), test.len());
        vec![
            Explainer { name: "truth".into(), maps: flat(&ground_truth_maps(mask, len / mask.columns(), n)) },
            Explainer { name: "random".into(), maps: flat(&random_maps(n, d, len, seed).unwrap()) },
        ]
    }

    #[test]
    fn drop_curve_endpoints() {
        let spec = small_spec(2);
        let (train, test, mask) = generate_dataset(&spec).unwrap();
        let (train, test) = (train.concatenated(), test.concatenated());
        let model = RawRidgeTrainer::default().fit(&train, 0).unwrap();
        let stats = dataset_stats(&test).unwrap();
        let ex = gt_and_random(&test, &mask, spec.len, 3);
        let f = default_fractions();
        for s in PerturbationStrategy::ALL {
            let a = drop_curve("truth", "ridge", &model, &test, &ex[0].maps, s, &f, &stats, 8).unwrap();
            let b = drop_curve("random", "ridge", &model, &test, &ex[1].maps, s, &f, &stats, 8).unwrap();
            assert_eq!(a.accuracies[0], accuracy(&model, &test));
            assert_eq!(a.accuracies[10], b.accuracies[10]);
            assert_eq!(a.fractions.len(), a.accuracies.len());
        }
        // removing the box leaves nothing to learn from: chance level
        let ml = PerturbationStrategy::ALL[0];
        let box_fraction = spec.box_cells() as f64 / (spec.d * spec.len) as f64;
        let grid = [0.0, box_fraction];
        let a = drop_curve("truth", "ridge", &model, &test, &ex[0].maps, ml, &grid, &stats, 8).unwrap();
        assert!(a.accuracies[0] > 0.9);
        assert!((a.accuracies[1] - 0.5).abs() <= 0.2, "{:?}", a.accuracies);
    }

    #[test]
    fn ground_truth_beats_random_end_to_end() {
        let spec = small_spec(5);
        let (train, test, mask) = generate_dataset(&spec).unwrap();
        let ex = gt_and_random(&test, &mask, spec.len, 11);
        let (train, test) = (train.concatenated(), test.concatenated());
        let ridge = RawRidgeTrainer::default();
        let rocket = RocketRidgeTrainer { n_kernels: 100, ..Default::default() };
        let referees = [Referee { trainer: &ridge, seed: 0 }, Referee { trainer: &rocket, seed: 1 }];
        let cfg = AmeeConfig { seed: 7, ..Default::default() };
        let run = run_amee(&train, &test, &ex, &referees, &cfg, &Sequential).unwrap();
        assert_eq!(run.report.rows[0].power, 1.0);
        assert_eq!(run.report.rows[1].power, 0.0);
        assert_eq!(run.curves.len(), 2 * 2 * 4);
        assert_eq!(run.report.referees.len(), 2);
        assert_eq!(run, run_amee(&train, &test, &ex, &referees, &cfg, &Sequential).unwrap());

        // one referee, one strategy: the report is the aggregate of that slice
        let one = AmeeConfig { strategies: vec![PerturbationStrategy::ALL[2]], ..cfg.clone() };
        let sliced = run_amee(&train, &test, &ex, &referees[..1], &one, &Sequential).unwrap();
        let direct: Vec<AucEntry> = run
            .curves
            .iter()
            .filter(|c| c.referee == "ridge" && c.strategy == PerturbationStrategy::ALL[2])
            .map(|c| AucEntry { explainer: c.explainer.clone(), referee: c.referee.clone(), strategy: c.strategy, auc: curve_auc(c).unwrap() })
            .collect();
        assert_eq!(sliced.report.rows, aggregate_and_rank(&direct).unwrap().rows);
    }

    #[test]
    fn inverse_saliency_is_never_more_faithful() {
        let mut wins = 0;
        for seed in 1..=3 {
            let spec = small_spec(seed);
            let (train, test, mask) = generate_dataset(&spec).unwrap();
            let truth = flat(&ground_truth_maps(&mask, spec.len / mask.columns(), test.len()));
            let inverse: Vec<SaliencyMap> = truth
                .iter()
                .map(|w| rescaled(1, w.columns(), w.weights().iter().map(|v| 100.0 - v).collect()))
                .collect();
            let (train, test) = (train.concatenated(), test.concatenated());
            let model = RawRidgeTrainer::default().fit(&train, 0).unwrap();
            let stats = dataset_stats(&test).unwrap();
            let f = default_fractions();
            let s = PerturbationStrategy::ALL[1];
            let a = curve_auc(&drop_curve("t", "r", &model, &test, &truth, s, &f, &stats, seed).unwrap()).unwrap();
            let b = curve_auc(&drop_curve("i", "r", &model, &test, &inverse, s, &f, &stats, seed).unwrap()).unwrap();
            if a <= b {
                wins += 1;
            }
        }
        assert!(wins >= 2);
    }

    #[test]
    fn referees_at_majority_rate_are_excluded() {
        struct Constant;
        impl Classifier for Constant {
            fn n_classes(&self) -> usize {
                2
            }
            fn predict_proba(&self, _: &MultiSeries) -> Vec<f64> {
                vec![1.0, 0.0]
            }
        }
        struct ConstantTrainer;
        impl Trainer for ConstantTrainer {
            fn name(&self) -> String {
                "constant".into()
            }
            fn fit(&self, _: &LabeledDataset, _: u64) -> Result<BoxedClassifier> {
                Ok(alloc::boxed::Box::new(Constant))
            }
        }
        let spec = small_spec(6);
        let (train, test, mask) = generate_dataset(&spec).unwrap();
        let ex = gt_and_random(&test, &mask, spec.len, 1);
        let (train, test) = (train.concatenated(), test.concatenated());
        let ridge = RawRidgeTrainer::default();
        let cfg = AmeeConfig { strategies: vec![PerturbationStrategy::ALL[0]], ..Default::default() };
        let both = [Referee { trainer: &ConstantTrainer, seed: 0 }, Referee { trainer: &ridge, seed: 0 }];
        let run = run_amee(&train, &test, &ex, &both, &cfg, &Sequential).unwrap();
        assert!(run.report.referees[0].excluded && !run.report.referees[1].excluded);
        assert!(run.curves.iter().all(|c| c.referee == "ridge"));
        let only = [Referee { trainer: &ConstantTrainer, seed: 0 }];
        assert!(run_amee(&train, &test, &ex, &only, &cfg, &Sequential).is_err());
    }
}
