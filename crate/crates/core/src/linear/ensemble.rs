//! One classifier per channel, combined by averaging class probabilities.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{BoxedClassifier, Classifier, Trainer};
use crate::rng;
use crate::tsdata::{LabeledDataset, MultiSeries};

pub struct EnsembleModel {
    members: Vec<BoxedClassifier>,
}

impl core::fmt::Debug for EnsembleModel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("EnsembleModel").field("channels", &self.members.len()).finish()
    }
}

impl EnsembleModel {
    /// Member `c` must accept channel `c` as a univariate series.
    pub fn from_members(members: Vec<BoxedClassifier>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::InvalidArgument("ensemble needs at least one member".into()));
        };
        let k = first.n_classes();
        if members.iter().any(|m| m.n_classes() != k) {
            return Err(Error::InvalidArgument("ensemble members disagree on class count".into()));
        }
        Ok(Self { members })
    }

    pub fn channels(&self) -> usize {
        self.members.len()
    }

    pub fn member(&self, c: usize) -> &dyn Classifier {
        &*self.members[c]
    }

    pub fn members(&self) -> &[BoxedClassifier] {
        &self.members
    }

    /// Arithmetic mean of member probability vectors.
    pub fn combine(per_channel: &[Vec<f64>]) -> Vec<f64> {
        let k = per_channel[0].len();
        let mut mean = alloc::vec![0.0; k];
        for p in per_channel {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= per_channel.len() as f64);
        mean
    }
}

impl Classifier for EnsembleModel {
    fn n_classes(&self) -> usize {
        self.members[0].n_classes()
    }

    fn predict_proba(&self, x: &MultiSeries) -> Vec<f64> {
        assert_eq!(x.channels(), self.members.len(), "ensemble channel count");
        if self.members.len() == 1 {
            return self.members[0].predict_proba(x);
        }
        let per: Vec<Vec<f64>> =
            self.members.iter().enumerate().map(|(c, m)| m.predict_proba(&x.channel(c))).collect();
        Self::combine(&per)
    }
}

/// Seed handed to the trainer of channel `c`.
pub fn member_seed(seed: u64, c: usize) -> u64 {
    rng::derive(seed, c as u64)
}

/// Train one member per channel on that channel alone.
pub fn ensemble_fit(ds: &LabeledDataset, trainer: &dyn Trainer, seed: u64) -> Result<EnsembleModel> {
    let (d, _) = ds.dims().ok_or_else(|| Error::InvalidArgument("empty dataset".into()))?;
    let members = (0..d)
        .map(|c| {
            trainer
                .fit(&ds.channel(c), member_seed(seed, c))
                .map_err(|e| Error::InvalidArgument(format!("channel {c}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    EnsembleModel::from_members(members)
}
