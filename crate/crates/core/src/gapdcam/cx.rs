//! The rotated channel stack fed to the GAP network.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tsdata::MultiSeries;

/// `d` rows by `d` slots by `L` time points. Row `r`, slot `s` holds channel
/// `perm[(s + d - r) % d]` of the source series, so row 0 is the permuted
/// stack and each further row rotates it one slot to the right.
#[derive(Debug, Clone, PartialEq)]
pub struct CxTensor {
    d: usize,
    len: usize,
    perm: Vec<usize>,
    values: Vec<f64>,
}

impl CxTensor {
    pub fn channels(&self) -> usize {
        self.d
    }

    pub fn length(&self) -> usize {
        self.len
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The `d x L` plane of one row, slot-major.
    pub fn row(&self, r: usize) -> &[f64] {
        let plane = self.d * self.len;
        &self.values[r * plane..(r + 1) * plane]
    }

    pub fn get(&self, r: usize, s: usize, t: usize) -> f64 {
        self.values[(r * self.d + s) * self.len + t]
    }

    /// Source channel placed at `(r, s)`.
    pub fn channel_at(&self, r: usize, s: usize) -> usize {
        slot_channel(&self.perm, r, s)
    }
}

pub fn slot_channel(perm: &[usize], r: usize, s: usize) -> usize {
    let d = perm.len();
    perm[(s + d - r) % d]
}

pub fn check_permutation(perm: &[usize], d: usize) -> Result<()> {
    let mut seen = vec![false; d];
    if perm.len() != d {
        return Err(Error::InvalidPermutation(d));
    }
    for &p in perm {
        if p >= d || seen[p] {
            return Err(Error::InvalidPermutation(d));
        }
        seen[p] = true;
    }
    Ok(())
}

pub fn identity(d: usize) -> Vec<usize> {
    (0..d).collect()
}

pub fn build_cx(x: &MultiSeries, perm: &[usize]) -> Result<CxTensor> {
    let (d, len) = (x.channels(), x.length());
    check_permutation(perm, d)?;
    let mut values = Vec::with_capacity(d * d * len);
    for r in 0..d {
        for s in 0..d {
            values.extend_from_slice(x.row(slot_channel(perm, r, s)));
        }
    }
    Ok(CxTensor { d, len, perm: perm.to_vec(), values })
}
