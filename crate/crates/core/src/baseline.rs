//! Reference explainers with no model behind them.

use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::Result;
use crate::rng;
use crate::tsdata::{rescale_abs_minmax, GroundTruthMask, SaliencyMap};

/// Uniform noise on a `d x len` grid, rescaled to `[0, 100]`. Map `i` only
/// depends on `(seed, i)`.
pub fn random_map(d: usize, len: usize, seed: u64, i: u64) -> Result<SaliencyMap> {
    let mut r = rng::stream(seed, &[i]);
    let w = (0..d * len).map(|_| r.random::<f64>()).collect();
    Ok(rescale_abs_minmax(&SaliencyMap::raw(d, len, w)?))
}

pub fn random_maps(n: usize, d: usize, len: usize, seed: u64) -> Result<Vec<SaliencyMap>> {
    (0..n).map(|i| random_map(d, len, seed, i as u64)).collect()
}

/// The mask itself as an explanation, repeated for `n` instances.
pub fn ground_truth_maps(mask: &GroundTruthMask, segment_width: usize, n: usize) -> Vec<SaliencyMap> {
    let m = mask.as_saliency(segment_width);
    (0..n).map(|_| m.clone()).collect()
}
