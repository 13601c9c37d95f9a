//! GAP network over rotated channel stacks, its class activation maps, and
//! the permutation-averaged channel saliency built on them.

pub mod cnn;
pub mod cx;
pub mod dcam;

pub use cnn::{train, train_with, CnnConfig, EpochStats, GapCnn, TrainLog};
pub use cx::{build_cx, CxTensor};
pub use dcam::{dcam, ChannelGate, DcamAccumulator, DcamConfig};
