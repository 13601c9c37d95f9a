#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod ameeval;
pub mod baseline;
pub mod error;
pub mod evalgt;
pub mod exec;
pub mod gapdcam;
pub mod linalg;
pub mod linear;
pub mod model;
pub mod rng;
pub mod rocket;
pub mod shapx;
pub mod synthgen;
pub mod tsdata;

pub use error::{Error, Result, Shape};
pub use tsdata::{GroundTruthMask, LabeledDataset, MultiSeries, SaliencyMap, Scale};
