//! SPAM: Adam with spike-aware clipping, periodic momentum reset and
//! sparse moments; clipped-Adam baselines, gradient-spike analysis and
//! desk-scale optimization experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod harness;
pub mod optim;
pub mod params;
pub mod problems;
pub mod rng;
pub mod spike_lab;

pub use optim::{AdamConfig, Optimizer, SpamConfig, StepReport};
pub use params::{IndexMask, ParameterStore};
pub use rng::RngStream;
