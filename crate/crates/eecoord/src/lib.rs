//! Energy-efficient coordinated multi-cell MIMO downlink design.
//!
//! Library crate behind the `eecoord` binary: cluster geometry and channel
//! generation, power/rate/energy-efficiency metrics, stochastic antenna
//! gates, the transformed per-BS design problem, a decentralized
//! augmented-multiplier solver with a central coordination QP, and
//! zero-forcing / Dinkelbach / direct-ADMM baselines.

pub mod baselines;
pub mod bsproblem;
pub mod channel;
pub mod consensus;
pub mod error;
pub mod gates;
pub mod geometry;
pub mod metrics;
pub mod nlp;
pub mod qp;
pub mod config;
pub mod sweep;
pub mod scenario;
pub mod solver;
pub mod state;

pub use error::{Error, Result};
