//! Collaborative edge/cloud dispatch for sequence-to-sequence inference.
//!
//! A gateway decides per request whether to translate locally or offload to
//! a faster cloud server. The decision compares linear execution-time
//! estimates for both devices, using a predicted output length in place of
//! the unknown true one, plus the current round-trip-time belief.
//!
//! - [`model`]: latency planes, N-to-M length lines, least-squares fitting.
//! - [`policy`]: C-NMT, Naive, static and Oracle dispatch rules.
//! - [`netsim`]: RTT trace replay, bandwidth, and the RTT estimator.
//! - [`workload`]: corpora, measurements, and ground-truth latency draws.
//! - [`sim`]: trace-driven runs and baseline comparison reports.
//! - [`replay`]: decision logs and offline replay.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod model;
pub mod netsim;
pub mod policy;
pub mod replay;
pub mod sim;
pub mod workload;

pub use model::{DeviceProfile, FilterRules, FitReport, LatencySample, LengthModel, LengthPair};
pub use netsim::{BandwidthModel, RttTrace, TraceSpec, TxEstimator};
pub use policy::{Decision, PolicyConfig, PolicyKind, Target};
pub use replay::{DispatchModel, LogRow};
pub use sim::{compare_report, run_simulation, Report, RunResult, SimConfig, SimMode};
pub use workload::{Corpus, DeviceOracle, LengthDist, Request, SynthSpec};
