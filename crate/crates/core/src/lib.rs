//! Hardware/software co-optimization auto-tuner for convolution layers.
//!
//! Three cooperating PPO agents (scheduling, mapping, hardware) share a
//! centralized critic and explore a tiling/threading knob space. A
//! gradient-boosted tree surrogate stands in for hardware measurement during
//! exploration, confidence sampling narrows the candidates worth measuring,
//! and an analytical accelerator latency model plays the role of the device.
//!
//! Module map:
//!
//! - [`knobspace`]: knobs, design spaces, configurations and workloads
//! - [`oracle`]: analytical latency model, penalty and fitness
//! - [`surrogate`]: boosted regression trees
//! - [`neural`]: small dense nets with exact backprop
//! - [`mappo`]: GAE, clipped policy objective and the CTDE update
//! - [`explore`]: multi-agent rollout over the knob space
//! - [`sampling`]: confidence sampling and the uniform baseline
//! - [`tuner`]: the search driver, baselines, trial logs and reports

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod explore;
pub mod knobspace;
pub mod mappo;
pub mod neural;
pub mod oracle;
pub mod sampling;
pub mod surrogate;
pub mod tuner;

pub use error::{Error, Result};
pub use knobspace::{AgentId, Configuration, DesignSpace, Knob, KnobDef, LayerWorkload};
pub use oracle::{Constraints, Measurement, OracleParams};
pub use tuner::{Strategy, TuneOutcome, TunerConfig};
