//! The search driver.
//!
//! A tuning run measures configurations of one layer on the oracle until its
//! budget is spent. Three strategies share the same accounting and trial log:
//! the multi-agent search ([`Strategy::Dcoc`]), uniform random sampling and a
//! simulated-annealing search over the surrogate.

mod baselines;
mod dcoc;
pub mod log;
mod session;

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knobspace::{Configuration, DesignSpace, LayerWorkload, WorkloadSpec};
use crate::mappo::{Agent, HyperParams};
use crate::neural::DenseNet;
use crate::oracle::{Constraints, Measurement, OracleParams};
use crate::surrogate::BoostParams;

pub use baselines::{acceptance_probability, tune_layer_random, tune_layer_sa};
pub use dcoc::{tune_layer_dcoc, tune_layer_dcoc_warm};
pub use log::{Summary, TrialRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Dcoc,
    Random,
    Sa,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Dcoc, Strategy::Random, Strategy::Sa];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Dcoc => "dcoc",
            Strategy::Random => "random",
            Strategy::Sa => "sa",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

/// What ranks the explored candidates during confidence sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scorer {
    Critic,
    Surrogate,
}

/// Preset search sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fidelity {
    /// 128 episodes of 500 steps, 16 iterations of 64 measurements,
    /// learning rate 1e-3.
    Paper,
    /// 16 episodes of 32 steps and learning rate 1e-2, otherwise the same.
    Desk,
}

impl FromStr for Fidelity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Fidelity::Paper),
            "desk" => Ok(Fidelity::Desk),
            _ => Err(Error::Config(format!("unknown fidelity `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaParams {
    /// Parallel chains.
    pub chains: usize,
    /// Steps per chain per iteration.
    pub steps: usize,
    pub t0: f64,
    pub t_final: f64,
}

impl Default for SaParams {
    fn default() -> Self {
        Self { chains: 128, steps: 500, t0: 1.0, t_final: 0.01 }
    }
}

impl SaParams {
    /// Per-step cooling factor reaching `t_final` after `steps` steps.
    pub fn alpha(&self) -> f64 {
        (self.t_final / self.t0).powf(1.0 / self.steps as f64)
    }

    pub fn temperature(&self, step: usize) -> f64 {
        self.t0 * self.alpha().powi(step as i32)
    }
}

/// Learning rate of the `desk` preset; the `paper` preset uses the MAPPO
/// default of 1e-3.
pub const DESK_LEARNING_RATE: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TunerConfig {
    pub strategy: Strategy,
    pub iteration_opt: usize,
    /// Measurements per iteration.
    pub batch: usize,
    pub episodes: usize,
    pub steps: usize,
    /// Total oracle measurements per layer.
    pub budget: usize,
    pub seed: u64,
    pub oracle: OracleParams,
    pub constraints: Constraints,
    pub hyper: HyperParams,
    pub boost: BoostParams,
    pub scorer: Scorer,
    /// Carry agents and critic from one layer to the next.
    pub warm_start: bool,
    pub sa: SaParams,
    /// Random strategy only: measure valid configurations in index order.
    pub exhaustive: bool,
    /// When false every `t_wall_s` is written as 0 so logs are reproducible
    /// byte for byte.
    pub record_wall_clock: bool,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Dcoc,
            iteration_opt: 16,
            batch: 64,
            episodes: 16,
            steps: 32,
            budget: 1024,
            seed: 0,
            oracle: OracleParams::default(),
            constraints: Constraints::default(),
            hyper: HyperParams { policy_lr: DESK_LEARNING_RATE, critic_lr: DESK_LEARNING_RATE, ..HyperParams::default() },
            boost: BoostParams::default(),
            scorer: Scorer::Critic,
            warm_start: false,
            sa: SaParams::default(),
            exhaustive: false,
            record_wall_clock: true,
        }
    }
}

impl TunerConfig {
    pub fn with_fidelity(mut self, fidelity: Fidelity) -> Self {
        let (episodes, steps, lr) = match fidelity {
            Fidelity::Paper => (128, 500, HyperParams::default().policy_lr),
            Fidelity::Desk => (16, 32, DESK_LEARNING_RATE),
        };
        self.episodes = episodes;
        self.steps = steps;
        self.hyper.policy_lr = lr;
        self.hyper.critic_lr = lr;
        self.iteration_opt = 16;
        self.batch = 64;
        self
    }

    pub fn check(&self) -> Result<()> {
        if self.iteration_opt == 0 {
            return Err(Error::Config("iteration_opt must be at least 1".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        if self.budget < self.batch {
            return Err(Error::Config(format!("budget {} is smaller than one batch of {}", self.budget, self.batch)));
        }
        if self.episodes == 0 || self.steps == 0 {
            return Err(Error::Config("episodes and steps must be at least 1".into()));
        }
        if self.sa.chains == 0 || self.sa.steps == 0 || !(self.sa.t0 > 0.0) || !(self.sa.t_final > 0.0) {
            return Err(Error::Config("annealing needs chains, steps and positive temperatures".into()));
        }
        self.oracle.check().map_err(|e| Error::Config(e.to_string()))?;
        self.constraints.check().map_err(|e| Error::Config(e.to_string()))?;
        self.hyper.check().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

/// Oracle and constraint sections of a run config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub oracle: OracleParams,
    pub constraints: Constraints,
}

impl RunConfig {
    pub fn parse(json: &str) -> Result<Self> {
        let rc: RunConfig = serde_json::from_str(json)?;
        rc.oracle.check()?;
        rc.constraints.check()?;
        Ok(rc)
    }
}

/// Result of tuning one layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneOutcome {
    pub layer: String,
    pub strategy: Strategy,
    pub seed: u64,
    pub best_config: Configuration,
    pub best_values: IndexMap<String, u64>,
    pub best: Measurement,
    pub measurements: usize,
    pub trials: Vec<TrialRecord>,
    pub wall_seconds: f64,
}

/// Agents and critic carried between layers when warm-starting.
#[derive(Debug, Clone, PartialEq)]
pub struct Learners {
    pub agents: Vec<Agent>,
    pub critic: DenseNet,
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed for one layer of a network run.
pub fn layer_seed(seed: u64, layer: &str) -> u64 {
    seed ^ fnv1a64(layer.as_bytes())
}

/// Tunes one layer with `config.strategy` and `config.seed` as given.
pub fn tune_layer(space: &DesignSpace, workload: &LayerWorkload, config: &TunerConfig) -> Result<TuneOutcome> {
    match config.strategy {
        Strategy::Dcoc => tune_layer_dcoc(space, workload, config),
        Strategy::Random => tune_layer_random(space, workload, config),
        Strategy::Sa => tune_layer_sa(space, workload, config),
    }
}

/// Tunes every layer independently, each with its derived seed.
pub fn tune_network(workloads: &[WorkloadSpec], config: &TunerConfig) -> Result<Vec<TuneOutcome>> {
    config.check()?;
    let mut learners: Option<Learners> = None;
    let mut out = Vec::with_capacity(workloads.len());
    for spec in workloads {
        let space = spec.space()?;
        let layer_cfg = TunerConfig { seed: layer_seed(config.seed, &spec.workload.name), ..config.clone() };
        let outcome = if config.strategy == Strategy::Dcoc && config.warm_start {
            tune_layer_dcoc_warm(&space, &spec.workload, &layer_cfg, &mut learners)?
        } else {
            tune_layer(&space, &spec.workload, &layer_cfg)?
        };
        out.push(outcome);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
        }
        assert!("tvm".parse::<Strategy>().is_err());
    }

    #[test]
    fn fidelity_presets() {
        let paper = TunerConfig::default().with_fidelity(Fidelity::Paper);
        assert_eq!((paper.episodes, paper.steps, paper.iteration_opt, paper.batch), (128, 500, 16, 64));
        assert_eq!(paper.hyper.policy_lr, 1e-3);
        let desk = TunerConfig::default().with_fidelity("desk".parse().unwrap());
        assert_eq!((desk.episodes, desk.steps), (16, 32));
        assert_eq!(desk, TunerConfig::default());
    }

    #[test]
    fn config_checks() {
        assert!(TunerConfig::default().check().is_ok());
        assert_eq!(TunerConfig::default().budget, 16 * 64);
        let small = TunerConfig { budget: 10, ..TunerConfig::default() };
        assert!(matches!(small.check(), Err(Error::Config(_))));
        let zero = TunerConfig { iteration_opt: 0, ..TunerConfig::default() };
        assert!(zero.check().is_err());
    }

    #[test]
    fn annealing_schedule() {
        let sa = SaParams::default();
        assert_eq!(sa.temperature(0), 1.0);
        assert!((sa.temperature(500) - 0.01).abs() < 1e-12);
        assert!(sa.temperature(250) < 1.0 && sa.temperature(250) > 0.01);
    }

    #[test]
    fn run_config_sections() {
        let rc = RunConfig::parse(r#"{"oracle": {"noise_std": 0.1}, "constraints": {"area_max": 32}}"#).unwrap();
        assert_eq!(rc.oracle.noise_std, 0.1);
        assert_eq!(rc.oracle.peak_flops, 1e11);
        assert_eq!(rc.constraints.area_max, 32.0);
        assert!(RunConfig::parse(r#"{"oracle": {"peak": 1}}"#).is_err());
        assert!(RunConfig::parse(r#"{"hardware": {}}"#).is_err());
        assert_eq!(RunConfig::parse("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn seeds_mix_in_layer_names() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_ne!(layer_seed(1, "conv1"), layer_seed(1, "conv2"));
        assert_eq!(layer_seed(7, "x"), 7 ^ fnv1a64(b"x"));
    }
}
