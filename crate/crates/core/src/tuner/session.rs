//! Measurement bookkeeping shared by all strategies.

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use rand::Rng;

use super::log::TrialRecord;
use super::{Strategy, TuneOutcome, TunerConfig};
use crate::error::{Error, Result};
use crate::knobspace::{Configuration, DesignSpace, LayerWorkload};
use crate::oracle::{self, Measurement};
use crate::surrogate::{self, FeatureVector, SurrogateModel};

/// Spaces up to this size have their valid configurations enumerated.
const ENUMERATE_LIMIT: usize = 1 << 20;

/// Unmeasured valid configurations, drawn without replacement.
enum ValidPool {
    Listed(Vec<usize>),
    Sampled,
}

pub(crate) struct Session<'a> {
    pub space: &'a DesignSpace,
    pub workload: &'a LayerWorkload,
    pub config: &'a TunerConfig,
    strategy: Strategy,
    measured: HashMap<usize, Measurement>,
    records: Vec<(FeatureVector, f64)>,
    trials: Vec<TrialRecord>,
    best: Option<(Configuration, Measurement)>,
    pool: ValidPool,
    valid_total: Option<usize>,
    started: Instant,
}

impl<'a> Session<'a> {
    pub fn new(space: &'a DesignSpace, workload: &'a LayerWorkload, config: &'a TunerConfig, strategy: Strategy) -> Result<Self> {
        config.check()?;
        let (pool, valid_total) = if space.total_size() <= ENUMERATE_LIMIT {
            let list: Vec<usize> = space
                .iter()
                .enumerate()
                .filter(|(_, c)| space.is_valid(c, workload))
                .map(|(i, _)| i)
                .collect();
            let n = list.len();
            (ValidPool::Listed(list), Some(n))
        } else {
            (ValidPool::Sampled, None)
        };
        if valid_total == Some(0) {
            return Err(Error::NoValidConfiguration(workload.name.clone()));
        }
        Ok(Self {
            space,
            workload,
            config,
            strategy,
            measured: HashMap::new(),
            records: Vec::new(),
            trials: Vec::new(),
            best: None,
            pool,
            valid_total,
            started: Instant::now(),
        })
    }

    /// Measurements still allowed, also bounded by the valid configurations
    /// not yet measured.
    pub fn remaining(&self) -> usize {
        let budget_left = self.config.budget - self.trials.len();
        match self.valid_total {
            Some(n) => budget_left.min(n - self.measured.len()),
            None => budget_left,
        }
    }

    pub fn is_measured(&self, index: usize) -> bool {
        self.measured.contains_key(&index)
    }

    pub fn measurement(&self, index: usize) -> Option<&Measurement> {
        self.measured.get(&index)
    }

    /// Largest measured |fitness|; 1 before anything is measured.
    pub fn fitness_scale(&self) -> f64 {
        let s = self.records.iter().map(|(_, f)| f.abs()).fold(0.0, f64::max);
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }

    pub fn fit_surrogate(&self) -> Result<SurrogateModel> {
        surrogate::fit(&self.records, &self.config.boost)
    }

    /// A random valid configuration not measured yet.
    pub fn draw_unmeasured(&mut self, rng: &mut impl Rng, exclude: &HashSet<usize>) -> Option<usize> {
        if self.remaining() == 0 {
            return None;
        }
        match &mut self.pool {
            ValidPool::Listed(list) => {
                // Measured entries are dropped lazily; excluded ones are kept.
                let mut skipped = Vec::new();
                let mut found = None;
                while !list.is_empty() {
                    let i = list.swap_remove(rng.random_range(0..list.len()));
                    if self.measured.contains_key(&i) {
                        continue;
                    }
                    if exclude.contains(&i) {
                        skipped.push(i);
                        continue;
                    }
                    found = Some(i);
                    break;
                }
                list.extend(skipped);
                if let Some(i) = found {
                    list.push(i);
                }
                found
            }
            ValidPool::Sampled => {
                let total = self.space.total_size();
                for _ in 0..100_000 {
                    let i = rng.random_range(0..total);
                    if self.measured.contains_key(&i) || exclude.contains(&i) {
                        continue;
                    }
                    let cfg = self.space.config_at(i).ok()?;
                    if self.space.is_valid(&cfg, self.workload) {
                        return Some(i);
                    }
                }
                None
            }
        }
    }

    /// Measures one configuration. Panics if it was measured before, is
    /// invalid or the budget is spent; strategies must check first.
    pub fn measure(&mut self, index: usize, predicted: Option<f64>) -> Result<Measurement> {
        assert!(self.remaining() > 0, "measurement budget exhausted");
        assert!(!self.measured.contains_key(&index), "configuration {index} measured twice");
        let cfg = self.space.config_at(index)?;
        let seed = self.config.seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let m = oracle::measure(self.space, self.workload, &cfg, &self.config.oracle, &self.config.constraints, seed);
        assert!(m.valid, "configuration {index} is invalid");
        self.measured.insert(index, m);
        self.records.push((surrogate::features(self.space, self.workload, &cfg), m.fitness));
        if self.best.as_ref().is_none_or(|(_, b)| m.fitness > b.fitness) {
            self.best = Some((cfg, m));
        }
        let best_fitness = self.best.as_ref().map(|(_, b)| b.fitness).unwrap_or(m.fitness);
        let t_wall_s = if self.config.record_wall_clock { self.started.elapsed().as_secs_f64() } else { 0.0 };
        self.trials.push(TrialRecord {
            trial: self.trials.len(),
            config: self.space.named_values(&cfg),
            predicted,
            latency_s: m.latency,
            gflops: m.gflops,
            fitness: m.fitness,
            best_fitness,
            t_wall_s,
        });
        Ok(m)
    }

    /// Measures `b` (at most the remaining budget) random valid
    /// configurations.
    pub fn measure_random(&mut self, b: usize, rng: &mut impl Rng) -> Result<()> {
        let none = HashSet::new();
        for _ in 0..b {
            match self.draw_unmeasured(rng, &none) {
                Some(i) => {
                    self.measure(i, None)?;
                }
                None => break,
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<TuneOutcome> {
        let (best_config, best) = self.best.ok_or_else(|| Error::NoValidConfiguration(self.workload.name.clone()))?;
        let wall_seconds = if self.config.record_wall_clock { self.started.elapsed().as_secs_f64() } else { 0.0 };
        Ok(TuneOutcome {
            layer: self.workload.name.clone(),
            strategy: self.strategy,
            seed: self.config.seed,
            best_values: self.space.named_values(&best_config),
            best_config,
            best,
            measurements: self.trials.len(),
            trials: self.trials,
            wall_seconds,
        })
    }
}

/// Orders `indices` by descending prediction, ties by index.
pub(crate) fn by_prediction(mut scored: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored
}
