//! Multi-agent rollout over the knob space.
//!
//! Each episode starts from a random valid configuration. At every step the
//! three agents move their own knobs by one index (or hold), the surrogate
//! scores the result, and the transition is recorded for a MAPPO update at
//! the end of the episode. Moves that land on an invalid configuration are
//! rejected: the agents receive the invalid reward and stay where they were.

use std::collections::{BTreeMap, HashMap};

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::knobspace::{AgentId, Configuration, DesignSpace, Knob, LayerWorkload, NUM_KNOBS};
use crate::mappo::{self, Agent, AgentStep, HyperParams, TrajectoryBatch, Transition};
use crate::neural::DenseNet;
use crate::oracle::{self, Constraints, OracleParams};
use crate::surrogate::{self, SurrogateModel};

/// Reward for proposing an invalid configuration.
pub const INVALID_REWARD: f64 = -1.0;

/// Length of the critic's state vector.
pub const STATE_LEN: usize = NUM_KNOBS + 6;

/// Divisor for the log2 layer descriptor in network inputs, keeping it on
/// the same scale as the normalized knob indices.
pub const DESCRIPTOR_SCALE: f64 = 16.0;

fn scaled_descriptor(workload: &LayerWorkload) -> impl Iterator<Item = f64> {
    workload.descriptor().into_iter().map(|d| d / DESCRIPTOR_SCALE)
}

/// Observation length for an agent owning `own_knobs` knobs.
pub fn observation_len(own_knobs: usize) -> usize {
    own_knobs + STATE_LEN
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Step {
    Decrement,
    Hold,
    Increment,
}

impl Step {
    pub const ALL: [Step; 3] = [Step::Decrement, Step::Hold, Step::Increment];

    pub fn from_action(action: usize) -> Result<Step> {
        Step::ALL.get(action).copied().ok_or_else(|| Error::InvalidArgument(format!("action {action} out of range")))
    }

    pub fn action(self) -> usize {
        self as usize
    }

    fn delta(self) -> isize {
        self as isize - 1
    }
}

fn normalized_all<'a>(space: &'a DesignSpace, cfg: &Configuration) -> impl Iterator<Item = f64> + 'a {
    let cfg = *cfg;
    Knob::ALL.into_iter().map(move |k| space.normalized(&cfg, k))
}

/// Own knobs, then all knobs (normalized indices), then the scaled layer
/// descriptor.
pub fn encode_observation(space: &DesignSpace, cfg: &Configuration, workload: &LayerWorkload, agent: AgentId) -> Vec<f64> {
    let mut obs: Vec<f64> = space.agent_knobs(agent).into_iter().map(|k| space.normalized(cfg, k)).collect();
    obs.extend(normalized_all(space, cfg));
    obs.extend(scaled_descriptor(workload));
    obs
}

/// Critic input: all knobs (normalized indices) then the scaled layer
/// descriptor.
pub fn critic_state(space: &DesignSpace, cfg: &Configuration, workload: &LayerWorkload) -> Vec<f64> {
    let mut state: Vec<f64> = normalized_all(space, cfg).collect();
    state.extend(scaled_descriptor(workload));
    state
}

/// Moves each listed knob one index, clipped to its value list.
pub fn apply_actions(space: &DesignSpace, cfg: &Configuration, moves: impl IntoIterator<Item = (Knob, Step)>) -> Configuration {
    let mut next = *cfg;
    for (knob, step) in moves {
        let top = space.knob(knob).len() as isize - 1;
        let idx = (cfg.index(knob) as isize + step.delta()).clamp(0, top);
        next.set(knob, idx as usize);
    }
    next
}

/// Everything a reward needs. Rewards are divided by `scale` so that the
/// invalid reward of -1 is commensurate with valid ones.
#[derive(Debug, Clone, Copy)]
pub struct RewardContext<'a> {
    pub space: &'a DesignSpace,
    pub workload: &'a LayerWorkload,
    /// Without a model the true oracle fitness is used.
    pub model: Option<&'a SurrogateModel>,
    pub params: &'a OracleParams,
    pub constraints: &'a Constraints,
    pub scale: f64,
}

impl<'a> RewardContext<'a> {
    pub fn new(
        space: &'a DesignSpace,
        workload: &'a LayerWorkload,
        model: Option<&'a SurrogateModel>,
        params: &'a OracleParams,
        constraints: &'a Constraints,
    ) -> Self {
        Self { space, workload, model, params, constraints, scale: 1.0 }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    /// Predicted (or, without a model, true) fitness of a valid config.
    pub fn predicted_fitness(&self, cfg: &Configuration) -> f64 {
        match self.model {
            Some(m) => m.predict_unchecked(&surrogate::features(self.space, self.workload, cfg).0),
            None => oracle::measure(self.space, self.workload, cfg, self.params, self.constraints, 0).fitness,
        }
    }
}

/// `(prediction - penalty) / scale` for valid configs, `INVALID_REWARD`
/// otherwise.
pub fn step_reward(ctx: &RewardContext, cfg: &Configuration) -> f64 {
    if !ctx.space.is_valid(cfg, ctx.workload) {
        return INVALID_REWARD;
    }
    let p = oracle::config_penalty(ctx.space, ctx.workload, cfg, ctx.params, ctx.constraints);
    (ctx.predicted_fitness(cfg) - p) / ctx.scale
}

/// A uniformly random valid configuration.
pub fn random_valid_config(space: &DesignSpace, workload: &LayerWorkload, rng: &mut impl Rng) -> Result<Configuration> {
    const ATTEMPTS: usize = 4096;
    let total = space.total_size();
    for _ in 0..ATTEMPTS {
        let cfg = space.config_at(rng.random_range(0..total))?;
        if space.is_valid(&cfg, workload) {
            return Ok(cfg);
        }
    }
    let valid: Vec<Configuration> = space.iter().filter(|c| space.is_valid(c, workload)).collect();
    valid
        .choose(rng)
        .copied()
        .ok_or_else(|| Error::NoValidConfiguration(workload.name.clone()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploreParams {
    pub episodes: usize,
    pub steps: usize,
    pub hyper: HyperParams,
}

impl Default for ExploreParams {
    fn default() -> Self {
        Self { episodes: 16, steps: 32, hyper: HyperParams::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub index: usize,
    pub config: Configuration,
    pub score: f64,
}

/// One episode's batch plus the configuration index reached after each
/// transition (the start index when a move was rejected).
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub batch: TrajectoryBatch,
    pub next_indices: Vec<usize>,
    /// Whether each move landed on a valid configuration.
    pub accepted: Vec<bool>,
    /// Mean score over the valid configurations visited, start included.
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationResult {
    /// Visited valid configurations, by index, with their scores.
    pub candidates: Vec<Candidate>,
    pub episodes: Vec<Episode>,
    pub best_score: f64,
}

/// The three agents with freshly initialized policies.
pub fn make_agents(rng: &mut impl Rng) -> Result<Vec<Agent>> {
    mappo::make_agents(observation_len, rng)
}

pub fn make_critic(rng: &mut impl Rng) -> Result<DenseNet> {
    DenseNet::critic(STATE_LEN, rng)
}

struct Scorer<'a> {
    ctx: &'a RewardContext<'a>,
    cache: HashMap<usize, f64>,
}

impl Scorer<'_> {
    fn score(&mut self, index: usize, cfg: &Configuration) -> f64 {
        *self.cache.entry(index).or_insert_with(|| step_reward(self.ctx, cfg))
    }
}

/// Runs `episodes` rollouts of at most `steps` moves, updating the agents
/// and critic after each one.
pub fn run_exploration(
    ctx: &RewardContext,
    agents: &mut [Agent],
    critic: &mut DenseNet,
    params: &ExploreParams,
    rng: &mut impl Rng,
) -> Result<ExplorationResult> {
    if params.episodes == 0 || params.steps == 0 {
        return invalid("episodes and steps must be at least 1");
    }
    if agents.len() != AgentId::ALL.len() {
        return invalid("exploration needs one agent per role");
    }
    params.hyper.check()?;
    let (space, workload) = (ctx.space, ctx.workload);
    let mut scorer = Scorer { ctx, cache: HashMap::new() };
    let mut visited: BTreeMap<usize, Candidate> = BTreeMap::new();
    let mut episodes = Vec::with_capacity(params.episodes);

    for _ in 0..params.episodes {
        let mut cfg = random_valid_config(space, workload, rng)?;
        let mut index = space.index_of(&cfg)?;
        let mut score = scorer.score(index, &cfg);
        visited.entry(index).or_insert(Candidate { index, config: cfg, score });
        let mut score_sum = score;
        let mut score_count = 1usize;

        let mut transitions = Vec::with_capacity(params.steps);
        let mut next_indices = Vec::with_capacity(params.steps);
        let mut accepted = Vec::with_capacity(params.steps);
        for _ in 0..params.steps {
            let state = critic_state(space, &cfg, workload);
            let value = critic.forward(&state)?[0];
            let mut steps = Vec::with_capacity(agents.len());
            let mut moves = Vec::with_capacity(NUM_KNOBS);
            for agent in agents.iter() {
                let observation = encode_observation(space, &cfg, workload, agent.id);
                let (actions, log_prob) = agent.act(&observation, rng)?;
                for (&knob, &a) in agent.knobs.iter().zip(&actions) {
                    moves.push((knob, Step::from_action(a)?));
                }
                steps.push(AgentStep { observation, actions, log_prob });
            }
            let next = apply_actions(space, &cfg, moves);
            let ok = space.is_valid(&next, workload);
            let reward = if ok {
                cfg = next;
                index = space.index_of(&cfg)?;
                score = scorer.score(index, &cfg);
                visited.entry(index).or_insert(Candidate { index, config: cfg, score });
                score_sum += score;
                score_count += 1;
                score
            } else {
                INVALID_REWARD
            };
            transitions.push(Transition { state, agents: steps, reward, value });
            next_indices.push(index);
            accepted.push(ok);
        }

        let bootstrap_value = critic.forward(&critic_state(space, &cfg, workload))?[0];
        let mut batch = TrajectoryBatch { transitions, bootstrap_value, ..Default::default() };
        batch.compute_advantages(params.hyper.gamma, params.hyper.gae_lambda)?;
        mappo::update(agents, critic, &batch, &params.hyper)?;
        episodes.push(Episode { batch, next_indices, accepted, mean_score: score_sum / score_count as f64 });
    }

    let candidates: Vec<Candidate> = visited.into_values().collect();
    let best_score = candidates.iter().map(|c| c.score).fold(f64::NEG_INFINITY, f64::max);
    Ok(ExplorationResult { candidates, episodes, best_score })
}
