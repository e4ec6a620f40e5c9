//! Multi-agent PPO with a centralized critic.
//!
//! Each agent owns a policy over its own knobs and is updated with the
//! clipped surrogate objective; all agents share one advantage signal from
//! the centralized critic, which regresses onto GAE returns.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::knobspace::{AgentId, Knob};
use crate::neural::{categorical_sample, DenseNet, Gradients};

/// Actions per knob head: decrement, hold, increment.
pub const ACTIONS_PER_KNOB: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub epochs: usize,
    pub policy_lr: f64,
    pub critic_lr: f64,
    pub normalize_advantages: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            epochs: 4,
            policy_lr: 1e-3,
            critic_lr: 1e-3,
            normalize_advantages: true,
        }
    }
}

impl HyperParams {
    pub fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return invalid("gamma and gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_eps > 0.0) {
            return invalid("clip_eps must be positive");
        }
        if !(self.policy_lr >= 0.0 && self.critic_lr >= 0.0) {
            return invalid("learning rates must be non-negative");
        }
        Ok(())
    }
}

/// One agent's part of a transition.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentStep {
    pub observation: Vec<f64>,
    /// One action index per owned knob.
    pub actions: Vec<usize>,
    /// Log-probability under the behavior policy.
    pub log_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Critic input.
    pub state: Vec<f64>,
    /// Indexed like the agent list.
    pub agents: Vec<AgentStep>,
    pub reward: f64,
    /// Critic value of `state` at collection time.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryBatch {
    pub transitions: Vec<Transition>,
    /// Critic value of the state after the last transition.
    pub bootstrap_value: f64,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl TrajectoryBatch {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.reward).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.value).collect()
    }

    /// Fills advantages and returns from the stored rewards and values.
    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) -> Result<()> {
        let values = self.values();
        self.advantages = gae(&self.rewards(), &values, self.bootstrap_value, gamma, lambda)?;
        self.returns = returns(&self.advantages, &values);
        Ok(())
    }
}

/// Recursive GAE: `A_t = delta_t + gamma * lambda * A_{t+1}`, with
/// `bootstrap` standing in for the value after the last step.
pub fn gae(rewards: &[f64], values: &[f64], bootstrap: f64, gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    if rewards.len() != values.len() {
        return invalid(format!("{} rewards but {} values", rewards.len(), values.len()));
    }
    let mut adv = vec![0.0; rewards.len()];
    let mut next_value = bootstrap;
    let mut running = 0.0;
    for t in (0..rewards.len()).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
        next_value = values[t];
    }
    Ok(adv)
}

/// Critic targets `R_t = A_t + V_t`.
pub fn returns(advantages: &[f64], values: &[f64]) -> Vec<f64> {
    assert_eq!(advantages.len(), values.len(), "advantages and values differ in length");
    advantages.iter().zip(values).map(|(a, v)| a + v).collect()
}

/// Mean squared error between predicted values and targets.
pub fn critic_loss(predicted: &[f64], targets: &[f64]) -> Result<f64> {
    if predicted.is_empty() || predicted.len() != targets.len() {
        return invalid("critic loss needs equal-length, non-empty inputs");
    }
    Ok(predicted.iter().zip(targets).map(|(v, r)| (v - r) * (v - r)).sum::<f64>() / predicted.len() as f64)
}

/// Clipped surrogate `min(r A, clip(r, 1-eps, 1+eps) A)` with
/// `r = exp(new - old)`.
pub fn policy_objective(log_prob_new: f64, log_prob_old: f64, advantage: f64, eps: f64) -> f64 {
    let ratio = (log_prob_new - log_prob_old).exp();
    clipped_objective(ratio, advantage, eps)
}

/// The clipped surrogate as a function of the probability ratio.
pub fn clipped_objective(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    (ratio * advantage).min(clipped * advantage)
}

/// d objective / d log_prob_new. Zero inside the clip region.
pub fn policy_objective_grad(log_prob_new: f64, log_prob_old: f64, advantage: f64, eps: f64) -> f64 {
    let ratio = (log_prob_new - log_prob_old).exp();
    let unclipped_active = if advantage >= 0.0 { ratio <= 1.0 + eps } else { ratio >= 1.0 - eps };
    if unclipped_active {
        ratio * advantage
    } else {
        0.0
    }
}

/// Zero-mean, unit-variance copy; all zeros when the spread vanishes.
pub fn normalize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    if values.is_empty() {
        return Vec::new();
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / std).collect()
}

/// A decentralized actor: a factored categorical policy over its knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: AgentId,
    pub knobs: Vec<Knob>,
    pub policy: DenseNet,
}

impl Agent {
    pub fn new(id: AgentId, knobs: Vec<Knob>, observation_len: usize, rng: &mut impl Rng) -> Result<Self> {
        let policy = DenseNet::policy(observation_len, vec![ACTIONS_PER_KNOB; knobs.len()], rng)?;
        Ok(Self { id, knobs, policy })
    }

    /// Per-knob action probabilities, concatenated.
    pub fn probabilities(&self, observation: &[f64]) -> Result<Vec<f64>> {
        self.policy.forward(observation)
    }

    /// Samples one action per knob; returns the actions and their joint
    /// log-probability.
    pub fn act(&self, observation: &[f64], rng: &mut impl Rng) -> Result<(Vec<usize>, f64)> {
        let probs = self.probabilities(observation)?;
        let mut actions = Vec::with_capacity(self.knobs.len());
        let mut log_prob = 0.0;
        for head in probs.chunks_exact(ACTIONS_PER_KNOB) {
            let a = categorical_sample(head, rng)?;
            log_prob += head[a].ln();
            actions.push(a);
        }
        Ok((actions, log_prob))
    }

    /// Joint log-probability of `actions` (sum over knob heads).
    pub fn log_prob(&self, observation: &[f64], actions: &[usize]) -> Result<f64> {
        let probs = self.probabilities(observation)?;
        Self::check_actions(actions, probs.len())?;
        Ok(actions.iter().enumerate().map(|(k, &a)| probs[k * ACTIONS_PER_KNOB + a].ln()).sum())
    }

    fn check_actions(actions: &[usize], outputs: usize) -> Result<()> {
        if actions.len() * ACTIONS_PER_KNOB != outputs || actions.iter().any(|&a| a >= ACTIONS_PER_KNOB) {
            return invalid("action vector does not match the policy heads");
        }
        Ok(())
    }

    /// Gradient of `coeff * log pi(actions | observation)`.
    fn log_prob_grad(&self, observation: &[f64], actions: &[usize], coeff: f64) -> Result<(f64, Gradients)> {
        let probs = self.probabilities(observation)?;
        Self::check_actions(actions, probs.len())?;
        let mut upstream = vec![0.0; probs.len()];
        let mut log_prob = 0.0;
        for (k, &a) in actions.iter().enumerate() {
            let i = k * ACTIONS_PER_KNOB + a;
            upstream[i] = coeff / probs[i];
            log_prob += probs[i].ln();
        }
        Ok((log_prob, self.policy.grad(observation, &upstream)?))
    }
}

/// The three agents in canonical order, each owning its knobs.
pub fn make_agents(observation_len: impl Fn(usize) -> usize, rng: &mut impl Rng) -> Result<Vec<Agent>> {
    AgentId::ALL
        .into_iter()
        .map(|id| {
            let knobs: Vec<Knob> = Knob::ALL.into_iter().filter(|k| k.owner() == id).collect();
            let len = observation_len(knobs.len());
            Agent::new(id, knobs, len, rng)
        })
        .collect()
}

pub fn critic_values(critic: &DenseNet, batch: &TrajectoryBatch) -> Result<Vec<f64>> {
    batch.transitions.iter().map(|t| Ok(critic.forward(&t.state)?[0])).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss_before: f64,
    pub critic_loss_after: f64,
    /// Mean clipped objective per agent before the first epoch.
    pub policy_objective_before: [f64; 3],
}

/// Runs `epochs` passes of full-batch gradient steps: the critic descends
/// the MSE to the returns, and every agent ascends its mean clipped
/// objective under the shared advantages.
pub fn update(
    agents: &mut [Agent],
    critic: &mut DenseNet,
    batch: &TrajectoryBatch,
    hyper: &HyperParams,
) -> Result<UpdateStats> {
    let n = batch.len();
    if n == 0 {
        return invalid("cannot update on an empty batch");
    }
    if batch.advantages.len() != n || batch.returns.len() != n {
        return invalid("advantages and returns must be computed before the update");
    }
    if batch.transitions.iter().any(|t| t.agents.len() != agents.len()) {
        return invalid("transition agent count differs from the agent list");
    }
    let advantages = if hyper.normalize_advantages { normalize(&batch.advantages) } else { batch.advantages.clone() };
    let inv_n = 1.0 / n as f64;

    let critic_loss_before = critic_loss(&critic_values(critic, batch)?, &batch.returns)?;
    let mut policy_objective_before = [0.0; 3];
    for (slot, (a, agent)) in policy_objective_before.iter_mut().zip(agents.iter().enumerate()) {
        let mut total = 0.0;
        for (t, adv) in batch.transitions.iter().zip(&advantages) {
            let step = &t.agents[a];
            let lp = agent.log_prob(&step.observation, &step.actions)?;
            total += policy_objective(lp, step.log_prob, *adv, hyper.clip_eps);
        }
        *slot = total * inv_n;
    }

    for _ in 0..hyper.epochs {
        let mut critic_grad = Gradients::zeros_like(critic);
        for (t, target) in batch.transitions.iter().zip(&batch.returns) {
            let v = critic.forward(&t.state)?[0];
            critic_grad.add_scaled(&critic.grad(&t.state, &[2.0 * (v - target) * inv_n])?, 1.0);
        }
        critic.sgd_step(&critic_grad, hyper.critic_lr);

        for (a, agent) in agents.iter_mut().enumerate() {
            let mut grad = Gradients::zeros_like(&agent.policy);
            let mut any = false;
            for (t, adv) in batch.transitions.iter().zip(&advantages) {
                let step = &t.agents[a];
                let lp = agent.log_prob(&step.observation, &step.actions)?;
                let d_obj = policy_objective_grad(lp, step.log_prob, *adv, hyper.clip_eps);
                if d_obj == 0.0 {
                    continue;
                }
                // Descend the negated objective.
                let (_, g) = agent.log_prob_grad(&step.observation, &step.actions, -d_obj * inv_n)?;
                grad.add_scaled(&g, 1.0);
                any = true;
            }
            if any {
                agent.policy.sgd_step(&grad, hyper.policy_lr);
            }
        }
    }

    let critic_loss_after = critic_loss(&critic_values(critic, batch)?, &batch.returns)?;
    Ok(UpdateStats { critic_loss_before, critic_loss_after, policy_objective_before })
}
