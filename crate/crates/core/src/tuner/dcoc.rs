use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::session::{by_prediction, Session};
use super::{Learners, Scorer, Strategy, TuneOutcome, TunerConfig};
use crate::error::Result;
use crate::explore::{self, ExploreParams, RewardContext};
use crate::knobspace::{Configuration, DesignSpace, LayerWorkload};
use crate::mappo;
use crate::sampling;

/// Multi-agent search on one layer with fresh agents and critic.
pub fn tune_layer_dcoc(space: &DesignSpace, workload: &LayerWorkload, config: &TunerConfig) -> Result<TuneOutcome> {
    tune_layer_dcoc_warm(space, workload, config, &mut None)
}

/// As [`tune_layer_dcoc`], starting from `learners` when present and leaving
/// the trained agents and critic there afterwards.
pub fn tune_layer_dcoc_warm(
    space: &DesignSpace,
    workload: &LayerWorkload,
    config: &TunerConfig,
    learners: &mut Option<Learners>,
) -> Result<TuneOutcome> {
    let mut session = Session::new(space, workload, config, Strategy::Dcoc)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let Learners { mut agents, mut critic } = match learners.take() {
        Some(l) => l,
        None => Learners { agents: explore::make_agents(&mut rng)?, critic: explore::make_critic(&mut rng)? },
    };
    let explore_params = ExploreParams { episodes: config.episodes, steps: config.steps, hyper: config.hyper.clone() };

    session.measure_random(config.batch, &mut rng)?;

    for _ in 0..config.iteration_opt {
        if session.remaining() == 0 {
            break;
        }
        let model = session.fit_surrogate()?;
        let scale = session.fitness_scale();
        let ctx = RewardContext::new(space, workload, Some(&model), &config.oracle, &config.constraints).with_scale(scale);
        let exploration = explore::run_exploration(&ctx, &mut agents, &mut critic, &explore_params, &mut rng)?;

        let candidates: Vec<Configuration> = exploration.candidates.iter().map(|c| c.config).collect();
        let sampled = match config.scorer {
            Scorer::Critic => sampling::confidence_sampling(
                space,
                workload,
                &candidates,
                |c| critic.forward(&explore::critic_state(space, c, workload)).map(|v| v[0]).unwrap_or(f64::NEG_INFINITY),
                config.batch,
                &mut rng,
            )?,
            Scorer::Surrogate => sampling::confidence_sampling(
                space,
                workload,
                &candidates,
                |c| explore::step_reward(&ctx, c),
                config.batch,
                &mut rng,
            )?,
        };

        // Deduplicate, then top up from the best unmeasured candidates and
        // finally from random valid configurations.
        let take = config.batch.min(session.remaining());
        let mut chosen: Vec<usize> = Vec::with_capacity(take);
        let mut seen = HashSet::new();
        let admit = |i: usize, chosen: &mut Vec<usize>, seen: &mut HashSet<usize>, session: &Session| {
            if chosen.len() < take && !session.is_measured(i) && seen.insert(i) {
                chosen.push(i);
            }
        };
        for s in &sampled {
            if space.is_valid(&s.config, workload) {
                admit(space.index_of(&s.config)?, &mut chosen, &mut seen, &session);
            }
        }
        if chosen.len() < take {
            let ranked = by_prediction(exploration.candidates.iter().map(|c| (c.index, c.score)).collect());
            for (i, _) in ranked {
                admit(i, &mut chosen, &mut seen, &session);
            }
        }
        while chosen.len() < take {
            match session.draw_unmeasured(&mut rng, &seen) {
                Some(i) => admit(i, &mut chosen, &mut seen, &session),
                None => break,
            }
        }

        let predicted: Vec<(usize, f64)> = chosen
            .iter()
            .map(|&i| Ok((i, ctx.predicted_fitness(&space.config_at(i)?))))
            .collect::<Result<_>>()?;
        for (i, p) in by_prediction(predicted) {
            session.measure(i, Some(p))?;
        }

        // Feed the measurements back into the last episode and update once
        // more on the corrected rewards.
        if let Some(episode) = exploration.episodes.last() {
            let mut batch = episode.batch.clone();
            let mut changed = false;
            for ((t, &next), &ok) in batch.transitions.iter_mut().zip(&episode.next_indices).zip(&episode.accepted) {
                if !ok || !seen.contains(&next) {
                    continue;
                }
                let Some(m) = session.measurement(next) else { continue };
                t.reward = (m.fitness - m.penalty) / scale;
                changed = true;
            }
            if changed {
                refresh(&mut batch, &agents, &critic, space, workload, &episode.next_indices)?;
                batch.compute_advantages(config.hyper.gamma, config.hyper.gae_lambda)?;
                mappo::update(&mut agents, &mut critic, &batch, &config.hyper)?;
            }
        }
    }

    *learners = Some(Learners { agents, critic });
    session.finish()
}

/// Re-evaluates values and behavior log-probs under the current networks.
fn refresh(
    batch: &mut mappo::TrajectoryBatch,
    agents: &[mappo::Agent],
    critic: &crate::neural::DenseNet,
    space: &DesignSpace,
    workload: &LayerWorkload,
    next_indices: &[usize],
) -> Result<()> {
    for t in &mut batch.transitions {
        t.value = critic.forward(&t.state)?[0];
        for (step, agent) in t.agents.iter_mut().zip(agents) {
            step.log_prob = agent.log_prob(&step.observation, &step.actions)?;
        }
    }
    if let Some(&last) = next_indices.last() {
        let cfg = space.config_at(last)?;
        batch.bootstrap_value = critic.forward(&explore::critic_state(space, &cfg, workload))?[0];
    }
    Ok(())
}
