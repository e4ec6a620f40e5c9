use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::session::{by_prediction, Session};
use super::{Strategy, TuneOutcome, TunerConfig};
use crate::error::Result;
use crate::explore::{apply_actions, random_valid_config, step_reward, RewardContext, Step};
use crate::knobspace::{Configuration, DesignSpace, Knob, LayerWorkload};

/// Uniform random valid configurations, or every valid configuration in
/// index order when `config.exhaustive` is set.
pub fn tune_layer_random(space: &DesignSpace, workload: &LayerWorkload, config: &TunerConfig) -> Result<TuneOutcome> {
    let mut session = Session::new(space, workload, config, Strategy::Random)?;
    if config.exhaustive {
        for (i, cfg) in space.iter().enumerate() {
            if session.remaining() == 0 {
                break;
            }
            if space.is_valid(&cfg, workload) {
                session.measure(i, None)?;
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        session.measure_random(config.budget, &mut rng)?;
    }
    session.finish()
}

/// Metropolis rule.
pub fn acceptance_probability(delta: f64, temperature: f64) -> f64 {
    if delta >= 0.0 {
        1.0
    } else if temperature <= 0.0 {
        0.0
    } else {
        (delta / temperature).exp()
    }
}

/// Anneals every chain for `steps` steps. A neighbor moves one random knob
/// one index up or down; `score` returns `None` for configurations that
/// must not be entered. Returns the final scores.
pub fn anneal(
    space: &DesignSpace,
    chains: &mut [Configuration],
    mut score: impl FnMut(&Configuration) -> Option<f64>,
    temperature: impl Fn(usize) -> f64,
    steps: usize,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let movable: Vec<Knob> = Knob::ALL.into_iter().filter(|&k| space.knob(k).len() > 1).collect();
    let mut current: Vec<f64> = chains.iter().map(|c| score(c).unwrap_or(f64::NEG_INFINITY)).collect();
    if movable.is_empty() {
        return current;
    }
    for k in 0..steps {
        let t = temperature(k);
        for (c, cur) in chains.iter_mut().zip(current.iter_mut()) {
            let knob = movable[rng.random_range(0..movable.len())];
            let step = if rng.random_bool(0.5) { Step::Increment } else { Step::Decrement };
            let next = apply_actions(space, c, [(knob, step)]);
            let Some(s) = score(&next) else { continue };
            if rng.random::<f64>() < acceptance_probability(s - *cur, t) {
                *c = next;
                *cur = s;
            }
        }
    }
    current
}

/// Simulated annealing over the surrogate: each iteration anneals the chains
/// from where they stopped, then measures the best unmeasured endpoints.
pub fn tune_layer_sa(space: &DesignSpace, workload: &LayerWorkload, config: &TunerConfig) -> Result<TuneOutcome> {
    let mut session = Session::new(space, workload, config, Strategy::Sa)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    session.measure_random(config.batch, &mut rng)?;
    let mut chains: Vec<Configuration> =
        (0..config.sa.chains).map(|_| random_valid_config(space, workload, &mut rng)).collect::<Result<_>>()?;

    while session.remaining() > 0 {
        let model = session.fit_surrogate()?;
        let ctx = RewardContext::new(space, workload, Some(&model), &config.oracle, &config.constraints)
            .with_scale(session.fitness_scale());
        let mut cache: HashMap<usize, f64> = HashMap::new();
        let finals = anneal(
            space,
            &mut chains,
            |c| {
                if !space.is_valid(c, workload) {
                    return None;
                }
                let i = space.index_of(c).ok()?;
                Some(*cache.entry(i).or_insert_with(|| step_reward(&ctx, c)))
            },
            |k| config.sa.temperature(k),
            config.sa.steps,
            &mut rng,
        );

        let take = config.batch.min(session.remaining());
        let mut chosen = Vec::with_capacity(take);
        let mut seen = HashSet::new();
        let endpoints = chains.iter().zip(&finals).map(|(c, &s)| Ok((space.index_of(c)?, s))).collect::<Result<Vec<_>>>()?;
        let visited: Vec<(usize, f64)> = cache.iter().map(|(&i, &s)| (i, s)).collect();
        for (i, _) in by_prediction(endpoints).into_iter().chain(by_prediction(visited)) {
            if chosen.len() == take {
                break;
            }
            if !session.is_measured(i) && seen.insert(i) {
                chosen.push(i);
            }
        }
        while chosen.len() < take {
            match session.draw_unmeasured(&mut rng, &seen) {
                Some(i) => {
                    seen.insert(i);
                    chosen.push(i);
                }
                None => break,
            }
        }
        if chosen.is_empty() {
            break;
        }
        let predicted: Vec<(usize, f64)> =
            chosen.iter().map(|&i| Ok((i, ctx.predicted_fitness(&space.config_at(i)?)))).collect::<Result<_>>()?;
        for (i, p) in by_prediction(predicted) {
            session.measure(i, Some(p))?;
        }
    }
    session.finish()
}
