//! Confidence sampling and the uniform baseline.
//!
//! Candidates are scored, turned into a softmax distribution and drawn
//! without replacement. Draws scoring strictly above the median of all
//! scores are kept; every other draw is replaced by a configuration built
//! from the per-knob modes of the kept ones.

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::knobspace::{Configuration, DesignSpace, Knob, LayerWorkload};
use crate::neural::{categorical_sample, softmax};

/// Why a configuration ended up in the sampled set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    /// Drawn, and scored strictly above the median.
    AboveMedian,
    /// Replacement built from per-knob modes.
    Synthesized,
    /// Returned because neither of the above applied.
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sampled {
    pub config: Configuration,
    /// Scorer output; `None` for synthesized configurations.
    pub score: Option<f64>,
    pub tag: Tag,
}

/// Draws `n` distinct indices, each draw categorical over the remaining
/// weights renormalized.
pub fn select_configurations(probs: &[f64], n: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if n > probs.len() {
        return invalid(format!("cannot select {n} of {} items", probs.len()));
    }
    if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return invalid("probabilities must be finite and non-negative");
    }
    let mut remaining: Vec<usize> = (0..probs.len()).collect();
    let mut chosen = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(probs.len());
    for _ in 0..n {
        let total: f64 = remaining.iter().map(|&i| probs[i]).sum();
        let pick = if total > 0.0 {
            weights.clear();
            weights.extend(remaining.iter().map(|&i| probs[i] / total));
            categorical_sample(&weights, rng)?
        } else {
            rng.random_range(0..remaining.len())
        };
        chosen.push(remaining.remove(pick));
    }
    Ok(chosen)
}

/// Median; mean of the two middle values for even counts.
pub fn compute_dynamic_threshold(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return invalid("threshold of an empty score list");
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Ok(if sorted.len() % 2 == 1 { sorted[mid] } else { (sorted[mid - 1] + sorted[mid]) / 2.0 })
}

/// Per knob, the most frequent index; ties go to the smaller index.
pub fn synthesize_mode(configs: &[Configuration], space: &DesignSpace) -> Result<Configuration> {
    if configs.is_empty() {
        return invalid("cannot synthesize from no configurations");
    }
    for cfg in configs {
        space.check(cfg)?;
    }
    let mut out = Configuration::zeros();
    for knob in Knob::ALL {
        let mut counts = vec![0usize; space.knob(knob).len()];
        for cfg in configs {
            counts[cfg.index(knob)] += 1;
        }
        // max_by_key keeps the last maximum, so scan from the top down.
        let best = (0..counts.len()).rev().max_by_key(|&i| counts[i]).unwrap_or(0);
        out.set(knob, best);
    }
    Ok(out)
}

/// `n` configurations uniform over the whole space, duplicates allowed.
pub fn uniform_sample(space: &DesignSpace, n: usize, rng: &mut impl Rng) -> Result<Vec<Configuration>> {
    if n == 0 {
        return invalid("uniform_sample needs n >= 1");
    }
    let total = space.total_size();
    (0..n).map(|_| space.config_at(rng.random_range(0..total))).collect()
}

/// Confidence sampling over `candidates` scored by `scorer`.
///
/// Returns exactly `min(n_select, candidates.len())` items. When no draw
/// beats the median the drawn set is returned as fallback. An invalid
/// synthesized configuration is replaced by the highest-scored candidate
/// not yet used, or by the dropped draw itself once those run out.
pub fn confidence_sampling(
    space: &DesignSpace,
    workload: &LayerWorkload,
    candidates: &[Configuration],
    scorer: impl Fn(&Configuration) -> f64,
    n_select: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Sampled>> {
    if candidates.is_empty() {
        return invalid("confidence sampling needs at least one candidate");
    }
    if n_select == 0 {
        return invalid("n_select must be at least 1");
    }
    let scores: Vec<f64> = candidates.iter().map(scorer).collect();
    if scores.iter().any(|s| !s.is_finite()) {
        return invalid("scorer returned a non-finite value");
    }
    let probs = softmax(&scores);
    let drawn = select_configurations(&probs, n_select.min(candidates.len()), rng)?;
    let threshold = compute_dynamic_threshold(&scores)?;
    let keep: Vec<bool> = drawn.iter().map(|&i| scores[i] > threshold).collect();

    if !keep.contains(&true) {
        return Ok(drawn
            .iter()
            .map(|&i| Sampled { config: candidates[i], score: Some(scores[i]), tag: Tag::Fallback })
            .collect());
    }

    let kept: Vec<Configuration> = drawn.iter().zip(&keep).filter(|(_, k)| **k).map(|(&i, _)| candidates[i]).collect();
    let synthesized = synthesize_mode(&kept, space)?;
    let synth_ok = space.is_valid(&synthesized, workload);

    // Unselected candidates, best first, for invalid syntheses.
    let mut spare: Vec<usize> = {
        let mut used = vec![false; candidates.len()];
        drawn.iter().for_each(|&i| used[i] = true);
        (0..candidates.len()).filter(|&i| !used[i]).collect()
    };
    spare.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut spare = spare.into_iter();

    Ok(drawn
        .iter()
        .zip(&keep)
        .map(|(&i, &k)| {
            if k {
                Sampled { config: candidates[i], score: Some(scores[i]), tag: Tag::AboveMedian }
            } else if synth_ok {
                Sampled { config: synthesized, score: None, tag: Tag::Synthesized }
            } else {
                let j = spare.next().unwrap_or(i);
                Sampled { config: candidates[j], score: Some(scores[j]), tag: Tag::Fallback }
            }
        })
        .collect())
}
