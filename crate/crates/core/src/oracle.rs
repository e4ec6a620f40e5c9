//! Analytical accelerator latency model, constraint penalty and fitness.
//!
//! The model charges padded MACs (remainder tiles waste work), slows down when
//! the working set spills the on-chip buffer, scales sub-linearly with
//! threading and pays a fixed launch cost per tile. Every knob therefore has a
//! measurable effect, and the whole default space can be enumerated to get
//! the ground-truth optimum.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::knobspace::{Configuration, DesignSpace, KnobSettings, LayerWorkload};

/// Fitness assigned to configurations that cannot run.
pub const INVALID_FITNESS: f64 = f64::NEG_INFINITY;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleParams {
    /// FLOP/s of a single thread at full efficiency.
    pub peak_flops: f64,
    pub buffer_bytes: f64,
    /// Seconds per tile.
    pub launch_overhead: f64,
    /// Per-extra-thread efficiency loss.
    pub thread_overhead: f64,
    pub bytes_per_element: f64,
    /// Std-dev of the log of the multiplicative latency noise; 0 disables it.
    pub noise_std: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            peak_flops: 1e11,
            buffer_bytes: 131_072.0,
            launch_overhead: 1e-6,
            thread_overhead: 0.02,
            bytes_per_element: 1.0,
            noise_std: 0.0,
        }
    }
}

impl OracleParams {
    pub fn check(&self) -> Result<()> {
        let positive = [
            ("peak_flops", self.peak_flops),
            ("buffer_bytes", self.buffer_bytes),
            ("launch_overhead", self.launch_overhead),
            ("thread_overhead", self.thread_overhead),
            ("bytes_per_element", self.bytes_per_element),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("oracle parameter {name} must be positive, got {v}"));
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return invalid(format!("noise_std must be >= 0, got {}", self.noise_std));
        }
        Ok(())
    }
}

/// Area and memory limits of the constraint penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Constraints {
    pub area_max: f64,
    /// Bytes.
    pub memory_max: f64,
    /// Fitness units per unit of violation.
    pub lambda_penalty: f64,
}

impl Default for Constraints {
    fn default() -> Self {
        Self { area_max: 64.0, memory_max: OracleParams::default().buffer_bytes, lambda_penalty: 1.0 }
    }
}

impl Constraints {
    pub fn check(&self) -> Result<()> {
        if !(self.area_max > 0.0) || !(self.memory_max > 0.0) {
            return invalid("area_max and memory_max must be positive");
        }
        if !(self.lambda_penalty >= 0.0 && self.lambda_penalty.is_finite()) {
            return invalid("lambda_penalty must be >= 0");
        }
        Ok(())
    }

    pub fn allows(&self, area: f64, footprint: f64) -> bool {
        area <= self.area_max && footprint <= self.memory_max
    }
}

/// Oracle output for one (workload, configuration) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    /// Seconds; infinite when invalid.
    pub latency: f64,
    pub gflops: f64,
    /// Bytes.
    pub footprint: f64,
    pub area: f64,
    pub penalty: f64,
    pub fitness: f64,
    pub valid: bool,
}

impl Measurement {
    pub fn invalid() -> Self {
        Self {
            latency: f64::INFINITY,
            gflops: 0.0,
            footprint: 0.0,
            area: 0.0,
            penalty: 0.0,
            fitness: INVALID_FITNESS,
            valid: false,
        }
    }
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

fn padded(extent: u64, tile: u64) -> u64 {
    ceil_div(extent, tile) * tile
}

/// On-chip working set of one tile: input window, weights and outputs.
pub fn footprint(workload: &LayerWorkload, s: &KnobSettings, params: &OracleParams) -> f64 {
    let in_h = s.tile_h * workload.stride + workload.kh - 1;
    let in_w = s.tile_w * workload.stride + workload.kw - 1;
    let input = s.tile_b * s.tile_ci * in_h * in_w;
    let weights = s.tile_ci * s.tile_co * workload.kh * workload.kw;
    let output = s.tile_b * s.tile_co * s.tile_h * s.tile_w;
    params.bytes_per_element * (input + weights + output) as f64
}

/// PE-array proxy: `tile_ci * tile_co`.
pub fn area(s: &KnobSettings) -> f64 {
    (s.tile_ci * s.tile_co) as f64
}

pub fn penalty(area: f64, footprint: f64, constraints: &Constraints) -> f64 {
    constraints.lambda_penalty
        * ((area - constraints.area_max).max(0.0) + (footprint - constraints.memory_max).max(0.0))
}

/// Penalty of a configuration, computed from its area and footprint.
pub fn config_penalty(
    space: &DesignSpace,
    workload: &LayerWorkload,
    cfg: &Configuration,
    params: &OracleParams,
    constraints: &Constraints,
) -> f64 {
    let s = space.settings(cfg);
    penalty(area(&s), footprint(workload, &s, params), constraints)
}

/// Inverse latency minus penalty.
pub fn fitness(latency: f64, penalty_value: f64) -> Result<f64> {
    if !(latency > 0.0) {
        return invalid(format!("latency must be positive, got {latency}"));
    }
    Ok(1.0 / latency - penalty_value)
}

/// Noise-free latency of a valid configuration.
pub fn latency(workload: &LayerWorkload, s: &KnobSettings, params: &OracleParams) -> f64 {
    let (oh, ow) = (workload.out_h(), workload.out_w());
    let work = padded(workload.n, s.tile_b)
        * padded(workload.cin, s.tile_ci)
        * padded(workload.cout, s.tile_co)
        * padded(oh, s.tile_h)
        * padded(ow, s.tile_w)
        * workload.kh
        * workload.kw;
    let parallel = s.h_threading.min(ceil_div(oh, s.tile_h)) * s.oc_threading.min(ceil_div(workload.cout, s.tile_co));
    let thread_eff = 1.0 / (1.0 + params.thread_overhead * (s.thread_product() - 1) as f64);
    let mem_factor = (footprint(workload, s, params) / params.buffer_bytes).max(1.0);
    let n_tiles = ceil_div(workload.n, s.tile_b)
        * ceil_div(workload.cin, s.tile_ci)
        * ceil_div(workload.cout, s.tile_co)
        * ceil_div(oh, s.tile_h)
        * ceil_div(ow, s.tile_w);
    (2.0 * work as f64 / params.peak_flops) * mem_factor / (parallel as f64 * thread_eff)
        + params.launch_overhead * n_tiles as f64
}

/// Runs the simulated device. With `noise_std == 0` the result does not
/// depend on `seed`.
pub fn measure(
    space: &DesignSpace,
    workload: &LayerWorkload,
    cfg: &Configuration,
    params: &OracleParams,
    constraints: &Constraints,
    seed: u64,
) -> Measurement {
    if !space.is_valid(cfg, workload) {
        return Measurement::invalid();
    }
    let s = space.settings(cfg);
    let mut lat = latency(workload, &s, params);
    if params.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: f64 = StandardNormal.sample(&mut rng);
        lat *= (params.noise_std * z).exp();
    }
    let fp = footprint(workload, &s, params);
    let ar = area(&s);
    let pen = penalty(ar, fp, constraints);
    Measurement {
        latency: lat,
        gflops: workload.flops() / lat / 1e9,
        footprint: fp,
        area: ar,
        penalty: pen,
        fitness: 1.0 / lat - pen,
        valid: true,
    }
}

/// Exhaustive enumeration result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BruteForce {
    pub best_index: usize,
    pub best_config: Configuration,
    pub best: Measurement,
    pub valid_count: usize,
    pub evaluated: usize,
}

/// Evaluates every configuration; ties go to the lowest index. Returns `None`
/// if nothing in the space is valid.
pub fn brute_force(
    space: &DesignSpace,
    workload: &LayerWorkload,
    params: &OracleParams,
    constraints: &Constraints,
) -> Option<BruteForce> {
    let mut best: Option<(usize, Configuration, Measurement)> = None;
    let mut valid_count = 0;
    for (i, cfg) in space.iter().enumerate() {
        let m = measure(space, workload, &cfg, params, constraints, 0);
        if !m.valid {
            continue;
        }
        valid_count += 1;
        if best.as_ref().is_none_or(|(_, _, b)| m.fitness > b.fitness) {
            best = Some((i, cfg, m));
        }
    }
    best.map(|(best_index, best_config, best)| BruteForce {
        best_index,
        best_config,
        best,
        valid_count,
        evaluated: space.total_size(),
    })
}
