use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use cotune::knobspace::load_workloads;
use cotune::oracle::brute_force;
use cotune::tuner::{self, log, Fidelity, RunConfig, Scorer, Strategy, TunerConfig};

#[derive(Parser)]
#[command(name = "cotune", version, about = "Multi-agent auto-tuner for convolution layers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tune every layer of a workload file and write trial logs.
    Tune {
        #[arg(long)]
        workloads: PathBuf,
        #[arg(long, default_value = "dcoc")]
        strategy: Strategy,
        /// Oracle measurements per layer.
        #[arg(long, default_value_t = 1024)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// JSON file with `oracle` and `constraints` sections.
        #[arg(long)]
        oracle: Option<PathBuf>,
        #[arg(long, default_value = "desk")]
        fidelity: Fidelity,
        /// Rank candidates with the surrogate instead of the critic.
        #[arg(long)]
        surrogate_scorer: bool,
        /// Reuse agents and critic from one layer to the next.
        #[arg(long)]
        warm_start: bool,
        /// Write 0 for every timestamp so logs are byte-reproducible.
        #[arg(long)]
        no_wall_clock: bool,
    },
    /// Enumerate every configuration and record the optimum per layer.
    BruteForce {
        #[arg(long)]
        workloads: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        oracle: Option<PathBuf>,
    },
    /// Best-so-far curves of a run directory as CSV.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunConfig::parse(&text).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(RunConfig::default()),
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Tune {
            workloads,
            strategy,
            budget,
            seed,
            out,
            oracle,
            fidelity,
            surrogate_scorer,
            warm_start,
            no_wall_clock,
        } => {
            let specs = load_workloads(&workloads).with_context(|| format!("loading {}", workloads.display()))?;
            let rc = run_config(oracle.as_deref())?;
            let config = TunerConfig {
                strategy,
                budget,
                seed,
                oracle: rc.oracle,
                constraints: rc.constraints,
                scorer: if surrogate_scorer { Scorer::Surrogate } else { Scorer::Critic },
                warm_start,
                record_wall_clock: !no_wall_clock,
                ..TunerConfig::default().with_fidelity(fidelity)
            };
            config.check()?;
            let outcomes = tuner::tune_network(&specs, &config)?;
            let dir = log::write_run(&out, strategy, seed, &outcomes)?;
            for o in &outcomes {
                println!(
                    "{}: best fitness {:.6} ({:.3} GFLOPS) after {} measurements",
                    o.layer, o.best.fitness, o.best.gflops, o.measurements
                );
            }
            println!("wrote {}", dir.display());
        }
        Command::BruteForce { workloads, out, oracle } => {
            let specs = load_workloads(&workloads).with_context(|| format!("loading {}", workloads.display()))?;
            let rc = run_config(oracle.as_deref())?;
            let mut layers = Vec::with_capacity(specs.len());
            for spec in &specs {
                let space = spec.space()?;
                let Some(bf) = brute_force(&space, &spec.workload, &rc.oracle, &rc.constraints) else {
                    bail!("layer `{}` has no valid configuration", spec.workload.name);
                };
                println!("{}: optimum fitness {:.6} over {} valid configurations", spec.workload.name, bf.best.fitness, bf.valid_count);
                layers.push(json!({
                    "layer": spec.workload.name,
                    "best_index": bf.best_index,
                    "best_config": space.named_values(&bf.best_config),
                    "best_fitness": bf.best.fitness,
                    "best_gflops": bf.best.gflops,
                    "best_latency_s": bf.best.latency,
                    "valid_configs": bf.valid_count,
                    "total_configs": bf.evaluated,
                }));
            }
            fs::create_dir_all(&out)?;
            let path = out.join("brute_force.json");
            fs::write(&path, serde_json::to_string_pretty(&layers)? + "\n")?;
            println!("wrote {}", path.display());
        }
        Command::Report { input, out } => {
            let rows = log::collect_report(&input)?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            let mut writer = csv::Writer::from_path(&out).with_context(|| format!("creating {}", out.display()))?;
            for row in &rows {
                writer.serialize(row)?;
            }
            writer.flush()?;
            println!("wrote {} rows to {}", rows.len(), out.display());
        }
    }
    Ok(())
}
