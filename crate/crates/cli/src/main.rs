use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use piac_core::env::Environment;
use piac_core::experiment::{
    compare_runtime, landscape_csv, landscape_trace, run_matrix, run_scenario, runtime_report,
    sweep_phi, write_text, Algorithm, ExperimentConfig,
};
use piac_core::record::TrainingRecord;
use piac_core::{Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "piac",
    version,
    about = "Virtual inertia coordination experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long, default_value = "data/experiments/desk.toml")]
    config: PathBuf,
    /// Scenario name from the experiment file.
    #[arg(long, default_value = "reference")]
    scenario: String,
    /// Override the output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one disturbance episode and write the trajectory CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Flat action `H_1,..,H_n,D_1,..,D_n`; zeros (then projected) by default.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        action: Option<Vec<f64>>,
        #[arg(long, default_value = "trajectory.csv")]
        out: PathBuf,
    },
    /// Train PI-AC or the plain actor-critic.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "pi-ac")]
        algo: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Physics-loss weight (PI-AC only).
        #[arg(long)]
        phi: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Run the genetic-algorithm baseline.
    Ga {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run every configured algorithm over the scenario's seed set.
    Matrix {
        #[command(flatten)]
        common: Common,
    },
    /// PI-AC over a list of physics-loss weights.
    SweepPhi {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,50,5000,500000")]
        values: Vec<f64>,
    },
    /// Export the (iteration, C, xi) path of a training record.
    Landscape {
        /// Record CSV written by `train` or `ga`.
        #[arg(long)]
        record: PathBuf,
        #[arg(long, default_value = "landscape.csv")]
        out: PathBuf,
    },
    /// Wall time per 100 iterations for each algorithm.
    RuntimeReport {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Use existing records instead of running, as `algo=path`.
        #[arg(long = "record")]
        records: Vec<String>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(dir) = &common.out_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn to_json<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("serializable")
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    match cli.command {
        Command::Simulate {
            common,
            action,
            out,
        } => {
            let cfg = load(&common)?;
            let sc = cfg.scenario(&common.scenario)?;
            let env = sc.environment(&cfg.episode, &cfg.objective)?;
            let action = action.unwrap_or_else(|| vec![0.0; env.action_box().dim()]);
            let (outcome, traj) = env.run(&action)?;
            traj.save_csv(&out)?;
            Ok(json!({
                "trajectory": out,
                "applied": outcome.applied,
                "breakdown": to_json(&outcome.breakdown),
                "peak_abs_domega": traj.peak_abs_domega(),
                "peak_abs_rocof": traj.peak_abs_rocof(),
            }))
        }
        Command::Train {
            common,
            algo,
            seed,
            phi,
            iterations,
        } => {
            let algo: Algorithm = algo.parse()?;
            if algo == Algorithm::Ga {
                return Err(Error::Config(
                    "use the `ga` subcommand for the genetic algorithm".into(),
                ));
            }
            let mut cfg = load(&common)?;
            if let Some(phi) = phi {
                if algo == Algorithm::Ac {
                    return Err(Error::Config("--phi applies to pi-ac only".into()));
                }
                cfg.agent.phi = phi;
            }
            if let Some(n) = iterations {
                cfg.agent.iterations = n;
            }
            cfg.agent.validate()?;
            let sc = cfg.scenario(&common.scenario)?.clone();
            let out = run_scenario(&cfg, &sc, algo, seed)?;
            Ok(json!({ "dir": out.dir, "summary": to_json(&out.summary) }))
        }
        Command::Ga { common, seed } => {
            let cfg = load(&common)?;
            let sc = cfg.scenario(&common.scenario)?.clone();
            let out = run_scenario(&cfg, &sc, Algorithm::Ga, seed)?;
            Ok(json!({ "dir": out.dir, "summary": to_json(&out.summary) }))
        }
        Command::Matrix { common } => {
            let cfg = load(&common)?;
            let sc = cfg.scenario(&common.scenario)?.clone();
            let runs = run_matrix(&cfg, &sc)?;
            let rows: Vec<_> = runs
                .iter()
                .map(|s| {
                    json!({
                        "algorithm": s.algorithm,
                        "seed": s.seed,
                        "r_final": s.r_final,
                        "convergence_iteration": s.convergence_iteration,
                    })
                })
                .collect();
            Ok(json!({ "runs": rows }))
        }
        Command::SweepPhi { common, values } => {
            let cfg = load(&common)?;
            let sc = cfg.scenario(&common.scenario)?.clone();
            let sweep = sweep_phi(&cfg, &sc, &values)?;
            Ok(json!({ "runs": sweep.runs.len(), "table": to_json(&sweep.table) }))
        }
        Command::Landscape { record, out } => {
            let rec = TrainingRecord::load_csv(&record)?;
            let points = landscape_trace(&rec);
            write_text(&out, &landscape_csv(&points))?;
            Ok(json!({ "out": out, "points": points.len() }))
        }
        Command::RuntimeReport {
            common,
            seed,
            records,
        } => {
            let report = if records.is_empty() {
                let cfg = load(&common)?;
                let sc = cfg.scenario(&common.scenario)?.clone();
                runtime_report(&cfg, &sc, seed)?
            } else {
                let loaded = records
                    .iter()
                    .map(|spec| parse_record_spec(spec))
                    .collect::<Result<Vec<_>>>()?;
                compare_runtime(&loaded)
            };
            Ok(to_json(&report))
        }
    }
}

fn parse_record_spec(spec: &str) -> Result<(Algorithm, TrainingRecord)> {
    let (algo, path) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected algo=path, got {spec:?}")))?;
    Ok((algo.parse()?, TrainingRecord::load_csv(Path::new(path))?))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let msg = json!({ "error": e.category(), "message": e.to_string() });
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
