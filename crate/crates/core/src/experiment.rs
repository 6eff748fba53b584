//! Scenario ingestion, experiment runs and result export.
//!
//! A run writes into `<output_dir>/<scenario>/<algorithm>/seed_<n>/`:
//! `record.csv`, `summary.json` (final action, reward breakdown, convergence
//! figures and the fully resolved configuration) and, for the learners, the
//! actor and critic snapshots.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{train, AgentConfig};
use crate::env::GridEnv;
use crate::error::{Error, Result};
use crate::ga::{run_ga, GaConfig};
use crate::grid::{fmt_f64, load_grid, EpisodeConfig, GridModel};
use crate::nn::save_snapshot;
use crate::objective::{ObjectiveConfig, RewardBreakdown};
use crate::record::TrainingRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub h_ts: f64,
    pub d_ts: f64,
    pub h_budget: f64,
    pub d_budget: f64,
    pub p_load: f64,
    /// Grid file; relative paths are resolved against the scenario file.
    pub grid: PathBuf,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_seeds() -> Vec<u64> {
    (1..=5).collect()
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let values = [
            (self.h_ts, "h_ts"),
            (self.d_ts, "d_ts"),
            (self.h_budget, "h_budget"),
            (self.d_budget, "d_budget"),
            (self.p_load, "p_load"),
        ];
        for (v, name) in values {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "scenario {}: {name} must be positive, got {v}",
                    self.name
                )));
            }
        }
        if !self.grid.is_file() {
            return Err(Error::Config(format!(
                "scenario {}: grid file {} not found",
                self.name,
                self.grid.display()
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config(format!(
                "scenario {}: empty seed set",
                self.name
            )));
        }
        Ok(())
    }

    /// Grid with the transmission-side generator set to this scenario.
    pub fn model(&self) -> Result<GridModel> {
        let mut model = load_grid(&self.grid)?;
        model.generator.h = self.h_ts;
        model.generator.d = self.d_ts;
        Ok(model)
    }

    pub fn objective(&self, base: &ObjectiveConfig) -> ObjectiveConfig {
        ObjectiveConfig {
            h_budget: self.h_budget,
            d_budget: self.d_budget,
            ..base.clone()
        }
    }

    pub fn episode(&self, base: &EpisodeConfig) -> EpisodeConfig {
        EpisodeConfig {
            load_level: self.p_load,
            ..base.clone()
        }
    }

    pub fn environment(
        &self,
        episode: &EpisodeConfig,
        objective: &ObjectiveConfig,
    ) -> Result<GridEnv> {
        GridEnv::new(
            self.model()?,
            self.episode(episode),
            self.objective(objective),
        )
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    scenario: Vec<Scenario>,
}

/// Read a `[[scenario]]` table list, resolving grid paths against the file.
pub fn load_scenarios(path: &Path) -> Result<Vec<Scenario>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ScenarioFile = toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(file
        .scenario
        .into_iter()
        .map(|mut s| {
            s.grid = resolve(base, &s.grid);
            s
        })
        .collect())
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "pi-ac")]
    PiAc,
    #[serde(rename = "ac")]
    Ac,
    #[serde(rename = "ga")]
    Ga,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::PiAc, Algorithm::Ac, Algorithm::Ga];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::PiAc => "pi-ac",
            Algorithm::Ac => "ac",
            Algorithm::Ga => "ga",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown algorithm {s:?} (expected pi-ac, ac or ga)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub window: usize,
    pub tol: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            window: 25,
            tol: 0.02,
        }
    }
}

/// On-disk experiment description. Paths are relative to the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    #[serde(default)]
    pub scenario_file: Option<PathBuf>,
    #[serde(default)]
    pub scenario: Vec<Scenario>,
    /// Replaces every scenario's grid when set.
    #[serde(default)]
    pub grid: Option<PathBuf>,
    pub algorithms: Vec<String>,
    pub output_dir: PathBuf,
    /// Record measured wall time; off keeps result files reproducible.
    #[serde(default)]
    pub timing: bool,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default)]
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub episode: EpisodeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub scenarios: Vec<Scenario>,
    pub algorithms: Vec<Algorithm>,
    pub output_dir: PathBuf,
    pub timing: bool,
    pub convergence: ConvergenceConfig,
    pub agent: AgentConfig,
    pub ga: GaConfig,
    pub objective: ObjectiveConfig,
    pub episode: EpisodeConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ExperimentFile = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_file(file, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn from_file(file: ExperimentFile, base: &Path) -> Result<Self> {
        let mut scenarios = Vec::new();
        if let Some(sf) = &file.scenario_file {
            scenarios.extend(load_scenarios(&resolve(base, sf))?);
        }
        for mut s in file.scenario {
            s.grid = resolve(base, &s.grid);
            scenarios.push(s);
        }
        if let Some(g) = &file.grid {
            let g = resolve(base, g);
            for s in &mut scenarios {
                s.grid = g.clone();
            }
        }
        let algorithms = file
            .algorithms
            .iter()
            .map(|a| a.parse())
            .collect::<Result<Vec<Algorithm>>>()?;
        let cfg = Self {
            scenarios,
            algorithms,
            output_dir: resolve(base, &file.output_dir),
            timing: file.timing,
            convergence: file.convergence,
            agent: file.agent,
            ga: file.ga,
            objective: file.objective,
            episode: file.episode,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::Config("experiment lists no scenarios".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("experiment lists no algorithms".into()));
        }
        let mut names: Vec<&str> = self.scenarios.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate scenario names".into()));
        }
        if self.convergence.window == 0 || !(self.convergence.tol >= 0.0) {
            return Err(Error::Config("invalid convergence settings".into()));
        }
        for s in &self.scenarios {
            s.validate()?;
        }
        self.agent.validate()?;
        self.ga.validate()?;
        self.objective.validate()?;
        self.episode.validate()
    }

    pub fn scenario(&self, name: &str) -> Result<&Scenario> {
        self.scenarios
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Config(format!("unknown scenario {name:?}")))
    }
}

/// Everything needed to repeat one run, written next to its results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedRun {
    pub version: &'static str,
    pub scenario: Scenario,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub timing: bool,
    pub convergence: ConvergenceConfig,
    pub agent: Option<AgentConfig>,
    pub ga: Option<GaConfig>,
    pub objective: ObjectiveConfig,
    pub episode: EpisodeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub iterations: usize,
    pub r_final: Option<f64>,
    pub convergence_iteration: Option<usize>,
    pub final_action: Option<Vec<f64>>,
    pub final_breakdown: Option<RewardBreakdown>,
    pub wall_ms_per_100: Option<f64>,
    pub config: ResolvedRun,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub record: TrainingRecord,
    pub dir: PathBuf,
}

/// Resolved configuration of one `(scenario, algorithm, seed)` run.
pub fn resolve_run(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    algorithm: Algorithm,
    seed: u64,
) -> ResolvedRun {
    let (agent, ga) = match algorithm {
        Algorithm::PiAc => (
            Some(AgentConfig {
                seed,
                ..cfg.agent.clone()
            }),
            None,
        ),
        Algorithm::Ac => (
            Some(AgentConfig {
                seed,
                phi: 0.0,
                ..cfg.agent.clone()
            }),
            None,
        ),
        Algorithm::Ga => (
            None,
            Some(GaConfig {
                seed,
                ..cfg.ga.clone()
            }),
        ),
    };
    ResolvedRun {
        version: env!("CARGO_PKG_VERSION"),
        scenario: scenario.clone(),
        algorithm,
        seed,
        timing: cfg.timing,
        convergence: cfg.convergence.clone(),
        agent,
        ga,
        objective: scenario.objective(&cfg.objective),
        episode: scenario.episode(&cfg.episode),
    }
}

/// Execute a resolved run and write its files into `dir`.
pub fn execute(run: &ResolvedRun, dir: &Path) -> Result<RunOutput> {
    let env = GridEnv::new(
        run.scenario.model()?,
        run.episode.clone(),
        run.objective.clone(),
    )?;
    create_dir(dir)?;
    let (mut record, final_action, final_breakdown) = match (&run.agent, &run.ga) {
        (Some(agent_cfg), _) => {
            let res = train(&env, agent_cfg)?;
            save_snapshot(&res.agent.actor, &dir.join("actor.json"))?;
            save_snapshot(&res.agent.critic, &dir.join("critic.json"))?;
            (res.record, res.final_action, res.final_breakdown)
        }
        (None, Some(ga_cfg)) => {
            let res = run_ga(&env, ga_cfg)?;
            (res.record, res.final_action, res.final_breakdown)
        }
        (None, None) => return Err(Error::Config("run has no algorithm settings".into())),
    };
    if !run.timing {
        for row in &mut record.rows {
            row.wall_ms = 0.0;
        }
    }
    let conv = &run.convergence;
    let summary = RunSummary {
        scenario: run.scenario.name.clone(),
        algorithm: run.algorithm,
        seed: run.seed,
        iterations: record.len(),
        r_final: record.r_final(conv.window),
        convergence_iteration: record.convergence_iteration(conv.window, conv.tol),
        final_action,
        final_breakdown,
        wall_ms_per_100: if run.timing {
            record.wall_ms_per_100()
        } else {
            None
        },
        config: run.clone(),
    };
    record.save_csv(&dir.join("record.csv"))?;
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(RunOutput {
        summary,
        record,
        dir: dir.to_path_buf(),
    })
}

pub fn run_dir(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    algorithm: Algorithm,
    seed: u64,
) -> PathBuf {
    cfg.output_dir
        .join(&scenario.name)
        .join(algorithm.name())
        .join(format!("seed_{seed}"))
}

/// One training or optimization run of `algorithm` on `scenario`.
pub fn run_scenario(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    algorithm: Algorithm,
    seed: u64,
) -> Result<RunOutput> {
    let run = resolve_run(cfg, scenario, algorithm, seed);
    execute(&run, &run_dir(cfg, scenario, algorithm, seed))
}

/// Map `f` over `items`, on the rayon pool unless wall time is being measured.
fn map_runs<T: Sync, U: Send>(
    timing: bool,
    items: &[T],
    f: impl Fn(&T) -> Result<U> + Sync + Send,
) -> Result<Vec<U>> {
    if timing {
        items.iter().map(f).collect()
    } else {
        items.par_iter().map(f).collect()
    }
}

/// Every configured algorithm over every seed of `scenario`; also writes
/// `summary.csv` in the scenario directory.
pub fn run_matrix(cfg: &ExperimentConfig, scenario: &Scenario) -> Result<Vec<RunSummary>> {
    let jobs: Vec<(Algorithm, u64)> = cfg
        .algorithms
        .iter()
        .flat_map(|&a| scenario.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let outputs = map_runs(cfg.timing, &jobs, |&(a, s)| {
        run_scenario(cfg, scenario, a, s)
    })?;
    let summaries: Vec<RunSummary> = outputs.into_iter().map(|o| o.summary).collect();
    let mut csv = String::from("algorithm,seed,iterations,r_final,convergence_iteration\n");
    for s in &summaries {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            s.algorithm,
            s.seed,
            s.iterations,
            opt_f64(s.r_final),
            opt_usize(s.convergence_iteration)
        ));
    }
    write_text(
        &cfg.output_dir.join(&scenario.name).join("summary.csv"),
        &csv,
    )?;
    Ok(summaries)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiRun {
    pub phi: f64,
    pub seed: u64,
    pub r_final: Option<f64>,
    pub convergence_iteration: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiSummary {
    pub phi: f64,
    pub median_r_final: Option<f64>,
    pub median_convergence_iteration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiSweep {
    pub runs: Vec<PhiRun>,
    pub table: Vec<PhiSummary>,
}

/// PI-AC on `scenario` for every `phi` and seed. Writes `phi_runs.csv`,
/// `phi_summary.csv` and per-run `loss_trace.csv` under `<scenario>/phi_sweep/`.
pub fn sweep_phi(cfg: &ExperimentConfig, scenario: &Scenario, values: &[f64]) -> Result<PhiSweep> {
    if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Config(format!(
            "phi must be finite and non-negative, got {bad}"
        )));
    }
    let root = cfg.output_dir.join(&scenario.name).join("phi_sweep");
    let jobs: Vec<(f64, u64)> = values
        .iter()
        .flat_map(|&p| scenario.seeds.iter().map(move |&s| (p, s)))
        .collect();
    let runs = map_runs(cfg.timing, &jobs, |&(phi, seed)| {
        let mut run = resolve_run(cfg, scenario, Algorithm::PiAc, seed);
        if let Some(a) = run.agent.as_mut() {
            a.phi = phi;
        }
        let dir = root
            .join(format!("phi_{}", fmt_f64(phi)))
            .join(format!("seed_{seed}"));
        let out = execute(&run, &dir)?;
        write_text(&dir.join("loss_trace.csv"), &loss_trace_csv(&out.record))?;
        Ok(PhiRun {
            phi,
            seed,
            r_final: out.summary.r_final,
            convergence_iteration: out.summary.convergence_iteration,
        })
    })?;

    let table: Vec<PhiSummary> = values
        .iter()
        .map(|&phi| {
            let of_phi: Vec<&PhiRun> = runs.iter().filter(|r| r.phi == phi).collect();
            PhiSummary {
                phi,
                median_r_final: median(of_phi.iter().filter_map(|r| r.r_final).collect()),
                median_convergence_iteration: median(
                    of_phi
                        .iter()
                        .filter_map(|r| r.convergence_iteration.map(|i| i as f64))
                        .collect(),
                ),
            }
        })
        .collect();

    let mut csv = String::from("phi,seed,r_final,convergence_iteration\n");
    for r in &runs {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(r.phi),
            r.seed,
            opt_f64(r.r_final),
            opt_usize(r.convergence_iteration)
        ));
    }
    write_text(&root.join("phi_runs.csv"), &csv)?;
    let mut csv = String::from("phi,median_r_final,median_convergence_iteration\n");
    for t in &table {
        csv.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(t.phi),
            opt_f64(t.median_r_final),
            opt_f64(t.median_convergence_iteration)
        ));
    }
    write_text(&root.join("phi_summary.csv"), &csv)?;
    Ok(PhiSweep { runs, table })
}

/// `iteration,L_critic,L_physics` for the iterations that ran updates.
pub fn loss_trace_csv(record: &TrainingRecord) -> String {
    let mut csv = String::from("iteration,L_critic,L_physics\n");
    for row in &record.rows {
        if let Some(l) = row.loss {
            csv.push_str(&format!(
                "{},{},{}\n",
                row.iteration,
                fmt_f64(l.critic),
                fmt_f64(l.physics)
            ));
        }
    }
    csv
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandscapePoint {
    pub iteration: usize,
    pub c: f64,
    pub xi: f64,
}

/// Path of the tracked action through the cost / voltage-cost plane.
pub fn landscape_trace(record: &TrainingRecord) -> Vec<LandscapePoint> {
    record
        .rows
        .iter()
        .map(|r| LandscapePoint {
            iteration: r.iteration,
            c: r.breakdown.c,
            xi: r.breakdown.xi,
        })
        .collect()
}

pub fn landscape_csv(points: &[LandscapePoint]) -> String {
    let mut csv = String::from("iteration,C,xi\n");
    for p in points {
        csv.push_str(&format!(
            "{},{},{}\n",
            p.iteration,
            fmt_f64(p.c),
            fmt_f64(p.xi)
        ));
    }
    csv
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuntimeEntry {
    pub algorithm: Algorithm,
    pub runs: usize,
    /// Mean wall time per 100 iterations (generations for the GA).
    pub ms_per_100: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuntimeReport {
    pub entries: Vec<RuntimeEntry>,
    /// PI-AC over AC wall time, when both are present.
    pub pi_ac_over_ac: Option<f64>,
}

impl RuntimeReport {
    pub fn get(&self, algorithm: Algorithm) -> Option<&RuntimeEntry> {
        self.entries.iter().find(|e| e.algorithm == algorithm)
    }

    pub fn to_csv(&self) -> String {
        let mut csv = String::from("algorithm,runs,ms_per_100\n");
        for e in &self.entries {
            csv.push_str(&format!(
                "{},{},{}\n",
                e.algorithm,
                e.runs,
                fmt_f64(e.ms_per_100)
            ));
        }
        csv
    }
}

/// Average wall time per 100 runtime units for each algorithm.
pub fn compare_runtime(records: &[(Algorithm, TrainingRecord)]) -> RuntimeReport {
    let mut per: BTreeMap<Algorithm, Vec<f64>> = BTreeMap::new();
    for (a, rec) in records {
        let entry = per.entry(*a).or_default();
        if let Some(v) = rec.wall_ms_per_100() {
            entry.push(v);
        }
    }
    let entries: Vec<RuntimeEntry> = per
        .into_iter()
        .map(|(algorithm, v)| RuntimeEntry {
            algorithm,
            runs: v.len(),
            ms_per_100: if v.is_empty() {
                f64::NAN
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            },
        })
        .collect();
    let ms = |a| {
        entries
            .iter()
            .find(|e| e.algorithm == a)
            .map(|e| e.ms_per_100)
    };
    let pi_ac_over_ac = match (ms(Algorithm::PiAc), ms(Algorithm::Ac)) {
        (Some(p), Some(a)) if a > 0.0 => Some(p / a),
        _ => None,
    };
    RuntimeReport {
        entries,
        pi_ac_over_ac,
    }
}

/// Timed runs of every configured algorithm for one seed, run one after the
/// other; writes `runtime.csv` under the scenario directory.
pub fn runtime_report(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    seed: u64,
) -> Result<RuntimeReport> {
    let timed = ExperimentConfig {
        timing: true,
        ..cfg.clone()
    };
    let mut records = Vec::new();
    for &a in &timed.algorithms {
        let run = resolve_run(&timed, scenario, a, seed);
        let dir = timed
            .output_dir
            .join(&scenario.name)
            .join("runtime")
            .join(a.name());
        records.push((a, execute(&run, &dir)?.record));
    }
    let report = compare_runtime(&records);
    write_text(
        &timed.output_dir.join(&scenario.name).join("runtime.csv"),
        &report.to_csv(),
    )?;
    Ok(report)
}

pub fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn opt_usize(v: Option<usize>) -> String {
    v.map(|i| i.to_string()).unwrap_or_default()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    write_text(path, &(text + "\n"))
}
