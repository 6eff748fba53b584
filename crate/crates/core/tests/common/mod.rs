#![allow(dead_code)]

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use piac_core::agent::{
    actor_objective_grad, critic_input, critic_loss_grad, physics_residual, surrogate_trajectory,
    SurrogateParams, Transition,
};
use piac_core::env::{Environment, GridEnv, QuadraticEnv};
use piac_core::experiment::{
    execute, median, resolve_run, run_scenario, sweep_phi, Algorithm, ExperimentConfig, RunSummary,
};
use piac_core::ga::{run_ga, GaConfig};
use piac_core::grid::{load_grid, EpisodeConfig, GridModel, Simulator};
use piac_core::nn::Mlp;
use piac_core::objective::{
    aggregate_vi, budget_penalty, economic_cost, p_max_plant, project_action, voltage_penalty_from,
    ActionBox, ObjectiveConfig, ViAction,
};
use piac_core::record::TrainingRecord;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub type Check = Result<String, String>;

pub fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn four_bus() -> GridModel {
    load_grid(&root().join("data/grids/four_bus.json")).expect("4-bus fixture")
}

pub fn reference_env() -> GridEnv {
    GridEnv::new(
        four_bus(),
        EpisodeConfig::default(),
        ObjectiveConfig::default(),
    )
    .expect("env")
}

/// Desk experiment with its output redirected.
pub fn desk_config(out: &Path) -> ExperimentConfig {
    let mut cfg =
        ExperimentConfig::load(&root().join("data/experiments/desk.toml")).expect("desk config");
    cfg.output_dir = out.to_path_buf();
    cfg
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Max over components of `|a - n| / max(|a|, |n|, floor)`, with the floor a
/// small fraction of the largest component so near-zero entries don't dominate.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-6 * scale.max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn central_diff(params: &[f64], step: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..params.len())
        .map(|i| {
            let x = p[i];
            p[i] = x + step;
            let up = f(&p);
            p[i] = x - step;
            let down = f(&p);
            p[i] = x;
            (up - down) / (2.0 * step)
        })
        .collect()
}

// ---- criterion 1 -----------------------------------------------------------

fn gradient_batch(rng: &mut ChaCha8Rng) -> Vec<Transition> {
    (0..6)
        .map(|_| {
            let lambda = SurrogateParams {
                h: rng.random_range(0.6..2.0),
                d: rng.random_range(0.2..1.5),
                k: rng.random_range(0.5..1.5),
            };
            Transition {
                state: vec![rng.random_range(-0.01..0.01), rng.random_range(-0.5..0.5)],
                action: vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                reward: rng.random_range(-3.0..-1.0),
                next_state: vec![0.0, 0.0],
                measurement: surrogate_trajectory(lambda, 0.1, 0.05, 61, 10),
            }
        })
        .collect()
}

pub fn check_gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sizes_c = [4, 20, 4];
    let sizes_a = [2, 20, 2];
    let critic = Mlp::new(&sizes_c, &mut rng).map_err(err)?;
    let actor = Mlp::new(&sizes_a, &mut rng).map_err(err)?;
    if critic.num_params() > 200 || actor.num_params() > 200 {
        return Err("test networks exceed 200 parameters".into());
    }
    let scale = [0.01, 1.0];
    let batch_owned = gradient_batch(&mut rng);
    let batch: Vec<&Transition> = batch_owned.iter().collect();
    let targets: Vec<f64> = (0..batch.len())
        .map(|_| rng.random_range(-3.0..0.0))
        .collect();

    let mut worst = Vec::new();
    for (label, phi) in [("Q head", 0.0), ("physics heads", 5000.0)] {
        let (_, g) = critic_loss_grad(&critic, &batch, &targets, phi, &scale).map_err(err)?;
        let fd = central_diff(critic.params(), 1e-6, |p| {
            let net = Mlp::from_params(&sizes_c, p.to_vec()).unwrap();
            critic_loss_grad(&net, &batch, &targets, phi, &scale)
                .unwrap()
                .0
                .total
        });
        worst.push((label, max_rel_err(&g, &fd)));
    }
    // Q targets matched exactly, so only the lambda heads carry gradient
    let exact: Vec<f64> = batch
        .iter()
        .map(|t| {
            critic
                .forward(&critic_input(&t.state, &scale, &t.action))
                .unwrap()[0]
        })
        .collect();
    let (_, g) = critic_loss_grad(&critic, &batch, &exact, 1.0, &scale).map_err(err)?;
    let fd = central_diff(critic.params(), 1e-6, |p| {
        let net = Mlp::from_params(&sizes_c, p.to_vec()).unwrap();
        let loss = critic_loss_grad(&net, &batch, &exact, 1.0, &scale)
            .unwrap()
            .0;
        loss.physics
    });
    worst.push(("physics residual", max_rel_err(&g, &fd)));

    let states: Vec<Vec<f64>> = batch.iter().map(|t| t.state.clone()).collect();
    let (_, g) = actor_objective_grad(&actor, &critic, &states, &scale).map_err(err)?;
    let fd = central_diff(actor.params(), 1e-6, |p| {
        let net = Mlp::from_params(&sizes_a, p.to_vec()).unwrap();
        actor_objective_grad(&net, &critic, &states, &scale)
            .unwrap()
            .0
    });
    worst.push(("actor", max_rel_err(&g, &fd)));

    let summary = worst
        .iter()
        .map(|(l, e)| format!("{l} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    if worst.iter().all(|(_, e)| *e < 1e-4) {
        Ok(summary)
    } else {
        Err(summary)
    }
}

// ---- criterion 2 -----------------------------------------------------------

pub fn check_residual_self_consistency() -> Check {
    let truth = SurrogateParams {
        h: 1.1,
        d: 0.8,
        k: 1.0,
    };
    let m = surrogate_trajectory(truth, 0.1, 0.05, 301, 50);
    let at_truth = physics_residual(&m, truth).value;
    if !(at_truth < 1e-6) {
        return Err(format!("L_physics at true parameters {at_truth:.3e}"));
    }
    let mut smallest = f64::INFINITY;
    for i in 0..3 {
        for f in [0.8, 1.2] {
            let mut p = [truth.h, truth.d, truth.k];
            p[i] *= f;
            let v = physics_residual(
                &m,
                SurrogateParams {
                    h: p[0],
                    d: p[1],
                    k: p[2],
                },
            )
            .value;
            if !(v > at_truth) {
                return Err(format!(
                    "perturbing parameter {i} by {f} gave {v:.3e} <= {at_truth:.3e}"
                ));
            }
            smallest = smallest.min(v);
        }
    }
    Ok(format!(
        "truth {at_truth:.2e}, smallest perturbed {smallest:.2e}"
    ))
}

// ---- criterion 3 -----------------------------------------------------------

pub fn check_steady_persistence() -> Check {
    let sim = Simulator::new(four_bus(), 1.0).map_err(err)?;
    let cfg = EpisodeConfig {
        p_m_step: 0.0,
        ..EpisodeConfig::default()
    };
    let action = ViAction::new(vec![15.0; 3], vec![15.0; 3]).map_err(err)?;
    let traj = sim.run(&action, &cfg).map_err(err)?;
    let g0 = traj.generator[0];
    let v0 = traj.v_mag[0].clone();
    let mut worst = 0.0f64;
    for k in 0..traj.len() {
        let g = traj.generator[k];
        worst = worst
            .max((g.domega - g0.domega).abs())
            .max((g.delta - g0.delta).abs())
            .max((g.p_gov - g0.p_gov).abs());
        for (v, w) in traj.v_mag[k].iter().zip(&v0) {
            worst = worst.max((v - w).abs());
        }
        for (p, q) in traj.plants[k].iter().zip(&traj.plants[0]) {
            worst = worst.max((p.omega_c - q.omega_c).abs());
        }
    }
    if traj.time.last().copied().unwrap_or(0.0) < 15.0 - 1e-9 {
        return Err("trajectory shorter than 15 s".into());
    }
    if worst < 1e-6 {
        Ok(format!("max drift {worst:.1e} over 15 s"))
    } else {
        Err(format!("max drift {worst:.3e}"))
    }
}

/// Peak ROCOF against total system inertia `H_gen + sum_i h_i s_i / s_sys`,
/// scaling generator and plant inertia together at fixed damping.
pub fn inertia_sweep() -> Result<Vec<(f64, f64)>, String> {
    let base = four_bus();
    let cfg = EpisodeConfig::default();
    [0.6, 1.0, 1.4, 1.8, 2.2]
        .into_iter()
        .map(|k| {
            let mut model = base.clone();
            model.generator.h = base.generator.h * k;
            let h_plant = 10.0 * k;
            let total =
                model.generator.h + model.plants.iter().map(|p| h_plant * p.s_n).sum::<f64>();
            let sim = Simulator::new(model, 1.0).map_err(err)?;
            let a = ViAction::new(vec![h_plant; 3], vec![15.0; 3]).map_err(err)?;
            let t = sim.run(&a, &cfg).map_err(err)?;
            Ok((total, t.peak_abs_rocof()))
        })
        .collect()
}

pub fn check_inertia_sweep() -> Check {
    let sweep = inertia_sweep()?;
    let text = sweep
        .iter()
        .map(|(h, r)| format!("H={h:.2}:{r:.5}"))
        .collect::<Vec<_>>()
        .join(" ");
    if sweep.windows(2).all(|w| w[1].1 <= w[0].1) {
        Ok(format!("peak rocof {text}"))
    } else {
        Err(format!("not non-increasing: {text}"))
    }
}

pub fn check_dt_halving() -> Check {
    let sim = Simulator::new(four_bus(), 1.0).map_err(err)?;
    let action = ViAction::new(vec![15.0; 3], vec![15.0; 3]).map_err(err)?;
    let coarse = sim.run(&action, &EpisodeConfig::default()).map_err(err)?;
    let fine = sim
        .run(
            &action,
            &EpisodeConfig {
                dt: 0.025,
                ..EpisodeConfig::default()
            },
        )
        .map_err(err)?;
    let a = coarse.domega();
    let b = fine.domega();
    let peak = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a
        .iter()
        .enumerate()
        .map(|(k, v)| (v - b[2 * k]).abs())
        .fold(0.0, f64::max);
    let rel = diff / peak;
    if rel < 0.01 {
        Ok(format!("max-norm change {:.3}%", 100.0 * rel))
    } else {
        Err(format!("max-norm change {:.3}%", 100.0 * rel))
    }
}

pub fn check_simulator() -> Check {
    let parts = [
        check_steady_persistence(),
        check_inertia_sweep(),
        check_dt_halving(),
    ];
    let text: Vec<String> = parts
        .iter()
        .map(|p| match p {
            Ok(s) => s.clone(),
            Err(s) => format!("FAILED {s}"),
        })
        .collect();
    if parts.iter().all(|p| p.is_ok()) {
        Ok(text.join("; "))
    } else {
        Err(text.join("; "))
    }
}

// ---- criterion 4 -----------------------------------------------------------

fn python() -> &'static str {
    "python3"
}

/// Run a Python oracle script reading JSON on stdin, writing JSON on stdout.
pub fn run_oracle(script: &str, input: &Value) -> Result<Value, String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/oracle")
        .join(script);
    let mut child = Command::new(python())
        .arg(&path)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| format!("cannot start {}: {e}", python()))?;
    child
        .stdin
        .take()
        .unwrap()
        .write_all(input.to_string().as_bytes())
        .map_err(err)?;
    let out = child.wait_with_output().map_err(err)?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    serde_json::from_slice(&out.stdout).map_err(err)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

pub fn check_objective_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut cases = Vec::new();
    let mut ours = Vec::new();
    for _ in 0..1000 {
        let n = rng.random_range(1..=6);
        let cfg = ObjectiveConfig {
            domega_max: rng.random_range(0.001..0.05),
            rocof_max: rng.random_range(0.005..0.1),
            dv_max: rng.random_range(0.01..0.1),
            c_h: rng.random_range(0.0..20.0),
            c_d: rng.random_range(0.0..20.0),
            c_dv: rng.random_range(0.0..20.0),
            h_budget: rng.random_range(0.0..20.0),
            d_budget: rng.random_range(0.0..20.0),
            s_sys: rng.random_range(0.5..2.0),
            ..ObjectiveConfig::default()
        };
        let h: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..30.0)).collect();
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..30.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..1.5)).collect();
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.5)).collect();
        let nb = rng.random_range(1..=8);
        let v: Vec<f64> = (0..nb).map(|_| rng.random_range(0.85..1.15)).collect();
        let v_set: Vec<f64> = (0..nb).map(|_| rng.random_range(0.95..1.05)).collect();
        let buses: Vec<piac_core::grid::Bus> = v_set
            .iter()
            .enumerate()
            .map(|(i, vs)| piac_core::grid::Bus {
                id: i as u32 + 1,
                v_set: *vs,
                c_v: 1.0,
            })
            .collect();

        let action = ViAction::new(h.clone(), d.clone()).map_err(err)?;
        let (h_sys, d_sys) = aggregate_vi(&action, &s, cfg.s_sys);
        ours.push(json!({
            "p_max": h.iter().zip(&d).map(|(a, b)| p_max_plant(*a, *b, &cfg)).collect::<Vec<_>>(),
            "cost": economic_cost(&action, &c, &cfg),
            "h_sys": h_sys,
            "d_sys": d_sys,
            "p_h": budget_penalty(h_sys, cfg.h_budget, cfg.c_h),
            "p_d": budget_penalty(d_sys, cfg.d_budget, cfg.c_d),
            "p_dv": voltage_penalty_from(&v, &buses, &cfg),
        }));
        cases.push(json!({
            "h": h, "d": d, "c": c, "s": s, "v": v, "v_set": v_set,
            "domega_max": cfg.domega_max, "rocof_max": cfg.rocof_max, "dv_max": cfg.dv_max,
            "c_h": cfg.c_h, "c_d": cfg.c_d, "c_dv": cfg.c_dv,
            "h_budget": cfg.h_budget, "d_budget": cfg.d_budget, "s_sys": cfg.s_sys,
        }));
    }
    let theirs = run_oracle("objective.py", &Value::Array(cases))?;
    let theirs = theirs.as_array().ok_or("oracle output is not a list")?;
    let mut compared = 0usize;
    for (k, (a, b)) in ours.iter().zip(theirs).enumerate() {
        for key in ["cost", "h_sys", "d_sys", "p_h", "p_d", "p_dv"] {
            let (x, y) = (
                a[key].as_f64().unwrap(),
                b[key].as_f64().ok_or("missing oracle field")?,
            );
            if !close(x, y) {
                return Err(format!("case {k} {key}: {x} vs oracle {y}"));
            }
            compared += 1;
        }
        for (x, y) in a["p_max"]
            .as_array()
            .unwrap()
            .iter()
            .zip(b["p_max"].as_array().unwrap())
        {
            if !close(x.as_f64().unwrap(), y.as_f64().unwrap()) {
                return Err(format!("case {k} p_max: {x} vs oracle {y}"));
            }
            compared += 1;
        }
    }
    if theirs.len() != ours.len() {
        return Err("oracle returned a different number of cases".into());
    }
    let projection = check_projection()?;
    Ok(format!("{compared} values agree to 1e-12; {projection}"))
}

pub fn check_projection() -> Check {
    let model = four_bus();
    let cfg = ObjectiveConfig::default();
    let bx = piac_core::objective::action_box(&model, &cfg);
    let weights: Vec<f64> = model.plants.iter().map(|p| p.s_n / cfg.s_sys).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for k in 0..1000 {
        let flat: Vec<f64> = bx
            .lower
            .iter()
            .zip(&bx.upper)
            .map(|(l, u)| rng.random_range(l - 5.0..u + 5.0))
            .collect();
        let a = ViAction::from_flat(&flat).map_err(err)?;
        let p = project_action(&a, &model, &cfg).map_err(err)?;
        let pp = project_action(&p, &model, &cfg).map_err(err)?;
        if pp
            .to_flat()
            .iter()
            .zip(p.to_flat())
            .any(|(x, y)| (x - y).abs() > 1e-9)
        {
            return Err(format!("projection not idempotent at sample {k}"));
        }
        let h_sys: f64 = p.h.iter().zip(&weights).map(|(h, w)| h * w).sum();
        let d_sys: f64 = p.d.iter().zip(&weights).map(|(d, w)| d * w).sum();
        if h_sys < cfg.h_budget - 1e-9 || d_sys < cfg.d_budget - 1e-9 || !bx.contains(&p.to_flat())
        {
            return Err(format!("projection misses budget or box at sample {k}"));
        }
    }
    Ok("projection idempotent and budget-feasible on 1000 samples".into())
}

// ---- criteria 5 to 9 -------------------------------------------------------

fn records_equal_ignoring_time(a: &TrainingRecord, b: &TrainingRecord) -> bool {
    a.len() == b.len()
        && a.rows.iter().zip(&b.rows).all(|(x, y)| {
            let mut x = x.clone();
            x.wall_ms = y.wall_ms;
            x == *y
        })
}

pub fn check_ac_reduction(out: &Path) -> Check {
    let mut cfg = desk_config(out);
    cfg.agent.iterations = 200;
    let sc = cfg.scenario("reference").map_err(err)?.clone();
    let mut run = resolve_run(&cfg, &sc, Algorithm::PiAc, 3);
    run.agent.as_mut().unwrap().phi = 0.0;
    let pi = execute(&run, &out.join("identity/pi-ac")).map_err(err)?;
    let ac = run_scenario(&cfg, &sc, Algorithm::Ac, 3).map_err(err)?;
    let bytes = |dir: &Path| std::fs::read(dir.join("record.csv")).unwrap();
    let same_params = {
        let read = |dir: &Path, f: &str| std::fs::read(dir.join(f)).unwrap();
        read(&pi.dir, "actor.json") == read(&ac.dir, "actor.json")
            && read(&pi.dir, "critic.json") == read(&ac.dir, "critic.json")
    };
    let bits_equal = pi.record.rows.iter().zip(&ac.record.rows).all(|(x, y)| {
        x.breakdown.r.to_bits() == y.breakdown.r.to_bits()
            && x.r_explore.to_bits() == y.r_explore.to_bits()
            && x.loss
                .map(|l| (l.total.to_bits(), l.critic.to_bits(), l.physics.to_bits()))
                == y.loss
                    .map(|l| (l.total.to_bits(), l.critic.to_bits(), l.physics.to_bits()))
    });
    if pi.record.len() == 200
        && records_equal_ignoring_time(&pi.record, &ac.record)
        && bits_equal
        && bytes(&pi.dir) == bytes(&ac.dir)
        && same_params
    {
        Ok("200-iteration records and final networks bit-identical".into())
    } else {
        Err("PI-AC at phi = 0 differs from AC".into())
    }
}

pub struct TrendRuns {
    pub summaries: Vec<RunSummary>,
    pub pi_ac_records: Vec<PathBuf>,
}

pub fn learning_runs(cfg: &ExperimentConfig) -> Result<TrendRuns, String> {
    let sc = cfg.scenario("reference").map_err(err)?.clone();
    let mut summaries = Vec::new();
    let mut pi_ac_records = Vec::new();
    for a in [Algorithm::PiAc, Algorithm::Ac, Algorithm::Ga] {
        for &seed in &sc.seeds {
            let out = run_scenario(cfg, &sc, a, seed).map_err(err)?;
            if a == Algorithm::PiAc {
                pi_ac_records.push(out.dir.join("record.csv"));
            }
            summaries.push(out.summary);
        }
    }
    Ok(TrendRuns {
        summaries,
        pi_ac_records,
    })
}

pub fn check_learning_trend(runs: &TrendRuns) -> Check {
    let of = |a: Algorithm| -> Vec<&RunSummary> {
        runs.summaries.iter().filter(|s| s.algorithm == a).collect()
    };
    let med = |a| median(of(a).iter().filter_map(|s| s.r_final).collect()).unwrap_or(f64::NAN);
    let (pi, ac, ga) = (med(Algorithm::PiAc), med(Algorithm::Ac), med(Algorithm::Ga));
    let faster = of(Algorithm::PiAc)
        .iter()
        .zip(of(Algorithm::Ac))
        .filter(|(p, a)| {
            p.seed == a.seed
                && matches!((p.convergence_iteration, a.convergence_iteration), (Some(x), Some(y)) if x <= y)
        })
        .count();
    let text = format!(
        "median r_final PI-AC {pi:.4}, AC {ac:.4}, GA {ga:.4}; PI-AC converged no later in {faster}/5 seeds"
    );
    if pi >= ac && ac >= ga && faster >= 3 {
        Ok(text)
    } else {
        Err(text)
    }
}

pub fn phi_sweep_runs(cfg: &ExperimentConfig) -> Result<(Vec<(f64, f64)>, Vec<PathBuf>), String> {
    let sc = cfg.scenario("reference").map_err(err)?.clone();
    let values = [0.0, 50.0, 5000.0, 5e5];
    let sweep = sweep_phi(cfg, &sc, &values).map_err(err)?;
    let table = sweep
        .table
        .iter()
        .map(|t| (t.phi, t.median_r_final.unwrap_or(f64::NAN)))
        .collect();
    let root = cfg.output_dir.join(&sc.name).join("phi_sweep");
    let mut records = Vec::new();
    for dir in std::fs::read_dir(&root).map_err(err)? {
        let dir = dir.map_err(err)?.path();
        if dir.is_dir() {
            for seed in std::fs::read_dir(&dir).map_err(err)? {
                records.push(seed.map_err(err)?.path().join("record.csv"));
            }
        }
    }
    records.sort();
    Ok((table, records))
}

pub fn check_phi_saturation(table: &[(f64, f64)]) -> Check {
    let at = |phi: f64| {
        table
            .iter()
            .find(|(p, _)| *p == phi)
            .map(|(_, r)| *r)
            .unwrap_or(f64::NAN)
    };
    let text = table
        .iter()
        .map(|(p, r)| format!("phi {p}: {r:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    if at(5e5) < at(5000.0) {
        Ok(text)
    } else {
        Err(text)
    }
}

pub fn check_loss_dominance(records: &[PathBuf]) -> Check {
    let mut rows = 0usize;
    for path in records {
        let rec = TrainingRecord::load_csv(path).map_err(err)?;
        for row in &rec.rows {
            if let Some(l) = row.loss {
                if !(l.total >= l.critic) {
                    return Err(format!(
                        "{}: iteration {} has L = {} < L_critic = {}",
                        path.display(),
                        row.iteration,
                        l.total,
                        l.critic
                    ));
                }
                rows += 1;
            }
        }
    }
    if rows == 0 {
        return Err("no update iterations recorded".into());
    }
    Ok(format!(
        "L >= L_critic on {rows} logged iterations in {} runs",
        records.len()
    ))
}

pub fn check_runtime(out: &Path, iterations: usize) -> Check {
    let mut cfg = desk_config(out);
    cfg.timing = true;
    cfg.agent.iterations = iterations;
    cfg.ga.max_evaluations = Some(iterations);
    cfg.ga.stagnation = usize::MAX;
    let sc = cfg.scenario("reference").map_err(err)?.clone();
    let mut records = Vec::new();
    // interleaved so drift in machine load hits both learners alike
    use Algorithm::{Ac, Ga, PiAc};
    for (k, a) in [Ac, PiAc, PiAc, Ac, Ac, PiAc, Ga].into_iter().enumerate() {
        let run = resolve_run(&cfg, &sc, a, 1);
        let o = execute(&run, &out.join(format!("runtime/{k}_{a}"))).map_err(err)?;
        records.push((a, o.record));
    }
    let report = piac_core::experiment::compare_runtime(&records);
    let ms = |a| report.get(a).map(|e| e.ms_per_100).unwrap_or(f64::NAN);
    let (pi, ac, ga) = (ms(Algorithm::PiAc), ms(Algorithm::Ac), ms(Algorithm::Ga));
    let ratio = report.pi_ac_over_ac.unwrap_or(f64::NAN);
    let text = format!(
        "ms per 100 iterations: PI-AC {pi:.0}, AC {ac:.0}, GA {ga:.0} (per 100 generations); PI-AC/AC {ratio:.3}"
    );
    if (ratio - 1.0).abs() <= 0.10 && ga > pi && ga > ac {
        Ok(text)
    } else {
        Err(text)
    }
}

// ---- criterion 10 ----------------------------------------------------------

pub fn sphere_env() -> QuadraticEnv {
    let bx = ActionBox::new(vec![-5.0; 4], vec![5.0; 4]).unwrap();
    QuadraticEnv::new(vec![1.0, -2.0, 0.5, 3.0], bx).unwrap()
}

pub fn check_ga() -> Check {
    let env = sphere_env();
    let cfg = GaConfig {
        population: 20,
        generations: 50,
        stagnation: usize::MAX,
        seed: 5,
        ..GaConfig::default()
    };
    let res = run_ga(&env, &cfg).map_err(err)?;
    let best: Vec<f64> = res.record.rows.iter().map(|r| r.breakdown.f).collect();
    if best.windows(2).any(|w| w[1] > w[0]) {
        return Err("best-so-far fitness increased".into());
    }
    // best at the end of each generation
    let mut per_gen = Vec::new();
    for row in &res.record.rows {
        let g = row.generation.unwrap();
        if per_gen.len() <= g {
            per_gen.push(row.breakdown.f);
        } else {
            per_gen[g] = row.breakdown.f;
        }
    }
    let f = res.best.fitness.unwrap_or(f64::INFINITY);
    let text = format!(
        "sphere best {f:.2e} after {} generations ({} evaluations); monotone over {} generations",
        res.generations,
        res.evaluations,
        per_gen.len()
    );
    if f < 0.01 && res.generations <= 50 && env.action_box().contains(&res.best.genome) {
        Ok(text)
    } else {
        Err(text)
    }
}
