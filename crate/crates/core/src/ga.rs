//! Rank-selection genetic algorithm over the action box.

use std::time::Instant;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Environment, Outcome};
use crate::error::{Error, Result};
use crate::objective::{ActionBox, RewardBreakdown};
use crate::record::{RecordRow, TrainingRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population: usize,
    /// Generations bred after the initial population.
    pub generations: usize,
    pub elitism: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    /// Mutation standard deviation as a fraction of each box width.
    pub mutation_scale: f64,
    /// Stop after this many generations without improvement.
    pub stagnation: usize,
    /// Cap on episode evaluations.
    pub max_evaluations: Option<usize>,
    pub seed: u64,
    /// Evaluate each generation on the rayon pool.
    pub parallel: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 20,
            generations: 100,
            elitism: 1,
            crossover_rate: 0.8,
            mutation_rate: 0.1,
            mutation_scale: 0.1,
            stagnation: 20,
            max_evaluations: None,
            seed: 0,
            parallel: false,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::Config("ga: population must be at least 2".into()));
        }
        if self.elitism >= self.population {
            return Err(Error::Config(
                "ga: elitism must be below the population size".into(),
            ));
        }
        for (v, name) in [
            (self.crossover_rate, "crossover_rate"),
            (self.mutation_rate, "mutation_rate"),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("ga: {name} must lie in [0, 1]")));
            }
        }
        if !(self.mutation_scale.is_finite() && self.mutation_scale >= 0.0) {
            return Err(Error::Config(
                "ga: mutation_scale must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Vec<f64>,
    /// Objective value `f`, lower is better.
    pub fitness: Option<f64>,
}

pub fn init_population<R: Rng + ?Sized>(n: usize, bx: &ActionBox, rng: &mut R) -> Vec<Individual> {
    (0..n)
        .map(|_| Individual {
            genome: bx
                .lower
                .iter()
                .zip(&bx.upper)
                .map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
                .collect(),
            fitness: None,
        })
        .collect()
}

/// Rank-proportional selection probabilities for minimized fitness values.
/// Rank 1 is the best and carries weight `N`; tied values share their mean rank.
pub fn selection_probabilities(fitness: &[f64]) -> Vec<f64> {
    let n = fitness.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]));
    let mut rank = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && fitness[order[j + 1]] == fitness[order[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            rank[order[k]] = mean;
        }
        i = j + 1;
    }
    let weights: Vec<f64> = rank.iter().map(|r| n as f64 + 1.0 - r).collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

/// Draw `pairs` parent index pairs by rank-proportional sampling.
pub fn select_parents<R: Rng + ?Sized>(
    population: &[Individual],
    pairs: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let fitness: Vec<f64> = population
        .iter()
        .map(|i| {
            i.fitness
                .ok_or_else(|| Error::Config("selection needs evaluated individuals".into()))
        })
        .collect::<Result<_>>()?;
    let dist = WeightedIndex::new(selection_probabilities(&fitness))
        .map_err(|e| Error::Config(format!("selection weights: {e}")))?;
    Ok((0..pairs)
        .map(|_| (dist.sample(rng), dist.sample(rng)))
        .collect())
}

/// Arithmetic crossover with per-gene random weights (or replication), then
/// Gaussian mutation and clipping to the box.
pub fn crossover_mutate<R: Rng + ?Sized>(
    a: &[f64],
    b: &[f64],
    cfg: &GaConfig,
    bx: &ActionBox,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let (mut c1, mut c2) = (a.to_vec(), b.to_vec());
    if rng.random::<f64>() < cfg.crossover_rate {
        for i in 0..a.len() {
            let w: f64 = rng.random();
            c1[i] = b[i] + w * (a[i] - b[i]);
            c2[i] = a[i] + w * (b[i] - a[i]);
        }
    }
    for child in [&mut c1, &mut c2] {
        for (i, g) in child.iter_mut().enumerate() {
            if rng.random::<f64>() < cfg.mutation_rate {
                let z: f64 = rng.sample(StandardNormal);
                *g += z * cfg.mutation_scale * bx.width(i);
            }
        }
    }
    (bx.clip(&c1), bx.clip(&c2))
}

#[derive(Debug, Clone)]
pub struct GaResult {
    pub record: TrainingRecord,
    pub best: Individual,
    /// Best action as applied by the environment.
    pub final_action: Option<Vec<f64>>,
    pub final_breakdown: Option<RewardBreakdown>,
    pub evaluations: usize,
    pub generations: usize,
}

fn evaluate_all(
    env: &dyn Environment,
    genomes: &[Vec<f64>],
    parallel: bool,
) -> Result<Vec<Outcome>> {
    if parallel {
        genomes.par_iter().map(|g| env.evaluate(g)).collect()
    } else {
        genomes.iter().map(|g| env.evaluate(g)).collect()
    }
}

struct Best {
    fitness: f64,
    genome: Vec<f64>,
    outcome: Option<Outcome>,
}

/// Evolve until the generation budget, the evaluation cap or the stagnation
/// limit is reached. One record row per episode evaluation.
pub fn run_ga(env: &dyn Environment, cfg: &GaConfig) -> Result<GaResult> {
    cfg.validate()?;
    let bx = env.action_box().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cap = cfg.max_evaluations.unwrap_or(usize::MAX);
    let mut record = TrainingRecord::default();
    let mut best = Best {
        fitness: f64::INFINITY,
        genome: Vec::new(),
        outcome: None,
    };

    let mut pop = init_population(cfg.population, &bx, &mut rng);
    let mut generation = 0;
    let mut stale = 0;
    loop {
        let start = Instant::now();
        let pending: Vec<usize> = (0..pop.len())
            .filter(|&i| pop[i].fitness.is_none())
            .take(cap.saturating_sub(record.len()))
            .collect();
        let genomes: Vec<Vec<f64>> = pending.iter().map(|&i| pop[i].genome.clone()).collect();
        let outcomes = evaluate_all(env, &genomes, cfg.parallel)?;
        let per_eval = start.elapsed().as_secs_f64() * 1e3 / outcomes.len().max(1) as f64;

        let before = best.fitness;
        for (&i, out) in pending.iter().zip(outcomes) {
            let f = out.breakdown.f;
            if !f.is_finite() {
                return Err(Error::TrainingAborted(format!(
                    "non-finite fitness at evaluation {}",
                    record.len()
                )));
            }
            pop[i].fitness = Some(f);
            let r_explore = out.breakdown.r;
            if f < best.fitness {
                best = Best {
                    fitness: f,
                    genome: pop[i].genome.clone(),
                    outcome: Some(out),
                };
            }
            let tracked = best.outcome.as_ref().map(|o| o.breakdown);
            record.rows.push(RecordRow {
                iteration: record.len(),
                generation: Some(generation),
                breakdown: tracked.expect("finite fitness sets the best"),
                r_explore,
                loss: None,
                wall_ms: per_eval,
                lambda_hat: None,
            });
        }
        stale = if best.fitness < before { 0 } else { stale + 1 };

        let unevaluated = pop.iter().any(|i| i.fitness.is_none());
        if unevaluated
            || record.len() >= cap
            || generation >= cfg.generations
            || (generation > 0 && stale >= cfg.stagnation)
        {
            // drop individuals the evaluation cap left unscored
            pop.retain(|i| i.fitness.is_some());
            break;
        }

        pop.sort_by(|a, b| a.fitness.unwrap().total_cmp(&b.fitness.unwrap()));
        let mut next: Vec<Individual> = pop[..cfg.elitism].to_vec();
        let pairs = (cfg.population - next.len()).div_ceil(2);
        for (p, q) in select_parents(&pop, pairs, &mut rng)? {
            let (c1, c2) = crossover_mutate(&pop[p].genome, &pop[q].genome, cfg, &bx, &mut rng);
            for genome in [c1, c2] {
                if next.len() < cfg.population {
                    next.push(Individual {
                        genome,
                        fitness: None,
                    });
                }
            }
        }
        pop = next;
        generation += 1;
    }

    let evaluations = record.len();
    let (final_action, final_breakdown) = match best.outcome {
        Some(o) => (Some(o.applied), Some(o.breakdown)),
        None => (None, None),
    };
    Ok(GaResult {
        record,
        best: Individual {
            genome: best.genome,
            fitness: best.fitness.is_finite().then_some(best.fitness),
        },
        final_action,
        final_breakdown,
        evaluations,
        generations: generation,
    })
}
