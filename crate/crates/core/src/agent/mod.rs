//! Deterministic-policy actor-critic with replay, target networks and OU
//! exploration. The critic carries three extra heads `(H, D, K)` that are
//! regularized by the single-machine physics loss; `phi = 0` is the plain
//! actor-critic.

mod buffer;
mod noise;
mod physics;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use buffer::{ReplayBuffer, Transition};
pub use noise::OuNoise;
pub use physics::{physics_residual, surrogate_trajectory, Residual, SurrogateParams, H_FLOOR};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::nn::{soft_update, AdamState, Mlp};
use crate::objective::{ActionBox, RewardBreakdown};
use crate::record::{LossParts, RecordRow, TrainingRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub buffer_size: usize,
    /// Iterations between update blocks.
    pub target_step: usize,
    /// Gradient updates per block.
    pub repeat_times: usize,
    pub minibatch: usize,
    pub tau: f64,
    /// Weight of the physics loss.
    pub phi: f64,
    pub hidden: usize,
    pub ou_theta: f64,
    /// OU volatility as a fraction of each action half-width.
    pub noise_scale: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            actor_lr: 1e-5,
            critic_lr: 2e-5,
            gamma: 0.995,
            buffer_size: 300,
            target_step: 50,
            repeat_times: 10,
            minibatch: 50,
            tau: 2e-4,
            phi: 5000.0,
            hidden: 100,
            ou_theta: 0.15,
            noise_scale: 1.0,
            iterations: 1000,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("agent: {m}")));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie in (0, 1)");
        }
        if !(self.phi.is_finite() && self.phi >= 0.0) {
            return bad("phi must be non-negative");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.minibatch == 0 || self.target_step == 0 || self.hidden == 0 {
            return bad("minibatch, target_step and hidden must be positive");
        }
        if self.minibatch > self.buffer_size {
            return bad("minibatch larger than the replay buffer");
        }
        if !(self.ou_theta > 0.0 && self.noise_scale >= 0.0) {
            return bad("ou_theta must be positive and noise_scale non-negative");
        }
        Ok(())
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticOutput {
    pub q: f64,
    pub lambda: SurrogateParams,
}

/// Critic input: scaled state followed by the normalized action.
pub fn critic_input(state: &[f64], scale: &[f64], u: &[f64]) -> Vec<f64> {
    state
        .iter()
        .zip(scale)
        .map(|(s, k)| s / k)
        .chain(u.iter().copied())
        .collect()
}

fn scaled(state: &[f64], scale: &[f64]) -> Vec<f64> {
    state.iter().zip(scale).map(|(s, k)| s / k).collect()
}

pub fn critic_output(critic: &Mlp, input: &[f64]) -> Result<CriticOutput> {
    let o = critic.forward(input)?;
    Ok(CriticOutput {
        q: o[0],
        lambda: SurrogateParams {
            h: softplus(o[1]),
            d: o[2],
            k: softplus(o[3]),
        },
    })
}

/// Policy output in normalized coordinates.
pub fn actor_unit(actor: &Mlp, state_scaled: &[f64]) -> Result<Vec<f64>> {
    Ok(actor
        .forward(state_scaled)?
        .into_iter()
        .map(f64::tanh)
        .collect())
}

/// `y = r + gamma * Q'(s', mu'(s'))` from the frozen target networks.
pub fn critic_targets(
    batch: &[&Transition],
    target_actor: &Mlp,
    target_critic: &Mlp,
    gamma: f64,
    scale: &[f64],
) -> Result<Vec<f64>> {
    batch
        .iter()
        .map(|t| {
            let u = actor_unit(target_actor, &scaled(&t.next_state, scale))?;
            let q = target_critic.forward(&critic_input(&t.next_state, scale, &u))?[0];
            Ok(t.reward + gamma * q)
        })
        .collect()
}

/// `L = L_critic + phi * L_physics` over a minibatch and its gradient with
/// respect to the critic parameters.
pub fn critic_loss_grad(
    critic: &Mlp,
    batch: &[&Transition],
    targets: &[f64],
    phi: f64,
    scale: &[f64],
) -> Result<(LossParts, Vec<f64>)> {
    if batch.is_empty() || batch.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} transitions for {} targets",
            batch.len(),
            targets.len()
        )));
    }
    let inv_b = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; critic.num_params()];
    let (mut l_critic, mut l_physics) = (0.0, 0.0);
    for (t, y) in batch.iter().zip(targets) {
        let x = critic_input(&t.state, scale, &t.action);
        let o = critic.forward(&x)?;
        let err = o[0] - y;
        l_critic += err * err * inv_b;
        let lambda = SurrogateParams {
            h: softplus(o[1]),
            d: o[2],
            k: softplus(o[3]),
        };
        let res = physics_residual(&t.measurement, lambda);
        l_physics += res.value * inv_b;
        let w = phi * inv_b;
        let d_out = [
            2.0 * err * inv_b,
            w * res.grad[0] * sigmoid(o[1]),
            w * res.grad[1],
            w * res.grad[2] * sigmoid(o[3]),
        ];
        let g = critic.backward(&x, &d_out)?;
        for (a, b) in grad.iter_mut().zip(&g.params) {
            *a += b;
        }
    }
    let loss = LossParts {
        total: l_critic + phi * l_physics,
        critic: l_critic,
        physics: l_physics,
    };
    if !(loss.total.is_finite() && grad.iter().all(|g| g.is_finite())) {
        return Err(Error::TrainingAborted(format!(
            "non-finite critic loss: L = {}, L_critic = {}, L_physics = {}",
            loss.total, loss.critic, loss.physics
        )));
    }
    Ok((loss, grad))
}

/// Mean `Q(s, mu(s))` over the states and its gradient with respect to the
/// actor parameters. Only the Q head contributes.
pub fn actor_objective_grad(
    actor: &Mlp,
    critic: &Mlp,
    states: &[Vec<f64>],
    scale: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let inv_b = 1.0 / states.len().max(1) as f64;
    let n_state = scale.len();
    let mut grad = vec![0.0; actor.num_params()];
    let mut mean_q = 0.0;
    for s in states {
        let s_in = scaled(s, scale);
        let u = actor_unit(actor, &s_in)?;
        let x = critic_input(s, scale, &u);
        mean_q += critic.forward(&x)?[0] * inv_b;
        let dq = critic.backward(&x, &[1.0, 0.0, 0.0, 0.0])?;
        let dz: Vec<f64> = u
            .iter()
            .zip(&dq.input[n_state..])
            .map(|(u, g)| g * (1.0 - u * u) * inv_b)
            .collect();
        let g = actor.backward(&s_in, &dz)?;
        for (a, b) in grad.iter_mut().zip(&g.params) {
            *a += b;
        }
    }
    if !grad.iter().all(|g| g.is_finite()) {
        return Err(Error::TrainingAborted("non-finite actor gradient".into()));
    }
    Ok((mean_q, grad))
}

/// Networks, optimizers, replay buffer and exploration state of one learner.
#[derive(Debug, Clone)]
pub struct Agent {
    pub cfg: AgentConfig,
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    actor_opt: AdamState,
    critic_opt: AdamState,
    pub buffer: ReplayBuffer,
    pub noise: OuNoise,
    rng: ChaCha8Rng,
    scale: Vec<f64>,
    bx: ActionBox,
}

impl Agent {
    pub fn new(cfg: &AgentConfig, state_scale: Vec<f64>, bx: ActionBox) -> Result<Self> {
        cfg.validate()?;
        if state_scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config("state scale must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let n_s = state_scale.len();
        let n_a = bx.dim();
        let actor = Mlp::new(&[n_s, cfg.hidden, n_a], &mut rng)?;
        let critic = Mlp::new(&[n_s + n_a, cfg.hidden, 4], &mut rng)?;
        Ok(Self {
            cfg: cfg.clone(),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor_opt: AdamState::new(actor.num_params(), cfg.actor_lr),
            critic_opt: AdamState::new(critic.num_params(), cfg.critic_lr),
            actor,
            critic,
            buffer: ReplayBuffer::new(cfg.buffer_size),
            noise: OuNoise::new(cfg.ou_theta, vec![cfg.noise_scale; n_a], 1.0),
            rng,
            scale: state_scale,
            bx,
        })
    }

    pub fn state_scale(&self) -> &[f64] {
        &self.scale
    }

    /// Deterministic in-box action.
    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        let u = actor_unit(&self.actor, &scaled(state, &self.scale))?;
        Ok(self.bx.from_unit(&u))
    }

    /// Greedy action plus OU noise, clipped; returns normalized and in-box forms.
    pub fn explore(&mut self, state: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let u = actor_unit(&self.actor, &scaled(state, &self.scale))?;
        let n = self.noise.sample(&mut self.rng);
        let u: Vec<f64> = u
            .iter()
            .zip(n)
            .map(|(a, e)| (a + e).clamp(-1.0, 1.0))
            .collect();
        let a = self.bx.from_unit(&u);
        Ok((u, a))
    }

    pub fn evaluate_critic(&self, state: &[f64], action: &[f64]) -> Result<CriticOutput> {
        let u = self.bx.to_unit(action);
        critic_output(&self.critic, &critic_input(state, &self.scale, &u))
    }

    /// One gradient repeat: critic step, actor step, soft target updates.
    pub fn update(&mut self) -> Result<Option<LossParts>> {
        let Some(batch) = self.buffer.sample(&mut self.rng, self.cfg.minibatch) else {
            return Ok(None);
        };
        let targets = critic_targets(
            &batch,
            &self.target_actor,
            &self.target_critic,
            self.cfg.gamma,
            &self.scale,
        )?;
        let (loss, grad) =
            critic_loss_grad(&self.critic, &batch, &targets, self.cfg.phi, &self.scale)?;
        let states: Vec<Vec<f64>> = batch.iter().map(|t| t.state.clone()).collect();
        self.critic_opt.step(self.critic.params_mut(), &grad)?;

        let (_, g_actor) = actor_objective_grad(&self.actor, &self.critic, &states, &self.scale)?;
        let ascent: Vec<f64> = g_actor.iter().map(|g| -g).collect();
        self.actor_opt.step(self.actor.params_mut(), &ascent)?;

        soft_update(&mut self.target_critic, &self.critic, self.cfg.tau)?;
        soft_update(&mut self.target_actor, &self.actor, self.cfg.tau)?;
        Ok(Some(loss))
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub record: TrainingRecord,
    /// Greedy action at the initial state after training, as applied.
    pub final_action: Option<Vec<f64>>,
    pub final_breakdown: Option<RewardBreakdown>,
    pub agent: Agent,
}

/// Run the actor-critic loop for `cfg.iterations` episodes.
///
/// Each iteration explores from the current state, stores the transition and,
/// every `target_step` iterations, runs `repeat_times` updates. The reward
/// columns of the record track the greedy action at the initial state, which
/// is re-evaluated whenever the actor has changed.
pub fn train(env: &dyn Environment, cfg: &AgentConfig) -> Result<TrainResult> {
    let mut agent = Agent::new(cfg, env.state_scale(), env.action_box().clone())?;
    let s0 = env.initial_state();
    let mut s = s0.clone();
    let mut greedy: Option<(Vec<f64>, RewardBreakdown, [f64; 3])> = None;
    let mut record = TrainingRecord::default();

    for it in 0..cfg.iterations {
        let start = Instant::now();
        let (u, a) = agent.explore(&s)?;
        let out = env.evaluate(&a)?;
        if !out.breakdown.r.is_finite() {
            return Err(Error::TrainingAborted(format!(
                "non-finite reward at iteration {it}"
            )));
        }
        let r_explore = out.breakdown.r;
        agent.buffer.push(Transition {
            state: s,
            action: u,
            reward: r_explore,
            next_state: out.next_state.clone(),
            measurement: out.measurement,
        });
        s = out.next_state;

        let mut loss = None;
        if (it + 1) % cfg.target_step == 0 && agent.buffer.len() >= cfg.minibatch {
            let mut sum = LossParts {
                total: 0.0,
                critic: 0.0,
                physics: 0.0,
            };
            let mut count = 0usize;
            for _ in 0..cfg.repeat_times {
                if let Some(l) = agent.update()? {
                    sum.total += l.total;
                    sum.critic += l.critic;
                    sum.physics += l.physics;
                    count += 1;
                }
            }
            if count > 0 {
                let k = count as f64;
                loss = Some(LossParts {
                    total: sum.total / k,
                    critic: sum.critic / k,
                    physics: sum.physics / k,
                });
                greedy = None;
            }
        }

        let (_, breakdown, hats) = match &greedy {
            Some(g) => g.clone(),
            None => {
                let a = agent.act(&s0)?;
                let o = env.evaluate(&a)?;
                let c = agent.evaluate_critic(&s0, &a)?;
                let g = (o.applied, o.breakdown, [c.lambda.h, c.lambda.d, c.lambda.k]);
                greedy = Some(g.clone());
                g
            }
        };
        record.rows.push(RecordRow {
            iteration: it,
            generation: None,
            breakdown,
            r_explore,
            loss,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            lambda_hat: Some(hats),
        });
    }

    let (final_action, final_breakdown) = match greedy {
        Some((a, b, _)) => (Some(a), Some(b)),
        None => (None, None),
    };
    Ok(TrainResult {
        record,
        final_action,
        final_breakdown,
        agent,
    })
}
