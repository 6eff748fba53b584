//! Episode-evaluation interface shared by the learners and the GA.

use crate::error::{Error, Result};
use crate::grid::{EpisodeConfig, GridModel, Simulator, Trajectory};
use crate::objective::{
    action_box, project_action, reward, ActionBox, ObjectiveConfig, RewardBreakdown, ViAction,
};

/// Measured generator series of one episode, used by the physics loss.
/// Angles are relative to the pre-disturbance operating point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Measurement {
    pub dt: f64,
    pub domega: Vec<f64>,
    pub delta: Vec<f64>,
    pub phi: Vec<f64>,
    /// Size of the disturbance step in mechanical power.
    pub u_applied: f64,
}

impl Measurement {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let delta = traj.delta();
        let phi = traj.phi();
        let (d0, p0) = (
            delta.first().copied().unwrap_or(0.0),
            phi.first().copied().unwrap_or(0.0),
        );
        Self {
            dt: traj.dt,
            domega: traj.domega(),
            delta: delta.iter().map(|d| d - d0).collect(),
            phi: phi.iter().map(|p| p - p0).collect(),
            u_applied: traj.p_m_step,
        }
    }

    pub fn len(&self) -> usize {
        self.domega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domega.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// Action actually applied after projection (flat `[H.., D..]`).
    pub applied: Vec<f64>,
    pub breakdown: RewardBreakdown,
    pub next_state: Vec<f64>,
    pub measurement: Measurement,
}

pub trait Environment: Sync {
    fn action_box(&self) -> &ActionBox;

    fn state_dim(&self) -> usize;

    /// State observed before the first episode.
    fn initial_state(&self) -> Vec<f64>;

    /// Divisors applied to the state before it enters a network.
    fn state_scale(&self) -> Vec<f64> {
        vec![1.0; self.state_dim()]
    }

    fn evaluate(&self, action: &[f64]) -> Result<Outcome>;
}

/// One disturbance episode on a grid, scored by the coordination objective.
#[derive(Debug, Clone)]
pub struct GridEnv {
    sim: Simulator,
    episode: EpisodeConfig,
    objective: ObjectiveConfig,
    bx: ActionBox,
}

impl GridEnv {
    pub fn new(
        model: GridModel,
        episode: EpisodeConfig,
        objective: ObjectiveConfig,
    ) -> Result<Self> {
        objective.validate()?;
        let bx = action_box(&model, &objective);
        let sim = Simulator::new(model, episode.load_level)?;
        // fail early when even the all-ceiling action misses a budget
        let ceiling = ViAction::from_flat(&bx.upper)?;
        project_action(&ceiling, sim.model(), &objective)?;
        Ok(Self {
            sim,
            episode,
            objective,
            bx,
        })
    }

    pub fn model(&self) -> &GridModel {
        self.sim.model()
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn objective(&self) -> &ObjectiveConfig {
        &self.objective
    }

    pub fn episode(&self) -> &EpisodeConfig {
        &self.episode
    }

    /// Project, simulate and score, returning the trajectory as well.
    pub fn run(&self, action: &[f64]) -> Result<(Outcome, Trajectory)> {
        let raw = ViAction::from_flat(action)?;
        let applied = project_action(&raw, self.sim.model(), &self.objective)?;
        let traj = self.sim.run(&applied, &self.episode)?;
        let breakdown = reward(&traj, &applied, self.sim.model(), &self.objective);
        let last = traj
            .generator
            .last()
            .ok_or_else(|| Error::NonFinite("episode produced no samples".into()))?;
        let delta0 = traj.generator[0].delta;
        let outcome = Outcome {
            applied: applied.to_flat(),
            breakdown,
            next_state: vec![last.domega, last.delta - delta0],
            measurement: Measurement::from_trajectory(&traj),
        };
        Ok((outcome, traj))
    }
}

impl Environment for GridEnv {
    fn action_box(&self) -> &ActionBox {
        &self.bx
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![0.0, 0.0]
    }

    fn state_scale(&self) -> Vec<f64> {
        vec![self.objective.domega_max, 1.0]
    }

    fn evaluate(&self, action: &[f64]) -> Result<Outcome> {
        self.run(action).map(|(o, _)| o)
    }
}

/// Stateless toy problem with reward `-||a - target||^2`.
#[derive(Debug, Clone)]
pub struct QuadraticEnv {
    pub target: Vec<f64>,
    bx: ActionBox,
}

impl QuadraticEnv {
    pub fn new(target: Vec<f64>, bx: ActionBox) -> Result<Self> {
        if target.len() != bx.dim() {
            return Err(Error::Dimension(format!(
                "target has {} components, box {}",
                target.len(),
                bx.dim()
            )));
        }
        Ok(Self { target, bx })
    }
}

impl Environment for QuadraticEnv {
    fn action_box(&self) -> &ActionBox {
        &self.bx
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![0.0, 0.0]
    }

    fn evaluate(&self, action: &[f64]) -> Result<Outcome> {
        if action.len() != self.bx.dim() {
            return Err(Error::Dimension(format!(
                "action has {} components, box {}",
                action.len(),
                self.bx.dim()
            )));
        }
        let a = self.bx.clip(action);
        let f: f64 = a
            .iter()
            .zip(&self.target)
            .map(|(x, t)| (x - t).powi(2))
            .sum();
        let breakdown = RewardBreakdown {
            c: f,
            xi: 0.0,
            p_h: 0.0,
            p_d: 0.0,
            p_dv: 0.0,
            f,
            r: -f,
            diverged: false,
        };
        Ok(Outcome {
            applied: a,
            breakdown,
            next_state: vec![0.0, 0.0],
            measurement: Measurement::default(),
        })
    }
}
