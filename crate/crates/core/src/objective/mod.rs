//! Coordination objective: economic cost of the VI reserve, voltage cost,
//! budget and voltage-band penalties, and the reward `r = -f`.

mod action;

use serde::{Deserialize, Serialize};

pub use action::{ActionBox, ViAction};

use crate::error::{Error, Result};
use crate::grid::{Bus, GridModel, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    /// Largest expected frequency deviation (p.u.).
    pub domega_max: f64,
    /// Largest expected rate of change of frequency (p.u./s).
    pub rocof_max: f64,
    /// Half-width of the admissible voltage band (p.u.).
    pub dv_max: f64,
    pub c_h: f64,
    pub c_d: f64,
    pub c_dv: f64,
    pub h_budget: f64,
    pub d_budget: f64,
    /// System base power used to weight plant ratings.
    pub s_sys: f64,
    /// Reward assigned to diverged episodes.
    pub reward_floor: f64,
    pub weight_cost: f64,
    pub weight_voltage: f64,
    pub weight_penalty: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            domega_max: 0.01,
            rocof_max: 0.02,
            dv_max: 0.05,
            c_h: 10.0,
            c_d: 10.0,
            c_dv: 10.0,
            h_budget: 13.0,
            d_budget: 13.0,
            s_sys: 1.0,
            reward_floor: -100.0,
            weight_cost: 1.0,
            weight_voltage: 1.0,
            weight_penalty: 1.0,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            (self.domega_max, "domega_max"),
            (self.rocof_max, "rocof_max"),
            (self.dv_max, "dv_max"),
            (self.c_h, "c_h"),
            (self.c_d, "c_d"),
            (self.c_dv, "c_dv"),
            (self.s_sys, "s_sys"),
        ];
        for (v, name) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("objective {name} must be positive")));
            }
        }
        for (v, name) in [
            (self.h_budget, "h_budget"),
            (self.d_budget, "d_budget"),
            (self.weight_cost, "weight_cost"),
            (self.weight_voltage, "weight_voltage"),
            (self.weight_penalty, "weight_penalty"),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "objective {name} must be non-negative"
                )));
            }
        }
        if !self.reward_floor.is_finite() {
            return Err(Error::Config("reward floor must be finite".into()));
        }
        Ok(())
    }
}

/// Cost and penalty terms of one evaluated action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub c: f64,
    pub xi: f64,
    pub p_h: f64,
    pub p_d: f64,
    pub p_dv: f64,
    pub f: f64,
    pub r: f64,
    /// The episode diverged and `r` is the configured floor.
    pub diverged: bool,
}

impl RewardBreakdown {
    pub fn penalties(&self) -> f64 {
        self.p_h + self.p_d + self.p_dv
    }
}

/// Power a plant must hold for its inertia and damping setpoints. Peak ROCOF
/// and peak deviation are not expected together, so the larger term sizes it.
pub fn p_max_plant(h: f64, d: f64, cfg: &ObjectiveConfig) -> f64 {
    (2.0 * h * cfg.rocof_max).max(d * cfg.domega_max)
}

/// `C = sum_i c_i * P_max,i`.
pub fn economic_cost(action: &ViAction, cost_factors: &[f64], cfg: &ObjectiveConfig) -> f64 {
    debug_assert_eq!(action.n_plant(), cost_factors.len());
    action
        .h
        .iter()
        .zip(&action.d)
        .zip(cost_factors)
        .map(|((h, d), c)| c * p_max_plant(*h, *d, cfg))
        .sum()
}

/// Rating-weighted system totals `(H_VI,sys, D_VI,sys)`.
pub fn aggregate_vi(action: &ViAction, ratings: &[f64], s_sys: f64) -> (f64, f64) {
    debug_assert_eq!(action.n_plant(), ratings.len());
    let weighted = |v: &[f64]| v.iter().zip(ratings).map(|(x, s)| x * s / s_sys).sum();
    (weighted(&action.h), weighted(&action.d))
}

/// Linear penalty on the shortfall below a budget; zero once it is met.
pub fn budget_penalty(provided: f64, budget: f64, coeff: f64) -> f64 {
    let gap = budget - provided;
    if gap <= 0.0 {
        0.0
    } else {
        coeff * gap
    }
}

/// `xi = sum_i c_V,i * | |V_i| - V_set,i |` over the final voltages.
pub fn voltage_cost_from(v_final: &[f64], buses: &[Bus]) -> f64 {
    v_final
        .iter()
        .zip(buses)
        .map(|(v, b)| b.c_v * (v - b.v_set).abs())
        .sum()
}

pub fn voltage_cost(traj: &Trajectory, model: &GridModel) -> f64 {
    voltage_cost_from(traj.final_v_mag(), &model.buses)
}

/// Sum over buses of `c_dV * (|dV_i| - dV_max)` where the band is violated.
pub fn voltage_penalty_from(v_final: &[f64], buses: &[Bus], cfg: &ObjectiveConfig) -> f64 {
    v_final
        .iter()
        .zip(buses)
        .map(|(v, b)| {
            let dv = (v - b.v_set).abs();
            if dv <= cfg.dv_max {
                0.0
            } else {
                cfg.c_dv * (dv - cfg.dv_max)
            }
        })
        .sum()
}

pub fn voltage_penalty(traj: &Trajectory, model: &GridModel, cfg: &ObjectiveConfig) -> f64 {
    voltage_penalty_from(traj.final_v_mag(), &model.buses, cfg)
}

/// Combine the cost terms. Diverged trajectories receive the reward floor.
pub fn reward(
    traj: &Trajectory,
    action: &ViAction,
    model: &GridModel,
    cfg: &ObjectiveConfig,
) -> RewardBreakdown {
    let c = economic_cost(action, &model.cost_factors, cfg);
    let (h_sys, d_sys) = aggregate_vi(action, &model.plant_ratings(), cfg.s_sys);
    let p_h = budget_penalty(h_sys, cfg.h_budget, cfg.c_h);
    let p_d = budget_penalty(d_sys, cfg.d_budget, cfg.c_d);
    if traj.diverged || traj.is_empty() {
        return RewardBreakdown {
            c,
            xi: 0.0,
            p_h,
            p_d,
            p_dv: 0.0,
            f: -cfg.reward_floor,
            r: cfg.reward_floor,
            diverged: true,
        };
    }
    let xi = voltage_cost(traj, model);
    let p_dv = voltage_penalty(traj, model, cfg);
    compose(c, xi, p_h, p_d, p_dv, cfg)
}

pub fn compose(
    c: f64,
    xi: f64,
    p_h: f64,
    p_d: f64,
    p_dv: f64,
    cfg: &ObjectiveConfig,
) -> RewardBreakdown {
    let f = cfg.weight_cost * c + cfg.weight_voltage * xi + cfg.weight_penalty * (p_h + p_d + p_dv);
    RewardBreakdown {
        c,
        xi,
        p_h,
        p_d,
        p_dv,
        f,
        r: -f,
        diverged: false,
    }
}

/// Per-plant box `0 <= H_i <= P_rated/(2 rocof_max)`, `0 <= D_i <= P_rated/domega_max`
/// over the flat layout `[H.., D..]`.
pub fn action_box(model: &GridModel, cfg: &ObjectiveConfig) -> ActionBox {
    let h_max = model
        .plants
        .iter()
        .map(|p| p.p_rated / (2.0 * cfg.rocof_max));
    let d_max = model.plants.iter().map(|p| p.p_rated / cfg.domega_max);
    let upper: Vec<f64> = h_max.chain(d_max).collect();
    ActionBox {
        lower: vec![0.0; upper.len()],
        upper,
    }
}

/// Clip into the box, then raise inertia (damping) uniformly toward the
/// ceilings until the system budget is met.
pub fn project_action(
    action: &ViAction,
    model: &GridModel,
    cfg: &ObjectiveConfig,
) -> Result<ViAction> {
    if action.n_plant() != model.n_plant() || action.d.len() != model.n_plant() {
        return Err(Error::Dimension(format!(
            "action for {} plants on a grid with {}",
            action.n_plant(),
            model.n_plant()
        )));
    }
    if action.to_flat().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("action".into()));
    }
    let bx = action_box(model, cfg);
    let clipped = ViAction::from_flat(&bx.clip(&action.to_flat()))?;
    let n = model.n_plant();
    let weights: Vec<f64> = model.plants.iter().map(|p| p.s_n / cfg.s_sys).collect();
    let h = raise_to_budget(
        &clipped.h,
        &bx.upper[..n],
        &weights,
        cfg.h_budget,
        "inertia",
    )?;
    let d = raise_to_budget(
        &clipped.d,
        &bx.upper[n..],
        &weights,
        cfg.d_budget,
        "damping",
    )?;
    Ok(ViAction { h, d })
}

fn raise_to_budget(
    values: &[f64],
    ceilings: &[f64],
    weights: &[f64],
    budget: f64,
    what: &str,
) -> Result<Vec<f64>> {
    let total = |v: &[f64]| -> f64 { v.iter().zip(weights).map(|(x, w)| x * w).sum() };
    let provided = total(values);
    if provided >= budget {
        return Ok(values.to_vec());
    }
    let reachable = total(ceilings);
    if reachable < budget {
        return Err(Error::Infeasible(format!(
            "{what} budget {budget} exceeds the {reachable} reachable at all plant ceilings"
        )));
    }
    let at = |t: f64| -> Vec<f64> {
        values
            .iter()
            .zip(ceilings)
            .map(|(v, c)| (v + t * (c - v)).min(*c))
            .collect()
    };
    let mut t = ((budget - provided) / (reachable - provided)).min(1.0);
    let mut out = at(t);
    // rounding can leave the total a few ulps short
    while total(&out) < budget && t < 1.0 {
        t = (t + f64::EPSILON * t.max(1e-300)).min(1.0);
        out = at(t);
    }
    if total(&out) < budget {
        out = ceilings.to_vec();
    }
    Ok(out)
}
