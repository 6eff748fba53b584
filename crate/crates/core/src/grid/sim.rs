use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::devices::{
    filter_derivatives, generator_derivatives, synchronverter_derivatives, GeneratorState,
    SynchronverterState, MIN_ACTIVE_INERTIA,
};
use crate::grid::model::{GridModel, SynchronverterParams};
use crate::grid::network::{build_ybus, invert, CMatrix, CVector};
use crate::grid::trajectory::Trajectory;
use crate::objective::ViAction;

/// Frequency deviation beyond which an episode is declared diverged.
pub const DIVERGENCE_LIMIT: f64 = 0.5;

/// Largest derivative tolerated at an operating point.
pub const STEADY_STATE_TOL: f64 = 1e-8;

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_TOL: f64 = 1e-13;
// |h * lambda| kept inside the RK4 stability region with some margin.
const RK4_STABLE_STEP: f64 = 2.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    /// Load scaling P_load (p.u.).
    pub load_level: f64,
    /// Step in generator mechanical power applied at t = 0 (p.u.).
    pub p_m_step: f64,
    /// Simulated horizon (s).
    pub t_end: f64,
    /// Output and network-coupling step (s).
    pub dt: f64,
    /// Minimum RK4 sub-steps per output step.
    pub substeps: usize,
    /// Sub-step ceiling; plants needing more run in pure-damping mode.
    pub max_substeps: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            load_level: 1.0,
            p_m_step: 0.1,
            t_end: 15.0,
            dt: 0.05,
            substeps: 10,
            max_substeps: 100,
        }
    }
}

impl EpisodeConfig {
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.t_end > 0.0 && self.substeps > 0)
            || self.max_substeps < self.substeps
            || !self.p_m_step.is_finite()
        {
            return Err(Error::Config(format!("invalid episode settings {self:?}")));
        }
        Ok(())
    }
}

/// Complete dynamic state of the grid at an operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub generator: GeneratorState,
    /// Mechanical power balancing the generator at this point.
    pub p_m: f64,
    pub plants: Vec<SynchronverterState>,
    /// Per-plant torque setpoints, equal to the electrical torque here.
    pub t_m: Vec<f64>,
    pub bus_voltages: Vec<Complex64>,
}

/// How a plant participates in an episode.
#[derive(Debug, Clone, Copy, PartialEq)]
enum PlantMode {
    /// Full swing + filter dynamics; state slice starts at the offset.
    Active(usize),
    /// Current source following the generator angle plus damping power.
    Damping,
}

/// Grid simulator bound to one model and load level. The operating point is
/// solved once; every episode starts from it.
#[derive(Debug, Clone)]
pub struct Simulator {
    model: GridModel,
    load_level: f64,
    z_dyn: CMatrix,
    steady: SystemState,
}

impl Simulator {
    pub fn new(mut model: GridModel, load_level: f64) -> Result<Self> {
        let (steady, z_dyn) = steady_state_inner(&model, load_level)?;
        model.generator.p_m = steady.p_m;
        Ok(Self {
            model,
            load_level,
            z_dyn,
            steady,
        })
    }

    pub fn model(&self) -> &GridModel {
        &self.model
    }

    pub fn load_level(&self) -> f64 {
        self.load_level
    }

    pub fn steady_state(&self) -> &SystemState {
        &self.steady
    }

    /// Largest absolute device derivative at `state`, all plants active.
    pub fn max_derivative(&self, state: &SystemState) -> f64 {
        let plants = self.plants_with(&ViAction {
            h: vec![1.0; self.model.n_plant()],
            d: vec![1.0; self.model.n_plant()],
        });
        let modes = active_modes(plants.len());
        let dyn_ = self.dynamics(&plants, &modes, self.steady.p_m);
        let x = pack_state(state, &modes);
        let mut dx = vec![0.0; x.len()];
        dyn_.eval(&x, &mut dx, None);
        dx.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn plants_with(&self, action: &ViAction) -> Vec<SynchronverterParams> {
        self.model
            .plants
            .iter()
            .zip(&self.steady.t_m)
            .enumerate()
            .map(|(i, (p, t_m))| SynchronverterParams {
                h_c: action.h[i],
                d_p: action.d[i],
                t_m: *t_m,
                ..p.clone()
            })
            .collect()
    }

    fn dynamics<'a>(
        &'a self,
        plants: &'a [SynchronverterParams],
        modes: &'a [PlantMode],
        p_m: f64,
    ) -> Dynamics<'a> {
        Dynamics {
            model: &self.model,
            plants,
            modes,
            z: &self.z_dyn,
            steady: &self.steady,
            p_m,
        }
    }

    /// Simulate one disturbance episode with the given VI setpoints.
    pub fn run(&self, action: &ViAction, cfg: &EpisodeConfig) -> Result<Trajectory> {
        cfg.validate()?;
        if action.n_plant() != self.model.n_plant() || action.d.len() != self.model.n_plant() {
            return Err(Error::Dimension(format!(
                "action for {} plants on a grid with {}",
                action.n_plant(),
                self.model.n_plant()
            )));
        }
        if action.to_flat().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(
                "VI setpoints must be finite and non-negative".into(),
            ));
        }
        if (cfg.load_level - self.load_level).abs() > 0.0 {
            return Err(Error::Config(format!(
                "simulator prepared for load level {}, episode asks for {}",
                self.load_level, cfg.load_level
            )));
        }

        let plants = self.plants_with(action);
        let h_out = cfg.dt;
        let mut n_sub = cfg
            .substeps
            .max(substeps_for(h_out, self.filter_stiffness()));
        let mut modes = Vec::with_capacity(plants.len());
        let mut offset = 3;
        for p in &plants {
            let needed = substeps_for(h_out, swing_stiffness(p));
            if p.h_c < MIN_ACTIVE_INERTIA || needed > cfg.max_substeps {
                modes.push(PlantMode::Damping);
            } else {
                n_sub = n_sub.max(needed);
                modes.push(PlantMode::Active(offset));
                offset += ACTIVE_STATE_LEN;
            }
        }

        let dyn_ = self.dynamics(&plants, &modes, self.steady.p_m + cfg.p_m_step);
        let mut x = pack_state(&self.steady, &modes);
        let n_steps = cfg.n_steps();
        let mut traj = Trajectory::new(&self.model, cfg, n_steps + 1);

        let mut out = StepOutputs::new(self.model.n_bus(), plants.len());
        let mut dx = vec![0.0; x.len()];
        dyn_.eval(&x, &mut dx, Some(&mut out));
        traj.push(0.0, &x, &out);

        let h = h_out / n_sub as f64;
        let mut rk = Rk4::new(x.len());
        for step in 1..=n_steps {
            for _ in 0..n_sub {
                rk.step(&dyn_, &mut x, h);
            }
            dyn_.eval(&x, &mut dx, Some(&mut out));
            let domega = x[1];
            let finite = x.iter().all(|v| v.is_finite());
            if !finite || domega.abs() >= DIVERGENCE_LIMIT {
                traj.mark_diverged();
                break;
            }
            traj.push(step as f64 * h_out, &x, &out);
        }
        Ok(traj)
    }

    fn filter_stiffness(&self) -> f64 {
        self.model
            .plants
            .iter()
            .map(|p| {
                let lc = ((1.0 / p.l_f + 1.0 / p.l_t) / p.c_f).sqrt();
                (p.z_filter().norm() / p.l_f)
                    .max(p.z_transformer().norm() / p.l_t)
                    .max(lc)
            })
            .fold(0.0, f64::max)
    }
}

fn substeps_for(h: f64, stiffness: f64) -> usize {
    (h * stiffness / RK4_STABLE_STEP).ceil().max(1.0) as usize
}

/// Fastest rate of the virtual swing loop: damping plus synchronizing torque over 2 H_c.
fn swing_stiffness(p: &SynchronverterParams) -> f64 {
    if p.h_c <= 0.0 {
        return f64::INFINITY;
    }
    (p.d_p + p.mf_if / p.z_series().norm()) / (2.0 * p.h_c)
}

const ACTIVE_STATE_LEN: usize = 8;

fn active_modes(n: usize) -> Vec<PlantMode> {
    (0..n)
        .map(|i| PlantMode::Active(3 + i * ACTIVE_STATE_LEN))
        .collect()
}

fn pack_state(state: &SystemState, modes: &[PlantMode]) -> Vec<f64> {
    let mut x = vec![
        state.generator.delta,
        state.generator.domega,
        state.generator.p_gov,
    ];
    for (mode, s) in modes.iter().zip(&state.plants) {
        if let PlantMode::Active(_) = mode {
            x.extend_from_slice(&[
                s.omega_c, s.delta_c, s.i_rl.re, s.i_rl.im, s.v_f.re, s.v_f.im, s.i_g.re, s.i_g.im,
            ]);
        }
    }
    x
}

fn unpack_plant(x: &[f64], offset: usize) -> SynchronverterState {
    let s = &x[offset..offset + ACTIVE_STATE_LEN];
    SynchronverterState {
        omega_c: s[0],
        delta_c: s[1],
        i_rl: Complex64::new(s[2], s[3]),
        v_f: Complex64::new(s[4], s[5]),
        i_g: Complex64::new(s[6], s[7]),
    }
}

pub(crate) struct StepOutputs {
    pub voltages: Vec<Complex64>,
    pub plants: Vec<SynchronverterState>,
}

impl StepOutputs {
    fn new(n_bus: usize, n_plant: usize) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        Self {
            voltages: vec![zero; n_bus],
            plants: vec![
                SynchronverterState {
                    omega_c: 1.0,
                    delta_c: 0.0,
                    i_rl: zero,
                    v_f: zero,
                    i_g: zero,
                };
                n_plant
            ],
        }
    }
}

/// Right-hand side of the network-coupled device ODEs. The algebraic network
/// is solved at every evaluation through the precomputed impedance matrix.
struct Dynamics<'a> {
    model: &'a GridModel,
    plants: &'a [SynchronverterParams],
    modes: &'a [PlantMode],
    z: &'a CMatrix,
    steady: &'a SystemState,
    p_m: f64,
}

impl Dynamics<'_> {
    fn eval(&self, x: &[f64], dx: &mut [f64], out: Option<&mut StepOutputs>) {
        let gen = &self.model.generator;
        let g_idx = self.model.generator_index();
        let g_state = GeneratorState {
            delta: x[0],
            domega: x[1],
            p_gov: x[2],
        };
        let rot = Complex64::from_polar(1.0, g_state.delta - self.steady.generator.delta);

        let n = self.model.n_bus();
        let mut inj = CVector::zeros(n);
        inj[g_idx] += Complex64::from_polar(gen.e, g_state.delta) / Complex64::new(0.0, gen.xd);
        let mut damping_currents = Vec::new();
        for (i, (p, mode)) in self.plants.iter().zip(self.modes).enumerate() {
            let b = self.model.idx(p.bus);
            let i_plant = match mode {
                PlantMode::Active(off) => Complex64::new(x[off + 6], x[off + 7]),
                PlantMode::Damping => {
                    let v_ss = self.steady.bus_voltages[b];
                    let d_power = -p.d_p * g_state.domega;
                    let i_ss = self.steady.plants[i].i_g;
                    let current = (i_ss + d_power / v_ss.conj()) * rot;
                    damping_currents.push((i, current));
                    current
                }
            };
            inj[b] += i_plant * p.s_n;
        }
        let v: CVector = self.z * inj;

        let vg = v[g_idx];
        let gd = generator_derivatives(&g_state, &self.gen_params(), vg.norm(), vg.arg());
        dx[0] = gd.d_delta;
        dx[1] = gd.d_domega;
        dx[2] = gd.d_p_gov;

        for (p, mode) in self.plants.iter().zip(self.modes) {
            if let PlantMode::Active(off) = *mode {
                let s = unpack_plant(x, off);
                let t_e = s.electrical_torque(p);
                let sd = synchronverter_derivatives(&s, p, t_e);
                let fd = filter_derivatives(&s, p, s.emf(p), v[self.model.idx(p.bus)]);
                let d = &mut dx[off..off + ACTIVE_STATE_LEN];
                d[0] = sd.d_omega_c;
                d[1] = sd.d_delta_c - p.omega_ref;
                d[2] = fd.d_i_rl.re;
                d[3] = fd.d_i_rl.im;
                d[4] = fd.d_v_f.re;
                d[5] = fd.d_v_f.im;
                d[6] = fd.d_i_g.re;
                d[7] = fd.d_i_g.im;
            }
        }

        if let Some(out) = out {
            out.voltages.copy_from_slice(v.as_slice());
            for (i, mode) in self.modes.iter().enumerate() {
                if let PlantMode::Active(off) = *mode {
                    out.plants[i] = unpack_plant(x, off);
                }
            }
            for (i, current) in damping_currents {
                let ss = &self.steady.plants[i];
                out.plants[i] = SynchronverterState {
                    omega_c: 1.0 + g_state.domega,
                    delta_c: ss.delta_c + g_state.delta - self.steady.generator.delta,
                    i_rl: current,
                    v_f: v[self.model.idx(self.plants[i].bus)],
                    i_g: current,
                };
            }
        }
    }

    fn gen_params(&self) -> crate::grid::model::GeneratorParams {
        crate::grid::model::GeneratorParams {
            p_m: self.p_m,
            ..self.model.generator.clone()
        }
    }
}

struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    fn step(&mut self, f: &Dynamics<'_>, x: &mut [f64], h: f64) {
        let n = x.len();
        f.eval(x, &mut self.k1, None);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        f.eval(&self.tmp, &mut self.k2, None);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        f.eval(&self.tmp, &mut self.k3, None);
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        f.eval(&self.tmp, &mut self.k4, None);
        for i in 0..n {
            x[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Operating point with zero frequency deviation and all device derivatives
/// below [`STEADY_STATE_TOL`].
///
/// The generator angle is the reference (0). Plants are voltage sources behind
/// their filter and transformer impedance; Newton iterates their angles until
/// each delivers its dispatch `t_m`, then the generator's mechanical power is
/// set to its electrical output.
pub fn solve_steady_state(model: &GridModel, load_level: f64) -> Result<SystemState> {
    steady_state_inner(model, load_level).map(|(s, _)| s)
}

fn steady_state_inner(model: &GridModel, load_level: f64) -> Result<(SystemState, CMatrix)> {
    let ybus = build_ybus(model, load_level)?;
    let g_idx = model.generator_index();
    let gen = &model.generator;
    let y_gen = Complex64::new(0.0, gen.xd).inv();

    let mut y_dyn = ybus.clone();
    y_dyn[(g_idx, g_idx)] += y_gen;
    let z_dyn = invert(y_dyn.clone(), "network with generator admittance")?;

    let plant_bus: Vec<usize> = model.plants.iter().map(|p| model.idx(p.bus)).collect();
    let z_p: Vec<Complex64> = model.plants.iter().map(|p| p.z_series()).collect();
    let mut y_ss = y_dyn;
    for ((p, &b), zp) in model.plants.iter().zip(&plant_bus).zip(&z_p) {
        y_ss[(b, b)] += p.s_n / zp;
    }
    let z_ss = invert(y_ss, "network with plant source admittances")?;

    let n_p = model.n_plant();
    let e_gen = Complex64::new(gen.e, 0.0);
    let solve = |theta: &[f64]| -> (CVector, Vec<Complex64>, Vec<Complex64>) {
        let emf: Vec<Complex64> = model
            .plants
            .iter()
            .zip(theta)
            .map(|(p, th)| Complex64::from_polar(p.mf_if, *th))
            .collect();
        let mut inj = CVector::zeros(model.n_bus());
        inj[g_idx] += e_gen * y_gen;
        for k in 0..n_p {
            inj[plant_bus[k]] += emf[k] * model.plants[k].s_n / z_p[k];
        }
        let v = &z_ss * inj;
        let cur = (0..n_p)
            .map(|k| (emf[k] - v[plant_bus[k]]) / z_p[k])
            .collect();
        (v, emf, cur)
    };

    let mut theta = vec![0.0; n_p];
    let mut converged = false;
    for _ in 0..NEWTON_MAX_ITER {
        let (_, emf, cur) = solve(&theta);
        let residual: Vec<f64> = (0..n_p)
            .map(|k| (emf[k] * cur[k].conj()).re - model.plants[k].t_m)
            .collect();
        if residual.iter().any(|r| !r.is_finite()) {
            break;
        }
        if residual.iter().all(|r| r.abs() < NEWTON_TOL) {
            converged = true;
            break;
        }
        let mut jac = DMatrix::<f64>::zeros(n_p, n_p);
        for k in 0..n_p {
            let d_emf = Complex64::new(0.0, 1.0) * emf[k];
            let d_inj = d_emf * model.plants[k].s_n / z_p[k];
            for i in 0..n_p {
                let d_v = z_ss[(plant_bus[i], plant_bus[k])] * d_inj;
                let own = if i == k {
                    d_emf
                } else {
                    Complex64::new(0.0, 0.0)
                };
                let d_cur = (own - d_v) / z_p[i];
                jac[(i, k)] = (own * cur[i].conj() + emf[i] * d_cur.conj()).re;
            }
        }
        let Some(step) = jac.lu().solve(&DVector::from_vec(residual)) else {
            break;
        };
        let max_step = step.amax();
        let scale = if max_step > 0.3 { 0.3 / max_step } else { 1.0 };
        for k in 0..n_p {
            theta[k] -= scale * step[k];
        }
    }
    if !converged {
        return Err(Error::Infeasible(
            "plant dispatch cannot be met: steady-state iteration did not converge".into(),
        ));
    }

    let (v, _, cur) = solve(&theta);
    for (i, vi) in v.iter().enumerate() {
        let mag = vi.norm();
        if !(0.5..=1.5).contains(&mag) {
            return Err(Error::Infeasible(format!(
                "voltage collapse: |V| = {mag:.4} at bus {}",
                model.buses[i].id
            )));
        }
    }
    let vg = v[g_idx];
    if (0.0 - vg.arg()).abs() >= FRAC_PI_2 {
        return Err(Error::Infeasible(
            "generator load angle beyond 90 degrees".into(),
        ));
    }
    for k in 0..n_p {
        if (theta[k] - v[plant_bus[k]].arg()).abs() >= FRAC_PI_2 {
            return Err(Error::Infeasible(format!(
                "plant {k} power angle beyond 90 degrees"
            )));
        }
    }

    let p_m = gen.e * vg.norm() / gen.xd * (0.0 - vg.arg()).sin();
    let plants: Vec<SynchronverterState> = (0..n_p)
        .map(|k| {
            let p = &model.plants[k];
            let i = cur[k];
            SynchronverterState {
                omega_c: p.omega_ref,
                delta_c: theta[k],
                i_rl: i,
                v_f: v[plant_bus[k]] + p.z_transformer() * i,
                i_g: i,
            }
        })
        .collect();
    let t_m = plants
        .iter()
        .zip(&model.plants)
        .map(|(s, p)| s.electrical_torque(p))
        .collect();
    let state = SystemState {
        generator: GeneratorState::default(),
        p_m,
        plants,
        t_m,
        bus_voltages: v.iter().copied().collect(),
    };

    let mut model_eq = model.clone();
    model_eq.generator.p_m = p_m;
    let sim = Simulator {
        model: model_eq,
        load_level,
        z_dyn: z_dyn.clone(),
        steady: state.clone(),
    };
    let residual = sim.max_derivative(&state);
    if !(residual < STEADY_STATE_TOL) {
        return Err(Error::Infeasible(format!(
            "operating point residual {residual:e} above tolerance"
        )));
    }
    Ok((state, z_dyn))
}

/// Build a simulator for `cfg.load_level` and run a single episode.
pub fn run_episode(
    model: &GridModel,
    action: &ViAction,
    cfg: &EpisodeConfig,
) -> Result<Trajectory> {
    Simulator::new(model.clone(), cfg.load_level)?.run(action, cfg)
}
