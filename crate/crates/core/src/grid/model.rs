use std::collections::{HashMap, VecDeque};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRID_SCHEMA_VERSION: u32 = 1;

/// Range the per-plant economic cost factors are drawn from.
pub const COST_FACTOR_RANGE: (f64, f64) = (0.5, 1.5);

/// Aggregated transmission-side machine with governor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub bus: u32,
    /// Inertia constant H_gen (s).
    pub h: f64,
    /// Damping D_gen (p.u.).
    pub d: f64,
    /// Synchronous voltage E (p.u.).
    pub e: f64,
    /// Synchronous reactance X_d (p.u.).
    pub xd: f64,
    /// Governor time constant T_s (s).
    pub ts: f64,
    /// Mechanical power P_m (p.u.). Set from the steady-state solution.
    #[serde(default)]
    pub p_m: f64,
}

/// Synchronverter-controlled storage plant behind an RLC filter and transformer.
///
/// Electrical quantities are on the plant's own base; `s_n` converts plant-base
/// currents to the system base. `x_f` and `x_t` are the fundamental-frequency
/// reactances of the filter and transformer inductors, `l_f`, `l_t` and `c_f`
/// the dynamic inductance/capacitance in p.u.·s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynchronverterParams {
    pub bus: u32,
    /// Nominal power on the system base.
    pub s_n: f64,
    /// Power available for frequency support on the plant base.
    #[serde(default = "one")]
    pub p_rated: f64,
    /// Active power dispatch before the event (plant base).
    #[serde(default)]
    pub t_m: f64,
    /// Excitation product M_f * i_f.
    #[serde(default = "one")]
    pub mf_if: f64,
    #[serde(default = "one")]
    pub omega_ref: f64,
    pub r_f: f64,
    pub x_f: f64,
    pub l_f: f64,
    pub c_f: f64,
    pub r_t: f64,
    pub x_t: f64,
    pub l_t: f64,
    /// Virtual inertia H_c (s). Overwritten by the coordination action.
    #[serde(default)]
    pub h_c: f64,
    /// Virtual damping D_p (p.u.). Overwritten by the coordination action.
    #[serde(default)]
    pub d_p: f64,
    /// Economic cost factor c_i; drawn from `cost_seed` when absent.
    #[serde(default)]
    pub cost: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl SynchronverterParams {
    pub fn z_filter(&self) -> Complex64 {
        Complex64::new(self.r_f, self.x_f)
    }

    pub fn z_transformer(&self) -> Complex64 {
        Complex64::new(self.r_t, self.x_t)
    }

    /// Steady-state series impedance between EMF and grid terminal.
    pub fn z_series(&self) -> Complex64 {
        self.z_filter() + self.z_transformer()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    #[serde(default = "one")]
    pub v_set: f64,
    /// Voltage cost factor c_V.
    #[serde(default = "one")]
    pub c_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
}

/// Constant-impedance load specified by its consumption at setpoint voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus: u32,
    pub p: f64,
    #[serde(default)]
    pub q: f64,
}

/// On-disk grid description (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_base_mva")]
    pub base_mva: f64,
    #[serde(default = "default_base_hz")]
    pub base_frequency_hz: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub loads: Vec<Load>,
    pub generator: GeneratorParams,
    pub plants: Vec<SynchronverterParams>,
    #[serde(default)]
    pub cost_seed: Option<u64>,
}

fn default_base_mva() -> f64 {
    10.0
}

fn default_base_hz() -> f64 {
    50.0
}

/// Validated grid. Bus ids are mapped to dense indices in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridModel {
    pub name: String,
    pub base_mva: f64,
    pub base_frequency_hz: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub loads: Vec<Load>,
    pub generator: GeneratorParams,
    pub plants: Vec<SynchronverterParams>,
    /// Resolved c_i, one per plant.
    pub cost_factors: Vec<f64>,
    index: HashMap<u32, usize>,
}

impl GridModel {
    pub fn from_file_struct(file: GridFile) -> Result<Self> {
        if file.schema_version != GRID_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "grid schema version {} (supported: {GRID_SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        if file.buses.is_empty() {
            return Err(Error::Schema("grid has no buses".into()));
        }
        let mut index = HashMap::new();
        for (i, bus) in file.buses.iter().enumerate() {
            if index.insert(bus.id, i).is_some() {
                return Err(Error::Schema(format!("duplicate bus id {}", bus.id)));
            }
            positive(bus.v_set, &format!("bus {} v_set", bus.id))?;
            non_negative(bus.c_v, &format!("bus {} c_v", bus.id))?;
        }
        let known = |id: u32, what: &str| -> Result<()> {
            if index.contains_key(&id) {
                Ok(())
            } else {
                Err(Error::Schema(format!("{what} references unknown bus {id}")))
            }
        };
        for br in &file.branches {
            known(br.from, "branch")?;
            known(br.to, "branch")?;
            if br.from == br.to {
                return Err(Error::Schema(format!(
                    "branch {0}-{0} is a self loop",
                    br.from
                )));
            }
            non_negative(br.r, "branch r")?;
            if br.r == 0.0 && br.x == 0.0 {
                return Err(Error::Schema(format!(
                    "branch {}-{} has zero impedance",
                    br.from, br.to
                )));
            }
        }
        for load in &file.loads {
            known(load.bus, "load")?;
            if !load.p.is_finite() || !load.q.is_finite() {
                return Err(Error::Schema(format!(
                    "load at bus {} is not finite",
                    load.bus
                )));
            }
        }
        let g = &file.generator;
        known(g.bus, "generator")?;
        positive(g.h, "generator h")?;
        positive(g.xd, "generator xd")?;
        positive(g.ts, "generator ts")?;
        positive(g.e, "generator e")?;
        non_negative(g.d, "generator d")?;

        if file.plants.is_empty() {
            return Err(Error::Schema("grid has no plants".into()));
        }
        for (k, p) in file.plants.iter().enumerate() {
            known(p.bus, &format!("plant {k}"))?;
            for (v, name) in [
                (p.s_n, "s_n"),
                (p.p_rated, "p_rated"),
                (p.mf_if, "mf_if"),
                (p.omega_ref, "omega_ref"),
                (p.r_f, "r_f"),
                (p.x_f, "x_f"),
                (p.l_f, "l_f"),
                (p.c_f, "c_f"),
                (p.r_t, "r_t"),
                (p.x_t, "x_t"),
                (p.l_t, "l_t"),
            ] {
                positive(v, &format!("plant {k} {name}"))?;
            }
            non_negative(p.h_c, &format!("plant {k} h_c"))?;
            non_negative(p.d_p, &format!("plant {k} d_p"))?;
            if !p.t_m.is_finite() {
                return Err(Error::Schema(format!("plant {k} t_m is not finite")));
            }
        }

        let cost_factors = resolve_cost_factors(&file.plants, file.cost_seed)?;

        let model = Self {
            name: file.name,
            base_mva: file.base_mva,
            base_frequency_hz: file.base_frequency_hz,
            buses: file.buses,
            branches: file.branches,
            loads: file.loads,
            generator: file.generator,
            plants: file.plants,
            cost_factors,
            index,
        };
        model.check_connected()?;
        Ok(model)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GridFile =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        Self::from_file_struct(file)
    }

    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn n_plant(&self) -> usize {
        self.plants.len()
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub(crate) fn idx(&self, id: u32) -> usize {
        self.index[&id]
    }

    pub fn generator_index(&self) -> usize {
        self.idx(self.generator.bus)
    }

    /// Plant ratings S_n on the system base.
    pub fn plant_ratings(&self) -> Vec<f64> {
        self.plants.iter().map(|p| p.s_n).collect()
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.n_bus();
        let mut adj = vec![Vec::new(); n];
        for br in &self.branches {
            let (a, b) = (self.idx(br.from), self.idx(br.to));
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; n];
        let start = self.generator_index();
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(Error::Disconnected(self.buses[i].id)),
            None => Ok(()),
        }
    }
}

fn resolve_cost_factors(plants: &[SynchronverterParams], seed: Option<u64>) -> Result<Vec<f64>> {
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let (lo, hi) = COST_FACTOR_RANGE;
    plants
        .iter()
        .enumerate()
        .map(|(k, p)| {
            // one draw per plant keeps explicit factors from shifting the stream
            let drawn = rng.as_mut().map(|r| r.random_range(lo..=hi));
            let c = match (p.cost, drawn) {
                (Some(c), _) => c,
                (None, Some(c)) => c,
                (None, None) => {
                    return Err(Error::Schema(format!(
                        "plant {k} has no cost factor and the grid has no cost_seed"
                    )))
                }
            };
            if !(lo..=hi).contains(&c) {
                return Err(Error::Schema(format!(
                    "plant {k} cost factor {c} outside [{lo}, {hi}]"
                )));
            }
            Ok(c)
        })
        .collect()
}

fn positive(v: f64, what: &str) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Schema(format!("{what} must be positive, got {v}")))
    }
}

fn non_negative(v: f64, what: &str) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Schema(format!(
            "{what} must be non-negative, got {v}"
        )))
    }
}

/// Read and validate a grid description file.
pub fn load_grid(path: &Path) -> Result<GridModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    GridModel::from_json(&text)
}
