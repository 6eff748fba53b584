use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::devices::{GeneratorState, SynchronverterState};
use crate::grid::model::GridModel;
use crate::grid::sim::{EpisodeConfig, StepOutputs};

/// Time series produced by one episode, sampled every `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub bus_ids: Vec<u32>,
    pub generator_bus: usize,
    pub dt: f64,
    /// Size of the mechanical power step applied at t = 0.
    pub p_m_step: f64,
    pub step_time: f64,
    pub time: Vec<f64>,
    pub generator: Vec<GeneratorState>,
    /// `[sample][bus]`
    pub v_mag: Vec<Vec<f64>>,
    /// `[sample][bus]` (rad)
    pub v_ang: Vec<Vec<f64>>,
    /// `[sample][plant]`
    pub plants: Vec<Vec<SynchronverterState>>,
    pub diverged: bool,
}

impl Trajectory {
    pub(crate) fn new(model: &GridModel, cfg: &EpisodeConfig, capacity: usize) -> Self {
        Self {
            bus_ids: model.buses.iter().map(|b| b.id).collect(),
            generator_bus: model.generator_index(),
            dt: cfg.dt,
            p_m_step: cfg.p_m_step,
            step_time: 0.0,
            time: Vec::with_capacity(capacity),
            generator: Vec::with_capacity(capacity),
            v_mag: Vec::with_capacity(capacity),
            v_ang: Vec::with_capacity(capacity),
            plants: Vec::with_capacity(capacity),
            diverged: false,
        }
    }

    pub(crate) fn push(&mut self, t: f64, x: &[f64], out: &StepOutputs) {
        self.time.push(t);
        self.generator.push(GeneratorState {
            delta: x[0],
            domega: x[1],
            p_gov: x[2],
        });
        self.v_mag
            .push(out.voltages.iter().map(|v| v.norm()).collect());
        self.v_ang
            .push(out.voltages.iter().map(|v| v.arg()).collect());
        self.plants.push(out.plants.clone());
    }

    pub(crate) fn mark_diverged(&mut self) {
        self.diverged = true;
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn domega(&self) -> Vec<f64> {
        self.generator.iter().map(|g| g.domega).collect()
    }

    pub fn delta(&self) -> Vec<f64> {
        self.generator.iter().map(|g| g.delta).collect()
    }

    /// Terminal voltage angle at the generator bus.
    pub fn phi(&self) -> Vec<f64> {
        self.v_ang.iter().map(|a| a[self.generator_bus]).collect()
    }

    pub fn peak_abs_domega(&self) -> f64 {
        self.generator
            .iter()
            .fold(0.0, |m, g| m.max(g.domega.abs()))
    }

    /// Largest measured rate of change of frequency between consecutive samples.
    pub fn peak_abs_rocof(&self) -> f64 {
        self.generator
            .windows(2)
            .map(|w| ((w[1].domega - w[0].domega) / self.dt).abs())
            .fold(0.0, f64::max)
    }

    pub fn final_v_mag(&self) -> &[f64] {
        self.v_mag.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec![
            "t".to_string(),
            "delta".into(),
            "domega".into(),
            "p_gov".into(),
        ];
        cols.extend(self.bus_ids.iter().map(|id| format!("v_mag_bus_{id}")));
        cols.extend(self.bus_ids.iter().map(|id| format!("v_ang_bus_{id}")));
        let n_plant = self.plants.first().map_or(0, |p| p.len());
        cols.extend((1..=n_plant).map(|k| format!("omega_c_{k}")));
        cols.join(",")
    }

    /// Columns: `t, delta, domega, p_gov, v_mag_bus_<id>.., v_ang_bus_<id>.., omega_c_<k>..`
    /// with plants numbered from 1 in grid-file order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", self.csv_header())?;
        for k in 0..self.len() {
            let g = &self.generator[k];
            let mut row = vec![fmt(self.time[k]), fmt(g.delta), fmt(g.domega), fmt(g.p_gov)];
            row.extend(self.v_mag[k].iter().map(|v| fmt(*v)));
            row.extend(self.v_ang[k].iter().map(|v| fmt(*v)));
            row.extend(self.plants[k].iter().map(|p| fmt(p.omega_c)));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }
}

/// Shortest representation that parses back to the same f64.
pub(crate) fn fmt(v: f64) -> String {
    format!("{v:?}")
}
