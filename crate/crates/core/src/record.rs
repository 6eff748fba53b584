//! Per-iteration training record and its CSV form.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::fmt_f64;
use crate::objective::RewardBreakdown;

pub const RECORD_HEADER: &str = "iteration,generation,r,C,xi,p_H,p_D,p_dV,f,r_explore,L,L_critic,L_physics,wall_ms,H_hat,D_hat,K_hat";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub critic: f64,
    pub physics: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub iteration: usize,
    /// GA generation the evaluation belongs to.
    pub generation: Option<usize>,
    /// Reward of the tracked action: the greedy policy output for the
    /// learners, the best-so-far individual for the GA.
    pub breakdown: RewardBreakdown,
    /// Reward of the action evaluated this iteration.
    pub r_explore: f64,
    /// Mean losses of the update block run this iteration, if any.
    pub loss: Option<LossParts>,
    pub wall_ms: f64,
    pub lambda_hat: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingRecord {
    pub rows: Vec<RecordRow>,
}

impl TrainingRecord {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.breakdown.r).collect()
    }

    /// Trailing moving average of `r` with the given window.
    pub fn moving_average(&self, window: usize) -> Vec<f64> {
        moving_average(&self.rewards(), window)
    }

    /// Moving-average reward at the last iteration.
    pub fn r_final(&self, window: usize) -> Option<f64> {
        self.moving_average(window).last().copied()
    }

    /// First iteration whose moving-average reward lies within `tol`
    /// (relative) of the final moving average.
    pub fn convergence_iteration(&self, window: usize, tol: f64) -> Option<usize> {
        let ma = self.moving_average(window);
        let last = *ma.last()?;
        let band = tol * last.abs();
        ma.iter()
            .position(|v| (v - last).abs() <= band)
            .map(|k| self.rows[k].iteration)
    }

    /// Number of runtime units: generations for GA records, rows otherwise.
    pub fn runtime_units(&self) -> usize {
        let mut gens: Vec<usize> = self.rows.iter().filter_map(|r| r.generation).collect();
        if gens.is_empty() {
            return self.rows.len();
        }
        gens.dedup();
        gens.len()
    }

    /// Mean wall time per 100 runtime units.
    pub fn wall_ms_per_100(&self) -> Option<f64> {
        let units = self.runtime_units();
        if units == 0 {
            return None;
        }
        let total: f64 = self.rows.iter().map(|r| r.wall_ms).sum();
        Some(100.0 * total / units as f64)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{RECORD_HEADER}")?;
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for row in &self.rows {
            let b = &row.breakdown;
            let hats = row.lambda_hat;
            let fields = [
                row.iteration.to_string(),
                row.generation.map(|g| g.to_string()).unwrap_or_default(),
                fmt_f64(b.r),
                fmt_f64(b.c),
                fmt_f64(b.xi),
                fmt_f64(b.p_h),
                fmt_f64(b.p_d),
                fmt_f64(b.p_dv),
                fmt_f64(b.f),
                fmt_f64(row.r_explore),
                opt(row.loss.map(|l| l.total)),
                opt(row.loss.map(|l| l.critic)),
                opt(row.loss.map(|l| l.physics)),
                fmt_f64(row.wall_ms),
                opt(hats.map(|h| h[0])),
                opt(hats.map(|h| h[1])),
                opt(hats.map(|h| h[2])),
            ];
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_csv<R: BufRead>(reader: R, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            message: format!("line {line}: {message}"),
        };
        let mut lines = reader.lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(origin, e))?
            .unwrap_or_default();
        if header.trim() != RECORD_HEADER {
            return Err(parse_err(1, "unexpected header".into()));
        }
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let n = k + 2;
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 17 {
                return Err(parse_err(
                    n,
                    format!("expected 17 fields, got {}", cells.len()),
                ));
            }
            let num = |i: usize| -> Result<f64> {
                cells[i]
                    .parse::<f64>()
                    .map_err(|e| parse_err(n, format!("column {i}: {e}")))
            };
            let opt = |i: usize| -> Result<Option<f64>> {
                if cells[i].is_empty() {
                    Ok(None)
                } else {
                    num(i).map(Some)
                }
            };
            let int = |i: usize| -> Result<Option<usize>> {
                if cells[i].is_empty() {
                    return Ok(None);
                }
                cells[i]
                    .parse::<usize>()
                    .map(Some)
                    .map_err(|e| parse_err(n, format!("column {i}: {e}")))
            };
            let iteration = int(0)?.ok_or_else(|| parse_err(n, "missing iteration".into()))?;
            let loss = match (opt(10)?, opt(11)?, opt(12)?) {
                (Some(total), Some(critic), Some(physics)) => Some(LossParts {
                    total,
                    critic,
                    physics,
                }),
                _ => None,
            };
            let lambda_hat = match (opt(14)?, opt(15)?, opt(16)?) {
                (Some(h), Some(d), Some(k)) => Some([h, d, k]),
                _ => None,
            };
            let r = num(2)?;
            rows.push(RecordRow {
                iteration,
                generation: int(1)?,
                breakdown: RewardBreakdown {
                    c: num(3)?,
                    xi: num(4)?,
                    p_h: num(5)?,
                    p_d: num(6)?,
                    p_dv: num(7)?,
                    f: num(8)?,
                    r,
                    diverged: false,
                },
                r_explore: num(9)?,
                loss,
                wall_ms: num(13)?,
                lambda_hat,
            });
        }
        Ok(Self { rows })
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file), path)
    }
}

/// Trailing mean over up to `window` values ending at each index.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}
