use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-plant virtual inertia and damping setpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViAction {
    /// Inertia setpoints H_VI,i (s).
    pub h: Vec<f64>,
    /// Damping setpoints D_VI,i (p.u.).
    pub d: Vec<f64>,
}

impl ViAction {
    pub fn new(h: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        if h.len() != d.len() {
            return Err(Error::Dimension(format!(
                "{} inertia setpoints but {} damping setpoints",
                h.len(),
                d.len()
            )));
        }
        Ok(Self { h, d })
    }

    pub fn zeros(n_plant: usize) -> Self {
        Self {
            h: vec![0.0; n_plant],
            d: vec![0.0; n_plant],
        }
    }

    pub fn n_plant(&self) -> usize {
        self.h.len()
    }

    /// `[H_1..H_n, D_1..D_n]`
    pub fn to_flat(&self) -> Vec<f64> {
        self.h.iter().chain(&self.d).copied().collect()
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() % 2 != 0 {
            return Err(Error::Dimension(format!(
                "flat action of odd length {}",
                flat.len()
            )));
        }
        let (h, d) = flat.split_at(flat.len() / 2);
        Ok(Self {
            h: h.to_vec(),
            d: d.to_vec(),
        })
    }
}

/// Axis-aligned box over a flat decision vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ActionBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension("box bounds differ in length".into()));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !l.is_finite() || !u.is_finite() || l > u)
        {
            return Err(Error::Config(
                "box needs finite bounds with lower <= upper".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn half_widths(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| 0.5 * self.width(i)).collect()
    }

    pub fn clip(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| v.clamp(*l, *u))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// Map `u` in `[-1, 1]` per dimension onto the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, v)| self.lower[i] + 0.5 * (v + 1.0) * self.width(i))
            .collect()
    }

    /// Inverse of [`ActionBox::from_unit`]; degenerate dimensions map to 0.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| {
                let w = self.width(i);
                if w > 0.0 {
                    2.0 * (v - self.lower[i]) / w - 1.0
                } else {
                    0.0
                }
            })
            .collect()
    }
}
