use rand::Rng;
use rand_distr::StandardNormal;

/// Ornstein-Uhlenbeck exploration noise, sampled with the exact
/// discretization so the stationary variance is `sigma^2 / (2 theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuNoise {
    pub theta: f64,
    pub sigma: Vec<f64>,
    pub dt: f64,
    state: Vec<f64>,
}

impl OuNoise {
    pub fn new(theta: f64, sigma: Vec<f64>, dt: f64) -> Self {
        let state = vec![0.0; sigma.len()];
        Self {
            theta,
            sigma,
            dt,
            state,
        }
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|x| *x = 0.0);
    }

    pub fn stationary_std(&self) -> Vec<f64> {
        self.sigma
            .iter()
            .map(|s| s / (2.0 * self.theta).sqrt())
            .collect()
    }

    /// Advance the process one step and return the new state.
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &[f64] {
        let decay = (-self.theta * self.dt).exp();
        let spread = ((1.0 - decay * decay) / (2.0 * self.theta)).sqrt();
        for (x, s) in self.state.iter_mut().zip(&self.sigma) {
            let z: f64 = rng.sample(StandardNormal);
            *x = *x * decay + s * spread * z;
        }
        &self.state
    }
}
