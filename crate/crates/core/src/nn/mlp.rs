use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully connected network with tanh hidden layers and a linear output layer.
///
/// Parameters live in one flat vector. Each layer stores its weight matrix
/// row-major (`out x in`) followed by its bias vector, so gradients, Adam
/// moments and soft updates can all work on plain slices.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Gradients of a scalar with respect to every parameter and to the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// All-zero network.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::Dimension(format!(
                "layer sizes must hold at least two positive entries, got {layer_sizes:?}"
            )));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params: vec![0.0; param_count(layer_sizes)],
        })
    }

    /// Uniform initialization in +-1/sqrt(fan_in) for every weight and bias.
    pub fn new<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        let mut offset = 0;
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let len = fan_in * fan_out + fan_out;
            for p in &mut net.params[offset..offset + len] {
                *p = rng.random_range(-bound..=bound);
            }
            offset += len;
        }
        Ok(net)
    }

    pub fn from_params(layer_sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        if params.len() != net.params.len() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        check_finite(&params, "network parameters")?;
        net.params = params;
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.layer_sizes[self.layer_sizes.len() - 1]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Overwrite parameters in place. Rejects wrong lengths and NaN/Inf.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        check_finite(params, "network parameters")?;
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "network expects input of length {}, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        Ok(())
    }

    /// Activations of every layer, input first. Hidden entries are post-tanh.
    fn activations(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let n_layers = self.layer_sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(input.to_vec());
        let mut offset = 0;
        for (l, w) in self.layer_sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let x = &acts[l];
            let mut z: Vec<f64> = weights
                .chunks_exact(n_in)
                .zip(biases)
                .map(|(row, b)| row.iter().zip(x).map(|(wij, xj)| wij * xj).sum::<f64>() + b)
                .collect();
            if l + 1 < n_layers {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
            offset += n_in * n_out + n_out;
        }
        acts
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut acts = self.activations(input);
        Ok(acts.pop().expect("at least one layer"))
    }

    /// Backpropagate `output_gradient` (dS/d output for some scalar S).
    pub fn backward(&self, input: &[f64], output_gradient: &[f64]) -> Result<Gradients> {
        self.check_input(input)?;
        if output_gradient.len() != self.output_dim() {
            return Err(Error::Dimension(format!(
                "output gradient of length {} for network output {}",
                output_gradient.len(),
                self.output_dim()
            )));
        }
        let acts = self.activations(input);
        let n_layers = self.layer_sizes.len() - 1;
        let mut grads = vec![0.0; self.params.len()];

        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for w in self.layer_sizes.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }

        // delta holds dS/dz for the current layer's pre-activation
        let mut delta = output_gradient.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let base = offsets[l];
            let x = &acts[l];
            for i in 0..n_out {
                let row = &mut grads[base + i * n_in..base + (i + 1) * n_in];
                for (g, xj) in row.iter_mut().zip(x) {
                    *g = delta[i] * xj;
                }
                grads[base + n_in * n_out + i] = delta[i];
            }
            let weights = &self.params[base..base + n_in * n_out];
            let mut upstream = vec![0.0; n_in];
            for (i, row) in weights.chunks_exact(n_in).enumerate() {
                for (u, wij) in upstream.iter_mut().zip(row) {
                    *u += wij * delta[i];
                }
            }
            if l > 0 {
                // x is tanh output of the previous layer
                for (u, a) in upstream.iter_mut().zip(x) {
                    *u *= 1.0 - a * a;
                }
            }
            delta = upstream;
        }

        check_finite(&grads, "parameter gradient")?;
        check_finite(&delta, "input gradient")?;
        Ok(Gradients {
            params: grads,
            input: delta,
        })
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            format: SNAPSHOT_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            layer_sizes: self.layer_sizes.clone(),
            params: self.params.clone(),
        }
    }

    pub fn from_snapshot(snapshot: &Snapshot) -> Result<Self> {
        if snapshot.format != SNAPSHOT_FORMAT {
            return Err(Error::Schema(format!(
                "unknown snapshot format '{}'",
                snapshot.format
            )));
        }
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported snapshot version {}",
                snapshot.version
            )));
        }
        Self::from_params(&snapshot.layer_sizes, snapshot.params.clone())
    }
}

pub const SNAPSHOT_FORMAT: &str = "piac-mlp";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Flat, versioned parameter snapshot. Serialized as JSON:
/// `{"format":"piac-mlp","version":1,"layer_sizes":[..],"params":[..]}` where
/// `params` follows the in-memory layout (per layer: weights row-major, then biases).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub format: String,
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub params: Vec<f64>,
}

pub(crate) fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(&[3, 5, 2]).unwrap();
        assert_eq!(net.forward(&[0.3, -1.0, 7.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_single_layer() {
        // W = I, b = 0
        let net = Mlp::from_params(&[2, 2], vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(net.forward(&[0.25, -4.0]).unwrap(), vec![0.25, -4.0]);
    }

    #[test]
    fn hand_evaluated_two_three_one() {
        let params = vec![
            0.5, -0.3, // W1 row 0
            0.1, 0.8, // W1 row 1
            -0.7, 0.2, // W1 row 2
            0.05, -0.1, 0.2, // b1
            0.9, -0.4, 0.3, // W2
            0.1, // b2
        ];
        let net = Mlp::from_params(&[2, 3, 1], params).unwrap();
        let out = net.forward(&[0.1, -0.2]).unwrap();
        // z1 = (0.16, -0.25, 0.09)
        let h = [0.16f64.tanh(), (-0.25f64).tanh(), 0.09f64.tanh()];
        let expected = 0.9 * h[0] - 0.4 * h[1] + 0.3 * h[2] + 0.1;
        assert!((out[0] - expected).abs() < 1e-15);
        assert!((out[0] - 0.36767845425338075).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let net = Mlp::zeros(&[2, 3, 1]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension(_))));
        assert!(matches!(
            net.backward(&[1.0, 2.0], &[1.0, 1.0]),
            Err(Error::Dimension(_))
        ));
        assert!(Mlp::zeros(&[2]).is_err());
        assert!(Mlp::from_params(&[2, 1], vec![0.0; 2]).is_err());
    }

    #[test]
    fn non_finite_params_rejected() {
        let mut net = Mlp::zeros(&[1, 1]).unwrap();
        assert!(matches!(
            net.set_params(&[f64::NAN, 0.0]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[3, 4, 2], &mut rng).unwrap();
        let g = net.backward(&[0.1, 0.2, 0.3], &[0.0, 0.0]).unwrap();
        assert!(g.params.iter().all(|&v| v == 0.0));
        assert!(g.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_bias_gradient_is_one() {
        let net = Mlp::from_params(&[2, 1], vec![0.4, -0.6, 0.2]).unwrap();
        let g = net.backward(&[1.5, 2.0], &[1.0]).unwrap();
        assert_eq!(g.params[2], 1.0);
        assert_eq!(&g.params[..2], &[1.5, 2.0]);
        assert_eq!(g.input, vec![0.4, -0.6]);
    }

    #[test]
    fn init_within_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = Mlp::new(&[4, 9, 3], &mut rng).unwrap();
        let (first, second) = net.params().split_at(4 * 9 + 9);
        assert!(first.iter().all(|p| p.abs() <= 0.5));
        assert!(second.iter().all(|p| p.abs() <= 1.0 / 3.0));
    }

    #[test]
    fn snapshot_rejects_foreign_format() {
        let net = Mlp::zeros(&[2, 2]).unwrap();
        let mut snap = net.snapshot();
        assert_eq!(Mlp::from_snapshot(&snap).unwrap(), net);
        snap.version = 99;
        assert!(matches!(Mlp::from_snapshot(&snap), Err(Error::Schema(_))));
    }
}
