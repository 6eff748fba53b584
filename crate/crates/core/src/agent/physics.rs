//! Physics loss from the single-machine surrogate
//! `delta' = domega`, `2 H domega' = P_m - D domega - K sin(delta - phi)`.

use crate::env::Measurement;

/// Inertia estimates below this are clamped; the gradient passes through.
pub const H_FLOOR: f64 = 1e-3;

/// Surrogate parameters `(H, D, K)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateParams {
    pub h: f64,
    pub d: f64,
    pub k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub value: f64,
    /// `d value / d (H, D, K)`
    pub grad: [f64; 3],
}

/// Mean squared surrogate residual over the interior samples, with measured
/// derivatives from central differences. Fewer than three samples give zero.
pub fn physics_residual(m: &Measurement, lambda: SurrogateParams) -> Residual {
    let n = m.domega.len();
    if n < 3 || m.delta.len() != n || m.phi.len() != n {
        return Residual {
            value: 0.0,
            grad: [0.0; 3],
        };
    }
    let h = lambda.h.max(H_FLOOR);
    let inv_2h = 0.5 / h;
    let inv_2dt = 0.5 / m.dt;
    let (mut value, mut gh, mut gd, mut gk) = (0.0, 0.0, 0.0, 0.0);
    for t in 1..n - 1 {
        let w = m.domega[t];
        let s = (m.delta[t] - m.phi[t]).sin();
        let w_dot = (m.domega[t + 1] - m.domega[t - 1]) * inv_2dt;
        let d_dot = (m.delta[t + 1] - m.delta[t - 1]) * inv_2dt;
        let model = (m.u_applied - lambda.d * w - lambda.k * s) * inv_2h;
        let r1 = w_dot - model;
        let r2 = d_dot - w;
        value += r1 * r1 + r2 * r2;
        gh += 2.0 * r1 * model / h;
        gd += 2.0 * r1 * w * inv_2h;
        gk += 2.0 * r1 * s * inv_2h;
    }
    let count = (n - 2) as f64;
    Residual {
        value: value / count,
        grad: [gh / count, gd / count, gk / count],
    }
}

/// Sample the surrogate after a step `u` from the equilibrium at zero angle,
/// integrating with RK4 on `substeps` sub-intervals per sample.
pub fn surrogate_trajectory(
    lambda: SurrogateParams,
    u: f64,
    dt: f64,
    n_samples: usize,
    substeps: usize,
) -> Measurement {
    let f = |x: [f64; 2]| -> [f64; 2] {
        [
            x[1],
            (u - lambda.d * x[1] - lambda.k * x[0].sin()) / (2.0 * lambda.h),
        ]
    };
    let h = dt / substeps as f64;
    let mut x = [0.0, 0.0];
    let mut m = Measurement {
        dt,
        domega: Vec::with_capacity(n_samples),
        delta: Vec::with_capacity(n_samples),
        phi: vec![0.0; n_samples],
        u_applied: u,
    };
    for k in 0..n_samples {
        if k > 0 {
            for _ in 0..substeps {
                let k1 = f(x);
                let k2 = f([x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1]]);
                let k3 = f([x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1]]);
                let k4 = f([x[0] + h * k3[0], x[1] + h * k3[1]]);
                for i in 0..2 {
                    x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        m.delta.push(x[0]);
        m.domega.push(x[1]);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRUE: SurrogateParams = SurrogateParams {
        h: 1.1,
        d: 0.8,
        k: 1.0,
    };

    #[test]
    fn self_consistent_at_true_parameters() {
        let m = surrogate_trajectory(TRUE, 0.1, 0.05, 301, 50);
        let r = physics_residual(&m, TRUE);
        assert!(r.value < 1e-6, "{}", r.value);
        for scale in [0.8, 1.2] {
            for i in 0..3 {
                let mut p = [TRUE.h, TRUE.d, TRUE.k];
                p[i] *= scale;
                let pert = SurrogateParams {
                    h: p[0],
                    d: p[1],
                    k: p[2],
                };
                assert!(physics_residual(&m, pert).value > r.value);
            }
        }
    }

    #[test]
    fn equilibrium_is_zero() {
        let (delta0, phi) = (0.3, 0.1);
        let lambda = SurrogateParams {
            h: 2.0,
            d: 1.0,
            k: 1.5,
        };
        let m = Measurement {
            dt: 0.05,
            domega: vec![0.0; 10],
            delta: vec![delta0; 10],
            phi: vec![phi; 10],
            u_applied: 1.5 * (delta0 - phi as f64).sin(),
        };
        assert!(physics_residual(&m, lambda).value < 1e-30);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let m = surrogate_trajectory(TRUE, 0.1, 0.05, 301, 20);
        let at = SurrogateParams {
            h: 0.9,
            d: 1.3,
            k: 0.7,
        };
        let r = physics_residual(&m, at);
        for i in 0..3 {
            let eps = 1e-6;
            let shift = |e: f64| {
                let mut p = [at.h, at.d, at.k];
                p[i] += e;
                physics_residual(
                    &m,
                    SurrogateParams {
                        h: p[0],
                        d: p[1],
                        k: p[2],
                    },
                )
                .value
            };
            let fd = (shift(eps) - shift(-eps)) / (2.0 * eps);
            assert!(
                (fd - r.grad[i]).abs() <= 1e-5 * fd.abs().max(1e-8),
                "{i}: {fd} vs {}",
                r.grad[i]
            );
        }
    }

    #[test]
    fn short_series_contributes_nothing() {
        let m = Measurement {
            dt: 0.05,
            domega: vec![0.0, 1.0],
            delta: vec![0.0, 0.0],
            phi: vec![0.0, 0.0],
            u_applied: 0.1,
        };
        assert_eq!(physics_residual(&m, TRUE).value, 0.0);
    }

    #[test]
    fn inertia_floor_keeps_value_finite() {
        let m = surrogate_trajectory(TRUE, 0.1, 0.05, 50, 10);
        let r = physics_residual(&m, SurrogateParams { h: 0.0, ..TRUE });
        assert!(r.value.is_finite() && r.grad.iter().all(|g| g.is_finite()));
    }
}
