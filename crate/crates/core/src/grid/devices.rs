//! Device equations: governor-controlled generator, synchronverter swing loop
//! and RLC filter with plant transformer.
//!
//! Phasor convention: all complex quantities are fundamental-frequency phasors
//! in a frame rotating at the reference frequency `omega_ref`. Angles advance
//! at the p.u. frequency deviation (`delta' = domega`), the same convention
//! the generator swing equation uses, so generator and synchronverter angles
//! live in one frame. The synchronverter EMF phasor is
//! `omega_c * M_f i_f * exp(j delta_c)`; its imaginary part is the
//! instantaneous `e*` of the control law at frame time zero.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::grid::model::{GeneratorParams, SynchronverterParams};

/// Below this virtual inertia a plant runs in pure-damping mode.
pub const MIN_ACTIVE_INERTIA: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GeneratorState {
    /// Rotor angle (rad).
    pub delta: f64,
    /// Frequency deviation (p.u.).
    pub domega: f64,
    /// Governor power (p.u.).
    pub p_gov: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorDerivatives {
    pub d_delta: f64,
    pub d_domega: f64,
    pub d_p_gov: f64,
}

/// Swing equation with governor for the aggregated machine at terminal voltage `v` angle `phi`.
pub fn generator_derivatives(
    state: &GeneratorState,
    params: &GeneratorParams,
    v: f64,
    phi: f64,
) -> GeneratorDerivatives {
    let p_e = params.e * v / params.xd * (state.delta - phi).sin();
    GeneratorDerivatives {
        d_delta: state.domega,
        d_domega: (params.p_m - params.d * state.domega - p_e + state.p_gov) / (2.0 * params.h),
        d_p_gov: -(state.domega + state.p_gov) / params.ts,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynchronverterState {
    /// Virtual angular frequency (p.u.).
    pub omega_c: f64,
    /// Virtual angle in the reference frame (rad).
    pub delta_c: f64,
    /// Filter inductor current (plant base).
    pub i_rl: Complex64,
    /// Filter capacitor voltage.
    pub v_f: Complex64,
    /// Grid-side (transformer) current (plant base).
    pub i_g: Complex64,
}

impl SynchronverterState {
    /// EMF phasor produced by the virtual rotor.
    pub fn emf(&self, params: &SynchronverterParams) -> Complex64 {
        Complex64::from_polar(self.omega_c * params.mf_if, self.delta_c)
    }

    /// Electrical torque from the filter current, `Re(E conj(I_RL)) / omega_c`.
    pub fn electrical_torque(&self, params: &SynchronverterParams) -> f64 {
        (self.emf(params) * self.i_rl.conj()).re / self.omega_c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynchronverterDerivatives {
    /// False when `h_c` is below [`MIN_ACTIVE_INERTIA`]; the swing loop is then
    /// bypassed and `d_omega_c` is reported as zero.
    pub active: bool,
    pub d_omega_c: f64,
    /// Virtual angle rate `delta_c' = omega_c`.
    pub d_delta_c: f64,
    /// `e* = delta_c' * M_f i_f * sin(delta_c)`.
    pub e_star: f64,
}

/// Virtual swing equation of the synchronverter.
///
/// Damping acts against deviations from `omega_ref`:
/// `2 H_c omega_c' = T_m - D_p (omega_c - omega_ref) - T_e`.
pub fn synchronverter_derivatives(
    state: &SynchronverterState,
    params: &SynchronverterParams,
    t_e: f64,
) -> SynchronverterDerivatives {
    let d_delta_c = state.omega_c;
    let e_star = d_delta_c * params.mf_if * state.delta_c.sin();
    if params.h_c < MIN_ACTIVE_INERTIA {
        return SynchronverterDerivatives {
            active: false,
            d_omega_c: 0.0,
            d_delta_c,
            e_star,
        };
    }
    let torque = params.t_m - params.d_p * (state.omega_c - params.omega_ref) - t_e;
    SynchronverterDerivatives {
        active: true,
        d_omega_c: torque / (2.0 * params.h_c),
        d_delta_c,
        e_star,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterDerivatives {
    pub d_i_rl: Complex64,
    pub d_v_f: Complex64,
    pub d_i_g: Complex64,
}

/// RLC filter and transformer dynamics driven by inverter EMF `e_inv` and terminal voltage `v_t`.
///
/// The series terms use the complex impedances `r + jx` of the filter and
/// transformer branches; with `x = 0` this is the plain RL form.
pub fn filter_derivatives(
    state: &SynchronverterState,
    params: &SynchronverterParams,
    e_inv: Complex64,
    v_t: Complex64,
) -> FilterDerivatives {
    FilterDerivatives {
        d_i_rl: (e_inv - state.v_f - params.z_filter() * state.i_rl) / params.l_f,
        d_v_f: (state.i_rl - state.i_g) / params.c_f,
        d_i_g: (state.v_f - v_t - params.z_transformer() * state.i_g) / params.l_t,
    }
}
