//! Average model of the grid-feeding converter and its fixed-step integrator.
//!
//! The converter bridge applies `vc * mu` behind a filter inductance L; the
//! grid is a Thevenin equivalent (series Rg, Lg and an ideal positive-sequence
//! source v_g rotating at omega). The DC link is a capacitor C fed by a prime
//! source of power `p_i`. In space-vector form:
//!
//! ```text
//! (L + Lg) di/dt = vc*mu - v_g - Rg*i
//!       C dvc/dt = p_i/vc - Re{mu * conj(i)}
//!       dphase/dt = omega
//! ```
//!
//! The point of common coupling sits between L and the grid impedance; its
//! voltage is algebraic in the state and the applied `mu`:
//!
//! ```text
//! v_p = (Lg*vc*mu + L*(v_g + Rg*i)) / (L + Lg)
//! ```
//!
//! All quantities are per-unit; inductances and the capacitance carry
//! dimension pu*s (reactance divided by the angular frequency).

use thiserror::Error;

use crate::ComplexSV;

/// Largest modulation-index magnitude the bridge can realise without
/// overmodulation (space-vector PWM linear range).
pub const MU_MAX: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Physical parameters of the converter-plus-grid circuit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantParams {
    /// Converter-side filter inductance (pu*s).
    pub l: f64,
    /// DC-link capacitance (pu*s).
    pub c: f64,
    /// Grid Thevenin inductance (pu*s); 0 for a strong grid.
    pub lg: f64,
    /// Grid Thevenin resistance (pu).
    pub rg: f64,
    /// Grid angular frequency (rad/s).
    pub omega: f64,
    /// Grid source voltage magnitude (pu).
    pub vg_mag: f64,
}

impl PlantParams {
    pub fn total_inductance(&self) -> f64 {
        self.l + self.lg
    }
}

/// Integrable state of the circuit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    /// Converter current space vector (pu).
    pub i: ComplexSV,
    /// DC-link voltage (pu); must stay positive.
    pub vc: f64,
    /// Angle of the grid source voltage (rad).
    pub phase: f64,
}

/// Inputs held constant over an integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantInput {
    /// Modulation index applied by the bridge.
    pub mu: ComplexSV,
    /// Power injected into the DC link by the prime source (pu).
    pub p_i: f64,
}

/// Time derivative of [`PlantState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub di: ComplexSV,
    pub dvc: f64,
    pub dphase: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    /// The DC-link model divides by vc; the trajectory left the physical domain.
    #[error("dc-link voltage is not positive (vc = {vc})")]
    NonPositiveDcLink { vc: f64 },
}

/// Grid source voltage space vector at the state's phase.
pub fn grid_voltage(state: &PlantState, params: &PlantParams) -> ComplexSV {
    ComplexSV::from_polar(params.vg_mag, state.phase)
}

/// Right-hand side of the circuit ODE.
pub fn plant_derivative(
    state: &PlantState,
    input: &PlantInput,
    params: &PlantParams,
) -> Result<StateDerivative, PlantError> {
    if state.vc <= 0.0 {
        return Err(PlantError::NonPositiveDcLink { vc: state.vc });
    }
    let vg = grid_voltage(state, params);
    let di = (state.vc * input.mu - vg - params.rg * state.i) / params.total_inductance();
    let dvc = (input.p_i / state.vc - (input.mu * state.i.conj()).re) / params.c;
    Ok(StateDerivative {
        di,
        dvc,
        dphase: params.omega,
    })
}

/// Voltage at the point of common coupling for the given state and held input.
pub fn pcc_voltage(state: &PlantState, input: &PlantInput, params: &PlantParams) -> ComplexSV {
    let vg = grid_voltage(state, params);
    (params.lg * state.vc * input.mu + params.l * (vg + params.rg * state.i))
        / params.total_inductance()
}

/// Clips a modulation index to the realisable magnitude, preserving its angle.
/// Returns the (possibly clipped) vector and whether clipping occurred.
pub fn saturate_mu(mu: ComplexSV) -> (ComplexSV, bool) {
    let mag = mu.norm();
    if mag > MU_MAX {
        (mu * (MU_MAX / mag), true)
    } else {
        (mu, false)
    }
}

/// Advances the state by one step of classical fourth-order Runge-Kutta with
/// the input zero-order held.
pub fn integrate_step(
    state: &PlantState,
    input: &PlantInput,
    params: &PlantParams,
    dt: f64,
) -> Result<PlantState, PlantError> {
    let k1 = plant_derivative(state, input, params)?;
    let k2 = plant_derivative(&offset(state, &k1, dt / 2.0), input, params)?;
    let k3 = plant_derivative(&offset(state, &k2, dt / 2.0), input, params)?;
    let k4 = plant_derivative(&offset(state, &k3, dt), input, params)?;
    let w = dt / 6.0;
    Ok(PlantState {
        i: state.i + w * (k1.di + 2.0 * k2.di + 2.0 * k3.di + k4.di),
        vc: state.vc + w * (k1.dvc + 2.0 * k2.dvc + 2.0 * k3.dvc + k4.dvc),
        phase: state.phase + w * (k1.dphase + 2.0 * k2.dphase + 2.0 * k3.dphase + k4.dphase),
    })
}

fn offset(state: &PlantState, d: &StateDerivative, h: f64) -> PlantState {
    PlantState {
        i: state.i + h * d.di,
        vc: state.vc + h * d.dvc,
        phase: state.phase + h * d.dphase,
    }
}
