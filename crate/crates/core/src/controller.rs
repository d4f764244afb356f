//! Flatness-based instantaneous complex-power controller and its rotating
//! notch filter.
//!
//! The controller works in the flat coordinates
//!
//! ```text
//! xi1 = (L|i|^2 + C vc^2)/2 + j*eta        with  d(eta)/dt = q
//! xi2 = d(xi1)/dt = p_i - conj(v)*i
//! ```
//!
//! where v is the PCC voltage (measured variant) or its filtered estimate
//! (filtered variant). In these coordinates the plant is two chained complex
//! integrators, so a linearising modulation index exists in closed form and
//! the tracking error obeys a linear third-order dynamic (the third state is
//! the output integral y, which removes steady-state offsets):
//!
//! ```text
//! d(e1)/dt = e2
//! d(e2)/dt = -k1*e1 - k2*e2 - k3*y
//! d(y)/dt  = e1
//! ```
//!
//! Gains are placed from three settling times (2% convention, pole magnitude
//! 4.6/ts). References for xi1 and xi2 derive from the power commands; the
//! active-power reference p_r follows a fast regularised differential
//! equation whose fixed point is the injected DC power, so no derivative of
//! the prime-source power is ever needed: the p_i-rate terms cancel exactly
//! in the modulation-index formula.
//!
//! For weak grids the measured PCC voltage is replaced by the state of a
//! first-order rotating notch filter with unity gain and zero phase at the
//! positive-sequence frequency:
//!
//! ```text
//! d(vhat)/dt = j*omega*vhat + kappa*(v_p - vhat)
//! ```

use thiserror::Error;

use crate::ComplexSV;

/// Pole magnitude per unit settling time for the 2% settling convention
/// (exp(-4.6) is about 0.01).
pub const SETTLING_TIME_FACTOR: f64 = 4.6;

/// Feedback gains, reference regularisation, and notch-filter gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains {
    /// Proportional gain on the energy-coordinate error (1/s^2).
    pub k1: f64,
    /// Gain on the power-coordinate error (1/s).
    pub k2: f64,
    /// Gain on the integral state (1/s^3).
    pub k3: f64,
    /// Regularisation of the active-power reference dynamic (pu).
    pub delta_p: f64,
    /// Notch filter gain, real part (1/s).
    pub kappa_r: f64,
    /// Notch filter gain, imaginary part (1/s); zero in the recommended design.
    pub kappa_i: f64,
}

impl ControllerGains {
    pub fn kappa(&self) -> ComplexSV {
        ComplexSV::new(self.kappa_r, self.kappa_i)
    }
}

/// Places the closed-loop poles of lambda^3 + k2*lambda^2 + k1*lambda + k3
/// at -4.6/ts for each of the three settling times. delta_p defaults to
/// 0.01 pu and the notch gain to zero (strong-grid design).
pub fn gains_from_settling_times(ts: [f64; 3]) -> ControllerGains {
    let a: Vec<f64> = ts.iter().map(|t| SETTLING_TIME_FACTOR / t).collect();
    ControllerGains {
        k1: a[0] * a[1] + a[0] * a[2] + a[1] * a[2],
        k2: a[0] + a[1] + a[2],
        k3: a[0] * a[1] * a[2],
        delta_p: 0.01,
        kappa_r: 0.0,
        kappa_i: 0.0,
    }
}

/// Real notch gain giving a 2% settling of the filter error in `ts` seconds.
pub fn notch_gain_from_settling_time(ts: f64) -> f64 {
    SETTLING_TIME_FACTOR / ts
}

/// Persistent controller state between ticks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    /// Integral of the energy-coordinate error (complex).
    pub y: ComplexSV,
    /// Integral of the reactive-power error, i.e. the imaginary part of xi1
    /// relative to its reference.
    pub eta_err: f64,
    /// Integrated active-power reference (pu).
    pub p_r: f64,
    /// Notch filter state: estimated PCC voltage space vector.
    pub vhat_p: ComplexSV,
    prev_dy: Option<ComplexSV>,
    prev_deta: Option<f64>,
}

impl ControllerState {
    /// Fresh state with zeroed integrals and the filter seeded at `vhat0`.
    pub fn new(vhat0: ComplexSV) -> Self {
        ControllerState {
            y: ComplexSV::new(0.0, 0.0),
            eta_err: 0.0,
            p_r: 0.0,
            vhat_p: vhat0,
            prev_dy: None,
            prev_deta: None,
        }
    }

    /// Trapezoidal update of the reactive-power error integral. The first
    /// call only latches the integrand (the integral over an empty interval
    /// is zero).
    pub fn advance_eta(&mut self, integrand: f64, dt: f64) {
        if let Some(prev) = self.prev_deta {
            self.eta_err += 0.5 * dt * (prev + integrand);
        }
        self.prev_deta = Some(integrand);
    }

    /// Trapezoidal update of the output integral y from the current
    /// energy-coordinate error.
    pub fn advance_y(&mut self, e_xi1: ComplexSV, dt: f64) {
        if let Some(prev) = self.prev_dy {
            self.y += 0.5 * dt * (prev + e_xi1);
        }
        self.prev_dy = Some(e_xi1);
    }
}

/// Advances the rotating notch filter across one interval of length `dt`,
/// anchored at the voltage sample taken at the end of the interval: the old
/// estimate is rotated forward at the grid frequency, then relaxed toward
/// the fresh sample by exp(-kappa*dt). Both factors are exact in the
/// rotating frame, so a converged estimate tracks a positive-sequence input
/// with zero residual and any estimation error shrinks in magnitude by
/// exp(-Re(kappa)*dt) per interval. With kappa = 0 the filter degenerates to
/// a free oscillator at the grid frequency.
pub fn notch_step(
    vhat: ComplexSV,
    v_p: ComplexSV,
    kappa: ComplexSV,
    omega: f64,
    dt: f64,
) -> ComplexSV {
    let rot = ComplexSV::from_polar(1.0, omega * dt);
    v_p + (rot * vhat - v_p) * (-kappa * dt).exp()
}

/// Flat coordinates of the plant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatCoords {
    /// Stored energy plus j times the reactive-power integral.
    pub xi1: ComplexSV,
    /// Complex power balance: p_i - conj(v)*i.
    pub xi2: ComplexSV,
}

/// Builds the flat coordinates from measurements. `eta_imag` is the
/// integrated reactive-power error carried in xi1's imaginary part (the
/// matching reference keeps its imaginary part at zero).
pub fn build_flat_coords(
    i: ComplexSV,
    vc: f64,
    v_used: ComplexSV,
    p_i: f64,
    eta_imag: f64,
    l: f64,
    c: f64,
) -> FlatCoords {
    FlatCoords {
        xi1: ComplexSV::new(0.5 * (l * i.norm_sqr() + c * vc * vc), eta_imag),
        xi2: p_i - v_used.conj() * i,
    }
}

/// Operating commands: DC-link voltage reference, reactive-power reference,
/// injected DC power, each with its held rate. `dp_i` is carried for
/// completeness only; it cancels out of the modulation index exactly, so the
/// control law never reads it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSet {
    pub vcr: f64,
    pub dvcr: f64,
    pub qr: f64,
    pub dqr: f64,
    pub p_i: f64,
    pub dp_i: f64,
}

/// Reference values for the flat coordinates at one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefOutputs {
    pub xi1r: ComplexSV,
    pub xi2r: ComplexSV,
    /// Active-power reference rate actually applied over the tick (pu/s).
    pub p_r_rate: f64,
    /// Reactive-power reference rate (pu/s).
    pub q_r_rate: f64,
}

impl RefOutputs {
    /// Rate of the xi2 reference for a given prime-source power rate.
    pub fn dxi2r(&self, dp_i: f64) -> ComplexSV {
        ComplexSV::new(dp_i - self.p_r_rate, self.q_r_rate)
    }
}

/// Instantaneous rate of the regularised active-power reference:
///
/// ```text
/// dp_r/dt = (v^2*(p_i - p_r - C*dvcr*vcr) - L*dqr*qr) / (L*(|p_r| + delta_p))
/// ```
///
/// Its fixed point balances the DC-link power flow; delta_p keeps the rate
/// finite through p_r = 0.
pub fn p_ref_rate(
    refs: &ReferenceSet,
    p_r: f64,
    v_used_mag: f64,
    delta_p: f64,
    l: f64,
    c: f64,
) -> f64 {
    let v2 = v_used_mag * v_used_mag;
    (v2 * (refs.p_i - p_r - c * refs.dvcr * refs.vcr) - l * refs.dqr * refs.qr)
        / (l * (p_r.abs() + delta_p))
}

/// Advances the active-power reference over one tick and assembles the flat
/// reference coordinates.
///
/// The reference ODE is stiff near p_r = 0 (time constant L*delta_p/v^2, far
/// below any usable tick), so it is advanced with an exponential update that
/// is exact for a frozen denominator, refreshed at the interval midpoint and
/// substepped; the update can never overshoot the fixed point. The returned
/// `p_r_rate` is the average rate realised over the tick, which is the rate
/// the zero-order-held feedforward actually has to match.
pub fn update_references(
    refs: &ReferenceSet,
    state: &mut ControllerState,
    gains: &ControllerGains,
    v_used_mag: f64,
    l: f64,
    c: f64,
    dt: f64,
) -> RefOutputs {
    let v2 = v_used_mag * v_used_mag;
    let p_star = refs.p_i - c * refs.dvcr * refs.vcr - l * refs.dqr * refs.qr / v2;
    let tau = |p: f64| l * (p.abs() + gains.delta_p) / v2;

    let p_old = state.p_r;
    let mut p = p_old;
    const SUBSTEPS: usize = 8;
    let h = dt / SUBSTEPS as f64;
    for _ in 0..SUBSTEPS {
        let predict = p_star + (p - p_star) * (-h / tau(p)).exp();
        let tau_mid = tau(0.5 * (p + predict));
        p = p_star + (p - p_star) * (-h / tau_mid).exp();
    }
    state.p_r = p;

    let i_r_sq = (p * p + refs.qr * refs.qr) / v2;
    RefOutputs {
        xi1r: ComplexSV::new(0.5 * (l * i_r_sq + c * refs.vcr * refs.vcr), 0.0),
        xi2r: ComplexSV::new(refs.p_i - p, refs.qr),
        p_r_rate: (p - p_old) / dt,
        q_r_rate: refs.dqr,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("measured PCC voltage is zero; modulation index undefined")]
    ZeroPccVoltage,
    #[error("filtered PCC voltage is zero; modulation index undefined")]
    ZeroFilteredVoltage,
}

/// Linearising control law shared by both variants. The prime-source power
/// rate cancels between the feedforward and the linearisation, leaving
///
/// ```text
/// mu = (L*(p_r_rate - j*q_r_rate + k1*e1 + k2*e2 + k3*y + j*omega*conj(v)*i)
///       + |v|^2) / (conj(v) * vc)
/// ```
#[allow(clippy::too_many_arguments)]
fn control_with(
    v_used: ComplexSV,
    flat: &FlatCoords,
    refs_out: &RefOutputs,
    gains: &ControllerGains,
    state: &ControllerState,
    i: ComplexSV,
    vc: f64,
    omega: f64,
    l: f64,
) -> ComplexSV {
    let e1 = flat.xi1 - refs_out.xi1r;
    let e2 = flat.xi2 - refs_out.xi2r;
    let g = ComplexSV::new(refs_out.p_r_rate, -refs_out.q_r_rate)
        + gains.k1 * e1
        + gains.k2 * e2
        + gains.k3 * state.y;
    let num = l * (g + ComplexSV::new(0.0, omega) * v_used.conj() * i) + v_used.norm_sqr();
    num / (v_used.conj() * vc)
}

/// Modulation index from the measured PCC voltage.
#[allow(clippy::too_many_arguments)]
pub fn control_measured(
    flat: &FlatCoords,
    refs_out: &RefOutputs,
    gains: &ControllerGains,
    state: &ControllerState,
    i: ComplexSV,
    vc: f64,
    v_p: ComplexSV,
    omega: f64,
    l: f64,
) -> Result<ComplexSV, ControlError> {
    if v_p.norm_sqr() == 0.0 {
        return Err(ControlError::ZeroPccVoltage);
    }
    Ok(control_with(v_p, flat, refs_out, gains, state, i, vc, omega, l))
}

/// Modulation index from the notch-filtered PCC voltage held in the
/// controller state. No measured PCC voltage enters this path.
#[allow(clippy::too_many_arguments)]
pub fn control_filtered(
    flat: &FlatCoords,
    refs_out: &RefOutputs,
    gains: &ControllerGains,
    state: &ControllerState,
    i: ComplexSV,
    vc: f64,
    omega: f64,
    l: f64,
) -> Result<ComplexSV, ControlError> {
    if state.vhat_p.norm_sqr() == 0.0 {
        return Err(ControlError::ZeroFilteredVoltage);
    }
    Ok(control_with(
        state.vhat_p,
        flat,
        refs_out,
        gains,
        state,
        i,
        vc,
        omega,
        l,
    ))
}
