//! Control and analysis toolkit for a grid-feeding voltage-source inverter
//! that injects instantaneous complex power through an L filter into a grid
//! of arbitrary strength.
//!
//! Everything works on alpha-beta space vectors represented as complex
//! numbers ([`ComplexSV`]) in a per-unit system with the grid voltage
//! magnitude and base impedance at 1.0 pu.
//!
//! The crate is organised around five pieces:
//!
//! * [`plant`]: continuous-time average model of the converter (L filter,
//!   DC-link capacitor, Thevenin grid) plus a fixed-step RK4 integrator.
//! * [`ss_limits`]: closed-form steady-state feasibility and stability
//!   limits of the power transfer for inductive and resistive grids.
//! * [`controller`]: the flatness-based complex-power controller, its
//!   gain design from settling times, and the rotating notch filter that
//!   robustifies it against weak grids.
//! * [`stability`]: closed-loop characteristic coefficients under grid
//!   impedance, a generalized Routh-Hurwitz test for the complex cubic,
//!   and the conservative design conditions for the filtered loop.
//! * [`scenario`]: JSON-configured simulation scenarios (events, rates,
//!   divergence detection) producing CSV traces.

pub mod controller;
pub mod plant;
pub mod scenario;
pub mod ss_limits;
pub mod stability;

/// Alpha-beta space vector: a complex number whose real/imaginary parts are
/// the alpha/beta components. `norm()` is the vector magnitude, `arg()` the
/// angle in (-pi, pi].
pub type ComplexSV = num_complex::Complex64;

pub use controller::{
    gains_from_settling_times, notch_gain_from_settling_time, notch_step, p_ref_rate,
    build_flat_coords, control_filtered, control_measured, update_references, ControlError,
    ControllerGains, ControllerState, FlatCoords, RefOutputs, ReferenceSet,
    SETTLING_TIME_FACTOR,
};
pub use plant::{
    grid_voltage, integrate_step, pcc_voltage, plant_derivative, saturate_mu, PlantError,
    PlantInput, PlantParams, PlantState, StateDerivative, MU_MAX,
};
pub use scenario::{
    load_config, run_scenario, ConfigError, DivergenceInfo, Event, EventTarget, RunError,
    ScenarioConfig, SimTrace, TraceRow, Variant, DIVERGENCE_CURRENT_LIMIT, TRACE_COLUMNS,
};
pub use ss_limits::{
    current_mag_sq, current_mag_sq_branch, inductive_q_ctrl_max, inductive_q_safe_bounds,
    inductive_q_stable_min, inductive_touch_point, lambda_discriminant, pcc_mag_sq,
    region_curves_to_csv, resistive_limits, scan_region, GridImpedance, GridKind, PowerPoint,
    RegionCurves, ResistiveLimits, RootBranch, SsError,
};
pub use stability::{
    coeffs_filtered, coeffs_measured, conservative_conditions, first_unstable, impedance_sweep,
    routh_hurwitz_complex_cubic, sweep_to_csv, ClosedLoopCoeffs, ConservativeMargins,
    OperatingEnvelope, StabilityError, StabilityVerdict, SweepRow,
};
