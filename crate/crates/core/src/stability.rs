//! Closed-loop stability analysis for the complex-power controller on a
//! finite grid impedance.
//!
//! Away from the strong-grid idealisation the PCC voltage is no longer an
//! exogenous input: it moves with the injected current through the grid
//! impedance. Linearising the tracking-error dynamic around an operating
//! trajectory leaves a third-order complex characteristic polynomial
//!
//! ```text
//! lambda^3 + K2*lambda^2 + K1*lambda + K3
//! ```
//!
//! with real K1, K3 and complex K2 that depends on the variant:
//!
//! * measured PCC voltage: K2 picks up the relative magnitude rate and the
//!   instantaneous angular velocity of the PCC voltage, so fast transients
//!   can push its real part negative;
//! * filtered PCC voltage: those terms are replaced by bounded functions of
//!   the filter gain, the voltage-magnitude ratio and the angle error
//!   between measured and filtered voltage.
//!
//! Stability of the polynomial is decided by a generalised Routh-Hurwitz
//! test valid for complex coefficients, and a pair of conservative
//! inequalities gives a design rule that holds over a whole envelope of
//! operating conditions rather than a single point.

use thiserror::Error;

use crate::controller::ControllerGains;
use crate::plant::PlantParams;
use crate::scenario::Variant;
use crate::ComplexSV;

/// Bounds on the operating trajectory entering the linearised coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingEnvelope {
    /// Angle error between measured and filtered PCC voltage (rad).
    pub e_theta: f64,
    /// Ratio of measured to filtered PCC voltage magnitude.
    pub vp_ratio: f64,
    /// Relative rate of change of the PCC voltage magnitude (1/s).
    pub dvp_over_vp: f64,
    /// Instantaneous angular velocity of the PCC voltage (rad/s).
    pub theta_dot: f64,
}

impl OperatingEnvelope {
    /// Steady positive-sequence operation: the PCC voltage rotates at the
    /// grid frequency with constant magnitude and the filter is converged.
    pub fn benign(omega: f64) -> Self {
        OperatingEnvelope {
            e_theta: 0.0,
            vp_ratio: 1.0,
            dvp_over_vp: 0.0,
            theta_dot: omega,
        }
    }
}

/// Coefficients of the closed-loop characteristic polynomial
/// lambda^3 + k2*lambda^2 + k1*lambda + k3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedLoopCoeffs {
    pub k1: f64,
    pub k2: ComplexSV,
    pub k3: f64,
}

/// Yes/no stability with the three left-hand sides of the generalised
/// Routh-Hurwitz conditions as margins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityVerdict {
    pub stable: bool,
    pub margins: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StabilityError {
    #[error(
        "conservative conditions assume a real notch gain; kappa_i = {kappa_i} was supplied"
    )]
    AssumptionViolated { kappa_i: f64 },
}

/// Closed-loop coefficients when the controller uses the measured PCC
/// voltage. The voltage-magnitude rate and the angular-velocity offset from
/// the rotating-frame feedforward enter K2 directly.
pub fn coeffs_measured(
    gains: &ControllerGains,
    plant: &PlantParams,
    env: &OperatingEnvelope,
) -> ClosedLoopCoeffs {
    let lt = plant.total_inductance();
    let ratio = plant.l / lt;
    ClosedLoopCoeffs {
        k1: ratio * gains.k1,
        k2: ComplexSV::new(
            (plant.rg + plant.l * gains.k2) / lt - env.dvp_over_vp,
            -plant.omega * plant.l / lt + env.theta_dot,
        ),
        k3: ratio * gains.k3,
    }
}

/// Closed-loop coefficients when the controller uses the notch-filtered PCC
/// voltage. The filter pins the voltage fed to the control law to the
/// positive-sequence rotation, so K2 depends on the filter gain and on the
/// magnitude ratio and angle error between measured and filtered voltage
/// instead of on raw voltage rates.
pub fn coeffs_filtered(
    gains: &ControllerGains,
    plant: &PlantParams,
    env: &OperatingEnvelope,
) -> ClosedLoopCoeffs {
    let lt = plant.total_inductance();
    let ratio = plant.l / lt;
    let (sin_e, cos_e) = env.e_theta.sin_cos();
    let radial = env.vp_ratio * cos_e - 1.0;
    let tangential = env.vp_ratio * sin_e;
    ClosedLoopCoeffs {
        k1: ratio * gains.k1,
        k2: ComplexSV::new(
            (plant.rg + plant.l * gains.k2) / lt - gains.kappa_r * radial
                + gains.kappa_i * tangential,
            plant.omega * plant.lg / lt + gains.kappa_i * radial + gains.kappa_r * tangential,
        ),
        k3: ratio * gains.k3,
    }
}

/// Generalised Routh-Hurwitz test for lambda^3 + K2*lambda^2 + K1*lambda +
/// K3 with complex K2 and real K1 > 0, K3 > 0 (which the closed-loop
/// construction guarantees for positive gains). All roots lie strictly in
/// the left half plane exactly when every margin is positive:
///
/// ```text
/// m1 = Re(K2)
/// m2 = -Re(K2) * (K3 - K1*Re(K2))
/// m3 = K3*Re(K2)^2*(K3 - K1*Re(K2))^2 - K3^2*Im(K2)^2*Re(K2)^3
/// ```
pub fn routh_hurwitz_complex_cubic(c: &ClosedLoopCoeffs) -> StabilityVerdict {
    let k2r = c.k2.re;
    let k2i = c.k2.im;
    let gap = c.k3 - c.k1 * k2r;
    let m1 = k2r;
    let m2 = -k2r * gap;
    let m3 = c.k3 * k2r * k2r * gap * gap - c.k3 * c.k3 * k2i * k2i * k2r.powi(3);
    StabilityVerdict {
        stable: m1 > 0.0 && m2 > 0.0 && m3 > 0.0,
        margins: [m1, m2, m3],
    }
}

/// Margins of the two conservative design inequalities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservativeMargins {
    pub margin1: f64,
    pub margin2: f64,
}

impl ConservativeMargins {
    pub fn holds(&self) -> bool {
        self.margin1 > 0.0 && self.margin2 > 0.0
    }
}

/// Conservative sufficient conditions for the filtered variant, valid for
/// every angle error up to a quarter turn. They require a real notch gain.
/// With `r` the worst-case voltage-magnitude ratio:
///
/// ```text
/// b  = (Rg + L*k2)/(L + Lg) - kappa_r*(r - 1)
/// margin1 = b - k3/k1
/// margin2 = margin1^2 - K3/K1^2 * (omega*Lg/(L + Lg) + kappa_r*r)^2 * b
/// ```
///
/// Both positive guarantee the Routh-Hurwitz conditions at every operating
/// point inside the envelope, at the price of some conservatism.
pub fn conservative_conditions(
    gains: &ControllerGains,
    plant: &PlantParams,
    vp_ratio: f64,
) -> Result<ConservativeMargins, StabilityError> {
    if gains.kappa_i != 0.0 {
        return Err(StabilityError::AssumptionViolated {
            kappa_i: gains.kappa_i,
        });
    }
    let lt = plant.total_inductance();
    let b = (plant.rg + plant.l * gains.k2) / lt - gains.kappa_r * (vp_ratio - 1.0);
    let margin1 = b - gains.k3 / gains.k1;
    let k1c = plant.l * gains.k1 / lt;
    let k3c = plant.l * gains.k3 / lt;
    let swing = plant.omega * plant.lg / lt + gains.kappa_r * vp_ratio;
    let margin2 = margin1 * margin1 - k3c / (k1c * k1c) * swing * swing * b;
    Ok(ConservativeMargins { margin1, margin2 })
}

/// One grid reactance sample of an impedance sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub xg: f64,
    pub verdict: StabilityVerdict,
}

/// Evaluates closed-loop stability over a range of grid reactances (pu at
/// the grid frequency), holding the rest of the plant and the operating
/// envelope fixed. The grid inductance of `plant` is overridden by each
/// sample; its other fields are used as given.
pub fn impedance_sweep(
    gains: &ControllerGains,
    plant: &PlantParams,
    env: &OperatingEnvelope,
    variant: Variant,
    xg_lo: f64,
    xg_hi: f64,
    xg_step: f64,
) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    let n = ((xg_hi - xg_lo) / xg_step).round() as usize;
    for k in 0..=n {
        let xg = xg_lo + k as f64 * xg_step;
        let mut p = *plant;
        p.lg = xg / p.omega;
        let coeffs = match variant {
            Variant::Measured => coeffs_measured(gains, &p, env),
            Variant::Filtered => coeffs_filtered(gains, &p, env),
        };
        rows.push(SweepRow {
            xg,
            verdict: routh_hurwitz_complex_cubic(&coeffs),
        });
    }
    rows
}

/// Smallest swept reactance judged unstable, if any.
pub fn first_unstable(rows: &[SweepRow]) -> Option<f64> {
    rows.iter().find(|r| !r.verdict.stable).map(|r| r.xg)
}

/// Renders sweep rows as CSV with a header line.
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("xg,stable,margin1,margin2,margin3\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.xg,
            r.verdict.stable,
            r.verdict.margins[0],
            r.verdict.margins[1],
            r.verdict.margins[2]
        ));
    }
    out
}
