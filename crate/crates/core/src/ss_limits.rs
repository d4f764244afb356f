//! Closed-form steady-state limits of complex-power transfer into a grid of
//! finite strength.
//!
//! With the PCC power fixed at s = p + jq, the steady-state current phasor i
//! (in the frame where the grid source voltage is real) satisfies
//!
//! ```text
//! 0 = (Rg + jXg)|i|^2 + vg*conj(i) - s
//! ```
//!
//! which collapses to a real quadratic in |i|^2. The discriminant of that
//! quadratic decides existence (no steady state when negative); the low root
//! is the physical operating branch, the high root exists and is exposed for
//! completeness. From the same relation follow the PCC voltage magnitude and,
//! for purely inductive or purely resistive grids, explicit reactive/active
//! power boundaries: the minimum stable injection, the band reachable without
//! exceeding a current limit, and the bound imposed by finite DC-link voltage
//! (modulation saturation).
//!
//! The resistive-grid quantities are the inductive ones under the swap
//! (p <-> q, Rg <-> Xg); they are implemented by delegation so both paths
//! share one transcription of the algebra.

use thiserror::Error;

/// Thevenin grid seen from the PCC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridImpedance {
    /// Series resistance (pu).
    pub rg: f64,
    /// Series reactance at the grid frequency (pu).
    pub xg: f64,
    /// Source voltage magnitude (pu).
    pub vg_mag: f64,
}

/// A complex-power operating point at the PCC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerPoint {
    pub p: f64,
    pub q: f64,
}

/// Which root of the |i|^2 quadratic to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootBranch {
    /// Physical low-current solution.
    Low,
    /// High-current companion root.
    High,
}

/// Grid character selecting which power axis the boundary curves describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    /// Pure reactance: boundaries are reactive-power limits q(Xg) at fixed p.
    Inductive,
    /// Pure resistance: boundaries are active-power limits p(Rg) at fixed q.
    Resistive,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SsError {
    /// The existence discriminant is negative: the requested power cannot be
    /// carried by this grid in steady state.
    #[error("no steady state for this operating point (discriminant = {lambda})")]
    NoSteadyState { lambda: f64 },
    /// Rg = Xg = 0 (or a zero scan impedance) leaves the current undetermined.
    #[error("grid impedance magnitude is zero")]
    SingularImpedance,
    /// |power| exceeds what the current limit can carry at this voltage.
    #[error("power {power} exceeds the current-limited bound {bound}")]
    PowerExceedsCurrentLimit { power: f64, bound: f64 },
    /// The saturation bound's inner square root has no real value here.
    #[error("modulation-saturation bound has no real root at this point")]
    ControlRootNegative,
}

/// Existence discriminant of the steady-state current quadratic. A steady
/// state exists iff this is nonnegative. Equals vg^2 for a zero impedance.
pub fn lambda_discriminant(pt: PowerPoint, z: GridImpedance) -> f64 {
    let vg2 = z.vg_mag * z.vg_mag;
    vg2 - 4.0 * z.xg * (z.xg * pt.p * pt.p / vg2 - pt.q)
        + 4.0 * z.rg * ((2.0 * z.xg * pt.p * pt.q - z.rg * pt.q * pt.q) / vg2 + pt.p)
}

/// Squared magnitude of the steady-state current, low (physical) branch.
pub fn current_mag_sq(pt: PowerPoint, z: GridImpedance) -> Result<f64, SsError> {
    current_mag_sq_branch(pt, z, RootBranch::Low)
}

/// Squared magnitude of the steady-state current on the requested branch.
pub fn current_mag_sq_branch(
    pt: PowerPoint,
    z: GridImpedance,
    branch: RootBranch,
) -> Result<f64, SsError> {
    let z2 = z.rg * z.rg + z.xg * z.xg;
    if z2 == 0.0 {
        return Err(SsError::SingularImpedance);
    }
    let lambda = lambda_discriminant(pt, z);
    if lambda < 0.0 {
        return Err(SsError::NoSteadyState { lambda });
    }
    let root = z.vg_mag * lambda.sqrt();
    let base = 2.0 * z.rg * pt.p + 2.0 * z.xg * pt.q + z.vg_mag * z.vg_mag;
    let num = match branch {
        RootBranch::Low => base - root,
        RootBranch::High => base + root,
    };
    Ok(num / (2.0 * z2))
}

/// Squared magnitude of the steady-state PCC voltage on the low-current
/// branch. Valid for any impedance (reduces to vg^2 at p = q = 0).
pub fn pcc_mag_sq(pt: PowerPoint, z: GridImpedance) -> Result<f64, SsError> {
    let lambda = lambda_discriminant(pt, z);
    if lambda < 0.0 {
        return Err(SsError::NoSteadyState { lambda });
    }
    Ok(z.rg * pt.p + z.xg * pt.q + 0.5 * z.vg_mag * (z.vg_mag + lambda.sqrt()))
}

/// Minimum reactive power that keeps a steady state on a purely inductive
/// grid (existence boundary solved for q at fixed p).
pub fn inductive_q_stable_min(p: f64, xg: f64, vg: f64) -> Result<f64, SsError> {
    if xg <= 0.0 {
        return Err(SsError::SingularImpedance);
    }
    Ok(xg * p * p / (vg * vg) - vg * vg / (4.0 * xg))
}

/// Reactive-power band reachable without exceeding |i| = i_max on a purely
/// inductive grid. Requires |p| <= vg * i_max; the band degenerates to the
/// single point q = Xg * i_max^2 at equality.
pub fn inductive_q_safe_bounds(
    p: f64,
    xg: f64,
    vg: f64,
    i_max: f64,
) -> Result<(f64, f64), SsError> {
    let bound = vg * i_max;
    if p.abs() > bound {
        return Err(SsError::PowerExceedsCurrentLimit { power: p, bound });
    }
    let m = i_max * i_max;
    let half_width = (vg * vg * m - p * p).sqrt();
    Ok((xg * m - half_width, xg * m + half_width))
}

/// Reactance at which the existence boundary touches the lower current-limit
/// bound; beyond it the current limit no longer protects against loss of
/// steady state. Requires |p| < vg * i_max.
pub fn inductive_touch_point(p: f64, vg: f64, i_max: f64) -> Result<f64, SsError> {
    let bound = vg * i_max;
    if p.abs() >= bound {
        return Err(SsError::PowerExceedsCurrentLimit { power: p, bound });
    }
    Ok(vg * vg / (2.0 * (vg * vg * i_max * i_max - p * p).sqrt()))
}

/// Largest reactive power the modulator can realise in steady state with
/// DC-link voltage vc on a purely inductive grid.
pub fn inductive_q_ctrl_max(p: f64, xg: f64, vg: f64, vc: f64) -> Result<f64, SsError> {
    if xg <= 0.0 {
        return Err(SsError::SingularImpedance);
    }
    let vc2 = vc * vc;
    let radicand = vc2 * vg * vg - 2.0 * xg * xg * p * p;
    if radicand < 0.0 {
        return Err(SsError::ControlRootNegative);
    }
    Ok((vc2 - std::f64::consts::SQRT_2 * radicand.sqrt()) / (2.0 * xg))
}

/// Active-power limits on a purely resistive grid at fixed reactive power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResistiveLimits {
    /// Existence boundary: minimum active power with a steady state.
    pub p_stable_min: f64,
    /// Current-limited band (low, high).
    pub p_safe_bounds: (f64, f64),
    /// Modulation-saturation bound.
    pub p_ctrl_max: f64,
}

/// Resistive-grid limits: the inductive expressions under (p <-> q, Rg <-> Xg).
pub fn resistive_limits(
    q: f64,
    rg: f64,
    vg: f64,
    i_max: f64,
    vc: f64,
) -> Result<ResistiveLimits, SsError> {
    Ok(ResistiveLimits {
        p_stable_min: inductive_q_stable_min(q, rg, vg)?,
        p_safe_bounds: inductive_q_safe_bounds(q, rg, vg, i_max)?,
        p_ctrl_max: inductive_q_ctrl_max(q, rg, vg, vc)?,
    })
}

/// One family of boundary curves at a fixed transverse power, tabulated over
/// an impedance axis. Points where a curve does not exist hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionCurves {
    /// The fixed p (inductive) or q (resistive) this family belongs to.
    pub fixed_power: f64,
    /// Impedance axis: Xg (inductive) or Rg (resistive), in pu.
    pub axis: Vec<f64>,
    /// Existence boundary (minimum q, resp. p).
    pub stable_boundary: Vec<f64>,
    /// Lower edge of the current-limited band.
    pub safe_lower: Vec<f64>,
    /// Upper edge of the current-limited band.
    pub safe_upper: Vec<f64>,
    /// Modulation-saturation bound.
    pub ctrl_saturation: Vec<f64>,
}

/// Tabulates the steady-state boundary curves over an impedance axis, one
/// family per fixed power value. Infeasible points become NaN gaps.
pub fn scan_region(
    axis: &[f64],
    fixed_powers: &[f64],
    kind: GridKind,
    vg_mag: f64,
    vc: f64,
    i_max: f64,
) -> Vec<RegionCurves> {
    fixed_powers
        .iter()
        .map(|&fixed| {
            let mut curves = RegionCurves {
                fixed_power: fixed,
                axis: axis.to_vec(),
                stable_boundary: Vec::with_capacity(axis.len()),
                safe_lower: Vec::with_capacity(axis.len()),
                safe_upper: Vec::with_capacity(axis.len()),
                ctrl_saturation: Vec::with_capacity(axis.len()),
            };
            for &x in axis {
                // The resistive family is the same algebra with the roles of
                // p and q (and of Rg and Xg) exchanged, so `kind` only labels
                // the output; the per-point calls are shared.
                let _ = kind;
                curves
                    .stable_boundary
                    .push(inductive_q_stable_min(fixed, x, vg_mag).unwrap_or(f64::NAN));
                match inductive_q_safe_bounds(fixed, x, vg_mag, i_max) {
                    Ok((lo, hi)) => {
                        curves.safe_lower.push(lo);
                        curves.safe_upper.push(hi);
                    }
                    Err(_) => {
                        curves.safe_lower.push(f64::NAN);
                        curves.safe_upper.push(f64::NAN);
                    }
                }
                curves
                    .ctrl_saturation
                    .push(inductive_q_ctrl_max(fixed, x, vg_mag, vc).unwrap_or(f64::NAN));
            }
            curves
        })
        .collect()
}

/// CSV rendering of one or more curve families sharing an axis: a header row
/// naming each curve, then one row per axis point. NaN marks gaps.
pub fn region_curves_to_csv(families: &[RegionCurves], kind: GridKind) -> String {
    let (axis_name, power_name) = match kind {
        GridKind::Inductive => ("xg", "q"),
        GridKind::Resistive => ("rg", "p"),
    };
    let mut out = String::new();
    out.push_str(axis_name);
    for fam in families {
        for curve in ["stable_min", "safe_lo", "safe_hi", "ctrl_max"] {
            out.push_str(&format!(",{}_{}_at_{}", power_name, curve, fam.fixed_power));
        }
    }
    out.push('\n');
    let n = families.first().map_or(0, |f| f.axis.len());
    for row in 0..n {
        out.push_str(&format!("{}", families[0].axis[row]));
        for fam in families {
            out.push_str(&format!(
                ",{},{},{},{}",
                fam.stable_boundary[row], fam.safe_lower[row], fam.safe_upper[row],
                fam.ctrl_saturation[row]
            ));
        }
        out.push('\n');
    }
    out
}
