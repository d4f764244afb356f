//! Simulation traces and their CSV rendering.

use std::fmt::Write as _;
use std::path::Path;

use crate::ComplexSV;

/// CSV column order. Vector quantities are split into alpha/beta components
/// plus magnitude; `vc_over_sqrt2` is the DC-link voltage scaled by the
/// largest realisable PCC voltage magnitude; `saturated` is 0 or 1.
pub const TRACE_COLUMNS: [&str; 20] = [
    "t",
    "i_alpha",
    "i_beta",
    "i_mag",
    "vp_alpha",
    "vp_beta",
    "vp_mag",
    "vhat_alpha",
    "vhat_beta",
    "vc",
    "vc_over_sqrt2",
    "p",
    "q",
    "p_r",
    "q_r",
    "p_i",
    "mu_alpha",
    "mu_beta",
    "mu_mag",
    "saturated",
];

/// One sampled instant of a run.
///
/// At rows that coincide with a controller tick, the voltage and power
/// columns hold the sample the controller acted on (taken before the new
/// command was applied) and the modulation-index columns hold the command
/// issued for the following interval. Rows between ticks sample the plant
/// state against the currently held command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub i: ComplexSV,
    pub v_p: ComplexSV,
    pub v_hat: ComplexSV,
    pub vc: f64,
    pub p: f64,
    pub q: f64,
    pub p_r: f64,
    pub q_r: f64,
    pub p_i: f64,
    pub mu: ComplexSV,
    pub saturated: bool,
}

/// Time series produced by a scenario run, sampled every `decimation` plant
/// steps; the time column is strictly increasing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimTrace {
    pub rows: Vec<TraceRow>,
}

impl SimTrace {
    /// Renders the trace as CSV: one header line, then one line per row,
    /// full double precision (values round-trip bitwise through parsing).
    /// An empty trace is an error rather than a bare header.
    pub fn to_csv(&self) -> std::io::Result<String> {
        if self.rows.is_empty() {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                "trace contains no rows",
            ));
        }
        let mut out = TRACE_COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.t,
                r.i.re,
                r.i.im,
                r.i.norm(),
                r.v_p.re,
                r.v_p.im,
                r.v_p.norm(),
                r.v_hat.re,
                r.v_hat.im,
                r.vc,
                r.vc / std::f64::consts::SQRT_2,
                r.p,
                r.q,
                r.p_r,
                r.q_r,
                r.p_i,
                r.mu.re,
                r.mu.im,
                r.mu.norm(),
                r.saturated as u8
            )
            .unwrap();
        }
        Ok(out)
    }

    /// Writes [`Self::to_csv`] to a file.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv()?)
    }
}
