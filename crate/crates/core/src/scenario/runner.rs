//! The deterministic simulation loop.
//!
//! The controller runs at the tick period `ts_ctrl`; its modulation index is
//! zero-order held while the plant integrates at `dt_plant`. Each tick:
//! apply due events, sample the PCC voltage under the previously held
//! command, advance the notch filter to the current tick, update the
//! integral states and references, compute and saturate the new command,
//! record a row if due, then sub-step the plant. Divergence (current above
//! [`DIVERGENCE_CURRENT_LIMIT`], DC-link collapse, or a dead controller
//! input) ends the run early with the partial trace attached to the error.

use thiserror::Error;

use super::config::{EventTarget, ScenarioConfig, Variant};
use super::trace::{SimTrace, TraceRow};
use crate::controller::{
    build_flat_coords, control_filtered, control_measured, notch_step, update_references,
    ControllerState, ReferenceSet,
};
use crate::plant::{grid_voltage, integrate_step, pcc_voltage, saturate_mu, PlantInput, PlantState};
use crate::ComplexSV;

/// Current magnitude treated as divergence, far outside the region where
/// steady-state solutions exist.
pub const DIVERGENCE_CURRENT_LIMIT: f64 = 10.0;

/// Where and why a run diverged, with everything recorded up to that point.
#[derive(Debug, Clone)]
pub struct DivergenceInfo {
    pub time: f64,
    pub reason: String,
    pub trace: SimTrace,
}

#[derive(Debug, Error)]
pub enum RunError {
    /// An expected outcome for scenarios run outside the stable region.
    #[error("trajectory diverged at t = {} s: {}", .0.time, .0.reason)]
    Divergence(Box<DivergenceInfo>),
}

fn diverged(time: f64, reason: String, rows: Vec<TraceRow>) -> RunError {
    RunError::Divergence(Box::new(DivergenceInfo {
        time,
        reason,
        trace: SimTrace { rows },
    }))
}

fn make_row(
    t: f64,
    state: &PlantState,
    v_p: ComplexSV,
    input: &PlantInput,
    saturated: bool,
    ctrl: &ControllerState,
    refs: &ReferenceSet,
) -> TraceRow {
    let s = v_p * state.i.conj();
    TraceRow {
        t,
        i: state.i,
        v_p,
        v_hat: ctrl.vhat_p,
        vc: state.vc,
        p: s.re,
        q: s.im,
        p_r: ctrl.p_r,
        q_r: refs.qr,
        p_i: refs.p_i,
        mu: input.mu,
        saturated,
    }
}

/// Runs a validated scenario to completion or divergence. The negated
/// comparisons in the divergence checks also trip on NaN, which the direct
/// form would let through.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimTrace, RunError> {
    let params = cfg.plant_params();
    let gains = cfg.controller_gains();
    let dt = cfg.timing.dt_plant;
    let ts = cfg.timing.ts_ctrl;
    let ctrl_every = cfg.ctrl_every();
    let n_total = cfg.total_plant_steps();
    let dec = cfg.timing.decimation as usize;
    let n_ticks = n_total.div_ceil(ctrl_every);

    // Events fire at the first controller tick at or after their time.
    let event_ticks: Vec<usize> = cfg
        .events
        .iter()
        .map(|e| (e.time / ts - 1e-9).ceil().max(0.0) as usize)
        .collect();

    let mut refs = ReferenceSet {
        vcr: cfg.references.vcr,
        dvcr: 0.0,
        qr: cfg.references.q_r,
        dqr: 0.0,
        p_i: cfg.references.p_i,
        dp_i: 0.0,
    };
    let mut state = cfg.initial_state();
    let mut ctrl = ControllerState::new(ComplexSV::new(0.0, 0.0));
    // Quiescent pre-run actuation: the bridge already reproduces the grid
    // voltage, so the first PCC sample carries no artificial transient.
    let mut held = PlantInput {
        mu: grid_voltage(&state, &params) / state.vc,
        p_i: refs.p_i,
    };
    let mut saturated = false;

    let mut rows: Vec<TraceRow> = Vec::with_capacity(n_total / dec + 2);
    let mut n = 0usize;

    for k in 0..n_ticks {
        let t_k = n as f64 * dt;
        for (ev, tick) in cfg.events.iter().zip(&event_ticks) {
            if *tick == k {
                match ev.target {
                    EventTarget::PInput => refs.p_i = ev.value,
                    EventTarget::QRef => refs.qr = ev.value,
                    EventTarget::VcRef => refs.vcr = ev.value,
                }
            }
        }
        held.p_i = refs.p_i;

        let v_p_meas = pcc_voltage(&state, &held, &params);
        if k == 0 {
            ctrl.vhat_p = v_p_meas;
        } else {
            ctrl.vhat_p = notch_step(ctrl.vhat_p, v_p_meas, gains.kappa(), params.omega, ts);
        }
        let v_used = match cfg.variant {
            Variant::Measured => v_p_meas,
            Variant::Filtered => ctrl.vhat_p,
        };
        let v_used_mag = v_used.norm();
        if !(v_used_mag > 1e-9) {
            return Err(diverged(
                t_k,
                format!("controller input voltage collapsed (|v| = {v_used_mag})"),
                rows,
            ));
        }

        ctrl.advance_eta((v_used * state.i.conj()).im - refs.qr, ts);
        let flat = build_flat_coords(
            state.i,
            state.vc,
            v_used,
            refs.p_i,
            ctrl.eta_err,
            params.l,
            params.c,
        );
        let refs_out = update_references(&refs, &mut ctrl, &gains, v_used_mag, params.l, params.c, ts);
        ctrl.advance_y(flat.xi1 - refs_out.xi1r, ts);

        let mu_raw = match cfg.variant {
            Variant::Measured => control_measured(
                &flat, &refs_out, &gains, &ctrl, state.i, state.vc, v_p_meas, params.omega,
                params.l,
            ),
            Variant::Filtered => control_filtered(
                &flat, &refs_out, &gains, &ctrl, state.i, state.vc, params.omega, params.l,
            ),
        };
        let mu_raw = match mu_raw {
            Ok(mu) => mu,
            Err(e) => return Err(diverged(t_k, e.to_string(), rows)),
        };
        let (mu, sat) = saturate_mu(mu_raw);
        held.mu = mu;
        saturated = sat;

        if n.is_multiple_of(dec) {
            rows.push(make_row(t_k, &state, v_p_meas, &held, saturated, &ctrl, &refs));
        }

        for _ in 0..ctrl_every.min(n_total - n) {
            state = match integrate_step(&state, &held, &params, dt) {
                Ok(s) => s,
                Err(e) => return Err(diverged((n + 1) as f64 * dt, e.to_string(), rows)),
            };
            n += 1;
            let t = n as f64 * dt;
            let i_mag = state.i.norm();
            if !(i_mag <= DIVERGENCE_CURRENT_LIMIT) {
                return Err(diverged(
                    t,
                    format!("current magnitude {i_mag:.2} pu exceeded {DIVERGENCE_CURRENT_LIMIT} pu"),
                    rows,
                ));
            }
            if !(state.vc > 0.0) {
                return Err(diverged(
                    t,
                    format!("dc-link voltage collapsed (vc = {})", state.vc),
                    rows,
                ));
            }
            if n.is_multiple_of(dec) && n < n_total && !n.is_multiple_of(ctrl_every) {
                let v_p = pcc_voltage(&state, &held, &params);
                rows.push(make_row(t, &state, v_p, &held, saturated, &ctrl, &refs));
            }
        }
    }

    if n_total.is_multiple_of(dec) {
        let v_p = pcc_voltage(&state, &held, &params);
        rows.push(make_row(
            n_total as f64 * dt,
            &state,
            v_p,
            &held,
            saturated,
            &ctrl,
            &refs,
        ));
    }
    Ok(SimTrace { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::MU_MAX;
    use crate::scenario::load_config;

    fn quiescent_json(duration: f64) -> String {
        serde_json::json!({
            "variant": "measured",
            "plant": { "xl": 0.02, "c": 4.8e-5 },
            "gains": { "settling_times": [1e-3, 1.1e-3, 20e-3] },
            "references": { "vcr": 1.8384776310850237 },
            "timing": { "duration": duration }
        })
        .to_string()
    }

    #[test]
    fn quiescent_strong_grid_run_stays_near_the_operating_point() {
        let cfg = load_config(&quiescent_json(0.02)).unwrap();
        let trace = run_scenario(&cfg).unwrap();
        for row in &trace.rows {
            // The held command lags the rotating grid voltage within each
            // tick, so a small ripple current is inherent to the zero-order
            // hold; nothing beyond that may appear.
            assert!(row.i.norm() < 0.02, "|i| = {} at t = {}", row.i.norm(), row.t);
            assert!(
                (row.vc - 1.8384776310850237).abs() < 5e-3,
                "vc = {} at t = {}",
                row.vc,
                row.t
            );
            assert!(!row.saturated);
        }
    }

    #[test]
    fn default_decimation_yields_one_row_per_tick_plus_terminal() {
        let cfg = load_config(&quiescent_json(0.01)).unwrap();
        let trace = run_scenario(&cfg).unwrap();
        assert_eq!(trace.rows.len(), 201);
        assert_eq!(trace.rows[0].t, 0.0);
        let dt = trace.rows[1].t - trace.rows[0].t;
        assert!((dt - 5e-5).abs() < 1e-12);
        for pair in trace.rows.windows(2) {
            assert!(pair[1].t > pair[0].t);
        }
    }

    #[test]
    fn identical_configs_give_bitwise_identical_csv() {
        let cfg = load_config(&quiescent_json(0.01)).unwrap();
        let a = run_scenario(&cfg).unwrap().to_csv().unwrap();
        let b = run_scenario(&cfg).unwrap().to_csv().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn events_apply_at_the_first_tick_at_or_after_their_time() {
        let mut v: serde_json::Value = serde_json::from_str(&quiescent_json(0.01)).unwrap();
        // 0.00310001 s lies just past tick 62 (0.0031 s), so the step must
        // land on tick 63.
        v["events"] = serde_json::json!([
            { "time": 0.00310001, "target": "p_i", "value": 0.5 }
        ]);
        let cfg = load_config(&v.to_string()).unwrap();
        let trace = run_scenario(&cfg).unwrap();
        let before = &trace.rows[62];
        let after = &trace.rows[63];
        assert_eq!(before.p_i, 0.0);
        assert_eq!(after.p_i, 0.5);
        assert!((after.t - 0.00315).abs() < 1e-12);

        // An event exactly on a tick lands on that tick.
        v["events"] = serde_json::json!([
            { "time": 0.0031, "target": "p_i", "value": 0.5 }
        ]);
        let cfg = load_config(&v.to_string()).unwrap();
        let trace = run_scenario(&cfg).unwrap();
        assert_eq!(trace.rows[61].p_i, 0.0);
        assert_eq!(trace.rows[62].p_i, 0.5);
    }

    #[test]
    fn runaway_reactive_command_trips_the_current_limit() {
        // A reactive-power reference of -50 pu demands a current far beyond
        // the divergence limit; the bridge saturates and the current keeps
        // integrating until the run is cut off. The oversized capacitance
        // keeps the DC link from collapsing first.
        let mut v: serde_json::Value = serde_json::from_str(&quiescent_json(0.05)).unwrap();
        v["references"]["q_r"] = (-50.0).into();
        v["plant"]["c"] = 1.0.into();
        let cfg = load_config(&v.to_string()).unwrap();
        let err = run_scenario(&cfg).unwrap_err();
        let RunError::Divergence(info) = err;
        assert!(info.time < 0.05, "diverged only at t = {}", info.time);
        assert!(info.reason.contains("current"), "reason: {}", info.reason);
        assert!(!info.trace.rows.is_empty());
        for pair in info.trace.rows.windows(2) {
            assert!(pair[1].t > pair[0].t);
        }
    }

    #[test]
    fn prime_source_drain_collapses_the_dc_link() {
        // Extracting 0.5 pu from a small capacitor at vc = 0.5 empties it in
        // tens of microseconds, faster than any current can recharge it.
        let mut v: serde_json::Value = serde_json::from_str(&quiescent_json(0.01)).unwrap();
        v["references"]["vcr"] = 0.5.into();
        v["references"]["p_i"] = (-0.5).into();
        v["timing"]["decimation"] = 1.into();
        let cfg = load_config(&v.to_string()).unwrap();
        let err = run_scenario(&cfg).unwrap_err();
        let RunError::Divergence(info) = err;
        assert!(info.time < 1e-3, "diverged only at t = {}", info.time);
        assert!(info.reason.contains("dc-link"), "reason: {}", info.reason);
        assert!(!info.trace.rows.is_empty());
    }

    #[test]
    fn saturation_flag_is_set_exactly_when_the_command_is_clipped() {
        let mut v: serde_json::Value = serde_json::from_str(&quiescent_json(0.05)).unwrap();
        v["references"]["q_r"] = (-50.0).into();
        v["plant"]["c"] = 1.0.into();
        let cfg = load_config(&v.to_string()).unwrap();
        let err = run_scenario(&cfg).unwrap_err();
        let RunError::Divergence(info) = err;
        let mut seen_saturated = false;
        for row in &info.trace.rows {
            if row.saturated {
                seen_saturated = true;
                assert!((row.mu.norm() - MU_MAX).abs() < 1e-12);
            } else {
                assert!(row.mu.norm() <= MU_MAX + 1e-12);
            }
        }
        assert!(seen_saturated);
    }

    #[test]
    fn coarser_decimation_subsamples_the_trace() {
        let mut v: serde_json::Value = serde_json::from_str(&quiescent_json(0.01)).unwrap();
        v["timing"]["decimation"] = 40.into();
        let cfg = load_config(&v.to_string()).unwrap();
        let trace = run_scenario(&cfg).unwrap();
        // 2000 plant steps / 40 = 50 interior samples plus the start row and
        // the terminal row.
        assert_eq!(trace.rows.len(), 51);
        let dt = trace.rows[1].t - trace.rows[0].t;
        assert!((dt - 2e-4).abs() < 1e-12);
    }

    #[test]
    fn sub_tick_decimation_records_between_ticks() {
        let mut v: serde_json::Value = serde_json::from_str(&quiescent_json(0.001)).unwrap();
        v["timing"]["decimation"] = 5.into();
        let cfg = load_config(&v.to_string()).unwrap();
        let trace = run_scenario(&cfg).unwrap();
        assert_eq!(trace.rows.len(), 41);
        // Rows between ticks hold the same command as the tick row before.
        assert_eq!(trace.rows[1].mu, trace.rows[0].mu);
        assert_eq!(trace.rows[1].p_r, trace.rows[0].p_r);
    }
}
