//! Scenario configuration: JSON schema, validation, and resolution into the
//! plant and controller parameter types.

use serde::Deserialize;
use thiserror::Error;

use crate::controller::{gains_from_settling_times, notch_gain_from_settling_time, ControllerGains};
use crate::plant::PlantParams;

/// Which PCC voltage the control law consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Raw measured PCC voltage.
    Measured,
    /// Notch-filtered PCC voltage estimate.
    Filtered,
}

/// Quantity a timed event overwrites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum EventTarget {
    /// Prime-source power injected into the DC link.
    #[serde(rename = "p_i")]
    PInput,
    /// Reactive-power reference.
    #[serde(rename = "q_r")]
    QRef,
    /// DC-link voltage reference.
    #[serde(rename = "vcr")]
    VcRef,
}

/// How an event changes its target. Steps overwrite the value and leave the
/// held derivative at zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
pub enum EventMode {
    #[default]
    #[serde(rename = "step")]
    Step,
}

/// A timed change of one reference or input quantity, applied at the first
/// controller tick at or after `time`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub time: f64,
    pub target: EventTarget,
    pub value: f64,
    #[serde(default)]
    pub mode: EventMode,
}

/// Electrical parameters. Inductances may be given directly in pu*s (`l`,
/// `lg`) or as reactances in pu at the grid frequency (`xl`, `xg`).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    #[serde(default)]
    pub l: Option<f64>,
    #[serde(default)]
    pub xl: Option<f64>,
    pub c: f64,
    #[serde(default)]
    pub lg: Option<f64>,
    #[serde(default)]
    pub xg: Option<f64>,
    #[serde(default)]
    pub rg: f64,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default = "default_vg_mag")]
    pub vg_mag: f64,
}

/// Controller gain specification: either three settling times to place the
/// poles from, or the three gains explicitly; the notch gain either as a
/// settling time or explicitly.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsConfig {
    #[serde(default)]
    pub settling_times: Option<[f64; 3]>,
    #[serde(default)]
    pub k1: Option<f64>,
    #[serde(default)]
    pub k2: Option<f64>,
    #[serde(default)]
    pub k3: Option<f64>,
    #[serde(default)]
    pub notch_settling_time: Option<f64>,
    #[serde(default)]
    pub kappa_r: Option<f64>,
    #[serde(default)]
    pub kappa_i: Option<f64>,
    #[serde(default = "default_delta_p")]
    pub delta_p: f64,
}

/// Initial reference values; `vcr` also sets the initial DC-link voltage
/// unless an explicit initial state overrides it.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferencesConfig {
    pub vcr: f64,
    #[serde(default)]
    pub q_r: f64,
    #[serde(default)]
    pub p_i: f64,
}

/// Optional explicit plant starting point. Omitted fields fall back to the
/// quiescent equilibrium: zero current, DC link at `references.vcr`, grid
/// phase zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialStateConfig {
    #[serde(default)]
    pub i_alpha: f64,
    #[serde(default)]
    pub i_beta: f64,
    #[serde(default)]
    pub vc: Option<f64>,
    #[serde(default)]
    pub phase: f64,
}

/// Step sizes, run length, and trace decimation (in plant steps).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    #[serde(default = "default_dt_plant")]
    pub dt_plant: f64,
    #[serde(default = "default_ts_ctrl")]
    pub ts_ctrl: f64,
    pub duration: f64,
    #[serde(default = "default_decimation")]
    pub decimation: u32,
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub variant: Variant,
    pub plant: PlantConfig,
    pub gains: GainsConfig,
    pub references: ReferencesConfig,
    pub timing: TimingConfig,
    #[serde(default)]
    pub initial: Option<InitialStateConfig>,
    #[serde(default)]
    pub events: Vec<Event>,
}

fn default_omega() -> f64 {
    100.0 * std::f64::consts::PI
}

fn default_vg_mag() -> f64 {
    1.0
}

fn default_dt_plant() -> f64 {
    5e-6
}

fn default_ts_ctrl() -> f64 {
    5e-5
}

fn default_decimation() -> u32 {
    10
}

fn default_delta_p() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    /// The document does not match the schema (unknown field, wrong type,
    /// missing required field).
    #[error("config schema error: {0}")]
    Schema(String),
    /// The document parses but violates a semantic constraint.
    #[error("config invariant violated: {0}")]
    Invariant(String),
}

/// Parses and validates a JSON scenario document.
pub fn load_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let cfg: ScenarioConfig =
        serde_json::from_str(text).map_err(|e| ConfigError::Schema(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl ScenarioConfig {
    /// Checks every semantic invariant; [`load_config`] calls this, so a
    /// loaded config is always valid. The negated comparisons also reject
    /// NaN, which would slip through the direct form.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |msg: String| Err(ConfigError::Invariant(msg));

        let p = &self.plant;
        match (p.l, p.xl) {
            (None, None) => return inv("one of plant.l or plant.xl is required".into()),
            (Some(_), Some(_)) => {
                return inv("plant.l and plant.xl are mutually exclusive; give exactly one".into())
            }
            _ => {}
        }
        if p.lg.is_some() && p.xg.is_some() {
            return inv("plant.lg and plant.xg are mutually exclusive".into());
        }
        if !(p.omega > 0.0) {
            return inv(format!("plant.omega must be positive (got {})", p.omega));
        }
        let params = self.plant_params();
        if !(params.l > 0.0) {
            return inv(format!(
                "plant filter inductance must be positive (resolved to {})",
                params.l
            ));
        }
        if !(params.c > 0.0) {
            return inv(format!("plant.c must be positive (got {})", params.c));
        }
        if !(params.lg >= 0.0) {
            return inv(format!(
                "plant grid inductance must be nonnegative (resolved to {})",
                params.lg
            ));
        }
        if !(params.rg >= 0.0) {
            return inv(format!("plant.rg must be nonnegative (got {})", params.rg));
        }
        if !(params.vg_mag > 0.0) {
            return inv(format!(
                "plant.vg_mag must be positive (got {})",
                params.vg_mag
            ));
        }

        let g = &self.gains;
        let explicit = [g.k1, g.k2, g.k3];
        match (g.settling_times, explicit.iter().any(Option::is_some)) {
            (Some(_), true) => {
                return inv(
                    "gains.settling_times and explicit gains.k1/k2/k3 are mutually exclusive"
                        .into(),
                )
            }
            (None, _) if explicit.iter().any(Option::is_none) => {
                return inv("gains requires settling_times or all of k1, k2, k3".into())
            }
            _ => {}
        }
        if let Some(ts) = g.settling_times {
            if ts.iter().any(|t| !(*t > 0.0)) {
                return inv(format!(
                    "gains.settling_times must all be positive (got {:?})",
                    ts
                ));
            }
        }
        if g.notch_settling_time.is_some() && g.kappa_r.is_some() {
            return inv("gains.notch_settling_time and gains.kappa_r are mutually exclusive".into());
        }
        if let Some(t) = g.notch_settling_time {
            if !(t > 0.0) {
                return inv(format!(
                    "gains.notch_settling_time must be positive (got {t})"
                ));
            }
        }
        let gains = self.controller_gains();
        if !(gains.k1 > 0.0) || !(gains.k2 > 0.0) || !(gains.k3 > 0.0) {
            return inv(format!(
                "gains must be positive (resolved to k1 = {}, k2 = {}, k3 = {})",
                gains.k1, gains.k2, gains.k3
            ));
        }
        if !(gains.kappa_r >= 0.0) {
            return inv(format!(
                "gains.kappa_r must be nonnegative (got {})",
                gains.kappa_r
            ));
        }
        if !(gains.delta_p > 0.0) {
            return inv(format!(
                "gains.delta_p must be positive (got {})",
                gains.delta_p
            ));
        }

        if !(self.references.vcr > 0.0) {
            return inv(format!(
                "references.vcr must be positive (got {})",
                self.references.vcr
            ));
        }
        if let Some(init) = &self.initial {
            if let Some(vc) = init.vc {
                if !(vc > 0.0) {
                    return inv(format!("initial.vc must be positive (got {vc})"));
                }
            }
        }

        let t = &self.timing;
        if !(t.duration > 0.0) {
            return inv(format!(
                "timing.duration must be positive (got {})",
                t.duration
            ));
        }
        if !(t.dt_plant > 0.0) {
            return inv(format!(
                "timing.dt_plant must be positive (got {})",
                t.dt_plant
            ));
        }
        if !(t.ts_ctrl > 0.0) {
            return inv(format!(
                "timing.ts_ctrl must be positive (got {})",
                t.ts_ctrl
            ));
        }
        if t.dt_plant > t.ts_ctrl {
            return inv(format!(
                "timing.dt_plant ({}) must not exceed timing.ts_ctrl ({})",
                t.dt_plant, t.ts_ctrl
            ));
        }
        let ratio = t.ts_ctrl / t.dt_plant;
        if (ratio - ratio.round()).abs() > 1e-6 {
            return inv(format!(
                "timing.ts_ctrl must be an integer multiple of timing.dt_plant (ratio {ratio})"
            ));
        }
        if t.decimation < 1 {
            return inv("timing.decimation must be at least 1".into());
        }
        if self.total_plant_steps() < 1 {
            return inv("timing.duration must cover at least one plant step".into());
        }

        let mut last = f64::NEG_INFINITY;
        for (idx, ev) in self.events.iter().enumerate() {
            if !(ev.time >= 0.0 && ev.time <= t.duration) {
                return inv(format!(
                    "events[{idx}].time = {} must lie within [0, duration]",
                    ev.time
                ));
            }
            if ev.time < last {
                return inv(format!("events must be sorted by time (events[{idx}])"));
            }
            last = ev.time;
        }
        Ok(())
    }

    /// Electrical parameters with reactances resolved to inductances.
    pub fn plant_params(&self) -> PlantParams {
        let p = &self.plant;
        PlantParams {
            l: p.l.or(p.xl.map(|x| x / p.omega)).unwrap_or(0.0),
            c: p.c,
            lg: p.lg.or(p.xg.map(|x| x / p.omega)).unwrap_or(0.0),
            rg: p.rg,
            omega: p.omega,
            vg_mag: p.vg_mag,
        }
    }

    /// Controller gains with settling times resolved to gain values.
    pub fn controller_gains(&self) -> ControllerGains {
        let g = &self.gains;
        let mut gains = match g.settling_times {
            Some(ts) => gains_from_settling_times(ts),
            None => ControllerGains {
                k1: g.k1.unwrap_or(0.0),
                k2: g.k2.unwrap_or(0.0),
                k3: g.k3.unwrap_or(0.0),
                delta_p: 0.0,
                kappa_r: 0.0,
                kappa_i: 0.0,
            },
        };
        gains.delta_p = g.delta_p;
        gains.kappa_r = g
            .kappa_r
            .or(g.notch_settling_time.map(notch_gain_from_settling_time))
            .unwrap_or(0.0);
        gains.kappa_i = g.kappa_i.unwrap_or(0.0);
        gains
    }

    /// Plant starting point: the explicit initial block if given, otherwise
    /// the quiescent equilibrium.
    pub fn initial_state(&self) -> crate::plant::PlantState {
        let init = self.initial.unwrap_or_default();
        crate::plant::PlantState {
            i: crate::ComplexSV::new(init.i_alpha, init.i_beta),
            vc: init.vc.unwrap_or(self.references.vcr),
            phase: init.phase,
        }
    }

    /// Plant steps per controller tick.
    pub fn ctrl_every(&self) -> usize {
        (self.timing.ts_ctrl / self.timing.dt_plant).round() as usize
    }

    /// Plant steps over the whole run.
    pub fn total_plant_steps(&self) -> usize {
        (self.timing.duration / self.timing.dt_plant).round() as usize
    }
}
