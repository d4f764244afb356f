//! Scenario harness: declarative experiment configs, the fixed-step
//! simulation loop that wires the plant, controller, and notch filter at
//! their respective rates, and CSV trace emission.
//!
//! A scenario is described by a JSON document (see [`ScenarioConfig`]),
//! runs deterministically, and yields a [`SimTrace`] sampled at a fixed
//! decimation of the plant step. Divergence (current blow-up or DC-link
//! collapse) terminates the run early and returns the partial trace inside
//! the error.

mod config;
mod runner;
mod trace;

pub use config::{
    load_config, ConfigError, Event, EventMode, EventTarget, GainsConfig, PlantConfig,
    ReferencesConfig, ScenarioConfig, TimingConfig, Variant,
};
pub use runner::{run_scenario, DivergenceInfo, RunError, DIVERGENCE_CURRENT_LIMIT};
pub use trace::{SimTrace, TraceRow, TRACE_COLUMNS};
