//! Command-line front end for the inverter control library.
//!
//! Exit codes: 0 on success, 2 on invalid usage or configuration, 3 when a
//! simulated trajectory diverges (the partial trace is still written).

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use flatgrid_core::{
    coeffs_filtered, coeffs_measured, conservative_conditions, first_unstable,
    gains_from_settling_times, impedance_sweep, load_config, notch_gain_from_settling_time,
    region_curves_to_csv, routh_hurwitz_complex_cubic, run_scenario, scan_region, sweep_to_csv,
    ControllerGains, GridKind, OperatingEnvelope, PlantParams, RunError, SimTrace, Variant,
};

#[derive(Parser)]
#[command(
    name = "flatgrid",
    version,
    about = "Flatness-based complex-power control of a grid-feeding inverter",
    after_help = "Exit codes: 0 success, 2 invalid usage or configuration, 3 trajectory divergence."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario from a JSON config and emit the trace as CSV
    Simulate {
        /// Path to the scenario config (JSON)
        config: PathBuf,
        /// Write the CSV here instead of stdout
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Tabulate steady-state power limits over a grid-impedance axis
    Limits {
        /// Grid type: inductive sweeps xg, resistive sweeps rg
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Fixed active-power values (inductive grids tabulate q limits)
        #[arg(long, value_delimiter = ',')]
        p: Vec<f64>,
        /// Fixed reactive-power values (resistive grids tabulate p limits)
        #[arg(long, value_delimiter = ',')]
        q: Vec<f64>,
        /// DC-link voltage bounding the realisable PCC voltage (pu)
        #[arg(long, default_value_t = 1.3 * std::f64::consts::SQRT_2)]
        vc: f64,
        /// Converter current rating (pu)
        #[arg(long, default_value_t = 1.0)]
        imax: f64,
        /// Grid voltage magnitude (pu)
        #[arg(long, default_value_t = 1.0)]
        vg: f64,
        /// Impedance axis as lo:hi:step (pu); lo must be positive
        #[arg(long, default_value = "0.005:1.0:0.005")]
        axis: String,
        /// Write the CSV here instead of stdout
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compute feedback gains from settling times
    Gains {
        /// Closed-loop settling times t1,t2,t3 (s)
        #[arg(long, value_delimiter = ',')]
        ts: Vec<f64>,
        /// Notch-filter settling time (s); adds the kappa_r line
        #[arg(long)]
        notch_ts: Option<f64>,
    },
    /// Evaluate closed-loop stability at one operating point
    Stability {
        /// Which PCC voltage the control law uses
        #[arg(long, value_enum)]
        variant: VariantArg,
        #[command(flatten)]
        design: DesignArgs,
        #[command(flatten)]
        envelope: EnvelopeArgs,
    },
    /// Sweep closed-loop stability over grid reactance and emit CSV
    Sweep {
        /// Reactance range as lo:hi:step (pu); overrides the design xg
        #[arg(long, default_value = "0.0:0.8:0.005")]
        range: String,
        /// Which PCC voltage the control law uses
        #[arg(long, value_enum)]
        variant: VariantArg,
        #[command(flatten)]
        design: DesignArgs,
        #[command(flatten)]
        envelope: EnvelopeArgs,
        /// Write the CSV here instead of stdout
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Inductive,
    Resistive,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Measured,
    Filtered,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Variant {
        match v {
            VariantArg::Measured => Variant::Measured,
            VariantArg::Filtered => Variant::Filtered,
        }
    }
}

/// Controller and plant parameters shared by the analysis subcommands.
#[derive(Args)]
struct DesignArgs {
    /// Closed-loop settling times t1,t2,t3 (s)
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.0011,0.02")]
    ts: Vec<f64>,
    /// Notch-filter settling time (s)
    #[arg(long, default_value_t = 0.05)]
    notch_ts: f64,
    /// Converter-side reactance at the grid frequency (pu)
    #[arg(long, default_value_t = 0.02)]
    xl: f64,
    /// Grid reactance at the grid frequency (pu)
    #[arg(long, default_value_t = 0.3)]
    xg: f64,
    /// Grid resistance (pu)
    #[arg(long, default_value_t = 0.0)]
    rg: f64,
    /// DC-link capacitance (pu s)
    #[arg(long, default_value_t = 4.8e-5)]
    c: f64,
    /// Grid angular frequency (rad/s)
    #[arg(long, default_value_t = 100.0 * std::f64::consts::PI)]
    omega: f64,
    /// Grid voltage magnitude (pu)
    #[arg(long, default_value_t = 1.0)]
    vg: f64,
}

impl DesignArgs {
    fn gains(&self) -> Result<ControllerGains> {
        let [t1, t2, t3]: [f64; 3] = self
            .ts
            .clone()
            .try_into()
            .map_err(|v: Vec<f64>| anyhow::anyhow!("--ts needs 3 values, got {}", v.len()))?;
        if t1 <= 0.0 || t2 <= 0.0 || t3 <= 0.0 {
            bail!("settling times must be positive");
        }
        if self.notch_ts <= 0.0 {
            bail!("--notch-ts must be positive");
        }
        let mut g = gains_from_settling_times([t1, t2, t3]);
        g.kappa_r = notch_gain_from_settling_time(self.notch_ts);
        Ok(g)
    }

    fn plant(&self) -> Result<PlantParams> {
        if self.xl <= 0.0 || self.xg < 0.0 || self.rg < 0.0 || self.omega <= 0.0 {
            bail!("plant parameters out of range: xl and omega must be positive, xg and rg nonnegative");
        }
        Ok(PlantParams {
            l: self.xl / self.omega,
            lg: self.xg / self.omega,
            rg: self.rg,
            c: self.c,
            omega: self.omega,
            vg_mag: self.vg,
        })
    }
}

/// Operating envelope for the stability tests.
#[derive(Args)]
struct EnvelopeArgs {
    /// Angle error between filtered and measured PCC voltage (rad)
    #[arg(long, default_value_t = 0.0)]
    e_theta: f64,
    /// Measured-over-filtered PCC voltage magnitude ratio
    #[arg(long, default_value_t = 1.0)]
    vp_ratio: f64,
    /// Relative rate of the PCC voltage magnitude (1/s)
    #[arg(long, default_value_t = 0.0)]
    dvp_over_vp: f64,
    /// PCC voltage angular velocity (rad/s); defaults to the grid frequency
    #[arg(long)]
    theta_dot: Option<f64>,
}

impl EnvelopeArgs {
    fn envelope(&self, omega: f64) -> OperatingEnvelope {
        OperatingEnvelope {
            e_theta: self.e_theta,
            vp_ratio: self.vp_ratio,
            dvp_over_vp: self.dvp_over_vp,
            theta_dot: self.theta_dot.unwrap_or(omega),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Simulate { config, output } => simulate(&config, output.as_deref()),
        Cmd::Limits {
            kind,
            p,
            q,
            vc,
            imax,
            vg,
            axis,
            output,
        } => limits(kind, &p, &q, vc, imax, vg, &axis, output.as_deref()),
        Cmd::Gains { ts, notch_ts } => gains_cmd(&ts, notch_ts),
        Cmd::Stability {
            variant,
            design,
            envelope,
        } => stability_cmd(variant, &design, &envelope),
        Cmd::Sweep {
            range,
            variant,
            design,
            envelope,
            output,
        } => sweep_cmd(&range, variant, &design, &envelope, output.as_deref()),
    }
}

fn emit(text: &str, output: Option<&std::path::Path>) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn simulate(config: &std::path::Path, output: Option<&std::path::Path>) -> Result<ExitCode> {
    let text = std::fs::read_to_string(config)
        .with_context(|| format!("reading {}", config.display()))?;
    let cfg = load_config(&text).with_context(|| format!("loading {}", config.display()))?;
    let (trace, divergence) = match run_scenario(&cfg) {
        Ok(trace) => (trace, None),
        Err(RunError::Divergence(info)) => {
            let flatgrid_core::DivergenceInfo { time, reason, trace } = *info;
            (trace, Some((time, reason)))
        }
    };
    let summary = summarize(&trace);
    if !trace.rows.is_empty() {
        emit(&trace.to_csv()?, output)?;
    }
    eprintln!("{summary}");
    match divergence {
        Some((time, reason)) => {
            eprintln!("diverged at t = {time} s: {reason}");
            Ok(ExitCode::from(3))
        }
        None => Ok(ExitCode::SUCCESS),
    }
}

fn summarize(trace: &SimTrace) -> String {
    match trace.rows.last() {
        None => "no rows recorded".to_string(),
        Some(last) => {
            let saturated = trace.rows.iter().filter(|r| r.saturated).count();
            format!(
                "{} rows to t = {} s; final p = {:.6}, q = {:.6}, vc = {:.6}; {saturated} saturated rows",
                trace.rows.len(),
                last.t,
                last.p,
                last.q,
                last.vc
            )
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn limits(
    kind: KindArg,
    p: &[f64],
    q: &[f64],
    vc: f64,
    imax: f64,
    vg: f64,
    axis: &str,
    output: Option<&std::path::Path>,
) -> Result<ExitCode> {
    if vc <= 0.0 || imax <= 0.0 || vg <= 0.0 {
        bail!("--vc, --imax, and --vg must be positive");
    }
    let (kind, fixed) = match kind {
        KindArg::Inductive => {
            if !q.is_empty() {
                bail!("inductive grids fix p and tabulate q limits; use --p");
            }
            if p.is_empty() {
                bail!("--p is required for inductive grids");
            }
            (GridKind::Inductive, p)
        }
        KindArg::Resistive => {
            if !p.is_empty() {
                bail!("resistive grids fix q and tabulate p limits; use --q");
            }
            if q.is_empty() {
                bail!("--q is required for resistive grids");
            }
            (GridKind::Resistive, q)
        }
    };
    let (lo, hi, step) = parse_range(axis)?;
    if lo <= 0.0 {
        bail!("the impedance axis must start above zero");
    }
    let n = ((hi - lo) / step).round() as usize;
    let axis: Vec<f64> = (0..=n).map(|k| lo + k as f64 * step).collect();
    let families = scan_region(&axis, fixed, kind, vg, vc, imax);
    emit(&region_curves_to_csv(&families, kind), output)?;
    Ok(ExitCode::SUCCESS)
}

fn gains_cmd(ts: &[f64], notch_ts: Option<f64>) -> Result<ExitCode> {
    let [t1, t2, t3]: [f64; 3] = ts
        .to_vec()
        .try_into()
        .map_err(|v: Vec<f64>| anyhow::anyhow!("--ts needs 3 values, got {}", v.len()))?;
    if t1 <= 0.0 || t2 <= 0.0 || t3 <= 0.0 {
        bail!("settling times must be positive");
    }
    let g = gains_from_settling_times([t1, t2, t3]);
    println!("k1 = {}", g.k1);
    println!("k2 = {}", g.k2);
    println!("k3 = {}", g.k3);
    if let Some(nts) = notch_ts {
        if nts <= 0.0 {
            bail!("--notch-ts must be positive");
        }
        println!("kappa_r = {}", notch_gain_from_settling_time(nts));
    }
    Ok(ExitCode::SUCCESS)
}

fn stability_cmd(
    variant: VariantArg,
    design: &DesignArgs,
    envelope: &EnvelopeArgs,
) -> Result<ExitCode> {
    let gains = design.gains()?;
    let plant = design.plant()?;
    let env = envelope.envelope(plant.omega);
    let coeffs = match variant {
        VariantArg::Measured => coeffs_measured(&gains, &plant, &env),
        VariantArg::Filtered => coeffs_filtered(&gains, &plant, &env),
    };
    let verdict = routh_hurwitz_complex_cubic(&coeffs);
    println!("K1 = {}", coeffs.k1);
    println!("K2_re = {}", coeffs.k2.re);
    println!("K2_im = {}", coeffs.k2.im);
    println!("K3 = {}", coeffs.k3);
    println!("margin1 = {}", verdict.margins[0]);
    println!("margin2 = {}", verdict.margins[1]);
    println!("margin3 = {}", verdict.margins[2]);
    println!("stable = {}", verdict.stable);
    if matches!(variant, VariantArg::Filtered) {
        let cons = conservative_conditions(&gains, &plant, env.vp_ratio)?;
        println!("conservative_margin1 = {}", cons.margin1);
        println!("conservative_margin2 = {}", cons.margin2);
        println!("conservative_holds = {}", cons.holds());
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep_cmd(
    range: &str,
    variant: VariantArg,
    design: &DesignArgs,
    envelope: &EnvelopeArgs,
    output: Option<&std::path::Path>,
) -> Result<ExitCode> {
    let gains = design.gains()?;
    let plant = design.plant()?;
    let env = envelope.envelope(plant.omega);
    let (lo, hi, step) = parse_range(range)?;
    let rows = impedance_sweep(&gains, &plant, &env, variant.into(), lo, hi, step);
    emit(&sweep_to_csv(&rows), output)?;
    match first_unstable(&rows) {
        Some(xg) => eprintln!("first unstable xg = {xg}"),
        None => eprintln!("stable across the sweep"),
    }
    Ok(ExitCode::SUCCESS)
}

/// Parses "lo:hi:step" with hi >= lo and step > 0. The negated comparisons
/// also reject NaN components.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn parse_range(text: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        bail!("range must be lo:hi:step, got {text:?}");
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|s| s.parse::<f64>().with_context(|| format!("bad number {s:?} in range")))
        .collect::<Result<_>>()?;
    let (lo, hi, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        bail!("range needs hi >= lo and step > 0, got {text:?}");
    }
    Ok((lo, hi, step))
}
