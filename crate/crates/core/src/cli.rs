//! JSON run configuration and the command-line subcommands.
//!
//! A run is described by a single JSON document; tagged unions use a
//! `"type"` discriminator string. Exit codes are a stable contract:
//! 0 success, 1 usage or configuration error, 2 numeric failure.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::apmodels::{
    density, epsilon_periods, mean_value_potential, mean_value_seq, BiSequenceModel,
    GeneralizedPotential, PointSetModel, PotentialSampler, TrigTerm,
};
use crate::error::Error;
use crate::oracle::{
    circle_map_rho, closed_form_rho_constant, exact_piecewise_evolve, PeriodicSpec,
};
use crate::prufer::IntegratorConfig;
use crate::rotnum::{
    detect_plateaus, energy_grid, estimate_rho, estimate_rho_birkhoff, scan_energies, ScanRow,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

/// Quadrature accuracy assumed of the composite per-gap Simpson rule on the
/// built-in background families, used when budgeting check thresholds.
pub const QUADRATURE_TOL: f64 = 1e-8;

const DEFAULT_QUAD_POINTS: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub type CliResult = std::result::Result<(), CliError>;

// ---------------------------------------------------------------------------
// Configuration schema
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub potential: PotentialSpec,
    pub energies: EnergySpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default = "default_horizon")]
    pub horizon: i64,
    #[serde(default)]
    pub initial_angle: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

fn default_horizon() -> i64 {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub q: BackgroundSpec,
    pub v: SequenceSpec,
    pub gamma: LatticeSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackgroundSpec {
    Constant {
        value: f64,
    },
    TrigPoly {
        terms: Vec<TrigTermSpec>,
    },
    /// Constant on every lattice gap: `q = values[i]` on `(x_i, x_{i+1})`.
    PiecewiseConstant {
        values: SequenceSpec,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTermSpec {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceSpec {
    Zero,
    Constant {
        value: f64,
    },
    Alternating {
        amplitude: f64,
    },
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    Quasiperiodic {
        terms: Vec<TrigTermSpec>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatticeSpec {
    Periodic {
        spacing: f64,
    },
    /// `x_i = i + amplitude * sin(frequency * i + phase)`; requires
    /// `|amplitude| * |frequency| < 1`.
    SinePerturbed {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnergySpec {
    Range {
        min: f64,
        max: f64,
        /// Defaults to a step that puts 10^4 points on the grid.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step: Option<f64>,
    },
    List {
        list: Vec<f64>,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    /// Defaults to one fiftieth of the smallest lattice gap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substep_angle_cap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl SequenceSpec {
    fn build(&self) -> BiSequenceModel {
        match self {
            SequenceSpec::Zero => BiSequenceModel::zero(),
            SequenceSpec::Constant { value } => BiSequenceModel::constant(*value),
            SequenceSpec::Alternating { amplitude } => BiSequenceModel::alternating(*amplitude),
            SequenceSpec::Sine {
                amplitude,
                frequency,
                phase,
            } => BiSequenceModel::sine(*amplitude, *frequency, *phase),
            SequenceSpec::Quasiperiodic { terms } => BiSequenceModel::quasiperiodic(
                terms
                    .iter()
                    .map(|t| (t.amplitude, t.frequency, t.phase))
                    .collect(),
            ),
        }
    }

    fn numbers(&self) -> Vec<f64> {
        match self {
            SequenceSpec::Zero => vec![],
            SequenceSpec::Constant { value } => vec![*value],
            SequenceSpec::Alternating { amplitude } => vec![*amplitude],
            SequenceSpec::Sine {
                amplitude,
                frequency,
                phase,
            } => vec![*amplitude, *frequency, *phase],
            SequenceSpec::Quasiperiodic { terms } => terms
                .iter()
                .flat_map(|t| [t.amplitude, t.frequency, t.phase])
                .collect(),
        }
    }

    /// True when the sequence is identically zero by construction.
    fn is_zero(&self) -> bool {
        match self {
            SequenceSpec::Zero => true,
            SequenceSpec::Constant { value } => *value == 0.0,
            SequenceSpec::Alternating { amplitude } => *amplitude == 0.0,
            SequenceSpec::Sine { amplitude, .. } => *amplitude == 0.0,
            SequenceSpec::Quasiperiodic { terms } => terms.iter().all(|t| t.amplitude == 0.0),
        }
    }
}

impl RunConfig {
    pub fn parse(json: &str) -> Result<Self, CliError> {
        let config: RunConfig =
            serde_json::from_str(json).map_err(|e| usage(format!("malformed config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<(), CliError> {
        let mut numbers = self.potential.v.numbers();
        match &self.potential.q {
            BackgroundSpec::Constant { value } => numbers.push(*value),
            BackgroundSpec::TrigPoly { terms } => numbers.extend(
                terms
                    .iter()
                    .flat_map(|t| [t.amplitude, t.frequency, t.phase]),
            ),
            BackgroundSpec::PiecewiseConstant { values } => numbers.extend(values.numbers()),
        }
        match &self.potential.gamma {
            LatticeSpec::Periodic { spacing } => numbers.push(*spacing),
            LatticeSpec::SinePerturbed {
                amplitude,
                frequency,
                phase,
            } => numbers.extend([*amplitude, *frequency, *phase]),
        }
        match &self.energies {
            EnergySpec::Range { min, max, step } => {
                numbers.extend([*min, *max]);
                numbers.extend(*step);
            }
            EnergySpec::List { list } => numbers.extend(list.iter().copied()),
        }
        numbers.push(self.initial_angle);
        numbers.extend(self.integrator.h_max);
        numbers.extend(self.integrator.substep_angle_cap);
        if let Some(bad) = numbers.iter().find(|x| !x.is_finite()) {
            return Err(usage(format!("non-finite numeric field in config: {bad}")));
        }

        if let EnergySpec::List { list } = &self.energies {
            if list.is_empty() {
                return Err(usage("energy list must not be empty"));
            }
        }
        if self.horizon < 2 || self.horizon % 2 != 0 {
            return Err(usage(format!(
                "horizon must be even and at least 2, got {}",
                self.horizon
            )));
        }
        // Surface the lattice guard as a config error.
        self.build_lattice()?;
        Ok(())
    }

    fn build_lattice(&self) -> Result<PointSetModel, CliError> {
        match &self.potential.gamma {
            LatticeSpec::Periodic { spacing } => PointSetModel::periodic(*spacing),
            LatticeSpec::SinePerturbed {
                amplitude,
                frequency,
                phase,
            } => PointSetModel::sine_perturbed(*amplitude, *frequency, *phase),
        }
        .map_err(|e| usage(e.to_string()))
    }

    pub fn build_potential(&self) -> Result<GeneralizedPotential, CliError> {
        let gamma = self.build_lattice()?;
        let q = match &self.potential.q {
            BackgroundSpec::Constant { value } => PotentialSampler::constant(*value),
            BackgroundSpec::TrigPoly { terms } => PotentialSampler::trig_poly(
                terms
                    .iter()
                    .map(|t| TrigTerm {
                        amplitude: t.amplitude,
                        frequency: t.frequency,
                        phase: t.phase,
                    })
                    .collect(),
            ),
            BackgroundSpec::PiecewiseConstant { values } => {
                PotentialSampler::piecewise_constant(values.build(), gamma.clone())
            }
        };
        Ok(GeneralizedPotential::new(
            q,
            self.potential.v.build(),
            gamma,
        ))
    }

    pub fn build_integrator(&self, min_gap: f64) -> IntegratorConfig {
        let mut cfg = IntegratorConfig::for_spacing(min_gap);
        if let Some(h) = self.integrator.h_max {
            cfg.h_max = h;
        }
        if let Some(cap) = self.integrator.substep_angle_cap {
            cfg.substep_angle_cap = cap;
        }
        cfg
    }

    pub fn energy_list(&self) -> Result<Vec<f64>, CliError> {
        match &self.energies {
            EnergySpec::Range { min, max, step } => {
                let step = step.unwrap_or((max - min) / 9999.0);
                energy_grid(*min, *max, step).map_err(|e| usage(e.to_string()))
            }
            EnergySpec::List { list } => {
                if list.is_empty() {
                    return Err(usage("energy list must not be empty"));
                }
                let mut sorted = list.clone();
                sorted.sort_by(|a, b| a.partial_cmp(b).expect("energies are finite"));
                Ok(sorted)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Row formatting
// ---------------------------------------------------------------------------

/// 17 significant digits: enough to round-trip an f64 exactly.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_quote(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Renders rows as RFC-4180-style CSV with a stable header. The `error`
/// column appears only when some row actually failed.
pub fn rows_to_csv(rows: &[ScanRow]) -> String {
    let with_errors = rows.iter().any(|r| r.error.is_some());
    let mut out = String::new();
    out.push_str("E,rho,error_est,n_steps,x_final");
    if with_errors {
        out.push_str(",error");
    }
    out.push_str("\r\n");
    for row in rows {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            fmt_f64(row.energy),
            fmt_f64(row.rho),
            fmt_f64(row.error_est),
            row.n_steps,
            fmt_f64(row.x_final),
        );
        if with_errors {
            out.push(',');
            out.push_str(&csv_quote(row.error.as_deref().unwrap_or("")));
        }
        out.push_str("\r\n");
    }
    out
}

pub fn rows_to_json(rows: &[ScanRow]) -> String {
    serde_json::to_string_pretty(rows).expect("scan rows serialize")
}

// ---------------------------------------------------------------------------
// scan
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Default)]
pub struct ScanOptions {
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub jobs: Option<usize>,
}

fn default_jobs() -> usize {
    if let Ok(v) = std::env::var("ROTNUM_JOBS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                return n;
            }
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Runs the energy scan described by the config and writes one row per
/// energy. Per-energy failures are recorded in the rows; only a scan with no
/// successful row at all is a numeric failure.
pub fn cmd_scan(config_path: &Path, opts: &ScanOptions) -> CliResult {
    let config = RunConfig::from_path(config_path)?;
    let potential = config.build_potential()?;
    let cfg = config.build_integrator(potential.gamma().min_gap());
    let energies = config.energy_list()?;
    let jobs = opts.jobs.unwrap_or_else(default_jobs).max(1);

    let rows = scan_energies(
        &potential,
        &energies,
        config.initial_angle,
        config.horizon,
        &cfg,
        jobs,
    );
    if rows.iter().all(|r| r.error.is_some()) {
        return Err(CliError::Numeric(format!(
            "every row failed; first error: {}",
            rows[0].error.as_deref().unwrap_or("unknown")
        )));
    }

    let format = opts
        .format
        .or(config.output.as_ref().map(|o| o.format))
        .unwrap_or_default();
    let rendered = match format {
        OutputFormat::Csv => rows_to_csv(&rows),
        OutputFormat::Json => rows_to_json(&rows),
    };
    let target = opts
        .out
        .clone()
        .or(config.output.as_ref().map(|o| o.path.clone()));
    match &target {
        Some(path) => fs::write(path, rendered)
            .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(rendered.as_bytes())
                .map_err(|e| CliError::Numeric(format!("cannot write to stdout: {e}")))?;
        }
    }

    // Gap-candidate summary; kept off stdout so it never mixes with data.
    let plateaus = detect_plateaus(&rows, 1e-3, 5);
    eprintln!("plateaus (flat_tol 1e-3, min_width 5): {}", plateaus.len());
    for p in &plateaus {
        eprintln!(
            "  E in [{:.6}, {:.6}]  rho = {:.9}  ({} rows)",
            p.e_lo, p.e_hi, p.rho, p.rows
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// apdiag
// ---------------------------------------------------------------------------

/// Almost-periodicity diagnostics: epsilon-almost periods in a shift range,
/// the relative-denseness window over that range, and density / mean-value
/// summaries.
pub fn cmd_apdiag(config_path: &Path, eps: f64, tau_range: i64) -> CliResult {
    if eps <= 0.0 || eps.is_nan() {
        return Err(usage(format!("eps must be positive, got {eps}")));
    }
    if tau_range < 1 {
        return Err(usage(format!("range must be at least 1, got {tau_range}")));
    }
    let config = RunConfig::from_path(config_path)?;
    let potential = config.build_potential()?;

    let window = (2 * tau_range).max(200);
    let report = epsilon_periods(&potential, eps, tau_range, window);
    println!(
        "eps-almost periods of the potential (eps = {eps}, tau in [{}, {}], window {window}):",
        report.search_range.0, report.search_range.1
    );
    println!("  found {} period(s)", report.found_periods.len());
    println!("  periods: {}", render_period_list(&report.found_periods));
    match report.window_bound {
        Some(l) => println!("  relative-denseness window over the searched range: l = {l}"),
        None => println!("  relative-denseness window: not found in range"),
    }

    let gamma = potential.gamma();
    let n = 10_000;
    println!("density over {n} gaps: {:.12}", density(gamma, n));
    println!(
        "mean value of delta strengths over [0, {n}): {:.12}",
        mean_value_seq(potential.strengths(), 0, n)
    );
    let span = gamma.position(n);
    println!(
        "mean value of the potential over [0, {:.3}): {:.12}",
        span,
        mean_value_potential(&potential, 0.0, span, DEFAULT_QUAD_POINTS)
    );
    Ok(())
}

fn render_period_list(periods: &[i64]) -> String {
    const LIMIT: usize = 40;
    if periods.len() <= LIMIT {
        format!("{periods:?}")
    } else {
        let head: Vec<i64> = periods[..LIMIT / 2].to_vec();
        let tail: Vec<i64> = periods[periods.len() - LIMIT / 2..].to_vec();
        format!("{head:?} ... {tail:?}")
    }
}

// ---------------------------------------------------------------------------
// oracle-compare
// ---------------------------------------------------------------------------

const DEFAULT_ORACLE_TOL: f64 = 1e-3;
/// Longest lattice period probed when looking for a periodic structure.
const MAX_PROBED_PERIOD: i64 = 16;

/// Compares the direct and Birkhoff estimators against whichever independent
/// references apply to the configured potential, and fails (exit 2) when any
/// deviation exceeds the tolerance.
pub fn cmd_oracle_compare(config_path: &Path, tol: Option<f64>) -> CliResult {
    let tol = tol.unwrap_or(DEFAULT_ORACLE_TOL);
    if tol <= 0.0 || tol.is_nan() {
        return Err(usage(format!("tolerance must be positive, got {tol}")));
    }
    let config = RunConfig::from_path(config_path)?;
    let potential = config.build_potential()?;
    let cfg = config.build_integrator(potential.gamma().min_gap());
    let energies = config.energy_list()?;

    let no_deltas = config.potential.v.is_zero();
    let constant_q = matches!(config.potential.q, BackgroundSpec::Constant { .. });
    let gap_constant_q = matches!(
        config.potential.q,
        BackgroundSpec::Constant { .. } | BackgroundSpec::PiecewiseConstant { .. }
    );
    let periodic =
        (1..=MAX_PROBED_PERIOD).find_map(|p| PeriodicSpec::new(potential.clone(), p).ok());

    if !(no_deltas && constant_q) && periodic.is_none() && !gap_constant_q {
        println!("no closed-form oracle; internal consistency only (direct vs Birkhoff)");
    }

    let mut overall: f64 = 0.0;
    for &e in &energies {
        let direct = estimate_rho(&potential, e, config.initial_angle, config.horizon, &cfg)
            .map_err(|err| CliError::Numeric(err.to_string()))?;
        let birkhoff =
            estimate_rho_birkhoff(&potential, e, config.initial_angle, config.horizon, &cfg)
                .map_err(|err| CliError::Numeric(err.to_string()))?;
        let mut line = format!(
            "E = {:>10.6}  direct = {:.9} (err_est {:.2e})  birkhoff = {:.9}",
            e, direct.rho, direct.error_est, birkhoff.rho
        );
        let mut dev: f64 = (direct.rho - birkhoff.rho).abs();

        if no_deltas && constant_q {
            let q0 = match config.potential.q {
                BackgroundSpec::Constant { value } => value,
                _ => unreachable!(),
            };
            let reference = closed_form_rho_constant(q0, e);
            dev = dev.max((direct.rho - reference).abs());
            let _ = write!(line, "  closed_form = {reference:.9}");
        } else if let Some(spec) = &periodic {
            let reference = circle_map_rho(spec, e, 64, 200_000, &cfg)
                .map_err(|err| CliError::Numeric(err.to_string()))?;
            dev = dev.max((direct.rho - reference).abs());
            let _ = write!(line, "  circle_map = {reference:.9}");
        } else if gap_constant_q {
            let traj = exact_piecewise_evolve(&potential, e, config.initial_angle, config.horizon)
                .map_err(|err| CliError::Numeric(err.to_string()))?;
            let reference = (traj.final_angle() - config.initial_angle) / traj.final_x();
            dev = dev.max((direct.rho - reference).abs());
            let _ = write!(line, "  exact_evolution = {reference:.9}");
        }

        let _ = write!(line, "  max_dev = {dev:.3e}");
        println!("{line}");
        overall = overall.max(dev);
    }

    println!("overall max deviation = {overall:.3e}, tolerance = {tol:.3e}");
    if overall > tol {
        println!("FAIL");
        return Err(CliError::Numeric(format!(
            "deviation {overall:.3e} exceeds tolerance {tol:.3e}"
        )));
    }
    println!("PASS");
    Ok(())
}

// ---------------------------------------------------------------------------
// decompose-check
// ---------------------------------------------------------------------------

/// Verifies the mean-value decomposition over `[0, span)`: the mean of the
/// full potential against the mean of its background plus lattice density
/// times the mean delta strength.
pub fn cmd_decompose_check(config_path: &Path, span: f64) -> CliResult {
    if !span.is_finite() || span <= 0.0 {
        return Err(usage(format!(
            "span must be positive and finite, got {span}"
        )));
    }
    let config = RunConfig::from_path(config_path)?;
    let potential = config.build_potential()?;
    let gamma = potential.gamma();

    let lhs = mean_value_potential(&potential, 0.0, span, DEFAULT_QUAD_POINTS);
    let background_only = GeneralizedPotential::new(
        potential.q().clone(),
        BiSequenceModel::zero(),
        gamma.clone(),
    );
    let n = gamma.index_at_or_above(span).max(1);
    let rhs = mean_value_potential(&background_only, 0.0, span, DEFAULT_QUAD_POINTS)
        + density(gamma, n) * mean_value_seq(potential.strengths(), 0, n);

    let diff = (lhs - rhs).abs();
    let threshold = 10.0 * (1.0 / span + QUADRATURE_TOL);
    println!("mean value of potential over [0, {span}):      {lhs:.12}");
    println!("background mean + density * strength mean:   {rhs:.12}");
    println!("difference = {diff:.3e}, threshold = {threshold:.3e}");
    if diff > threshold {
        println!("FAIL");
        return Err(CliError::Numeric(format!(
            "decomposition mismatch {diff:.3e} exceeds {threshold:.3e}"
        )));
    }
    println!("PASS");
    Ok(())
}

// ---------------------------------------------------------------------------

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) => CliError::Usage(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}
