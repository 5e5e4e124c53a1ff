//! Scenario files.
//!
//! A scenario is a TOML document. Every section is optional and every key
//! has a default; unknown keys are rejected.
//!
//! ```toml
//! kind = "flush-sim"          # optional, must match the subcommand
//!
//! [scaling]                   # eps, t_final, length, eta, k, delta, theta, m
//! eps = 0.1
//!
//! [grid]                      # nx, ny, x_min, x_max
//! [datum]                     # amplitude, center, width, tail_bound, regularize
//! [run]                       # time stepping, records, profile tables, cutoffs
//! [decay]                     # ms, window, moment_checks, tolerances
//! [scale]                     # layer_m, layer_eps, trace_eps, trace_times
//! [radius]                    # valid_factor, invalid_factor
//! [ablate]                    # eps
//! ```

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use flushlab::ns::{RegularizationOptions, RunOptions, ScalingConfig};
use flushlab::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    DecayStudy,
    ScalingStudy,
    FlushSim,
    RadiusBudget,
    Ablation,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::DecayStudy => "decay-study",
            Kind::ScalingStudy => "scaling-study",
            Kind::FlushSim => "flush-sim",
            Kind::RadiusBudget => "radius-budget",
            Kind::Ablation => "ablation",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub x_min: f64,
    pub x_max: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            nx: 256,
            ny: 128,
            x_min: -4.0,
            x_max: 6.0,
        }
    }
}

/// Bundled vortex datum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatumConfig {
    pub amplitude: f64,
    /// Vortex centre, in units of `L`.
    pub center: f64,
    /// Gaussian width, in units of `L`.
    pub width: f64,
    /// Allowed relative tail of the extension outside `[−L, 2L]`.
    pub tail_bound: f64,
    pub regularize: Option<RegularizationOptions>,
}

impl Default for DatumConfig {
    fn default() -> Self {
        Self {
            amplitude: 0.05,
            center: 0.5,
            width: 0.12,
            tail_bound: 1e-6,
            regularize: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayConfig {
    pub ms: Vec<usize>,
    /// Fit window in units of `T`.
    pub window: (f64, f64),
    /// Random designs checked against the moment-transfer identities.
    pub moment_checks: usize,
    pub exponent_target: f64,
    pub exponent_tol: f64,
    pub step_tol: f64,
    pub tail_fraction_max: f64,
    pub first_moment_tol: f64,
    pub third_moment_tol: f64,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self {
            ms: vec![0, 1, 2, 3],
            window: (10.0, 1e3),
            moment_checks: 20,
            exponent_target: -1.75,
            exponent_tol: 0.1,
            step_tol: 0.15,
            tail_fraction_max: 0.01,
            first_moment_tol: 1e-8,
            third_moment_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScaleConfig {
    /// Vanishing odd moments for the final-layer fit.
    pub layer_m: usize,
    pub layer_eps: Vec<f64>,
    pub slope_min: f64,
    pub trace_eps: Vec<f64>,
    /// Evaluation times of the rescaling check, in units of `T`.
    pub trace_times: Vec<f64>,
    pub trace_tol: f64,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        Self {
            layer_m: 3,
            layer_eps: [-1.0, -1.5, -2.0, -2.5, -3.0].iter().map(|e| 10f64.powf(*e)).collect(),
            slope_min: 3.0,
            trace_eps: vec![1e-2, 1e-3, 1e-4],
            trace_times: vec![1.0 / 3.0, 2.0 / 3.0, 1.0, 3.0],
            trace_tol: 0.01,
        }
    }
}

/// Initial radii as multiples of the total radius loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadiusConfig {
    pub valid_factor: f64,
    pub invalid_factor: f64,
}

impl Default for RadiusConfig {
    fn default() -> Self {
        Self {
            valid_factor: 2.0,
            invalid_factor: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateConfig {
    pub eps: Vec<f64>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self {
            eps: vec![0.2, 0.1, 0.05],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub kind: Option<Kind>,
    pub scaling: ScalingConfig,
    pub grid: GridConfig,
    pub datum: DatumConfig,
    pub run: RunOptions,
    pub decay: DecayConfig,
    pub scale: ScaleConfig,
    pub radius: RadiusConfig,
    pub ablate: AblateConfig,
}

/// Rejected scenario, with the offending field when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: Some(field.to_string()),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Some(k) => write!(f, "{k}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

pub fn parse_config(path: &Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        field: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_str(&text)
}

/// Parses and validates a scenario. Syntax errors carry line and column.
pub fn parse_str(text: &str) -> Result<Scenario, ConfigError> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| {
        let mut message = e.message().trim().to_string();
        if let Some(span) = e.span() {
            let (line, col) = line_col(text, span.start);
            message = format!("line {line}, column {col}: {message}");
        }
        ConfigError { field: None, message }
    })?;
    scenario.validate()?;
    Ok(scenario)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, col)
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::at(field, format!("{v} must be positive")))
    }
}

fn unit_interval(field: &str, values: &[f64]) -> Result<(), ConfigError> {
    match values.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
        Some(e) => Err(ConfigError::at(field, format!("{e} must lie in (0, 1)"))),
        None => Ok(()),
    }
}

fn at_least_two(field: &str, n: usize) -> Result<(), ConfigError> {
    if n < 2 {
        return Err(ConfigError::at(field, "needs at least two entries"));
    }
    Ok(())
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scaling.validate().map_err(|e| ConfigError::at("scaling", strip(e)))?;
        self.grid()?;
        let d = &self.datum;
        positive("datum.width", d.width)?;
        if !(d.amplitude.is_finite()) {
            return Err(ConfigError::at("datum.amplitude", "must be finite"));
        }
        if !(d.tail_bound > 0.0 && d.tail_bound < 1.0) {
            return Err(ConfigError::at("datum.tail_bound", format!("{} must lie in (0, 1)", d.tail_bound)));
        }
        if let Some(r) = &d.regularize {
            positive("datum.regularize.tau", r.tau)?;
            if let Some(rad) = r.radius {
                positive("datum.regularize.radius", rad)?;
            }
        }
        let r = &self.run;
        positive("run.dt_max", r.dt_max)?;
        positive("run.cfl", r.cfl)?;
        if r.records_control == 0 || r.records_free == 0 {
            return Err(ConfigError::at("run", "records_control and records_free must be positive"));
        }
        if let Some(rho) = r.rho0 {
            positive("run.rho0", rho)?;
        }

        let dc = &self.decay;
        if dc.ms.is_empty() {
            return Err(ConfigError::at("decay.ms", "must not be empty"));
        }
        if !(dc.window.0 > 0.0 && dc.window.1 >= 10.0 * dc.window.0) {
            return Err(ConfigError::at("decay.window", "must be positive and span at least one decade"));
        }
        if dc.window.1 > self.run.profile.t_max_factor {
            return Err(ConfigError::at(
                "decay.window",
                format!("upper end exceeds run.profile.t_max_factor = {}", self.run.profile.t_max_factor),
            ));
        }

        let sc = &self.scale;
        at_least_two("scale.layer_eps", sc.layer_eps.len())?;
        unit_interval("scale.layer_eps", &sc.layer_eps)?;
        unit_interval("scale.trace_eps", &sc.trace_eps)?;
        if let Some(t) = sc.trace_times.iter().find(|t| !(**t > 0.0)) {
            return Err(ConfigError::at("scale.trace_times", format!("{t} must be positive")));
        }

        positive("radius.valid_factor", self.radius.valid_factor)?;
        positive("radius.invalid_factor", self.radius.invalid_factor)?;

        at_least_two("ablate.eps", self.ablate.eps.len())?;
        unit_interval("ablate.eps", &self.ablate.eps)?;
        if self.ablate.eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(ConfigError::at("ablate.eps", "must be listed in decreasing order"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        let g = &self.grid;
        Grid::new(g.nx, g.ny, g.x_min, g.x_max, self.scaling.length).map_err(|e| ConfigError::at("grid", strip(e)))
    }

    /// Scaling parameters with `eps` replaced.
    pub fn at_eps(&self, eps: f64) -> ScalingConfig {
        ScalingConfig { eps, ..self.scaling }
    }
}

fn strip(e: flushlab::Error) -> String {
    let s = e.to_string();
    s.strip_prefix("invalid parameter: ").map(str::to_string).unwrap_or(s)
}
