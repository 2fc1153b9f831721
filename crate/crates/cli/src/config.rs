//! Scenario configuration: the JSON schema, built-in presets, dotted-path
//! overrides, and resolution into runnable settings.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use epidiff_core::calibrate::{CalibrationSpec, FitMethod, ObservationSeries, DEFAULT_FREE_NAMES};
use epidiff_core::ode::IntegratorConfig;
use epidiff_core::params::{BetaSchedule, CompartmentState, Parameters};
use epidiff_core::pde::{DiffusionConfig, PdeRunConfig};
use epidiff_core::presets::{self, PeakSpec, TimeUnit};

/// Names accepted by `--preset` and the dump command.
pub const PRESET_NAMES: [&str; 8] = [
    "germany",
    "cameroon",
    "one-peak",
    "two-peaks",
    "bavaria",
    "cameroon-one-peak",
    "cameroon-two-peaks",
    "oscillating-beta",
];

/// Initial-condition placement choices for spatial runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PlacementConfig {
    /// Spread every compartment evenly over the whole domain.
    Uniform,
    /// Concentrate the non-susceptible compartments in Gaussian bumps.
    Peaks {
        /// Bump centers and widths.
        peaks: Vec<PeakSpec>,
    },
    /// Concentrate the non-susceptible compartments in a named region.
    Region {
        /// Region name as tagged in the geometry file.
        name: String,
    },
}

impl Default for PlacementConfig {
    fn default() -> Self {
        PlacementConfig::Uniform
    }
}

/// Settings of the parameter-fitting command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Names of the free parameters, in order.
    pub free_names: Vec<String>,
    /// Lower box bounds, one per free parameter; empty selects defaults.
    pub lower: Vec<f64>,
    /// Upper box bounds, one per free parameter; empty selects defaults.
    pub upper: Vec<f64>,
    /// Starting point; defaults to the scenario's current parameter values.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_guess: Option<Vec<f64>>,
    /// Optimization algorithm.
    pub method: FitMethod,
    /// Iteration budget.
    pub max_iter: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            free_names: DEFAULT_FREE_NAMES.iter().map(|s| s.to_string()).collect(),
            lower: Vec::new(),
            upper: Vec::new(),
            initial_guess: None,
            method: FitMethod::GaussNewtonDamped,
            max_iter: 1000,
        }
    }
}

/// One scenario as a JSON document; unset fields fall back to the preset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Scenario name used in reports.
    pub name: String,
    /// Case-study or scenario preset supplying every unset field.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Full parameter table; replaces the preset's table wholesale.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameters: Option<Parameters>,
    /// Sparse parameter overrides by field name, applied last.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub set: BTreeMap<String, f64>,
    /// Time-axis interpretation label.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_unit: Option<TimeUnit>,
    /// Initial compartment counts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<CompartmentState>,
    /// Initial cumulative reported count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_cumulative: Option<f64>,
    /// Run horizon in model time units.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// Output sampling step for trajectories and comparisons.
    pub output_step: f64,
    /// Horizon handed to the long-run outcome classifier.
    pub classifier_horizon: f64,
    /// Optional periodic transmission schedule.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<BetaSchedule>,
    /// Adaptive-integrator tolerances.
    pub integrator: IntegratorConfig,
    /// Geometry file (GeoJSON subset) for spatial runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geometry: Option<PathBuf>,
    /// Raster width in cells for spatial runs.
    pub nx: usize,
    /// Initial placement of the non-susceptible compartments.
    pub placement: PlacementConfig,
    /// Per-compartment diffusion coefficients.
    pub diffusion: DiffusionConfig,
    /// Fixed time step of the spatial integrator.
    pub dt: f64,
    /// Times at which spatial runs keep full-field snapshots.
    pub snapshot_times: Vec<f64>,
    /// Relative tolerance of the diffusion linear solves.
    pub linear_tol: f64,
    /// Calibration settings for the fitting command.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationConfig>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "custom".into(),
            preset: None,
            parameters: None,
            set: BTreeMap::new(),
            time_unit: None,
            initial_state: None,
            initial_cumulative: None,
            t_end: None,
            output_step: 1.0,
            classifier_horizon: 1e4,
            schedule: None,
            integrator: IntegratorConfig::default(),
            geometry: None,
            nx: 128,
            placement: PlacementConfig::default(),
            diffusion: DiffusionConfig::default(),
            dt: 0.05,
            snapshot_times: Vec::new(),
            linear_tol: 1e-8,
            calibration: None,
        }
    }
}

/// A fully resolved scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Scenario name used in reports.
    pub name: String,
    /// Validated parameter table.
    pub parameters: Parameters,
    /// Initial compartment counts.
    pub initial_state: CompartmentState,
    /// Initial cumulative reported count.
    pub initial_cumulative: f64,
    /// Time-axis interpretation label.
    pub time_unit: TimeUnit,
    /// Run horizon.
    pub t_end: f64,
    /// Output sampling step.
    pub output_step: f64,
    /// Horizon for the long-run outcome classifier.
    pub classifier_horizon: f64,
    /// Optional periodic transmission schedule.
    pub schedule: Option<BetaSchedule>,
    /// Adaptive-integrator tolerances.
    pub integrator: IntegratorConfig,
    /// Geometry file for spatial runs.
    pub geometry: Option<PathBuf>,
    /// Raster width in cells.
    pub nx: usize,
    /// Initial placement of the non-susceptible compartments.
    pub placement: PlacementConfig,
    /// Per-compartment diffusion coefficients.
    pub diffusion: DiffusionConfig,
    /// Fixed spatial time step.
    pub dt: f64,
    /// Snapshot times for spatial runs.
    pub snapshot_times: Vec<f64>,
    /// Linear-solve tolerance.
    pub linear_tol: f64,
    /// Calibration settings.
    pub calibration: Option<CalibrationConfig>,
}

impl Scenario {
    /// Run controls for the spatial integrator.
    pub fn pde_run_config(&self) -> PdeRunConfig {
        PdeRunConfig {
            dt: self.dt,
            t_end: self.t_end,
            snapshot_times: self.snapshot_times.clone(),
            linear_tol: self.linear_tol,
            schedule: self.schedule,
        }
    }
}

fn ode_scenario(case: presets::Preset) -> ScenarioConfig {
    ScenarioConfig {
        name: case.name.clone(),
        parameters: Some(case.parameters),
        time_unit: Some(case.time_unit),
        initial_state: Some(case.initial_state),
        initial_cumulative: Some(case.initial_cumulative),
        t_end: Some(case.data_horizon),
        ..ScenarioConfig::default()
    }
}

fn spatial_scenario(
    case: presets::Preset,
    geometry: &str,
    placement: PlacementConfig,
    name: &str,
) -> ScenarioConfig {
    let mut cfg = ode_scenario(case);
    cfg.name = name.to_string();
    cfg.geometry = Some(PathBuf::from(geometry));
    cfg.t_end = Some(500.0);
    cfg.snapshot_times = vec![250.0, 500.0];
    cfg.placement = placement;
    cfg
}

/// Expands a built-in preset into a complete scenario document.
pub fn expanded_preset(name: &str) -> Result<ScenarioConfig> {
    let germany_geo = "data/germany.geojson";
    let cameroon_geo = "data/cameroon.geojson";
    let cfg = match name {
        "germany" => ode_scenario(presets::germany()),
        "cameroon" => ode_scenario(presets::cameroon()),
        "one-peak" => spatial_scenario(
            presets::germany(),
            germany_geo,
            PlacementConfig::Peaks {
                peaks: vec![presets::GERMANY_SOUTH_PEAK],
            },
            "one-peak",
        ),
        "two-peaks" => spatial_scenario(
            presets::germany(),
            germany_geo,
            PlacementConfig::Peaks {
                peaks: vec![presets::GERMANY_SOUTH_PEAK, presets::GERMANY_WEST_PEAK],
            },
            "two-peaks",
        ),
        "bavaria" => spatial_scenario(
            presets::germany(),
            germany_geo,
            PlacementConfig::Region {
                name: "Bavaria".into(),
            },
            "bavaria",
        ),
        "cameroon-one-peak" => spatial_scenario(
            presets::cameroon(),
            cameroon_geo,
            PlacementConfig::Peaks {
                peaks: vec![presets::CAMEROON_SOUTH_PEAK],
            },
            "cameroon-one-peak",
        ),
        "cameroon-two-peaks" => spatial_scenario(
            presets::cameroon(),
            cameroon_geo,
            PlacementConfig::Peaks {
                peaks: vec![presets::CAMEROON_SOUTH_PEAK, presets::CAMEROON_NORTH_PEAK],
            },
            "cameroon-two-peaks",
        ),
        "oscillating-beta" => {
            let mut cfg = spatial_scenario(
                presets::germany(),
                germany_geo,
                PlacementConfig::Peaks {
                    peaks: vec![presets::GERMANY_SOUTH_PEAK],
                },
                "oscillating-beta",
            );
            cfg.schedule = Some(presets::oscillating_schedule());
            cfg.t_end = Some(750.0);
            cfg.snapshot_times = vec![10.0, 250.0, 500.0, 750.0];
            cfg
        }
        other => bail!(
            "unknown preset {other:?}; available presets: {}",
            PRESET_NAMES.join(", ")
        ),
    };
    Ok(cfg)
}

fn deep_merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies one dotted-path override, `KEY=VALUE`, onto a config document.
///
/// The value parses as JSON when possible and falls back to a plain string;
/// numeric path segments index into arrays.
pub fn apply_set(root: &mut Value, pair: &str) -> Result<()> {
    let Some((path, raw)) = pair.split_once('=') else {
        bail!("--set expects KEY=VALUE, got {pair:?}");
    };
    let value: Value =
        serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        bail!("--set path {path:?} has an empty segment");
    }
    let mut cur = root;
    for (pos, seg) in segments.iter().enumerate() {
        let last = pos + 1 == segments.len();
        cur = if let Ok(idx) = seg.parse::<usize>() {
            let Value::Array(arr) = cur else {
                bail!("--set path {path:?}: segment {seg:?} indexes a non-array");
            };
            if idx >= arr.len() {
                bail!(
                    "--set path {path:?}: index {idx} out of range for length {}",
                    arr.len()
                );
            }
            if last {
                arr[idx] = value;
                return Ok(());
            }
            &mut arr[idx]
        } else {
            let Value::Object(map) = cur else {
                bail!("--set path {path:?}: segment {seg:?} descends into a non-object");
            };
            if last {
                map.insert(seg.to_string(), value);
                return Ok(());
            }
            let slot = map.entry(seg.to_string()).or_insert(Value::Null);
            if slot.is_null() {
                *slot = Value::Object(serde_json::Map::new());
            }
            if !(slot.is_object() || slot.is_array()) {
                bail!("--set path {path:?}: segment {seg:?} is not an object or array");
            }
            slot
        };
    }
    Ok(())
}

/// Merges overrides into a config document and parses it.
pub fn merge_and_parse(
    mut value: Value,
    sets: &[String],
    nx: Option<usize>,
    dt: Option<f64>,
) -> Result<ScenarioConfig> {
    if let Some(preset_field) = value.as_object_mut().and_then(|m| m.remove("preset")) {
        match preset_field {
            Value::String(name) => {
                let mut base = serde_json::to_value(expanded_preset(&name)?)?;
                deep_merge(&mut base, value);
                value = base;
            }
            Value::Null => {}
            other => bail!("config field 'preset' must be a string, got {other}"),
        }
    }
    for pair in sets {
        apply_set(&mut value, pair)?;
    }
    if let Some(nx) = nx {
        apply_set(&mut value, &format!("nx={nx}"))?;
    }
    if let Some(dt) = dt {
        apply_set(&mut value, &format!("dt={dt}"))?;
    }
    serde_json::from_value(value).context("config rejected")
}

/// Loads a scenario from `--config` or `--preset` plus overrides.
pub fn load_config(
    config: Option<&Path>,
    preset: Option<&str>,
    sets: &[String],
    nx: Option<usize>,
    dt: Option<f64>,
) -> Result<ScenarioConfig> {
    let value = match (config, preset) {
        (Some(_), Some(_)) => bail!("pass either --config or --preset, not both"),
        (None, None) => bail!("pass --config PATH or --preset NAME"),
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parse error in {}", path.display()))?
        }
        (None, Some(name)) => serde_json::to_value(expanded_preset(name)?)?,
    };
    let mut cfg = merge_and_parse(value, sets, nx, dt)?;
    if let (Some(path), Some(geom)) = (config, &cfg.geometry) {
        if geom.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.geometry = Some(dir.join(geom));
            }
        }
    }
    Ok(cfg)
}

impl ScenarioConfig {
    /// Validates the document and fills preset fallbacks.
    pub fn resolve(&self) -> Result<Scenario> {
        let mut cfg = self.clone();
        if let Some(name) = cfg.preset.take() {
            let base = expanded_preset(&name)?;
            cfg.parameters = cfg.parameters.or(base.parameters);
            cfg.time_unit = cfg.time_unit.or(base.time_unit);
            cfg.initial_state = cfg.initial_state.or(base.initial_state);
            cfg.initial_cumulative = cfg.initial_cumulative.or(base.initial_cumulative);
            cfg.t_end = cfg.t_end.or(base.t_end);
            cfg.schedule = cfg.schedule.or(base.schedule);
            cfg.geometry = cfg.geometry.or(base.geometry);
        }
        let mut parameters = cfg
            .parameters
            .ok_or_else(|| anyhow!("config needs 'parameters' or a 'preset'"))?;
        for (name, value) in &cfg.set {
            parameters
                .set(name, *value)
                .map_err(|e| anyhow!("config field 'set': {e}"))?;
        }
        parameters.validate().context("config field 'parameters'")?;
        let initial_state = cfg
            .initial_state
            .ok_or_else(|| anyhow!("config needs 'initial_state' or a 'preset'"))?;
        initial_state
            .validate()
            .context("config field 'initial_state'")?;
        let initial_cumulative = cfg.initial_cumulative.unwrap_or(0.0);
        if !initial_cumulative.is_finite() || initial_cumulative < 0.0 {
            bail!("config field 'initial_cumulative' must be nonnegative, got {initial_cumulative}");
        }
        let t_end = cfg
            .t_end
            .ok_or_else(|| anyhow!("config needs 't_end' or a 'preset'"))?;
        if !t_end.is_finite() || t_end <= 0.0 {
            bail!("config field 't_end' must be positive, got {t_end}");
        }
        if !cfg.output_step.is_finite() || cfg.output_step <= 0.0 {
            bail!(
                "config field 'output_step' must be positive, got {}",
                cfg.output_step
            );
        }
        if !cfg.classifier_horizon.is_finite() || cfg.classifier_horizon <= 0.0 {
            bail!(
                "config field 'classifier_horizon' must be positive, got {}",
                cfg.classifier_horizon
            );
        }
        if let Some(s) = &cfg.schedule {
            s.validate().context("config field 'schedule'")?;
        }
        cfg.integrator
            .validate()
            .context("config field 'integrator'")?;
        cfg.diffusion
            .validate()
            .context("config field 'diffusion'")?;
        if let PlacementConfig::Peaks { peaks } = &cfg.placement {
            if peaks.is_empty() {
                bail!("config field 'placement': peak list is empty");
            }
        }
        Ok(Scenario {
            name: cfg.name,
            parameters,
            initial_state,
            initial_cumulative,
            time_unit: cfg.time_unit.unwrap_or(TimeUnit::Days),
            t_end,
            output_step: cfg.output_step,
            classifier_horizon: cfg.classifier_horizon,
            schedule: cfg.schedule,
            integrator: cfg.integrator,
            geometry: cfg.geometry,
            nx: cfg.nx,
            placement: cfg.placement,
            diffusion: cfg.diffusion,
            dt: cfg.dt,
            snapshot_times: cfg.snapshot_times,
            linear_tol: cfg.linear_tol,
            calibration: cfg.calibration,
        })
    }
}

/// Default calibration box per parameter name, wide enough for both case studies.
fn default_bounds(name: &str) -> Option<(f64, f64)> {
    Some(match name {
        "beta" => (0.2, 1.3),
        "phi2" => (1e-6, 0.05),
        "r1" => (1e-4, 0.3),
        "a1" => (1e-15, 0.9),
        "c2" => (1e-13, 0.5),
        "eta" => (1e-4, 0.8),
        "theta" => (0.1, 0.7),
        "gamma" => (0.005, 1.2),
        _ => return None,
    })
}

/// Builds the fitting problem for a scenario and data series.
pub fn calibration_problem(
    scenario: &Scenario,
    data: &ObservationSeries,
) -> Result<(CalibrationSpec, FitMethod, usize)> {
    let cal = scenario.calibration.clone().unwrap_or_default();
    let free_names = if cal.free_names.is_empty() {
        CalibrationConfig::default().free_names
    } else {
        cal.free_names
    };
    let (lower, upper) = if cal.lower.is_empty() && cal.upper.is_empty() {
        let mut lower = Vec::with_capacity(free_names.len());
        let mut upper = Vec::with_capacity(free_names.len());
        for name in &free_names {
            let (lo, hi) = default_bounds(name).ok_or_else(|| {
                anyhow!("no default calibration bounds for {name:?}; set 'calibration.lower'/'upper'")
            })?;
            lower.push(lo);
            upper.push(hi);
        }
        (lower, upper)
    } else {
        (cal.lower, cal.upper)
    };
    let initial_guess = match cal.initial_guess {
        Some(g) => g,
        None => free_names
            .iter()
            .map(|name| {
                scenario
                    .parameters
                    .get(name)
                    .ok_or_else(|| anyhow!("unknown free parameter {name:?}"))
            })
            .collect::<Result<Vec<f64>>>()?,
    };
    let spec = CalibrationSpec {
        fixed: scenario.parameters,
        free_names,
        lower,
        upper,
        initial_guess,
        x0: scenario.initial_state,
        c0: data.values[0],
    };
    spec.validate()?;
    Ok((spec, cal.method, cal.max_iter))
}
