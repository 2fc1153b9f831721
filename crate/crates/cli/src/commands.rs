//! Command implementations: well-mixed runs, fitting, equilibrium reports,
//! spatial runs, and preset dumps.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use serde::Serialize;

use epidiff_core::calibrate::{self, FitMethod, ObservationSeries};
use epidiff_core::equilibria;
use epidiff_core::geometry::{self, RasterMask};
use epidiff_core::model;
use epidiff_core::ode::{self, LongRunVerdict, Trajectory};
use epidiff_core::params::{CompartmentState, Parameters, COMPARTMENT_NAMES};
use epidiff_core::pde::{self, Field, Placement};
use epidiff_core::presets::{self, TimeUnit};

use crate::config::{self, PlacementConfig, Scenario};

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn json_text<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

fn verdict_str(v: LongRunVerdict) -> &'static str {
    match v {
        LongRunVerdict::ConvergedToDfe => "converged_to_dfe",
        LongRunVerdict::Endemic => "endemic",
        LongRunVerdict::Undecided => "undecided",
    }
}

#[derive(Serialize)]
struct OdeSummary<'a> {
    name: &'a str,
    time_unit: TimeUnit,
    rc: f64,
    beta_crit: f64,
    dfe: CompartmentState,
    classifier_horizon: f64,
    verdict: LongRunVerdict,
    t_end: f64,
    final_state: CompartmentState,
    final_cumulative: f64,
}

/// Integrates the well-mixed model and writes the trajectory and summary.
pub fn simulate_ode(sc: &Scenario, out: &Path) -> Result<()> {
    let outputs = ode::time_grid(0.0, sc.t_end, sc.output_step);
    let traj = ode::integrate(
        &sc.parameters,
        sc.schedule.as_ref(),
        &sc.initial_state,
        sc.initial_cumulative,
        0.0,
        sc.t_end,
        &outputs,
        &sc.integrator,
    )?;
    let rc = model::control_reproduction_number(&sc.parameters)?;
    let beta_crit = model::beta_critical(&sc.parameters)?;
    let dfe = model::disease_free_equilibrium(&sc.parameters)?;
    let verdict = ode::long_run_classifier(&sc.parameters, &sc.initial_state, sc.classifier_horizon)?;
    let summary = OdeSummary {
        name: &sc.name,
        time_unit: sc.time_unit,
        rc,
        beta_crit,
        dfe,
        classifier_horizon: sc.classifier_horizon,
        verdict,
        t_end: sc.t_end,
        final_state: *traj.last_state(),
        final_cumulative: *traj.cum_reported.last().unwrap(),
    };
    eprintln!(
        "scenario {}: rc {rc}, beta_crit {beta_crit}, verdict {}",
        sc.name,
        verdict_str(verdict)
    );
    ensure_dir(out)?;
    write_text(&out.join("trajectory.csv"), &traj.to_csv())?;
    write_text(&out.join("summary.json"), &json_text(&summary)?)?;
    Ok(())
}

#[derive(Serialize)]
struct FitReport<'a> {
    name: &'a str,
    data_label: &'a str,
    method: FitMethod,
    converged: bool,
    iterations: usize,
    objective: f64,
    rc: f64,
    beta_crit: f64,
    fitted: Parameters,
    jacobian_singular_values: &'a [f64],
}

/// Fits the scenario's free parameters to a cumulative case series.
pub fn calibrate(sc: &Scenario, data_path: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(data_path)
        .with_context(|| format!("cannot read data {}", data_path.display()))?;
    let label = data_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into());
    let data = ObservationSeries::from_csv(&text, &label)?;
    let (spec, method, max_iter) = config::calibration_problem(sc, &data)?;
    let fit = calibrate::fit(&spec, &data, method, max_iter)?;
    let rc = model::control_reproduction_number(&fit.fitted)?;
    let beta_crit = model::beta_critical(&fit.fitted)?;

    let model_curve = if data.times.len() >= 2 {
        let traj = ode::integrate(
            &fit.fitted,
            None,
            &spec.x0,
            spec.c0,
            data.times[0],
            *data.times.last().unwrap(),
            &data.times,
            &sc.integrator,
        )?;
        traj.cum_reported
    } else {
        vec![spec.c0]
    };
    let mut csv = String::from("t,observed,model\n");
    for ((t, obs), model) in data.times.iter().zip(&data.values).zip(&model_curve) {
        csv.push_str(&format!("{t:.16e},{obs:.16e},{model:.16e}\n"));
    }

    let report = FitReport {
        name: &sc.name,
        data_label: &data.label,
        method,
        converged: fit.converged,
        iterations: fit.iterations,
        objective: fit.objective,
        rc,
        beta_crit,
        fitted: fit.fitted,
        jacobian_singular_values: &fit.jacobian_singular_values,
    };
    eprintln!(
        "fit {}: converged {}, iterations {}, objective {}, rc {rc}",
        sc.name, fit.converged, fit.iterations, fit.objective
    );
    ensure_dir(out)?;
    write_text(&out.join("fit.json"), &json_text(&report)?)?;
    write_text(&out.join("model_vs_data.csv"), &csv)?;
    Ok(())
}

/// Writes or prints the endemic-equilibrium report.
pub fn equilibria(sc: &Scenario, out: Option<&Path>) -> Result<()> {
    let report = equilibria::full_report(&sc.parameters)?;
    let text = json_text(&report)?;
    eprintln!(
        "scenario {}: rc {}, beta_crit {}, {} endemic root(s)",
        sc.name,
        report.rc,
        report.beta_crit,
        report.roots.len()
    );
    match out {
        Some(dir) => {
            ensure_dir(dir)?;
            write_text(&dir.join("equilibria.json"), &text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct SeriesBlock {
    #[serde(rename = "S")]
    s: Vec<f64>,
    #[serde(rename = "V")]
    v: Vec<f64>,
    #[serde(rename = "E")]
    e: Vec<f64>,
    #[serde(rename = "A")]
    a: Vec<f64>,
    #[serde(rename = "I")]
    i: Vec<f64>,
    #[serde(rename = "R")]
    r: Vec<f64>,
    #[serde(rename = "C")]
    cumulative: Vec<f64>,
}

fn series_block(traj: &Trajectory, indices: &[usize]) -> SeriesBlock {
    let pick = |f: &dyn Fn(usize) -> f64| indices.iter().map(|&i| f(i)).collect::<Vec<f64>>();
    SeriesBlock {
        s: pick(&|i| traj.states[i].s),
        v: pick(&|i| traj.states[i].v),
        e: pick(&|i| traj.states[i].e),
        a: pick(&|i| traj.states[i].a),
        i: pick(&|i| traj.states[i].i),
        r: pick(&|i| traj.states[i].r),
        cumulative: pick(&|i| traj.cum_reported[i]),
    }
}

#[derive(Serialize)]
struct CompartmentStats {
    #[serde(rename = "S")]
    s: f64,
    #[serde(rename = "V")]
    v: f64,
    #[serde(rename = "E")]
    e: f64,
    #[serde(rename = "A")]
    a: f64,
    #[serde(rename = "I")]
    i: f64,
    #[serde(rename = "R")]
    r: f64,
}

fn max_over_mean_stats(field: &Field) -> CompartmentStats {
    CompartmentStats {
        s: field.max_over_mean(0),
        v: field.max_over_mean(1),
        e: field.max_over_mean(2),
        a: field.max_over_mean(3),
        i: field.max_over_mean(4),
        r: field.max_over_mean(5),
    }
}

#[derive(Serialize)]
struct SnapshotInfo {
    t: f64,
    files: Vec<String>,
    max_over_mean: CompartmentStats,
}

#[derive(Serialize)]
struct RcCheckpoint {
    beta: f64,
    rc: f64,
}

#[derive(Serialize)]
struct ComparisonReport<'a> {
    name: &'a str,
    time_unit: TimeUnit,
    nx: usize,
    ny: usize,
    h: f64,
    n_cells: usize,
    rc0: f64,
    beta_crit: f64,
    dfe: CompartmentState,
    times: Vec<f64>,
    ode: SeriesBlock,
    pde: SeriesBlock,
    rc_trace: Vec<f64>,
    rc_checkpoints: Vec<RcCheckpoint>,
    snapshots: Vec<SnapshotInfo>,
}

fn nearest_index(times: &[f64], t: f64) -> usize {
    match times.binary_search_by(|x| x.total_cmp(&t)) {
        Ok(i) => i,
        Err(0) => 0,
        Err(i) if i == times.len() => times.len() - 1,
        Err(i) => {
            if t - times[i - 1] <= times[i] - t {
                i - 1
            } else {
                i
            }
        }
    }
}

fn build_placement(
    sc: &Scenario,
    poly: &geometry::PolygonSet,
    mask: &RasterMask,
) -> Result<Placement> {
    Ok(match &sc.placement {
        PlacementConfig::Uniform => Placement::Uniform,
        PlacementConfig::Peaks { peaks } => Placement::Peaks(peaks.clone()),
        PlacementConfig::Region { name } => {
            Placement::Cells(geometry::region_cells(poly, mask, name)?)
        }
    })
}

/// Integrates the spatial model and writes totals, snapshots, and comparison.
pub fn simulate_pde(sc: &Scenario, out: &Path) -> Result<()> {
    let geom_path = sc
        .geometry
        .as_ref()
        .ok_or_else(|| anyhow!("spatial run needs a 'geometry' file in the config"))?;
    let text = fs::read_to_string(geom_path)
        .with_context(|| format!("cannot read geometry {}", geom_path.display()))?;
    let poly = geometry::load_polygons(&text, &geom_path.display().to_string())?;
    let mask = geometry::rasterize(&poly, sc.nx)?;
    let lap = geometry::build_laplacian(&mask);
    let placement = build_placement(sc, &poly, &mask)?;
    let field = pde::initial_field(&mask, &placement, &sc.initial_state, sc.initial_cumulative)?;
    let run = sc.pde_run_config();
    eprintln!(
        "scenario {}: {} active cells ({}x{} grid, h {})",
        sc.name,
        mask.n_active(),
        mask.nx,
        mask.ny,
        mask.h
    );
    let outcome = pde::integrate_pde(&sc.parameters, &mask, &lap, field, &run, &sc.diffusion)?;

    // Shared comparison grid: the recorded spatial times closest to the
    // requested output step, with the matching well-mixed run on top.
    let grid = ode::time_grid(0.0, sc.t_end, sc.output_step);
    let mut indices: Vec<usize> = grid
        .iter()
        .map(|&t| nearest_index(&outcome.totals.times, t))
        .collect();
    indices.dedup();
    let times: Vec<f64> = indices.iter().map(|&i| outcome.totals.times[i]).collect();
    let ode_traj = ode::integrate(
        &sc.parameters,
        sc.schedule.as_ref(),
        &sc.initial_state,
        sc.initial_cumulative,
        0.0,
        *times.last().unwrap_or(&sc.t_end),
        &times,
        &sc.integrator,
    )?;
    let ode_indices: Vec<usize> = (0..ode_traj.times.len()).collect();

    let beta_at = |t: f64| match &sc.schedule {
        Some(s) => s.evaluate(t),
        None => sc.parameters.beta,
    };
    let rc_trace = times
        .iter()
        .map(|&t| model::control_reproduction_number_with_beta(&sc.parameters, beta_at(t)))
        .collect::<epidiff_core::Result<Vec<f64>>>()?;
    let rc_checkpoints = if sc.schedule.is_some() {
        presets::OSCILLATING_BETA_CHECKPOINTS
            .iter()
            .map(|&beta| {
                Ok(RcCheckpoint {
                    beta,
                    rc: model::control_reproduction_number_with_beta(&sc.parameters, beta)?,
                })
            })
            .collect::<epidiff_core::Result<Vec<RcCheckpoint>>>()?
    } else {
        Vec::new()
    };

    ensure_dir(out)?;
    write_text(&out.join("mask.pgm"), &geometry::mask_to_pgm(&mask))?;
    let mut snapshots = Vec::new();
    for (idx, snap) in outcome.snapshots.iter().enumerate() {
        let mut files = Vec::new();
        for (j, comp) in COMPARTMENT_NAMES.iter().enumerate() {
            let file = format!("snap_{idx:02}_{comp}.pgm");
            write_text(
                &out.join(&file),
                &geometry::field_to_pgm(&mask, &snap.field.comps[j]),
            )?;
            files.push(file);
        }
        snapshots.push(SnapshotInfo {
            t: snap.t,
            files,
            max_over_mean: max_over_mean_stats(&snap.field),
        });
    }

    let report = ComparisonReport {
        name: &sc.name,
        time_unit: sc.time_unit,
        nx: mask.nx,
        ny: mask.ny,
        h: mask.h,
        n_cells: mask.n_active(),
        rc0: model::control_reproduction_number_with_beta(&sc.parameters, beta_at(0.0))?,
        beta_crit: model::beta_critical(&sc.parameters)?,
        dfe: model::disease_free_equilibrium(&sc.parameters)?,
        times,
        ode: series_block(&ode_traj, &ode_indices),
        pde: series_block(&outcome.totals, &indices),
        rc_trace,
        rc_checkpoints,
        snapshots,
    };
    write_text(&out.join("totals.csv"), &outcome.totals.to_csv())?;
    write_text(&out.join("comparison.json"), &json_text(&report)?)?;
    Ok(())
}

/// Writes or prints an expanded built-in preset.
pub fn dump_preset(name: &str, out: Option<&Path>) -> Result<()> {
    let cfg = config::expanded_preset(name)?;
    let text = json_text(&cfg)?;
    match out {
        Some(dir) => {
            ensure_dir(dir)?;
            write_text(&dir.join(format!("{name}.json")), &text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_index_picks_closest_sample() {
        let times = [0.0, 1.0, 2.5, 4.0];
        assert_eq!(nearest_index(&times, -3.0), 0);
        assert_eq!(nearest_index(&times, 0.4), 0);
        assert_eq!(nearest_index(&times, 0.6), 1);
        assert_eq!(nearest_index(&times, 2.5), 2);
        assert_eq!(nearest_index(&times, 99.0), 3);
    }

    #[test]
    fn verdict_labels_match_wire_format() {
        for v in [
            LongRunVerdict::ConvergedToDfe,
            LongRunVerdict::Endemic,
            LongRunVerdict::Undecided,
        ] {
            let wire = serde_json::to_string(&v).unwrap();
            assert_eq!(wire, format!("{:?}", verdict_str(v)));
        }
    }
}
