//! Nonlinear least-squares calibration of a free-parameter subset against a
//! cumulative reported-case series: damped Gauss-Newton on a bound-respecting
//! sigmoidal reparameterization, with a deterministic simplex fallback.

use serde::{Deserialize, Serialize};

use crate::error::{EpiError, Result};
use crate::exec;
use crate::linalg;
use crate::ode::{self, IntegratorConfig};
use crate::params::{CompartmentState, Parameters};

/// Default free-parameter subset for calibration.
pub const DEFAULT_FREE_NAMES: [&str; 8] = [
    "beta", "phi2", "r1", "a1", "c2", "eta", "theta", "gamma",
];

/// A cumulative reported-case observation series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservationSeries {
    /// Observation times in model time units, strictly increasing.
    pub times: Vec<f64>,
    /// Cumulative reported cases, nonnegative and nondecreasing.
    pub values: Vec<f64>,
    /// Free-text provenance label.
    pub label: String,
}

impl ObservationSeries {
    /// Checks ordering, monotonicity, and nonemptiness.
    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() {
            return Err(EpiError::InvalidData("observation series is empty".into()));
        }
        if self.times.len() != self.values.len() {
            return Err(EpiError::InvalidData(format!(
                "times ({}) and values ({}) length mismatch",
                self.times.len(),
                self.values.len()
            )));
        }
        for w in self.times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(EpiError::InvalidData(format!(
                    "observation times must be strictly increasing near t = {}",
                    w[0]
                )));
            }
        }
        for (t, v) in self.times.iter().zip(&self.values) {
            if !v.is_finite() || *v < 0.0 {
                return Err(EpiError::InvalidData(format!(
                    "negative or non-finite observation at t = {t}"
                )));
            }
        }
        for w in self.values.windows(2) {
            if w[1] < w[0] {
                return Err(EpiError::InvalidData(
                    "cumulative observations must be nondecreasing".into(),
                ));
            }
        }
        Ok(())
    }

    /// Parses a `t,cumulative_cases` CSV document.
    pub fn from_csv(text: &str, label: &str) -> Result<ObservationSeries> {
        let mut lines = text.lines().enumerate();
        let Some((_, header)) = lines.next() else {
            return Err(EpiError::InvalidData("empty data file".into()));
        };
        if header.trim() != "t,cumulative_cases" {
            return Err(EpiError::parse(
                label,
                format!("expected header 't,cumulative_cases', got {header:?}"),
            ));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let (Some(t), Some(v), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(EpiError::parse(
                    label,
                    format!("line {}: expected two comma-separated columns", idx + 1),
                ));
            };
            let t: f64 = t.trim().parse().map_err(|e| {
                EpiError::parse(label, format!("line {}: bad time: {e}", idx + 1))
            })?;
            let v: f64 = v.trim().parse().map_err(|e| {
                EpiError::parse(label, format!("line {}: bad value: {e}", idx + 1))
            })?;
            times.push(t);
            values.push(v);
        }
        let series = ObservationSeries {
            times,
            values,
            label: label.to_string(),
        };
        series.validate()?;
        Ok(series)
    }
}

/// Specification of a calibration problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationSpec {
    /// Baseline parameters holding every non-free value.
    pub fixed: Parameters,
    /// Names of the parameters being fitted, in order.
    pub free_names: Vec<String>,
    /// Lower box bound per free parameter.
    pub lower: Vec<f64>,
    /// Upper box bound per free parameter.
    pub upper: Vec<f64>,
    /// Starting point per free parameter, strictly inside the box.
    pub initial_guess: Vec<f64>,
    /// Initial compartment counts for the simulated window.
    pub x0: CompartmentState,
    /// Initial cumulative reported count at the window start.
    pub c0: f64,
}

impl CalibrationSpec {
    /// Checks name validity, bound ordering, and guess placement.
    pub fn validate(&self) -> Result<()> {
        let k = self.free_names.len();
        if k == 0 {
            return Err(EpiError::CalibrationSetup("free-parameter set is empty".into()));
        }
        if self.lower.len() != k || self.upper.len() != k || self.initial_guess.len() != k {
            return Err(EpiError::CalibrationSetup(format!(
                "bounds/guess lengths must match {k} free parameters"
            )));
        }
        let mut probe = self.fixed;
        for (i, name) in self.free_names.iter().enumerate() {
            probe.set(name, self.initial_guess[i]).map_err(|_| {
                EpiError::CalibrationSetup(format!("unknown free parameter {name:?}"))
            })?;
            let (lo, hi, g) = (self.lower[i], self.upper[i], self.initial_guess[i]);
            if !lo.is_finite() || !hi.is_finite() || !(lo < hi) {
                return Err(EpiError::CalibrationSetup(format!(
                    "bounds for {name} must be finite with lower < upper, got [{lo}, {hi}]"
                )));
            }
            if !(g > lo && g < hi) {
                return Err(EpiError::CalibrationSetup(format!(
                    "guess {g} for {name} must lie strictly inside [{lo}, {hi}]"
                )));
            }
        }
        self.x0.validate()?;
        if !self.c0.is_finite() || self.c0 < 0.0 {
            return Err(EpiError::CalibrationSetup(format!(
                "initial cumulative count must be nonnegative, got {}",
                self.c0
            )));
        }
        Ok(())
    }

    /// Assembles full parameters from a free-parameter vector.
    pub fn assemble(&self, theta: &[f64]) -> Result<Parameters> {
        let mut p = self.fixed;
        for (name, value) in self.free_names.iter().zip(theta) {
            p.set(name, *value)?;
        }
        Ok(p)
    }
}

/// Optimization algorithm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    /// Damped Gauss-Newton with finite-difference Jacobian.
    GaussNewtonDamped,
    /// Derivative-free Nelder-Mead simplex.
    Simplex,
}

/// Outcome of a calibration run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    /// Parameters at the best point found.
    pub fitted: Parameters,
    /// Root-mean-square residual at the best point (persons).
    pub objective: f64,
    /// Accepted optimizer iterations.
    pub iterations: usize,
    /// Whether a convergence criterion was met.
    pub converged: bool,
    /// Per-observation residuals (model minus data) at the best point.
    pub residuals: Vec<f64>,
    /// Singular values of the final Jacobian (empty for simplex-only runs).
    pub jacobian_singular_values: Vec<f64>,
}

fn simulate_cumulative(
    spec: &CalibrationSpec,
    theta: &[f64],
    data: &ObservationSeries,
) -> Result<Vec<f64>> {
    let p = spec.assemble(theta)?;
    p.validate()?;
    let t0 = data.times[0];
    let t1 = *data.times.last().unwrap();
    let cfg = IntegratorConfig::default();
    if t1 > t0 {
        let traj = ode::integrate(&p, None, &spec.x0, spec.c0, t0, t1, &data.times, &cfg)?;
        Ok(traj.cum_reported)
    } else {
        Ok(vec![spec.c0])
    }
}

fn residual_vector(
    spec: &CalibrationSpec,
    theta: &[f64],
    data: &ObservationSeries,
) -> Option<Vec<f64>> {
    match simulate_cumulative(spec, theta, data) {
        Ok(sim) => Some(
            sim.iter()
                .zip(&data.values)
                .map(|(model, obs)| model - obs)
                .collect(),
        ),
        Err(_) => None,
    }
}

fn rmse(residuals: &[f64]) -> f64 {
    (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt()
}

/// Root-mean-square misfit for a free-parameter vector.
///
/// Integrator failure inside the window is reported as an infinite objective
/// so that optimizers reject the point rather than abort.
pub fn objective(spec: &CalibrationSpec, theta: &[f64], data: &ObservationSeries) -> Result<f64> {
    spec.validate()?;
    data.validate()?;
    if theta.len() != spec.free_names.len() {
        return Err(EpiError::CalibrationSetup(format!(
            "theta length {} does not match {} free parameters",
            theta.len(),
            spec.free_names.len()
        )));
    }
    Ok(residual_vector(spec, theta, data)
        .map_or(f64::INFINITY, |r| rmse(&r)))
}

// Bound-respecting reparameterization: z in R maps to (lo, hi) through a
// logistic sigmoid; optimizers work in z-space.
fn to_bounded(z: f64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) / (1.0 + (-z).exp())
}

fn to_unbounded(x: f64, lo: f64, hi: f64) -> f64 {
    let frac = ((x - lo) / (hi - lo)).clamp(1e-12, 1.0 - 1e-12);
    (frac / (1.0 - frac)).ln()
}

struct Problem<'a> {
    spec: &'a CalibrationSpec,
    data: &'a ObservationSeries,
}

impl Problem<'_> {
    fn theta_of(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, &zi)| to_bounded(zi, self.spec.lower[i], self.spec.upper[i]))
            .collect()
    }

    fn residuals(&self, z: &[f64]) -> Option<Vec<f64>> {
        residual_vector(self.spec, &self.theta_of(z), self.data)
    }

    fn value(&self, z: &[f64]) -> f64 {
        self.residuals(z).map_or(f64::INFINITY, |r| rmse(&r))
    }

    /// Forward-difference Jacobian of the residual vector in z-space.
    fn jacobian(&self, z: &[f64], r0: &[f64]) -> Option<Vec<Vec<f64>>> {
        let k = z.len();
        let cols = exec::run_tasks(
            (0..k)
                .map(|j| {
                    let mut zj = z.to_vec();
                    let dz = 1e-6 * zj[j].abs().max(1.0);
                    zj[j] += dz;
                    move || {
                        self.residuals(&zj)
                            .map(|r| r.iter().zip(r0).map(|(a, b)| (a - b) / dz).collect::<Vec<f64>>())
                    }
                })
                .collect(),
        );
        let mut out: Vec<Vec<f64>> = vec![vec![0.0; k]; r0.len()];
        for (j, col) in cols.into_iter().enumerate() {
            let col = col?;
            for (row, v) in col.into_iter().enumerate() {
                out[row][j] = v;
            }
        }
        Some(out)
    }
}

/// Fits the free parameters to the observation series.
pub fn fit(
    spec: &CalibrationSpec,
    data: &ObservationSeries,
    method: FitMethod,
    max_iter: usize,
) -> Result<FitResult> {
    spec.validate()?;
    data.validate()?;
    if max_iter == 0 {
        return Err(EpiError::CalibrationSetup("max_iter must be at least 1".into()));
    }
    let problem = Problem { spec, data };
    let z0: Vec<f64> = spec
        .initial_guess
        .iter()
        .enumerate()
        .map(|(i, &g)| to_unbounded(g, spec.lower[i], spec.upper[i]))
        .collect();

    let (z_best, iterations, converged, singular_values) = match method {
        FitMethod::Simplex => {
            let (z, it, conv) = nelder_mead(&problem, z0, max_iter);
            (z, it, conv, Vec::new())
        }
        FitMethod::GaussNewtonDamped => run_gauss_newton(&problem, z0, max_iter)?,
    };

    let theta = problem.theta_of(&z_best);
    let fitted = spec.assemble(&theta)?;
    let residuals = problem.residuals(&z_best).unwrap_or_default();
    let objective = if residuals.is_empty() {
        f64::INFINITY
    } else {
        rmse(&residuals)
    };
    Ok(FitResult {
        fitted,
        objective,
        iterations,
        converged,
        residuals,
        jacobian_singular_values: singular_values,
    })
}

fn run_gauss_newton(
    problem: &Problem<'_>,
    z0: Vec<f64>,
    max_iter: usize,
) -> Result<(Vec<f64>, usize, bool, Vec<f64>)> {
    let k = z0.len();
    let mut z = z0;
    let mut r = match problem.residuals(&z) {
        Some(r) => r,
        None => {
            // Unevaluable starting point: hand over to the simplex.
            let (z, it, conv) = nelder_mead(problem, z, max_iter);
            return Ok((z, it, conv, Vec::new()));
        }
    };
    let mut f = rmse(&r);
    let mut damping = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    let mut stall = 0;
    let mut last_sv: Vec<f64> = Vec::new();

    for _ in 0..max_iter {
        let Some(jac) = problem.jacobian(&z, &r) else {
            break;
        };
        let sv = linalg::singular_values(&jac, k)?;
        // Rank deficiency beyond threshold: derivative information is not
        // trustworthy, switch to the derivative-free path.
        if sv[0] == 0.0 || sv[k - 1] < 1e-12 * sv[0] {
            let (zs, it, conv) = nelder_mead(problem, z, max_iter.saturating_sub(iterations));
            return Ok((zs, iterations + it, conv, sv));
        }
        last_sv = sv;

        // Normal equations with Levenberg-style diagonal damping.
        let mut jtj = vec![vec![0.0; k]; k];
        let mut jtr = vec![0.0; k];
        for (row, rr) in jac.iter().zip(&r) {
            for i in 0..k {
                jtr[i] += row[i] * rr;
                for j in 0..k {
                    jtj[i][j] += row[i] * row[j];
                }
            }
        }
        let grad_norm = jtr.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm < 1e-10 {
            converged = true;
            break;
        }

        let mut improved = false;
        for _try in 0..25 {
            let mut a: Vec<Vec<f64>> = jtj.clone();
            for i in 0..k {
                a[i][i] += damping * jtj[i][i].max(1e-30);
            }
            let mut b: Vec<f64> = jtr.iter().map(|g| -g).collect();
            let Ok(step) = linalg::solve_dense(&mut a, &mut b) else {
                damping *= 10.0;
                continue;
            };
            let z_try: Vec<f64> = z.iter().zip(&step).map(|(zi, s)| zi + s).collect();
            if let Some(r_try) = problem.residuals(&z_try) {
                let f_try = rmse(&r_try);
                if f_try < f {
                    let rel_drop = (f - f_try) / f.max(f64::MIN_POSITIVE);
                    z = z_try;
                    r = r_try;
                    f = f_try;
                    damping = (damping / 3.0).max(1e-12);
                    improved = true;
                    iterations += 1;
                    if rel_drop < 1e-10 {
                        stall += 1;
                        if stall >= 3 {
                            converged = true;
                        }
                    } else {
                        stall = 0;
                    }
                    break;
                }
            }
            damping *= 10.0;
            if damping > 1e12 {
                break;
            }
        }
        if converged {
            break;
        }
        if !improved {
            // No descent direction at any damping: accept the stall as
            // convergence to numerical precision.
            converged = true;
            break;
        }
    }
    Ok((z, iterations, converged, last_sv))
}

fn nelder_mead(problem: &Problem<'_>, z0: Vec<f64>, max_iter: usize) -> (Vec<f64>, usize, bool) {
    let k = z0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
    simplex.push(z0.clone());
    for j in 0..k {
        let mut zj = z0.clone();
        zj[j] += 0.1;
        simplex.push(zj);
    }
    let mut values: Vec<f64> = simplex.iter().map(|z| problem.value(z)).collect();
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..max_iter.max(200 * (k + 1)) {
        let mut order: Vec<usize> = (0..=k).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[k];
        let spread = (values[worst] - values[best]).abs();
        if spread <= 1e-12 * (1.0 + values[best].abs()) {
            converged = true;
            break;
        }
        let mut centroid = vec![0.0; k];
        for &idx in &order[..k] {
            for i in 0..k {
                centroid[i] += simplex[idx][i] / k as f64;
            }
        }
        let reflect: Vec<f64> = (0..k)
            .map(|i| centroid[i] + (centroid[i] - simplex[worst][i]))
            .collect();
        let f_reflect = problem.value(&reflect);
        iterations += 1;
        if f_reflect < values[best] {
            let expand: Vec<f64> = (0..k)
                .map(|i| centroid[i] + 2.0 * (centroid[i] - simplex[worst][i]))
                .collect();
            let f_expand = problem.value(&expand);
            if f_expand < f_reflect {
                simplex[worst] = expand;
                values[worst] = f_expand;
            } else {
                simplex[worst] = reflect;
                values[worst] = f_reflect;
            }
        } else if f_reflect < values[order[k - 1]] {
            simplex[worst] = reflect;
            values[worst] = f_reflect;
        } else {
            let contract: Vec<f64> = (0..k)
                .map(|i| centroid[i] + 0.5 * (simplex[worst][i] - centroid[i]))
                .collect();
            let f_contract = problem.value(&contract);
            if f_contract < values[worst] {
                simplex[worst] = contract;
                values[worst] = f_contract;
            } else {
                // Shrink toward the best vertex.
                let best_point = simplex[best].clone();
                for idx in 0..=k {
                    if idx == best {
                        continue;
                    }
                    for i in 0..k {
                        simplex[idx][i] = best_point[i] + 0.5 * (simplex[idx][i] - best_point[i]);
                    }
                    values[idx] = problem.value(&simplex[idx]);
                }
            }
        }
        if iterations >= max_iter {
            break;
        }
    }
    let best = (0..=k).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    (simplex[best].clone(), iterations, converged)
}
