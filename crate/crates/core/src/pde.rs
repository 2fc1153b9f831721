//! Reaction-diffusion extension on a raster mask: per-cell epidemic reactions
//! by a two-stage explicit substep, compartment-wise implicit diffusion via
//! shifted conjugate gradients, and domain-total bookkeeping.

use serde::{Deserialize, Serialize};

use crate::error::{EpiError, Result};
use crate::exec;
use crate::geometry::RasterMask;
use crate::linalg::{self, CsrMatrix};
use crate::model;
use crate::ode::Trajectory;
use crate::params::{BetaSchedule, CompartmentState, Parameters, COMPARTMENT_NAMES};
use crate::presets::PeakSpec;

/// Number of diffusing compartments.
pub const N_COMPARTMENTS: usize = 6;

/// Per-cell compartment densities, stored one vector per compartment.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    /// Compartment vectors in S, V, E, A, I, R order, one entry per cell.
    pub comps: [Vec<f64>; N_COMPARTMENTS],
    /// Cumulative reported cases per cell (bookkeeping, never diffused).
    pub cum: Vec<f64>,
}

impl Field {
    /// Allocates an all-zero field over `n` cells.
    pub fn zeros(n: usize) -> Field {
        Field {
            comps: std::array::from_fn(|_| vec![0.0; n]),
            cum: vec![0.0; n],
        }
    }

    /// Number of cells.
    pub fn n_cells(&self) -> usize {
        self.comps[0].len()
    }

    /// Compartment state of one cell.
    pub fn state_at(&self, cell: usize) -> CompartmentState {
        CompartmentState {
            s: self.comps[0][cell],
            v: self.comps[1][cell],
            e: self.comps[2][cell],
            a: self.comps[3][cell],
            i: self.comps[4][cell],
            r: self.comps[5][cell],
        }
    }

    /// Domain totals per compartment plus the cumulative reported total.
    pub fn totals(&self) -> (CompartmentState, f64) {
        let sums: Vec<f64> = self.comps.iter().map(|c| exec::pairwise_sum(c)).collect();
        (
            CompartmentState {
                s: sums[0],
                v: sums[1],
                e: sums[2],
                a: sums[3],
                i: sums[4],
                r: sums[5],
            },
            exec::pairwise_sum(&self.cum),
        )
    }

    /// Ratio of the maximum cell value to the mean for one compartment.
    pub fn max_over_mean(&self, comp: usize) -> f64 {
        let values = &self.comps[comp];
        let max = values.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let mean = exec::pairwise_sum(values) / values.len() as f64;
        max / mean
    }
}

/// Diffusion coefficients per compartment in S, V, E, A, I, R order.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionConfig {
    /// Diffusivity of each compartment in squared length per time unit.
    pub kappa: [f64; N_COMPARTMENTS],
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        // Symptomatic individuals move an order of magnitude less.
        DiffusionConfig {
            kappa: [1.0, 1.0, 1.0, 1.0, 0.1, 1.0],
        }
    }
}

impl DiffusionConfig {
    /// Requires finite, nonnegative diffusivities.
    pub fn validate(&self) -> Result<()> {
        for (j, k) in self.kappa.iter().enumerate() {
            if !k.is_finite() || *k < 0.0 {
                return Err(EpiError::InvalidParameter(format!(
                    "diffusivity for {} must be finite and nonnegative, got {k}",
                    COMPARTMENT_NAMES[j]
                )));
            }
        }
        Ok(())
    }
}

fn default_dt() -> f64 {
    0.05
}

fn default_linear_tol() -> f64 {
    1e-8
}

/// Run controls for the reaction-diffusion integrator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeRunConfig {
    /// Fixed time-step length.
    pub dt: f64,
    /// Final time.
    pub t_end: f64,
    /// Times at which to keep a full field snapshot.
    pub snapshot_times: Vec<f64>,
    /// Relative residual tolerance of the diffusion linear solves.
    pub linear_tol: f64,
    /// Optional time-varying transmission rate.
    pub schedule: Option<BetaSchedule>,
}

impl Default for PdeRunConfig {
    fn default() -> Self {
        PdeRunConfig {
            dt: default_dt(),
            t_end: 0.0,
            snapshot_times: Vec::new(),
            linear_tol: default_linear_tol(),
            schedule: None,
        }
    }
}

impl PdeRunConfig {
    /// Checks step, horizon, tolerance, and snapshot-time ranges.
    pub fn validate(&self) -> Result<()> {
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(EpiError::InvalidParameter(format!(
                "dt must be positive and finite, got {}",
                self.dt
            )));
        }
        if !self.t_end.is_finite() || self.t_end < 0.0 {
            return Err(EpiError::InvalidParameter(format!(
                "t_end must be finite and nonnegative, got {}",
                self.t_end
            )));
        }
        if !(self.linear_tol > 0.0 && self.linear_tol <= 1e-4) {
            return Err(EpiError::InvalidParameter(format!(
                "linear_tol must lie in (0, 1e-4], got {}",
                self.linear_tol
            )));
        }
        for t in &self.snapshot_times {
            if !t.is_finite() || *t < 0.0 || *t > self.t_end {
                return Err(EpiError::InvalidParameter(format!(
                    "snapshot time {t} outside [0, {}]",
                    self.t_end
                )));
            }
        }
        if let Some(s) = &self.schedule {
            s.validate()?;
        }
        Ok(())
    }
}

/// Where the non-susceptible compartments start out.
#[derive(Debug, Clone)]
pub enum Placement {
    /// Every compartment spread evenly over all active cells.
    Uniform,
    /// Gaussian bumps around the given centers, split evenly between peaks.
    Peaks(Vec<PeakSpec>),
    /// Even spread over the flagged cells (compact indexing).
    Cells(Vec<bool>),
}

fn distribute(values: &mut [f64], weights: &[f64], total: f64) {
    let sum: f64 = exec::pairwise_sum(weights);
    let mut added: Vec<f64> = weights.iter().map(|w| total * (w / sum)).collect();
    // Push the rounding remainder into the heaviest cell so this call's
    // contribution matches the request to the last bit.
    let fixup = total - exec::pairwise_sum(&added);
    if fixup != 0.0 {
        let argmax = weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        added[argmax] += fixup;
    }
    for (v, a) in values.iter_mut().zip(&added) {
        *v += a;
    }
}

/// Builds the initial field: susceptibles uniform, the rest per `placement`,
/// with domain totals matching the request to floating-point precision.
pub fn initial_field(
    mask: &RasterMask,
    placement: &Placement,
    totals: &CompartmentState,
    c0: f64,
) -> Result<Field> {
    totals.validate()?;
    if !c0.is_finite() || c0 < 0.0 {
        return Err(EpiError::InvalidParameter(format!(
            "initial cumulative count must be nonnegative, got {c0}"
        )));
    }
    let n = mask.n_active();
    let mut field = Field::zeros(n);
    let uniform = vec![1.0; n];
    let totals_arr = totals.to_array();

    let weights: Vec<Vec<f64>> = match placement {
        Placement::Uniform => vec![uniform.clone()],
        Placement::Peaks(peaks) => {
            if peaks.is_empty() {
                return Err(EpiError::InvalidParameter(
                    "peak placement requires at least one peak".into(),
                ));
            }
            let mut all = Vec::with_capacity(peaks.len());
            for peak in peaks {
                let [px, py] = peak.center;
                if !(peak.width > 0.0) || !peak.width.is_finite() {
                    return Err(EpiError::InvalidParameter(format!(
                        "peak width must be positive, got {}",
                        peak.width
                    )));
                }
                if mask.locate(px, py).is_none() {
                    return Err(EpiError::PeakOutsideMask { x: px, y: py });
                }
                let inv = 1.0 / (2.0 * peak.width * peak.width);
                all.push(
                    (0..n)
                        .map(|cell| {
                            let [cx, cy] = mask.center(cell);
                            let d2 = (cx - px) * (cx - px) + (cy - py) * (cy - py);
                            (-d2 * inv).exp()
                        })
                        .collect(),
                );
            }
            all
        }
        Placement::Cells(flags) => {
            if flags.len() != n {
                return Err(EpiError::InvalidParameter(format!(
                    "cell flags length {} does not match {} active cells",
                    flags.len(),
                    n
                )));
            }
            if !flags.iter().any(|f| *f) {
                return Err(EpiError::EmptyMask);
            }
            vec![flags.iter().map(|f| if *f { 1.0 } else { 0.0 }).collect()]
        }
    };

    // Susceptibles always cover the whole domain.
    distribute(&mut field.comps[0], &uniform, totals_arr[0]);
    for j in 1..N_COMPARTMENTS {
        let share = totals_arr[j] / weights.len() as f64;
        for w in &weights {
            distribute(&mut field.comps[j], w, share);
        }
    }
    distribute(&mut field.cum, &uniform, c0);
    Ok(field)
}

fn clamp_floor(p: &Parameters, linear_tol: f64) -> f64 {
    let n0 = p.lambda_rec / p.mu;
    (1e-9_f64).max(10.0 * linear_tol) * n0
}

fn clamp_field(field: &mut Field, floor: f64, t: f64) -> Result<()> {
    for (j, comp) in field.comps.iter_mut().enumerate() {
        for v in comp.iter_mut() {
            if *v < 0.0 {
                if *v < -floor {
                    return Err(EpiError::NegativeState {
                        component: COMPARTMENT_NAMES[j],
                        value: *v,
                        t,
                    });
                }
                *v = 0.0;
            }
        }
    }
    Ok(())
}

/// One implicit diffusion step: solves `(I + dt*kappa/h^2 * L) u = u_old`
/// per compartment, where `L` is the dimensionless graph Laplacian.
///
/// The conjugate-gradient start at the right-hand side keeps each compartment
/// total unchanged up to roundoff; no clamping happens here.
pub fn diffusion_step(
    lap: &CsrMatrix,
    h: f64,
    field: &mut Field,
    dt: f64,
    diff: &DiffusionConfig,
    linear_tol: f64,
) -> Result<()> {
    let inv_h2 = 1.0 / (h * h);
    let n = field.n_cells();
    let max_iter = 4 * n + 800;
    let comps = std::mem::take(&mut field.comps);
    let results = exec::run_tasks(
        comps
            .into_iter()
            .enumerate()
            .map(|(j, b)| {
                let scale = dt * diff.kappa[j] * inv_h2;
                move || -> Result<Vec<f64>> {
                    if scale == 0.0 {
                        return Ok(b);
                    }
                    linalg::cg_shifted(lap, scale, &b, linear_tol, max_iter)
                }
            })
            .collect(),
    );
    for (j, res) in results.into_iter().enumerate() {
        field.comps[j] = res?;
    }
    Ok(())
}

/// One full splitting step: two-stage explicit reaction with the local force
/// of infection and per-cell recruitment, then implicit diffusion.
pub fn pde_step(
    p: &Parameters,
    schedule: Option<&BetaSchedule>,
    mask: &RasterMask,
    lap: &CsrMatrix,
    field: &mut Field,
    t: f64,
    dt: f64,
    diff: &DiffusionConfig,
    linear_tol: f64,
) -> Result<()> {
    let n = mask.n_active();
    if field.n_cells() != n {
        return Err(EpiError::InvalidParameter(format!(
            "field has {} cells, mask has {n}",
            field.n_cells()
        )));
    }
    let floor = clamp_floor(p, linear_tol);
    clamp_field(field, floor, t)?;

    let mut p_cell = *p;
    p_cell.lambda_rec = p.lambda_rec / n as f64;
    let beta0 = schedule.map_or(p.beta, |s| s.evaluate(t));
    let beta1 = schedule.map_or(p.beta, |s| s.evaluate(t + dt));

    let local_lambda = |beta: f64, st: &CompartmentState| -> f64 {
        let total = st.total();
        if total > 0.0 {
            beta * (st.a + p_cell.eta * st.i) / total
        } else {
            0.0
        }
    };

    let staged: Vec<[f64; 7]> = exec::indexed_map(n, |cell| {
        let st = field.state_at(cell);
        let k1 = model::rhs_with_lambda(&p_cell, local_lambda(beta0, &st), &st);
        let rate1 = model::reported_case_rate(&p_cell, &st);
        let k1a = k1.to_array();
        let sta = st.to_array();
        let mut pred_arr = [0.0; 6];
        for j in 0..6 {
            pred_arr[j] = (sta[j] + dt * k1a[j]).max(0.0);
        }
        let pred = CompartmentState::from_array(pred_arr);
        let k2 = model::rhs_with_lambda(&p_cell, local_lambda(beta1, &pred), &pred);
        let rate2 = model::reported_case_rate(&p_cell, &pred);
        let k2a = k2.to_array();
        let mut out = [0.0; 7];
        for j in 0..6 {
            out[j] = sta[j] + 0.5 * dt * (k1a[j] + k2a[j]);
        }
        out[6] = field.cum[cell] + 0.5 * dt * (rate1 + rate2);
        out
    });
    for (cell, row) in staged.iter().enumerate() {
        for j in 0..N_COMPARTMENTS {
            field.comps[j][cell] = row[j];
        }
        field.cum[cell] = field.cum[cell].max(row[6]);
    }
    clamp_field(field, floor, t + dt)?;

    diffusion_step(lap, mask.h, field, dt, diff, linear_tol)
}

/// A full-field snapshot at one time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    /// Snapshot time.
    pub t: f64,
    /// Field at that time.
    pub field: Field,
}

/// Result of a reaction-diffusion run.
#[derive(Debug, Clone)]
pub struct PdeOutcome {
    /// Domain totals per step, shaped like an ordinary trajectory.
    pub totals: Trajectory,
    /// Field snapshots at the requested times.
    pub snapshots: Vec<Snapshot>,
}

/// Runs the splitting integrator to `t_end`, recording domain totals every
/// step and full snapshots at the requested times.
pub fn integrate_pde(
    p: &Parameters,
    mask: &RasterMask,
    lap: &CsrMatrix,
    mut field: Field,
    run: &PdeRunConfig,
    diff: &DiffusionConfig,
) -> Result<PdeOutcome> {
    p.validate()?;
    run.validate()?;
    diff.validate()?;
    if field.n_cells() != mask.n_active() {
        return Err(EpiError::InvalidParameter(format!(
            "field has {} cells, mask has {}",
            field.n_cells(),
            mask.n_active()
        )));
    }

    let mut snap_times = run.snapshot_times.clone();
    snap_times.sort_by(f64::total_cmp);
    let mut next_snap = 0usize;
    let grace = 1e-9 * run.dt;

    let mut totals = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        cum_reported: Vec::new(),
    };
    let record = |t: f64, field: &Field, totals: &mut Trajectory| {
        let (state, cum) = field.totals();
        totals.times.push(t);
        totals.states.push(state);
        totals.cum_reported.push(cum);
    };
    let mut snapshots = Vec::new();

    record(0.0, &field, &mut totals);
    while next_snap < snap_times.len() && snap_times[next_snap] <= grace {
        snapshots.push(Snapshot {
            t: 0.0,
            field: field.clone(),
        });
        next_snap += 1;
    }

    // Step times come from multiplying the index rather than accumulating,
    // and the last step lands on t_end exactly.
    let n_steps = (run.t_end / run.dt).ceil().max(0.0) as usize;
    for k in 0..n_steps {
        let t0 = (k as f64 * run.dt).min(run.t_end);
        let t1 = if k + 1 == n_steps {
            run.t_end
        } else {
            ((k + 1) as f64 * run.dt).min(run.t_end)
        };
        let dt = t1 - t0;
        if dt <= 0.0 {
            continue;
        }
        pde_step(p, run.schedule.as_ref(), mask, lap, &mut field, t0, dt, diff, run.linear_tol)?;
        record(t1, &field, &mut totals);
        while next_snap < snap_times.len() && snap_times[next_snap] <= t1 + grace {
            snapshots.push(Snapshot {
                t: t1,
                field: field.clone(),
            });
            next_snap += 1;
        }
    }
    Ok(PdeOutcome { totals, snapshots })
}
