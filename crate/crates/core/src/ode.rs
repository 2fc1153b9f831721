//! Adaptive ODE integration of the six-compartment system with an embedded
//! fifth/fourth-order Runge-Kutta pair, proportional-integral step control,
//! fourth-order dense output, and a cumulative-incidence observer.

use serde::{Deserialize, Serialize};

use crate::error::{EpiError, Result};
use crate::model;
use crate::params::{BetaSchedule, CompartmentState, Parameters};

/// Dimension of the augmented state: six compartments plus the cumulative
/// reported-case counter.
const DIM: usize = 7;

/// Hard cap on accepted+rejected steps per integration.
const MAX_STEPS: usize = 100_000_000;

// JSON has no infinity literal, so the disabled step bound travels as null.
mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Tolerances and step bounds for the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    /// Relative error tolerance per step.
    pub rel_tol: f64,
    /// Absolute error tolerance per step (persons).
    pub abs_tol: f64,
    /// Upper bound on the step size; infinite (JSON null) to disable.
    #[serde(with = "infinite_as_null")]
    pub max_step: f64,
    /// Initial step size; zero selects one automatically.
    pub initial_step: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-8,
            abs_tol: 1e-6,
            max_step: f64::INFINITY,
            initial_step: 0.0,
        }
    }
}

impl IntegratorConfig {
    /// Checks tolerance and step-bound positivity.
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(EpiError::InvalidParameter(format!(
                "tolerances must be positive, got rel {} abs {}",
                self.rel_tol, self.abs_tol
            )));
        }
        if !(self.max_step > 0.0) {
            return Err(EpiError::InvalidParameter(format!(
                "max_step must be positive, got {}",
                self.max_step
            )));
        }
        if self.initial_step < 0.0 || !self.initial_step.is_finite() {
            return Err(EpiError::InvalidParameter(format!(
                "initial_step must be finite and nonnegative, got {}",
                self.initial_step
            )));
        }
        Ok(())
    }
}

/// Time-stamped solution samples with the cumulative reported-case observer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    /// Sample times, strictly increasing.
    pub times: Vec<f64>,
    /// Compartment states at the sample times.
    pub states: Vec<CompartmentState>,
    /// Cumulative reported cases at the sample times, nondecreasing.
    pub cum_reported: Vec<f64>,
}

impl Trajectory {
    /// Final compartment state.
    pub fn last_state(&self) -> &CompartmentState {
        self.states.last().expect("trajectory is never empty")
    }

    /// Serializes the trajectory as CSV with full double precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,S,V,E,A,I,R,C\n");
        for ((t, st), c) in self.times.iter().zip(&self.states).zip(&self.cum_reported) {
            out.push_str(&format!(
                "{t:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{c:.16e}\n",
                st.s, st.v, st.e, st.a, st.i, st.r
            ));
        }
        out
    }
}

/// Long-horizon outcome of the dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LongRunVerdict {
    /// Infected classes decayed below the extinction threshold.
    ConvergedToDfe,
    /// Infected classes settled at a positive level.
    Endemic,
    /// Neither criterion met within the horizon.
    Undecided,
}

/// Builds a uniform output grid from `t0` to `t1` inclusive.
pub fn time_grid(t0: f64, t1: f64, step: f64) -> Vec<f64> {
    let mut grid = Vec::new();
    let n = ((t1 - t0) / step).round() as usize;
    for k in 0..=n {
        grid.push(t0 + step * k as f64);
    }
    if *grid.last().unwrap() < t1 - 1e-12 * (t1 - t0).abs() {
        grid.push(t1);
    } else {
        *grid.last_mut().unwrap() = t1;
    }
    grid
}

// Butcher tableau of the Dormand-Prince 5(4) pair.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Difference between the fifth- and embedded fourth-order weights.
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];
// Dense-output weights of the continuous fourth-order extension.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

struct Dense {
    t: f64,
    h: f64,
    r1: [f64; DIM],
    r2: [f64; DIM],
    r3: [f64; DIM],
    r4: [f64; DIM],
    r5: [f64; DIM],
}

impl Dense {
    fn eval(&self, t: f64) -> [f64; DIM] {
        let theta = (t - self.t) / self.h;
        let theta1 = 1.0 - theta;
        let mut y = [0.0; DIM];
        for i in 0..DIM {
            y[i] = self.r1[i]
                + theta
                    * (self.r2[i]
                        + theta1 * (self.r3[i] + theta * (self.r4[i] + theta1 * self.r5[i])));
        }
        y
    }
}

fn rhs7(p: &Parameters, schedule: Option<&BetaSchedule>, t: f64, y: &[f64; DIM]) -> Result<[f64; DIM]> {
    let st = CompartmentState {
        s: y[0],
        v: y[1],
        e: y[2],
        a: y[3],
        i: y[4],
        r: y[5],
    };
    let beta_now = schedule.map_or(p.beta, |s| s.evaluate(t));
    let d = model::rhs(p, beta_now, &st)?;
    Ok([
        d.s,
        d.v,
        d.e,
        d.a,
        d.i,
        d.r,
        model::reported_case_rate(p, &st),
    ])
}

fn error_norm(y0: &[f64; DIM], y1: &[f64; DIM], err: &[f64; DIM], cfg: &IntegratorConfig) -> f64 {
    let mut acc = 0.0;
    for i in 0..DIM {
        let sc = cfg.abs_tol + cfg.rel_tol * y0[i].abs().max(y1[i].abs());
        let q = err[i] / sc;
        acc += q * q;
    }
    (acc / DIM as f64).sqrt()
}

fn initial_step_guess(
    p: &Parameters,
    schedule: Option<&BetaSchedule>,
    t0: f64,
    y0: &[f64; DIM],
    f0: &[f64; DIM],
    t1: f64,
    cfg: &IntegratorConfig,
) -> f64 {
    let norm = |y: &[f64; DIM], z: &[f64; DIM]| -> f64 {
        let mut acc = 0.0_f64;
        for i in 0..DIM {
            let sc = cfg.abs_tol + cfg.rel_tol * y[i].abs();
            let q = z[i] / sc;
            acc += q * q;
        }
        (acc / DIM as f64).sqrt()
    };
    let d0 = norm(y0, y0);
    let d1 = norm(y0, f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min((t1 - t0).abs());
    let mut y1 = [0.0; DIM];
    for i in 0..DIM {
        y1[i] = y0[i] + h0 * f0[i];
    }
    let d2 = match rhs7(p, schedule, t0 + h0, &y1) {
        Ok(f1) => {
            let mut diff = [0.0; DIM];
            for i in 0..DIM {
                diff[i] = f1[i] - f0[i];
            }
            norm(y0, &diff) / h0
        }
        Err(_) => return (h0 * 1e-3).max(1e-12),
    };
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(cfg.max_step).min((t1 - t0).abs())
}

/// Integrates the model from `t0` to `t1`, sampling at `outputs`.
///
/// The augmented seventh component counts cumulative new reported cases
/// (total inflow into the symptomatic class), starting from `c0`.
pub fn integrate(
    p: &Parameters,
    schedule: Option<&BetaSchedule>,
    x0: &CompartmentState,
    c0: f64,
    t0: f64,
    t1: f64,
    outputs: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    p.validate()?;
    cfg.validate()?;
    x0.validate()?;
    if let Some(s) = schedule {
        s.validate()?;
    }
    if x0.total() <= 0.0 {
        return Err(EpiError::Degenerate(
            "initial total population must be positive".into(),
        ));
    }
    if !(t1 > t0) {
        return Err(EpiError::InvalidParameter(format!(
            "time span must be forward, got [{t0}, {t1}]"
        )));
    }
    for pair in outputs.windows(2) {
        if !(pair[1] > pair[0]) {
            return Err(EpiError::InvalidParameter(
                "output grid must be strictly increasing".into(),
            ));
        }
    }
    if let (Some(first), Some(last)) = (outputs.first(), outputs.last()) {
        let span = t1 - t0;
        if *first < t0 - 1e-12 * span || *last > t1 + 1e-12 * span {
            return Err(EpiError::InvalidParameter(
                "output grid must lie within the integration span".into(),
            ));
        }
    }

    let n0 = p.lambda_rec / p.mu;
    let floor = -1e-9 * n0;

    let mut traj = Trajectory {
        times: Vec::with_capacity(outputs.len()),
        states: Vec::with_capacity(outputs.len()),
        cum_reported: Vec::with_capacity(outputs.len()),
    };
    let mut next_output = 0;

    let mut t = t0;
    let mut y = [x0.s, x0.v, x0.e, x0.a, x0.i, x0.r, c0];
    let mut f = rhs7(p, schedule, t, &y)?;

    // Emit any outputs that coincide with the start time.
    while next_output < outputs.len() && outputs[next_output] <= t {
        push_sample(&mut traj, outputs[next_output], &y);
        next_output += 1;
    }

    let mut h = if cfg.initial_step > 0.0 {
        cfg.initial_step.min(cfg.max_step).min(t1 - t0)
    } else {
        initial_step_guess(p, schedule, t0, &y, &f, t1, cfg)
    };
    let mut err_prev: f64 = 1.0;
    let mut rejected = false;

    let mut k = [[0.0_f64; DIM]; 7];
    for _step in 0..MAX_STEPS {
        if t >= t1 {
            break;
        }
        let underflow = 1e-14 * t.abs().max(1.0);
        if h < underflow {
            return Err(EpiError::StepSizeUnderflow { t, dt: h });
        }
        if t + h > t1 {
            h = t1 - t;
        }

        k[0] = f;
        let mut failed = false;
        for s in 1..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    for i in 0..DIM {
                        ys[i] += h * a * kj[i];
                    }
                }
            }
            match rhs7(p, schedule, t + C[s] * h, &ys) {
                Ok(fs) => k[s] = fs,
                Err(_) => {
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            h *= 0.25;
            rejected = true;
            continue;
        }
        // Fifth-order solution (row 7 of A carries the weights; FSAL pair).
        let mut y1 = y;
        for (j, kj) in k.iter().enumerate().take(6) {
            let a = A[6][j];
            if a != 0.0 {
                for i in 0..DIM {
                    y1[i] += h * a * kj[i];
                }
            }
        }
        let mut err = [0.0; DIM];
        for (j, kj) in k.iter().enumerate() {
            if E[j] != 0.0 {
                for i in 0..DIM {
                    err[i] += h * E[j] * kj[i];
                }
            }
        }
        let err_norm = error_norm(&y, &y1, &err, cfg);

        if err_norm <= 1.0 {
            // Accept: build the dense interpolant before clamping.
            let mut r1 = [0.0; DIM];
            let mut r2 = [0.0; DIM];
            let mut r3 = [0.0; DIM];
            let mut r4 = [0.0; DIM];
            let mut r5 = [0.0; DIM];
            for i in 0..DIM {
                r1[i] = y[i];
                r2[i] = y1[i] - y[i];
                r3[i] = h * k[0][i] - r2[i];
                r4[i] = r2[i] - h * k[6][i] - r3[i];
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    if D[j] != 0.0 {
                        acc += D[j] * kj[i];
                    }
                }
                r5[i] = h * acc;
            }
            let dense = Dense {
                t,
                h,
                r1,
                r2,
                r3,
                r4,
                r5,
            };
            let t_new = t + h;
            while next_output < outputs.len() && outputs[next_output] <= t_new {
                let yo = dense.eval(outputs[next_output]);
                push_sample(&mut traj, outputs[next_output], &yo);
                next_output += 1;
            }

            let mut clamped = false;
            for i in 0..DIM {
                if y1[i] < 0.0 {
                    if y1[i] < floor {
                        let component = crate::params::COMPARTMENT_NAMES
                            .get(i)
                            .copied()
                            .unwrap_or("C");
                        return Err(EpiError::NegativeState {
                            component,
                            value: y1[i],
                            t: t_new,
                        });
                    }
                    y1[i] = 0.0;
                    clamped = true;
                }
            }
            t = t_new;
            y = y1;
            f = if clamped {
                rhs7(p, schedule, t, &y)?
            } else {
                k[6]
            };

            let fac = if err_norm == 0.0 {
                5.0
            } else {
                0.9 * err_norm.powf(-0.17) * err_prev.powf(0.04)
            };
            let fac = fac.clamp(0.2, if rejected { 1.0 } else { 5.0 });
            h = (h * fac).min(cfg.max_step);
            err_prev = err_norm.max(1e-4);
            rejected = false;
        } else {
            let fac = (0.9 * err_norm.powf(-0.2)).clamp(0.2, 1.0);
            h *= fac;
            rejected = true;
        }
    }

    if next_output < outputs.len() {
        // Numerical endpoint roundoff: emit remaining samples at the final state.
        while next_output < outputs.len() && outputs[next_output] <= t1 + 1e-9 * (t1 - t0) {
            push_sample(&mut traj, outputs[next_output], &y);
            next_output += 1;
        }
        if next_output < outputs.len() {
            return Err(EpiError::StepSizeUnderflow { t, dt: h });
        }
    }
    Ok(traj)
}

fn push_sample(traj: &mut Trajectory, t: f64, y: &[f64; DIM]) {
    let st = CompartmentState {
        s: y[0].max(0.0),
        v: y[1].max(0.0),
        e: y[2].max(0.0),
        a: y[3].max(0.0),
        i: y[4].max(0.0),
        r: y[5].max(0.0),
    };
    let c = y[6].max(traj.cum_reported.last().copied().unwrap_or(f64::NEG_INFINITY));
    traj.times.push(t);
    traj.states.push(st);
    traj.cum_reported.push(if c.is_finite() { c } else { y[6] });
}

/// Classifies the long-run outcome by integrating to the horizon.
pub fn long_run_classifier(
    p: &Parameters,
    x0: &CompartmentState,
    horizon: f64,
) -> Result<LongRunVerdict> {
    let cfg = IntegratorConfig::default();
    let outputs = [0.9 * horizon, horizon];
    let traj = integrate(p, None, x0, 0.0, 0.0, horizon, &outputs, &cfg)?;
    let n0 = p.lambda_rec / p.mu;
    let end = traj.states[traj.states.len() - 1].infected();
    let mid = traj.states[traj.states.len() - 2].infected();
    if end < 1e-6 * n0 {
        return Ok(LongRunVerdict::ConvergedToDfe);
    }
    let change = (end - mid).abs() / end.max(f64::MIN_POSITIVE);
    if change < 1e-4 {
        Ok(LongRunVerdict::Endemic)
    } else {
        Ok(LongRunVerdict::Undecided)
    }
}
