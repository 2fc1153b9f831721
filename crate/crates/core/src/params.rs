//! Model parameters, derived composite rates, compartment states, and the
//! optional periodic transmission schedule.

use serde::{Deserialize, Serialize};

use crate::error::{EpiError, Result};

/// Names of the compartments in storage order.
pub const COMPARTMENT_NAMES: [&str; 6] = ["S", "V", "E", "A", "I", "R"];

/// Full parameter set of the transmission model.
///
/// Fractions `r2 = 1 - r1`, `q = 1 - p`, and `a2 = 1 - a1` are derived on
/// demand and never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    /// Recruitment rate into the population (persons/time).
    pub lambda_rec: f64,
    /// Natural death rate (1/time).
    pub mu: f64,
    /// Transmission rate (1/time).
    pub beta: f64,
    /// Infectiousness modifier of symptomatic individuals, in [0, 1].
    pub eta: f64,
    /// Vaccine leakiness (residual susceptibility of the vaccinated), in [0, 1].
    pub phi1: f64,
    /// Reinfection susceptibility of recovered individuals, in [0, 1].
    pub phi2: f64,
    /// Vaccination rate of susceptibles (1/time).
    pub c1: f64,
    /// Vaccine-immunity waning rate (1/time).
    pub c2: f64,
    /// Fraction of recruits entering unvaccinated, in [0, 1].
    pub r1: f64,
    /// Fraction of latency exits that become asymptomatic, in [0, 1].
    pub p: f64,
    /// Fraction of asymptomatic exits that recover directly, in [0, 1].
    pub a1: f64,
    /// Latency exit rate (1/time).
    pub gamma: f64,
    /// Asymptomatic exit rate (1/time).
    pub sigma: f64,
    /// Symptomatic recovery rate (1/time).
    pub theta: f64,
    /// Disease-induced death rate (1/time).
    pub delta: f64,
}

impl Parameters {
    /// Fraction of recruits entering vaccinated.
    pub fn r2(&self) -> f64 {
        1.0 - self.r1
    }

    /// Fraction of latency exits that become symptomatic.
    pub fn q(&self) -> f64 {
        1.0 - self.p
    }

    /// Fraction of asymptomatic exits that progress to the symptomatic class.
    pub fn a2(&self) -> f64 {
        1.0 - self.a1
    }

    /// Checks all range constraints; returns the first violation found.
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("lambda_rec", self.lambda_rec),
            ("mu", self.mu),
            ("beta", self.beta),
            ("c1", self.c1),
            ("c2", self.c2),
            ("gamma", self.gamma),
            ("sigma", self.sigma),
            ("theta", self.theta),
            ("delta", self.delta),
        ];
        for (name, value) in nonneg {
            if !value.is_finite() || value < 0.0 {
                return Err(EpiError::InvalidParameter(format!(
                    "{name} must be finite and nonnegative, got {value}"
                )));
            }
        }
        let unit = [
            ("eta", self.eta),
            ("phi1", self.phi1),
            ("phi2", self.phi2),
            ("r1", self.r1),
            ("p", self.p),
            ("a1", self.a1),
        ];
        for (name, value) in unit {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(EpiError::InvalidParameter(format!(
                    "{name} must lie in [0, 1], got {value}"
                )));
            }
        }
        if self.mu == 0.0 {
            return Err(EpiError::InvalidParameter(
                "mu must be strictly positive".into(),
            ));
        }
        if self.lambda_rec == 0.0 {
            return Err(EpiError::InvalidParameter(
                "lambda_rec must be strictly positive".into(),
            ));
        }
        Ok(())
    }

    /// Computes the composite rates used throughout the model algebra.
    pub fn derived(&self) -> DerivedRates {
        derive_rates(self)
    }

    /// Reads a parameter by field name; `None` for unknown names.
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "lambda_rec" => self.lambda_rec,
            "mu" => self.mu,
            "beta" => self.beta,
            "eta" => self.eta,
            "phi1" => self.phi1,
            "phi2" => self.phi2,
            "c1" => self.c1,
            "c2" => self.c2,
            "r1" => self.r1,
            "p" => self.p,
            "a1" => self.a1,
            "gamma" => self.gamma,
            "sigma" => self.sigma,
            "theta" => self.theta,
            "delta" => self.delta,
            _ => return None,
        })
    }

    /// Writes a parameter by field name; errors on unknown names.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let slot = match name {
            "lambda_rec" => &mut self.lambda_rec,
            "mu" => &mut self.mu,
            "beta" => &mut self.beta,
            "eta" => &mut self.eta,
            "phi1" => &mut self.phi1,
            "phi2" => &mut self.phi2,
            "c1" => &mut self.c1,
            "c2" => &mut self.c2,
            "r1" => &mut self.r1,
            "p" => &mut self.p,
            "a1" => &mut self.a1,
            "gamma" => &mut self.gamma,
            "sigma" => &mut self.sigma,
            "theta" => &mut self.theta,
            "delta" => &mut self.delta,
            _ => {
                return Err(EpiError::InvalidParameter(format!(
                    "unknown parameter name {name:?}"
                )))
            }
        };
        *slot = value;
        Ok(())
    }
}

/// Composite rates combining death, progression, and vaccination flows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedRates {
    /// Total exit rate from the susceptible class: `c1 + mu`.
    pub k1: f64,
    /// Total exit rate from the vaccinated class: `mu + c2`.
    pub k2: f64,
    /// Total exit rate from the exposed class: `mu + gamma`.
    pub k3: f64,
    /// Total exit rate from the asymptomatic class: `mu + sigma`.
    pub k4: f64,
    /// Total exit rate from the symptomatic class: `mu + delta + theta`.
    pub k5: f64,
    /// Determinant of the susceptible/vaccinated exchange, `k1*k2 - c1*c2`,
    /// computed in the cancellation-free form `mu*(mu + c1 + c2)`.
    pub k6: f64,
    /// Recruitment mixing weight: `c2*r2 + r1*k2`.
    pub k7: f64,
}

/// Derives the composite rates `k1..k7` from the base parameters.
pub fn derive_rates(p: &Parameters) -> DerivedRates {
    let k1 = p.c1 + p.mu;
    let k2 = p.mu + p.c2;
    let k3 = p.mu + p.gamma;
    let k4 = p.mu + p.sigma;
    let k5 = p.mu + p.delta + p.theta;
    DerivedRates {
        k1,
        k2,
        k3,
        k4,
        k5,
        k6: p.mu * (p.mu + p.c1 + p.c2),
        k7: p.c2 * p.r2() + p.r1 * k2,
    }
}

/// One point of the six-compartment state, in person counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompartmentState {
    /// Susceptible.
    pub s: f64,
    /// Vaccinated.
    pub v: f64,
    /// Exposed (latent).
    pub e: f64,
    /// Asymptomatic infectious.
    pub a: f64,
    /// Symptomatic infectious.
    pub i: f64,
    /// Recovered.
    pub r: f64,
}

impl CompartmentState {
    /// State with every compartment at zero.
    pub const ZERO: CompartmentState = CompartmentState {
        s: 0.0,
        v: 0.0,
        e: 0.0,
        a: 0.0,
        i: 0.0,
        r: 0.0,
    };

    /// Total population `S + V + E + A + I + R`.
    pub fn total(&self) -> f64 {
        self.s + self.v + self.e + self.a + self.i + self.r
    }

    /// Sum of the infected classes `E + A + I`.
    pub fn infected(&self) -> f64 {
        self.e + self.a + self.i
    }

    /// Components as an array in storage order.
    pub fn to_array(self) -> [f64; 6] {
        [self.s, self.v, self.e, self.a, self.i, self.r]
    }

    /// Builds a state from an array in storage order.
    pub fn from_array(x: [f64; 6]) -> Self {
        CompartmentState {
            s: x[0],
            v: x[1],
            e: x[2],
            a: x[3],
            i: x[4],
            r: x[5],
        }
    }

    /// Largest absolute component value.
    pub fn max_abs(&self) -> f64 {
        self.to_array().iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Checks that every component is finite and nonnegative.
    pub fn validate(&self) -> Result<()> {
        for (name, value) in COMPARTMENT_NAMES.iter().zip(self.to_array()) {
            if !value.is_finite() || value < 0.0 {
                return Err(EpiError::InvalidParameter(format!(
                    "compartment {name} must be finite and nonnegative, got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// Periodic transmission-rate schedule `beta(t) = beta0*(1 + alpha*cos(2*pi*t/period + b))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaSchedule {
    /// Baseline transmission rate (1/time).
    pub beta0: f64,
    /// Relative oscillation amplitude, in [0, 1).
    pub alpha: f64,
    /// Phase offset (radians).
    pub b: f64,
    /// Oscillation period (time units).
    pub period: f64,
}

impl BetaSchedule {
    /// Transmission rate at time `t`; positive for all `t` when valid.
    pub fn evaluate(&self, t: f64) -> f64 {
        self.beta0 * (1.0 + self.alpha * (std::f64::consts::TAU * t / self.period + self.b).cos())
    }

    /// Checks amplitude, period, and baseline constraints.
    pub fn validate(&self) -> Result<()> {
        if !self.beta0.is_finite() || self.beta0 <= 0.0 {
            return Err(EpiError::InvalidParameter(format!(
                "beta0 must be positive, got {}",
                self.beta0
            )));
        }
        if !self.alpha.is_finite() || !(0.0..1.0).contains(&self.alpha) {
            return Err(EpiError::InvalidParameter(format!(
                "alpha must lie in [0, 1), got {}",
                self.alpha
            )));
        }
        if !self.period.is_finite() || self.period <= 0.0 {
            return Err(EpiError::InvalidParameter(format!(
                "period must be positive, got {}",
                self.period
            )));
        }
        if !self.b.is_finite() {
            return Err(EpiError::InvalidParameter("phase must be finite".into()));
        }
        Ok(())
    }
}

impl Default for BetaSchedule {
    fn default() -> Self {
        BetaSchedule {
            beta0: 1.0,
            alpha: 0.0,
            b: 0.0,
            period: 12.0,
        }
    }
}
