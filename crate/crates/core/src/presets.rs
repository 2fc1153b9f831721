//! Built-in case-study presets: fitted parameter tables, initial conditions,
//! and the spatial scenario definitions derived from them.

use serde::{Deserialize, Serialize};

use crate::params::{BetaSchedule, CompartmentState, Parameters};

/// Reference population size of the Germany case study.
pub const GERMANY_POPULATION: f64 = 83_900_473.0;

/// Reference population size of the Cameroon case study.
pub const CAMEROON_POPULATION: f64 = 30_000_000.0;

/// Interpretation of the model time axis for a preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    /// One model time unit is one day.
    Days,
    /// One model time unit is one month.
    Months,
}

/// A complete case-study preset: parameters plus initial data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Preset {
    /// Short preset identifier.
    pub name: String,
    /// Fitted parameter table.
    pub parameters: Parameters,
    /// Initial compartment counts used for the case-study fit.
    pub initial_state: CompartmentState,
    /// Initial cumulative reported count matching the data window.
    pub initial_cumulative: f64,
    /// Time-axis interpretation.
    pub time_unit: TimeUnit,
    /// Length of the observation window in model time units.
    pub data_horizon: f64,
}

/// Germany case study: daily time unit, 60-point observation window.
pub fn germany() -> Preset {
    let mu = 1.0 / (81.72 * 365.0);
    Preset {
        name: "germany".into(),
        parameters: Parameters {
            lambda_rec: GERMANY_POPULATION * mu,
            mu,
            beta: 0.92429,
            eta: 0.35625,
            phi1: 0.52,
            phi2: 0.00062,
            c1: 0.77,
            c2: 0.18564,
            r1: 0.02534,
            p: 0.2,
            a1: 0.34949,
            gamma: 0.01729,
            sigma: 0.1428,
            theta: 0.557148,
            delta: 0.0018,
        },
        initial_state: CompartmentState {
            s: 83_674_478.0,
            v: 49_939.0,
            e: 22_924.0,
            a: 22_920.0,
            i: 32_552.0,
            r: 97_660.0,
        },
        initial_cumulative: 1_765_666.0,
        time_unit: TimeUnit::Days,
        data_horizon: 59.0,
    }
}

/// Cameroon case study: monthly time unit, 13-point observation window.
pub fn cameroon() -> Preset {
    let mu = 1.0 / (60.0 * 12.0);
    Preset {
        name: "cameroon".into(),
        parameters: Parameters {
            lambda_rec: CAMEROON_POPULATION * mu,
            mu,
            beta: 0.399092568990682,
            eta: 0.004502832608954,
            phi1: 0.52,
            phi2: 0.000583942451446,
            c1: 0.77,
            c2: 8.747e-12,
            r1: 0.061216305968569,
            p: 0.8262,
            a1: 9.2e-14,
            gamma: 0.869896361913556,
            sigma: 0.1428,
            theta: 0.386526046062348,
            delta: 0.0018,
        },
        initial_state: CompartmentState {
            s: 29_982_802.0,
            v: 0.0,
            e: 6_679.0,
            a: 0.0,
            i: 10_519.0,
            r: 0.0,
        },
        initial_cumulative: 10_519.0,
        time_unit: TimeUnit::Months,
        data_horizon: 12.0,
    }
}

/// Looks up a case-study preset by name.
pub fn by_name(name: &str) -> Option<Preset> {
    match name {
        "germany" => Some(germany()),
        "cameroon" => Some(cameroon()),
        _ => None,
    }
}

/// A Gaussian bump placement for spatial initial conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakSpec {
    /// Bump center in geometry coordinates (longitude, latitude).
    pub center: [f64; 2],
    /// Bump standard deviation in geometry length units.
    pub width: f64,
}

/// Peak centers used by the Germany spatial scenarios.
pub const GERMANY_SOUTH_PEAK: PeakSpec = PeakSpec {
    center: [11.2, 47.9],
    width: 0.25,
};

/// Second (western) peak of the two-peak Germany scenario.
pub const GERMANY_WEST_PEAK: PeakSpec = PeakSpec {
    center: [6.8, 50.8],
    width: 0.25,
};

/// Peak center used by the Cameroon one-peak scenario (southern region).
pub const CAMEROON_SOUTH_PEAK: PeakSpec = PeakSpec {
    center: [11.5, 3.9],
    width: 0.4,
};

/// Second (northern) peak of the two-peak Cameroon scenario.
pub const CAMEROON_NORTH_PEAK: PeakSpec = PeakSpec {
    center: [14.3, 10.6],
    width: 0.4,
};

/// Periodic transmission schedule of the oscillating scenario.
pub fn oscillating_schedule() -> BetaSchedule {
    BetaSchedule {
        beta0: 0.92429,
        alpha: 0.0228,
        b: std::f64::consts::FRAC_PI_6,
        period: 12.0,
    }
}

/// Transmission-rate checkpoints reported by the oscillating scenario.
pub const OSCILLATING_BETA_CHECKPOINTS: [f64; 2] = [0.85445, 0.81946];
