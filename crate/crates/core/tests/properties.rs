//! Randomized invariants: reproduction-number algebra, stationarity of the
//! disease-free state, threshold sign structure, integrator conservation,
//! calibration plumbing, data parsing, and grid-operator structure.

use epidiff_core::calibrate::{objective, CalibrationSpec, ObservationSeries};
use epidiff_core::equilibria::cubic_coefficients;
use epidiff_core::geometry::{build_laplacian, load_polygons, rasterize};
use epidiff_core::linalg::CsrMatrix;
use epidiff_core::model::{
    beta_critical, control_reproduction_number, control_reproduction_number_with_beta,
    disease_free_equilibrium, force_of_infection, rhs,
};
use epidiff_core::ode::{integrate, IntegratorConfig};
use epidiff_core::{CompartmentState, Parameters};
use proptest::prelude::*;
use std::f64::consts::PI;

/// Strategy over validated parameter sets spanning wide rate ranges.
fn params() -> impl Strategy<Value = Parameters> {
    (
        (0.0..=5.0f64, -5.0..=-2.0f64, 0.05..=2.0f64, 0.0..=1.0f64, 0.0..=1.0f64),
        (0.0..=0.1f64, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64),
        (0.0..=1.0f64, -3.0..=0.17f64, -3.0..=0.0f64, 0.0..=1.0f64, 0.0..=0.1f64),
    )
        .prop_map(
            |(
                (lam_exp, mu_exp, beta, eta, phi1),
                (phi2, c1, c2, r1, p_sym),
                (a1, gamma_exp, sigma_exp, theta, delta),
            )| Parameters {
                lambda_rec: 10f64.powf(lam_exp),
                mu: 10f64.powf(mu_exp),
                beta,
                eta,
                phi1,
                phi2,
                c1,
                c2,
                r1,
                p: p_sym,
                a1,
                gamma: 10f64.powf(gamma_exp),
                sigma: 10f64.powf(sigma_exp),
                theta,
                delta,
            },
        )
        .prop_filter("parameters must validate", |p| p.validate().is_ok())
}

/// Strategy over nonnegative compartment states with a positive total.
fn state() -> impl Strategy<Value = CompartmentState> {
    (
        1.0..=1e6f64,
        0.0..=1e6f64,
        0.0..=1e6f64,
        0.0..=1e6f64,
        0.0..=1e6f64,
        0.0..=1e6f64,
    )
        .prop_map(|(s, v, e, a, i, r)| CompartmentState { s, v, e, a, i, r })
}

/// Looks up one stored entry of a CSR matrix.
fn csr_entry(mat: &CsrMatrix, row: usize, col: usize) -> Option<f64> {
    (mat.row_ptr[row]..mat.row_ptr[row + 1])
        .find(|&k| mat.col_idx[k] == col)
        .map(|k| mat.values[k])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// The reproduction number is homogeneous of degree one in the
    /// transmission rate.
    #[test]
    fn reproduction_number_scales_linearly_with_transmission(
        p in params(),
        b in 1e-3..=10.0f64,
    ) {
        let rc_unit = control_reproduction_number_with_beta(&p, 1.0).unwrap();
        let rc_b = control_reproduction_number_with_beta(&p, b).unwrap();
        prop_assume!(rc_unit.is_finite() && rc_b.is_finite());
        let expect = b * rc_unit;
        let tol = 1e-13 * expect.abs().max(rc_b.abs()).max(1e-300);
        prop_assert!(
            (rc_b - expect).abs() <= tol,
            "rc({b}) = {rc_b} deviates from {expect}"
        );
    }

    /// Evaluating the reproduction number at the critical transmission rate
    /// returns one.
    #[test]
    fn reproduction_number_is_one_at_critical_transmission(p in params()) {
        let bc = match beta_critical(&p) {
            Ok(bc) if bc.is_finite() => bc,
            _ => return Err(TestCaseError::reject("degenerate critical rate")),
        };
        let rc = control_reproduction_number_with_beta(&p, bc).unwrap();
        prop_assert!((rc - 1.0).abs() <= 1e-12, "rc(beta_crit) = {rc}");
    }

    /// Summing all compartment derivatives recovers the net demography
    /// (recruitment minus natural and disease-induced deaths): every internal
    /// transfer cancels.
    #[test]
    fn derivative_components_sum_to_net_demography(p in params(), st in state()) {
        let n = st.total();
        let fo = force_of_infection(&p, p.beta, &st).unwrap();
        let r = rhs(&p, p.beta, &st).unwrap();
        let total_rate: f64 = r.to_array().iter().sum();
        let net = p.lambda_rec - p.mu * n - p.delta * st.i;
        let rate_mass = p.mu
            + p.delta
            + p.gamma
            + p.sigma
            + p.theta
            + p.phi1
            + p.phi2
            + p.c1
            + p.c2;
        let mag = p.lambda_rec + n * rate_mass + 2.0 * fo * (st.s + st.v) + 1.0;
        prop_assert!(
            (total_rate - net).abs() <= 1e-12 * mag,
            "sum {total_rate} vs demography {net} (scale {mag})"
        );
    }

    /// The disease-free state is stationary: infected rows vanish exactly and
    /// the susceptible/vaccinated rows vanish to rounding in the flow scale.
    #[test]
    fn disease_free_state_is_stationary(p in params()) {
        let dfe = disease_free_equilibrium(&p).unwrap();
        let k = p.derived();
        let r = rhs(&p, p.beta, &dfe).unwrap();
        prop_assert_eq!(r.e, 0.0);
        prop_assert_eq!(r.a, 0.0);
        prop_assert_eq!(r.i, 0.0);
        prop_assert_eq!(r.r, 0.0);
        let flow = p.lambda_rec + k.k1 * dfe.s + k.k2 * dfe.v;
        let tol = 512.0 * f64::EPSILON * flow;
        prop_assert!(r.s.abs() <= tol, "ds/dt = {} vs flow scale {flow}", r.s);
        prop_assert!(r.v.abs() <= tol, "dv/dt = {} vs flow scale {flow}", r.v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// The closed-form trailing coefficient of the endemic polynomial changes
    /// sign exactly at the reproduction threshold, and the independently
    /// recovered trailing coefficient lands on the same side.
    #[test]
    fn trailing_coefficient_sign_tracks_reproduction_threshold(p in params()) {
        let rc = control_reproduction_number(&p).unwrap();
        prop_assume!(rc.is_finite() && (rc - 1.0).abs() > 1e-6);
        let coeffs = match cubic_coefficients(&p) {
            Ok(c) => c,
            Err(_) => return Err(TestCaseError::reject("degenerate coefficients")),
        };
        prop_assume!(coeffs.a0 != 0.0 && coeffs.recovered_trailing.is_finite());
        prop_assume!(coeffs.recovered_trailing != 0.0);
        prop_assert_eq!(
            coeffs.a0 > 0.0,
            rc > 1.0,
            "a0 = {} at rc = {}",
            coeffs.a0,
            rc
        );
        prop_assert_eq!(
            coeffs.recovered_trailing > 0.0,
            coeffs.a0 > 0.0,
            "recovered trailing {} vs closed form {}",
            coeffs.recovered_trailing,
            coeffs.a0
        );
    }

    /// A parsed observation series reproduces the written CSV exactly, and a
    /// time-reversed copy is rejected.
    #[test]
    fn observation_csv_round_trips_and_rejects_disorder(
        t0 in -5.0..=5.0f64,
        gaps in prop::collection::vec(1e-3..=10.0f64, 1..=24),
        v0 in 0.0..=1e6f64,
        incs in prop::collection::vec(0.0..=1e4f64, 1..=24),
    ) {
        let n = gaps.len().min(incs.len()) + 1;
        let mut times = vec![t0];
        let mut values = vec![v0];
        for i in 0..n - 1 {
            times.push(times[i] + gaps[i]);
            values.push(values[i] + incs[i]);
        }
        let mut text = String::from("t,cumulative_cases\n");
        for (t, v) in times.iter().zip(&values) {
            text.push_str(&format!("{t},{v}\n"));
        }
        let series = ObservationSeries::from_csv(&text, "prop").unwrap();
        prop_assert_eq!(&series.times, &times);
        prop_assert_eq!(&series.values, &values);

        let mut reversed = String::from("t,cumulative_cases\n");
        for (t, v) in times.iter().zip(&values).rev() {
            reversed.push_str(&format!("{t},{v}\n"));
        }
        prop_assert!(ObservationSeries::from_csv(&reversed, "prop").is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Recorded trajectories stay nonnegative, the reported-case counter never
    /// decreases beyond solver tolerance, and without disease-induced death
    /// the total population follows its exponential closed form.
    #[test]
    fn integration_preserves_positivity_and_population_law(
        p in params(),
        x0 in state(),
    ) {
        let mut p = p;
        p.delta = 0.0;
        let cfg = IntegratorConfig::default();
        let outputs = [0.0, 8.0, 16.0, 24.0, 32.0, 40.0];
        let traj = integrate(&p, None, &x0, 0.0, 0.0, 40.0, &outputs, &cfg).unwrap();
        let n0 = x0.total();
        let n_inf = p.lambda_rec / p.mu;
        let tol = 3e-5 * (n0 + p.lambda_rec * 40.0);
        for (t, st) in traj.times.iter().zip(&traj.states) {
            for c in st.to_array() {
                prop_assert!(c >= 0.0, "negative component {c} at t = {t}");
            }
            let expect = n_inf + (n0 - n_inf) * (-p.mu * t).exp();
            prop_assert!(
                (st.total() - expect).abs() <= tol,
                "N({t}) = {} vs closed form {expect}",
                st.total()
            );
        }
        for w in traj.cum_reported.windows(2) {
            let slack = cfg.abs_tol + 1e-12 * w[0].abs();
            prop_assert!(
                w[1] >= w[0] - slack,
                "case counter fell from {} to {}",
                w[0],
                w[1]
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// The misfit of a parameter vector against data generated by that same
    /// vector is zero.
    #[test]
    fn misfit_vanishes_on_self_generated_data(p in params()) {
        let x0 = CompartmentState {
            s: 1e6,
            v: 2e5,
            e: 500.0,
            a: 200.0,
            i: 100.0,
            r: 0.0,
        };
        let c0 = 123.0;
        let times: Vec<f64> = (1..=10).map(|k| 3.0 * k as f64).collect();
        let cfg = IntegratorConfig::default();
        let traj = integrate(&p, None, &x0, c0, times[0], 30.0, &times, &cfg).unwrap();
        prop_assume!(traj.cum_reported.iter().all(|v| v.is_finite()));
        let data = ObservationSeries {
            times,
            values: traj.cum_reported.clone(),
            label: "synthetic".into(),
        };
        let spec = CalibrationSpec {
            fixed: p,
            free_names: vec!["beta".into()],
            lower: vec![0.04],
            upper: vec![2.5],
            initial_guess: vec![p.beta],
            x0,
            c0,
        };
        let value = objective(&spec, &[p.beta], &data).unwrap();
        let budget = 1e-9 * (1.0 + data.values.last().unwrap().abs());
        prop_assert!(value <= budget, "misfit {value} above {budget}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Graph Laplacians of rasterized star-shaped domains have exactly zero
    /// row sums, unit off-diagonal couplings, and a symmetric sparsity
    /// pattern, which is what makes the diffusion operator mass-conserving.
    #[test]
    fn laplacian_rows_balance_and_pattern_is_symmetric(
        radii in prop::collection::vec(0.15..=0.45f64, 12),
        nx in 8..=32usize,
    ) {
        let m = radii.len();
        let mut coords = String::new();
        for (j, r) in radii.iter().chain(radii.iter().take(1)).enumerate() {
            let ang = 2.0 * PI * (j % m) as f64 / m as f64;
            if j > 0 {
                coords.push(',');
            }
            coords.push_str(&format!(
                "[{},{}]",
                0.5 + r * ang.cos(),
                0.5 + r * ang.sin()
            ));
        }
        let doc = format!(
            concat!(
                "{{\"type\":\"FeatureCollection\",\"features\":[{{",
                "\"type\":\"Feature\",\"properties\":{{\"role\":\"domain\"}},",
                "\"geometry\":{{\"type\":\"Polygon\",\"coordinates\":[[{}]]}}}}]}}"
            ),
            coords
        );
        let poly = load_polygons(&doc, "prop").unwrap();
        let mask = match rasterize(&poly, nx) {
            Ok(mask) if mask.n_active() > 0 => mask,
            _ => return Err(TestCaseError::reject("empty raster")),
        };
        let lap = build_laplacian(&mask);
        for row in 0..lap.n {
            prop_assert_eq!(lap.row_sum(row), 0.0);
            let mut degree = 0.0;
            let mut neighbors = 0.0;
            for k in lap.row_ptr[row]..lap.row_ptr[row + 1] {
                let (col, val) = (lap.col_idx[k], lap.values[k]);
                if col == row {
                    degree = val;
                } else {
                    prop_assert_eq!(val, -1.0);
                    neighbors += 1.0;
                    prop_assert_eq!(csr_entry(&lap, col, row), Some(val));
                }
            }
            prop_assert_eq!(degree, neighbors);
        }
    }
}
