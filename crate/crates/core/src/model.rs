//! Core model algebra: force of infection, right-hand side, disease-free
//! equilibrium, next-generation matrices, and the control reproduction number.

use crate::error::{EpiError, Result};
use crate::params::{CompartmentState, Parameters};

/// Force of infection `beta_now*(A + eta*I)/N` for the given state.
pub fn force_of_infection(p: &Parameters, beta_now: f64, st: &CompartmentState) -> Result<f64> {
    let n = st.total();
    if n <= 0.0 {
        return Err(EpiError::Degenerate(
            "force of infection undefined for zero total population".into(),
        ));
    }
    Ok(beta_now * (st.a + p.eta * st.i) / n)
}

/// Time derivatives of the six compartments at the given state.
///
/// The component sum telescopes to `lambda_rec - mu*N - delta*I`.
pub fn rhs(p: &Parameters, beta_now: f64, st: &CompartmentState) -> Result<CompartmentState> {
    let lam = force_of_infection(p, beta_now, st)?;
    Ok(rhs_with_lambda(p, lam, st))
}

/// Right-hand side with an externally supplied force of infection.
pub fn rhs_with_lambda(p: &Parameters, lam: f64, st: &CompartmentState) -> CompartmentState {
    let k = p.derived();
    CompartmentState {
        s: p.r1 * p.lambda_rec + p.c2 * st.v - (lam + k.k1) * st.s,
        v: p.r2() * p.lambda_rec + p.c1 * st.s - (p.phi1 * lam + k.k2) * st.v,
        e: lam * (st.s + p.phi1 * st.v) + p.phi2 * lam * st.r - k.k3 * st.e,
        a: p.p * p.gamma * st.e - k.k4 * st.a,
        i: p.q() * p.gamma * st.e + p.a2() * p.sigma * st.a - k.k5 * st.i,
        r: p.a1 * p.sigma * st.a + p.theta * st.i - (p.phi2 * lam + p.mu) * st.r,
    }
}

/// Rate of new reported cases: total inflow into the symptomatic class.
pub fn reported_case_rate(p: &Parameters, st: &CompartmentState) -> f64 {
    p.q() * p.gamma * st.e + p.a2() * p.sigma * st.a
}

/// Disease-free equilibrium: infection-free steady state of the S/V subsystem.
pub fn disease_free_equilibrium(p: &Parameters) -> Result<CompartmentState> {
    let k = p.derived();
    if k.k6 <= 0.0 {
        return Err(EpiError::Degenerate(format!(
            "k6 = {} must be positive (requires mu > 0)",
            k.k6
        )));
    }
    Ok(CompartmentState {
        s: k.k7 * p.lambda_rec / k.k6,
        v: (k.k1 * p.r2() + p.c1 * p.r1) * p.lambda_rec / k.k6,
        e: 0.0,
        a: 0.0,
        i: 0.0,
        r: 0.0,
    })
}

/// Effective initially-susceptible pool `S0 + phi1*V0` at the disease-free state.
pub fn effective_susceptible_pool(p: &Parameters) -> Result<f64> {
    let dfe = disease_free_equilibrium(p)?;
    Ok(dfe.s + p.phi1 * dfe.v)
}

/// Control reproduction number from the closed form.
pub fn control_reproduction_number(p: &Parameters) -> Result<f64> {
    control_reproduction_number_with_beta(p, p.beta)
}

/// Control reproduction number evaluated at an overriding transmission rate.
pub fn control_reproduction_number_with_beta(p: &Parameters, beta_now: f64) -> Result<f64> {
    let k = p.derived();
    if k.k3 <= 0.0 || k.k4 <= 0.0 || k.k5 <= 0.0 {
        return Err(EpiError::Degenerate(format!(
            "k3, k4, k5 must be positive, got ({}, {}, {})",
            k.k3, k.k4, k.k5
        )));
    }
    let n1 = effective_susceptible_pool(p)?;
    let n0 = p.lambda_rec / p.mu;
    let asym = n1 * beta_now * p.eta * p.gamma * (p.a2() * p.p * p.sigma + k.k4 * p.q())
        / (n0 * k.k3 * k.k4 * k.k5);
    let sym = n1 * beta_now * p.p * p.gamma / (n0 * k.k3 * k.k4);
    Ok(asym + sym)
}

/// Transmission rate at which the control reproduction number equals one.
///
/// The reproduction number is linear in `beta`, so the threshold is obtained
/// from a single evaluation at `beta = 1`.
pub fn beta_critical(p: &Parameters) -> Result<f64> {
    let rc_unit = control_reproduction_number_with_beta(p, 1.0)?;
    if rc_unit <= 0.0 {
        return Err(EpiError::Degenerate(
            "reproduction number is identically zero; no transmission threshold".into(),
        ));
    }
    Ok(1.0 / rc_unit)
}

/// New-infection and transition Jacobian blocks at the disease-free state.
///
/// Returns `(Z, W)` over the infected classes `(E, A, I)`; the spectral
/// radius of `Z * W^{-1}` equals the control reproduction number.
pub fn next_generation_matrices(p: &Parameters) -> Result<([[f64; 3]; 3], [[f64; 3]; 3])> {
    let k = p.derived();
    let n1 = effective_susceptible_pool(p)?;
    let n0 = p.lambda_rec / p.mu;
    let ratio = n1 / n0;
    let z = [
        [0.0, p.beta * ratio, p.beta * p.eta * ratio],
        [0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0],
    ];
    let w = [
        [k.k3, 0.0, 0.0],
        [-p.p * p.gamma, k.k4, 0.0],
        [-p.q() * p.gamma, -p.a2() * p.sigma, k.k5],
    ];
    Ok((z, w))
}

/// Margin of the sufficient condition for attraction to the disease-free
/// state: `N1/N0 - (s + phi1*v + phi2*r)/n`. Nonnegative margin indicates the
/// condition holds at this state; reported as a diagnostic, never assumed.
pub fn dfe_attraction_margin(p: &Parameters, st: &CompartmentState) -> Result<f64> {
    let n = st.total();
    if n <= 0.0 {
        return Err(EpiError::Degenerate(
            "margin undefined for zero total population".into(),
        ));
    }
    let n1 = effective_susceptible_pool(p)?;
    let n0 = p.lambda_rec / p.mu;
    Ok(n1 / n0 - (st.s + p.phi1 * st.v + p.phi2 * st.r) / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn germany() -> Parameters {
        presets::germany().parameters
    }

    #[test]
    fn force_of_infection_direct_arithmetic() {
        let mut p = germany();
        p.beta = 1.0;
        p.eta = 0.5;
        let st = CompartmentState {
            s: 40.0,
            v: 20.0,
            e: 10.0,
            a: 10.0,
            i: 20.0,
            r: 0.0,
        };
        assert_eq!(st.total(), 100.0);
        assert!((force_of_infection(&p, p.beta, &st).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn force_of_infection_zero_without_infectious() {
        let p = germany();
        let st = CompartmentState {
            s: 100.0,
            v: 50.0,
            ..CompartmentState::ZERO
        };
        assert_eq!(force_of_infection(&p, p.beta, &st).unwrap(), 0.0);
    }

    #[test]
    fn force_of_infection_saturates_at_beta() {
        let mut p = germany();
        p.eta = 1.0;
        let st = CompartmentState {
            a: 30.0,
            i: 70.0,
            ..CompartmentState::ZERO
        };
        let lam = force_of_infection(&p, p.beta, &st).unwrap();
        assert!((lam - p.beta).abs() < 1e-15 * p.beta.abs().max(1.0));
    }

    #[test]
    fn force_of_infection_rejects_empty_population() {
        let p = germany();
        assert!(force_of_infection(&p, p.beta, &CompartmentState::ZERO).is_err());
    }

    #[test]
    fn rhs_vanishes_at_dfe() {
        let p = germany();
        let dfe = disease_free_equilibrium(&p).unwrap();
        let d = rhs(&p, p.beta, &dfe).unwrap();
        let scale = p.lambda_rec;
        assert!(d.max_abs() < 1e-9 * scale, "residual {}", d.max_abs());
    }

    #[test]
    fn rhs_component_sum_telescopes() {
        let p = germany();
        let st = presets::germany().initial_state;
        let d = rhs(&p, p.beta, &st).unwrap();
        let sum = d.to_array().iter().sum::<f64>();
        let expected = p.lambda_rec - p.mu * st.total() - p.delta * st.i;
        // The individual flows are of order c1*S, so the cancellation in the
        // telescoping sum leaves roundoff proportional to the population.
        assert!(
            (sum - expected).abs() <= 1e-12 * st.total(),
            "sum {sum} vs balance {expected}"
        );
    }

    #[test]
    fn rhs_matches_term_by_term_transcription() {
        // Oracle: each equation evaluated separately from the raw parameters,
        // without the composite-rate shortcuts used by the implementation.
        let p = germany();
        let st = presets::germany().initial_state;
        let n = st.total();
        let lam = p.beta * (st.a + p.eta * st.i) / n;
        let expected = [
            p.r1 * p.lambda_rec + p.c2 * st.v - lam * st.s - p.c1 * st.s - p.mu * st.s,
            (1.0 - p.r1) * p.lambda_rec + p.c1 * st.s
                - p.phi1 * lam * st.v
                - p.c2 * st.v
                - p.mu * st.v,
            lam * st.s + p.phi1 * lam * st.v + p.phi2 * lam * st.r - p.mu * st.e - p.gamma * st.e,
            p.p * p.gamma * st.e - p.mu * st.a - p.sigma * st.a,
            (1.0 - p.p) * p.gamma * st.e + (1.0 - p.a1) * p.sigma * st.a
                - p.mu * st.i
                - p.delta * st.i
                - p.theta * st.i,
            p.a1 * p.sigma * st.a + p.theta * st.i - p.phi2 * lam * st.r - p.mu * st.r,
        ];
        let got = rhs(&p, p.beta, &st).unwrap().to_array();
        for (g, e) in got.iter().zip(expected) {
            assert!(
                (g - e).abs() <= 1e-12 * e.abs().max(1.0),
                "component {g} vs oracle {e}"
            );
        }
    }

    #[test]
    fn dfe_sums_to_carrying_capacity() {
        let p = germany();
        let dfe = disease_free_equilibrium(&p).unwrap();
        let n0 = p.lambda_rec / p.mu;
        assert!(((dfe.s + dfe.v) - n0).abs() <= 1e-12 * n0);
    }

    #[test]
    fn dfe_without_vaccination_pathway() {
        let mut p = germany();
        p.c1 = 0.0;
        p.r1 = 1.0;
        let dfe = disease_free_equilibrium(&p).unwrap();
        let n0 = p.lambda_rec / p.mu;
        assert!(dfe.v.abs() <= 1e-12 * n0);
        assert!((dfe.s - n0).abs() <= 1e-12 * n0);
    }

    #[test]
    fn dfe_matches_long_integration_of_susceptible_subsystem() {
        // Oracle: integrate the infection-free S/V planar system with a fixed
        // fourth-order step to a long horizon and compare the steady state.
        let p = germany();
        let f = |s: f64, v: f64| {
            (
                p.r1 * p.lambda_rec + p.c2 * v - (p.c1 + p.mu) * s,
                p.r2() * p.lambda_rec + p.c1 * s - (p.mu + p.c2) * v,
            )
        };
        let (mut s, mut v) = (1.0e7, 0.0);
        let dt = 0.5;
        for _ in 0..2_000_000 {
            let (k1s, k1v) = f(s, v);
            let (k2s, k2v) = f(s + 0.5 * dt * k1s, v + 0.5 * dt * k1v);
            let (k3s, k3v) = f(s + 0.5 * dt * k2s, v + 0.5 * dt * k2v);
            let (k4s, k4v) = f(s + dt * k3s, v + dt * k3v);
            s += dt / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s);
            v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        }
        let dfe = disease_free_equilibrium(&p).unwrap();
        assert!((s - dfe.s).abs() <= 1e-7 * dfe.s, "S {s} vs {}", dfe.s);
        assert!((v - dfe.v).abs() <= 1e-7 * dfe.v, "V {v} vs {}", dfe.v);
    }

    #[test]
    fn reproduction_number_vanishes_without_transmission() {
        let mut p = germany();
        p.beta = 0.0;
        assert_eq!(control_reproduction_number(&p).unwrap(), 0.0);
    }

    #[test]
    fn reproduction_number_is_linear_in_beta() {
        let p = germany();
        let base = control_reproduction_number(&p).unwrap();
        for c in [0.25, 0.5, 2.0, 7.5] {
            let scaled = control_reproduction_number_with_beta(&p, p.beta * c).unwrap();
            assert!((scaled - c * base).abs() <= 1e-12 * scaled.abs());
        }
    }

    #[test]
    fn critical_beta_normalizes_reproduction_number() {
        let mut p = germany();
        let bc = beta_critical(&p).unwrap();
        p.beta = bc;
        let rc = control_reproduction_number(&p).unwrap();
        assert!((rc - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn generation_matrices_structure() {
        let p = germany();
        let (z, w) = next_generation_matrices(&p).unwrap();
        assert_eq!(z[1], [0.0; 3]);
        assert_eq!(z[2], [0.0; 3]);
        assert_eq!(z[0][0], 0.0);
        assert!((z[0][2] / z[0][1] - p.eta).abs() < 1e-15);
        let k = p.derived();
        assert_eq!((w[0][0], w[1][1], w[2][2]), (k.k3, k.k4, k.k5));
        assert_eq!((w[0][1], w[0][2], w[1][2]), (0.0, 0.0, 0.0));
        let mut pz = germany();
        pz.beta = 0.0;
        let (z0, _) = next_generation_matrices(&pz).unwrap();
        assert_eq!(z0, [[0.0; 3]; 3]);
    }

    #[test]
    fn generation_matrix_spectral_radius_matches_closed_form() {
        // Oracle: power iteration on the explicit 3x3 product Z * W^{-1}.
        let p = germany();
        let (z, w) = next_generation_matrices(&p).unwrap();
        let winv = invert_lower_triangular(&w);
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for (l, wr) in winv.iter().enumerate() {
                    m[i][j] += z[i][l] * wr[j];
                }
            }
        }
        let mut x = [1.0, 1.0, 1.0];
        let mut rho = 0.0;
        for _ in 0..500 {
            let y = [
                m[0][0] * x[0] + m[0][1] * x[1] + m[0][2] * x[2],
                m[1][0] * x[0] + m[1][1] * x[1] + m[1][2] * x[2],
                m[2][0] * x[0] + m[2][1] * x[1] + m[2][2] * x[2],
            ];
            let norm = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
            if norm == 0.0 {
                rho = 0.0;
                break;
            }
            rho = norm / (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
            x = [y[0] / norm, y[1] / norm, y[2] / norm];
        }
        let rc = control_reproduction_number(&p).unwrap();
        assert!((rho - rc).abs() <= 1e-10 * rc, "rho {rho} vs rc {rc}");
    }

    #[test]
    fn transition_matrix_inverse_matches_explicit_form() {
        // The explicit inverse of the lower-triangular transition block.
        let draws = [
            (0.3_f64, 0.7_f64, 1.1_f64),
            (0.017, 0.14, 0.56),
            (2.0, 3.0, 4.0),
        ];
        for (k3, k4, k5) in draws {
            let mut p = germany();
            p.gamma = k3 - p.mu;
            p.sigma = k4 - p.mu;
            p.theta = k5 - p.mu - p.delta;
            let k = p.derived();
            assert!((k.k3 - k3).abs() < 1e-15);
            let (_, w) = next_generation_matrices(&p).unwrap();
            let winv = invert_lower_triangular(&w);
            let pg = p.p * p.gamma;
            let qg = p.q() * p.gamma;
            let a2s = p.a2() * p.sigma;
            let expected = [
                [1.0 / k3, 0.0, 0.0],
                [pg / (k3 * k4), 1.0 / k4, 0.0],
                [
                    (a2s * pg + k4 * qg) / (k3 * k4 * k5),
                    a2s / (k4 * k5),
                    1.0 / k5,
                ],
            ];
            for i in 0..3 {
                for j in 0..3 {
                    assert!(
                        (winv[i][j] - expected[i][j]).abs()
                            <= 1e-12 * expected[i][j].abs().max(1.0),
                        "entry ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn attraction_margin_nonnegative_at_dfe() {
        let p = germany();
        let dfe = disease_free_equilibrium(&p).unwrap();
        let margin = dfe_attraction_margin(&p, &dfe).unwrap();
        assert!(margin.abs() < 1e-12);
        let st = CompartmentState {
            s: 1.0e6,
            v: 1.0e6,
            e: 1.0e5,
            a: 1.0e5,
            i: 1.0e5,
            r: 8.0e7,
        };
        assert!(dfe_attraction_margin(&p, &st).unwrap() > 0.0);
    }

    fn invert_lower_triangular(w: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut inv = [[0.0; 3]; 3];
        for col in 0..3 {
            let mut rhs = [0.0; 3];
            rhs[col] = 1.0;
            for row in 0..3 {
                let mut acc = rhs[row];
                for j in 0..row {
                    acc -= w[row][j] * inv[j][col];
                }
                inv[row][col] = acc / w[row][row];
            }
        }
        inv
    }
}
