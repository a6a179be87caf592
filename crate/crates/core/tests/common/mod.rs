//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rydcorr_core::model::SystemSpec;

/// Steady-state excited population of a resonantly driven two-level atom
/// with `H = -omega (|e><g| + |g><e|)` and unit decay rate.
pub fn two_level_excitation(omega: f64) -> f64 {
    4.0 * omega * omega / (1.0 + 8.0 * omega * omega)
}

/// Closed-form resonance-fluorescence g2 (valid for `4 omega > 1/4`).
pub fn two_level_g2_closed_form(omega: f64, tau: f64) -> f64 {
    let mu = ((2.0 * omega).powi(2) - 1.0 / 16.0).sqrt();
    1.0 - (-0.75 * tau).exp() * ((mu * tau).cos() + 0.75 / mu * (mu * tau).sin())
}

/// Optical Bloch equations in `(rho_ee, Re rho_eg, Im rho_eg)`.
fn bloch_rhs(omega: f64, y: [f64; 3]) -> [f64; 3] {
    let [p, x, v] = y;
    [2.0 * omega * v - p, -0.5 * x, omega * (1.0 - 2.0 * p) - 0.5 * v]
}

fn rk4(omega: f64, y: [f64; 3], h: f64) -> [f64; 3] {
    let add = |a: [f64; 3], b: [f64; 3], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
    let k1 = bloch_rhs(omega, y);
    let k2 = bloch_rhs(omega, add(y, k1, h / 2.0));
    let k3 = bloch_rhs(omega, add(y, k2, h / 2.0));
    let k4 = bloch_rhs(omega, add(y, k3, h));
    let mut out = y;
    for i in 0..3 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Two-level g2 by fine-step RK4: after a click the atom is in `|g>`, so
/// `g2(tau) = rho_ee(tau | ground) / rho_ee(ss)`.
pub fn two_level_g2_bloch(omega: f64, grid: &[f64]) -> Vec<f64> {
    const H: f64 = 1e-3;
    let ss = two_level_excitation(omega);
    let mut y = [0.0; 3];
    let mut t = 0.0;
    grid.iter()
        .map(|&target| {
            let n = ((target - t) / H).ceil() as usize;
            if n > 0 {
                let h = (target - t) / n as f64;
                for _ in 0..n {
                    y = rk4(omega, y, h);
                }
            }
            t = target;
            y[0] / ss
        })
        .collect()
}

/// Two blockaded atoms with a weak probe, the bunching scenario.
pub fn blockaded_pair() -> SystemSpec {
    SystemSpec::blockaded(2, 0.2, 1.0, 2.0)
}

/// Upper 99% quantile of chi-squared with `k` degrees of freedom
/// (Wilson-Hilferty).
pub fn chi2_quantile_99(k: usize) -> f64 {
    let k = k as f64;
    let a = 2.0 / (9.0 * k);
    k * (1.0 - a + 2.326_347_874 * a.sqrt()).powi(3)
}
