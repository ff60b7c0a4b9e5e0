//! Circuit parameters and their dimensionless counterparts.
//!
//! Energies are stored as E/h in GHz, angular frequencies in rad/s. Under the
//! rescaling t̃ = ω_d t the transmon Hamiltonian divided by ħω_d reads
//! ħ_eff (n − n_g)²/2 − (λ/ħ_eff) cos(φ − ξ_d sin t̃), so one unit of the
//! dimensionless generator corresponds to one drive quantum ħω_d.

use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Drive period in rescaled time.
pub const PERIOD: f64 = 2.0 * PI;

/// Converts an angular frequency in rad/s to a frequency in GHz.
fn ghz(omega: f64) -> f64 {
    omega / (2.0 * PI) * 1e-9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitParams {
    /// Josephson energy, E_J/h in GHz.
    #[serde(rename = "E_J")]
    pub e_j: f64,
    /// Charging energy, E_C/h in GHz.
    #[serde(rename = "E_C")]
    pub e_c: f64,
    /// Drive amplitude ε_d in rad/s.
    pub eps_d: f64,
    /// Drive angular frequency in rad/s.
    pub omega_d: f64,
    /// TLS angular frequency in rad/s.
    pub omega_q: f64,
    /// TLS–transmon coupling in rad/s.
    pub g: f64,
    #[serde(default)]
    pub n_g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// (ω_p/ω_d)²
    pub lambda: f64,
    /// ε_d/ω_d
    pub xi_d: f64,
    /// 8E_C/(ħω_d)
    pub hbar_eff: f64,
    /// ω_q/ω_d
    #[serde(default)]
    pub omega_q_t: f64,
    /// ħg/(8E_C)
    #[serde(default)]
    pub g_t: f64,
    #[serde(default)]
    pub n_g: f64,
}

impl CircuitParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.e_j, self.e_c, self.eps_d, self.omega_d, self.omega_q, self.g, self.n_g];
        if all.iter().any(|v| !v.is_finite()) {
            return invalid("circuit parameters must be finite");
        }
        if self.omega_d <= 0.0 {
            return invalid("omega_d must be positive");
        }
        if self.e_j <= 0.0 || self.e_c <= 0.0 {
            return invalid("E_J and E_C must be positive");
        }
        if self.eps_d < 0.0 || self.g < 0.0 {
            return invalid("eps_d and g must be non-negative");
        }
        Ok(())
    }

    /// Plasma frequency √(8E_C E_J)/h in GHz.
    pub fn plasma_ghz(&self) -> f64 {
        (8.0 * self.e_c * self.e_j).sqrt()
    }
}

/// Exact map from circuit to dimensionless parameters.
pub fn rescale(c: &CircuitParams) -> Result<ModelParams> {
    c.validate()?;
    let f_d = ghz(c.omega_d);
    Ok(ModelParams {
        lambda: 8.0 * c.e_j * c.e_c / (f_d * f_d),
        xi_d: c.eps_d / c.omega_d,
        hbar_eff: 8.0 * c.e_c / f_d,
        omega_q_t: c.omega_q / c.omega_d,
        g_t: ghz(c.g) / (8.0 * c.e_c),
        n_g: c.n_g.rem_euclid(1.0),
    })
}

impl ModelParams {
    /// λ = 0.47, ħ_eff = 0.16, ξ_d = 2.5, ω̃_q = 1/√2, g̃ = 0.01.
    pub fn reference() -> Self {
        ModelParams {
            lambda: 0.47,
            xi_d: 2.5,
            hbar_eff: 0.16,
            omega_q_t: std::f64::consts::FRAC_1_SQRT_2,
            g_t: 0.01,
            n_g: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda, self.xi_d, self.hbar_eff, self.omega_q_t, self.g_t, self.n_g];
        if all.iter().any(|v| !v.is_finite()) {
            return invalid("model parameters must be finite");
        }
        if self.lambda <= 0.0 {
            return invalid("lambda must be positive");
        }
        if self.hbar_eff <= 0.0 {
            return invalid("hbar_eff must be positive");
        }
        if self.xi_d < 0.0 {
            return invalid("xi_d must be non-negative");
        }
        Ok(())
    }

    pub fn with_xi(mut self, xi_d: f64) -> Self {
        self.xi_d = xi_d;
        self
    }

    pub fn with_n_g(mut self, n_g: f64) -> Self {
        self.n_g = n_g.rem_euclid(1.0);
        self
    }

    pub fn with_g(mut self, g_t: f64) -> Self {
        self.g_t = g_t;
        self
    }

    pub fn with_omega_q(mut self, omega_q_t: f64) -> Self {
        self.omega_q_t = omega_q_t;
        self
    }

    /// Inverse of [`rescale`] for a chosen charging energy (GHz).
    pub fn to_circuit(&self, e_c: f64) -> Result<CircuitParams> {
        self.validate()?;
        if !(e_c > 0.0) {
            return invalid("E_C must be positive");
        }
        let f_d = 8.0 * e_c / self.hbar_eff;
        let omega_d = 2.0 * PI * f_d * 1e9;
        Ok(CircuitParams {
            e_j: self.lambda * f_d * f_d / (8.0 * e_c),
            e_c,
            eps_d: self.xi_d * omega_d,
            omega_d,
            omega_q: self.omega_q_t * omega_d,
            g: self.g_t * 8.0 * e_c * 2.0 * PI * 1e9,
            n_g: self.n_g,
        })
    }

    /// Approximate number of states bound in the cosine well, 2√λ/ħ_eff.
    pub fn bound_state_count(&self) -> f64 {
        2.0 * self.lambda.sqrt() / self.hbar_eff
    }
}

/// Drive frequency in GHz implied by a charging energy: 8E_C/ħ_eff.
pub fn drive_ghz(hbar_eff: f64, e_c: f64) -> f64 {
    8.0 * e_c / hbar_eff
}

/// `count` uniformly spaced values in [0, 0.5], endpoints included.
pub fn n_g_grid(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count).map(|i| 0.5 * i as f64 / (count - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_circuit() -> CircuitParams {
        let f_d = 6.85 / 0.47f64.sqrt();
        CircuitParams {
            e_j: 29.37,
            e_c: 0.2,
            eps_d: 0.0,
            omega_d: 2.0 * PI * f_d * 1e9,
            omega_q: 0.0,
            g: 2.0 * PI * 16e6,
            n_g: 0.0,
        }
    }

    #[test]
    fn plasma_frequency() {
        assert!((reference_circuit().plasma_ghz() - 6.85).abs() < 0.01);
    }

    #[test]
    fn reference_pair() {
        let m = rescale(&reference_circuit()).unwrap();
        assert!((m.lambda - 0.47).abs() < 1e-3, "{}", m.lambda);
        assert!((m.hbar_eff - 0.160).abs() < 1e-3, "{}", m.hbar_eff);
        assert!((m.g_t - 0.01).abs() < 1e-12);
        assert_eq!(m.xi_d, 0.0);
    }

    #[test]
    fn zero_drive_frequency_rejected() {
        let mut c = reference_circuit();
        c.omega_d = 0.0;
        assert!(matches!(rescale(&c), Err(crate::LabError::InvalidParameter(_))));
    }

    #[test]
    fn bound_states() {
        let m = ModelParams { lambda: 0.47, hbar_eff: 0.16, ..ModelParams::reference() };
        assert!((m.bound_state_count() - 8.5696).abs() < 1e-3);
        let m = ModelParams { lambda: 0.25, hbar_eff: 1.0, ..m };
        assert!((m.bound_state_count() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn grid_endpoints() {
        let g = n_g_grid(50);
        assert_eq!(g.len(), 50);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[49], 0.5);
    }
}
