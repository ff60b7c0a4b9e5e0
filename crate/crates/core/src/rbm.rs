//! Reflected Brownian motion on [−p̄, p̄] as a surrogate for chaotic
//! momentum diffusion: folding map, paths, correlation, spectrum and the
//! Fermi-Golden-Rule rates it induces on a coupled TLS.

use crate::error::{invalid, Result};
use crate::exec;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbmParams {
    /// Diffusion rate D.
    #[serde(rename = "D")]
    pub d: f64,
    pub p_bar: f64,
    pub dt: f64,
    pub seed: u64,
}

impl RbmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d > 0.0 && self.p_bar > 0.0 && self.dt > 0.0) {
            return invalid("RBM needs D > 0, p_bar > 0, dt > 0");
        }
        Ok(())
    }

    /// Slowest relaxation rate a = π²D/(8p̄²).
    pub fn a(&self) -> f64 {
        base_rate(self.d, self.p_bar)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoisePath {
    pub dt: f64,
    pub values: Vec<f64>,
    pub params: RbmParams,
}

impl NoisePath {
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }
}

/// Reflection of the real line onto [−p̄, p̄]; period 4p̄.
pub fn fold(r: f64, p_bar: f64) -> f64 {
    let s = (r + p_bar).rem_euclid(4.0 * p_bar) - p_bar;
    if s > p_bar {
        2.0 * p_bar - s
    } else {
        s
    }
}

/// Path sampled every `dt` up to `t_end` from `initial_p`, driven by the
/// random stream `stream` of the run seed.
pub fn generate_path_stream(params: &RbmParams, t_end: f64, initial_p: f64, stream: u64) -> Result<NoisePath> {
    params.validate()?;
    if initial_p.abs() > params.p_bar {
        return invalid("initial_p must lie in [-p_bar, p_bar]");
    }
    let n = (t_end / params.dt).round() as usize;
    let mut rng = exec::stream_rng(params.seed, stream);
    let sigma = (params.d * params.dt).sqrt();
    let mut r = initial_p;
    let mut values = Vec::with_capacity(n + 1);
    values.push(fold(r, params.p_bar));
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        r += sigma * z;
        values.push(fold(r, params.p_bar));
    }
    Ok(NoisePath { dt: params.dt, values, params: *params })
}

pub fn generate_path(params: &RbmParams, t_end: f64, initial_p: f64) -> Result<NoisePath> {
    generate_path_stream(params, t_end, initial_p, 0)
}

/// Starting point drawn from the stationary (uniform) law, on its own stream.
pub fn stationary_start(params: &RbmParams, stream: u64) -> f64 {
    let mut rng = exec::stream_rng(exec::derive_seed(params.seed, 0x5747_4152), stream);
    params.p_bar * (2.0 * rng.random::<f64>() - 1.0)
}

fn base_rate(d: f64, p_bar: f64) -> f64 {
    PI * PI * d / (8.0 * p_bar * p_bar)
}

/// Amplitude of the n-th (odd) mode of the correlation series.
fn amp(p_bar: f64, n: usize) -> f64 {
    let nf = n as f64;
    32.0 * p_bar * p_bar / (PI.powi(4) * nf.powi(4))
}

/// Stationary autocorrelation E[p₀p_τ] summed over odd n ≤ n_terms.
pub fn correlation(d: f64, p_bar: f64, tau: f64, n_terms: usize) -> f64 {
    let a = base_rate(d, p_bar);
    (1..=n_terms)
        .step_by(2)
        .map(|n| amp(p_bar, n) * (-((n * n) as f64) * a * tau.abs()).exp())
        .sum()
}

/// Power spectral density S(ω) = ∫ C(τ) e^{−iωτ} dτ of the truncated series.
pub fn psd(d: f64, p_bar: f64, omega: f64, n_terms: usize) -> f64 {
    let a = base_rate(d, p_bar);
    (1..=n_terms)
        .step_by(2)
        .map(|n| {
            let an = (n * n) as f64 * a;
            amp(p_bar, n) * 2.0 * an / (omega * omega + an * an)
        })
        .sum()
}

/// Two-term spectrum in closed form
/// (32p̄²/π⁴)[2a/(ω²+a²) + 18a/(ω²+81a²)].
pub fn psd_two_term_closed(d: f64, p_bar: f64, omega: f64) -> f64 {
    let a = base_rate(d, p_bar);
    let w2 = omega * omega;
    32.0 * p_bar * p_bar / PI.powi(4) * (2.0 * a / (w2 + a * a) + 18.0 * a / (w2 + 81.0 * a * a))
}

/// Series terms used for the normative rates.
pub const RATE_TERMS: usize = 3;

/// (γ↓, γ↑) = g̃² S(ω̃_q), equal by evenness of S.
pub fn fgr_rates(g_t: f64, omega_q_t: f64, d: f64, p_bar: f64) -> (f64, f64) {
    let g = g_t * g_t * psd(d, p_bar, omega_q_t, RATE_TERMS);
    (g, g)
}

/// Rate from a closed-form two-term expression
/// (512/π²)[g²p̄⁴D/(ω²p̄⁴+π⁴D²) + g²p̄⁴D/(ω²p̄⁴/9+9π⁴D²)].
pub fn fgr_closed_form(g_t: f64, omega_q_t: f64, d: f64, p_bar: f64) -> f64 {
    let g2 = g_t * g_t;
    let w2 = omega_q_t * omega_q_t;
    let p4 = p_bar.powi(4);
    let pi4 = PI.powi(4);
    512.0 / (PI * PI) * (g2 * p4 * d / (w2 * p4 + pi4 * d * d) + g2 * p4 * d / (w2 * p4 / 9.0 + 9.0 * pi4 * d * d))
}

/// Ratio of the closed-form rate to [`fgr_rates`].
pub fn fgr_closed_form_ratio(omega_q_t: f64, d: f64, p_bar: f64) -> f64 {
    fgr_closed_form(1.0, omega_q_t, d, p_bar) / fgr_rates(1.0, omega_q_t, d, p_bar).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_branches() {
        let p = 1.7;
        for &r in &[-1.7, -0.3, 0.0, 1.2, 1.7] {
            assert!((fold(r, p) - r).abs() < 1e-15);
        }
        for &delta in &[0.1, 1.0, 3.3] {
            assert!((fold(p + delta, p) - (p - delta)).abs() < 1e-12);
        }
        // branch form: (4k+2)p̄ − r on [(4k+1)p̄, (4k+3)p̄]
        let r = 9.0 * p + 0.4;
        assert!((fold(r, p) - (10.0 * p - r)).abs() < 1e-12);
        assert!(fold(-6.0 * p, p).abs() < 1e-12);
    }

    #[test]
    fn correlation_at_zero() {
        let p = 2.3;
        let exact = p * p / 3.0;
        // truncation error measured in units of p̄²
        assert!((correlation(0.1, p, 0.0, 41) - exact).abs() < 1e-6 * p * p);
        let two = correlation(0.1, p, 0.0, 3) / (p * p);
        assert!((two - 0.33257).abs() < 5e-6, "{two}");
        assert!(correlation(0.1, p, 1e6, 41) < 1e-300);
    }

    #[test]
    fn psd_even_and_zero_frequency() {
        let (d, p) = (0.088, 4.37);
        assert_eq!(psd(d, p, 0.3, 41), psd(d, p, -0.3, 41));
        // series oracle at ω = 0: Σ_odd A_n·2/(n²a)
        let a = PI * PI * d / (8.0 * p * p);
        let mut s = 0.0;
        let mut n = 1;
        while n <= 41 {
            let nf = n as f64;
            s += 32.0 * p * p / (PI.powi(4) * nf.powi(4)) * 2.0 / (nf * nf * a);
            n += 2;
        }
        assert!((psd(d, p, 0.0, 41) - s).abs() < 1e-12 * s);
        // closed form of the full series: 8p̄⁴/(15D)
        let full = 8.0 * p.powi(4) / (15.0 * d);
        assert!((psd(d, p, 0.0, 2001) - full).abs() < 1e-9 * full);
    }

    #[test]
    fn closed_forms_match_where_expected() {
        // the first terms coincide; only the n = 3 coefficient differs
        let (d, p) = (0.1, 3.0);
        let a = PI * PI * d / (8.0 * p * p);
        let w = 50.0 * a;
        let series_first = psd(d, p, w, 1);
        let closed_first = 32.0 * p * p / PI.powi(4) * 2.0 * a / (w * w + a * a);
        assert!((series_first - closed_first).abs() < 1e-15);
        assert!(fgr_rates(0.0, 0.7, d, p).0 == 0.0);
    }

    #[test]
    fn tiny_diffusion_path_is_constant() {
        let prm = RbmParams { d: 1e-12, p_bar: 2.0, dt: 0.05, seed: 3 };
        let path = generate_path(&prm, 100.0, 0.7).unwrap();
        assert!(path.values.iter().all(|v| (v - 0.7).abs() < 1e-4));
    }
}
