//! Analytic chaos criteria for the driven pendulum: Bessel functions,
//! resonance separatrices, the Chirikov overlap bound p̄ of the chaotic
//! layer, drive thresholds, diffusion and localization estimates.

use crate::error::{invalid, LabError, Result};
use crate::params::PERIOD;
use serde::Serialize;
use std::f64::consts::PI;

pub const BESSEL_ORDER_MAX: usize = 200;
pub const BESSEL_ARG_MAX: f64 = 1000.0;

/// Resonances narrower than this (in |J_m|) are treated as absent.
pub const EPS_WIDTH: f64 = 1e-8;
/// Overlap margins below this are resolved as non-overlap and flagged.
pub const TANGENT_TOL: f64 = 1e-9;

/// Chaos is declared when kT exceeds this critical value.
pub const K_CRIT: f64 = 1.0;

/// J_0(x) … J_{m_max}(x) by Miller's downward recurrence, normalized with
/// J_0 + 2 Σ J_{2k} = 1.
pub fn bessel_j_all(m_max: usize, x: f64) -> Result<Vec<f64>> {
    if m_max > BESSEL_ORDER_MAX || !(0.0..=BESSEL_ARG_MAX).contains(&x) {
        return Err(LabError::Range(format!(
            "bessel_j needs m <= {BESSEL_ORDER_MAX} and 0 <= x <= {BESSEL_ARG_MAX}, got m={m_max}, x={x}"
        )));
    }
    let mut out = vec![0.0; m_max + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return Ok(out);
    }
    let top = (m_max as f64).max(x);
    let start = 2 * ((top as usize + (160.0 * top).sqrt() as usize + 20) / 2);
    let mut j = vec![0.0; start + 2];
    j[start] = 1e-30;
    let two_over_x = 2.0 / x;
    for k in (1..=start).rev() {
        j[k - 1] = k as f64 * two_over_x * j[k] - j[k + 1];
        if j[k - 1].abs() > 1e250 {
            for v in &mut j[k - 1..] {
                *v *= 1e-250;
            }
        }
    }
    let mut norm = j[0];
    for k in (2..=start).step_by(2) {
        norm += 2.0 * j[k];
    }
    for (m, o) in out.iter_mut().enumerate() {
        *o = j[m] / norm;
    }
    Ok(out)
}

pub fn bessel_j(m: usize, x: f64) -> Result<f64> {
    Ok(bessel_j_all(m, x)?[m])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResonanceCurve {
    pub m: i64,
    /// Full momentum width Δp_m = 4√(λ|J_m(ξ_d)|).
    pub width: f64,
    pub upper_at_zero: f64,
    pub lower_at_zero: f64,
}

impl ResonanceCurve {
    /// Separatrix branches p_m^±(ψ) = m ± √(2λ|J_m|(1 + cos ψ)).
    pub fn separatrix(&self, psi: f64) -> (f64, f64) {
        let half = 0.5 * self.width * (0.5 * (1.0 + psi.cos())).sqrt();
        (self.m as f64 + half, self.m as f64 - half)
    }
}

fn half_width(lambda: f64, jm: f64) -> f64 {
    2.0 * (lambda * jm.abs()).sqrt()
}

/// Resonances 0 ≤ m ≤ m_max in the upper half plane.
pub fn resonance_curves(lambda: f64, xi_d: f64, m_max: usize) -> Result<Vec<ResonanceCurve>> {
    if !(lambda > 0.0) || !(xi_d >= 0.0) {
        return invalid("resonance_curves needs lambda > 0 and xi_d >= 0");
    }
    let j = bessel_j_all(m_max, xi_d)?;
    Ok(j.iter()
        .enumerate()
        .map(|(m, &jm)| {
            let h = half_width(lambda, jm);
            ResonanceCurve {
                m: m as i64,
                width: 2.0 * h,
                upper_at_zero: m as f64 + h,
                lower_at_zero: m as f64 - h,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChaoticLayer {
    pub p_bar: f64,
    pub m_bar: Option<usize>,
    /// Overlap result for each adjacent pair (m, m+1) examined.
    pub overlaps: Vec<bool>,
    /// Set when the scan stopped on a near-tangent pair.
    pub near_tangent: bool,
}

impl ChaoticLayer {
    fn empty() -> Self {
        ChaoticLayer { p_bar: 0.0, m_bar: None, overlaps: Vec::new(), near_tangent: false }
    }
}

fn default_m_max(xi_d: f64) -> usize {
    ((2.0 * xi_d).ceil() as usize + 20).min(BESSEL_ORDER_MAX)
}

/// Upper boundary of the chaotic layer from the resonance-overlap criterion.
pub fn chaotic_layer_bound(lambda: f64, xi_d: f64) -> Result<ChaoticLayer> {
    chaotic_layer_bound_with(lambda, xi_d, default_m_max(xi_d))
}

pub fn chaotic_layer_bound_with(lambda: f64, xi_d: f64, m_max: usize) -> Result<ChaoticLayer> {
    if !(lambda > 0.0) || !(xi_d >= 0.0) {
        return invalid("chaotic_layer_bound needs lambda > 0 and xi_d >= 0");
    }
    if xi_d == 0.0 {
        return Ok(ChaoticLayer::empty());
    }
    let j = bessel_j_all(m_max, xi_d)?;
    let mut overlaps = Vec::new();
    let mut near_tangent = false;
    let mut m_bar = None;
    for m in 0..m_max {
        let (a, b) = (j[m], j[m + 1]);
        let present = a.abs() >= EPS_WIDTH && b.abs() >= EPS_WIDTH;
        let margin = (m as f64 + half_width(lambda, a)) - (m as f64 + 1.0 - half_width(lambda, b));
        let tangent = present && margin.abs() < TANGENT_TOL;
        let ok = present && margin > 0.0 && !tangent;
        overlaps.push(ok);
        if !ok {
            near_tangent = tangent;
            break;
        }
        m_bar = Some(m + 1);
    }
    if m_bar == Some(m_max) {
        return Err(LabError::Accuracy(format!(
            "overlap scan reached m_max = {m_max} at xi_d = {xi_d}"
        )));
    }
    let p_bar = match m_bar {
        Some(mb) => mb as f64 + half_width(lambda, j[mb]),
        None => 0.0,
    };
    Ok(ChaoticLayer { p_bar, m_bar, overlaps, near_tangent })
}

/// Lower boundary from an explicit scan over negative resonance indices.
/// By J_{−m} = (−1)^m J_m this is the mirror image of the upper scan.
pub fn chaotic_layer_bound_lower(lambda: f64, xi_d: f64) -> Result<f64> {
    if !(lambda > 0.0) || !(xi_d >= 0.0) {
        return invalid("chaotic_layer_bound needs lambda > 0 and xi_d >= 0");
    }
    if xi_d == 0.0 {
        return Ok(0.0);
    }
    let m_max = default_m_max(xi_d);
    let j = bessel_j_all(m_max, xi_d)?;
    let jneg = |m: usize| if m % 2 == 0 { j[m] } else { -j[m] };
    let mut bound = 0.0;
    for m in 0..m_max {
        let (a, b) = (jneg(m), jneg(m + 1));
        if a.abs() < EPS_WIDTH || b.abs() < EPS_WIDTH {
            break;
        }
        // resonance at p = −m; its lower branch against the upper branch of −(m+1)
        let lower_m = -(m as f64) - half_width(lambda, a);
        let upper_next = -(m as f64 + 1.0) + half_width(lambda, b);
        let margin = upper_next - lower_m;
        if margin <= 0.0 || margin.abs() < TANGENT_TOL {
            break;
        }
        bound = -(m as f64 + 1.0) - half_width(lambda, b);
    }
    Ok(bound)
}

/// Outcome of a drive-threshold search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Threshold {
    Root(f64),
    /// The residual stays positive on the whole search interval.
    None,
}

impl Threshold {
    pub fn value(self) -> Option<f64> {
        match self {
            Threshold::Root(x) => Some(x),
            Threshold::None => None,
        }
    }
}

const SCAN_LO: f64 = 1e-3;
const SCAN_HI: f64 = 20.0;
const SCAN_STEP: f64 = 1e-2;
const ROOT_TOL: f64 = 1e-6;

fn bisect(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    while b - a > ROOT_TOL {
        let c = 0.5 * (a + b);
        let fc = f(c);
        if (fc <= 0.0) == (fa <= 0.0) {
            a = c;
            fa = fc;
        } else {
            b = c;
        }
    }
    0.5 * (a + b)
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    while b - a > 1e-9 {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

fn scan_grid() -> Vec<f64> {
    let n = ((SCAN_HI - SCAN_LO) / SCAN_STEP).round() as usize;
    (0..=n).map(|i| SCAN_LO + i as f64 * SCAN_STEP).collect()
}

/// First sign change of `f` on the scan grid, refined by bisection.
/// With `touch` set, a positive local minimum of `f` that reaches zero
/// between grid points (tangency) also counts and is refined by golden
/// section.
fn lowest_root(f: &dyn Fn(f64) -> f64, touch: bool) -> Threshold {
    let xs = scan_grid();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    for i in 0..xs.len() - 1 {
        if (fs[i] > 0.0) != (fs[i + 1] > 0.0) {
            return Threshold::Root(bisect(f, xs[i], xs[i + 1]));
        }
        if touch && i > 0 && fs[i] > 0.0 && fs[i] <= fs[i - 1] && fs[i] <= fs[i + 1] {
            let (x, v) = golden_min(f, xs[i - 1], xs[i + 1]);
            if v <= 1e-12 {
                return Threshold::Root(x);
            }
        }
    }
    Threshold::None
}

fn j01(x: f64) -> (f64, f64) {
    let j = bessel_j_all(1, x).expect("scan stays inside the Bessel envelope");
    (j[0], j[1])
}

/// ξ_d^<: smallest root of 1 − 2√(λ|J_1(ξ)|).
pub fn threshold_lower(lambda: f64) -> Result<Threshold> {
    if !(lambda > 0.0) {
        return invalid("lambda must be positive");
    }
    let f = move |x: f64| 1.0 - 2.0 * (lambda * j01(x).1.abs()).sqrt();
    Ok(lowest_root(&f, true))
}

/// ξ_d^>: first root of 1 − 2√(λ|J_1(ξ)|) − 2√(λ|J_0(ξ)|) resolved by the
/// scan grid.
///
/// Right at the first zero of J_0 (ξ ≈ 2.405) the residual has a cusp that
/// pokes above zero over a window of width ~3·10⁻⁴ for λ ≈ 0.47; that
/// window is narrower than the scan step and is deliberately not resolved.
pub fn threshold_upper(lambda: f64) -> Result<Threshold> {
    if !(lambda > 0.0) {
        return invalid("lambda must be positive");
    }
    let f = move |x: f64| {
        let (j0, j1) = j01(x);
        1.0 - 2.0 * (lambda * j1.abs()).sqrt() - 2.0 * (lambda * j0.abs()).sqrt()
    };
    Ok(lowest_root(&f, false))
}

/// Momentum diffusion rate D = λ²/ξ_d.
pub fn diffusion_rate(lambda: f64, xi_d: f64) -> Result<f64> {
    if !(xi_d > 0.0) {
        return invalid("diffusion_rate needs xi_d > 0");
    }
    Ok(lambda * lambda / xi_d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StandardMapK {
    pub k: f64,
    pub k_times_period: f64,
    pub chaotic: bool,
}

/// Kick strength of the approximating standard map, k = 2√π λ/√ξ_d.
pub fn standard_map_k(lambda: f64, xi_d: f64) -> Result<StandardMapK> {
    if !(xi_d > 0.0) {
        return invalid("standard_map_k needs xi_d > 0");
    }
    let k = 2.0 * PI.sqrt() * lambda / xi_d.sqrt();
    Ok(StandardMapK { k, k_times_period: k * PERIOD, chaotic: k * PERIOD > K_CRIT })
}

/// Charge localization length l_n = T D/ħ_eff².
pub fn localization_length(diffusion: f64, hbar_eff: f64) -> f64 {
    PERIOD * diffusion / (hbar_eff * hbar_eff)
}

/// Classical asymptotic momentum spread, uniform on [−p̄, p̄].
pub fn sigma_star_classical(p_bar: f64) -> f64 {
    p_bar / 3f64.sqrt()
}

/// Quantum asymptotic momentum spread of an e^{−|n|/l_n} distribution.
pub fn sigma_star_quantum(hbar_eff: f64, l_n: f64) -> f64 {
    hbar_eff * l_n / 2f64.sqrt()
}

/// Drive where σ*_{p,C} (with p̄ ≈ ξ_d) meets σ*_{p,Q}.
pub fn localization_threshold(lambda: f64, hbar_eff: f64) -> f64 {
    (6f64.sqrt() * PI * lambda * lambda / hbar_eff).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series_j(m: usize, x: f64) -> f64 {
        let mut sum = 0.0;
        let mut fact_k = 1.0;
        for k in 0..30usize {
            if k > 0 {
                fact_k *= k as f64;
            }
            let fact_km: f64 = (1..=(k + m)).map(|v| v as f64).product();
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * (0.5 * x).powi((2 * k + m) as i32) / (fact_k * fact_km);
        }
        sum
    }

    /// J_m(x) = (1/π)∫₀^π cos(mτ − x sin τ) dτ; the trapezoid rule is
    /// spectrally accurate for this periodic integrand.
    fn integral_j(m: usize, x: f64) -> f64 {
        let n = 4000;
        let h = PI / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let t = i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            s += w * (m as f64 * t - x * t.sin()).cos();
        }
        s * h / PI
    }

    #[test]
    fn bessel_trivial_values() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_j(1, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn bessel_against_series() {
        for &x in &[0.1, 0.5, 1.5, 2.4048, 3.8, 5.0, 8.0] {
            for m in 0..8 {
                let a = bessel_j(m, x).unwrap();
                let b = series_j(m, x);
                assert!((a - b).abs() < 1e-10, "m={m} x={x}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn bessel_against_integral_large_args() {
        for &x in &[25.0, 117.3, 480.0, 1000.0] {
            for &m in &[0, 1, 7, 60, 150, 200] {
                let a = bessel_j(m, x).unwrap();
                let b = integral_j(m, x);
                assert!((a - b).abs() < 1e-10, "m={m} x={x}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn bessel_envelope() {
        assert!(matches!(bessel_j(201, 1.0), Err(LabError::Range(_))));
        assert!(matches!(bessel_j(1, 1000.5), Err(LabError::Range(_))));
        assert!(matches!(bessel_j(1, -1.0), Err(LabError::Range(_))));
    }

    #[test]
    fn resonance_widths() {
        let c = resonance_curves(0.47, 0.0, 3).unwrap();
        assert!((c[0].width - 4.0 * 0.47f64.sqrt()).abs() < 1e-12);
        assert!((c[0].width - 2.742).abs() < 1e-3);
        assert_eq!(c[1].width, 0.0);
        let c = resonance_curves(0.47, 1.5, 3).unwrap();
        let expect = 4.0 * (0.47 * series_j(1, 1.5)).sqrt();
        assert!((c[1].width - expect).abs() < 1e-10);
        assert!((c[1].upper_at_zero - c[1].lower_at_zero - c[1].width).abs() < 1e-14);
    }

    #[test]
    fn layer_bound_reference() {
        let l = chaotic_layer_bound(0.47, 1.5).unwrap();
        assert!(l.p_bar > 2.0 && l.p_bar < 4.0, "{}", l.p_bar);
        assert_eq!(l.m_bar, Some(2));
        let mb = l.m_bar.unwrap();
        let expect = mb as f64 + 2.0 * (0.47 * series_j(mb, 1.5).abs()).sqrt();
        assert!((l.p_bar - expect).abs() < 1e-10);
        assert_eq!(chaotic_layer_bound(0.47, 0.0).unwrap().p_bar, 0.0);
    }

    #[test]
    fn layer_bound_scan_stable() {
        for &xi in &[1.5, 2.5, 4.5, 9.0] {
            let a = chaotic_layer_bound_with(0.47, xi, 40).unwrap();
            let b = chaotic_layer_bound_with(0.47, xi, 80).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn lower_half_plane_mirrors() {
        for &xi in &[1.2, 1.5, 2.5, 3.3, 4.5, 6.0] {
            let up = chaotic_layer_bound(0.47, xi).unwrap().p_bar;
            let dn = chaotic_layer_bound_lower(0.47, xi).unwrap();
            assert!((up + dn).abs() < 1e-12, "xi={xi}: {up} {dn}");
        }
    }

    #[test]
    fn thresholds_reference() {
        let lo = threshold_lower(0.47).unwrap().value().unwrap();
        assert!((lo - 1.34).abs() < 0.01, "{lo}");
        let hi = threshold_upper(0.47).unwrap().value().unwrap();
        assert!((hi - 3.8).abs() < 0.05, "{hi}");
        assert!(hi > lo);
        let g = |x: f64| {
            let (j0, j1) = j01(x);
            1.0 - 2.0 * (0.47 * j1.abs()).sqrt() - 2.0 * (0.47 * j0.abs()).sqrt()
        };
        assert!(g(hi - 1e-5) * g(hi + 1e-5) < 0.0);
    }

    #[test]
    fn threshold_at_tangency() {
        // locate max J_1 independently by a fine grid + parabola
        let (mut xb, mut jb) = (0.0, 0.0);
        for i in 0..40000 {
            let x = 1.0 + i as f64 * 2.5e-5;
            let v = integral_j(1, x);
            if v > jb {
                jb = v;
                xb = x;
            }
        }
        let lambda = 0.25 / jb;
        let root = threshold_lower(lambda).unwrap().value().unwrap();
        assert!((root - 1.841).abs() < 2e-3, "{root} vs {xb}");
        assert_eq!(threshold_lower(1e-3).unwrap(), Threshold::None);
    }

    #[test]
    fn diffusion_and_map() {
        assert!((diffusion_rate(0.47, 1.5).unwrap() - 0.14727).abs() < 1e-5);
        assert!((diffusion_rate(0.47, 4.5).unwrap() - 0.049089).abs() < 1e-6);
        assert_eq!(diffusion_rate(1.0, 1.0).unwrap(), 1.0);
        assert!(diffusion_rate(1.0, 0.0).is_err());
        let k = standard_map_k(0.47, 1.5).unwrap();
        assert!((k.k - 1.3604).abs() < 1e-4);
        assert!((k.k_times_period - 8.55).abs() < 0.01);
        assert!(k.chaotic);
        assert!(!standard_map_k(0.0, 1.5).unwrap().chaotic);
        let d = diffusion_rate(0.47, 1.5).unwrap();
        assert!((k.k * k.k / (2.0 * PERIOD) - d).abs() < 1e-12);
    }

    #[test]
    fn localization_numbers() {
        let d = diffusion_rate(0.47, 4.5).unwrap();
        assert!((localization_length(d, 0.16) - 12.05).abs() < 0.01);
        assert_eq!(localization_length(0.0, 0.16), 0.0);
        let r = localization_length(d, 0.16) / localization_length(d, 0.32);
        assert!((r - 4.0).abs() < 1e-12);
        assert!((localization_threshold(0.47, 0.16) - 3.26).abs() < 0.01);
        assert!((sigma_star_classical(3f64.sqrt()) - 1.0).abs() < 1e-15);
        let xs = localization_threshold(0.47, 0.16);
        let ln = localization_length(diffusion_rate(0.47, xs).unwrap(), 0.16);
        assert!((sigma_star_classical(xs) - sigma_star_quantum(0.16, ln)).abs() < 1e-9);
    }

    #[test]
    fn layer_grows_on_window_average() {
        let lo = threshold_lower(0.47).unwrap().value().unwrap();
        let mut prev = 0.0;
        let mut start = lo;
        while start + 1.0 <= 6.0 + 1e-9 {
            let avg: f64 = (0..50)
                .map(|i| chaotic_layer_bound(0.47, start + i as f64 / 50.0).unwrap().p_bar)
                .sum::<f64>()
                / 50.0;
            assert!(avg >= prev, "window at {start}: {avg} < {prev}");
            prev = avg;
            start += 1.0;
        }
    }
}
