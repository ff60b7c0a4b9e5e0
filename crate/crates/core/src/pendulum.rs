//! Classical driven pendulum θ̇ = p, ṗ = −λ sin(θ − ξ_d sin t) in the
//! displaced frame, plus the Chirikov standard map that approximates its
//! stroboscopic dynamics for strong drives.

use crate::error::{invalid, LabError, Result};
use crate::exec;
use crate::params::{ModelParams, PERIOD};
use crate::stats;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Default integration steps per drive period.
pub const STEPS_PER_PERIOD: usize = 1000;
/// Coarsest allowed step is T/200.
pub const MIN_STEPS_PER_PERIOD: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    /// Unwrapped angle.
    pub theta: f64,
    pub p: f64,
    #[serde(default)]
    pub t: f64,
}

impl PhasePoint {
    pub fn new(theta: f64, p: f64) -> Self {
        PhasePoint { theta, p, t: 0.0 }
    }

    /// Angle wrapped into [−π, π).
    pub fn wrapped_theta(&self) -> f64 {
        wrap_angle(self.theta)
    }
}

pub fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

/// H = p²/2 − λ cos θ (conserved when ξ_d = 0).
pub fn energy(lambda: f64, pt: &PhasePoint) -> f64 {
    0.5 * pt.p * pt.p - lambda * pt.theta.cos()
}

/// One Strang step (half kick, drift, half kick) with the force evaluated
/// at the step midpoint `t_mid`; returns the mid-step momentum.
#[inline]
pub fn strang_step(lambda: f64, xi_d: f64, theta: &mut f64, p: &mut f64, t_mid: f64, h: f64) -> f64 {
    let shift = xi_d * t_mid.sin();
    kick_drift_kick(lambda, shift, theta, p, h)
}

#[inline]
fn kick_drift_kick(lambda: f64, shift: f64, theta: &mut f64, p: &mut f64, h: f64) -> f64 {
    *p -= 0.5 * h * lambda * (*theta - shift).sin();
    let p_mid = *p;
    *theta += h * *p;
    *p -= 0.5 * h * lambda * (*theta - shift).sin();
    p_mid
}

/// Period-aligned integrator with a precomputed drive table; the workhorse
/// for ensembles.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub lambda: f64,
    pub h: f64,
    shift: Vec<f64>,
}

impl Stepper {
    pub fn new(lambda: f64, xi_d: f64, steps_per_period: usize) -> Result<Self> {
        if steps_per_period < MIN_STEPS_PER_PERIOD {
            return invalid(format!("need at least {MIN_STEPS_PER_PERIOD} steps per period"));
        }
        let h = PERIOD / steps_per_period as f64;
        let shift = (0..steps_per_period).map(|j| xi_d * ((j as f64 + 0.5) * h).sin()).collect();
        Ok(Stepper { lambda, h, shift })
    }

    pub fn steps_per_period(&self) -> usize {
        self.shift.len()
    }

    /// Step `j` (within the period) of the state; returns mid-step momentum.
    #[inline]
    pub fn step(&self, j: usize, theta: &mut f64, p: &mut f64) -> f64 {
        kick_drift_kick(self.lambda, self.shift[j], theta, p, self.h)
    }

    /// Advance one full period.
    pub fn period(&self, theta: &mut f64, p: &mut f64) {
        for j in 0..self.shift.len() {
            self.step(j, theta, p);
        }
    }
}

fn check_finite(theta: f64, p: f64, t: f64) -> Result<()> {
    if theta.is_finite() && p.is_finite() {
        Ok(())
    } else {
        Err(LabError::Integration { t, msg: "non-finite state".into() })
    }
}

/// Full trajectory from `ic` over `t_end − ic.t` with step `dt` (negative
/// `dt` integrates backwards). Includes the initial point.
pub fn integrate(lambda: f64, xi_d: f64, ic: PhasePoint, t_end: f64, dt: f64) -> Result<Vec<PhasePoint>> {
    if dt == 0.0 || dt.abs() > PERIOD / MIN_STEPS_PER_PERIOD as f64 + 1e-15 {
        return invalid("dt must be non-zero and at most T/200");
    }
    let span = (t_end - ic.t) / dt;
    let n = span.round();
    if n < 0.0 || (span - n).abs() > 1e-6 {
        return invalid("t_end - t0 must be a non-negative multiple of dt");
    }
    let n = n as usize;
    let (mut theta, mut p) = (ic.theta, ic.p);
    let mut out = Vec::with_capacity(n + 1);
    out.push(ic);
    for i in 0..n {
        let t = ic.t + i as f64 * dt;
        strang_step(lambda, xi_d, &mut theta, &mut p, t + 0.5 * dt, dt);
        let t_next = ic.t + (i + 1) as f64 * dt;
        check_finite(theta, p, t)?;
        out.push(PhasePoint { theta, p, t: t_next });
    }
    Ok(out)
}

/// Stroboscopic samples t = 0, T, …, n_periods·T for one initial condition
/// (taken at t = 0), angles left unwrapped.
pub fn stroboscopic(stepper: &Stepper, ic: PhasePoint, n_periods: usize) -> Result<Vec<PhasePoint>> {
    let (mut theta, mut p) = (ic.theta, ic.p);
    let mut out = Vec::with_capacity(n_periods + 1);
    out.push(PhasePoint { theta, p, t: 0.0 });
    for n in 1..=n_periods {
        stepper.period(&mut theta, &mut p);
        check_finite(theta, p, n as f64 * PERIOD)?;
        out.push(PhasePoint { theta, p, t: n as f64 * PERIOD });
    }
    Ok(out)
}

/// Poincaré section: for each initial condition, the stroboscopic points
/// with θ wrapped into [−π, π).
pub fn poincare_section(
    lambda: f64,
    xi_d: f64,
    ics: &[PhasePoint],
    n_periods: usize,
    steps_per_period: usize,
) -> Result<Vec<Vec<PhasePoint>>> {
    let stepper = Stepper::new(lambda, xi_d, steps_per_period)?;
    let runs = exec::try_map_indexed(ics.len(), |i| stroboscopic(&stepper, ics[i], n_periods))?;
    Ok(runs
        .into_iter()
        .map(|r| r.into_iter().map(|pt| PhasePoint { theta: pt.wrapped_theta(), ..pt }).collect())
        .collect())
}

/// Chirikov standard map p' = p − k sin θ, θ' = θ + T p'.
pub fn standard_map_iterate(k: f64, start: PhasePoint, n: usize) -> Vec<PhasePoint> {
    let mut out = Vec::with_capacity(n + 1);
    let (mut theta, mut p) = (start.theta, start.p);
    out.push(start);
    for i in 1..=n {
        p -= k * theta.sin();
        theta += PERIOD * p;
        out.push(PhasePoint { theta, p, t: start.t + i as f64 * PERIOD });
    }
    out
}

/// Source of ensemble initial conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Sampler {
    /// Samples of the Husimi function of the undriven transmon ground state.
    HusimiGround,
    /// Every trajectory starts at the same point.
    Fixed { theta: f64, p: f64 },
    /// Explicit list, cycled if shorter than `n_traj`.
    Explicit { points: Vec<PhasePoint> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n_traj: usize,
    pub seed: u64,
    pub sampler: Sampler,
}

impl EnsembleSpec {
    pub fn husimi(n_traj: usize, seed: u64) -> Self {
        EnsembleSpec { n_traj, seed, sampler: Sampler::HusimiGround }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 {
            return invalid("n_traj must be at least 1");
        }
        if let Sampler::Explicit { points } = &self.sampler {
            if points.is_empty() {
                return invalid("explicit sampler needs at least one point");
            }
        }
        Ok(())
    }

    /// Resolve the sampler into concrete initial conditions.
    pub fn initial_conditions(&self, params: &ModelParams) -> Result<Vec<PhasePoint>> {
        self.validate()?;
        match &self.sampler {
            Sampler::HusimiGround => crate::qtransmon::sample_ground_husimi(params, self.n_traj, self.seed),
            Sampler::Fixed { theta, p } => Ok(vec![PhasePoint::new(*theta, *p); self.n_traj]),
            Sampler::Explicit { points } => Ok((0..self.n_traj).map(|i| points[i % points.len()]).collect()),
        }
    }
}

/// Stroboscopic momenta of every trajectory: `out[i][n]` = p_i(nT).
pub fn ensemble_momenta(stepper: &Stepper, ics: &[PhasePoint], n_periods: usize) -> Result<Vec<Vec<f64>>> {
    exec::try_map_indexed(ics.len(), |i| {
        let (mut theta, mut p) = (ics[i].theta, ics[i].p);
        let mut ps = Vec::with_capacity(n_periods + 1);
        ps.push(p);
        for n in 1..=n_periods {
            stepper.period(&mut theta, &mut p);
            check_finite(theta, p, n as f64 * PERIOD)?;
            ps.push(p);
        }
        Ok(ps)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentumStats {
    pub t: Vec<f64>,
    pub mean_p: Vec<f64>,
    pub std_p: Vec<f64>,
    /// Time average of std_p over the final half of the run.
    pub sigma_bar: f64,
}

/// Per-period ensemble mean and (population) standard deviation of p,
/// reduced in trajectory order.
pub fn momentum_stats_from(momenta: &[Vec<f64>]) -> MomentumStats {
    let n_t = momenta[0].len();
    let mut mean_p = Vec::with_capacity(n_t);
    let mut std_p = Vec::with_capacity(n_t);
    let mut col = vec![0.0; momenta.len()];
    for n in 0..n_t {
        for (c, traj) in col.iter_mut().zip(momenta) {
            *c = traj[n];
        }
        mean_p.push(stats::mean(&col));
        std_p.push(stats::variance(&col).sqrt());
    }
    let half = (n_t - 1) / 2;
    let sigma_bar = stats::mean(&std_p[n_t - 1 - half..]);
    let t = (0..n_t).map(|n| n as f64 * PERIOD).collect();
    MomentumStats { t, mean_p, std_p, sigma_bar }
}

pub fn ensemble_momentum_stats(
    params: &ModelParams,
    ens: &EnsembleSpec,
    n_periods: usize,
    steps_per_period: usize,
) -> Result<MomentumStats> {
    let ics = ens.initial_conditions(params)?;
    let stepper = Stepper::new(params.lambda, params.xi_d, steps_per_period)?;
    Ok(momentum_stats_from(&ensemble_momenta(&stepper, &ics, n_periods)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    /// Probability mass per bin; sums to one.
    pub mass: Vec<f64>,
}

impl Histogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn density(&self) -> Vec<f64> {
        self.mass.iter().zip(self.edges.windows(2)).map(|(m, w)| m / (w[1] - w[0])).collect()
    }
}

/// Mass-normalized histogram on [lo, hi]; samples outside are clamped into
/// the edge bins.
pub fn histogram(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Histogram> {
    if bins == 0 || !(hi > lo) || samples.is_empty() {
        return invalid("histogram needs bins >= 1, hi > lo and samples");
    }
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for s in samples {
        let k = (((s - lo) / w).floor().max(0.0) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let n = samples.len() as f64;
    Ok(Histogram {
        edges: (0..=bins).map(|k| lo + k as f64 * w).collect(),
        mass: counts.iter().map(|&c| c as f64 / n).collect(),
    })
}

/// Histogram of stroboscopic momenta at period `n_snapshot`.
pub fn momentum_histogram(
    params: &ModelParams,
    ens: &EnsembleSpec,
    n_snapshot: usize,
    bins: usize,
    range: (f64, f64),
    steps_per_period: usize,
) -> Result<Histogram> {
    let ics = ens.initial_conditions(params)?;
    let stepper = Stepper::new(params.lambda, params.xi_d, steps_per_period)?;
    let ps = exec::try_map_indexed(ics.len(), |i| {
        let (mut theta, mut p) = (ics[i].theta, ics[i].p);
        for _ in 0..n_snapshot {
            stepper.period(&mut theta, &mut p);
        }
        check_finite(theta, p, n_snapshot as f64 * PERIOD)?;
        Ok(p)
    })?;
    histogram(&ps, range.0, range.1, bins)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossing {
    /// Interpolated time where p = ξ_d cos t.
    pub t: f64,
    /// Period index n with nT ≤ t < (n+1)T.
    pub period: usize,
    /// Phase within the period, t − nT.
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingTrace {
    pub trajectory: Vec<PhasePoint>,
    pub crossings: Vec<Crossing>,
    /// p((n+1)T) − p(nT) for each period.
    pub period_jumps: Vec<f64>,
}

/// Trajectory annotated with the times at which the resonance condition
/// p = ξ_d cos t is met (two crossings per period in the fast regime).
pub fn resonance_crossing_trace(
    lambda: f64,
    xi_d: f64,
    ic: PhasePoint,
    n_periods: usize,
    steps_per_period: usize,
) -> Result<CrossingTrace> {
    let dt = PERIOD / steps_per_period as f64;
    let ic = PhasePoint { t: 0.0, ..ic };
    let trajectory = integrate(lambda, xi_d, ic, n_periods as f64 * PERIOD, dt)?;
    let mut crossings = Vec::new();
    if xi_d > 0.0 {
        let resid = |pt: &PhasePoint| pt.p - xi_d * pt.t.cos();
        for w in trajectory.windows(2) {
            let (a, b) = (resid(&w[0]), resid(&w[1]));
            if (a > 0.0) != (b > 0.0) {
                let t = w[0].t + (w[1].t - w[0].t) * a / (a - b);
                let period = (t / PERIOD).floor() as usize;
                crossings.push(Crossing { t, period, phase: t - period as f64 * PERIOD });
            }
        }
    }
    let period_jumps = (0..n_periods)
        .map(|n| trajectory[(n + 1) * steps_per_period].p - trajectory[n * steps_per_period].p)
        .collect();
    Ok(CrossingTrace { trajectory, crossings, period_jumps })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub n_checked: usize,
    pub max_mean_dev: f64,
    pub max_std_dev: f64,
    pub passed: bool,
}

/// Tolerance of the step-halving check.
pub const CONVERGENCE_TOL: f64 = 1e-4;

/// Re-runs a 1% subsample of the initial conditions over the first drive
/// period at half the step and compares stroboscopic mean/std of p.
///
/// Only one period is compared: in the chaotic layer trajectories at dt
/// and dt/2 decorrelate after a few periods, so long-time agreement to
/// 1e−4 is not attainable even for a converged integrator.
pub fn convergence_check(lambda: f64, xi_d: f64, ics: &[PhasePoint], steps_per_period: usize) -> Result<ConvergenceReport> {
    let n = (ics.len() / 100).max(1).min(ics.len());
    let stride = ics.len() / n;
    let sub: Vec<PhasePoint> = (0..n).map(|i| ics[i * stride]).collect();
    let coarse = ensemble_momenta(&Stepper::new(lambda, xi_d, steps_per_period)?, &sub, 1)?;
    let fine = ensemble_momenta(&Stepper::new(lambda, xi_d, 2 * steps_per_period)?, &sub, 1)?;
    let a = momentum_stats_from(&coarse);
    let b = momentum_stats_from(&fine);
    let max_mean_dev = (a.mean_p[1] - b.mean_p[1]).abs();
    let max_std_dev = (a.std_p[1] - b.std_p[1]).abs();
    Ok(ConvergenceReport {
        n_checked: n,
        max_mean_dev,
        max_std_dev,
        passed: max_mean_dev < CONVERGENCE_TOL && max_std_dev < CONVERGENCE_TOL,
    })
}
