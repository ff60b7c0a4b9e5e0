//! A two-level system (TLS) coupled to the transmon charge, used as a noise
//! spectrometer: full quantum evolution of TLS ⊗ transmon, semiclassical
//! TLS dynamics driven by pendulum or RBM momentum signals, decay-rate and
//! envelope extraction, and the long-time plateau from Floquet statistics.
//!
//! TLS amplitudes are ordered (|g⟩, |e⟩), σ_z = |e⟩⟨e| − |g⟩⟨g|.

use crate::error::{invalid, LabError, Result};
use crate::exec;
use crate::linalg::{self, c64, CMat};
use crate::params::{ModelParams, PERIOD};
use crate::pendulum::{EnsembleSpec, Stepper};
use crate::qtransmon::{self, DrivenGenerator, OnePeriod};
use crate::rbm::{self, RbmParams};
use crate::stats;
use faer::Mat;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Default regression window for decay rates, in periods.
pub const RATE_WINDOW: usize = 200;
/// Coarsest drive-signal grid accepted by the semiclassical integrator.
pub const MAX_DRIVE_DT: f64 = PERIOD / 50.0;
pub const DEFAULT_IPR_CUT: f64 = 0.3;

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TlsInit {
    /// Bloch polar angle; 0 is |e⟩, π is |g⟩.
    pub theta: f64,
    pub phi: f64,
}

impl TlsInit {
    pub const EXCITED: TlsInit = TlsInit { theta: 0.0, phi: 0.0 };
    pub const GROUND: TlsInit = TlsInit { theta: PI, phi: 0.0 };

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=PI).contains(&self.theta) || !(0.0..2.0 * PI).contains(&self.phi) {
            return invalid("TLS angles need theta in [0, pi] and phi in [0, 2pi)");
        }
        Ok(())
    }

    /// sin(θ/2)|g⟩ + e^{iφ}cos(θ/2)|e⟩
    pub fn amplitudes(&self) -> [c64; 2] {
        let (s, c) = (0.5 * self.theta).sin_cos();
        [c64::new(s, 0.0), c64::cis(self.phi) * c]
    }
}

/// ⟨σ_z⟩, ⟨σ_x⟩, ⟨σ_y⟩ from the g- and e-components (scalars or blocks).
pub fn bloch(g: &[c64], e: &[c64]) -> [f64; 3] {
    let ng: f64 = g.iter().map(|z| z.norm_sqr()).sum();
    let ne: f64 = e.iter().map(|z| z.norm_sqr()).sum();
    let ge = linalg::dot(g, e); // ⟨g|e⟩ = Σ g* e
    [ne - ng, 2.0 * ge.re, -2.0 * ge.im]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSeriesRecord {
    pub t: Vec<f64>,
    pub sz: Vec<f64>,
    pub sx: Vec<f64>,
    pub sy: Vec<f64>,
    pub samples_per_period: usize,
}

impl TimeSeriesRecord {
    fn zeros(n_periods: usize, samples_per_period: usize) -> Self {
        let n = n_periods * samples_per_period + 1;
        TimeSeriesRecord {
            t: (0..n).map(|i| i as f64 * PERIOD / samples_per_period as f64).collect(),
            sz: vec![0.0; n],
            sx: vec![0.0; n],
            sy: vec![0.0; n],
            samples_per_period,
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn set(&mut self, i: usize, b: [f64; 3]) {
        self.sz[i] = b[0];
        self.sx[i] = b[1];
        self.sy[i] = b[2];
    }

    fn accumulate(&mut self, other: &TimeSeriesRecord) {
        for i in 0..self.len() {
            self.sz[i] += other.sz[i];
            self.sx[i] += other.sx[i];
            self.sy[i] += other.sy[i];
        }
    }

    fn scale(&mut self, f: f64) {
        for v in self.sz.iter_mut().chain(self.sx.iter_mut()).chain(self.sy.iter_mut()) {
            *v *= f;
        }
    }

    /// Samples at whole periods only.
    pub fn stroboscopic(&self) -> TimeSeriesRecord {
        let s = self.samples_per_period;
        let pick = |v: &[f64]| v.iter().step_by(s).copied().collect::<Vec<_>>();
        TimeSeriesRecord { t: pick(&self.t), sz: pick(&self.sz), sx: pick(&self.sx), sy: pick(&self.sy), samples_per_period: 1 }
    }

    /// Largest Bloch-vector length along the record.
    pub fn max_bloch_norm(&self) -> f64 {
        (0..self.len())
            .map(|i| (self.sz[i].powi(2) + self.sx[i].powi(2) + self.sy[i].powi(2)).sqrt())
            .fold(0.0, f64::max)
    }
}

/// Average of records, reduced in index order.
fn average(records: Vec<TimeSeriesRecord>, weight: f64) -> TimeSeriesRecord {
    let mut it = records.into_iter();
    let mut acc = it.next().expect("at least one record");
    for r in it {
        acc.accumulate(&r);
    }
    acc.scale(weight);
    acc
}

// ----------------------------------------------------------- quantum model

/// Transmon truncation and time step for the quantum model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumNumerics {
    /// Charge cutoff D.
    #[serde(rename = "D")]
    pub d_max: usize,
    /// Retained transmon eigenstates d.
    pub d: usize,
    pub steps_per_period: usize,
}

impl QuantumNumerics {
    pub fn for_params(params: &ModelParams) -> Self {
        let (d_max, d) = qtransmon::basis_sizes(params.hbar_eff);
        QuantumNumerics { d_max, d, steps_per_period: qtransmon::DEFAULT_STEPS }
    }
}

fn coupled_state(tls: &TlsInit, d: usize) -> Vec<c64> {
    let [a_g, a_e] = tls.amplitudes();
    let mut psi = vec![ZERO; 2 * d];
    psi[0] = a_g;
    psi[d] = a_e;
    psi
}

fn bloch_coupled(psi: &[c64]) -> [f64; 3] {
    let d = psi.len() / 2;
    bloch(&psi[..d], &psi[d..])
}

/// Propagators U(sT/S, 0) for s = 1..S−1 within one period.
fn partial_propagators(one: &OnePeriod, samples_per_period: usize) -> Vec<CMat> {
    let n = one.n_steps;
    let stride = n / samples_per_period;
    let dim = one.monodromy.nrows();
    let mut u = Mat::<c64>::identity(dim, dim);
    let mut out = Vec::with_capacity(samples_per_period.saturating_sub(1));
    for s in 1..samples_per_period {
        for j in (s - 1) * stride..s * stride {
            u = one.apply_step_mat(j, &u);
        }
        out.push(u.clone());
    }
    out
}

/// TLS ⊗ transmon evolution from (TLS state) ⊗ (transmon ground state),
/// averaged over `n_g_list`. Observables are sampled `samples_per_period`
/// times per period (which must divide the step count).
pub fn evolve_coupled_quantum(
    params: &ModelParams,
    numerics: &QuantumNumerics,
    tls: &TlsInit,
    n_g_list: &[f64],
    n_periods: usize,
    samples_per_period: usize,
) -> Result<TimeSeriesRecord> {
    tls.validate()?;
    if n_g_list.is_empty() || n_periods == 0 || samples_per_period == 0 {
        return invalid("need n_g values, n_periods >= 1 and samples_per_period >= 1");
    }
    if numerics.steps_per_period % samples_per_period != 0 {
        return invalid("samples_per_period must divide steps_per_period");
    }
    let runs = exec::try_map_indexed(n_g_list.len(), |i| -> Result<TimeSeriesRecord> {
        let p = params.with_n_g(n_g_list[i]);
        let basis = qtransmon::build_basis(&p, numerics.d_max, numerics.d)?;
        let gen = DrivenGenerator::coupled(&basis, p.omega_q_t, p.g_t);
        let mut one = OnePeriod::compute(&gen, numerics.steps_per_period, samples_per_period > 1)?;
        let dev = linalg::unitarity_deviation(one.monodromy.as_ref());
        if !(dev < qtransmon::UNITARITY_TOL) {
            return Err(LabError::Accuracy(format!("coupled U(T) not unitary: {dev:.3e}")));
        }
        let partial = partial_propagators(&one, samples_per_period);
        one.discard_steps();
        let mut rec = TimeSeriesRecord::zeros(n_periods, samples_per_period);
        let mut psi = coupled_state(tls, basis.d());
        for n in 0..=n_periods {
            if n > 0 {
                psi = one.apply_period(&psi);
            }
            rec.set(n * samples_per_period, bloch_coupled(&psi));
            if n < n_periods {
                for (s, u) in partial.iter().enumerate() {
                    let chi = linalg::matvec(u.as_ref(), &psi);
                    rec.set(n * samples_per_period + s + 1, bloch_coupled(&chi));
                }
            }
        }
        Ok(rec)
    })?;
    let w = 1.0 / runs.len() as f64;
    Ok(average(runs, w))
}

// ------------------------------------------------------ semiclassical model

/// Exact propagation of the TLS over `h` under (ω/2)σ_z + g p σ_x.
#[inline]
pub fn tls_step(omega_q_t: f64, g_t: f64, p: f64, h: f64, amp: &mut [c64; 2]) {
    let bz = 0.5 * omega_q_t;
    let bx = g_t * p;
    let b = (bz * bz + bx * bx).sqrt();
    if b == 0.0 {
        return;
    }
    let (s, c) = (b * h).sin_cos();
    let f = s / b;
    // exp(−ihH) = cos(bh) − i sin(bh)/b·H, H = [[−bz, bx], [bx, bz]]
    let [g, e] = *amp;
    let i = c64::new(0.0, 1.0);
    amp[0] = g * c - i * f * (-bz * g + bx * e);
    amp[1] = e * c - i * f * (bx * g + bz * e);
}

/// TLS driven by a piecewise-constant momentum signal: `p_signal[k]` acts on
/// [k·dt, (k+1)·dt). Observables are recorded every `record_every` steps.
pub fn evolve_semiclassical(
    omega_q_t: f64,
    g_t: f64,
    p_signal: &[f64],
    dt: f64,
    tls: &TlsInit,
    record_every: usize,
) -> Result<TimeSeriesRecord> {
    tls.validate()?;
    if !(dt > 0.0) || dt > MAX_DRIVE_DT * (1.0 + 1e-12) {
        return Err(LabError::Accuracy(format!("drive grid dt = {dt} is coarser than T/50")));
    }
    if record_every == 0 {
        return invalid("record_every must be at least 1");
    }
    let n_rec = p_signal.len() / record_every;
    let mut rec = TimeSeriesRecord {
        t: Vec::with_capacity(n_rec + 1),
        sz: Vec::with_capacity(n_rec + 1),
        sx: Vec::with_capacity(n_rec + 1),
        sy: Vec::with_capacity(n_rec + 1),
        samples_per_period: (PERIOD / (dt * record_every as f64)).round().max(1.0) as usize,
    };
    let mut amp = tls.amplitudes();
    let push = |rec: &mut TimeSeriesRecord, k: usize, amp: &[c64; 2]| {
        let b = bloch(&amp[..1], &amp[1..]);
        rec.t.push(k as f64 * dt);
        rec.sz.push(b[0]);
        rec.sx.push(b[1]);
        rec.sy.push(b[2]);
    };
    push(&mut rec, 0, &amp);
    for (k, p) in p_signal.iter().enumerate() {
        tls_step(omega_q_t, g_t, *p, dt, &mut amp);
        if (k + 1) % record_every == 0 {
            push(&mut rec, k + 1, &amp);
        }
    }
    Ok(rec)
}

/// Where the RBM surrogate starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RbmStart {
    /// p(0) = 0, matching trajectories launched from the ground state.
    Zero,
    /// p(0) uniform on [−p̄, p̄].
    Stationary,
}

/// Momentum source for semiclassical ensembles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Drive {
    /// Driven-pendulum trajectories.
    Pendulum { ensemble: EnsembleSpec, steps_per_period: usize },
    /// Reflected Brownian motion paths, one per random stream.
    Rbm { rbm: RbmParams, n_paths: usize, start: RbmStart },
}

/// Members reduced per work unit; partial sums are combined in unit order.
const CHUNK: usize = 32;

/// Ensemble-averaged TLS observables sampled `samples_per_period` times per
/// period.
pub fn semiclassical_ensemble(
    params: &ModelParams,
    drive: &Drive,
    tls: &TlsInit,
    n_periods: usize,
    samples_per_period: usize,
) -> Result<TimeSeriesRecord> {
    tls.validate()?;
    if n_periods == 0 || samples_per_period == 0 {
        return invalid("need n_periods >= 1 and samples_per_period >= 1");
    }
    let (w, g) = (params.omega_q_t, params.g_t);
    match drive {
        Drive::Pendulum { ensemble, steps_per_period } => {
            if steps_per_period % samples_per_period != 0 {
                return invalid("samples_per_period must divide the pendulum steps per period");
            }
            let ics = ensemble.initial_conditions(params)?;
            let stepper = Stepper::new(params.lambda, params.xi_d, *steps_per_period)?;
            let stride = steps_per_period / samples_per_period;
            let n_chunks = ics.len().div_ceil(CHUNK);
            let parts = exec::try_map_indexed(n_chunks, |c| -> Result<TimeSeriesRecord> {
                let mut acc = TimeSeriesRecord::zeros(n_periods, samples_per_period);
                for ic in &ics[c * CHUNK..((c + 1) * CHUNK).min(ics.len())] {
                    let (mut th, mut p) = (ic.theta, ic.p);
                    let mut amp = tls.amplitudes();
                    let mut add = |i: usize, amp: &[c64; 2]| {
                        let b = bloch(&amp[..1], &amp[1..]);
                        acc.sz[i] += b[0];
                        acc.sx[i] += b[1];
                        acc.sy[i] += b[2];
                    };
                    add(0, &amp);
                    for n in 0..n_periods {
                        for j in 0..*steps_per_period {
                            let p_mid = stepper.step(j, &mut th, &mut p);
                            tls_step(w, g, p_mid, stepper.h, &mut amp);
                            if (j + 1) % stride == 0 {
                                add(n * samples_per_period + (j + 1) / stride, &amp);
                            }
                        }
                        if !(th.is_finite() && p.is_finite()) {
                            return Err(LabError::Integration { t: (n + 1) as f64 * PERIOD, msg: "non-finite state".into() });
                        }
                    }
                }
                Ok(acc)
            })?;
            Ok(average(parts, 1.0 / ics.len() as f64))
        }
        Drive::Rbm { rbm: prm, n_paths, start } => {
            prm.validate()?;
            if *n_paths == 0 {
                return invalid("n_paths must be at least 1");
            }
            let per = (PERIOD / prm.dt).round();
            if (per * prm.dt - PERIOD).abs() > 1e-9 * PERIOD {
                return invalid("RBM dt must divide the drive period");
            }
            let per = per as usize;
            if per % samples_per_period != 0 {
                return invalid("samples_per_period must divide the RBM steps per period");
            }
            if prm.dt > MAX_DRIVE_DT * (1.0 + 1e-12) {
                return Err(LabError::Accuracy(format!("drive grid dt = {} is coarser than T/50", prm.dt)));
            }
            let stride = per / samples_per_period;
            let t_end = n_periods as f64 * PERIOD;
            let n_chunks = n_paths.div_ceil(CHUNK);
            let parts = exec::try_map_indexed(n_chunks, |c| -> Result<TimeSeriesRecord> {
                let mut acc = TimeSeriesRecord::zeros(n_periods, samples_per_period);
                for k in c * CHUNK..((c + 1) * CHUNK).min(*n_paths) {
                    let p0 = match start {
                        RbmStart::Zero => 0.0,
                        RbmStart::Stationary => rbm::stationary_start(prm, k as u64),
                    };
                    let path = rbm::generate_path_stream(prm, t_end, p0, k as u64)?;
                    let mut amp = tls.amplitudes();
                    let mut add = |i: usize, amp: &[c64; 2]| {
                        let b = bloch(&amp[..1], &amp[1..]);
                        acc.sz[i] += b[0];
                        acc.sx[i] += b[1];
                        acc.sy[i] += b[2];
                    };
                    add(0, &amp);
                    for (s, v) in path.values.windows(2).enumerate() {
                        tls_step(w, g, 0.5 * (v[0] + v[1]), prm.dt, &mut amp);
                        if (s + 1) % stride == 0 {
                            add((s + 1) / stride, &amp);
                        }
                    }
                }
                Ok(acc)
            })?;
            Ok(average(parts, 1.0 / *n_paths as f64))
        }
    }
}

// ------------------------------------------------------- rates, envelopes

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    /// Decay rate per unit rescaled time.
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Periods in the regression window.
    pub window: usize,
}

/// Least-squares slope of log|x(nT)| against nT over the first `n_periods`
/// whole periods of a record sampled on t = k·T/S; rate = −slope.
pub fn extract_rate(t: &[f64], x: &[f64], n_periods: usize) -> Result<DecayFit> {
    if t.len() != x.len() {
        return invalid("time and value arrays differ in length");
    }
    let t_max = n_periods as f64 * PERIOD * (1.0 + 1e-12);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (ti, xi) in t.iter().zip(x) {
        if *ti > t_max {
            break;
        }
        let k = ti / PERIOD;
        if (k - k.round()).abs() > 1e-9 {
            continue;
        }
        if xi.abs() <= 1e-6 {
            return invalid(format!("|value| <= 1e-6 at t = {ti} inside the fit window"));
        }
        xs.push(*ti);
        ys.push(xi.abs().ln());
    }
    if xs.len() < 20 {
        return Err(LabError::InsufficientData(format!("{} stroboscopic points in the window, need 20", xs.len())));
    }
    let f = stats::linear_fit(&xs, &ys);
    Ok(DecayFit { rate: -f.slope, intercept: f.intercept, r_squared: f.r_squared, window: xs.len() - 1 })
}

/// Angular frequency of the largest Fourier peak of `x` (mean removed) over
/// samples with t ≤ `t_max`, refined by parabolic interpolation on a
/// fourfold zero-padded grid. Frequencies are resolved up to the Nyquist
/// limit of the sampling.
pub fn dominant_frequency(t: &[f64], x: &[f64], t_max: f64) -> Result<f64> {
    let n = t.iter().take_while(|&&ti| ti <= t_max * (1.0 + 1e-12)).count().min(x.len());
    if n < 8 {
        return Err(LabError::InsufficientData("need at least 8 samples for a spectral peak".into()));
    }
    let dt = t[1] - t[0];
    let mean = stats::mean(&x[..n]);
    let span = dt * n as f64;
    let d_omega = 2.0 * PI / (4.0 * span);
    let n_grid = ((PI / dt) / d_omega).floor() as usize;
    let power = |om: f64| -> f64 {
        let s: c64 = (0..n).map(|k| (x[k] - mean) * c64::cis(-om * t[k])).sum();
        s.norm_sqr()
    };
    let spec: Vec<f64> = (0..=n_grid).map(|k| power(k as f64 * d_omega)).collect();
    let (mut best, mut bv) = (1, f64::NEG_INFINITY);
    for (k, v) in spec.iter().enumerate().skip(1) {
        if *v > bv {
            best = k;
            bv = *v;
        }
    }
    if !(bv > 0.0) {
        return Err(LabError::NoSolution("signal has no oscillating component".into()));
    }
    let mut om = best as f64 * d_omega;
    if best + 1 < spec.len() {
        let (a, b, c) = (spec[best - 1], spec[best], spec[best + 1]);
        let den = a - 2.0 * b + c;
        if den < 0.0 {
            om += 0.5 * (a - c) / den * d_omega;
        }
    }
    Ok(om)
}

/// Periods used to estimate the oscillation frequency of an envelope input.
pub const ENVELOPE_PROBE_PERIODS: f64 = 50.0;

/// Upper envelope: the maxima of `x` within consecutive windows of one
/// oscillation period (from the spectral peak over the first 50 drive
/// periods), refined by a parabola through the neighbouring samples and
/// linearly interpolated back onto `t`.
pub fn upper_envelope(t: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let om = dominant_frequency(t, x, ENVELOPE_PROBE_PERIODS * PERIOD)?;
    upper_envelope_with_period(t, x, 2.0 * PI / om)
}

pub fn upper_envelope_with_period(t: &[f64], x: &[f64], window: f64) -> Result<Vec<f64>> {
    if t.len() != x.len() || t.len() < 2 {
        return invalid("envelope needs matching arrays of length >= 2");
    }
    if !(window > 0.0) {
        return invalid("envelope window must be positive");
    }
    let t0 = t[0];
    let mut peaks: Vec<(f64, f64)> = Vec::new();
    let mut cur: Option<(usize, f64, f64)> = None;
    for (ti, xi) in t.iter().zip(x) {
        let w = ((ti - t0) / window).floor() as usize;
        match cur {
            Some((cw, _, cx)) if cw == w => {
                if *xi > cx {
                    cur = Some((w, *ti, *xi));
                }
            }
            Some((_, ct, cx)) => {
                peaks.push((ct, cx));
                cur = Some((w, *ti, *xi));
            }
            None => cur = Some((w, *ti, *xi)),
        }
    }
    if let Some((_, ct, cx)) = cur {
        peaks.push((ct, cx));
    }
    // parabolic refinement through the neighbours of each sampled maximum
    for pk in peaks.iter_mut() {
        let i = t.partition_point(|ti| *ti < pk.0);
        if i > 0 && i + 1 < t.len() {
            let (a, b, c) = (x[i - 1], x[i], x[i + 1]);
            let den = a - 2.0 * b + c;
            if den < 0.0 && b >= a && b >= c {
                let off = 0.5 * (a - c) / den;
                let h = 0.5 * (t[i + 1] - t[i - 1]);
                *pk = (t[i] + off * h, b - 0.25 * (a - c) * off);
            }
        }
    }
    let mut out = Vec::with_capacity(t.len());
    let mut k = 0;
    for ti in t {
        while k + 1 < peaks.len() && peaks[k + 1].0 <= *ti {
            k += 1;
        }
        let v = if *ti <= peaks[0].0 {
            peaks[0].1
        } else if k + 1 >= peaks.len() {
            peaks[k].1
        } else {
            let (ta, xa) = peaks[k];
            let (tb, xb) = peaks[k + 1];
            xa + (xb - xa) * (ti - ta) / (tb - ta)
        };
        out.push(v);
    }
    Ok(out)
}

/// Decay rate of an envelope: log-linear fit over samples with t ≤ t_max and
/// positive envelope.
pub fn envelope_rate(t: &[f64], env: &[f64], t_max: f64) -> Result<DecayFit> {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (ti, v) in t.iter().zip(env) {
        if *ti <= t_max && *v > 1e-6 {
            xs.push(*ti);
            ys.push(v.ln());
        }
    }
    if xs.len() < 20 {
        return Err(LabError::InsufficientData("fewer than 20 envelope points".into()));
    }
    let f = stats::linear_fit(&xs, &ys);
    Ok(DecayFit { rate: -f.slope, intercept: f.intercept, r_squared: f.r_squared, window: (t_max / PERIOD).round() as usize })
}

/// ω̃_q within 0.02 of a drive harmonic {1/2, 1, 3/2, 2}; rate comparisons
/// skip such points.
pub fn near_drive_resonance(omega_q_t: f64) -> bool {
    [0.5, 1.0, 1.5, 2.0].iter().any(|h| (omega_q_t - h).abs() < 0.02)
}

// ----------------------------------------------------------------- plateau

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlateauEstimate {
    /// Σ_α |⟨Φ_α|ψ₀⟩|² z_α, the long-time stroboscopic ⟨σ_z⟩.
    pub z_ss_dressed2: f64,
    /// Same sum without g–e interference in the overlaps.
    pub z_ss_l_alpha: f64,
    /// Chaotic modes only, ground-state weight spread uniformly over them.
    pub z_ss_uniform: f64,
    /// Σ_chaotic z_α² / (2 N_ch).
    pub z_ss_var: f64,
    /// Chaotic transmon modes N_ch (coupled chaotic modes / 2), n_g-averaged.
    pub n_chaotic: f64,
    /// Same count with IPR taken against the g̃ = 0 Floquet modes.
    pub n_chaotic_floquet: f64,
}

/// Per-mode quantities of a coupled Floquet decomposition.
#[derive(Debug, Clone, Serialize)]
pub struct ModeStats {
    pub quasienergy: Vec<f64>,
    pub z: Vec<f64>,
    /// IPR against TLS states ⊗ undriven transmon eigenstates.
    pub ipr: Vec<f64>,
    /// IPR against TLS states ⊗ g̃ = 0 transmon Floquet modes.
    pub ipr_floquet: Vec<f64>,
    /// ⟨Φ_α,g|0⟩ and ⟨Φ_α,e|0⟩.
    #[serde(skip)]
    pub ground_g: Vec<c64>,
    #[serde(skip)]
    pub ground_e: Vec<c64>,
}

/// Coupled Floquet modes at one n_g, with IPRs against two decoupled
/// references. Chaotic modes are those spread over many undriven
/// eigenstates; against the g̃ = 0 Floquet modes nearly every coupled mode
/// has IPR close to one at weak coupling, so that count is only reported.
pub fn coupled_mode_stats(params: &ModelParams, numerics: &QuantumNumerics) -> Result<ModeStats> {
    let basis = qtransmon::build_basis(params, numerics.d_max, numerics.d)?;
    let d = basis.d();
    let reference = qtransmon::floquet(&basis, numerics.steps_per_period)?;
    let gen = DrivenGenerator::coupled(&basis, params.omega_q_t, params.g_t);
    let one = OnePeriod::compute(&gen, numerics.steps_per_period, false)?;
    let fl = qtransmon::floquet_from_monodromy(&one.monodromy, params)?;
    let mut st = ModeStats {
        quasienergy: fl.quasienergies.clone(),
        z: Vec::with_capacity(2 * d),
        ipr: Vec::with_capacity(2 * d),
        ipr_floquet: Vec::with_capacity(2 * d),
        ground_g: Vec::with_capacity(2 * d),
        ground_e: Vec::with_capacity(2 * d),
    };
    for a in 0..fl.len() {
        let m = fl.mode(a);
        let (g, e) = m.split_at(d);
        st.z.push(bloch(g, e)[0]);
        st.ipr.push(qtransmon::ipr_native(g) + qtransmon::ipr_native(e));
        st.ipr_floquet.push(qtransmon::ipr(g, &reference.modes) + qtransmon::ipr(e, &reference.modes));
        st.ground_g.push(g[0].conj());
        st.ground_e.push(e[0].conj());
    }
    Ok(st)
}

fn plateau_one(st: &ModeStats, tls: &TlsInit, ipr_cut: f64) -> Result<PlateauEstimate> {
    let [ag, ae] = tls.amplitudes();
    let (s2, c2) = (ag.norm_sqr(), ae.norm_sqr());
    let n = st.z.len();
    let (mut dressed, mut l_alpha, mut uni, mut var) = (0.0, 0.0, 0.0, 0.0);
    let (mut n_ch, mut n_ch_floquet) = (0usize, 0usize);
    for a in 0..n {
        let z = st.z[a];
        let c = st.ground_g[a] * ag + st.ground_e[a] * ae;
        dressed += c.norm_sqr() * z;
        l_alpha += (s2 * st.ground_g[a].norm_sqr() + c2 * st.ground_e[a].norm_sqr()) * z;
        if st.ipr[a] < ipr_cut {
            n_ch += 1;
            let (rg2, re2) = (0.5 * (1.0 - z), 0.5 * (1.0 + z));
            uni += (s2 * rg2 + c2 * re2) * z;
            var += z * z;
        }
        if st.ipr_floquet[a] < ipr_cut {
            n_ch_floquet += 1;
        }
    }
    if n_ch == 0 {
        return Err(LabError::EmptyLayer("no coupled Floquet mode below the IPR cut".into()));
    }
    let half = 0.5 * n_ch as f64;
    Ok(PlateauEstimate {
        z_ss_dressed2: dressed,
        z_ss_l_alpha: l_alpha,
        z_ss_uniform: uni / half,
        z_ss_var: var / (2.0 * half),
        n_chaotic: half,
        n_chaotic_floquet: 0.5 * n_ch_floquet as f64,
    })
}

/// Plateau estimates for several TLS initial states from one set of
/// Floquet decompositions, each averaged over `n_g_list`.
pub fn plateau_floquet_multi(
    params: &ModelParams,
    numerics: &QuantumNumerics,
    tls: &[TlsInit],
    n_g_list: &[f64],
    ipr_cut: f64,
) -> Result<Vec<PlateauEstimate>> {
    for t in tls {
        t.validate()?;
    }
    if n_g_list.is_empty() {
        return invalid("need at least one n_g value");
    }
    let stats = exec::try_map_indexed(n_g_list.len(), |i| coupled_mode_stats(&params.with_n_g(n_g_list[i]), numerics))?;
    tls.iter()
        .map(|t| {
            let per: Vec<PlateauEstimate> = stats.iter().map(|s| plateau_one(s, t, ipr_cut)).collect::<Result<_>>()?;
            let avg = |f: fn(&PlateauEstimate) -> f64| per.iter().map(f).sum::<f64>() / per.len() as f64;
            Ok(PlateauEstimate {
                z_ss_dressed2: avg(|p| p.z_ss_dressed2),
                z_ss_l_alpha: avg(|p| p.z_ss_l_alpha),
                z_ss_uniform: avg(|p| p.z_ss_uniform),
                z_ss_var: avg(|p| p.z_ss_var),
                n_chaotic: avg(|p| p.n_chaotic),
                n_chaotic_floquet: avg(|p| p.n_chaotic_floquet),
            })
        })
        .collect()
}

pub fn plateau_floquet(
    params: &ModelParams,
    numerics: &QuantumNumerics,
    tls: &TlsInit,
    n_g_list: &[f64],
    ipr_cut: f64,
) -> Result<PlateauEstimate> {
    Ok(plateau_floquet_multi(params, numerics, std::slice::from_ref(tls), n_g_list, ipr_cut)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_precession() {
        let tls = TlsInit { theta: 1.0, phi: 0.3 };
        let w = 0.8;
        let dt = PERIOD / 100.0;
        let rec = evolve_semiclassical(w, 0.05, &vec![0.0; 1000], dt, &tls, 1).unwrap();
        for (t, sx) in rec.t.iter().zip(&rec.sx) {
            // e-component rotates as e^{−iωt/2}, g as e^{+iωt/2}
            let expect = tls.theta.sin() * (w * t - tls.phi).cos();
            assert!((sx - expect).abs() < 1e-9);
        }
        assert!(rec.sz.iter().all(|z| (z - tls.theta.cos()).abs() < 1e-12));
    }

    #[test]
    fn step_is_unitary() {
        let mut a = TlsInit { theta: 0.7, phi: 1.1 }.amplitudes();
        for k in 0..10_000 {
            tls_step(0.7, 0.3, (k as f64).sin() * 3.0, 0.05, &mut a);
        }
        assert!((a[0].norm_sqr() + a[1].norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coarse_drive_rejected() {
        let r = evolve_semiclassical(0.7, 0.01, &[0.0; 10], PERIOD / 40.0, &TlsInit::EXCITED, 1);
        assert!(matches!(r, Err(LabError::Accuracy(_))));
    }

    #[test]
    fn rate_of_exact_exponential() {
        let t: Vec<f64> = (0..=300).map(|n| n as f64 * PERIOD).collect();
        let x: Vec<f64> = t.iter().map(|t| (-0.001 * t).exp()).collect();
        let f = extract_rate(&t, &x, 200).unwrap();
        assert!((f.rate - 0.001).abs() < 1e-12);
        assert_eq!(f.window, 200);
        let c = extract_rate(&t, &vec![0.4; t.len()], 200).unwrap();
        assert!(c.rate.abs() < 1e-15);
        assert!(matches!(extract_rate(&t[..10], &x[..10], 200), Err(LabError::InsufficientData(_))));
    }

    #[test]
    fn envelope_of_damped_cosine() {
        let dt = PERIOD / 40.0;
        let (g, w) = (0.002, 0.7);
        let t: Vec<f64> = (0..8000).map(|k| k as f64 * dt).collect();
        let x: Vec<f64> = t.iter().map(|t| (-g * t).exp() * (w * t).cos()).collect();
        let env = upper_envelope(&t, &x).unwrap();
        let n = t.len();
        for k in n / 20..n - n / 20 {
            let e = (-g * t[k]).exp();
            assert!((env[k] - e).abs() < 0.02 * e, "{} {} {}", t[k], env[k], e);
        }
        let om = dominant_frequency(&t, &x, 50.0 * PERIOD).unwrap();
        assert!((om - w).abs() < 0.01);
    }

    #[test]
    fn resonance_flags() {
        assert!(near_drive_resonance(1.01));
        assert!(near_drive_resonance(0.49));
        assert!(!near_drive_resonance(std::f64::consts::FRAC_1_SQRT_2));
    }

    #[test]
    fn bloch_of_init() {
        let t = TlsInit { theta: PI / 3.0, phi: PI / 2.0 };
        let [g, e] = t.amplitudes();
        let b = bloch(&[g], &[e]);
        assert!((b[0] - 0.5).abs() < 1e-15);
        assert!(b[1].abs() < 1e-15);
        // the e-amplitude phase enters with the opposite sign of the Bloch azimuth
        assert!((b[2] + (PI / 3.0).sin()).abs() < 1e-15);
    }
}
