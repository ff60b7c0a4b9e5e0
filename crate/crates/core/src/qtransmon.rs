//! Quantum transmon in the displaced frame.
//!
//! The state obeys i dψ/dt = G(t)ψ with
//! G(t) = ħ_eff(n − n_g)²/2 − (λ/ħ_eff) cos(φ − ξ_d sin t),
//! represented in the d lowest eigenstates of the undriven transmon, which
//! are computed from a charge basis n = −D…D with e^{iφ}|n⟩ = |n+1⟩.
//!
//! In that real eigenbasis G(a) = diag(E) + κ(1 − cos a)C + iκ sin a·S with
//! κ = λ/ħ_eff, a = ξ_d sin t, C = cos φ and S = (e^{iφ} − e^{−iφ})/2 (so
//! sin φ = −iS). Because G(−a) = conj G(a) and the midpoint drive values are
//! mirror-symmetric within a period, one period costs N/4 matrix
//! exponentials instead of N.

use crate::error::{invalid, LabError, Result};
use crate::exec;
use crate::linalg::{self, c64, CMat, RMat};
use crate::params::{ModelParams, PERIOD};
use crate::pendulum::PhasePoint;
use crate::stats;
use faer::Mat;
use rand::Rng;
use serde::Serialize;
use std::f64::consts::PI;

/// Reference truncation (D = 200, d = 100 at ħ_eff = 0.16), scaled ∝ 1/ħ_eff.
pub const REF_HBAR: f64 = 0.16;
pub const REF_CHARGE_CUTOFF: usize = 200;
pub const REF_DIM: usize = 100;
/// Default midpoint-Magnus steps per period (must be a multiple of 4).
pub const DEFAULT_STEPS: usize = 512;
/// Largest tolerated ‖U†U − I‖ entry.
pub const UNITARITY_TOL: f64 = 1e-8;

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

/// (D, d) for a given ħ_eff under the inverse-proportional scaling rule.
pub fn basis_sizes(hbar_eff: f64) -> (usize, usize) {
    let s = REF_HBAR / hbar_eff;
    (
        ((REF_CHARGE_CUTOFF as f64 * s).round() as usize).max(1),
        ((REF_DIM as f64 * s).round() as usize).max(1),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChargeBasis {
    /// Charge cutoff D; states n = −D…D.
    pub d_max: usize,
    pub n_g: f64,
}

impl ChargeBasis {
    pub fn dim(&self) -> usize {
        2 * self.d_max + 1
    }

    pub fn charge(&self, i: usize) -> f64 {
        i as f64 - self.d_max as f64
    }

    pub fn charges(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.charge(i)).collect()
    }
}

/// Undriven transmon eigenbasis plus the operators needed for driving.
#[derive(Debug, Clone)]
pub struct TransmonBasis {
    pub params: ModelParams,
    pub charge: ChargeBasis,
    /// Eigenvalues of the generator (energies divided by ħ_eff), ascending.
    pub eigenvalues: Vec<f64>,
    /// Charge-basis components of the retained eigenvectors, one per column.
    pub transform: RMat,
    /// n̂, n̂², cos φ and S in the eigenbasis.
    pub n_op: RMat,
    pub n2_op: RMat,
    pub cos_op: RMat,
    pub sin_op: RMat,
}

impl TransmonBasis {
    pub fn d(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Rescaled energies ħ_eff·eigenvalues.
    pub fn energies(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|e| e * self.params.hbar_eff).collect()
    }

    pub fn ground_state(&self) -> Vec<c64> {
        let mut v = vec![ZERO; self.d()];
        v[0] = c64::new(1.0, 0.0);
        v
    }

    /// Eigenbasis amplitudes → charge-basis amplitudes.
    pub fn to_charge(&self, amps: &[c64]) -> Vec<c64> {
        let v = &self.transform;
        let mut out = vec![ZERO; v.nrows()];
        for (k, a) in amps.iter().enumerate() {
            for (o, vik) in out.iter_mut().zip(v.col(k).iter()) {
                *o += a * vik;
            }
        }
        out
    }

    /// Charge-basis amplitudes → eigenbasis amplitudes (projection).
    pub fn from_charge(&self, psi: &[c64]) -> Vec<c64> {
        (0..self.d()).map(|k| self.transform.col(k).iter().zip(psi).map(|(v, p)| p * v).sum()).collect()
    }

    /// Generator of the driven transmon in this basis.
    pub fn generator(&self) -> DrivenGenerator {
        let d = self.d();
        DrivenGenerator {
            h0: Mat::from_fn(d, d, |i, j| if i == j { self.eigenvalues[i] } else { 0.0 }),
            cos_op: self.cos_op.clone(),
            sin_op: self.sin_op.clone(),
            kappa: self.params.lambda / self.params.hbar_eff,
            xi_d: self.params.xi_d,
        }
    }
}

/// Tridiagonal charge-basis generator ħ(n − n_g)²/2 − (λ/ħ) cos φ.
pub fn charge_hamiltonian(params: &ModelParams, cb: &ChargeBasis) -> RMat {
    let n = cb.dim();
    let hb = params.hbar_eff;
    let off = -0.5 * params.lambda / hb;
    Mat::from_fn(n, n, |i, j| {
        if i == j {
            let q = cb.charge(i) - params.n_g;
            0.5 * hb * q * q
        } else if i.abs_diff(j) == 1 {
            off
        } else {
            0.0
        }
    })
}

/// Vᵀ X V for X acting on charge vectors through `apply`.
fn project(v: &RMat, apply: impl Fn(&[f64], &mut [f64])) -> RMat {
    let (rows, d) = (v.nrows(), v.ncols());
    let mut xv = Mat::<f64>::zeros(rows, d);
    let mut col = vec![0.0; rows];
    let mut out = vec![0.0; rows];
    for k in 0..d {
        for (c, x) in col.iter_mut().zip(v.col(k).iter()) {
            *c = *x;
        }
        apply(&col, &mut out);
        for (i, o) in out.iter().enumerate() {
            xv[(i, k)] = *o;
        }
    }
    v.transpose() * &xv
}

pub fn build_basis(params: &ModelParams, d_max: usize, d: usize) -> Result<TransmonBasis> {
    params.validate()?;
    let cb = ChargeBasis { d_max, n_g: params.n_g };
    if d_max == 0 || d == 0 || d > cb.dim() {
        return invalid(format!("need D >= 1 and 1 <= d <= 2D+1, got D={d_max}, d={d}"));
    }
    let h = charge_hamiltonian(params, &cb);
    let (vals, vecs) = linalg::sym_eig(h.as_ref())?;
    let rows = cb.dim();
    // deterministic sign: largest-magnitude component positive
    let mut transform = Mat::<f64>::zeros(rows, d);
    for k in 0..d {
        let mut big = 0.0f64;
        for i in 0..rows {
            if vecs[(i, k)].abs() > big.abs() {
                big = vecs[(i, k)];
            }
        }
        let s = big.signum();
        for i in 0..rows {
            transform[(i, k)] = s * vecs[(i, k)];
        }
    }
    let charges = cb.charges();
    let n_op = project(&transform, |x, y| {
        for i in 0..x.len() {
            y[i] = charges[i] * x[i];
        }
    });
    let n2_op = project(&transform, |x, y| {
        for i in 0..x.len() {
            y[i] = charges[i] * charges[i] * x[i];
        }
    });
    // (e^{iφ}x)_i = x_{i−1}; (e^{−iφ}x)_i = x_{i+1}
    let cos_op = project(&transform, |x, y| {
        for i in 0..x.len() {
            let up = if i > 0 { x[i - 1] } else { 0.0 };
            let dn = if i + 1 < x.len() { x[i + 1] } else { 0.0 };
            y[i] = 0.5 * (up + dn);
        }
    });
    let sin_op = project(&transform, |x, y| {
        for i in 0..x.len() {
            let up = if i > 0 { x[i - 1] } else { 0.0 };
            let dn = if i + 1 < x.len() { x[i + 1] } else { 0.0 };
            y[i] = 0.5 * (up - dn);
        }
    });
    Ok(TransmonBasis {
        params: *params,
        charge: cb,
        eigenvalues: vals[..d].to_vec(),
        transform,
        n_op,
        n2_op,
        cos_op,
        sin_op,
    })
}

/// Basis with the default sizes for the parameters' ħ_eff.
pub fn build_default_basis(params: &ModelParams) -> Result<TransmonBasis> {
    let (d_max, d) = basis_sizes(params.hbar_eff);
    build_basis(params, d_max, d)
}

/// G(a) = h0 + κ(1 − cos a)·C + iκ sin a·S with a = ξ_d sin t. h0 and C are
/// real symmetric, S real antisymmetric.
#[derive(Debug, Clone)]
pub struct DrivenGenerator {
    pub h0: RMat,
    pub cos_op: RMat,
    pub sin_op: RMat,
    pub kappa: f64,
    pub xi_d: f64,
}

impl DrivenGenerator {
    pub fn dim(&self) -> usize {
        self.h0.nrows()
    }

    pub fn at_shift(&self, a: f64) -> CMat {
        let cr = self.kappa * (1.0 - a.cos());
        let ci = self.kappa * a.sin();
        let n = self.dim();
        Mat::from_fn(n, n, |i, j| {
            c64::new(self.h0[(i, j)] + cr * self.cos_op[(i, j)], ci * self.sin_op[(i, j)])
        })
    }

    pub fn at(&self, t: f64) -> CMat {
        self.at_shift(self.xi_d * t.sin())
    }

    /// TLS ⊗ transmon generator with block order [|g⟩, |e⟩]:
    /// (ω̃_q/2)σ_z + g̃ ħ_eff n σ_x + transmon part.
    pub fn coupled(basis: &TransmonBasis, omega_q_t: f64, g_t: f64) -> Self {
        let d = basis.d();
        let gn = g_t * basis.params.hbar_eff;
        let h0 = Mat::from_fn(2 * d, 2 * d, |i, j| {
            let (bi, bj) = (i / d, j / d);
            let (ii, jj) = (i % d, j % d);
            if bi == bj {
                if ii == jj {
                    let s = if bi == 0 { -0.5 } else { 0.5 };
                    basis.eigenvalues[ii] + s * omega_q_t
                } else {
                    0.0
                }
            } else {
                gn * basis.n_op[(ii, jj)]
            }
        });
        let block = |m: &RMat| Mat::from_fn(2 * d, 2 * d, |i, j| if i / d == j / d { m[(i % d, j % d)] } else { 0.0 });
        DrivenGenerator {
            h0,
            cos_op: block(&basis.cos_op),
            sin_op: block(&basis.sin_op),
            kappa: basis.params.lambda / basis.params.hbar_eff,
            xi_d: basis.params.xi_d,
        }
    }
}

/// One drive period of midpoint-Magnus steps.
#[derive(Debug, Clone)]
pub struct OnePeriod {
    pub n_steps: usize,
    /// U(T, 0).
    pub monodromy: CMat,
    /// exp(−ihG(a_j)) for the first quarter of the steps, if kept.
    quarter: Option<Vec<CMat>>,
}

impl OnePeriod {
    /// Builds U(T) = PᵀP with P = (V₀⋯V_{K−1})(V_{K−1}⋯V₀), K = N/4, using
    /// V(−a) = V(a)ᵀ and the mirror symmetry of the midpoint drive values.
    pub fn compute(gen: &DrivenGenerator, n_steps: usize, keep_steps: bool) -> Result<Self> {
        if n_steps == 0 || n_steps % 4 != 0 {
            return invalid("steps per period must be a positive multiple of 4");
        }
        let h = PERIOD / n_steps as f64;
        let k = n_steps / 4;
        let mut kept = Vec::new();
        let mut q: Option<CMat> = None;
        let mut r: Option<CMat> = None;
        for j in 0..k {
            let a = gen.xi_d * ((j as f64 + 0.5) * h).sin();
            let v = linalg::expm_herm(gen.at_shift(a).as_ref(), h)?;
            q = Some(match q {
                None => v.clone(),
                Some(q) => &v * &q,
            });
            r = Some(match r {
                None => v.clone(),
                Some(r) => &r * &v,
            });
            if keep_steps {
                kept.push(v);
            }
        }
        let p = r.expect("k >= 1") * q.expect("k >= 1");
        let monodromy = p.transpose() * &p;
        Ok(OnePeriod { n_steps, monodromy, quarter: keep_steps.then_some(kept) })
    }

    /// Release the cached step matrices.
    pub fn discard_steps(&mut self) {
        self.quarter = None;
    }

    /// Apply step j (0 ≤ j < N) of the period to a state.
    pub fn apply_step(&self, j: usize, psi: &[c64]) -> Vec<c64> {
        let q = self.quarter.as_ref().expect("OnePeriod built without keep_steps");
        let n = self.n_steps;
        let k = n / 4;
        match j / k {
            0 => linalg::matvec(q[j].as_ref(), psi),
            1 => linalg::matvec(q[n / 2 - 1 - j].as_ref(), psi),
            2 => linalg::matvec_t(q[j - n / 2].as_ref(), psi),
            _ => linalg::matvec_t(q[n - 1 - j].as_ref(), psi),
        }
    }

    /// Apply step j to every column of `m`.
    pub fn apply_step_mat(&self, j: usize, m: &CMat) -> CMat {
        let q = self.quarter.as_ref().expect("OnePeriod built without keep_steps");
        let n = self.n_steps;
        let k = n / 4;
        match j / k {
            0 => &q[j] * m,
            1 => &q[n / 2 - 1 - j] * m,
            2 => q[j - n / 2].transpose() * m,
            _ => q[n - 1 - j].transpose() * m,
        }
    }

    pub fn apply_period(&self, psi: &[c64]) -> Vec<c64> {
        linalg::matvec(self.monodromy.as_ref(), psi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub amplitudes: Vec<c64>,
    pub t: f64,
}

impl WaveState {
    pub fn new(amplitudes: Vec<c64>, t: f64) -> Self {
        WaveState { amplitudes, t }
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.amplitudes)
    }
}

/// Midpoint-Magnus evolution from `state.t` to `t1` with a fixed step
/// count per period. When both ends are whole periods the cached
/// monodromy is reused; otherwise every step is exponentiated.
pub fn propagate_fixed(gen: &DrivenGenerator, state: &WaveState, t1: f64, n_steps: usize) -> Result<WaveState> {
    let h = PERIOD / n_steps as f64;
    let span = (t1 - state.t) / h;
    let n = span.round();
    if n < 0.0 || (span - n).abs() > 1e-8 {
        return invalid("t1 - t0 must be a non-negative multiple of T/n_steps");
    }
    let n = n as usize;
    let aligned = |t: f64| ((t / PERIOD) - (t / PERIOD).round()).abs() < 1e-12;
    let mut psi = state.amplitudes.clone();
    if aligned(state.t) && n % n_steps == 0 && n_steps % 4 == 0 {
        let one = OnePeriod::compute(gen, n_steps, false)?;
        for _ in 0..n / n_steps {
            psi = one.apply_period(&psi);
        }
    } else {
        for j in 0..n {
            let tm = state.t + (j as f64 + 0.5) * h;
            let v = linalg::expm_herm(gen.at(tm).as_ref(), h)?;
            psi = linalg::matvec(v.as_ref(), &psi);
        }
    }
    Ok(WaveState { amplitudes: psi, t: t1 })
}

/// Distance tolerance between step-doubled results.
pub const PROPAGATE_TOL: f64 = 1e-6;

/// [`propagate_fixed`] with a convergence check: the step count is doubled
/// until two successive results agree to [`PROPAGATE_TOL`] (at most two
/// doublings).
pub fn propagate(gen: &DrivenGenerator, state: &WaveState, t1: f64, n_steps: usize) -> Result<WaveState> {
    let norm0 = state.norm();
    if (norm0 - 1.0).abs() > 1e-10 {
        return invalid("state must be normalized");
    }
    let mut prev = propagate_fixed(gen, state, t1, n_steps)?;
    let mut last_diff = f64::INFINITY;
    for doubling in 1..=2 {
        let next = propagate_fixed(gen, state, t1, n_steps << doubling)?;
        last_diff = prev.amplitudes.iter().zip(&next.amplitudes).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        if last_diff < PROPAGATE_TOL {
            return Ok(next);
        }
        prev = next;
    }
    Err(LabError::Accuracy(format!(
        "propagation not converged after two step doublings (difference {last_diff:.3e})"
    )))
}

/// Fourth-order commutator-free Magnus step (two exponentials).
pub fn cfm4_step(gen_at: &dyn Fn(f64) -> CMat, psi: &[c64], t: f64, h: f64) -> Result<Vec<c64>> {
    let s3 = 3f64.sqrt();
    let (t1, t2) = (t + (0.5 - s3 / 6.0) * h, t + (0.5 + s3 / 6.0) * h);
    let (a1, a2) = ((3.0 - 2.0 * s3) / 12.0, (3.0 + 2.0 * s3) / 12.0);
    let g1 = gen_at(t1);
    let g2 = gen_at(t2);
    let n = g1.nrows();
    let first = Mat::from_fn(n, n, |i, j| a2 * g1[(i, j)] + a1 * g2[(i, j)]);
    let second = Mat::from_fn(n, n, |i, j| a1 * g1[(i, j)] + a2 * g2[(i, j)]);
    let psi = linalg::matvec(linalg::expm_herm(first.as_ref(), h)?.as_ref(), psi);
    Ok(linalg::matvec(linalg::expm_herm(second.as_ref(), h)?.as_ref(), &psi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameCheck {
    pub n_displaced: f64,
    pub n_lab: f64,
    pub n2_displaced: f64,
    pub n2_lab: f64,
}

impl FrameCheck {
    pub fn max_deviation(&self) -> f64 {
        (self.n_displaced - self.n_lab).abs().max((self.n2_displaced - self.n2_lab).abs())
    }
}

/// Evolves `psi0` for `n_periods` both in the displaced frame and in the
/// lab frame (drive −ξ_d cos t·n̂ on the undriven transmon) with CFM4, and
/// reports ⟨n̂⟩, ⟨n̂²⟩ from each. The two frames differ by
/// exp(−iξ_d sin t·n̂), which is the identity at whole periods.
pub fn lab_frame_check(basis: &TransmonBasis, psi0: &[c64], n_periods: usize, steps_per_period: usize) -> Result<FrameCheck> {
    let gen = basis.generator();
    let d = basis.d();
    let xi = basis.params.xi_d;
    let lab = |t: f64| -> CMat {
        let f = -xi * t.cos();
        Mat::from_fn(d, d, |i, j| c64::new(gen.h0[(i, j)] + f * basis.n_op[(i, j)], 0.0))
    };
    let disp = |t: f64| gen.at(t);
    let h = PERIOD / steps_per_period as f64;
    let (mut a, mut b) = (psi0.to_vec(), psi0.to_vec());
    for j in 0..n_periods * steps_per_period {
        let t = j as f64 * h;
        a = cfm4_step(&disp, &a, t, h)?;
        b = cfm4_step(&lab, &b, t, h)?;
    }
    Ok(FrameCheck {
        n_displaced: linalg::expect_real_sym(basis.n_op.as_ref(), &a),
        n_lab: linalg::expect_real_sym(basis.n_op.as_ref(), &b),
        n2_displaced: linalg::expect_real_sym(basis.n2_op.as_ref(), &a),
        n2_lab: linalg::expect_real_sym(basis.n2_op.as_ref(), &b),
    })
}

/// |⟨ψ|[n̂, cos φ] − i sin φ|ψ⟩| with the charge-shift operators wrapped
/// periodically at ±D. The identity holds exactly for every pair of
/// interior neighbours, so only amplitude at the cutoff contributes.
pub fn commutator_check_charge(psi: &[c64]) -> f64 {
    let m = psi.len();
    let d = (m as f64 - 1.0) / 2.0;
    let charge = |i: usize| i as f64 - d;
    // X = [n, cos φ] − S with S = (e^{iφ} − e^{−iφ})/2, periodic shifts
    let mut acc = ZERO;
    for i in 0..m {
        let below = (i + m - 1) % m; // e^{iφ}: |below⟩ → |i⟩
        let above = (i + 1) % m; // e^{−iφ}: |above⟩ → |i⟩
        let x_below = 0.5 * (charge(i) - charge(below)) - 0.5;
        let x_above = 0.5 * (charge(i) - charge(above)) + 0.5;
        let xpsi = x_below * psi[below] + x_above * psi[above];
        acc += psi[i].conj() * xpsi;
    }
    acc.norm()
}

/// Commutator check for an eigenbasis state.
pub fn commutator_check(basis: &TransmonBasis, amps: &[c64]) -> f64 {
    commutator_check_charge(&basis.to_charge(amps))
}

#[derive(Debug, Clone, Serialize)]
pub struct FloquetDecomposition {
    /// ε_α in (−1/2, 1/2], with U(T)φ_α = e^{−iε_α T}φ_α.
    pub quasienergies: Vec<f64>,
    /// Period-start modes φ_α(0), one per column, sorted by quasienergy.
    #[serde(skip)]
    pub modes: CMat,
    pub period: f64,
    pub params: ModelParams,
    pub unitarity_deviation: f64,
    pub residual: f64,
}

impl FloquetDecomposition {
    pub fn mode(&self, alpha: usize) -> Vec<c64> {
        self.modes.col(alpha).iter().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.quasienergies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quasienergies.is_empty()
    }
}

pub fn fold_quasienergy(eps: f64) -> f64 {
    let e = eps - eps.round();
    if e <= -0.5 {
        e + 1.0
    } else {
        e
    }
}

/// Floquet modes and quasienergies of a one-period propagator.
pub fn floquet_from_monodromy(u: &CMat, params: &ModelParams) -> Result<FloquetDecomposition> {
    let dev = linalg::unitarity_deviation(u.as_ref());
    if !(dev < UNITARITY_TOL) {
        return Err(LabError::Accuracy(format!("U(T) not unitary: deviation {dev:.3e}")));
    }
    let eig = linalg::unitary_eig(u.as_ref())?;
    let eps: Vec<f64> = eig.values.iter().map(|mu| fold_quasienergy(-mu.arg() / (2.0 * PI))).collect();
    let mut order: Vec<usize> = (0..eps.len()).collect();
    order.sort_by(|&a, &b| eps[a].total_cmp(&eps[b]));
    let n = eps.len();
    let modes = Mat::from_fn(n, n, |i, j| eig.vectors[(i, order[j])]);
    Ok(FloquetDecomposition {
        quasienergies: order.iter().map(|&k| eps[k]).collect(),
        modes,
        period: PERIOD,
        params: *params,
        unitarity_deviation: dev,
        residual: eig.residual,
    })
}

pub fn floquet(basis: &TransmonBasis, n_steps: usize) -> Result<FloquetDecomposition> {
    let one = OnePeriod::compute(&basis.generator(), n_steps, false)?;
    floquet_from_monodromy(&one.monodromy, &basis.params)
}

/// Σ_j |⟨ref_j|v⟩|⁴ over the columns of `reference`.
pub fn ipr(v: &[c64], reference: &CMat) -> f64 {
    (0..reference.ncols())
        .map(|j| {
            let o: c64 = reference.col(j).iter().zip(v).map(|(r, x)| r.conj() * x).sum();
            o.norm_sqr().powi(2)
        })
        .sum()
}

/// Σ_i |v_i|⁴ (IPR against the basis the vector is expressed in).
pub fn ipr_native(v: &[c64]) -> f64 {
    v.iter().map(|z| z.norm_sqr().powi(2)).sum()
}

// ---------------------------------------------------------------- Husimi

/// Squared momentum width of the coherent-state kernel, ħ_eff√λ/2.
pub fn kernel_sigma_p2(params: &ModelParams) -> f64 {
    0.5 * params.hbar_eff * params.lambda.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HusimiGrid {
    pub theta: Vec<f64>,
    pub p: Vec<f64>,
    /// Row-major density q[ip * n_theta + it]; Σ q · cell = 1.
    pub q: Vec<f64>,
    /// Σ |⟨α|ψ⟩|² · cell / (2πħ_eff) before normalization; ≈ 1 when the
    /// grid covers the state.
    pub raw_total: f64,
}

impl HusimiGrid {
    pub fn cell(&self) -> f64 {
        let dt = if self.theta.len() > 1 { self.theta[1] - self.theta[0] } else { 2.0 * PI };
        let dp = if self.p.len() > 1 { self.p[1] - self.p[0] } else { 1.0 };
        dt * dp
    }

    pub fn at(&self, ip: usize, it: usize) -> f64 {
        self.q[ip * self.theta.len() + it]
    }

    /// Grid-weighted (θ, p) mean.
    pub fn mean(&self) -> (f64, f64) {
        let (mut mt, mut mp) = (0.0, 0.0);
        let c = self.cell();
        for (ip, p) in self.p.iter().enumerate() {
            for (it, t) in self.theta.iter().enumerate() {
                let w = self.at(ip, it) * c;
                mt += w * t;
                mp += w * p;
            }
        }
        (mt, mp)
    }

    /// Grid-weighted (var θ, var p).
    pub fn variances(&self) -> (f64, f64) {
        let (mt, mp) = self.mean();
        let (mut vt, mut vp) = (0.0, 0.0);
        let c = self.cell();
        for (ip, p) in self.p.iter().enumerate() {
            for (it, t) in self.theta.iter().enumerate() {
                let w = self.at(ip, it) * c;
                vt += w * (t - mt) * (t - mt);
                vp += w * (p - mp) * (p - mp);
            }
        }
        (vt, vp)
    }
}

/// Husimi function Q(θ₀, p₀) = |⟨θ₀, p₀|ψ⟩|² of a charge-basis state, using
/// Gaussian coherent states ∝ exp(−(ħn − p₀)²/(4σ_p²)) e^{−inθ₀}.
pub fn husimi(params: &ModelParams, psi_charge: &[c64], theta_grid: &[f64], p_grid: &[f64]) -> Result<HusimiGrid> {
    if theta_grid.is_empty() || p_grid.is_empty() {
        return invalid("husimi grids must be non-empty");
    }
    let m = psi_charge.len();
    let d = (m as f64 - 1.0) / 2.0;
    let hb = params.hbar_eff;
    let s2 = kernel_sigma_p2(params);
    let mut q = Vec::with_capacity(theta_grid.len() * p_grid.len());
    for &p0 in p_grid {
        let mut w: Vec<(f64, c64)> = Vec::new();
        let mut norm = 0.0;
        for (i, a) in psi_charge.iter().enumerate() {
            let n = i as f64 - d;
            let g = (-(hb * n - p0).powi(2) / (4.0 * s2)).exp();
            norm += g * g;
            if g > 1e-300 {
                w.push((n, a * g));
            }
        }
        let norm = norm.sqrt();
        for &t0 in theta_grid {
            let overlap: c64 = w.iter().map(|(n, x)| x * c64::cis(n * t0)).sum();
            q.push((overlap / norm).norm_sqr());
        }
    }
    let mut grid = HusimiGrid { theta: theta_grid.to_vec(), p: p_grid.to_vec(), q, raw_total: 0.0 };
    let cell = grid.cell();
    let total: f64 = grid.q.iter().sum::<f64>() * cell;
    grid.raw_total = total / (2.0 * PI * hb);
    if total > 0.0 {
        for v in &mut grid.q {
            *v /= total;
        }
    }
    Ok(grid)
}

fn bilinear(grid: &HusimiGrid, theta: f64, p: f64) -> f64 {
    let (t0, p0) = (grid.theta[0], grid.p[0]);
    let nt = grid.theta.len();
    let np = grid.p.len();
    let dt = grid.theta[1] - t0;
    let dp = grid.p[1] - p0;
    let x = ((theta - t0) / dt).clamp(0.0, (nt - 1) as f64);
    let y = ((p - p0) / dp).clamp(0.0, (np - 1) as f64);
    let (i, j) = ((x.floor() as usize).min(nt - 2), (y.floor() as usize).min(np - 2));
    let (fx, fy) = (x - i as f64, y - j as f64);
    let q = |jp: usize, it: usize| grid.at(jp, it);
    (1.0 - fy) * ((1.0 - fx) * q(j, i) + fx * q(j, i + 1)) + fy * ((1.0 - fx) * q(j + 1, i) + fx * q(j + 1, i + 1))
}

/// Rejection sampling from the bilinear interpolant of a Husimi grid.
/// Sample i uses random stream i of `seed`.
pub fn sample_husimi(grid: &HusimiGrid, n_samples: usize, seed: u64) -> Result<Vec<PhasePoint>> {
    if grid.theta.len() < 2 || grid.p.len() < 2 {
        return invalid("sampling needs at least a 2x2 grid");
    }
    let qmax = grid.q.iter().cloned().fold(0.0, f64::max);
    if !(qmax > 0.0) {
        return invalid("Husimi grid is identically zero");
    }
    let (tlo, thi) = (grid.theta[0], *grid.theta.last().unwrap());
    let (plo, phi) = (grid.p[0], *grid.p.last().unwrap());
    Ok(exec::map_indexed(n_samples, |i| {
        let mut rng = exec::stream_rng(seed, i as u64);
        loop {
            let th = tlo + (thi - tlo) * rng.random::<f64>();
            let p = plo + (phi - plo) * rng.random::<f64>();
            if rng.random::<f64>() * qmax < bilinear(grid, th, p) {
                return PhasePoint::new(th, p);
            }
        }
    }))
}

/// Undriven ground state in the charge basis.
pub fn ground_state_charge(params: &ModelParams) -> Result<Vec<c64>> {
    let (d_max, _) = basis_sizes(params.hbar_eff);
    let b = build_basis(params, d_max, 1)?;
    Ok(b.to_charge(&b.ground_state()))
}

/// Grid covering ±6 Husimi widths around the origin.
pub fn ground_husimi(params: &ModelParams, n_grid: usize) -> Result<HusimiGrid> {
    let psi = ground_state_charge(params)?;
    let sp = (2.0 * kernel_sigma_p2(params)).sqrt();
    let st = params.hbar_eff / (2.0 * kernel_sigma_p2(params).sqrt()) * 2f64.sqrt();
    let pmax = 6.0 * sp;
    let tmax = (6.0 * st).min(PI);
    let lin = |lo: f64, hi: f64| -> Vec<f64> { (0..n_grid).map(|i| lo + (hi - lo) * i as f64 / (n_grid - 1) as f64).collect() };
    husimi(params, &psi, &lin(-tmax, tmax), &lin(-pmax, pmax))
}

/// Initial conditions drawn from the ground-state Husimi function.
pub fn sample_ground_husimi(params: &ModelParams, n: usize, seed: u64) -> Result<Vec<PhasePoint>> {
    let grid = ground_husimi(params, 121)?;
    sample_husimi(&grid, n, seed)
}

// ------------------------------------------------ distributions and spread

/// |⟨n|ψ⟩|² over the charge basis for an eigenbasis state.
pub fn charge_probabilities(basis: &TransmonBasis, amps: &[c64]) -> Vec<f64> {
    basis.to_charge(amps).iter().map(|z| z.norm_sqr()).collect()
}

/// Average of per-n_g distributions over a common charge grid.
pub fn momentum_distribution(per_ng: &[Vec<f64>]) -> Result<Vec<f64>> {
    let len = per_ng.first().map(|v| v.len()).unwrap_or(0);
    if len == 0 || per_ng.iter().any(|v| v.len() != len) {
        return invalid("distributions must be non-empty and share one grid");
    }
    let mut out = vec![0.0; len];
    for v in per_ng {
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    let k = per_ng.len() as f64;
    out.iter_mut().for_each(|o| *o /= k);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalizationFit {
    pub l_fit: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Fits log P(n) = c − |n|/l over points with P > 1e−8, |n| ≥ l_n/2 and,
/// if given, |n| ≤ n_cap.
pub fn localization_fit(charges: &[f64], prob: &[f64], l_n: f64, n_cap: Option<f64>) -> Result<LocalizationFit> {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (n, p) in charges.iter().zip(prob) {
        let a = n.abs();
        if *p > 1e-8 && a >= 0.5 * l_n && n_cap.is_none_or(|c| a <= c) {
            xs.push(a);
            ys.push(p.ln());
        }
    }
    if xs.len() < 3 {
        return Err(LabError::InsufficientData("fewer than 3 points in the fit window".into()));
    }
    let f = stats::linear_fit(&xs, &ys);
    if !(f.slope < 0.0) {
        return Err(LabError::NoSolution("distribution does not decay".into()));
    }
    Ok(LocalizationFit { l_fit: -1.0 / f.slope, intercept: f.intercept, r_squared: f.r_squared, n_points: xs.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantumSpread {
    /// Stroboscopic σ_p = ħ_eff·std(n) of the n_g-averaged distribution.
    pub sigma_p: Vec<f64>,
    /// Time average over the final half.
    pub sigma_bar: f64,
    /// n_g-averaged charge distribution at the final period.
    pub final_distribution: Vec<f64>,
    /// n_g-averaged charge distribution, also averaged over the final half.
    pub mean_distribution: Vec<f64>,
    pub charges: Vec<f64>,
    pub max_commutator: f64,
}

/// Ground state evolved stroboscopically for each n_g; moments of the
/// n_g-averaged charge distribution at every period.
pub fn quantum_spread(params: &ModelParams, n_g_list: &[f64], n_periods: usize, d_max: usize, d: usize, n_steps: usize) -> Result<QuantumSpread> {
    if n_g_list.is_empty() {
        return invalid("need at least one n_g value");
    }
    struct One {
        n1: Vec<f64>,
        n2: Vec<f64>,
        last: Vec<f64>,
        mean: Vec<f64>,
        comm: f64,
    }
    let runs = exec::try_map_indexed(n_g_list.len(), |i| -> Result<One> {
        let p = params.with_n_g(n_g_list[i]);
        let basis = build_basis(&p, d_max, d)?;
        let one = OnePeriod::compute(&basis.generator(), n_steps, false)?;
        let mut psi = basis.ground_state();
        let mut n1 = Vec::with_capacity(n_periods + 1);
        let mut n2 = Vec::with_capacity(n_periods + 1);
        let mut comm: f64 = 0.0;
        let mut mean = vec![0.0; basis.charge.dim()];
        let start = n_periods - n_periods / 2;
        for k in 0..=n_periods {
            if k > 0 {
                psi = one.apply_period(&psi);
            }
            if k >= start {
                for (m, q) in mean.iter_mut().zip(charge_probabilities(&basis, &psi)) {
                    *m += q;
                }
            }
            n1.push(linalg::expect_real_sym(basis.n_op.as_ref(), &psi));
            n2.push(linalg::expect_real_sym(basis.n2_op.as_ref(), &psi));
            if k % 50 == 0 || k == n_periods {
                comm = comm.max(commutator_check(&basis, &psi));
            }
        }
        let w = 1.0 / (n_periods - start + 1) as f64;
        mean.iter_mut().for_each(|m| *m *= w);
        Ok(One { n1, n2, last: charge_probabilities(&basis, &psi), mean, comm })
    })?;
    let k = runs.len() as f64;
    let hb = params.hbar_eff;
    let sigma_p: Vec<f64> = (0..=n_periods)
        .map(|t| {
            let m1 = runs.iter().map(|r| r.n1[t]).sum::<f64>() / k;
            let m2 = runs.iter().map(|r| r.n2[t]).sum::<f64>() / k;
            hb * (m2 - m1 * m1).max(0.0).sqrt()
        })
        .collect();
    let half = n_periods / 2;
    let sigma_bar = stats::mean(&sigma_p[n_periods - half..]);
    let lasts: Vec<Vec<f64>> = runs.iter().map(|r| r.last.clone()).collect();
    let means: Vec<Vec<f64>> = runs.iter().map(|r| r.mean.clone()).collect();
    Ok(QuantumSpread {
        sigma_p,
        sigma_bar,
        final_distribution: momentum_distribution(&lasts)?,
        mean_distribution: momentum_distribution(&means)?,
        charges: ChargeBasis { d_max, n_g: 0.0 }.charges(),
        max_commutator: runs.iter().map(|r| r.comm).fold(0.0, f64::max),
    })
}

// ------------------------------------------------------ weighted elements

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RElement {
    pub alpha: usize,
    pub beta: usize,
    pub k: i64,
    /// ε_α − ε_β + k
    pub delta: f64,
    pub r_sq: f64,
}

/// Fourier components P_αβk = (1/T)∫ e^{−ikt}⟨φ_α(t)|p̂|φ_β(t)⟩ dt of the
/// momentum in the Floquet basis, sampled at n_t points per period.
/// Returns P[k + k_max] as d×d matrices.
pub fn momentum_fourier(basis: &TransmonBasis, fl: &FloquetDecomposition, k_max: usize, n_t: usize, n_steps: usize) -> Result<Vec<CMat>> {
    if n_t < 4 * k_max.max(1) {
        return Err(LabError::Aliasing(format!("n_t = {n_t} < 4 k_max = {}", 4 * k_max)));
    }
    if n_steps % n_t != 0 {
        return invalid("n_t must divide the steps per period");
    }
    let one = OnePeriod::compute(&basis.generator(), n_steps, true)?;
    let d = basis.d();
    let p_op = linalg::to_complex(basis.n_op.as_ref());
    let hb = basis.params.hbar_eff;
    let stride = n_steps / n_t;
    let nk = 2 * k_max + 1;
    let mut out = vec![Mat::<c64>::zeros(d, d); nk];
    let mut phi = fl.modes.clone();
    let eps = &fl.quasienergies;
    for s in 0..n_t {
        let t = s as f64 * PERIOD / n_t as f64;
        let m = phi.adjoint() * &p_op * &phi;
        for (ki, acc) in out.iter_mut().enumerate() {
            let k = ki as f64 - k_max as f64;
            for b in 0..d {
                for a in 0..d {
                    // de-rotation e^{iεt} on each mode: ⟨φ_α(t)| carries e^{−iε_α t}
                    let ph = c64::cis(-k * t - 2.0 * PI * eps[a] * t / PERIOD + 2.0 * PI * eps[b] * t / PERIOD);
                    acc[(a, b)] += ph * m[(a, b)] * (hb / n_t as f64);
                }
            }
        }
        for j in s * stride..(s + 1) * stride {
            phi = one.apply_step_mat(j, &phi);
        }
    }
    Ok(out)
}

/// R_αβk = ⟨φ_β(0)|0⟩·P_αβk, flattened; entries with |R|² below `r_sq_min`
/// are dropped.
pub fn weighted_matrix_elements(
    basis: &TransmonBasis,
    fl: &FloquetDecomposition,
    k_max: usize,
    n_t: usize,
    n_steps: usize,
    r_sq_min: f64,
) -> Result<Vec<RElement>> {
    let pk = momentum_fourier(basis, fl, k_max, n_t, n_steps)?;
    let d = basis.d();
    // ⟨φ_β(0)|0⟩ with |0⟩ the undriven ground state = basis vector 0
    let overlap: Vec<c64> = (0..d).map(|b| fl.modes[(0, b)].conj()).collect();
    let mut out = Vec::new();
    for (ki, p) in pk.iter().enumerate() {
        let k = ki as i64 - k_max as i64;
        for a in 0..d {
            for b in 0..d {
                let r_sq = (overlap[b] * p[(a, b)]).norm_sqr();
                if r_sq >= r_sq_min {
                    out.push(RElement {
                        alpha: a,
                        beta: b,
                        k,
                        delta: fl.quasienergies[a] - fl.quasienergies[b] + k as f64,
                        r_sq,
                    });
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(xi: f64, ng: f64) -> TransmonBasis {
        let p = ModelParams { xi_d: xi, n_g: ng, ..ModelParams::reference() };
        build_basis(&p, 80, 40).unwrap()
    }

    #[test]
    fn basis_orthonormal() {
        let b = small(0.0, 0.2);
        let g = b.transform.transpose() * &b.transform;
        for i in 0..b.d() {
            for j in 0..b.d() {
                let t = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - t).abs() < 1e-12);
            }
        }
        assert!(build_basis(&b.params, 5, 12).is_err());
    }

    #[test]
    fn sizes_scale_inversely() {
        assert_eq!(basis_sizes(0.16), (200, 100));
        assert_eq!(basis_sizes(0.08), (400, 200));
    }

    #[test]
    fn stationary_state_keeps_phase() {
        let b = small(0.0, 0.1);
        let gen = b.generator();
        let mut psi = vec![ZERO; b.d()];
        psi[3] = c64::new(1.0, 0.0);
        let st = WaveState::new(psi, 0.0);
        let out = propagate(&gen, &st, 2.5 * PERIOD, 64).unwrap();
        let expect = c64::cis(-b.eigenvalues[3] * 2.5 * PERIOD);
        assert!((out.amplitudes[3] - expect).norm() < 1e-9);
        assert!((out.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn step_cache_matches_direct_steps() {
        let b = small(1.5, 0.3);
        let gen = b.generator();
        let n = 64;
        let one = OnePeriod::compute(&gen, n, true).unwrap();
        let mut psi = b.ground_state();
        for j in 0..n {
            psi = one.apply_step(j, &psi);
        }
        let h = PERIOD / n as f64;
        let mut chi = b.ground_state();
        for j in 0..n {
            let v = linalg::expm_herm(gen.at((j as f64 + 0.5) * h).as_ref(), h).unwrap();
            chi = linalg::matvec(v.as_ref(), &chi);
        }
        let mono = one.apply_period(&b.ground_state());
        for k in 0..b.d() {
            assert!((psi[k] - chi[k]).norm() < 1e-11);
            assert!((mono[k] - chi[k]).norm() < 1e-11);
        }
    }

    #[test]
    fn undriven_floquet() {
        let b = small(0.0, 0.25);
        let fl = floquet(&b, 16).unwrap();
        let mut expect: Vec<f64> = b.energies().iter().map(|e| fold_quasienergy(e / b.params.hbar_eff)).collect();
        expect.sort_by(f64::total_cmp);
        for (a, e) in fl.quasienergies.iter().zip(&expect) {
            assert!((a - e).abs() < 1e-9);
        }
        assert!(linalg::gram_deviation(fl.modes.as_ref()) < 1e-9);
        // every mode is one eigenstate
        for a in 0..fl.len() {
            let m = fl.mode(a);
            assert!(m.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max) > 1.0 - 1e-9);
        }
    }

    #[test]
    fn commutator_boundary() {
        let m = 2 * 30 + 1;
        let mut psi = vec![ZERO; m];
        psi[m / 2] = c64::new(0.6, 0.0);
        psi[m / 2 + 1] = c64::new(0.0, 0.8);
        assert!(commutator_check_charge(&psi) < 1e-15);
        let mut edge = vec![ZERO; m];
        edge[0] = c64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        edge[m - 1] = c64::new(0.0, std::f64::consts::FRAC_1_SQRT_2);
        assert!(commutator_check_charge(&edge) > 1.0);
    }

    #[test]
    fn ipr_limits() {
        let id = Mat::<c64>::identity(8, 8);
        let mut v = vec![ZERO; 8];
        v[2] = c64::new(1.0, 0.0);
        assert!((ipr(&v, &id) - 1.0).abs() < 1e-15);
        let u = vec![c64::new(1.0 / 8f64.sqrt(), 0.0); 8];
        assert!((ipr(&u, &id) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn aliasing_rejected() {
        let b = small(0.5, 0.0);
        let fl = floquet(&b, 32).unwrap();
        assert!(matches!(momentum_fourier(&b, &fl, 3, 8, 32), Err(LabError::Aliasing(_))));
    }

    #[test]
    fn quasienergy_folding() {
        assert_eq!(fold_quasienergy(0.5), 0.5);
        assert!((fold_quasienergy(-0.5) - 0.5).abs() < 1e-15);
        assert!((fold_quasienergy(1.25) - 0.25).abs() < 1e-15);
        assert!((fold_quasienergy(-0.75) - 0.25).abs() < 1e-15);
    }
}
