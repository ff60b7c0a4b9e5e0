//! Dense linear-algebra helpers on top of faer.
//!
//! Everything here runs single-threaded inside faer; parallelism lives one
//! level up (over n_g points, columns, trajectories) so that results do not
//! depend on how work is scheduled.

use crate::error::{LabError, Result};
use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};
pub use faer::c64;
use std::f64::consts::PI;

pub type CMat = Mat<c64>;
pub type RMat = Mat<f64>;

fn evd_err(e: impl std::fmt::Debug) -> LabError {
    LabError::Linalg(format!("eigendecomposition failed: {e:?}"))
}

/// Eigenpairs of a real symmetric matrix, eigenvalues ascending.
pub fn sym_eig(a: MatRef<'_, f64>) -> Result<(Vec<f64>, RMat)> {
    let e = a.self_adjoint_eigen(Side::Lower).map_err(evd_err)?;
    let vals = e.S().column_vector().iter().copied().collect();
    Ok((vals, e.U().to_owned()))
}

/// Eigenpairs of a complex Hermitian matrix, eigenvalues ascending.
pub fn herm_eig(a: MatRef<'_, c64>) -> Result<(Vec<f64>, CMat)> {
    let e = a.self_adjoint_eigen(Side::Lower).map_err(evd_err)?;
    let vals = e.S().column_vector().iter().map(|z| z.re).collect();
    Ok((vals, e.U().to_owned()))
}

/// exp(−iτG) for Hermitian G via its eigendecomposition (exactly unitary
/// up to rounding).
pub fn expm_herm(g: MatRef<'_, c64>, tau: f64) -> Result<CMat> {
    let (vals, v) = herm_eig(g)?;
    let n = vals.len();
    let phases: Vec<c64> = vals.iter().map(|&e| c64::cis(-tau * e)).collect();
    let vd = Mat::<c64>::from_fn(n, n, |i, j| v[(i, j)] * phases[j]);
    Ok(&vd * v.adjoint())
}

pub fn matvec(a: MatRef<'_, c64>, x: &[c64]) -> Vec<c64> {
    let mut y = vec![c64::new(0.0, 0.0); a.nrows()];
    for (j, xj) in x.iter().enumerate() {
        if *xj == c64::new(0.0, 0.0) {
            continue;
        }
        let col = a.col(j);
        for (yi, aij) in y.iter_mut().zip(col.iter()) {
            *yi += aij * xj;
        }
    }
    y
}

/// y = Aᵀx (plain transpose, no conjugation).
pub fn matvec_t(a: MatRef<'_, c64>, x: &[c64]) -> Vec<c64> {
    (0..a.ncols())
        .map(|i| a.col(i).iter().zip(x).map(|(aki, xk)| aki * xk).sum())
        .collect()
}

pub fn to_complex(a: MatRef<'_, f64>) -> CMat {
    Mat::<c64>::from_fn(a.nrows(), a.ncols(), |i, j| c64::new(a[(i, j)], 0.0))
}

/// ⟨x|A|x⟩ for a real symmetric A.
pub fn expect_real_sym(a: MatRef<'_, f64>, x: &[c64]) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        let mut col = c64::new(0.0, 0.0);
        for (i, aij) in a.col(j).iter().enumerate() {
            col += x[i].conj() * aij;
        }
        acc += (col * x[j]).re;
    }
    acc
}

pub fn dot(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(x: &[c64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// max |(U†U − I)_{ij}|
pub fn unitarity_deviation(u: MatRef<'_, c64>) -> f64 {
    let g = u.adjoint() * u;
    let mut dev: f64 = 0.0;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((g[(i, j)] - target).norm());
        }
    }
    dev
}

/// Eigendecomposition of a unitary matrix.
#[derive(Debug, Clone)]
pub struct UnitaryEig {
    /// Eigenvalues μ_k (unit modulus), as Rayleigh quotients of `vectors`.
    pub values: Vec<c64>,
    /// Orthonormal eigenvectors, one per column.
    pub vectors: CMat,
    /// max_k ‖U v_k − μ_k v_k‖
    pub residual: f64,
}

/// Orthonormal eigenvectors of a unitary U through the Cayley transform.
///
/// U is first rotated so that −1 sits in the middle of the widest gap of
/// its spectrum; then K = i(I − W)(I + W)⁻¹ is Hermitian with the same
/// eigenvectors, and a Hermitian solver yields an orthonormal set even
/// for (near-)degenerate eigenphases.
pub fn unitary_eig(u: MatRef<'_, c64>) -> Result<UnitaryEig> {
    let n = u.nrows();
    let mut phases: Vec<f64> = u.eigenvalues().map_err(evd_err)?.iter().map(|z| z.arg()).collect();
    phases.sort_by(f64::total_cmp);
    let mut best = (phases[0] + 2.0 * PI - phases[n - 1], phases[n - 1]);
    for w in phases.windows(2) {
        if w[1] - w[0] > best.0 {
            best = (w[1] - w[0], w[0]);
        }
    }
    let mid = best.1 + 0.5 * best.0;
    let rot = c64::cis(PI - mid);
    let w = Mat::<c64>::from_fn(n, n, |i, j| rot * u[(i, j)]);
    let ident = Mat::<c64>::identity(n, n);
    let plus = &ident + &w;
    let minus = Mat::<c64>::from_fn(n, n, |i, j| c64::new(0.0, 1.0) * (ident[(i, j)] - w[(i, j)]));
    let k = plus.partial_piv_lu().solve(&minus);
    let kh = Mat::<c64>::from_fn(n, n, |i, j| 0.5 * (k[(i, j)] + k[(j, i)].conj()));
    let (_, vectors) = herm_eig(kh.as_ref())?;
    let uv = u * &vectors;
    let mut values = Vec::with_capacity(n);
    let mut residual: f64 = 0.0;
    for c in 0..n {
        let mu: c64 = vectors.col(c).iter().zip(uv.col(c).iter()).map(|(a, b)| a.conj() * b).sum();
        let r: f64 = vectors
            .col(c)
            .iter()
            .zip(uv.col(c).iter())
            .map(|(a, b)| (b - mu * a).norm_sqr())
            .sum::<f64>()
            .sqrt();
        residual = residual.max(r);
        values.push(mu / mu.norm());
    }
    Ok(UnitaryEig { values, vectors, residual })
}

/// Largest |(V†V − I)_{ij}| over the columns of `v`.
pub fn gram_deviation(v: MatRef<'_, c64>) -> f64 {
    unitarity_deviation(v)
}
