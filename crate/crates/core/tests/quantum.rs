use transmon_lab::linalg::{self, c64, CMat};
use transmon_lab::qtransmon::{self, WaveState};
use transmon_lab::{ModelParams, PERIOD};

fn params(xi: f64, n_g: f64) -> ModelParams {
    ModelParams::reference().with_xi(xi).with_n_g(n_g)
}

fn circular_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

#[test]
fn lab_and_displaced_frames_agree_stroboscopically() {
    let basis = qtransmon::build_basis(&params(1.5, 0.1), 150, 60).unwrap();
    let check = qtransmon::lab_frame_check(&basis, &basis.ground_state(), 5, 600).unwrap();
    assert!(check.max_deviation() < 1e-8, "{check:?}");
    // the drive does move the state
    assert!(check.n2_displaced > 0.5);
}

#[test]
fn monodromy_is_unitary_across_drives() {
    for &xi in &[0.0, 1.5, 3.0, 4.5] {
        let basis = qtransmon::build_basis(&params(xi, 0.2), 150, 60).unwrap();
        let fl = qtransmon::floquet(&basis, 256).unwrap();
        assert!(fl.unitarity_deviation < qtransmon::UNITARITY_TOL, "xi {xi}");
        assert!(fl.residual < 1e-8);
        assert!(fl.quasienergies.iter().all(|e| *e > -0.5 && *e <= 0.5));
    }
}

#[test]
fn quasienergies_invariant_under_charge_parity() {
    let a = qtransmon::floquet(&qtransmon::build_basis(&params(2.5, 0.17), 150, 60).unwrap(), 256).unwrap();
    let b = qtransmon::floquet(&qtransmon::build_basis(&params(2.5, 0.83), 150, 60).unwrap(), 256).unwrap();
    for e in &a.quasienergies {
        let gap = b.quasienergies.iter().map(|f| circular_gap(*e, *f)).fold(f64::INFINITY, f64::min);
        assert!(gap < 1e-8, "{e}: {gap}");
    }
}

#[test]
fn propagation_preserves_norm_and_converges() {
    let basis = qtransmon::build_basis(&params(1.0, 0.0), 100, 20).unwrap();
    let gen = basis.generator();
    let s0 = WaveState::new(basis.ground_state(), 0.0);
    let s1 = qtransmon::propagate(&gen, &s0, PERIOD, 2048).unwrap();
    assert!((s1.norm() - 1.0).abs() < 1e-10);
    // off-grid end point goes through the step-by-step path
    let s2 = qtransmon::propagate_fixed(&gen, &s0, 0.25 * PERIOD, 128).unwrap();
    assert!((s2.norm() - 1.0).abs() < 1e-10);
    assert!(qtransmon::propagate_fixed(&gen, &s0, 0.001, 128).is_err());
}

#[test]
fn husimi_of_ground_state_has_coherent_widths() {
    let p = ModelParams::reference();
    let grid = qtransmon::ground_husimi(&p, 121).unwrap();
    assert!((grid.raw_total - 1.0).abs() < 0.02, "{}", grid.raw_total);
    let (vt, vp) = grid.variances();
    // p marginal is |ψ(p)|² smoothed by the kernel
    let psi = qtransmon::ground_state_charge(&p).unwrap();
    let m = psi.len();
    let var_n: f64 = psi.iter().enumerate().map(|(i, a)| a.norm_sqr() * (i as f64 - (m as f64 - 1.0) / 2.0).powi(2)).sum();
    let exact_p = p.hbar_eff * p.hbar_eff * var_n + qtransmon::kernel_sigma_p2(&p);
    assert!((vp / exact_p - 1.0).abs() < 0.02, "{vp} vs {exact_p}");
    // harmonic estimate ħ/√λ for θ
    let harmonic_t = p.hbar_eff / p.lambda.sqrt();
    assert!((vt / harmonic_t - 1.0).abs() < 0.15, "{vt} vs {harmonic_t}");
    let (mt, mp) = grid.mean();
    assert!(mt.abs() < 1e-9 && mp.abs() < 1e-9);
}

#[test]
fn husimi_samples_reproduce_grid_moments() {
    let p = ModelParams::reference();
    let pts = qtransmon::sample_ground_husimi(&p, 4000, 11).unwrap();
    let again = qtransmon::sample_ground_husimi(&p, 4000, 11).unwrap();
    assert_eq!(pts, again);
    let grid = qtransmon::ground_husimi(&p, 121).unwrap();
    let (_, vp) = grid.variances();
    let ps: Vec<f64> = pts.iter().map(|x| x.p).collect();
    let v = transmon_lab::stats::variance(&ps);
    assert!((v / vp - 1.0).abs() < 0.08, "{v} vs {vp}");
}

#[test]
fn charge_distribution_is_normalized() {
    let basis = qtransmon::build_basis(&params(1.5, 0.3), 150, 60).unwrap();
    let fl = qtransmon::floquet(&basis, 256).unwrap();
    for a in [0, 17, 59] {
        let prob = qtransmon::charge_probabilities(&basis, &fl.mode(a));
        assert!((prob.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(qtransmon::commutator_check(&basis, &fl.mode(a)) < 1e-12);
    }
}

fn p_matrix(basis: &qtransmon::TransmonBasis, modes: &CMat) -> CMat {
    let p = linalg::to_complex(basis.n_op.as_ref());
    let m = modes.adjoint() * &p * modes;
    let hb = basis.params.hbar_eff;
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * hb)
}

#[test]
fn undriven_fourier_components_are_static() {
    // with folded quasienergies a bare level E_n = ε + m carries e^{−imt};
    // the static matrix element then sits at the single k with
    // ε_α − ε_β + k = E_α − E_β
    let basis = qtransmon::build_basis(&params(0.0, 0.2), 100, 20).unwrap();
    let fl = qtransmon::floquet(&basis, 64).unwrap();
    let k_max = 3;
    let pk = qtransmon::momentum_fourier(&basis, &fl, k_max, 16, 64).unwrap();
    let stat = p_matrix(&basis, &fl.modes);
    let level = |a: usize| (0..20).max_by(|&i, &j| fl.modes[(i, a)].norm().total_cmp(&fl.modes[(j, a)].norm())).unwrap();
    let e = &basis.eigenvalues;
    let low: Vec<usize> = (0..20).filter(|&a| level(a) < 3).collect();
    assert_eq!(low.len(), 3);
    for &a in &low {
        for &b in &low {
            let bare = e[level(a)] - e[level(b)];
            for (ki, m) in pk.iter().enumerate() {
                let k = ki as f64 - k_max as f64;
                let delta = fl.quasienergies[a] - fl.quasienergies[b] + k;
                let want = if (delta - bare).abs() < 1e-8 { stat[(a, b)] } else { c64::new(0.0, 0.0) };
                assert!((m[(a, b)] - want).norm() < 1e-8, "k {k} ({a},{b})");
            }
        }
    }
}

#[test]
fn fourier_components_are_hermitian_pairs() {
    let basis = qtransmon::build_basis(&params(1.5, 0.2), 100, 24).unwrap();
    let fl = qtransmon::floquet(&basis, 128).unwrap();
    let k_max = 3;
    let pk = qtransmon::momentum_fourier(&basis, &fl, k_max, 32, 128).unwrap();
    for k in 0..=2 * k_max {
        let (a, b) = (&pk[k], &pk[2 * k_max - k]);
        for i in 0..24 {
            for j in 0..24 {
                assert!((a[(i, j)] - b[(j, i)].conj()).norm() < 1e-8);
            }
        }
    }
    assert!(matches!(
        qtransmon::momentum_fourier(&basis, &fl, 3, 8, 128),
        Err(transmon_lab::LabError::Aliasing(_))
    ));
}

#[test]
fn weighted_elements_carry_their_frequency() {
    let basis = qtransmon::build_basis(&params(1.5, 0.0), 100, 24).unwrap();
    let fl = qtransmon::floquet(&basis, 128).unwrap();
    let el = qtransmon::weighted_matrix_elements(&basis, &fl, 2, 16, 128, 1e-12).unwrap();
    assert!(!el.is_empty());
    for e in &el {
        let want = fl.quasienergies[e.alpha] - fl.quasienergies[e.beta] + e.k as f64;
        assert_eq!(e.delta, want);
        assert!(e.r_sq >= 1e-12);
    }
}

#[test]
fn quantum_spread_grows_with_drive() {
    let grid = transmon_lab::params::n_g_grid(3);
    let weak = qtransmon::quantum_spread(&params(0.5, 0.0), &grid, 60, 120, 50, 128).unwrap();
    let strong = qtransmon::quantum_spread(&params(2.5, 0.0), &grid, 60, 120, 50, 128).unwrap();
    assert!(strong.sigma_bar > 2.0 * weak.sigma_bar, "{} {}", strong.sigma_bar, weak.sigma_bar);
    assert!((strong.final_distribution.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    assert!((strong.mean_distribution.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    assert_eq!(strong.charges.len(), 241);
    assert!(strong.max_commutator < 1e-12);
}
