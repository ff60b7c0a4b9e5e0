//! One function per subcommand; each returns in-memory tables plus
//! metadata, and the caller writes them.

use crate::config::Resolved;
use crate::output::Table;
use serde_json::{json, Value};
use std::f64::consts::{FRAC_PI_2, PI};
use transmon_lab::pendulum::{self, EnsembleSpec, PhasePoint};
use transmon_lab::rbm::{self, RbmParams};
use transmon_lab::tlsdyn::{self, Drive, QuantumNumerics, RbmStart, TimeSeriesRecord, TlsInit};
use transmon_lab::{chaoscrit, exec, qtransmon, LabError, ModelParams, Result, PERIOD};

#[derive(Debug, Default)]
pub struct Output {
    pub tables: Vec<Table>,
    pub convergence: Vec<Value>,
    pub metadata: Vec<Value>,
}

pub fn run(cfg: &Resolved) -> Result<Output> {
    let f: fn(&Resolved, usize, &ModelParams, &mut Output) -> Result<()> = match cfg.experiment.as_str() {
        "poincare" => poincare,
        "pdist" => pdist,
        "sigma-p" => sigma_p,
        "crossings" => crossings,
        "relax" => relax,
        "rates" => rates,
        "plateau" => plateau,
        "dephase" => dephase,
        "chaotic-layer" => chaotic_layer,
        "rmatrix" => rmatrix,
        "rbm-psd" => rbm_psd,
        "rbm-path" => rbm_path,
        "floquet-spectrum" => floquet_spectrum,
        other => return Err(LabError::InvalidParameter(format!("unknown experiment '{other}'"))),
    };
    let mut out = Output::default();
    for (i, p) in cfg.points().iter().enumerate() {
        f(cfg, i, p, &mut out)?;
    }
    merge_rows(&mut out);
    Ok(out)
}

/// Summary experiments emit one row per sweep point; merge them into a
/// single table per name.
fn merge_rows(out: &mut Output) {
    let mut merged: Vec<Table> = Vec::new();
    for t in out.tables.drain(..) {
        match merged.iter_mut().find(|m| m.name == t.name) {
            Some(m) => m.rows.extend(t.rows),
            None => merged.push(t),
        }
    }
    out.tables = merged;
}

// ------------------------------------------------------------------ helpers

fn point_seed(cfg: &Resolved, i: usize) -> u64 {
    exec::derive_seed(cfg.seed, i as u64)
}

fn ensemble(cfg: &Resolved, i: usize) -> EnsembleSpec {
    EnsembleSpec { n_traj: cfg.ensemble.n_traj, seed: exec::derive_seed(point_seed(cfg, i), 1), sampler: cfg.ensemble.sampler.clone() }
}

fn layer(p: &ModelParams) -> Result<chaoscrit::ChaoticLayer> {
    chaoscrit::chaotic_layer_bound(p.lambda, p.xi_d)
}

fn rbm_params(cfg: &Resolved, i: usize, p: &ModelParams) -> Result<RbmParams> {
    let d = match cfg.numerics.rbm_d {
        Some(d) => d,
        None => chaoscrit::diffusion_rate(p.lambda, p.xi_d)?,
    };
    let p_bar = match cfg.numerics.rbm_p_bar {
        Some(v) => v,
        None => layer(p)?.p_bar,
    };
    if p_bar <= 0.0 {
        return Err(LabError::EmptyLayer(format!("no chaotic layer at xi_d = {}", p.xi_d)));
    }
    let prm = RbmParams { d, p_bar, dt: cfg.numerics.dt, seed: exec::derive_seed(point_seed(cfg, i), 2) };
    prm.validate()?;
    Ok(prm)
}

fn quantum_numerics(cfg: &Resolved) -> QuantumNumerics {
    QuantumNumerics { d_max: cfg.numerics.d_max, d: cfg.numerics.d, steps_per_period: cfg.numerics.steps_per_period }
}

/// Series outputs get one file per sweep point.
fn series_name(cfg: &Resolved, base: &str, i: usize) -> String {
    match &cfg.sweep {
        Some(s) if s.count > 1 => format!("{base}_{i:03}"),
        _ => base.to_string(),
    }
}

/// Summary tables start with the swept variable unless it is already a column.
fn summary(cfg: &Resolved, p: &ModelParams, t: Table) -> Table {
    match &cfg.sweep {
        Some(s) if !t.header.iter().any(|h| h == s.variable.column()) => t.with_leading(s.variable.column(), s.variable.get(p)),
        _ => t,
    }
}

fn tls_or(cfg: &Resolved, default: TlsInit) -> TlsInit {
    cfg.tls.unwrap_or(default)
}

/// Step-halving re-run on a subsample; a failed check aborts the run.
fn classical_convergence(p: &ModelParams, ics: &[PhasePoint], steps: usize, out: &mut Output, point: usize) -> Result<()> {
    let rep = pendulum::convergence_check(p.lambda, p.xi_d, ics, steps)?;
    out.convergence.push(json!({ "point": point, "model": "pendulum", "report": rep }));
    if !rep.passed {
        return Err(LabError::Convergence(format!(
            "pendulum step halving moved mean/std of p by {:.2e}/{:.2e} (tolerance {:.0e})",
            rep.max_mean_dev,
            rep.max_std_dev,
            pendulum::CONVERGENCE_TOL
        )));
    }
    Ok(())
}

fn pendulum_drive(cfg: &Resolved, i: usize) -> Drive {
    Drive::Pendulum { ensemble: ensemble(cfg, i), steps_per_period: cfg.numerics.classical_steps_per_period }
}

fn rbm_drive(cfg: &Resolved, i: usize, p: &ModelParams) -> Result<Drive> {
    Ok(Drive::Rbm { rbm: rbm_params(cfg, i, p)?, n_paths: cfg.numerics.n_paths, start: RbmStart::Stationary })
}

fn fit_or_null(rec: &TimeSeriesRecord, n_periods: usize) -> Value {
    match tlsdyn::extract_rate(&rec.t, &rec.sz, n_periods) {
        Ok(f) => json!(f),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

// ---------------------------------------------------------------- classical

fn poincare(cfg: &Resolved, i: usize, p: &ModelParams, out: &mut Output) -> Result<()> {
    let ics = ensemble(cfg, i).initial_conditions(p)?;
    let steps = cfg.numerics.classical_steps_per_period;
    classical_convergence(p, &ics, steps, out, i)?;
    let sec = pendulum::poincare_section(p.lambda, p.xi_d, &ics, cfg.numerics.n_periods, steps)?;
    let mut t = Table::new(series_name(cfg, "poincare", i), &["traj", "t", "theta", "p"]);
    for (k, run) in sec.iter().enumerate() {
        for pt in run {
            t.push(vec![k.into(), pt.t.into(), pt.theta.into(), pt.p.into()]);
        }
    }
    out.tables.push(t);
    Ok(())
}

fn pdist(cfg: &Resolved, i: usize, p: &ModelParams, out: &mut Output) -> Result<()> {
    let n = &cfg.numerics;
    let p_bar = layer(p)?.p_bar;
    let [lo, hi] = n.p_range.unwrap_or_else(|| {
        let r = (1.5 * p_bar).max(2.0);
        [-r, r]
    });
    let ens = ensemble(cfg, i);
    classical_convergence(p, &ens.initial_conditions(p)?, n.classical_steps_per_period, out, i)?;
    let h = pendulum::momentum_histogram(p, &ens, n.n_periods, n.bins, (lo, hi), n.classical_steps_per_period)?;
    let mut tc = Table::new(series_name(cfg, "pdist_classical", i), &["p", "density", "mass"]);
    for ((c, d), m) in h.centers().iter().zip(h.density()).zip(&h.mass) {
        tc.push(vec![(*c).into(), d.into(), (*m).into()]);
    }
    let qs = qtransmon::quantum_spread(p, &cfg.n_g_grid(), n.n_periods, n.d_max, n.d, n.steps_per_period)?;
    let mut tq = Table::new(series_name(cfg, "pdist_quantum", i), &["n", "p", "probability_final", "probability_mean"]);
    for ((c, f), m) in qs.charges.iter().zip(&qs.final_distribution).zip(&qs.mean_distribution) {
        tq.push(vec![(*c as i64).into(), (p.hbar_eff * c).into(), (*f).into(), (*m).into()]);
    }
    out.tables.push(tc);
    out.tables.push(tq);
    out.metadata.push(json!({ "point": i, "p_bar": p_bar, "sigma_bar_quantum": qs.sigma_bar, "max_commutator": qs.max_commutator }));
    Ok(())
}

fn sigma_p(cfg: &Resolved, i: usize, p: &ModelParams, out: &mut Output) -> Result<()> {
    let n = &cfg.numerics;
    let p_bar = layer(p)?.p_bar;
    let ens = ensemble(cfg, i);
    classical_convergence(p, &ens.initial_conditions(p)?, n.classical_steps_per_period, out, i)?;
    let cl = pendulum::ensemble_momentum_stats(p, &ens, n.n_periods, n.classical_steps_per_period)?;
    let qs = qtransmon::quantum_spread(p, &cfg.n_g_grid(), n.n_periods, n.d_max, n.d, n.steps_per_period)?;
    let l_n = chaoscrit::localization_length(chaoscrit::diffusion_rate(p.lambda, p.xi_d)?, p.hbar_eff);
    let mut t = Table::new(
        "sigma_p",
        &["xi_d", "p_bar", "sigma_p_classical", "sigma_star_C", "sigma_p_quantum", "sigma_star_Q", "l_n"],
    );
    t.push(vec![
        p.xi_d.into(),
        p_bar.into(),
        cl.sigma_bar.into(),
        chaoscrit::sigma_star_classical(p_bar).into(),
        qs.sigma_bar.into(),
        chaoscrit::sigma_star_quantum(p.hbar_eff, l_n).into(),
        l_n.into(),
    ]);
    out.tables.push(summary(cfg, p, t));
    let mut tr = Table::new(series_name(cfg, "sigma_p_trace", i), &["t", "sigma_p_classical", "sigma_p_quantum"]);
    for (k, (c, q)) in cl.std_p.iter().zip(&qs.sigma_p).enumerate() {
        tr.push(vec![(k as f64 * PERIOD).into(), (*c).into(), (*q).into()]);
    }
    out.tables.push(tr);
    Ok(())
}

fn crossings(cfg: &Resolved, i: usize, p: &ModelParams, out: &mut Output) -> Result<()> {
    let ic = ensemble(cfg, i).initial_conditions(p)?[0];
    let tr = pendulum::resonance_crossing_trace(p.lambda, p.xi_d, ic, cfg.numerics.n_periods, cfg.numerics.classical_steps_per_period)?;
    let mut tt = Table::new(series_name(cfg, "crossings_trajectory", i), &["t", "theta", "p", "p_resonance"]);
    for pt in &tr.trajectory {
        tt.push(vec![pt.t.into(), pt.theta.into(), pt.p.into(), (p.xi_d * pt.t.cos()).into()]);
    }
    let mut te = Table::new(series_name(cfg, "crossings", i), &["period", "t", "phase"]);
    for c in &tr.crossings {
        te.push(vec![c.period.into(), c.t.into(), c.phase.into()]);
    }
    let mut tj = Table::new(series_name(cfg, "crossings_jumps", i), &["period", "delta_p"]);
    for (k, d) in tr.period_jumps.iter().enumerate() {
        tj.push(vec![k.into(), (*d).into()]);
    }
    out.tables.extend([tt, te, tj]);
    Ok(())
}

fn chaotic_layer(cfg: &Resolved, _i: usize, p: &ModelParams, out: &mut Output) -> Result<()> {
    let lay = layer(p)?;
    let mut t = Table::new("chaotic_layer", &["xi_d", "m_bar", "p_bar", "near_tangent"]);
    let m_bar = lay.m_bar.map_or(-1, |m| m as i64);
    t.push(vec![p.xi_d.into(), m_bar.into(), lay.p_bar.into(), lay.near_tangent.into()]);
    out.tables.push(summary(cfg, p, t));
    let m_max = lay.m_bar.map_or(3, |m| m + 2);
    let mut r = Table::new("chaotic_layer_resonances", &["xi_d", "m", "psi", "p_upper", "p_lower"]);
    for c in chaoscrit::resonance_curves(p.lambda, p.xi_d, m_max)? {
        for k in 0..=64 {
            let psi = 2.0 * PI * k as f64 / 64.0;
            let (up, lo) = c.separatrix(psi);
            r.push(vec![p.xi_d.into(), c.m.into(), psi.into(), up.into(), lo.into()]);
        }
    }
    out.tables.push(r);
    Ok(())
}

// ------------------------------------------------------------------ quantum

fn rmatrix(cfg: &Resolved, i: usize, p: &ModelParams, out: &mut Output) -> Result<()> {
    let n = &cfg.numerics;
    let grid = cfg.n_g_grid();
    let per_ng = exec::try_map_indexed(grid.len(), |k| {
        let basis = qtransmon::build_basis(&p.with_n_g(grid[k]), n.d_max, n.d)?;
        let fl = qtransmon::floquet(&basis, n.steps_per_period)?;
        qtransmon::weighted_matrix_elements(&basis, &fl, n.k_max, n.fourier_samples, n.steps_per_period, n.r_sq_min)
    })?;
    let mut t = Table::new(series_name(cfg, "rmatrix", i), &["n_g", "alpha", "beta", "k", "Delta", "R_sq"]);
    for (ng, els) in grid.iter().zip(&per_ng) {
        for e in els {
            t.push(vec![(*ng).into(), e.alpha.into(), e.beta.into(), e.k.into(), e.delta.into(), e.r_sq.into()]);
        }
    }
    out.tables.push(t);
    Ok(())
}

fn floquet_spectrum(cfg: &Resolved, i: usize, p: &ModelParams, out: &mut Output) -> Result<()> {
    let n = &cfg.numerics;
    let grid = cfg.n_g_grid();
    let per_ng = exec::try_map_indexed(grid.len(), |k| {
        let basis = qtransmon::build_basis(&p.with_n_g(grid[k]), n.d_max, n.d)?;
        qtransmon::floquet(&basis, n.steps_per_period)
    })?;
    let mut t = Table::new(series_name(cfg, "floquet_spectrum", i), &["n_g", "alpha", "quasienergy", "ipr"]);
    let mut worst: f64 = 0.0;
    for (ng, fl) in grid.iter().zip(&per_ng) {
        worst = worst.max(fl.unitarity_deviation);
        for a in 0..fl.len() {
            t.push(vec![(*ng).into(), a.into(), fl.quasienergies[a].into(), qtransmon::ipr_native(&fl.mode(a)).into()]);
        }
    }
    out.tables.push(t);
    out.convergence.push(json!({ "point": i, "model": "quantum", "max_unitarity_deviation": worst }));
    Ok(())
}

// ---------------------------------------------------------------- TLS runs

fn relax(cfg: &Resolved, i: usize, p: &ModelParams, out: &mut Output) -> Result<()> {
    let n = &cfg.numerics;
    let tls = tls_or(cfg, TlsInit::EXCITED);
    classical_convergence(p, &ensemble(cfg, i).initial_conditions(p)?, n.classical_steps_per_period, out, i)?;
    let q = tlsdyn::evolve_coupled_quantum(p, &quantum_numerics(cfg), &tls, &cfg.n_g_grid(), n.n_periods, n.samples_per_period)?;
    let c = tlsdyn::semiclassical_ensemble(p, &pendulum_drive(cfg, i), &tls, n.n_periods, n.samples_per_period)?;
    let r = tlsdyn::semiclassical_ensemble(p, &rbm_drive(cfg, i, p)?, &tls, n.n_periods, n.samples_per_period)?;
    let mut t = Table::new(series_name(cfg, "relax", i), &["t", "sz_qm", "sz_cm", "sz_rbm"]);
    for k in 0..q.len() {
        t.push(vec![q.t[k].into(), q.sz[k].into(), c.sz[k].into(), r.sz[k].into()]);
    }
    out.tables.push(t);
    out.metadata.push(json!({
        "point": i,
        "fit_qm": fit_or_null(&q, n.n_periods),
        "fit_cm": fit_or_null(&c, n.n_periods),
        "fit_rbm": fit_or_null(&r, n.n_periods),
    }));
    Ok(())
}

/// Per-channel rate: ⟨σ_z⟩ relaxes at γ↑ + γ↓, so half the fitted rate.
fn channel_rate(rec: &TimeSeriesRecord, n_periods: usize) -> Result<f64> {
    Ok(tlsdyn::extract_rate(&rec.t, &rec.sz, n_periods)?.rate / 2.0)
}

fn rates(cfg: &Resolved, i: usize, p: &ModelParams, out: &mut Output) -> Result<()> {
    let n = &cfg.numerics;
    let qn = quantum_numerics(cfg);
    let grid = cfg.n_g_grid();
    let np = n.n_periods;
    classical_convergence(p, &ensemble(cfg, i).initial_conditions(p)?, n.classical_steps_per_period, out, i)?;
    let down = channel_rate(&tlsdyn::evolve_coupled_quantum(p, &qn, &TlsInit::EXCITED, &grid, np, 1)?, np)?;
    let up = channel_rate(&tlsdyn::evolve_coupled_quantum(p, &qn, &TlsInit::GROUND, &grid, np, 1)?, np)?;
    let cm = channel_rate(&tlsdyn::semiclassical_ensemble(p, &pendulum_drive(cfg, i), &TlsInit::EXCITED, np, 1)?, np)?;
    let prm = rbm_params(cfg, i, p)?;
    let rb = channel_rate(&tlsdyn::semiclassical_ensemble(p, &rbm_drive(cfg, i, p)?, &TlsInit::EXCITED, np, 1)?, np)?;
    let fgr = rbm::fgr_rates(p.g_t, p.omega_q_t, prm.d, prm.p_bar).0;
    let mut t = Table::new(
        "rates",
        &["omega_q_t", "gamma_qm_up", "gamma_qm_down", "gamma_cm", "gamma_rbm", "gamma_fgr", "near_resonance"],
    );
    t.push(vec![
        p.omega_q_t.into(),
        up.into(),
        down.into(),
        cm.into(),
        rb.into(),
        fgr.into(),
        tlsdyn::near_drive_resonance(p.omega_q_t).into(),
    ]);
    out.tables.push(summary(cfg, p, t));
    Ok(())
}

fn plateau(cfg: &Resolved, _i: usize, p: &ModelParams, out: &mut Output) -> Result<()> {
    let tls = tls_or(cfg, TlsInit::EXCITED);
    let est = tlsdyn::plateau_floquet_multi(p, &quantum_numerics(cfg), &[tls], &cfg.n_g_grid(), cfg.numerics.ipr_cut)?;
    let e = &est[0];
    let mut t = Table::new(
        "plateau",
        &["g_t", "z_ss_dressed2", "z_ss_l_alpha", "z_ss_uniform", "z_ss_var", "n_chaotic", "n_chaotic_floquet"],
    );
    t.push(vec![
        p.g_t.into(),
        e.z_ss_dressed2.into(),
        e.z_ss_l_alpha.into(),
        e.z_ss_uniform.into(),
        e.z_ss_var.into(),
        e.n_chaotic.into(),
        e.n_chaotic_floquet.into(),
    ]);
    out.tables.push(summary(cfg, p, t));
    Ok(())
}

fn dephase(cfg: &Resolved, i: usize, p: &ModelParams, out: &mut Output) -> Result<()> {
    let n = &cfg.numerics;
    let tls = tls_or(cfg, TlsInit { theta: FRAC_PI_2, phi: 0.0 });
    let s = n.samples_per_period;
    classical_convergence(p, &ensemble(cfg, i).initial_conditions(p)?, n.classical_steps_per_period, out, i)?;
    let q = tlsdyn::evolve_coupled_quantum(p, &quantum_numerics(cfg), &tls, &cfg.n_g_grid(), n.n_periods, s)?;
    let c = tlsdyn::semiclassical_ensemble(p, &pendulum_drive(cfg, i), &tls, n.n_periods, s)?;
    let prm = rbm_params(cfg, i, p)?;
    let r = tlsdyn::semiclassical_ensemble(p, &rbm_drive(cfg, i, p)?, &tls, n.n_periods, s)?;
    let env: Vec<Vec<f64>> = [&q, &c, &r].iter().map(|x| tlsdyn::upper_envelope(&x.t, &x.sx)).collect::<Result<_>>()?;
    let mut t = Table::new(series_name(cfg, "dephase", i), &["t", "sx_qm", "sx_cm", "sx_rbm", "env_qm", "env_cm", "env_rbm"]);
    for k in 0..q.len() {
        t.push(vec![
            q.t[k].into(),
            q.sx[k].into(),
            c.sx[k].into(),
            r.sx[k].into(),
            env[0][k].into(),
            env[1][k].into(),
            env[2][k].into(),
        ]);
    }
    out.tables.push(t);
    let t_max = n.n_periods as f64 * PERIOD;
    let rate = |e: &[f64]| match tlsdyn::envelope_rate(&q.t, e, t_max) {
        Ok(f) => json!(f),
        Err(e) => json!({ "error": e.to_string() }),
    };
    out.metadata.push(json!({
        "point": i,
        "gamma_fgr": rbm::fgr_rates(p.g_t, p.omega_q_t, prm.d, prm.p_bar).0,
        "envelope_rate_qm": rate(&env[0]),
        "envelope_rate_cm": rate(&env[1]),
        "envelope_rate_rbm": rate(&env[2]),
    }));
    Ok(())
}

// ---------------------------------------------------------------------- RBM

fn rbm_psd(cfg: &Resolved, i: usize, p: &ModelParams, out: &mut Output) -> Result<()> {
    let prm = rbm_params(cfg, i, p)?;
    let n = &cfg.numerics;
    let mut t = Table::new(series_name(cfg, "rbm_psd", i), &["omega", "psd_series", "psd_series_two_term", "psd_two_term"]);
    for k in 0..n.omega_count {
        let w = if n.omega_count == 1 { 0.0 } else { n.omega_max * k as f64 / (n.omega_count - 1) as f64 };
        t.push(vec![
            w.into(),
            rbm::psd(prm.d, prm.p_bar, w, n.series_terms).into(),
            rbm::psd(prm.d, prm.p_bar, w, 3).into(),
            rbm::psd_two_term_closed(prm.d, prm.p_bar, w).into(),
        ]);
    }
    out.tables.push(t);
    out.metadata.push(json!({ "point": i, "D": prm.d, "p_bar": prm.p_bar, "a": prm.a() }));
    Ok(())
}

fn rbm_path(cfg: &Resolved, i: usize, p: &ModelParams, out: &mut Output) -> Result<()> {
    let prm = rbm_params(cfg, i, p)?;
    let p0 = rbm::stationary_start(&prm, 0);
    let path = rbm::generate_path_stream(&prm, cfg.numerics.n_periods as f64 * PERIOD, p0, 0)?;
    let mut t = Table::new(series_name(cfg, "rbm_path", i), &["t", "p"]);
    for (k, v) in path.values.iter().enumerate() {
        t.push(vec![path.time(k).into(), (*v).into()]);
    }
    out.tables.push(t);
    out.metadata.push(json!({ "point": i, "rbm": prm }));
    Ok(())
}
