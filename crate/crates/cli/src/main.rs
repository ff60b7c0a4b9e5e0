mod config;
mod experiments;
mod output;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;
use transmon_lab::{exec, LabError};

/// Numerical experiments on a strongly driven transmon coupled to a
/// two-level system.
#[derive(Parser)]
#[command(name = "transmon-lab", version, after_help = SWEEP_NOTE)]
struct Cli {
    #[command(subcommand)]
    experiment: Experiment,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; 0 picks one per core.
    #[arg(long, env = "TRANSMON_LAB_THREADS", default_value_t = 0)]
    threads: usize,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

const SWEEP_NOTE: &str = "With a sweep of more than one point, series files get a _NNN suffix per point; summary tables get one row per point.";

#[derive(Subcommand)]
enum Experiment {
    /// Stroboscopic Poincaré section of the driven pendulum.
    #[command(after_help = "poincare.csv: traj, t, theta, p  (theta wrapped to [-pi, pi))")]
    Poincare(Common),
    /// Classical and quantum momentum distributions after n_periods.
    #[command(after_help = "pdist_classical.csv: p, density, mass\npdist_quantum.csv: n, p, probability_final, probability_mean")]
    Pdist(Common),
    /// Time-averaged momentum spread against the layer and localization estimates.
    #[command(
        after_help = "sigma_p.csv: xi_d, p_bar, sigma_p_classical, sigma_star_C, sigma_p_quantum, sigma_star_Q, l_n\nsigma_p_trace.csv: t, sigma_p_classical, sigma_p_quantum"
    )]
    SigmaP(Common),
    /// Trajectory with the times it meets the resonance p = xi_d cos t.
    #[command(
        after_help = "crossings_trajectory.csv: t, theta, p, p_resonance\ncrossings.csv: period, t, phase\ncrossings_jumps.csv: period, delta_p"
    )]
    Crossings(Common),
    /// TLS relaxation driven by the quantum transmon, the pendulum and RBM noise.
    #[command(after_help = "relax.csv: t, sz_qm, sz_cm, sz_rbm")]
    Relax(Common),
    /// Per-channel relaxation rates of the three models and the golden-rule value.
    #[command(
        after_help = "rates.csv: omega_q_t, gamma_qm_up, gamma_qm_down, gamma_cm, gamma_rbm, gamma_fgr, near_resonance\n(rates are half the fitted <sigma_z> decay rate; near_resonance is 0/1)"
    )]
    Rates(Common),
    /// Long-time <sigma_z> plateau from coupled Floquet modes.
    #[command(
        after_help = "plateau.csv: g_t, z_ss_dressed2, z_ss_l_alpha, z_ss_uniform, z_ss_var, n_chaotic, n_chaotic_floquet"
    )]
    Plateau(Common),
    /// Dephasing of a TLS prepared on the equator, with upper envelopes.
    #[command(after_help = "dephase.csv: t, sx_qm, sx_cm, sx_rbm, env_qm, env_cm, env_rbm")]
    Dephase(Common),
    /// Resonance-overlap edge of the chaotic layer and the separatrix fan.
    #[command(
        after_help = "chaotic_layer.csv: xi_d, m_bar, p_bar, near_tangent  (m_bar = -1 when there is no layer)\nchaotic_layer_resonances.csv: xi_d, m, psi, p_upper, p_lower"
    )]
    ChaoticLayer(Common),
    /// Weighted momentum matrix elements between Floquet modes.
    #[command(after_help = "rmatrix.csv: n_g, alpha, beta, k, Delta, R_sq  (Delta = eps_alpha - eps_beta + k)")]
    Rmatrix(Common),
    /// Power spectrum of reflected Brownian motion.
    #[command(
        after_help = "rbm_psd.csv: omega, psd_series, psd_series_two_term, psd_two_term\n(psd_two_term is the closed two-term form as usually quoted)"
    )]
    RbmPsd(Common),
    /// One stationary reflected-Brownian-motion path.
    #[command(after_help = "rbm_path.csv: t, p")]
    RbmPath(Common),
    /// Quasienergies and IPRs of the driven transmon.
    #[command(after_help = "floquet_spectrum.csv: n_g, alpha, quasienergy, ipr")]
    FloquetSpectrum(Common),
}

impl Experiment {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Experiment::Poincare(c) => ("poincare", c),
            Experiment::Pdist(c) => ("pdist", c),
            Experiment::SigmaP(c) => ("sigma-p", c),
            Experiment::Crossings(c) => ("crossings", c),
            Experiment::Relax(c) => ("relax", c),
            Experiment::Rates(c) => ("rates", c),
            Experiment::Plateau(c) => ("plateau", c),
            Experiment::Dephase(c) => ("dephase", c),
            Experiment::ChaoticLayer(c) => ("chaotic-layer", c),
            Experiment::Rmatrix(c) => ("rmatrix", c),
            Experiment::RbmPsd(c) => ("rbm-psd", c),
            Experiment::RbmPath(c) => ("rbm-path", c),
            Experiment::FloquetSpectrum(c) => ("floquet-spectrum", c),
        }
    }
}

enum Failure {
    Config(String),
    Lab(LabError),
    Io(std::io::Error),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Lab(LabError::InvalidParameter(_) | LabError::Range(_)) => 2,
            Failure::Lab(LabError::Convergence(_) | LabError::Accuracy(_)) => 3,
            _ => 1,
        }
    }

    fn report(&self) -> serde_json::Value {
        let (kind, message) = match self {
            Failure::Config(m) => ("invalid_config", m.clone()),
            Failure::Lab(e) => (e.kind(), e.to_string()),
            Failure::Io(e) => ("io", e.to_string()),
        };
        json!({ "error": { "kind": kind, "message": message, "exit_code": self.exit_code() } })
    }
}

fn run(name: &str, common: &Common) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", common.config.display())))?;
    let raw: config::RawConfig = serde_json::from_str(&text).map_err(|e| Failure::Config(e.to_string()))?;
    let cfg = config::resolve(raw, name, common.out.clone()).map_err(Failure::Config)?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(Failure::Io)?;
    let out = exec::with_threads(common.threads, || experiments::run(&cfg)).map_err(Failure::Lab)?;
    let files = out.tables.iter().map(|t| t.write(&cfg.output_dir)).collect::<Result<Vec<_>, _>>().map_err(Failure::Io)?;
    let manifest = output::Manifest {
        software: output::Software::current(),
        experiment: name,
        seed: cfg.seed,
        config: &cfg,
        files,
        convergence: out.convergence,
        metadata: json!({ "points": out.metadata }),
    };
    output::write_manifest(&cfg.output_dir, &manifest).map_err(Failure::Io)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = cli.experiment.parts();
    match run(name, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.report());
            ExitCode::from(f.exit_code())
        }
    }
}
