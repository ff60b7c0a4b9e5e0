//! Experiment configuration: the JSON file as written by the user, and the
//! fully resolved form recorded in the manifest.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use transmon_lab::pendulum::Sampler;
use transmon_lab::tlsdyn::TlsInit;
use transmon_lab::{params, qtransmon, CircuitParams, LabError, ModelParams};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub experiment: Option<String>,
    #[serde(default)]
    pub model_params: Option<ModelParams>,
    #[serde(default)]
    pub circuit_params: Option<CircuitParams>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub ensemble: Option<EnsembleCfg>,
    #[serde(default)]
    pub numerics: Option<NumericsCfg>,
    #[serde(default)]
    pub tls: Option<TlsInit>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    XiD,
    GT,
    OmegaQT,
    NG,
    Lambda,
    HbarEff,
}

impl SweepVar {
    pub fn column(self) -> &'static str {
        match self {
            SweepVar::XiD => "xi_d",
            SweepVar::GT => "g_t",
            SweepVar::OmegaQT => "omega_q_t",
            SweepVar::NG => "n_g",
            SweepVar::Lambda => "lambda",
            SweepVar::HbarEff => "hbar_eff",
        }
    }

    pub fn get(self, p: &ModelParams) -> f64 {
        match self {
            SweepVar::XiD => p.xi_d,
            SweepVar::GT => p.g_t,
            SweepVar::OmegaQT => p.omega_q_t,
            SweepVar::NG => p.n_g,
            SweepVar::Lambda => p.lambda,
            SweepVar::HbarEff => p.hbar_eff,
        }
    }

    fn set(self, p: &mut ModelParams, v: f64) {
        match self {
            SweepVar::XiD => p.xi_d = v,
            SweepVar::GT => p.g_t = v,
            SweepVar::OmegaQT => p.omega_q_t = v,
            SweepVar::NG => p.n_g = v,
            SweepVar::Lambda => p.lambda = v,
            SweepVar::HbarEff => p.hbar_eff = v,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVar,
    pub from: f64,
    pub to: f64,
    pub count: usize,
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.from];
        }
        let h = (self.to - self.from) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.from + i as f64 * h).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleCfg {
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    #[serde(default = "default_sampler")]
    pub sampler: Sampler,
}

fn default_n_traj() -> usize {
    1000
}

fn default_sampler() -> Sampler {
    Sampler::HusimiGround
}

impl Default for EnsembleCfg {
    fn default() -> Self {
        EnsembleCfg { n_traj: default_n_traj(), sampler: default_sampler() }
    }
}

/// Numerical settings; anything left out takes the documented default.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsCfg {
    /// Charge cutoff D (charges −D..D).
    #[serde(rename = "D", skip_serializing_if = "Option::is_none")]
    pub d_max: Option<usize>,
    /// Retained transmon eigenstates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Magnus steps per period for the quantum model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps_per_period: Option<usize>,
    /// Strang steps per period for the pendulum.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classical_steps_per_period: Option<usize>,
    /// RBM time step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_periods: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_g_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples_per_period: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    /// RBM diffusion rate and box half-width; default to the layer values.
    #[serde(rename = "rbm_D", skip_serializing_if = "Option::is_none")]
    pub rbm_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rbm_p_bar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_range: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fourier_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_sq_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ipr_cut: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series_terms: Option<usize>,
}

/// Numerics with every default filled in.
#[derive(Debug, Clone, Serialize)]
pub struct Numerics {
    #[serde(rename = "D")]
    pub d_max: usize,
    pub d: usize,
    pub steps_per_period: usize,
    pub classical_steps_per_period: usize,
    pub dt: f64,
    pub n_periods: usize,
    pub n_g_count: usize,
    pub samples_per_period: usize,
    pub n_paths: usize,
    #[serde(rename = "rbm_D")]
    pub rbm_d: Option<f64>,
    pub rbm_p_bar: Option<f64>,
    pub bins: usize,
    pub p_range: Option<[f64; 2]>,
    pub k_max: usize,
    pub fourier_samples: usize,
    pub r_sq_min: f64,
    pub ipr_cut: f64,
    pub omega_max: f64,
    pub omega_count: usize,
    pub series_terms: usize,
}

impl Numerics {
    fn resolve(raw: &NumericsCfg, hbar_eff: f64, experiment: &str) -> Self {
        let (d_max, d) = qtransmon::basis_sizes(hbar_eff);
        // envelopes need several samples per period and a drive grid that
        // divides evenly into them
        let dephase = experiment == "dephase";
        Numerics {
            d_max: raw.d_max.unwrap_or(d_max),
            d: raw.d.unwrap_or(d),
            steps_per_period: raw.steps_per_period.unwrap_or(qtransmon::DEFAULT_STEPS),
            classical_steps_per_period: raw
                .classical_steps_per_period
                .unwrap_or(if dephase { 1024 } else { transmon_lab::pendulum::STEPS_PER_PERIOD }),
            dt: raw.dt.unwrap_or(params::PERIOD / if dephase { 400.0 } else { 200.0 }),
            n_periods: raw.n_periods.unwrap_or(transmon_lab::tlsdyn::RATE_WINDOW),
            n_g_count: raw.n_g_count.unwrap_or(10),
            samples_per_period: raw.samples_per_period.unwrap_or(if dephase { 16 } else { 1 }),
            n_paths: raw.n_paths.unwrap_or(2000),
            rbm_d: raw.rbm_d,
            rbm_p_bar: raw.rbm_p_bar,
            bins: raw.bins.unwrap_or(100),
            p_range: raw.p_range,
            k_max: raw.k_max.unwrap_or(3),
            fourier_samples: raw.fourier_samples.unwrap_or(16),
            r_sq_min: raw.r_sq_min.unwrap_or(0.0),
            ipr_cut: raw.ipr_cut.unwrap_or(transmon_lab::tlsdyn::DEFAULT_IPR_CUT),
            omega_max: raw.omega_max.unwrap_or(5.0),
            omega_count: raw.omega_count.unwrap_or(501),
            series_terms: raw.series_terms.unwrap_or(41),
        }
    }

    fn validate(&self) -> Result<(), String> {
        let counts = [
            ("D", self.d_max),
            ("d", self.d),
            ("steps_per_period", self.steps_per_period),
            ("classical_steps_per_period", self.classical_steps_per_period),
            ("n_periods", self.n_periods),
            ("n_g_count", self.n_g_count),
            ("samples_per_period", self.samples_per_period),
            ("n_paths", self.n_paths),
            ("bins", self.bins),
            ("fourier_samples", self.fourier_samples),
            ("omega_count", self.omega_count),
            ("series_terms", self.series_terms),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(format!("numerics.{name} must be at least 1"));
            }
        }
        if self.d > 2 * self.d_max + 1 {
            return Err("numerics.d exceeds the charge basis size 2D+1".into());
        }
        if !(self.dt > 0.0) || !(self.omega_max > 0.0) || !(self.r_sq_min >= 0.0) {
            return Err("numerics.dt and omega_max must be positive, r_sq_min non-negative".into());
        }
        if let Some([lo, hi]) = self.p_range {
            if !(hi > lo) {
                return Err("numerics.p_range must be increasing".into());
            }
        }
        Ok(())
    }
}

/// What the manifest records: enough to re-run the experiment exactly.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub experiment: String,
    pub model_params: ModelParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub circuit_params: Option<CircuitParams>,
    pub sweep: Option<Sweep>,
    pub ensemble: EnsembleCfg,
    pub numerics: Numerics,
    pub tls: Option<TlsInit>,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Resolved {
    /// Parameter sets to run, one per sweep point.
    pub fn points(&self) -> Vec<ModelParams> {
        match &self.sweep {
            None => vec![self.model_params],
            Some(s) => s
                .values()
                .into_iter()
                .map(|v| {
                    let mut p = self.model_params;
                    s.variable.set(&mut p, v);
                    p
                })
                .collect(),
        }
    }

    pub fn n_g_grid(&self) -> Vec<f64> {
        params::n_g_grid(self.numerics.n_g_count)
    }
}

pub fn resolve(raw: RawConfig, experiment: &str, out_override: Option<PathBuf>) -> Result<Resolved, String> {
    if let Some(e) = &raw.experiment {
        if e != experiment {
            return Err(format!("config is for experiment '{e}', not '{experiment}'"));
        }
    }
    let (model, circuit) = match (raw.model_params, raw.circuit_params) {
        (Some(m), None) => (m, None),
        (None, Some(c)) => (params::rescale(&c).map_err(err_text)?, Some(c)),
        (Some(_), Some(_)) => return Err("give exactly one of model_params and circuit_params, not both".into()),
        (None, None) => return Err("one of model_params or circuit_params is required".into()),
    };
    model.validate().map_err(err_text)?;
    let numerics = Numerics::resolve(&raw.numerics.unwrap_or_default(), model.hbar_eff, experiment);
    numerics.validate()?;
    let ensemble = raw.ensemble.unwrap_or_default();
    if ensemble.n_traj == 0 {
        return Err("ensemble.n_traj must be at least 1".into());
    }
    if let Some(s) = &raw.sweep {
        if s.count == 0 {
            return Err("sweep.count must be at least 1".into());
        }
        if !s.from.is_finite() || !s.to.is_finite() {
            return Err("sweep bounds must be finite".into());
        }
    }
    if let Some(t) = &raw.tls {
        t.validate().map_err(err_text)?;
    }
    let resolved = Resolved {
        experiment: experiment.to_string(),
        model_params: model,
        circuit_params: circuit,
        sweep: raw.sweep,
        ensemble,
        numerics,
        tls: raw.tls,
        output_dir: out_override.or(raw.output_dir).unwrap_or_else(|| PathBuf::from("out")),
        seed: raw.seed.unwrap_or(0),
    };
    for p in resolved.points() {
        p.validate().map_err(|e| format!("sweep point: {e}"))?;
    }
    Ok(resolved)
}

fn err_text(e: LabError) -> String {
    e.to_string()
}
