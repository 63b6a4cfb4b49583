//! Experiment configuration: a flat JSON object in which every field has a
//! default, so a minimal config file can be `{}`.

use serde::{Deserialize, Serialize};

use crate::channels::{ChannelModel, COMPOSITE_SAMPLE_RATE_HZ};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, HyperparamLen};
use crate::phy::{CodeConfig, FrameConfig, FrameLayout};
use crate::transforms::{LinearOperator, WaveletBasis};

fn default_seed() -> u64 {
    1
}
fn default_frames() -> usize {
    100
}
fn default_grid() -> Vec<f64> {
    vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0]
}
fn default_estimators() -> Vec<EstimatorKind> {
    EstimatorKind::all().to_vec()
}
fn default_channel_model() -> String {
    "sparse-wavelet".into()
}
fn default_k_nonzero() -> usize {
    20
}
fn default_decay_ns() -> f64 {
    10.0
}
fn default_los_boost() -> f64 {
    2.0
}
fn default_n_subcarriers() -> usize {
    128
}
fn default_coeff_len() -> usize {
    96
}
fn default_payload_bits() -> usize {
    8192
}
fn default_pilot_symbols() -> usize {
    3
}
fn default_tfc() -> Vec<usize> {
    vec![1, 3, 2]
}
fn default_constraint_len() -> usize {
    3
}
fn default_generators() -> Vec<u32> {
    vec![0o7, 0o5]
}
fn default_wavelet_order() -> usize {
    8
}
fn default_t_max() -> usize {
    4
}
fn default_rho() -> f64 {
    0.5
}
fn default_cov_draws() -> usize {
    10_000
}
fn default_hyperparam_len() -> HyperparamLen {
    HyperparamLen::ActiveSet
}
fn default_output_path() -> String {
    ".".into()
}

/// Everything one experiment run needs. Serialized as flat JSON; unknown
/// keys are rejected so typos fail loudly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub rng_seed: u64,
    #[serde(default = "default_frames")]
    pub frames_per_point: usize,
    #[serde(default = "default_grid")]
    pub ebn0_grid_db: Vec<f64>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,

    /// One of "sparse-wavelet", "exponential-pdp", "file".
    #[serde(default = "default_channel_model")]
    pub channel_model: String,
    #[serde(default = "default_k_nonzero")]
    pub k_nonzero: usize,
    /// RMS delay-spread of the exponential profile, in nanoseconds.
    #[serde(default = "default_decay_ns")]
    pub decay_ns: f64,
    #[serde(default = "default_los_boost")]
    pub los_boost: f64,
    /// Tap file for the "file" model.
    #[serde(default)]
    pub cir_file: Option<String>,

    #[serde(default = "default_n_subcarriers")]
    pub n_subcarriers: usize,
    #[serde(default = "default_coeff_len")]
    pub coeff_len: usize,
    #[serde(default = "default_payload_bits")]
    pub payload_bits: usize,
    #[serde(default = "default_pilot_symbols")]
    pub pilot_symbols: usize,
    #[serde(default = "default_tfc")]
    pub tfc: Vec<usize>,

    #[serde(default = "default_constraint_len")]
    pub code_constraint_len: usize,
    #[serde(default = "default_generators")]
    pub code_generators: Vec<u32>,

    #[serde(default = "default_wavelet_order")]
    pub wavelet_order: usize,
    /// Decomposition depth; omit for the deepest depth up to 4 that the
    /// coefficient length supports.
    #[serde(default)]
    pub wavelet_levels: Option<usize>,

    #[serde(default = "default_t_max")]
    pub t_max: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_cov_draws")]
    pub mmse_cov_draws: usize,
    #[serde(default = "default_hyperparam_len")]
    pub hyperparam_len: HyperparamLen,

    #[serde(default = "default_output_path")]
    pub output_path: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config must deserialize")
    }
}

/// Pre-built immutable inputs shared by every frame of a run.
pub struct ResolvedExperiment {
    pub code: CodeConfig,
    pub layout: FrameLayout,
    pub op: LinearOperator,
    pub model: ChannelModel,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames_per_point == 0 {
            return Err(Error::InvalidConfig("frames_per_point must be at least 1".into()));
        }
        if self.ebn0_grid_db.is_empty() {
            return Err(Error::InvalidConfig("ebn0_grid_db must be nonempty".into()));
        }
        if self.ebn0_grid_db.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("ebn0_grid_db values must be finite".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("estimator list must be nonempty".into()));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidConfig(format!("rho = {} outside (0, 1]", self.rho)));
        }
        if self.t_max == 0 {
            return Err(Error::InvalidConfig("t_max must be at least 1".into()));
        }
        match self.channel_model.as_str() {
            "sparse-wavelet" => {
                if self.k_nonzero == 0 || self.k_nonzero > self.coeff_len {
                    return Err(Error::InvalidConfig(format!(
                        "k_nonzero = {} outside 1..={}",
                        self.k_nonzero, self.coeff_len
                    )));
                }
            }
            "exponential-pdp" => {
                if !(self.decay_ns > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "decay_ns = {} must be positive",
                        self.decay_ns
                    )));
                }
                if !(self.los_boost > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "los_boost = {} must be positive",
                        self.los_boost
                    )));
                }
            }
            "file" => {
                if self.cir_file.is_none() {
                    return Err(Error::InvalidConfig(
                        "channel_model \"file\" requires cir_file".into(),
                    ));
                }
            }
            other => {
                return Err(Error::InvalidConfig(format!("unknown channel_model '{other}'")));
            }
        }
        if self.estimators.contains(&EstimatorKind::PilotMmse) && self.mmse_cov_draws == 0 {
            return Err(Error::InvalidConfig(
                "mmse_cov_draws must be at least 1 when pilot-mmse is requested".into(),
            ));
        }
        Ok(())
    }

    /// Exponential-profile decay constant in composite-rate samples.
    pub fn decay_samples(&self) -> f64 {
        self.decay_ns * 1e-9 * COMPOSITE_SAMPLE_RATE_HZ
    }

    /// Build the immutable per-run structures. Reads the CIR file (if any)
    /// exactly once.
    pub fn resolve(&self) -> Result<ResolvedExperiment> {
        self.validate()?;
        let code = CodeConfig::new(self.code_constraint_len, self.code_generators.clone())?;
        let frame = FrameConfig {
            n_subcarriers: self.n_subcarriers,
            payload_bits: self.payload_bits,
            pilot_symbols: self.pilot_symbols,
            tfc: self.tfc.clone(),
        };
        let layout = FrameLayout::new(&frame, &code)?;
        let basis = match self.wavelet_levels {
            Some(levels) => WaveletBasis::new(self.wavelet_order, levels, self.coeff_len)?,
            None => WaveletBasis::with_default_levels(self.wavelet_order, self.coeff_len)?,
        };
        let op = LinearOperator::new(layout.m(), &basis)?;
        let model = match self.channel_model.as_str() {
            "sparse-wavelet" => ChannelModel::SparseWavelet { k_nonzero: self.k_nonzero },
            "exponential-pdp" => ChannelModel::ExponentialPdp {
                decay_samples: self.decay_samples(),
                los_boost: self.los_boost,
            },
            "file" => {
                let path = self.cir_file.as_ref().expect("validated above");
                let taps = crate::channels::load_cir_taps(std::path::Path::new(path))?;
                ChannelModel::File { taps }
            }
            _ => unreachable!("validated above"),
        };
        Ok(ResolvedExperiment { code, layout, op, model })
    }
}
