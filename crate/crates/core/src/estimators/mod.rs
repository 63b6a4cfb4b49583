//! Channel estimators: pilot-only baselines and the iterative
//! semi-blind family that feeds decoder soft symbols back into the
//! coefficient-domain update.

mod em;
mod pilot;

pub use em::{
    bg_threshold, em_e_step, em_freq_run, em_map_run, em_wav_run, update_hyperparams, EmConfig,
    EmIteration, EmRunOutput, HyperparamLen, SymbolSource, ThresholdOutcome,
};
pub use pilot::{genie_response_covariance, pilot_ml, pilot_noise_var, MmseCombiner};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::{FrameLayout, FrameObservation};

/// The estimators the experiment harness knows how to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    PilotMl,
    PilotMmse,
    EmFreq,
    EmWav,
    EmMap,
    PerfectCsi,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::PilotMl => "pilot-ml",
            EstimatorKind::PilotMmse => "pilot-mmse",
            EstimatorKind::EmFreq => "em-freq",
            EstimatorKind::EmWav => "em-wav",
            EstimatorKind::EmMap => "em-map",
            EstimatorKind::PerfectCsi => "perfect-csi",
        }
    }

    pub fn all() -> &'static [EstimatorKind] {
        &[
            EstimatorKind::PilotMl,
            EstimatorKind::PilotMmse,
            EstimatorKind::EmFreq,
            EstimatorKind::EmWav,
            EstimatorKind::EmMap,
            EstimatorKind::PerfectCsi,
        ]
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::all()
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown estimator '{s}'")))
    }
}

/// Per-subcarrier matched-filter average: for every stacked index, the mean
/// over rounds of `conj(s̄) · y`. With unit-modulus hard symbols this is the
/// zero-forcing estimate; with posterior means the magnitude of `s̄` encodes
/// symbol confidence.
pub fn matched_filter_mean(
    layout: &FrameLayout,
    obs: &FrameObservation,
    s_bar: &[Complex64],
) -> Result<Vec<Complex64>> {
    if s_bar.len() != layout.n_positions() {
        return Err(Error::ShapeMismatch(format!(
            "symbol means: expected {} positions, got {}",
            layout.n_positions(),
            s_bar.len()
        )));
    }
    let m = layout.m();
    let n = layout.n();
    let mut acc = vec![Complex64::new(0.0, 0.0); m];
    for slot in 0..layout.n_slots() {
        for k in 0..n {
            let pos = slot * n + k;
            let j = layout.stacked_index(slot, k);
            acc[j] += s_bar[pos].conj() * obs.y[pos];
        }
    }
    let rounds = layout.n_rounds() as f64;
    for v in &mut acc {
        *v /= rounds;
    }
    Ok(acc)
}
