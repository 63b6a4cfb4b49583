//! Iterative semi-blind estimation in the coefficient domain.
//!
//! Three variants share one expectation step (a damped matched-filter
//! update driven by decoder symbol posteriors):
//!
//! * `em_map_run` — coefficient-domain update plus a Bernoulli-Gaussian
//!   prior whose threshold prunes coefficients, with the prior's mixture
//!   weight and slab variance re-estimated every iteration;
//! * `em_wav_run` — the same update without any prior (no pruning);
//! * `em_freq_run` — the update carried out directly on the stacked
//!   frequency response, i.e. without the coefficient subspace.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::phy::{CodeConfig, FrameLayout, FrameObservation};
use crate::siso::{decode_frame, hard_bits, BitPosteriors};
use crate::transforms::LinearOperator;

use super::{matched_filter_mean, pilot_ml, pilot_noise_var};

/// Where the expectation step gets its symbol means.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolSource {
    /// Decode each iteration and feed back posterior means.
    Decoded,
    /// Use the transmitted symbols (test/diagnostic mode; decoding happens
    /// once at the end, only to produce bit outputs).
    GenieTruth,
}

/// Which length the hyperparameter update normalizes by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HyperparamLen {
    /// The current active set (pruned coefficients leave the model).
    ActiveSet,
    /// The original coefficient count (pruned coefficients keep counting
    /// as zeros).
    Original,
}

#[derive(Debug, Clone, Copy)]
pub struct EmConfig {
    /// Number of expectation/update iterations after the initial decode.
    pub t_max: usize,
    pub symbol_source: SymbolSource,
    pub hyperparam_len: HyperparamLen,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            t_max: 4,
            symbol_source: SymbolSource::Decoded,
            hyperparam_len: HyperparamLen::ActiveSet,
        }
    }
}

/// Result of one Bernoulli-Gaussian threshold pass.
#[derive(Debug, Clone)]
pub struct ThresholdOutcome {
    /// Keep flag per active coefficient (aligned with the `active` slice).
    pub beta: Vec<u8>,
    /// Thresholded and shrunk values aligned with the `active` slice.
    pub g_active: Vec<Complex64>,
    /// Full-length coefficient vector: shrunk values at kept positions,
    /// zeros everywhere else.
    pub g_next: Vec<Complex64>,
    /// Active indexes that survived, in increasing order.
    pub keep: Vec<usize>,
}

/// MAP keep-or-zero decision under the two-component prior, applied to the
/// active coefficients of `g_tilde`.
///
/// A coefficient is zeroed when `|g̃|² ≤ α²(α²+τ²)/τ² · ln[λ(α²+τ²)/((1-λ)α²)]`
/// and the log argument is at least one; when the argument is below one the
/// spike never wins and everything is kept. Survivors are shrunk by
/// `τ²/(α²+τ²)`. Ties go to zero. Degenerate settings resolve as: `λ = 0`
/// keeps everything, `λ = 1` zeroes everything, and `τ² = 0` — a prior with
/// no slab mass to put weight on — is treated like `λ = 1`.
pub fn bg_threshold(
    g_tilde: &[Complex64],
    active: &[usize],
    alpha2: f64,
    tau2: f64,
    lambda: f64,
) -> Result<ThresholdOutcome> {
    if !(alpha2 > 0.0) || !alpha2.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "likelihood variance alpha2 = {alpha2} must be positive and finite"
        )));
    }
    if !(tau2 >= 0.0) || !tau2.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "slab variance tau2 = {tau2} must be nonnegative and finite"
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidConfig(format!("lambda = {lambda} outside [0, 1]")));
    }
    let len = g_tilde.len();
    let mut prev = None;
    for &j in active {
        if j >= len {
            return Err(Error::ShapeMismatch(format!(
                "active index {j} out of range for {len} coefficients"
            )));
        }
        if let Some(p) = prev {
            if j <= p {
                return Err(Error::ShapeMismatch(
                    "active indexes must be strictly increasing".into(),
                ));
            }
        }
        prev = Some(j);
    }

    // `None` means "zero everything"; `Some(t)` zeroes |g̃|² ≤ t.
    let threshold = if lambda >= 1.0 || tau2 == 0.0 {
        None
    } else if lambda <= 0.0 {
        Some(f64::NEG_INFINITY)
    } else {
        let arg = lambda * (alpha2 + tau2) / ((1.0 - lambda) * alpha2);
        if arg < 1.0 {
            Some(f64::NEG_INFINITY)
        } else {
            Some(alpha2 * (alpha2 + tau2) / tau2 * arg.ln())
        }
    };
    let shrink = if alpha2 + tau2 > 0.0 { tau2 / (alpha2 + tau2) } else { 0.0 };

    let mut beta = Vec::with_capacity(active.len());
    let mut g_active = Vec::with_capacity(active.len());
    let mut g_next = vec![Complex64::new(0.0, 0.0); len];
    let mut keep = Vec::new();
    for &j in active {
        let kept = match threshold {
            None => false,
            Some(t) => g_tilde[j].norm_sqr() > t,
        };
        if kept {
            let v = g_tilde[j] * shrink;
            beta.push(1);
            g_active.push(v);
            g_next[j] = v;
            keep.push(j);
        } else {
            beta.push(0);
            g_active.push(Complex64::new(0.0, 0.0));
        }
    }
    Ok(ThresholdOutcome { beta, g_active, g_next, keep })
}

/// Re-estimate the prior weight and slab variance from a threshold outcome.
/// `beta` and `g` must be aligned; the model length is `beta.len()`.
/// Returns `(lambda, tau2)`.
pub fn update_hyperparams(beta: &[u8], g: &[Complex64]) -> Result<(f64, f64)> {
    let l = beta.len();
    if g.len() != l {
        return Err(Error::ShapeMismatch(format!(
            "hyperparameter update: {l} flags vs {} values",
            g.len()
        )));
    }
    if l < 2 {
        return Err(Error::InvalidConfig(format!(
            "hyperparameter update needs at least 2 coefficients, got {l}"
        )));
    }
    let zeroed = beta.iter().filter(|&&b| b == 0).count();
    if zeroed == l {
        return Err(Error::AllPruned);
    }
    let eta: f64 = beta
        .iter()
        .zip(g)
        .filter(|(&b, _)| b == 1)
        .map(|(_, v)| v.norm_sqr())
        .sum();
    let lambda = ((zeroed as f64 - 0.5) / (l as f64 - 1.0)).clamp(0.0, 1.0);
    let tau2 = eta / (l - zeroed) as f64;
    Ok((lambda, tau2))
}

/// One damped matched-filter update of the active coefficients:
/// `g̃ = (1-ρ) g + ρ · T_act^H x̄` where `x̄` is the per-subcarrier mean of
/// `conj(s̄) · y`. Inactive positions come back as zeros.
pub fn em_e_step(
    op: &LinearOperator,
    layout: &FrameLayout,
    obs: &FrameObservation,
    s_bar: &[Complex64],
    g: &[Complex64],
    active: &[usize],
    rho: f64,
) -> Result<Vec<Complex64>> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidConfig(format!("rho = {rho} outside (0, 1]")));
    }
    if g.len() != op.l_full() {
        return Err(Error::ShapeMismatch(format!(
            "expectation step: {} coefficients vs L {}",
            g.len(),
            op.l_full()
        )));
    }
    let x_bar = matched_filter_mean(layout, obs, s_bar)?;
    let proj = op.adjoint_masked(&x_bar, active)?;
    let mut out = vec![Complex64::new(0.0, 0.0); g.len()];
    for &j in active {
        out[j] = (1.0 - rho) * g[j] + rho * proj[j];
    }
    Ok(out)
}

/// Snapshot of one iteration for diagnostics.
#[derive(Debug, Clone)]
pub struct EmIteration {
    /// 1-based iteration number.
    pub iteration: usize,
    /// Active-set size after this iteration's pruning step.
    pub active: usize,
    pub lambda: f64,
    pub tau2: f64,
    /// Full-length coefficient estimate after this iteration.
    pub g_full: Vec<Complex64>,
    /// Stacked response estimate after this iteration.
    pub h_est: Vec<Complex64>,
}

/// Final outputs of an iterative run.
#[derive(Debug, Clone)]
pub struct EmRunOutput {
    /// Full-length coefficient estimate (zeros at pruned positions).
    pub g_est: Vec<Complex64>,
    /// Stacked response estimate.
    pub h_est: Vec<Complex64>,
    /// Information-bit posteriors from the final decode.
    pub info_p1: Vec<f64>,
    /// Hard decisions on the final posteriors.
    pub info_bits: Vec<u8>,
    /// Exactly `t_max` entries; early stops repeat the last state.
    pub iterations: Vec<EmIteration>,
}

struct DecodeState {
    s_bar: Vec<Complex64>,
    last_bits: Option<BitPosteriors>,
}

impl DecodeState {
    fn init(
        cfg: &EmConfig,
        layout: &FrameLayout,
        code: &CodeConfig,
        obs: &FrameObservation,
        h_est: &[Complex64],
    ) -> Result<Self> {
        match cfg.symbol_source {
            SymbolSource::Decoded => {
                let (bits, symbols) = decode_frame(layout, code, obs, h_est)?;
                Ok(DecodeState { s_bar: symbols.mean, last_bits: Some(bits) })
            }
            SymbolSource::GenieTruth => {
                Ok(DecodeState { s_bar: obs.s.clone(), last_bits: None })
            }
        }
    }

    fn refresh(
        &mut self,
        cfg: &EmConfig,
        layout: &FrameLayout,
        code: &CodeConfig,
        obs: &FrameObservation,
        h_est: &[Complex64],
    ) -> Result<()> {
        if cfg.symbol_source == SymbolSource::Decoded {
            let (bits, symbols) = decode_frame(layout, code, obs, h_est)?;
            self.s_bar = symbols.mean;
            self.last_bits = Some(bits);
        }
        Ok(())
    }

    fn finish(
        self,
        layout: &FrameLayout,
        code: &CodeConfig,
        obs: &FrameObservation,
        h_est: &[Complex64],
    ) -> Result<BitPosteriors> {
        match self.last_bits {
            Some(bits) => Ok(bits),
            None => Ok(decode_frame(layout, code, obs, h_est)?.0),
        }
    }
}

fn pad_iterations(iterations: &mut Vec<EmIteration>, t_max: usize) {
    while iterations.len() < t_max {
        let mut last = iterations
            .last()
            .expect("padding starts from at least one recorded iteration")
            .clone();
        last.iteration += 1;
        iterations.push(last);
    }
}

/// Full iterative run with the Bernoulli-Gaussian prior: pilot-initialized
/// coefficients, bootstrap hyperparameters, then `t_max` rounds of
/// expectation step, threshold, hyperparameter update, and (from the second
/// round on) active-set truncation, re-decoding after every round.
///
/// If a threshold pass zeroes every active coefficient, the run keeps that
/// round's pre-threshold estimate and stops early; diagnostics are padded
/// to `t_max` by repeating the final state.
pub fn em_map_run(
    op: &LinearOperator,
    layout: &FrameLayout,
    code: &CodeConfig,
    obs: &FrameObservation,
    cfg: &EmConfig,
) -> Result<EmRunOutput> {
    let l = op.l_full();
    let rho = obs.rho;
    let sigma2 = obs.sigma2;
    // Likelihood variance of the averaged matched-filter statistic: the
    // expectation step averages over every round of the frame.
    let thr_alpha2 = rho * sigma2 / layout.n_rounds() as f64;

    let h_pilot = pilot_ml(layout, obs)?;
    let mut g = op.adjoint(&h_pilot)?;
    let mut active: Vec<usize> = (0..l).collect();

    // Bootstrap the prior from the pilot estimate: split coefficients with
    // an even prior at the pilot noise level, then let the standard update
    // produce the starting hyperparameters.
    let pilot_nv = pilot_noise_var(layout, sigma2);
    let mean_energy = g.iter().map(|v| v.norm_sqr()).sum::<f64>() / l as f64;
    let tau0 = (mean_energy - pilot_nv).max(pilot_nv);
    let boot = bg_threshold(&g, &active, pilot_nv, tau0, 0.5)?;
    let (mut lambda, mut tau2) = match update_hyperparams(&boot.beta, &boot.g_active) {
        Ok(pair) => pair,
        Err(Error::AllPruned) => (0.5, tau0),
        Err(e) => return Err(e),
    };

    let mut h_est = op.apply(&g)?;
    let mut dec = DecodeState::init(cfg, layout, code, obs, &h_est)?;
    let mut iterations = Vec::with_capacity(cfg.t_max);

    for t in 0..cfg.t_max {
        let g_tilde = em_e_step(op, layout, obs, &dec.s_bar, &g, &active, rho)?;
        let out = bg_threshold(&g_tilde, &active, thr_alpha2, tau2, lambda)?;

        if out.keep.is_empty() {
            // Everything pruned: fall back to the pre-threshold estimate
            // and stop iterating.
            g = g_tilde;
            h_est = op.apply_masked(&g, &active)?;
            dec.refresh(cfg, layout, code, obs, &h_est)?;
            iterations.push(EmIteration {
                iteration: t + 1,
                active: active.len(),
                lambda,
                tau2,
                g_full: g.clone(),
                h_est: h_est.clone(),
            });
            pad_iterations(&mut iterations, cfg.t_max);
            let bits = dec.finish(layout, code, obs, &h_est)?;
            let info_bits = hard_bits(&bits.info_p1);
            return Ok(EmRunOutput {
                g_est: g,
                h_est,
                info_p1: bits.info_p1,
                info_bits,
                iterations,
            });
        }

        let (new_lambda, new_tau2) = match cfg.hyperparam_len {
            HyperparamLen::ActiveSet => update_hyperparams(&out.beta, &out.g_active)?,
            HyperparamLen::Original => {
                let mut beta_full = vec![0u8; l];
                for &j in &out.keep {
                    beta_full[j] = 1;
                }
                update_hyperparams(&beta_full, &out.g_next)?
            }
        };
        lambda = new_lambda;
        tau2 = new_tau2;
        g = out.g_next;
        // The first round may revive coefficients the bootstrap would have
        // discarded, so the active set only starts shrinking afterwards.
        if t >= 1 {
            active = out.keep;
        }
        h_est = op.apply_masked(&g, &active)?;
        dec.refresh(cfg, layout, code, obs, &h_est)?;
        iterations.push(EmIteration {
            iteration: t + 1,
            active: active.len(),
            lambda,
            tau2,
            g_full: g.clone(),
            h_est: h_est.clone(),
        });
    }

    let bits = dec.finish(layout, code, obs, &h_est)?;
    let info_bits = hard_bits(&bits.info_p1);
    Ok(EmRunOutput { g_est: g, h_est, info_p1: bits.info_p1, info_bits, iterations })
}

/// Iterative coefficient-domain run without the sparsity prior: the
/// expectation step is the whole update.
pub fn em_wav_run(
    op: &LinearOperator,
    layout: &FrameLayout,
    code: &CodeConfig,
    obs: &FrameObservation,
    cfg: &EmConfig,
) -> Result<EmRunOutput> {
    let l = op.l_full();
    let active: Vec<usize> = (0..l).collect();

    let h_pilot = pilot_ml(layout, obs)?;
    let mut g = op.adjoint(&h_pilot)?;
    let mut h_est = op.apply(&g)?;
    let mut dec = DecodeState::init(cfg, layout, code, obs, &h_est)?;
    let mut iterations = Vec::with_capacity(cfg.t_max);

    for t in 0..cfg.t_max {
        g = em_e_step(op, layout, obs, &dec.s_bar, &g, &active, obs.rho)?;
        h_est = op.apply(&g)?;
        dec.refresh(cfg, layout, code, obs, &h_est)?;
        iterations.push(EmIteration {
            iteration: t + 1,
            active: l,
            lambda: 0.0,
            tau2: 0.0,
            g_full: g.clone(),
            h_est: h_est.clone(),
        });
    }

    let bits = dec.finish(layout, code, obs, &h_est)?;
    let info_bits = hard_bits(&bits.info_p1);
    Ok(EmRunOutput { g_est: g, h_est, info_p1: bits.info_p1, info_bits, iterations })
}

/// Iterative run directly on the stacked frequency response, with the same
/// damped update but no coefficient subspace. The coefficient output is the
/// projection of the final response (for like-for-like error reporting).
pub fn em_freq_run(
    op: &LinearOperator,
    layout: &FrameLayout,
    code: &CodeConfig,
    obs: &FrameObservation,
    cfg: &EmConfig,
) -> Result<EmRunOutput> {
    let l = op.l_full();
    let rho = obs.rho;

    let mut h_est = pilot_ml(layout, obs)?;
    let mut dec = DecodeState::init(cfg, layout, code, obs, &h_est)?;
    let mut iterations = Vec::with_capacity(cfg.t_max);

    for t in 0..cfg.t_max {
        let x_bar = matched_filter_mean(layout, obs, &dec.s_bar)?;
        for (h, x) in h_est.iter_mut().zip(&x_bar) {
            *h = (1.0 - rho) * *h + rho * x;
        }
        dec.refresh(cfg, layout, code, obs, &h_est)?;
        iterations.push(EmIteration {
            iteration: t + 1,
            active: l,
            lambda: 0.0,
            tau2: 0.0,
            g_full: op.adjoint(&h_est)?,
            h_est: h_est.clone(),
        });
    }

    let g_est = op.adjoint(&h_est)?;
    let bits = dec.finish(layout, code, obs, &h_est)?;
    let info_bits = hard_bits(&bits.info_p1);
    Ok(EmRunOutput { g_est, h_est, info_p1: bits.info_p1, info_bits, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::ChannelModel;
    use crate::phy::{build_frame, ebn0_db_to_sigma2, FrameConfig, TxRecord};
    use crate::rng::{stream, Purpose};
    use crate::selftest::threshold_oracle;
    use crate::transforms::WaveletBasis;
    use rand::Rng;

    fn small_setup() -> (LinearOperator, FrameLayout, CodeConfig) {
        let code = CodeConfig::rate_half();
        let cfg = FrameConfig {
            n_subcarriers: 16,
            payload_bits: 200,
            pilot_symbols: 3,
            tfc: vec![1, 3, 2],
        };
        let layout = FrameLayout::new(&cfg, &code).unwrap();
        let basis = WaveletBasis::new(8, 3, 24).unwrap();
        let op = LinearOperator::new(layout.m(), &basis).unwrap();
        (op, layout, code)
    }

    fn draw_frame(
        op: &LinearOperator,
        layout: &FrameLayout,
        code: &CodeConfig,
        model: &ChannelModel,
        sigma2: f64,
        frame: u32,
    ) -> (FrameObservation, TxRecord, crate::channels::ChannelRealization) {
        let mut ch_rng = stream(21, 0, frame, Purpose::Channel);
        let ch = model.draw(op, &mut ch_rng).unwrap();
        let mut payload_rng = stream(21, 0, frame, Purpose::Payload);
        let mut il_rng = stream(21, 0, frame, Purpose::Interleaver);
        let mut noise_rng = stream(21, 0, frame, Purpose::Noise);
        let (obs, tx) = build_frame(
            layout,
            code,
            &ch.h_freq,
            sigma2,
            0.5,
            &mut payload_rng,
            &mut il_rng,
            &mut noise_rng,
        )
        .unwrap();
        (obs, tx, ch)
    }

    #[test]
    fn threshold_matches_hand_computed_boundary() {
        // alpha2 = 1, tau2 = 3, lambda = 1/2: zero iff |g|^2 <= (4/3) ln 4.
        let thr = 4.0 / 3.0 * 4.0f64.ln();
        let g = vec![Complex64::new(2.0, 0.0), Complex64::new(1.0, 0.0)];
        let out = bg_threshold(&g, &[0, 1], 1.0, 3.0, 0.5).unwrap();
        assert_eq!(out.beta, vec![1, 0]);
        assert_eq!(out.keep, vec![0]);
        // Survivor shrinks by tau2/(alpha2+tau2) = 3/4.
        assert!((out.g_next[0] - Complex64::new(1.5, 0.0)).norm() < 1e-15);
        assert_eq!(out.g_next[1], Complex64::new(0.0, 0.0));

        // Just inside and just outside the boundary.
        let eps = 1e-9;
        let inside = vec![Complex64::new((thr * (1.0 - eps)).sqrt(), 0.0)];
        assert_eq!(bg_threshold(&inside, &[0], 1.0, 3.0, 0.5).unwrap().beta, vec![0]);
        let outside = vec![Complex64::new((thr * (1.0 + eps)).sqrt(), 0.0)];
        assert_eq!(bg_threshold(&outside, &[0], 1.0, 3.0, 0.5).unwrap().beta, vec![1]);
    }

    #[test]
    fn threshold_degenerate_settings() {
        let g = vec![Complex64::new(0.1, 0.0), Complex64::new(2.0, -1.0)];
        let act = [0usize, 1];

        // lambda = 0: keep everything, pure shrinkage.
        let out = bg_threshold(&g, &act, 1.0, 3.0, 0.0).unwrap();
        assert_eq!(out.beta, vec![1, 1]);
        for (v, orig) in out.g_active.iter().zip(&g) {
            assert!((v - orig * 0.75).norm() < 1e-15);
        }

        // lambda = 1: zero everything.
        let out = bg_threshold(&g, &act, 1.0, 3.0, 1.0).unwrap();
        assert_eq!(out.beta, vec![0, 0]);
        assert!(out.keep.is_empty());

        // tau2 = 0 behaves like lambda = 1.
        let out = bg_threshold(&g, &act, 1.0, 0.0, 0.5).unwrap();
        assert_eq!(out.beta, vec![0, 0]);

        // Log argument below one: spike never wins, tiny values survive.
        // arg = lambda (a2+t2) / ((1-lambda) a2) = 0.1·1.1/0.9 < 1.
        let tiny = vec![Complex64::new(1e-12, 0.0)];
        let out = bg_threshold(&tiny, &[0], 1.0, 0.1, 0.1).unwrap();
        assert_eq!(out.beta, vec![1]);
    }

    #[test]
    fn threshold_rejects_bad_parameters() {
        let g = vec![Complex64::new(1.0, 0.0)];
        assert!(bg_threshold(&g, &[0], 0.0, 1.0, 0.5).is_err());
        assert!(bg_threshold(&g, &[0], 1.0, -1.0, 0.5).is_err());
        assert!(bg_threshold(&g, &[0], 1.0, 1.0, 1.5).is_err());
        assert!(bg_threshold(&g, &[0], 1.0, 1.0, -0.1).is_err());
        assert!(bg_threshold(&g, &[1], 1.0, 1.0, 0.5).is_err());
        assert!(bg_threshold(&g, &[0, 0], 1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn threshold_agrees_with_density_comparison() {
        let mut rng = stream(33, 0, 0, Purpose::Noise);
        let mut checked = 0;
        for _ in 0..10_000 {
            let alpha2 = rng.gen_range(1e-4..2.0f64);
            let tau2 = rng.gen_range(1e-4..4.0f64);
            let lambda = rng.gen_range(0.0..1.0f64);
            let g2 = rng.gen_range(0.0..6.0f64);
            let (oracle_keep, margin) = threshold_oracle(g2, alpha2, tau2, lambda);
            if margin.abs() <= 1e-12 {
                continue;
            }
            let g = vec![Complex64::new(g2.sqrt(), 0.0)];
            let out = bg_threshold(&g, &[0], alpha2, tau2, lambda).unwrap();
            assert_eq!(
                out.beta[0] == 1,
                oracle_keep,
                "disagreement at a2={alpha2} t2={tau2} l={lambda} g2={g2}"
            );
            checked += 1;
        }
        assert!(checked > 9_000);
    }

    #[test]
    fn hyperparam_update_matches_hand_computation() {
        // 96 coefficients, 76 zeroed, kept energy 0.9.
        let mut beta = vec![0u8; 96];
        let mut g = vec![Complex64::new(0.0, 0.0); 96];
        let per = (0.9f64 / 20.0).sqrt();
        for j in 40..60 {
            beta[j] = 1;
            g[j] = Complex64::new(0.0, per);
        }
        let (lambda, tau2) = update_hyperparams(&beta, &g).unwrap();
        assert!((lambda - 75.5 / 95.0).abs() < 1e-12);
        assert!((tau2 - 0.045).abs() < 1e-12);
    }

    #[test]
    fn hyperparam_update_edge_cases() {
        // Nothing zeroed: the weight clamps at zero.
        let beta = vec![1u8; 4];
        let g = vec![Complex64::new(0.5, 0.0); 4];
        let (lambda, tau2) = update_hyperparams(&beta, &g).unwrap();
        assert_eq!(lambda, 0.0);
        assert!((tau2 - 0.25).abs() < 1e-15);

        // Everything zeroed is an error the caller must handle.
        let beta = vec![0u8; 4];
        let g = vec![Complex64::new(0.0, 0.0); 4];
        match update_hyperparams(&beta, &g) {
            Err(Error::AllPruned) => {}
            other => panic!("expected AllPruned, got {other:?}"),
        }

        // Under two coefficients the estimate is meaningless.
        assert!(update_hyperparams(&[1], &[Complex64::new(1.0, 0.0)]).is_err());
        // Mismatched lengths.
        assert!(update_hyperparams(&[1, 0], &[Complex64::new(1.0, 0.0)]).is_err());
    }

    #[test]
    fn e_step_with_zero_posteriors_damps_toward_zero() {
        let (op, layout, code) = small_setup();
        let model = ChannelModel::SparseWavelet { k_nonzero: 4 };
        let sigma2 = ebn0_db_to_sigma2(8.0, layout.m(), code.rate());
        let (obs, _, _) = draw_frame(&op, &layout, &code, &model, sigma2, 0);

        let mut g = vec![Complex64::new(0.0, 0.0); op.l_full()];
        g[3] = Complex64::new(0.5, -0.25);
        g[10] = Complex64::new(-0.1, 0.0);
        let active: Vec<usize> = (0..op.l_full()).collect();
        let s_bar = vec![Complex64::new(0.0, 0.0); layout.n_positions()];
        let out = em_e_step(&op, &layout, &obs, &s_bar, &g, &active, 0.25).unwrap();
        for (j, v) in out.iter().enumerate() {
            assert!((v - g[j] * 0.75).norm() < 1e-15);
        }
    }

    #[test]
    fn e_step_fixed_point_at_truth_without_noise() {
        let (op, layout, code) = small_setup();
        let model = ChannelModel::SparseWavelet { k_nonzero: 4 };
        let (obs, _tx, ch) = draw_frame(&op, &layout, &code, &model, 1e-18, 1);

        let active: Vec<usize> = (0..op.l_full()).collect();
        let out = em_e_step(&op, &layout, &obs, &obs.s, &ch.g_true, &active, 0.5).unwrap();
        for (a, b) in out.iter().zip(&ch.g_true) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn genie_iterates_contract_at_exactly_one_minus_rho() {
        let (op, layout, code) = small_setup();
        let model = ChannelModel::SparseWavelet { k_nonzero: 4 };
        let sigma2 = ebn0_db_to_sigma2(8.0, layout.m(), code.rate());
        let (obs, _, _) = draw_frame(&op, &layout, &code, &model, sigma2, 2);

        let cfg = EmConfig {
            t_max: 5,
            symbol_source: SymbolSource::GenieTruth,
            ..EmConfig::default()
        };
        let run = em_wav_run(&op, &layout, &code, &obs, &cfg).unwrap();

        // The fixed point of the genie update is the projected matched filter.
        let x_bar = matched_filter_mean(&layout, &obs, &obs.s).unwrap();
        let g_star = op.adjoint(&x_bar).unwrap();
        let g0 = op.adjoint(&pilot_ml(&layout, &obs).unwrap()).unwrap();

        let dist = |g: &[Complex64]| -> f64 {
            g.iter().zip(&g_star).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
        };
        let mut prev = dist(&g0);
        for it in &run.iterations {
            let d = dist(&it.g_full);
            assert!(
                (d - 0.5 * prev).abs() <= 1e-9 * prev.max(1e-30),
                "iteration {}: {d} vs half of {prev}",
                it.iteration
            );
            prev = d;
        }
    }

    #[test]
    fn map_run_locks_onto_sparse_support_without_noise() {
        let (op, layout, code) = small_setup();
        let model = ChannelModel::SparseWavelet { k_nonzero: 4 };
        let (obs, tx, ch) = draw_frame(&op, &layout, &code, &model, 1e-18, 3);

        let cfg = EmConfig { t_max: 4, ..EmConfig::default() };
        let run = em_map_run(&op, &layout, &code, &obs, &cfg).unwrap();

        let support: Vec<usize> = ch
            .g_true
            .iter()
            .enumerate()
            .filter(|(_, v)| v.norm() > 0.0)
            .map(|(j, _)| j)
            .collect();
        let last = run.iterations.last().unwrap();
        assert_eq!(last.active, support.len());
        for (a, b) in run.g_est.iter().zip(&ch.g_true) {
            assert!((a - b).norm() < 1e-7, "{a} vs {b}");
        }
        assert_eq!(run.info_bits, tx.info);
    }

    #[test]
    fn map_run_reports_full_model_after_first_iteration() {
        let (op, layout, code) = small_setup();
        let model = ChannelModel::SparseWavelet { k_nonzero: 4 };
        let sigma2 = ebn0_db_to_sigma2(8.0, layout.m(), code.rate());
        let (obs, _, _) = draw_frame(&op, &layout, &code, &model, sigma2, 4);

        let cfg = EmConfig { t_max: 1, ..EmConfig::default() };
        let run = em_map_run(&op, &layout, &code, &obs, &cfg).unwrap();
        assert_eq!(run.iterations.len(), 1);
        assert_eq!(run.iterations[0].iteration, 1);
        // Truncation only begins at the second iteration.
        assert_eq!(run.iterations[0].active, op.l_full());
        assert_eq!(run.g_est.len(), op.l_full());
    }

    #[test]
    fn map_run_active_set_never_grows() {
        let (op, layout, code) = small_setup();
        let model = ChannelModel::SparseWavelet { k_nonzero: 4 };
        let sigma2 = ebn0_db_to_sigma2(6.0, layout.m(), code.rate());

        for frame in 5..10 {
            let (obs, _, _) = draw_frame(&op, &layout, &code, &model, sigma2, frame);
            let cfg = EmConfig { t_max: 5, ..EmConfig::default() };
            let run = em_map_run(&op, &layout, &code, &obs, &cfg).unwrap();
            let mut prev = op.l_full();
            for it in &run.iterations {
                assert!(it.active <= prev, "active set grew: {} -> {}", prev, it.active);
                prev = it.active;
            }
        }
    }

    #[test]
    fn map_run_survives_an_all_zero_observation() {
        let (op, layout, code) = small_setup();
        let model = ChannelModel::SparseWavelet { k_nonzero: 4 };
        let sigma2 = ebn0_db_to_sigma2(8.0, layout.m(), code.rate());
        let (mut obs, _, _) = draw_frame(&op, &layout, &code, &model, sigma2, 11);
        for v in &mut obs.y {
            *v = Complex64::new(0.0, 0.0);
        }

        let cfg = EmConfig { t_max: 4, ..EmConfig::default() };
        let run = em_map_run(&op, &layout, &code, &obs, &cfg).unwrap();
        // The bootstrap falls back, the first threshold prunes everything,
        // and the run stops with the zero pre-threshold estimate.
        assert_eq!(run.iterations.len(), 4);
        for it in &run.iterations {
            assert_eq!(it.active, op.l_full());
        }
        for v in &run.g_est {
            assert_eq!(*v, Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn coefficient_and_response_domain_runs_agree_under_genie_symbols() {
        let (op, layout, code) = small_setup();
        let model = ChannelModel::ExponentialPdp { decay_samples: 3.0, los_boost: 2.0 };
        let sigma2 = ebn0_db_to_sigma2(8.0, layout.m(), code.rate());
        let (obs, _, _) = draw_frame(&op, &layout, &code, &model, sigma2, 12);

        let cfg = EmConfig {
            t_max: 4,
            symbol_source: SymbolSource::GenieTruth,
            ..EmConfig::default()
        };
        let wav = em_wav_run(&op, &layout, &code, &obs, &cfg).unwrap();
        let freq = em_freq_run(&op, &layout, &code, &obs, &cfg).unwrap();

        // With identical symbol posteriors the response-domain recursion,
        // projected into the coefficient subspace, is the coefficient-domain
        // recursion (the projection is an isometry and the initializations
        // project onto each other).
        for (wi, fi) in wav.iterations.iter().zip(&freq.iterations) {
            for (a, b) in wi.g_full.iter().zip(&fi.g_full) {
                assert!((a - b).norm() < 1e-10);
            }
        }
        for (a, b) in wav.g_est.iter().zip(&freq.g_est) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn decode_feedback_runs_produce_finite_estimates_under_noise() {
        let (op, layout, code) = small_setup();
        let model = ChannelModel::SparseWavelet { k_nonzero: 4 };
        let sigma2 = ebn0_db_to_sigma2(4.0, layout.m(), code.rate());
        let (obs, tx, ch) = draw_frame(&op, &layout, &code, &model, sigma2, 13);

        let cfg = EmConfig::default();
        for run in [
            em_map_run(&op, &layout, &code, &obs, &cfg).unwrap(),
            em_wav_run(&op, &layout, &code, &obs, &cfg).unwrap(),
            em_freq_run(&op, &layout, &code, &obs, &cfg).unwrap(),
        ] {
            assert_eq!(run.g_est.len(), op.l_full());
            assert_eq!(run.h_est.len(), layout.m());
            assert_eq!(run.info_bits.len(), tx.info.len());
            assert!(run.g_est.iter().all(|v| v.is_finite()));
            assert!(run.info_p1.iter().all(|p| (0.0..=1.0).contains(p)));
            // Iterating from the pilot estimate should not blow up the
            // error relative to the truth by orders of magnitude.
            let err: f64 = run
                .g_est
                .iter()
                .zip(&ch.g_true)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum();
            assert!(err < 1.0, "error energy {err}");
        }
    }
}
