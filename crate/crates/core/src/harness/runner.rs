//! Seeded Monte Carlo sweep: frames × estimators × Eb/N0 points, evaluated
//! in parallel but reduced in frame order so output bytes never depend on
//! scheduling.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{
    em_freq_run, em_map_run, em_wav_run, genie_response_covariance, pilot_ml, pilot_noise_var,
    EmConfig, EstimatorKind, MmseCombiner, SymbolSource,
};
use crate::linalg::CMat;
use crate::phy::{build_frame, ebn0_db_to_sigma2, CodeConfig, FrameLayout, FrameObservation};
use crate::rng::{stream, Purpose};
use crate::siso::{decode_frame, hard_bits};
use crate::transforms::LinearOperator;

use super::config::{ExperimentConfig, ResolvedExperiment};

/// One line of the metrics table.
#[derive(Debug, Clone)]
pub struct MetricRow {
    pub estimator: EstimatorKind,
    pub ebn0_db: f64,
    pub mse: f64,
    pub ber: f64,
    pub frames: usize,
    pub seed: u64,
}

/// One line of the per-iteration diagnostics table (iterative estimators).
#[derive(Debug, Clone)]
pub struct DiagRow {
    pub estimator: EstimatorKind,
    pub ebn0_db: f64,
    pub iteration: usize,
    pub mean_active: f64,
    pub lambda: f64,
    pub tau2: f64,
    pub mse_iter: f64,
}

/// Everything a run produces, ready for serialization.
pub struct ExperimentOutput {
    pub metrics: Vec<MetricRow>,
    pub diagnostics: Vec<DiagRow>,
    pub metadata: serde_json::Value,
}

/// Total squared error between a full-length coefficient estimate and the
/// truth.
pub fn compute_mse(g_est: &[Complex64], g_true: &[Complex64]) -> Result<f64> {
    if g_est.len() != g_true.len() {
        return Err(Error::ShapeMismatch(format!(
            "mse: estimate length {} vs truth {}",
            g_est.len(),
            g_true.len()
        )));
    }
    Ok(g_est.iter().zip(g_true).map(|(a, b)| (a - b).norm_sqr()).sum())
}

/// Fraction of positions where the decoded bits differ from the payload.
pub fn compute_ber(decoded: &[u8], payload: &[u8]) -> Result<f64> {
    if decoded.len() != payload.len() {
        return Err(Error::ShapeMismatch(format!(
            "ber: decoded length {} vs payload {}",
            decoded.len(),
            payload.len()
        )));
    }
    if decoded.is_empty() {
        return Err(Error::ShapeMismatch("ber: empty bit vectors".into()));
    }
    let errors = decoded.iter().zip(payload).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / decoded.len() as f64)
}

#[derive(Clone)]
struct IterStat {
    active: usize,
    lambda: f64,
    tau2: f64,
    mse: f64,
}

#[derive(Clone)]
struct FrameStats {
    mse: f64,
    bit_errors: usize,
    bits: usize,
    iterations: Option<Vec<IterStat>>,
}

struct PointContext<'a> {
    cfg: &'a ExperimentConfig,
    code: &'a CodeConfig,
    layout: &'a FrameLayout,
    op: &'a LinearOperator,
    model: &'a crate::channels::ChannelModel,
    combiner: Option<&'a MmseCombiner>,
    point: u32,
    sigma2: f64,
}

fn decode_and_count(
    ctx: &PointContext,
    obs: &FrameObservation,
    h_est: &[Complex64],
    info_truth: &[u8],
) -> Result<(usize, usize)> {
    let (bits, _) = decode_frame(ctx.layout, ctx.code, obs, h_est)?;
    let decoded = hard_bits(&bits.info_p1);
    let errors = decoded.iter().zip(info_truth).filter(|(a, b)| a != b).count();
    Ok((errors, decoded.len()))
}

fn run_one_frame(ctx: &PointContext, frame: u32) -> Result<Vec<FrameStats>> {
    let cfg = ctx.cfg;
    let mut ch_rng = stream(cfg.rng_seed, ctx.point, frame, Purpose::Channel);
    let ch = ctx.model.draw(ctx.op, &mut ch_rng)?;
    let mut payload_rng = stream(cfg.rng_seed, ctx.point, frame, Purpose::Payload);
    let mut il_rng = stream(cfg.rng_seed, ctx.point, frame, Purpose::Interleaver);
    let mut noise_rng = stream(cfg.rng_seed, ctx.point, frame, Purpose::Noise);
    let (obs, tx) = build_frame(
        ctx.layout,
        ctx.code,
        &ch.h_freq,
        ctx.sigma2,
        cfg.rho,
        &mut payload_rng,
        &mut il_rng,
        &mut noise_rng,
    )?;

    let em_cfg = EmConfig {
        t_max: cfg.t_max,
        symbol_source: SymbolSource::Decoded,
        hyperparam_len: cfg.hyperparam_len,
    };

    let mut out = Vec::with_capacity(cfg.estimators.len());
    for &est in &cfg.estimators {
        let stats = match est {
            EstimatorKind::PilotMl => {
                let h = pilot_ml(ctx.layout, &obs)?;
                let g = ctx.op.adjoint(&h)?;
                let (errors, bits) = decode_and_count(ctx, &obs, &h, &tx.info)?;
                FrameStats {
                    mse: compute_mse(&g, &ch.g_true)?,
                    bit_errors: errors,
                    bits,
                    iterations: None,
                }
            }
            EstimatorKind::PilotMmse => {
                let combiner = ctx.combiner.ok_or_else(|| {
                    Error::InvalidConfig("pilot-mmse requested without a combiner".into())
                })?;
                let h_ml = pilot_ml(ctx.layout, &obs)?;
                let h = combiner.apply(&h_ml)?;
                let g = ctx.op.adjoint(&h)?;
                let (errors, bits) = decode_and_count(ctx, &obs, &h, &tx.info)?;
                FrameStats {
                    mse: compute_mse(&g, &ch.g_true)?,
                    bit_errors: errors,
                    bits,
                    iterations: None,
                }
            }
            EstimatorKind::PerfectCsi => {
                let (errors, bits) = decode_and_count(ctx, &obs, &ch.h_freq, &tx.info)?;
                FrameStats { mse: 0.0, bit_errors: errors, bits, iterations: None }
            }
            EstimatorKind::EmFreq | EstimatorKind::EmWav | EstimatorKind::EmMap => {
                let run = match est {
                    EstimatorKind::EmFreq => {
                        em_freq_run(ctx.op, ctx.layout, ctx.code, &obs, &em_cfg)?
                    }
                    EstimatorKind::EmWav => {
                        em_wav_run(ctx.op, ctx.layout, ctx.code, &obs, &em_cfg)?
                    }
                    _ => em_map_run(ctx.op, ctx.layout, ctx.code, &obs, &em_cfg)?,
                };
                let errors =
                    run.info_bits.iter().zip(&tx.info).filter(|(a, b)| a != b).count();
                let iterations = if est == EstimatorKind::EmMap {
                    let mut stats = Vec::with_capacity(run.iterations.len());
                    for it in &run.iterations {
                        stats.push(IterStat {
                            active: it.active,
                            lambda: it.lambda,
                            tau2: it.tau2,
                            mse: compute_mse(&it.g_full, &ch.g_true)?,
                        });
                    }
                    Some(stats)
                } else {
                    None
                };
                FrameStats {
                    mse: compute_mse(&run.g_est, &ch.g_true)?,
                    bit_errors: errors,
                    bits: run.info_bits.len(),
                    iterations,
                }
            }
        };
        out.push(stats);
    }
    Ok(out)
}

/// Run the full sweep described by `cfg`. Frames are evaluated in parallel;
/// every aggregate is accumulated in frame order, so the output is a pure
/// function of the config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    run_experiment_resolved(cfg, &cfg.resolve()?)
}

/// Variant for callers that already resolved the immutable inputs (e.g. to
/// share them across several sweeps).
pub fn run_experiment_resolved(
    cfg: &ExperimentConfig,
    resolved: &ResolvedExperiment,
) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let ResolvedExperiment { code, layout, op, model } = resolved;

    // Genie covariance for the MMSE baseline: one dedicated stream, shared
    // by every grid point.
    let r_h: Option<CMat> = if cfg.estimators.contains(&EstimatorKind::PilotMmse) {
        let mut cov_rng = stream(cfg.rng_seed, 0, u32::MAX, Purpose::Covariance);
        Some(genie_response_covariance(op, model, cfg.mmse_cov_draws, &mut cov_rng)?)
    } else {
        None
    };

    let mut metrics = Vec::new();
    let mut diagnostics = Vec::new();
    let mut sigma2_per_point = Vec::with_capacity(cfg.ebn0_grid_db.len());

    for (point, &ebn0_db) in cfg.ebn0_grid_db.iter().enumerate() {
        let sigma2 = ebn0_db_to_sigma2(ebn0_db, layout.m(), code.rate());
        sigma2_per_point.push(sigma2);
        let combiner = match &r_h {
            Some(r) => Some(MmseCombiner::new(r.clone(), pilot_noise_var(layout, sigma2))?),
            None => None,
        };
        let ctx = PointContext {
            cfg,
            code,
            layout,
            op,
            model,
            combiner: combiner.as_ref(),
            point: point as u32,
            sigma2,
        };

        let per_frame: Vec<Vec<FrameStats>> = (0..cfg.frames_per_point as u32)
            .into_par_iter()
            .map(|frame| run_one_frame(&ctx, frame))
            .collect::<Result<_>>()?;

        // Sequential reduction in frame order.
        for (e, &est) in cfg.estimators.iter().enumerate() {
            let mut mse_sum = 0.0;
            let mut errors = 0usize;
            let mut bits = 0usize;
            for frame_stats in &per_frame {
                let s = &frame_stats[e];
                mse_sum += s.mse;
                errors += s.bit_errors;
                bits += s.bits;
            }
            metrics.push(MetricRow {
                estimator: est,
                ebn0_db,
                mse: mse_sum / cfg.frames_per_point as f64,
                ber: errors as f64 / bits as f64,
                frames: cfg.frames_per_point,
                seed: cfg.rng_seed,
            });

            if est == EstimatorKind::EmMap {
                for it in 0..cfg.t_max {
                    let mut active_sum = 0.0;
                    let mut lambda_sum = 0.0;
                    let mut tau2_sum = 0.0;
                    let mut mse_sum = 0.0;
                    for frame_stats in &per_frame {
                        let iters = frame_stats[e]
                            .iterations
                            .as_ref()
                            .expect("map runs always carry iteration stats");
                        active_sum += iters[it].active as f64;
                        lambda_sum += iters[it].lambda;
                        tau2_sum += iters[it].tau2;
                        mse_sum += iters[it].mse;
                    }
                    let nf = cfg.frames_per_point as f64;
                    diagnostics.push(DiagRow {
                        estimator: est,
                        ebn0_db,
                        iteration: it + 1,
                        mean_active: active_sum / nf,
                        lambda: lambda_sum / nf,
                        tau2: tau2_sum / nf,
                        mse_iter: mse_sum / nf,
                    });
                }
            }
        }
    }

    let metadata = metadata_json(cfg, layout.m(), code.rate(), &sigma2_per_point);
    Ok(ExperimentOutput { metrics, diagnostics, metadata })
}

/// Run metadata: enough context to interpret the CSV axes without the
/// config file, including the exact noise-variance convention.
fn metadata_json(
    cfg: &ExperimentConfig,
    m: usize,
    rate: f64,
    sigma2_per_point: &[f64],
) -> serde_json::Value {
    serde_json::json!({
        "rng_seed": cfg.rng_seed,
        "frames_per_point": cfg.frames_per_point,
        "ebn0_grid_db": cfg.ebn0_grid_db,
        "sigma2_per_point": sigma2_per_point,
        "noise_convention": "sigma2 = 1 / (M * bits_per_symbol * code_rate * ebn0_linear); \
            Eb is the received energy per information bit through the unit-energy stacked \
            response, so the mean per-position symbol energy is 1/M",
        "m": m,
        "coeff_len": cfg.coeff_len,
        "bits_per_symbol": crate::phy::BITS_PER_SYMBOL,
        "code_rate": rate,
        "composite_sample_rate_hz": crate::channels::COMPOSITE_SAMPLE_RATE_HZ,
        "estimators": cfg.estimators.iter().map(|e| e.as_str()).collect::<Vec<_>>(),
        "channel_model": cfg.channel_model,
        "rho": cfg.rho,
        "t_max": cfg.t_max,
    })
}
