//! End-to-end acceptance gate. Each test checks one release criterion at
//! full stated scale and emits a single PASS/FAIL line (visible with
//! `cargo test --test acceptance -- --nocapture`); the library-level edge
//! cases behind these behaviors live in the unit and property suites.
//!
//! The Monte Carlo tests pin master seed 1 and rely on the deterministic
//! stream derivation, so every number below is reproducible bit for bit.

use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;

use uwbsim::estimators::{
    em_freq_run, em_map_run, em_wav_run, matched_filter_mean, pilot_ml, EmConfig, EstimatorKind,
    HyperparamLen, SymbolSource,
};
use uwbsim::harness::{
    compute_mse, diagnostics_csv, metrics_csv, run_experiment, ExperimentConfig, ExperimentOutput,
};
use uwbsim::linalg::CMat;
use uwbsim::phy::{build_frame, ebn0_db_to_sigma2, noise_split, qpsk_map};
use uwbsim::rng::{complex_gaussian, complex_gaussian_vec, stream, Purpose};
use uwbsim::selftest::{brute_force_posteriors, threshold_oracle};
use uwbsim::siso::bcjr_decode;
use uwbsim::transforms::{LinearOperator, WaveletBasis};

/// Print the criterion verdict and enforce it.
fn gate(name: &str, pass: bool, detail: &str) {
    println!("{} {name} — {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

fn max_abs_from_identity(a: &CMat) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..a.rows() {
        for (c, v) in a.row(r).iter().enumerate() {
            let target = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((v - target).norm());
        }
    }
    worst
}

fn max_abs_gap(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean.
fn sem(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (var / xs.len() as f64).sqrt()
}

/// Abscissa where a curve sorted by x first drops to `target`, interpolating
/// linearly in log10(y).
fn crossing_db(curve: &[(f64, f64)], target: f64) -> Option<f64> {
    for w in curve.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        if y0 > target && y1 <= target {
            let l0 = y0.max(1e-12).log10();
            let l1 = y1.max(1e-12).log10();
            let t = (target.log10() - l0) / (l1 - l0);
            return Some(x0 + t * (x1 - x0));
        }
    }
    None
}

fn curve_for(out: &ExperimentOutput, kind: EstimatorKind, ber: bool) -> Vec<(f64, f64)> {
    out.metrics
        .iter()
        .filter(|r| r.estimator == kind)
        .map(|r| (r.ebn0_db, if ber { r.ber } else { r.mse }))
        .collect()
}

#[test]
fn operator_identity_and_reconstruction() {
    let start = Instant::now();
    let mut worst_op = 0.0f64;
    let mut worst_w = 0.0f64;
    let mut worst_rt = 0.0f64;
    for (n, l) in [(32usize, 24usize), (128, 96)] {
        let basis = WaveletBasis::with_default_levels(8, l).unwrap();
        let op = LinearOperator::new(3 * n, &basis).unwrap();
        let t = op.synthesis_matrix();
        worst_op = worst_op.max(max_abs_from_identity(&t.adjoint().mul(t).unwrap()));
        let w = basis.matrix();
        worst_w = worst_w.max(max_abs_from_identity(&w.mul(&w.adjoint()).unwrap()));
        worst_w = worst_w.max(max_abs_from_identity(&w.adjoint().mul(&w).unwrap()));

        let mut rng = stream(3, 0, 0, Purpose::Channel);
        let g = complex_gaussian_vec(&mut rng, l, 1.0);
        let back = op.coeffs_from_time(&op.time_from_coeffs(&g).unwrap()).unwrap();
        worst_rt = worst_rt.max(max_abs_gap(&back, &g));
        let h = complex_gaussian_vec(&mut rng, l, 1.0);
        let back = op.time_from_coeffs(&op.coeffs_from_time(&h).unwrap()).unwrap();
        worst_rt = worst_rt.max(max_abs_gap(&back, &h));
    }
    let elapsed = start.elapsed().as_secs_f64();
    gate(
        "operator identity and reconstruction",
        worst_op < 1e-10 && worst_w < 1e-10 && worst_rt < 1e-10 && elapsed < 5.0,
        &format!(
            "max |T^H T - I| = {worst_op:.2e}, max |W W^H - I| = {worst_w:.2e}, \
             roundtrip gap {worst_rt:.2e} (tol 1e-10), {elapsed:.2} s (limit 5 s)"
        ),
    );
}

#[test]
fn decoder_matches_exhaustive_enumeration() {
    let start = Instant::now();
    let code = uwbsim::phy::CodeConfig::rate_half();
    let mut worst = 0.0f64;
    for i in 0..200u32 {
        let info_len = 1 + (i as usize % 12);
        let mut rng = stream(11, 0, i, Purpose::Noise);
        let llr: Vec<f64> =
            (0..code.coded_len(info_len)).map(|_| rng.gen_range(-6.0..6.0)).collect();
        let got = bcjr_decode(&code, &llr).unwrap();
        let want = brute_force_posteriors(&code, &llr);
        for (a, b) in got.info_p1.iter().zip(&want.info_p1) {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in got.coded_p1.iter().zip(&want.coded_p1) {
            worst = worst.max((a - b).abs());
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    gate(
        "trellis decoder vs exhaustive enumeration",
        worst < 1e-9 && elapsed < 30.0,
        &format!(
            "200 instances (1..=12 info bits), max posterior gap {worst:.2e} \
             (tol 1e-9), {elapsed:.2} s (limit 30 s)"
        ),
    );
}

#[test]
fn threshold_matches_density_comparison_en_masse() {
    let mut rng = stream(13, 0, 0, Purpose::Noise);
    let mut disagreements = 0usize;
    let mut boundary = 0usize;
    for i in 0..100_000u32 {
        let scale = rng.gen_range(0.01..2.0);
        let g = complex_gaussian(&mut rng, scale);
        let alpha2 = rng.gen_range(1e-3..3.0);
        let tau2 = if i % 50 == 0 { 0.0 } else { rng.gen_range(1e-6..3.0) };
        let lambda = match i % 37 {
            0 => 0.0,
            1 => 1.0,
            _ => rng.gen_range(0.0..1.0),
        };
        let (keep, margin) = threshold_oracle(g.norm_sqr(), alpha2, tau2, lambda);
        if margin.abs() <= 1e-12 {
            boundary += 1;
            continue;
        }
        let out = uwbsim::estimators::bg_threshold(&[g], &[0], alpha2, tau2, lambda).unwrap();
        if (out.keep.len() == 1) != keep {
            disagreements += 1;
        }
    }
    gate(
        "keep-or-zero rule vs two-density comparison",
        disagreements == 0,
        &format!("10^5 random tuples: {disagreements} disagreements ({boundary} within 1e-12 of the boundary skipped)"),
    );
}

#[test]
fn composite_noise_matches_nominal_covariance() {
    let dim = 8usize;
    let draws = 100_000usize;
    let sigma2 = 0.8f64;
    let mut worst = 0.0f64;
    for (p, rho) in [0.25f64, 0.5, 0.9].into_iter().enumerate() {
        let mut rng = stream(17, p as u32, 0, Purpose::Noise);
        let mut cov = vec![Complex64::new(0.0, 0.0); dim * dim];
        for _ in 0..draws {
            let bits: Vec<u8> = (0..2 * dim).map(|_| rng.gen_range(0..2u8)).collect();
            let s = qpsk_map(&bits).unwrap();
            let (z1, z2) = noise_split(&mut rng, dim, sigma2, rho).unwrap();
            let z: Vec<Complex64> =
                (0..dim).map(|j| s[j] * z1[j] + z2[j]).collect();
            for r in 0..dim {
                for c in 0..dim {
                    cov[r * dim + c] += z[r] * z[c].conj();
                }
            }
        }
        for r in 0..dim {
            for c in 0..dim {
                let got = cov[r * dim + c] / draws as f64;
                let want = if r == c { sigma2 } else { 0.0 };
                worst = worst.max((got - want).norm() / sigma2);
            }
        }
    }
    gate(
        "modulated-plus-ambient noise covariance",
        worst < 0.03,
        &format!(
            "10^5 draws x rho in {{0.25, 0.5, 0.9}}: worst covariance deviation \
             {:.2}% of nominal (tol 3%)",
            100.0 * worst
        ),
    );
}

#[test]
fn genie_fed_update_contracts_at_the_damping_rate() {
    let cfg = ExperimentConfig::default();
    let res = cfg.resolve().unwrap();
    let rho = 0.5f64;
    let sigma2 = ebn0_db_to_sigma2(8.0, res.layout.m(), res.code.rate());
    let em = EmConfig {
        t_max: 4,
        symbol_source: SymbolSource::GenieTruth,
        hyperparam_len: HyperparamLen::ActiveSet,
    };
    let mut worst = 0.0f64;
    for f in 0..10u32 {
        let ch = res.model.draw(&res.op, &mut stream(5, 0, f, Purpose::Channel)).unwrap();
        let (obs, _) = build_frame(
            &res.layout,
            &res.code,
            &ch.h_freq,
            sigma2,
            rho,
            &mut stream(5, 0, f, Purpose::Payload),
            &mut stream(5, 0, f, Purpose::Interleaver),
            &mut stream(5, 0, f, Purpose::Noise),
        )
        .unwrap();

        // With the true symbols the matched-filter average is constant, so
        // the update's fixed point is its projection.
        let x_bar = matched_filter_mean(&res.layout, &obs, &obs.s).unwrap();
        let g_star = res.op.adjoint(&x_bar).unwrap();
        let g0 = res.op.adjoint(&pilot_ml(&res.layout, &obs).unwrap()).unwrap();

        let out = em_wav_run(&res.op, &res.layout, &res.code, &obs, &em).unwrap();
        let mut r_prev = compute_mse(&g0, &g_star).unwrap().sqrt();
        for it in &out.iterations {
            let r = compute_mse(&it.g_full, &g_star).unwrap().sqrt();
            assert!(r_prev > 1e-9, "error hit the fixed point early");
            worst = worst.max((r / r_prev - (1.0 - rho)).abs());
            r_prev = r;
        }
    }
    gate(
        "known-symbol update contracts at the damping rate",
        worst < 1e-9,
        &format!("10 frames x 4 iterations: max |ratio - 0.5| = {worst:.2e} (tol 1e-9)"),
    );
}

#[test]
fn sparse_channel_error_ordering_with_paired_margins() {
    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let res = cfg.resolve().unwrap();
    let em = EmConfig {
        t_max: cfg.t_max,
        symbol_source: SymbolSource::Decoded,
        hyperparam_len: cfg.hyperparam_len,
    };
    let frames = 500u32;
    let mut pass = true;
    let mut detail = String::new();
    for (p, ebn0) in [4.0f64, 8.0].into_iter().enumerate() {
        let sigma2 = ebn0_db_to_sigma2(ebn0, res.layout.m(), res.code.rate());
        // Per-frame differences between adjacent estimators in the expected
        // order; pairing frames removes the shared channel/noise variance.
        let mut gaps: [Vec<f64>; 3] = [vec![], vec![], vec![]];
        for f in 0..frames {
            let ch = res.model.draw(&res.op, &mut stream(1, p as u32, f, Purpose::Channel)).unwrap();
            let (obs, _) = build_frame(
                &res.layout,
                &res.code,
                &ch.h_freq,
                sigma2,
                cfg.rho,
                &mut stream(1, p as u32, f, Purpose::Payload),
                &mut stream(1, p as u32, f, Purpose::Interleaver),
                &mut stream(1, p as u32, f, Purpose::Noise),
            )
            .unwrap();
            let g_pilot = res.op.adjoint(&pilot_ml(&res.layout, &obs).unwrap()).unwrap();
            let mse_pilot = compute_mse(&g_pilot, &ch.g_true).unwrap();
            let freq = em_freq_run(&res.op, &res.layout, &res.code, &obs, &em).unwrap();
            let mse_freq = compute_mse(&freq.g_est, &ch.g_true).unwrap();
            let wav = em_wav_run(&res.op, &res.layout, &res.code, &obs, &em).unwrap();
            let mse_wav = compute_mse(&wav.g_est, &ch.g_true).unwrap();
            let map = em_map_run(&res.op, &res.layout, &res.code, &obs, &em).unwrap();
            let mse_map = compute_mse(&map.g_est, &ch.g_true).unwrap();
            gaps[0].push(mse_pilot - mse_freq);
            gaps[1].push(mse_freq - mse_wav);
            gaps[2].push(mse_wav - mse_map);
        }
        for (gap, label) in gaps.iter().zip(["pilot>freq", "freq>wav", "wav>map"]) {
            let m = mean(gap);
            let margin = m / sem(gap);
            pass &= m > 0.0 && margin >= 3.0;
            detail.push_str(&format!("{ebn0} dB {label}: {margin:.0}x SE; "));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    detail.push_str(&format!("{frames} frames/point, {elapsed:.0} s (target 600 s)"));
    gate("sparse-channel error ordering (paired, >=3x SE)", pass, &detail);
}

#[test]
fn estimation_gain_at_the_reference_error_level() {
    let start = Instant::now();
    let cfg = ExperimentConfig::from_json(
        r#"{
            "rng_seed": 1,
            "frames_per_point": 1000,
            "ebn0_grid_db": [0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0],
            "estimators": ["em-wav", "em-map"]
        }"#,
    )
    .unwrap();
    let out = run_experiment(&cfg).unwrap();
    let wav = crossing_db(&curve_for(&out, EstimatorKind::EmWav, false), 2e-3);
    let map = crossing_db(&curve_for(&out, EstimatorKind::EmMap, false), 2e-3);
    let elapsed = start.elapsed().as_secs_f64();
    let (pass, detail) = match (wav, map) {
        (Some(w), Some(m)) => {
            let gap = w - m;
            (
                (2.5..=5.5).contains(&gap),
                format!(
                    "error 2e-3 reached at {m:.2} dB with the prior vs {w:.2} dB without: \
                     gain {gap:.2} dB (window [2.5, 5.5]); 1000 frames/point, {elapsed:.0} s (target 1800 s)"
                ),
            )
        }
        _ => (false, format!("a curve never crossed 2e-3 (wav {wav:?}, map {map:?})")),
    };
    gate("coefficient-prior gain at the reference error level", pass, &detail);
}

#[test]
fn pruning_settles_in_the_reported_band() {
    let cfg = ExperimentConfig::from_json(
        r#"{
            "rng_seed": 1,
            "frames_per_point": 150,
            "ebn0_grid_db": [8.0],
            "estimators": ["em-map"],
            "t_max": 5
        }"#,
    )
    .unwrap();
    let out = run_experiment(&cfg).unwrap();
    let active: Vec<f64> = out.diagnostics.iter().map(|d| d.mean_active).collect();
    assert_eq!(active.len(), 5);
    let non_increasing = active.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let fifth = active[4];
    gate(
        "active-set size settles in the reported band",
        non_increasing && (20.0..=40.0).contains(&fifth),
        &format!(
            "mean active per iteration {:?}, iteration 5 = {fifth:.2} (window [20, 40], non-increasing {non_increasing})",
            active.iter().map(|a| (a * 100.0).round() / 100.0).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn decoding_penalty_against_known_channel() {
    let start = Instant::now();
    let cfg = ExperimentConfig::from_json(
        r#"{
            "rng_seed": 1,
            "frames_per_point": 245,
            "ebn0_grid_db": [7.0, 7.5, 8.0, 8.5, 9.0, 9.5, 10.0, 10.5, 11.0, 11.5, 12.0],
            "estimators": ["pilot-ml", "em-map", "perfect-csi"]
        }"#,
    )
    .unwrap();
    let bits_per_point = cfg.frames_per_point * cfg.payload_bits;
    assert!(bits_per_point >= 2_000_000, "need >= 2e6 info bits, got {bits_per_point}");
    let out = run_experiment(&cfg).unwrap();
    let csi = crossing_db(&curve_for(&out, EstimatorKind::PerfectCsi, true), 1e-3);
    let map = crossing_db(&curve_for(&out, EstimatorKind::EmMap, true), 1e-3);
    let ml = crossing_db(&curve_for(&out, EstimatorKind::PilotMl, true), 1e-3);
    let elapsed = start.elapsed().as_secs_f64();
    let (pass, detail) = match (csi, map, ml) {
        (Some(c), Some(m), Some(p)) => {
            let d_map = m - c;
            let d_ml = p - c;
            (
                d_map <= 0.7 && d_ml >= 2.0,
                format!(
                    "BER 1e-3 at {c:.2} dB with the true response: iterative estimate +{d_map:.2} dB \
                     (limit 0.7), pilot-only +{d_ml:.2} dB (required >= 2); \
                     {bits_per_point} info bits/point, {elapsed:.0} s"
                ),
            )
        }
        _ => (false, format!("a curve never crossed 1e-3 (csi {csi:?}, map {map:?}, ml {ml:?})")),
    };
    gate("decoding penalty against the known channel", pass, &detail);
}

#[test]
fn uniform_like_channel_keeps_map_estimate_competitive() {
    let cfg = ExperimentConfig::from_json(
        r#"{
            "rng_seed": 1,
            "frames_per_point": 300,
            "ebn0_grid_db": [8.0],
            "estimators": ["em-wav", "em-map"],
            "channel_model": "exponential-pdp"
        }"#,
    )
    .unwrap();
    let out = run_experiment(&cfg).unwrap();
    let wav = curve_for(&out, EstimatorKind::EmWav, false)[0].1;
    let map = curve_for(&out, EstimatorKind::EmMap, false)[0].1;
    let ratio = map / wav;
    let final_active = out.diagnostics.last().unwrap().mean_active;
    let l = cfg.coeff_len as f64;
    gate(
        "dense-channel estimate stays competitive while still pruning",
        ratio <= 1.2 && final_active < l,
        &format!(
            "error ratio with/without prior {ratio:.3} (limit 1.2); \
             final active {final_active:.1} of {l} coefficients"
        ),
    );
}

#[test]
fn experiment_output_is_bit_reproducible() {
    let text = r#"{
        "rng_seed": 9,
        "frames_per_point": 5,
        "ebn0_grid_db": [4.0, 8.0],
        "mmse_cov_draws": 2000
    }"#;
    let cfg = ExperimentConfig::from_json(text).unwrap();
    let render = |out: &ExperimentOutput| {
        (
            metrics_csv(&out.metrics),
            diagnostics_csv(&out.diagnostics),
            serde_json::to_string(&out.metadata).unwrap(),
        )
    };
    let a = render(&run_experiment(&cfg).unwrap());
    let b = render(&run_experiment(&cfg).unwrap());

    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let c = pool.install(|| render(&run_experiment(&cfg).unwrap()));
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let d = single.install(|| render(&run_experiment(&cfg).unwrap()));

    gate(
        "experiment output is bit-reproducible",
        a == b && a == c && a == d,
        &format!(
            "repeat run identical: {}; 4-thread identical: {}; 1-thread identical: {} \
             (metrics, diagnostics, and metadata compared as bytes)",
            a == b,
            a == c,
            a == d
        ),
    );
}

#[test]
fn error_shrinks_from_low_to_high_snr() {
    let cfg = ExperimentConfig::from_json(
        r#"{
            "rng_seed": 1,
            "frames_per_point": 200,
            "ebn0_grid_db": [0.0, 12.0],
            "mmse_cov_draws": 2000
        }"#,
    )
    .unwrap();
    let out = run_experiment(&cfg).unwrap();
    let mut pass = true;
    let mut detail = String::new();
    for kind in EstimatorKind::all() {
        let curve = curve_for(&out, *kind, false);
        let (low, high) = (curve[0].1, curve[1].1);
        pass &= high <= low;
        detail.push_str(&format!("{}: {low:.2e} -> {high:.2e}; ", kind.as_str()));
    }
    detail.push_str("(200 frames, 0 vs 12 dB)");
    gate("error shrinks from low to high SNR for every estimator", pass, &detail);
}
