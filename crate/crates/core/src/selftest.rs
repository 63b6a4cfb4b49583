//! Independent oracles and quick self-checks.
//!
//! The oracles recompute receiver quantities the slow, obviously-correct
//! way — full codeword enumeration for the decoder, four-hypothesis sums
//! for the demapper, direct density comparison for the coefficient
//! threshold. They back the test suite and the `selftest` CLI command, so
//! they live in the library rather than under `#[cfg(test)]`.

use num_complex::Complex64;

use crate::phy::{qpsk_map, CodeConfig};
use crate::siso::BitPosteriors;

fn lse2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Exact bit posteriors by enumerating every information word (≤ 20 bits)
/// and weighting its codeword by the LLR evidence.
pub fn brute_force_posteriors(code: &CodeConfig, llr: &[f64]) -> BitPosteriors {
    let n_gen = code.n_generators();
    assert_eq!(llr.len() % n_gen, 0);
    let steps = llr.len() / n_gen;
    let info_len = steps - code.tail_len();
    assert!(info_len <= 20, "enumeration over {info_len} bits is unreasonable");

    let n_words = 1usize << info_len;
    let mut log_w = Vec::with_capacity(n_words);
    let mut codewords = Vec::with_capacity(n_words);
    for w in 0..n_words {
        let bits: Vec<u8> = (0..info_len).map(|i| ((w >> i) & 1) as u8).collect();
        let coded = code.encode(&bits);
        let lw: f64 = coded
            .iter()
            .zip(llr)
            .map(|(&b, &l)| if b == 1 { l } else { 0.0 })
            .sum();
        log_w.push(lw);
        codewords.push(coded);
    }

    let total = log_w.iter().fold(f64::NEG_INFINITY, |a, &b| lse2(a, b));
    let coded_len = llr.len();
    let mut coded_p1 = vec![f64::NEG_INFINITY; coded_len];
    let mut info_p1 = vec![f64::NEG_INFINITY; info_len];
    for (w, coded) in codewords.iter().enumerate() {
        let lw = log_w[w];
        for (t, &b) in coded.iter().enumerate() {
            if b == 1 {
                coded_p1[t] = lse2(coded_p1[t], lw);
            }
        }
        for (i, p) in info_p1.iter_mut().enumerate() {
            if (w >> i) & 1 == 1 {
                *p = lse2(*p, lw);
            }
        }
    }
    BitPosteriors {
        coded_p1: coded_p1.into_iter().map(|v| (v - total).exp()).collect(),
        info_p1: info_p1.into_iter().map(|v| (v - total).exp()).collect(),
    }
}

/// QPSK bit LLRs by summing likelihoods over all four constellation points.
pub fn demap_oracle(y: Complex64, h: Complex64, noise_var: f64) -> (f64, f64) {
    let syms = qpsk_map(&[0, 0, 0, 1, 1, 0, 1, 1]).expect("static bits");
    let metric: Vec<f64> = syms.iter().map(|s| -(y - h * s).norm_sqr() / noise_var).collect();
    // Symbol index is the bit pair (b_I << 1) | b_Q.
    let li = lse2(metric[2], metric[3]) - lse2(metric[0], metric[1]);
    let lq = lse2(metric[1], metric[3]) - lse2(metric[0], metric[2]);
    (li, lq)
}

/// Coefficient-keep decision by direct comparison of the two posterior
/// densities `λ·CN(g̃; 0, α²)` vs `(1-λ)·CN(g̃; 0, α²+τ²)`; ties go to zero.
/// Returns `(keep, margin)` where `margin` is the log-density difference
/// (positive = keep); callers probing the boundary can reject tiny margins.
pub fn threshold_oracle(g_abs2: f64, alpha2: f64, tau2: f64, lambda: f64) -> (bool, f64) {
    if lambda >= 1.0 || tau2 == 0.0 {
        // A unit mixture weight or a slab with no variance both collapse the
        // prior onto the spike; the zero-variance rule outranks `λ = 0`.
        return (false, f64::NEG_INFINITY);
    }
    if lambda <= 0.0 {
        return (true, f64::INFINITY);
    }
    let lp0 = lambda.ln() - g_abs2 / alpha2 - alpha2.ln();
    let lp1 = (1.0 - lambda).ln() - g_abs2 / (alpha2 + tau2) - (alpha2 + tau2).ln();
    (lp1 > lp0, lp1 - lp0)
}

/// One line of the quick-check suite.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn report(name: &'static str, passed: bool, detail: String) -> CheckReport {
    CheckReport { name, passed, detail }
}

/// Fast oracle-backed sanity suite run by the `selftest` CLI command.
/// Each check is a compressed version of a full test; the whole suite
/// completes in a few seconds.
pub fn run_quick_checks() -> Vec<CheckReport> {
    use crate::linalg::CMat;
    use crate::rng::{stream, Purpose};
    use crate::transforms::{LinearOperator, WaveletBasis};
    use rand::Rng;

    let mut out = Vec::new();

    // Composed operator is an isometry.
    {
        let check = (|| -> crate::error::Result<f64> {
            let basis = WaveletBasis::new(8, 3, 24)?;
            let op = LinearOperator::new(96, &basis)?;
            let t = op.synthesis_matrix();
            let gram = t.adjoint().mul(t)?;
            Ok(gram.max_abs_diff(&CMat::identity(24)))
        })();
        match check {
            Ok(defect) => out.push(report(
                "operator-isometry",
                defect < 1e-10,
                format!("max |T^H T - I| = {defect:.2e}"),
            )),
            Err(e) => out.push(report("operator-isometry", false, e.to_string())),
        }
    }

    // Encoder fixture.
    {
        let code = CodeConfig::rate_half();
        let got = code.encode(&[1, 0, 1, 1]);
        let want = vec![1, 1, 1, 0, 0, 0, 0, 1, 0, 1, 1, 1];
        out.push(report(
            "encoder-fixture",
            got == want,
            format!("encode(1011) = {got:?}"),
        ));
    }

    // Decoder vs enumeration.
    {
        let code = CodeConfig::rate_half();
        let mut rng = stream(0xC0FFEE, 0, 0, Purpose::Noise);
        let mut worst = 0.0f64;
        for _ in 0..10 {
            let llr: Vec<f64> = (0..code.coded_len(8)).map(|_| rng.gen_range(-5.0..5.0)).collect();
            match crate::siso::bcjr_decode(&code, &llr) {
                Ok(fast) => {
                    let slow = brute_force_posteriors(&code, &llr);
                    for (a, b) in fast.info_p1.iter().zip(&slow.info_p1) {
                        worst = worst.max((a - b).abs());
                    }
                }
                Err(e) => {
                    out.push(report("bcjr-vs-enumeration", false, e.to_string()));
                    worst = f64::INFINITY;
                    break;
                }
            }
        }
        if worst.is_finite() {
            out.push(report(
                "bcjr-vs-enumeration",
                worst < 1e-9,
                format!("max posterior gap = {worst:.2e}"),
            ));
        }
    }

    // Demapper vs four-hypothesis sums.
    {
        let mut rng = stream(0xC0FFEE, 1, 0, Purpose::Noise);
        let mut worst = 0.0f64;
        let mut failed = None;
        for _ in 0..200 {
            let y = Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let h = Complex64::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
            let nv = rng.gen_range(0.05..2.0);
            match crate::siso::soft_demap(y, h, nv) {
                Ok((li, lq)) => {
                    let (oi, oq) = demap_oracle(y, h, nv);
                    worst = worst.max((li - oi).abs()).max((lq - oq).abs());
                }
                Err(e) => {
                    failed = Some(e.to_string());
                    break;
                }
            }
        }
        match failed {
            Some(detail) => out.push(report("demap-vs-oracle", false, detail)),
            None => out.push(report(
                "demap-vs-oracle",
                worst < 1e-9,
                format!("max LLR gap = {worst:.2e}"),
            )),
        }
    }

    // Threshold closed form vs densities.
    {
        let mut rng = stream(0xC0FFEE, 2, 0, Purpose::Noise);
        let mut disagreements = 0u32;
        let mut checked = 0u32;
        for _ in 0..5_000 {
            let alpha2 = rng.gen_range(1e-4..2.0);
            let tau2 = rng.gen_range(1e-4..4.0);
            let lambda = rng.gen_range(0.0..1.0);
            let g2: f64 = rng.gen_range(0.0..6.0);
            let (oracle_keep, margin) = threshold_oracle(g2, alpha2, tau2, lambda);
            if margin.abs() <= 1e-12 {
                continue;
            }
            let g = Complex64::new(g2.sqrt(), 0.0);
            match crate::estimators::bg_threshold(&[g], &[0], alpha2, tau2, lambda) {
                Ok(o) => {
                    let kept = o.beta[0] == 1;
                    checked += 1;
                    if kept != oracle_keep {
                        disagreements += 1;
                    }
                }
                Err(e) => {
                    disagreements += 1;
                    checked += 1;
                    let _ = e;
                }
            }
        }
        out.push(report(
            "threshold-vs-densities",
            disagreements == 0 && checked > 0,
            format!("{disagreements} disagreements over {checked} tuples"),
        ));
    }

    // Hyperparameter update fixture.
    {
        let mut beta = vec![0u8; 96];
        let mut g = vec![Complex64::new(0.0, 0.0); 96];
        let per = (0.9f64 / 20.0).sqrt();
        for j in 0..20 {
            beta[j] = 1;
            g[j] = Complex64::new(per, 0.0);
        }
        match crate::estimators::update_hyperparams(&beta, &g) {
            Ok((lambda, tau2)) => {
                let ok = (lambda - 75.5 / 95.0).abs() < 1e-12 && (tau2 - 0.045).abs() < 1e-12;
                out.push(report(
                    "hyperparam-fixture",
                    ok,
                    format!("lambda = {lambda:.6}, tau2 = {tau2:.6}"),
                ));
            }
            Err(e) => out.push(report("hyperparam-fixture", false, e.to_string())),
        }
    }

    // Noise-split variances.
    {
        let mut rng = stream(0xC0FFEE, 3, 0, Purpose::Noise);
        match crate::phy::noise_split(&mut rng, 20_000, 1.0, 0.25) {
            Ok((z1, z2)) => {
                let v1 = z1.iter().map(|z| z.norm_sqr()).sum::<f64>() / 20_000.0;
                let v2 = z2.iter().map(|z| z.norm_sqr()).sum::<f64>() / 20_000.0;
                let ok = (v1 - 0.25).abs() < 0.01 && (v2 - 0.75).abs() < 0.02;
                out.push(report(
                    "noise-split",
                    ok,
                    format!("var(z1) = {v1:.4} (want 0.25), var(z2) = {v2:.4} (want 0.75)"),
                ));
            }
            Err(e) => out.push(report("noise-split", false, e.to_string())),
        }
    }

    out
}
