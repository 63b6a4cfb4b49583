//! Pilot-only estimators: per-subcarrier maximum likelihood and its
//! covariance-weighted MMSE refinement.

use num_complex::Complex64;

use crate::channels::ChannelModel;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, CMat};
use crate::phy::{FrameLayout, FrameObservation, PosKind};
use crate::transforms::LinearOperator;

/// Variance of each entry of the pilot-ML estimate: the composite noise
/// variance divided by the number of pilot hits per stacked index.
pub fn pilot_noise_var(layout: &FrameLayout, sigma2: f64) -> f64 {
    sigma2 * layout.n_bands() as f64 / layout.pilot_slots() as f64
}

/// Per-subcarrier ML estimate from pilot slots: average `conj(s) · y` over
/// every pilot hit of each stacked index.
pub fn pilot_ml(layout: &FrameLayout, obs: &FrameObservation) -> Result<Vec<Complex64>> {
    let m = layout.m();
    let n = layout.n();
    let mut acc = vec![Complex64::new(0.0, 0.0); m];
    let mut hits = vec![0u32; m];
    for slot in 0..layout.n_slots() {
        for k in 0..n {
            if layout.kind(slot, k) != PosKind::Pilot {
                continue;
            }
            let pos = slot * n + k;
            let j = layout.stacked_index(slot, k);
            acc[j] += obs.s[pos].conj() * obs.y[pos];
            hits[j] += 1;
        }
    }
    for (j, &h) in hits.iter().enumerate() {
        if h == 0 {
            return Err(Error::InvalidConfig(format!(
                "pilot slots leave stacked index {j} unobserved"
            )));
        }
        acc[j] /= h as f64;
    }
    Ok(acc)
}

/// Linear MMSE combiner `R (R + v I)^{-1}` for a response covariance `R`
/// and per-entry estimation noise variance `v`, factored once so it can be
/// applied to many pilot estimates.
#[derive(Debug)]
pub struct MmseCombiner {
    r: CMat,
    factor: CMat,
}

impl MmseCombiner {
    pub fn new(r: CMat, noise_var: f64) -> Result<Self> {
        if r.rows() != r.cols() {
            return Err(Error::ShapeMismatch(format!(
                "covariance must be square, got {}x{}",
                r.rows(),
                r.cols()
            )));
        }
        if !(noise_var > 0.0) || !noise_var.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "noise variance must be positive and finite, got {noise_var}"
            )));
        }
        let m = r.rows();
        // Gate on positive semidefiniteness up to a small tolerance before
        // accepting the covariance.
        let mut gated = r.clone();
        for i in 0..m {
            gated[(i, i)] += Complex64::new(1e-9, 0.0);
        }
        cholesky(&gated).map_err(|_| {
            Error::NonPsd("response covariance is not positive semidefinite".into())
        })?;
        let mut shifted = r.clone();
        for i in 0..m {
            shifted[(i, i)] += Complex64::new(noise_var, 0.0);
        }
        let factor = cholesky(&shifted)?;
        Ok(MmseCombiner { r, factor })
    }

    /// Apply the combiner to a pilot-ML estimate.
    pub fn apply(&self, h_ml: &[Complex64]) -> Result<Vec<Complex64>> {
        if h_ml.len() != self.r.rows() {
            return Err(Error::ShapeMismatch(format!(
                "combiner expects length {}, got {}",
                self.r.rows(),
                h_ml.len()
            )));
        }
        let x = cholesky_solve(&self.factor, h_ml)?;
        self.r.matvec(&x)
    }
}

/// Monte Carlo estimate of the response covariance `E[H H^H]` under a
/// channel model, accumulated in the coefficient domain and mapped through
/// the synthesis operator. Used by the MMSE baseline as genie knowledge.
pub fn genie_response_covariance(
    op: &LinearOperator,
    model: &ChannelModel,
    draws: usize,
    rng: &mut impl rand::Rng,
) -> Result<CMat> {
    if draws == 0 {
        return Err(Error::InvalidConfig(
            "covariance estimation needs at least one draw".into(),
        ));
    }
    let l = op.l_full();
    let mut r_g = CMat::zeros(l, l);
    for _ in 0..draws {
        let ch = model.draw(op, rng)?;
        let g = &ch.g_true;
        for i in 0..l {
            let gi = g[i];
            for j in 0..=i {
                r_g[(i, j)] += gi * g[j].conj();
            }
        }
    }
    let scale = 1.0 / draws as f64;
    for i in 0..l {
        for j in 0..=i {
            let v = r_g[(i, j)] * scale;
            r_g[(i, j)] = v;
            if i != j {
                r_g[(j, i)] = v.conj();
            }
        }
    }
    let t = op.synthesis_matrix();
    t.mul(&r_g)?.mul(&t.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::{ebn0_db_to_sigma2, CodeConfig, FrameConfig};
    use crate::rng::{complex_gaussian_vec, stream, Purpose};
    use crate::transforms::WaveletBasis;

    fn tiny_layout() -> (FrameLayout, CodeConfig) {
        let code = CodeConfig::rate_half();
        let cfg = FrameConfig {
            n_subcarriers: 4,
            payload_bits: 40,
            pilot_symbols: 3,
            tfc: vec![1, 3, 2],
        };
        (FrameLayout::new(&cfg, &code).unwrap(), code)
    }

    fn tiny_operator() -> LinearOperator {
        let basis = WaveletBasis::new(4, 2, 8).unwrap();
        LinearOperator::new(12, &basis).unwrap()
    }

    fn build_obs(
        layout: &FrameLayout,
        code: &CodeConfig,
        h: &[Complex64],
        sigma2: f64,
        seed_frame: u32,
    ) -> (FrameObservation, crate::phy::TxRecord) {
        let mut payload_rng = stream(7, 0, seed_frame, Purpose::Payload);
        let mut il_rng = stream(7, 0, seed_frame, Purpose::Interleaver);
        let mut noise_rng = stream(7, 0, seed_frame, Purpose::Noise);
        crate::phy::build_frame(
            layout,
            code,
            h,
            sigma2,
            0.5,
            &mut payload_rng,
            &mut il_rng,
            &mut noise_rng,
        )
        .unwrap()
    }

    #[test]
    fn noiseless_pilot_ml_recovers_response() {
        let (layout, code) = tiny_layout();
        let mut rng = stream(3, 0, 0, Purpose::Channel);
        let h = complex_gaussian_vec(&mut rng, layout.m(), 1.0);
        let (obs, _) = build_obs(&layout, &code, &h, 1e-18, 0);
        let est = pilot_ml(&layout, &obs).unwrap();
        for (a, b) in est.iter().zip(&h) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn zero_observation_gives_zero_estimate() {
        let (layout, code) = tiny_layout();
        let h = vec![Complex64::new(0.0, 0.0); layout.m()];
        let (mut obs, _) = build_obs(&layout, &code, &h, 1e-18, 1);
        for v in &mut obs.y {
            *v = Complex64::new(0.0, 0.0);
        }
        let est = pilot_ml(&layout, &obs).unwrap();
        for v in est {
            assert_eq!(v, Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn pilot_ml_error_energy_matches_noise_level() {
        // With one pilot hit per index and composite variance sigma2, the
        // total squared error should average m * sigma2 * n_bands / pilots.
        let (layout, code) = tiny_layout();
        let sigma2 = ebn0_db_to_sigma2(4.0, layout.m(), 0.5);
        let expected = layout.m() as f64 * pilot_noise_var(&layout, sigma2);
        let mut total = 0.0;
        let trials = 10_000;
        for f in 0..trials {
            let mut ch_rng = stream(11, 0, f, Purpose::Channel);
            let h = complex_gaussian_vec(&mut ch_rng, layout.m(), 1.0);
            let (obs, _) = build_obs(&layout, &code, &h, sigma2, f);
            let est = pilot_ml(&layout, &obs).unwrap();
            total += est
                .iter()
                .zip(&h)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>();
        }
        let mean = total / trials as f64;
        assert!(
            (mean - expected).abs() < 0.05 * expected,
            "mean error {mean:.6e} vs expected {expected:.6e}"
        );
    }

    #[test]
    fn scalar_combiner_halves_unit_covariance() {
        let mut r = CMat::zeros(1, 1);
        r[(0, 0)] = Complex64::new(1.0, 0.0);
        let comb = MmseCombiner::new(r, 1.0).unwrap();
        let out = comb.apply(&[Complex64::new(0.8, -0.4)]).unwrap();
        assert!((out[0] - Complex64::new(0.4, -0.2)).norm() < 1e-12);
    }

    #[test]
    fn vanishing_noise_leaves_estimate_unchanged() {
        let op = tiny_operator();
        let model = ChannelModel::SparseWavelet { k_nonzero: 3 };
        let mut rng = stream(5, 0, u32::MAX, Purpose::Covariance);
        let r = genie_response_covariance(&op, &model, 500, &mut rng).unwrap();
        let comb = MmseCombiner::new(r.clone(), 1e-12).unwrap();
        let mut draw_rng = stream(5, 1, 0, Purpose::Channel);
        let ch = model.draw(&op, &mut draw_rng).unwrap();
        let out = comb.apply(&ch.h_freq).unwrap();
        // R (R + eps I)^{-1} is near identity only on the support of R; a
        // model draw lives in that support by construction.
        for (a, b) in out.iter().zip(&ch.h_freq) {
            assert!((a - b).norm() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_covariance_returns_zero() {
        let r = CMat::zeros(4, 4);
        let comb = MmseCombiner::new(r, 0.3).unwrap();
        let input = vec![Complex64::new(1.0, 1.0); 4];
        let out = comb.apply(&input).unwrap();
        for v in out {
            assert!(v.norm() < 1e-12);
        }
    }

    #[test]
    fn indefinite_covariance_rejected() {
        let mut r = CMat::zeros(2, 2);
        r[(0, 0)] = Complex64::new(1.0, 0.0);
        r[(1, 1)] = Complex64::new(-1.0, 0.0);
        match MmseCombiner::new(r, 0.5) {
            Err(Error::NonPsd(_)) => {}
            other => panic!("expected NonPsd, got {other:?}"),
        }
    }

    #[test]
    fn genie_covariance_is_hermitian_with_unit_trace() {
        let op = tiny_operator();
        let model = ChannelModel::ExponentialPdp {
            decay_samples: 2.0,
            los_boost: 2.0,
        };
        let mut rng = stream(9, 0, u32::MAX, Purpose::Covariance);
        let r = genie_response_covariance(&op, &model, 2_000, &mut rng).unwrap();
        assert!(r.hermitian_defect() < 1e-12);
        // Every draw is normalized to unit energy, so trace(R_H) = E ||H||^2 = 1.
        let trace: f64 = (0..r.rows()).map(|i| r[(i, i)].re).sum();
        assert!((trace - 1.0).abs() < 1e-9, "trace = {trace}");
    }
}
