//! Soft demapping and SISO decoding.
//!
//! The receiver side of the iterative loop: per-subcarrier bit LLRs from
//! the QPSK observations, exact a-posteriori bit probabilities from a
//! log-domain forward–backward pass over the convolutional trellis, and the
//! per-position posterior symbol means that feed back into the channel
//! update. Everything here is exact inference under the stated model — no
//! max-log shortcuts — so the decoder can be checked verbatim against
//! brute-force codeword enumeration.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::phy::{CodeConfig, FrameLayout, FrameObservation, Interleaver, PosKind, PILOT_SYMBOL};

/// A-posteriori bit probabilities from the decoder.
#[derive(Debug, Clone)]
pub struct BitPosteriors {
    /// P(coded bit = 1), full coded length including tail.
    pub coded_p1: Vec<f64>,
    /// P(info bit = 1), payload only.
    pub info_p1: Vec<f64>,
}

/// Per-position symbol posterior statistics (slot-major over the frame;
/// pilot and filler positions carry point mass on the known symbol).
#[derive(Debug, Clone)]
pub struct SymbolPosteriors {
    /// Posterior mean E[S] per position.
    pub mean: Vec<Complex64>,
    /// Distribution over the four constellation points, indexed by the bit
    /// pair `(b_I << 1) | b_Q`.
    pub dist: Vec<[f64; 4]>,
}

/// LLRs (`log P(bit=1)/P(bit=0)`) of the two bits carried by one received
/// QPSK value, given the response estimate for its subcarrier. Gray mapping
/// separates the axes: the exact four-hypothesis ratio collapses to
/// `-2√2·Re(y·ĥ*)/σ²` for the in-phase bit and the imaginary part for the
/// quadrature bit.
pub fn soft_demap(y: Complex64, h_hat: Complex64, noise_var: f64) -> Result<(f64, f64)> {
    if !(noise_var > 0.0) {
        return Err(Error::InvalidConfig(format!("noise_var = {noise_var} must be positive")));
    }
    let r = y * h_hat.conj();
    let scale = -2.0 * std::f64::consts::SQRT_2 / noise_var;
    Ok((scale * r.re, scale * r.im))
}

/// Demap every data position of a frame against the response estimate
/// `h_est` (stacked, length M) and return coded-domain LLRs (deinterleaved,
/// ready for the decoder).
pub fn demap_frame(
    layout: &FrameLayout,
    obs: &FrameObservation,
    h_est: &[Complex64],
) -> Result<Vec<f64>> {
    if h_est.len() != layout.m() {
        return Err(Error::ShapeMismatch(format!(
            "demap_frame: estimate length {} vs M {}",
            h_est.len(),
            layout.m()
        )));
    }
    let n_data = layout.n_data_symbols();
    let mut llr = vec![0.0f64; 2 * n_data];
    for d in 0..n_data {
        let (slot, k) = layout.data_position(d);
        let pos = slot * layout.n() + k;
        let j = layout.stacked_index(slot, k);
        let (li, lq) = soft_demap(obs.y[pos], h_est[j], obs.sigma2)?;
        llr[2 * d] = li;
        llr[2 * d + 1] = lq;
    }
    Ok(obs.interleaver.deinterleave(&llr))
}

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

/// Exact a-posteriori probabilities for coded and information bits from
/// per-coded-bit LLRs, via the log-domain forward–backward recursion over
/// the zero-tail-terminated trellis.
pub fn bcjr_decode(code: &CodeConfig, llr: &[f64]) -> Result<BitPosteriors> {
    let n_gen = code.n_generators();
    if llr.is_empty() || llr.len() % n_gen != 0 {
        return Err(Error::ShapeMismatch(format!(
            "bcjr_decode: {} LLRs is not a multiple of {n_gen}",
            llr.len()
        )));
    }
    let steps = llr.len() / n_gen;
    let tail = code.tail_len();
    if steps <= tail {
        return Err(Error::ShapeMismatch(format!(
            "bcjr_decode: {steps} trellis steps cannot cover the {tail}-step tail"
        )));
    }
    let info_len = steps - tail;
    let n_states = code.n_states();

    // Transition table: (next state, output bits) per (state, input).
    let trellis: Vec<[(u32, u32); 2]> = (0..n_states as u32)
        .map(|s| [code.step(s, 0), code.step(s, 1)])
        .collect();

    // Branch metric: sum of LLRs at the positions where the branch emits 1.
    // (The common all-zeros likelihood factor cancels in normalization.)
    let gamma = |t: usize, out: u32| -> f64 {
        let base = t * n_gen;
        let mut s = 0.0;
        for i in 0..n_gen {
            if (out >> i) & 1 == 1 {
                s += llr[base + i];
            }
        }
        s
    };

    let neg = f64::NEG_INFINITY;

    // Forward pass, normalized per step to keep the values bounded.
    let mut alpha = vec![vec![neg; n_states]; steps + 1];
    alpha[0][0] = 0.0;
    for t in 0..steps {
        let inputs: &[u8] = if t < info_len { &[0, 1] } else { &[0] };
        let mut next = vec![neg; n_states];
        for s in 0..n_states {
            let a = alpha[t][s];
            if a == neg {
                continue;
            }
            for &u in inputs {
                let (ns, out) = trellis[s][u as usize];
                let cand = a + gamma(t, out);
                next[ns as usize] = lse2(next[ns as usize], cand);
            }
        }
        let m = next.iter().cloned().fold(neg, f64::max);
        if m == neg {
            return Err(Error::Numerical("forward recursion lost all mass".into()));
        }
        for v in next.iter_mut() {
            *v -= m;
        }
        alpha[t + 1] = next;
    }

    // Backward pass; the tail pins the final state to zero.
    let mut beta = vec![vec![neg; n_states]; steps + 1];
    beta[steps][0] = 0.0;
    for t in (0..steps).rev() {
        let inputs: &[u8] = if t < info_len { &[0, 1] } else { &[0] };
        let mut cur = vec![neg; n_states];
        for s in 0..n_states {
            for &u in inputs {
                let (ns, out) = trellis[s][u as usize];
                let b = beta[t + 1][ns as usize];
                if b == neg {
                    continue;
                }
                cur[s] = lse2(cur[s], gamma(t, out) + b);
            }
        }
        let m = cur.iter().cloned().fold(neg, f64::max);
        if m == neg {
            return Err(Error::Numerical("backward recursion lost all mass".into()));
        }
        for v in cur.iter_mut() {
            *v -= m;
        }
        beta[t] = cur;
    }

    let mut coded_p1 = Vec::with_capacity(steps * n_gen);
    let mut info_p1 = Vec::with_capacity(info_len);
    for t in 0..steps {
        let inputs: &[u8] = if t < info_len { &[0, 1] } else { &[0] };
        let mut den = neg;
        let mut num_info = neg;
        let mut num_out = vec![neg; n_gen];
        for s in 0..n_states {
            let a = alpha[t][s];
            if a == neg {
                continue;
            }
            for &u in inputs {
                let (ns, out) = trellis[s][u as usize];
                let b = beta[t + 1][ns as usize];
                if b == neg {
                    continue;
                }
                let joint = a + gamma(t, out) + b;
                den = lse2(den, joint);
                if u == 1 {
                    num_info = lse2(num_info, joint);
                }
                for (i, n1) in num_out.iter_mut().enumerate() {
                    if (out >> i) & 1 == 1 {
                        *n1 = lse2(*n1, joint);
                    }
                }
            }
        }
        if den == neg {
            return Err(Error::Numerical(format!("no consistent path through step {t}")));
        }
        for n1 in &num_out {
            coded_p1.push((n1 - den).exp());
        }
        if t < info_len {
            info_p1.push((num_info - den).exp());
        }
    }

    Ok(BitPosteriors { coded_p1, info_p1 })
}

/// Hard decisions at probability 1/2.
pub fn hard_bits(p1: &[f64]) -> Vec<u8> {
    p1.iter().map(|&p| u8::from(p > 0.5)).collect()
}

/// Per-position posterior symbol statistics from decoder bit posteriors.
/// Data positions take the factorized two-bit product distribution; pilot
/// and filler positions are their own (known) posterior.
pub fn symbol_posteriors(
    layout: &FrameLayout,
    interleaver: &Interleaver,
    coded_p1: &[f64],
) -> Result<SymbolPosteriors> {
    if coded_p1.len() != interleaver.len() || coded_p1.len() != 2 * layout.n_data_symbols() {
        return Err(Error::ShapeMismatch(format!(
            "symbol_posteriors: {} bit posteriors vs {} interleaved positions vs {} data symbols",
            coded_p1.len(),
            interleaver.len(),
            layout.n_data_symbols()
        )));
    }
    let p1 = interleaver.interleave(coded_p1);
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;

    let n_pos = layout.n_positions();
    let mut mean = Vec::with_capacity(n_pos);
    let mut dist = Vec::with_capacity(n_pos);
    for slot in 0..layout.n_slots() {
        for k in 0..layout.n() {
            match layout.kind(slot, k) {
                PosKind::Pilot | PosKind::Filler => {
                    mean.push(PILOT_SYMBOL);
                    dist.push([1.0, 0.0, 0.0, 0.0]);
                }
                PosKind::Data(d) => {
                    let pi = p1[2 * d as usize];
                    let pq = p1[2 * d as usize + 1];
                    mean.push(Complex64::new(
                        (1.0 - 2.0 * pi) * inv_sqrt2,
                        (1.0 - 2.0 * pq) * inv_sqrt2,
                    ));
                    dist.push([
                        (1.0 - pi) * (1.0 - pq),
                        (1.0 - pi) * pq,
                        pi * (1.0 - pq),
                        pi * pq,
                    ]);
                }
            }
        }
    }
    Ok(SymbolPosteriors { mean, dist })
}

/// Run the whole receive chain for one frame against a response estimate:
/// demap, decode, and form symbol posteriors.
pub fn decode_frame(
    layout: &FrameLayout,
    code: &CodeConfig,
    obs: &FrameObservation,
    h_est: &[Complex64],
) -> Result<(BitPosteriors, SymbolPosteriors)> {
    let llr = demap_frame(layout, obs, h_est)?;
    let bits = bcjr_decode(code, &llr)?;
    let symbols = symbol_posteriors(layout, &obs.interleaver, &bits.coded_p1)?;
    Ok((bits, symbols))
}
