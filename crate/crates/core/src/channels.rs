//! Ground-truth channel generation.
//!
//! Two synthetic models: a sparse-coefficient channel (a handful of nonzero
//! wavelet coefficients, the regime the pruning estimator is built for) and
//! an exponentially decaying line-of-sight profile whose coefficients are
//! not sparse. Real measurements can be plugged in through a plain-text
//! impulse-response file. Every realization is normalized to unit energy,
//! which the isometric transforms carry into the coefficient and frequency
//! domains.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{complex_gaussian, sample_distinct};
use crate::transforms::LinearOperator;

/// Stacked sample rate of the composite band: three 528 MHz subbands.
pub const COMPOSITE_SAMPLE_RATE_HZ: f64 = 3.0 * 528.0e6;

/// Which generator produced a realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelTag {
    SparseWavelet,
    ExponentialPdp,
    File,
}

impl ModelTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelTag::SparseWavelet => "sparse-wavelet",
            ModelTag::ExponentialPdp => "exponential-pdp",
            ModelTag::File => "file",
        }
    }
}

/// One channel draw in all three domains.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// Wavelet coefficients, length L.
    pub g_true: Vec<Complex64>,
    /// Impulse response taps, length L.
    pub h_time: Vec<Complex64>,
    /// Stacked frequency response, length M.
    pub h_freq: Vec<Complex64>,
    pub model_tag: ModelTag,
}

fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn scale_in_place(x: &mut [Complex64], s: f64) {
    for v in x.iter_mut() {
        *v *= s;
    }
}

/// Finish a realization from unit-normalized coefficients.
fn from_coeffs(op: &LinearOperator, g: Vec<Complex64>, tag: ModelTag) -> Result<ChannelRealization> {
    let h_time = op.time_from_coeffs(&g)?;
    let h_freq = op.apply(&g)?;
    Ok(ChannelRealization { g_true: g, h_time, h_freq, model_tag: tag })
}

/// Draw a channel with exactly `k_nonzero` nonzero wavelet coefficients at
/// uniformly chosen positions, i.i.d. circular Gaussian values, normalized
/// to unit energy.
pub fn gen_sparse_wavelet_channel(
    op: &LinearOperator,
    k_nonzero: usize,
    rng: &mut impl Rng,
) -> Result<ChannelRealization> {
    let l = op.l_full();
    if k_nonzero == 0 || k_nonzero > l {
        return Err(Error::InvalidConfig(format!(
            "k_nonzero = {k_nonzero} outside 1..={l}"
        )));
    }
    let support = sample_distinct(rng, l, k_nonzero);
    let mut g = vec![Complex64::new(0.0, 0.0); l];
    for &j in &support {
        g[j] = complex_gaussian(rng, 1.0);
    }
    let e = norm(&g);
    if !(e > 0.0) {
        return Err(Error::Numerical("sparse draw produced zero energy".into()));
    }
    scale_in_place(&mut g, 1.0 / e);
    from_coeffs(op, g, ModelTag::SparseWavelet)
}

/// Draw an exponentially decaying non-sparse profile: time-domain taps
/// `h_l = ε_l · exp(-l / (2·decay_samples))` with `ε_l` i.i.d. circular
/// Gaussian, the first tap amplified by `los_boost`, then normalized.
pub fn gen_exponential_channel(
    op: &LinearOperator,
    decay_samples: f64,
    los_boost: f64,
    rng: &mut impl Rng,
) -> Result<ChannelRealization> {
    if !(decay_samples > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "decay constant {decay_samples} must be positive"
        )));
    }
    if !(los_boost > 0.0) {
        return Err(Error::InvalidConfig(format!("los_boost {los_boost} must be positive")));
    }
    let l = op.l_full();
    let mut h = Vec::with_capacity(l);
    for i in 0..l {
        let w = (-(i as f64) / (2.0 * decay_samples)).exp();
        let w = if i == 0 { w * los_boost } else { w };
        h.push(complex_gaussian(rng, 1.0) * w);
    }
    let e = norm(&h);
    if !(e > 0.0) {
        return Err(Error::Numerical("profile draw produced zero energy".into()));
    }
    scale_in_place(&mut h, 1.0 / e);
    let g = op.coeffs_from_time(&h)?;
    Ok(ChannelRealization {
        h_freq: op.apply(&g)?,
        g_true: g,
        h_time: h,
        model_tag: ModelTag::ExponentialPdp,
    })
}

/// Build a realization from explicit time-domain taps (normalizing them),
/// zero-padding up to the operator length.
pub fn realization_from_taps(
    op: &LinearOperator,
    taps: &[Complex64],
    tag: ModelTag,
) -> Result<ChannelRealization> {
    let l = op.l_full();
    if taps.is_empty() || taps.len() > l {
        return Err(Error::ChannelFile(format!(
            "{} taps do not fit impulse-response length {l}",
            taps.len()
        )));
    }
    let mut h = taps.to_vec();
    h.resize(l, Complex64::new(0.0, 0.0));
    let e = norm(&h);
    if !(e > 0.0) {
        return Err(Error::ChannelFile("zero-energy impulse response".into()));
    }
    scale_in_place(&mut h, 1.0 / e);
    let g = op.coeffs_from_time(&h)?;
    Ok(ChannelRealization { h_freq: op.apply(&g)?, g_true: g, h_time: h, model_tag: tag })
}

/// Write taps as plain text, one `re im` pair per line; `#` starts a comment.
pub fn save_cir_file(path: &Path, taps: &[Complex64]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# impulse response, one tap per line: re im")?;
    for t in taps {
        writeln!(w, "{} {}", t.re, t.im)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a tap file written by [`save_cir_file`] (or by hand). Blank lines
/// and `#` comments are ignored. Returns the raw taps; normalization and
/// padding happen in [`realization_from_taps`].
pub fn load_cir_taps(path: &Path) -> Result<Vec<Complex64>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut taps = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut parts = body.split_whitespace();
        let re = parts.next();
        let im = parts.next();
        let extra = parts.next();
        let (re, im) = match (re, im, extra) {
            (Some(re), Some(im), None) => (re, im),
            _ => {
                return Err(Error::ChannelFile(format!(
                    "line {}: expected exactly two values, got {body:?}",
                    lineno + 1
                )))
            }
        };
        let re: f64 = re.parse().map_err(|_| {
            Error::ChannelFile(format!("line {}: bad real part {re:?}", lineno + 1))
        })?;
        let im: f64 = im.parse().map_err(|_| {
            Error::ChannelFile(format!("line {}: bad imaginary part {im:?}", lineno + 1))
        })?;
        taps.push(Complex64::new(re, im));
    }
    if taps.is_empty() {
        return Err(Error::ChannelFile("file holds no taps".into()));
    }
    Ok(taps)
}

/// Load a tap file and lift it to a realization for the given operator.
pub fn load_cir_file(path: &Path, op: &LinearOperator) -> Result<ChannelRealization> {
    let taps = load_cir_taps(path)?;
    realization_from_taps(op, &taps, ModelTag::File)
}

/// Channel ensemble selector shared by the experiment runner and the CLI.
#[derive(Debug, Clone)]
pub enum ChannelModel {
    SparseWavelet { k_nonzero: usize },
    ExponentialPdp { decay_samples: f64, los_boost: f64 },
    File { taps: Vec<Complex64> },
}

impl ChannelModel {
    pub fn draw(&self, op: &LinearOperator, rng: &mut impl Rng) -> Result<ChannelRealization> {
        match self {
            ChannelModel::SparseWavelet { k_nonzero } => {
                gen_sparse_wavelet_channel(op, *k_nonzero, rng)
            }
            ChannelModel::ExponentialPdp { decay_samples, los_boost } => {
                gen_exponential_channel(op, *decay_samples, *los_boost, rng)
            }
            ChannelModel::File { taps } => realization_from_taps(op, taps, ModelTag::File),
        }
    }
}
