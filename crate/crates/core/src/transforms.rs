//! Wavelet and Fourier synthesis operators.
//!
//! The channel is modelled in an orthonormal wavelet basis: a length-`L`
//! impulse response `h` has coefficients `g = W h`, where `W` is the matrix
//! of a periodized discrete wavelet transform, and the stacked frequency
//! response over all subbands is `H = F h = F Wᴴ g = T g`, with `F` the
//! first `L` columns of the `M`-point unitary DFT. Because `W` is
//! orthogonal and the columns of `F` are orthonormal, `TᴴT = I` — the
//! composed operator is an isometry, which the estimators rely on.
//!
//! `W` is built by running the analysis filter cascade on each standard
//! basis vector. Circular convolution at every level keeps the matrix
//! exactly orthonormal regardless of how the filter length compares with
//! the (dyadically shrinking) level lengths.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMat;

const SYM1: [f64; 2] = [0.7071067811865476, 0.7071067811865476];

const SYM4: [f64; 8] = [
    -0.07576571478950221,
    -0.029635527646002493,
    0.497618667632775,
    0.8037387518051321,
    0.29785779560530606,
    -0.09921954357663353,
    -0.012603967262031304,
    0.032223100604051466,
];

const SYM5: [f64; 10] = [
    0.019538882735249827,
    -0.021101834024689042,
    -0.17532808990805623,
    0.01660210576451085,
    0.633978963456792,
    0.7234076904040407,
    0.19939753397685558,
    -0.039134249302313844,
    0.02951949092570626,
    0.027333068344998768,
];

const SYM6: [f64; 12] = [
    0.015404109327044824,
    0.0034907120842221626,
    -0.11799011114852002,
    -0.04831174258569806,
    0.49105594192797375,
    0.787641141028651,
    0.3379294217281658,
    -0.07263752278637658,
    -0.02106029251237085,
    0.04472490177078139,
    0.0017677118642540077,
    -0.00780070832503238,
];

const SYM7: [f64; 14] = [
    0.01737640342688752,
    0.05682675500691821,
    0.05875724493357674,
    0.13753686415006175,
    0.5098526634073376,
    0.731548878287845,
    0.2587915271270876,
    -0.2711118340076545,
    -0.17919011734188062,
    0.06347856039627699,
    0.04670174870514961,
    -0.012757197858304654,
    -0.005182689071610876,
    0.001584755211404699,
];

const SYM8: [f64; 16] = [
    -0.0033824159510050028,
    -0.0005421323318000107,
    0.03169508781152599,
    0.007607487324976609,
    -0.14329423835127267,
    -0.061273359067811076,
    0.4813596512590534,
    0.777185751699628,
    0.36444189483617895,
    -0.0519458381078818,
    -0.027219029917103486,
    0.04913717967373029,
    0.0038087520138944896,
    -0.014952258337062199,
    -0.0003029205147241331,
    0.001889950332767689,
];

const SYM9: [f64; 18] = [
    0.0007989439882701576,
    -0.0017349378724962426,
    -0.010726300522908181,
    0.01616030051724883,
    0.07395442004755304,
    -0.039446727627099276,
    -0.29346748543125056,
    -0.12930531176350568,
    0.4906692608893782,
    0.7159485134825085,
    0.34387770914790694,
    0.07009854269975405,
    0.08577014936834942,
    0.07562173073669322,
    0.01215778194817435,
    -0.002110635909080808,
    0.004072301751074196,
    0.0018753069225248649,
];

const SYM10: [f64; 20] = [
    0.0007701598091144599,
    9.563267072285273e-05,
    -0.00864129927702215,
    -0.0014653825813046104,
    0.04592723923109151,
    0.011609893903711319,
    -0.1594942788849106,
    -0.07088053578323157,
    0.4716906669384429,
    0.7695100370210979,
    0.3838267610670763,
    -0.035536740473819585,
    -0.03199005688242811,
    0.049994972077375154,
    0.00576491203358115,
    -0.02035493981231111,
    -0.0008043589320164513,
    0.004593173585311792,
    5.703608361849501e-05,
    -0.00045932942100465206,
];

/// Decomposition lowpass filter for the symlet of the given order
/// (order 1 is the Haar filter). Orders 2 and 3 coincide with the plain
/// Daubechies filters and are not carried here.
pub fn symlet_lowpass(order: usize) -> Option<&'static [f64]> {
    match order {
        1 => Some(&SYM1),
        4 => Some(&SYM4),
        5 => Some(&SYM5),
        6 => Some(&SYM6),
        7 => Some(&SYM7),
        8 => Some(&SYM8),
        9 => Some(&SYM9),
        10 => Some(&SYM10),
        _ => None,
    }
}

/// A periodized orthonormal wavelet decomposition of fixed length and depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WaveletBasis {
    order: usize,
    levels: usize,
    len: usize,
}

impl WaveletBasis {
    /// `len` must be divisible by `2^levels` so every cascade stage sees an
    /// even input length.
    pub fn new(order: usize, levels: usize, len: usize) -> Result<Self> {
        if symlet_lowpass(order).is_none() {
            return Err(Error::InvalidConfig(format!(
                "unsupported wavelet order {order} (supported: 1, 4..=10)"
            )));
        }
        if levels == 0 {
            return Err(Error::InvalidConfig("wavelet levels must be >= 1".into()));
        }
        if len == 0 || levels >= usize::BITS as usize || len % (1usize << levels) != 0 {
            return Err(Error::InvalidConfig(format!(
                "length {len} is not divisible by 2^{levels}"
            )));
        }
        Ok(WaveletBasis { order, levels, len })
    }

    /// Depth capped at 4, or shallower when `len` runs out of factors of 2.
    pub fn with_default_levels(order: usize, len: usize) -> Result<Self> {
        let nu2 = len.trailing_zeros() as usize;
        if len == 0 || nu2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "length {len} has no dyadic factor; cannot pick a decomposition depth"
            )));
        }
        WaveletBasis::new(order, nu2.min(4), len)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    #[allow(clippy::len_without_is_empty)]
    fn lowpass(&self) -> &'static [f64] {
        symlet_lowpass(self.order).expect("validated at construction")
    }

    /// The analysis matrix `W` (coefficients = `W` · signal), row layout
    /// `[a_J | d_J | d_{J-1} | … | d_1]`.
    pub fn matrix(&self) -> CMat {
        let h = self.lowpass();
        let n = self.len;
        let mut w = CMat::zeros(n, n);
        let mut basis = vec![0.0f64; n];
        for i in 0..n {
            basis[i] = 1.0;
            let col = analyze(&basis, h, self.levels);
            basis[i] = 0.0;
            for (r, v) in col.iter().enumerate() {
                w[(r, i)] = Complex64::new(*v, 0.0);
            }
        }
        w
    }
}

/// One circular analysis step: `a[i] = Σ_k h[k] x[(2i+k) mod n]`, details
/// with the quadrature mirror `g[k] = (-1)^k h[ℓ-1-k]`.
fn analyze_level(x: &[f64], h: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    debug_assert_eq!(n % 2, 0);
    let half = n / 2;
    let taps = h.len();
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for i in 0..half {
        let mut sa = 0.0;
        let mut sd = 0.0;
        for (k, &hk) in h.iter().enumerate() {
            let xv = x[(2 * i + k) % n];
            sa += hk * xv;
            let gk = if k % 2 == 0 { h[taps - 1 - k] } else { -h[taps - 1 - k] };
            sd += gk * xv;
        }
        a[i] = sa;
        d[i] = sd;
    }
    (a, d)
}

fn analyze(x: &[f64], h: &[f64], levels: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n];
    let mut approx = x.to_vec();
    for _ in 0..levels {
        let (a, d) = analyze_level(&approx, h);
        out[a.len()..a.len() + d.len()].copy_from_slice(&d);
        approx = a;
    }
    out[..approx.len()].copy_from_slice(&approx);
    out
}

/// First `l` columns of the `m`-point unitary DFT:
/// `F[r, c] = exp(-i 2π r c / m) / √m`.
pub fn truncated_fourier(m: usize, l: usize) -> CMat {
    let scale = 1.0 / (m as f64).sqrt();
    CMat::from_fn(m, l, |r, c| {
        let angle = -2.0 * std::f64::consts::PI * (r as f64) * (c as f64) / (m as f64);
        Complex64::from_polar(scale, angle)
    })
}

/// The composed synthesis map `T = F Wᴴ` from wavelet coefficients to the
/// stacked frequency response.
///
/// The masked method variants evaluate `T` restricted to a subset of
/// coefficient columns (the *active set* maintained by the pruning
/// estimator). The operator itself is immutable, so one instance can be
/// shared across concurrently processed frames.
pub struct LinearOperator {
    m: usize,
    l_full: usize,
    w: CMat,
    t: CMat,
}

impl LinearOperator {
    pub fn new(m: usize, basis: &WaveletBasis) -> Result<Self> {
        let l = basis.len();
        if l > m {
            return Err(Error::InvalidConfig(format!(
                "coefficient length {l} exceeds observation length {m}"
            )));
        }
        let w = basis.matrix();
        let f = truncated_fourier(m, l);
        let t = f.mul(&w.adjoint())?;
        Ok(LinearOperator { m, l_full: l, w, t })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l_full(&self) -> usize {
        self.l_full
    }

    fn check_mask(&self, active: &[usize]) -> Result<()> {
        for pair in active.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::ShapeMismatch(
                    "active set must be strictly increasing".into(),
                ));
            }
        }
        if let Some(&last) = active.last() {
            if last >= self.l_full {
                return Err(Error::ShapeMismatch(format!(
                    "active index {last} out of range (L = {})",
                    self.l_full
                )));
            }
        }
        Ok(())
    }

    /// `H = T g` over all columns.
    pub fn apply(&self, g: &[Complex64]) -> Result<Vec<Complex64>> {
        self.t.matvec(g)
    }

    /// `H = T g` with coefficients outside `active` treated as zero, even
    /// if the caller left stale values there.
    pub fn apply_masked(&self, g: &[Complex64], active: &[usize]) -> Result<Vec<Complex64>> {
        if g.len() != self.l_full {
            return Err(Error::ShapeMismatch(format!(
                "apply_masked: coefficient vector {} vs L {}",
                g.len(),
                self.l_full
            )));
        }
        self.check_mask(active)?;
        let mut out = vec![Complex64::new(0.0, 0.0); self.m];
        for (r, o) in out.iter_mut().enumerate() {
            let row = self.t.row(r);
            let mut acc = Complex64::new(0.0, 0.0);
            for &j in active {
                acc += row[j] * g[j];
            }
            *o = acc;
        }
        Ok(out)
    }

    /// `g = Tᴴ y` over all columns.
    pub fn adjoint(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        self.t.adjoint_matvec(y)
    }

    /// `g = Tᴴ y` on the active columns only; inactive positions come back
    /// zero.
    pub fn adjoint_masked(&self, y: &[Complex64], active: &[usize]) -> Result<Vec<Complex64>> {
        if y.len() != self.m {
            return Err(Error::ShapeMismatch(format!(
                "adjoint_masked: observation {} vs M {}",
                y.len(),
                self.m
            )));
        }
        self.check_mask(active)?;
        let mut out = vec![Complex64::new(0.0, 0.0); self.l_full];
        for &j in active {
            let mut acc = Complex64::new(0.0, 0.0);
            for (r, yr) in y.iter().enumerate() {
                acc += self.t[(r, j)].conj() * yr;
            }
            out[j] = acc;
        }
        Ok(out)
    }

    /// Impulse response from coefficients: `h = Wᴴ g`.
    pub fn time_from_coeffs(&self, g: &[Complex64]) -> Result<Vec<Complex64>> {
        self.w.adjoint_matvec(g)
    }

    /// Coefficients from an impulse response: `g = W h`.
    pub fn coeffs_from_time(&self, h: &[Complex64]) -> Result<Vec<Complex64>> {
        self.w.matvec(h)
    }

    /// The dense synthesis matrix (used by the covariance-based estimator).
    pub fn synthesis_matrix(&self) -> &CMat {
        &self.t
    }
}
