//! Transmit chain and frame geometry.
//!
//! A frame is a sequence of OFDM symbol slots. Each slot rides on one of
//! `n_bands` subbands according to a repeating band-hop pattern, and every
//! consecutive group of `n_bands` slots (a *round*) visits each band exactly
//! once, so stacking the rounds yields complete length-`M = n_bands · N`
//! observations of the frequency response. The first slots carry known
//! pilot symbols; the rest carry the coded, interleaved, QPSK-mapped
//! payload, padded to a whole number of rounds with a fixed known filler
//! symbol.
//!
//! Receiver noise is generated in two independent parts: a component that
//! enters through the symbol diagonal (`D_S z₁`, variance `ρσ²`) and a
//! plain additive remainder (variance `(1-ρ)σ²`). With unit-modulus
//! symbols the sum is statistically ordinary CN(0, σ²) noise, but the
//! split is what the semi-blind estimator's update is matched to, so the
//! generator mirrors it.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{complex_gaussian_vec, shuffled_indexes};

/// QPSK carries two coded bits per symbol.
pub const BITS_PER_SYMBOL: usize = 2;

/// Known symbol transmitted on pilot and filler positions.
pub const PILOT_SYMBOL: Complex64 =
    Complex64::new(std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2);

/// Binary convolutional code with zero-tail termination.
///
/// Generator polynomials are bitmasks over the encoder register, most
/// significant bit = newest input. The classic rate-1/2 memory-2 code is
/// `[0o7, 0o5]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeConfig {
    constraint_len: usize,
    generators: Vec<u32>,
}

impl CodeConfig {
    pub fn new(constraint_len: usize, generators: Vec<u32>) -> Result<Self> {
        if !(2..=16).contains(&constraint_len) {
            return Err(Error::InvalidConfig(format!(
                "constraint length {constraint_len} outside 2..=16"
            )));
        }
        if generators.is_empty() {
            return Err(Error::InvalidConfig("no generator polynomials".into()));
        }
        let limit = 1u32 << constraint_len;
        for &g in &generators {
            if g == 0 || g >= limit {
                return Err(Error::InvalidConfig(format!(
                    "generator {g:#o} does not fit constraint length {constraint_len}"
                )));
            }
        }
        if !generators.iter().any(|g| g >> (constraint_len - 1) == 1) {
            return Err(Error::InvalidConfig(
                "no generator taps the newest input bit".into(),
            ));
        }
        Ok(CodeConfig { constraint_len, generators })
    }

    /// The (7,5) rate-1/2 code used throughout the experiments.
    pub fn rate_half() -> Self {
        CodeConfig::new(3, vec![0o7, 0o5]).expect("static parameters")
    }

    pub fn constraint_len(&self) -> usize {
        self.constraint_len
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    pub fn n_states(&self) -> usize {
        1 << (self.constraint_len - 1)
    }

    pub fn rate(&self) -> f64 {
        1.0 / self.generators.len() as f64
    }

    /// Tail bits appended to drive the register back to zero.
    pub fn tail_len(&self) -> usize {
        self.constraint_len - 1
    }

    pub fn coded_len(&self, info_len: usize) -> usize {
        self.generators.len() * (info_len + self.tail_len())
    }

    /// One trellis transition: feed `bit` into `state`, returning the next
    /// state and the output bits packed LSB-first by generator index.
    pub fn step(&self, state: u32, bit: u8) -> (u32, u32) {
        let reg = ((bit as u32) << (self.constraint_len - 1)) | state;
        let mut out = 0u32;
        for (i, &g) in self.generators.iter().enumerate() {
            out |= ((reg & g).count_ones() & 1) << i;
        }
        (reg >> 1, out)
    }

    /// Encode with zero-tail termination; output length is `coded_len`.
    pub fn encode(&self, info: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.coded_len(info.len()));
        let mut state = 0u32;
        let tail = std::iter::repeat(&0u8).take(self.tail_len());
        for &bit in info.iter().chain(tail) {
            debug_assert!(bit <= 1);
            let (next, bits) = self.step(state, bit);
            for i in 0..self.generators.len() {
                out.push(((bits >> i) & 1) as u8);
            }
            state = next;
        }
        debug_assert_eq!(state, 0);
        out
    }
}

/// Random bit interleaver over a fixed length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interleaver {
    perm: Vec<usize>,
}

impl Interleaver {
    pub fn new(len: usize, rng: &mut impl Rng) -> Self {
        Interleaver { perm: shuffled_indexes(rng, len) }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// `out[i] = x[perm[i]]`
    pub fn interleave<T: Copy>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.perm.len());
        self.perm.iter().map(|&p| x[p]).collect()
    }

    /// Inverse of [`interleave`](Self::interleave): `out[perm[i]] = x[i]`.
    pub fn deinterleave<T: Copy>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.perm.len());
        let mut out = x.to_vec();
        for (i, &p) in self.perm.iter().enumerate() {
            out[p] = x[i];
        }
        out
    }
}

/// Gray-mapped QPSK: bit pair `(b_I, b_Q)` at positions `(2j, 2j+1)` maps to
/// `((1-2b_I) + i(1-2b_Q)) / √2`, so a set bit selects the negative axis.
pub fn qpsk_map(bits: &[u8]) -> Result<Vec<Complex64>> {
    if bits.len() % 2 != 0 {
        return Err(Error::ShapeMismatch(format!("qpsk_map: odd bit count {}", bits.len())));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Ok(bits
        .chunks_exact(2)
        .map(|p| {
            Complex64::new(
                if p[0] == 0 { s } else { -s },
                if p[1] == 0 { s } else { -s },
            )
        })
        .collect())
}

/// Frame-level parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameConfig {
    /// Data subcarriers per OFDM symbol.
    pub n_subcarriers: usize,
    /// Information bits per frame.
    pub payload_bits: usize,
    /// Leading all-pilot slots; must be a whole number of band rounds.
    pub pilot_symbols: usize,
    /// Band index (1-based) for each slot position within a round.
    pub tfc: Vec<usize>,
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_subcarriers == 0 {
            return Err(Error::InvalidConfig("n_subcarriers must be positive".into()));
        }
        if self.payload_bits == 0 {
            return Err(Error::InvalidConfig("payload_bits must be positive".into()));
        }
        let nb = self.tfc.len();
        if nb == 0 {
            return Err(Error::InvalidConfig("band-hop pattern is empty".into()));
        }
        let mut seen = vec![false; nb];
        for &b in &self.tfc {
            if b == 0 || b > nb || seen[b - 1] {
                return Err(Error::InvalidConfig(format!(
                    "band-hop pattern {:?} must visit each band 1..={nb} exactly once",
                    self.tfc
                )));
            }
            seen[b - 1] = true;
        }
        if self.pilot_symbols == 0 || self.pilot_symbols % nb != 0 {
            return Err(Error::InvalidConfig(format!(
                "pilot_symbols = {} must be a positive multiple of the round length {nb}",
                self.pilot_symbols
            )));
        }
        Ok(())
    }
}

/// What a single (slot, subcarrier) position carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosKind {
    Pilot,
    /// Index into the frame's data-symbol sequence.
    Data(u32),
    Filler,
}

/// Fully resolved slot/position geometry of a frame.
#[derive(Debug, Clone)]
pub struct FrameLayout {
    n: usize,
    n_bands: usize,
    n_slots: usize,
    pilot_slots: usize,
    payload_bits: usize,
    n_data_symbols: usize,
    slot_band: Vec<usize>,
    kinds: Vec<PosKind>,
    data_pos: Vec<u32>,
}

impl FrameLayout {
    pub fn new(cfg: &FrameConfig, code: &CodeConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n_subcarriers;
        let nb = cfg.tfc.len();
        let coded = code.coded_len(cfg.payload_bits);
        if coded % BITS_PER_SYMBOL != 0 {
            return Err(Error::InvalidConfig(format!(
                "coded length {coded} does not map to whole symbols"
            )));
        }
        let n_data_symbols = coded / BITS_PER_SYMBOL;
        let raw_slots = n_data_symbols.div_ceil(n);
        let data_slots = raw_slots.div_ceil(nb) * nb;
        let n_slots = cfg.pilot_symbols + data_slots;

        let mut slot_band = Vec::with_capacity(n_slots);
        for a in 0..n_slots {
            slot_band.push(cfg.tfc[a % nb]);
        }

        let mut kinds = Vec::with_capacity(n_slots * n);
        let mut data_pos = Vec::with_capacity(n_data_symbols);
        let mut next_data = 0u32;
        for slot in 0..n_slots {
            for k in 0..n {
                let kind = if slot < cfg.pilot_symbols {
                    PosKind::Pilot
                } else if (next_data as usize) < n_data_symbols {
                    data_pos.push((slot * n + k) as u32);
                    let d = PosKind::Data(next_data);
                    next_data += 1;
                    d
                } else {
                    PosKind::Filler
                };
                kinds.push(kind);
            }
        }

        Ok(FrameLayout {
            n,
            n_bands: nb,
            n_slots,
            pilot_slots: cfg.pilot_symbols,
            payload_bits: cfg.payload_bits,
            n_data_symbols,
            slot_band,
            kinds,
            data_pos,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    /// Stacked observation length `M = n_bands · N`.
    pub fn m(&self) -> usize {
        self.n_bands * self.n
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn pilot_slots(&self) -> usize {
        self.pilot_slots
    }

    pub fn n_rounds(&self) -> usize {
        self.n_slots / self.n_bands
    }

    pub fn payload_bits(&self) -> usize {
        self.payload_bits
    }

    pub fn n_data_symbols(&self) -> usize {
        self.n_data_symbols
    }

    /// Positions in the frame, slot-major.
    pub fn n_positions(&self) -> usize {
        self.n_slots * self.n
    }

    pub fn band(&self, slot: usize) -> usize {
        self.slot_band[slot]
    }

    pub fn kind(&self, slot: usize, k: usize) -> PosKind {
        self.kinds[slot * self.n + k]
    }

    /// Index into the stacked length-`M` response observed by `(slot, k)`.
    pub fn stacked_index(&self, slot: usize, k: usize) -> usize {
        (self.slot_band[slot] - 1) * self.n + k
    }

    /// Slot-major position index `(slot, k)` of data symbol `idx`.
    pub fn data_position(&self, idx: usize) -> (usize, usize) {
        let pos = self.data_pos[idx] as usize;
        (pos / self.n, pos % self.n)
    }

    pub fn round_of(&self, slot: usize) -> usize {
        slot / self.n_bands
    }

    pub fn slots_of_round(&self, round: usize) -> std::ops::Range<usize> {
        round * self.n_bands..(round + 1) * self.n_bands
    }
}

/// Noise-split components: `(z₁, z₂)` with per-position variances `ρσ²` and
/// `(1-ρ)σ²`. The composite observation noise is `D_S z₁ + z₂`.
pub fn noise_split(
    rng: &mut impl Rng,
    len: usize,
    sigma2: f64,
    rho: f64,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidConfig(format!("sigma2 = {sigma2} must be positive")));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidConfig(format!("rho = {rho} outside (0, 1]")));
    }
    let z1 = complex_gaussian_vec(rng, len, rho * sigma2);
    let z2 = if rho < 1.0 {
        complex_gaussian_vec(rng, len, (1.0 - rho) * sigma2)
    } else {
        vec![Complex64::new(0.0, 0.0); len]
    };
    Ok((z1, z2))
}

/// Noise variance for a target Eb/N0 in dB, under the convention that the
/// energy of the stacked response is 1 (so the mean received symbol energy
/// per position is `1/M`) and each information bit is carried by
/// `1 / (rate · bits_per_symbol)` channel symbols.
pub fn ebn0_db_to_sigma2(ebn0_db: f64, m: usize, rate: f64) -> f64 {
    let lin = 10f64.powf(ebn0_db / 10.0);
    1.0 / (m as f64 * BITS_PER_SYMBOL as f64 * rate * lin)
}

/// Everything the transmitter knows about one frame (ground truth for
/// scoring and for genie-aided runs).
#[derive(Debug, Clone)]
pub struct TxRecord {
    pub info: Vec<u8>,
    pub coded: Vec<u8>,
    pub symbols: Vec<Complex64>,
}

/// One received frame: transmitted and received values per position
/// (slot-major), plus the noise parameters the receiver is assumed to know.
#[derive(Debug, Clone)]
pub struct FrameObservation {
    pub y: Vec<Complex64>,
    pub s: Vec<Complex64>,
    pub sigma2: f64,
    pub rho: f64,
    pub interleaver: Interleaver,
}

/// Encode, interleave, map, and push one frame through the stacked channel
/// response `h_stack` (length `M`), drawing payload, permutation, and noise
/// from their dedicated streams.
pub fn build_frame(
    layout: &FrameLayout,
    code: &CodeConfig,
    h_stack: &[Complex64],
    sigma2: f64,
    rho: f64,
    payload_rng: &mut impl Rng,
    interleaver_rng: &mut impl Rng,
    noise_rng: &mut impl Rng,
) -> Result<(FrameObservation, TxRecord)> {
    if h_stack.len() != layout.m() {
        return Err(Error::ShapeMismatch(format!(
            "build_frame: response length {} vs M {}",
            h_stack.len(),
            layout.m()
        )));
    }

    let info: Vec<u8> = (0..layout.payload_bits()).map(|_| payload_rng.gen_bool(0.5) as u8).collect();
    let coded = code.encode(&info);
    let interleaver = Interleaver::new(coded.len(), interleaver_rng);
    let symbols = qpsk_map(&interleaver.interleave(&coded))?;
    debug_assert_eq!(symbols.len(), layout.n_data_symbols());

    let n_pos = layout.n_positions();
    let mut s = Vec::with_capacity(n_pos);
    for slot in 0..layout.n_slots() {
        for k in 0..layout.n() {
            let sym = match layout.kind(slot, k) {
                PosKind::Pilot | PosKind::Filler => PILOT_SYMBOL,
                PosKind::Data(idx) => symbols[idx as usize],
            };
            s.push(sym);
        }
    }

    let (z1, z2) = noise_split(noise_rng, n_pos, sigma2, rho)?;
    let mut y = Vec::with_capacity(n_pos);
    let mut pos = 0;
    for slot in 0..layout.n_slots() {
        for k in 0..layout.n() {
            let h = h_stack[layout.stacked_index(slot, k)];
            y.push(s[pos] * h + s[pos] * z1[pos] + z2[pos]);
            pos += 1;
        }
    }

    Ok((
        FrameObservation { y, s, sigma2, rho, interleaver },
        TxRecord { info, coded, symbols },
    ))
}
