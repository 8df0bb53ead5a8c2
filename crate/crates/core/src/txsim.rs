//! Dual-polarization QPSK transmitter driven by two decorrelated PRBS15 streams.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::jones::Complex;

/// Feedback mask of x¹⁵+x¹⁴+1 (register bits 14 and 13).
pub const PRBS15_MASK: u16 = 0x6000;
pub const PRBS15_PERIOD: usize = (1 << 15) - 1;

/// Fibonacci LFSR over a 15-bit register.
///
/// Each step outputs the register MSB (bit 14), shifts left, and feeds the
/// parity of `register & mask` into bit 0. With the all-ones seed the first 15
/// output bits are therefore the seed itself, MSB first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrbsState {
    pub register: u16,
    pub mask: u16,
}

impl PrbsState {
    pub fn new(seed: u16) -> Result<Self> {
        Self::with_mask(seed, PRBS15_MASK)
    }

    pub fn with_mask(seed: u16, mask: u16) -> Result<Self> {
        let register = seed & 0x7FFF;
        if register == 0 {
            return Err(Error::config("PRBS seed must be nonzero in its 15 low bits"));
        }
        Ok(Self { register, mask })
    }

    pub fn advance(&mut self, n: usize) {
        for _ in 0..n {
            prbs15_next(self);
        }
    }
}

pub fn prbs15_next(state: &mut PrbsState) -> u8 {
    let out = ((state.register >> 14) & 1) as u8;
    let fb = ((state.register & state.mask).count_ones() & 1) as u16;
    state.register = ((state.register << 1) | fb) & 0x7FFF;
    out
}

/// Gray-mapped QPSK: bit 0 selects the sign of I, bit 1 the sign of Q.
pub fn qpsk_map(b0: u8, b1: u8) -> Complex {
    let i = if b0 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    let q = if b1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    Complex::new(i, q)
}

/// Inverse of [`qpsk_map`] by quadrant; returns the 2-bit symbol label `b0<<1|b1`.
pub fn qpsk_decide(s: Complex) -> u8 {
    (((s.re < 0.0) as u8) << 1) | (s.im < 0.0) as u8
}

pub fn qpsk_from_label(label: u8) -> Complex {
    qpsk_map((label >> 1) & 1, label & 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TxConfig {
    pub symbol_rate: f64,
    pub samples_per_symbol: usize,
    pub rrc_rolloff: f64,
    pub rrc_span: usize,
    pub seed_x: u16,
    pub seed_y: u16,
    pub decorrelation_delay: usize,
}

impl Default for TxConfig {
    fn default() -> Self {
        Self {
            symbol_rate: 1e9,
            samples_per_symbol: 2,
            rrc_rolloff: 0.1,
            rrc_span: 32,
            seed_x: 0x7FFF,
            seed_y: 0x1D2B,
            decorrelation_delay: 1000,
        }
    }
}

impl TxConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rrc_rolloff > 0.0 && self.rrc_rolloff <= 1.0) {
            return Err(Error::config(format!(
                "tx.rrc_rolloff must be in (0, 1], got {}",
                self.rrc_rolloff
            )));
        }
        if self.rrc_span == 0 || !self.rrc_span.is_multiple_of(2) {
            return Err(Error::config(format!(
                "tx.rrc_span must be a positive even number of symbols, got {}",
                self.rrc_span
            )));
        }
        if self.samples_per_symbol != 2 {
            return Err(Error::config(
                "tx.samples_per_symbol must be 2 (T/2-spaced receiver)",
            ));
        }
        if !(self.symbol_rate > 0.0 && self.symbol_rate.is_finite()) {
            return Err(Error::config("tx.symbol_rate must be positive"));
        }
        PrbsState::new(self.seed_x)?;
        PrbsState::new(self.seed_y)?;
        Ok(())
    }

    pub fn sample_rate(&self) -> f64 {
        self.symbol_rate * self.samples_per_symbol as f64
    }

    /// Initial PRBS states for the x and y tributaries.
    pub fn prbs_states(&self) -> Result<[PrbsState; 2]> {
        let x = PrbsState::new(self.seed_x)?;
        let mut y = PrbsState::new(self.seed_y)?;
        y.advance(self.decorrelation_delay);
        Ok([x, y])
    }
}

/// Root-raised-cosine taps over `span` symbols, normalized to `Σh² = sps`
/// so that the shaped waveform has the symbols' average power.
pub fn rrc_taps(rolloff: f64, span: usize, sps: usize) -> Vec<f64> {
    let n = span * sps + 1;
    let mid = (n / 2) as f64;
    let b = rolloff;
    let mut h: Vec<f64> = (0..n)
        .map(|k| {
            let t = (k as f64 - mid) / sps as f64;
            if t.abs() < 1e-12 {
                1.0 - b + 4.0 * b / PI
            } else if (t.abs() - 1.0 / (4.0 * b)).abs() < 1e-9 {
                b / 2f64.sqrt()
                    * ((1.0 + 2.0 / PI) * (PI / (4.0 * b)).sin()
                        + (1.0 - 2.0 / PI) * (PI / (4.0 * b)).cos())
            } else {
                ((PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos())
                    / (PI * t * (1.0 - (4.0 * b * t).powi(2)))
            }
        })
        .collect();
    let e: f64 = h.iter().map(|v| v * v).sum();
    let g = (sps as f64 / e).sqrt();
    h.iter_mut().for_each(|v| *v *= g);
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualPolWaveform {
    pub x: Vec<Complex>,
    pub y: Vec<Complex>,
    pub sample_rate: f64,
    /// Time of the first sample, seconds.
    pub t0: f64,
}

impl DualPolWaveform {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Regenerates the transmitted QPSK symbol labels of both tributaries.
#[derive(Debug, Clone)]
pub struct SymbolSource {
    prbs: [PrbsState; 2],
}

impl SymbolSource {
    pub fn new(cfg: &TxConfig) -> Result<Self> {
        Ok(Self {
            prbs: cfg.prbs_states()?,
        })
    }

    /// Next symbol label for each polarization.
    pub fn next_labels(&mut self) -> [u8; 2] {
        [0, 1].map(|p| {
            let b0 = prbs15_next(&mut self.prbs[p]);
            let b1 = prbs15_next(&mut self.prbs[p]);
            (b0 << 1) | b1
        })
    }
}

/// Streaming pulse-shaping modulator; successive blocks are contiguous.
#[derive(Debug, Clone)]
pub struct Modulator {
    cfg: TxConfig,
    taps: Vec<f64>,
    source: SymbolSource,
    /// Last `span` symbols of each polarization (filter memory).
    history: [Vec<Complex>; 2],
    symbols_out: u64,
    exec: Exec,
}

impl Modulator {
    pub fn new(cfg: &TxConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            taps: rrc_taps(cfg.rrc_rolloff, cfg.rrc_span, cfg.samples_per_symbol),
            source: SymbolSource::new(cfg)?,
            history: [
                vec![Complex::new(0.0, 0.0); cfg.rrc_span],
                vec![Complex::new(0.0, 0.0); cfg.rrc_span],
            ],
            symbols_out: 0,
            cfg: cfg.clone(),
            exec: Exec::default(),
        })
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    /// Filter group delay in samples.
    pub fn delay_samples(&self) -> usize {
        self.taps.len() / 2
    }

    pub fn next_block(&mut self, n_symbols: usize) -> DualPolWaveform {
        let sps = self.cfg.samples_per_symbol;
        let span = self.cfg.rrc_span;
        let mut ext: [Vec<Complex>; 2] = [
            Vec::with_capacity(span + n_symbols),
            Vec::with_capacity(span + n_symbols),
        ];
        for p in 0..2 {
            ext[p].extend_from_slice(&self.history[p]);
        }
        for _ in 0..n_symbols {
            let labels = self.source.next_labels();
            for p in 0..2 {
                ext[p].push(qpsk_from_label(labels[p]));
            }
        }
        let taps = &self.taps;
        let shape = |sym: &[Complex], out: &mut [Complex], first: usize| {
            for (k, o) in out.iter_mut().enumerate() {
                let m = first + k;
                let (j, r) = (m / sps + span, m % sps);
                let mut acc = Complex::new(0.0, 0.0);
                let mut i = 0;
                while r + i * sps < taps.len() && i <= j {
                    acc += sym[j - i] * taps[r + i * sps];
                    i += 1;
                }
                *o = acc;
            }
        };
        let n = n_symbols * sps;
        let mut x = vec![Complex::new(0.0, 0.0); n];
        let mut y = vec![Complex::new(0.0, 0.0); n];
        const CHUNK: usize = 4096;
        self.exec
            .for_each_chunk_mut(&mut x, CHUNK, |ci, c| shape(&ext[0], c, ci * CHUNK));
        self.exec
            .for_each_chunk_mut(&mut y, CHUNK, |ci, c| shape(&ext[1], c, ci * CHUNK));
        for p in 0..2 {
            let len = ext[p].len();
            self.history[p] = ext[p][len - span..].to_vec();
        }
        let t0 = (self.symbols_out * sps as u64) as f64 / self.cfg.sample_rate();
        self.symbols_out += n_symbols as u64;
        DualPolWaveform {
            x,
            y,
            sample_rate: self.cfg.sample_rate(),
            t0,
        }
    }
}

pub fn modulate(cfg: &TxConfig, n_symbols: usize) -> Result<DualPolWaveform> {
    cfg.validate()?;
    if n_symbols < cfg.rrc_span {
        return Err(Error::config(format!(
            "need at least rrc_span = {} symbols, got {n_symbols}",
            cfg.rrc_span
        )));
    }
    Ok(Modulator::new(cfg)?.next_block(n_symbols))
}
