//! Bit-accurate coherent receiver: matched filter, 8-bit ADC, fixed-point CMA
//! butterfly equalizer, block PCA phase tracker, decisions and BER.

pub mod adc;
pub mod ber;
pub mod cma;
pub mod cpe;

use serde::{Deserialize, Serialize};

use crate::bridge::TapSnapshot;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fixed::FixedSpec;
use crate::jones::{Complex, JonesMatrix2};
use crate::stokes::{dot3, stokes_from_row};
use crate::txsim::{qpsk_decide, rrc_taps, DualPolWaveform, TxConfig};

pub use adc::{adc_codes, adc_quantize, AdcSpec, CodePair};
pub use ber::{BerCounter, PolMap, WindowStats};
pub use cma::{cma_step, CmaOutput, EqualizerState, CENTER_TAP, N_TAPS};
pub use cpe::{cpe_block, CpeBlockOutput, CpeState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RxConfig {
    pub adc: AdcSpec,
    pub tap_spec: FixedSpec,
    pub error_spec: FixedSpec,
    /// CMA step size; must be a power of two.
    pub mu: f64,
    pub cma_radius: f64,
    pub cpe_block: usize,
    pub angle_bits: u32,
    /// Symbols per parallel processing vector.
    pub vector_symbols: usize,
    /// Symbols between tap snapshots; a multiple of `cpe_block`.
    pub snapshot_interval: usize,
    /// Apply the receive-side root-raised-cosine filter ahead of the ADC.
    pub matched_filter: bool,
    /// First output symbol at which BER synchronization may start.
    pub ber_sync_start: u64,
    /// Symbols between equalizer singularity checks.
    pub guard_interval: usize,
}

impl Default for RxConfig {
    fn default() -> Self {
        Self {
            adc: AdcSpec::default(),
            tap_spec: cma::DEFAULT_TAP_SPEC,
            error_spec: cma::DEFAULT_ERROR_SPEC,
            mu: 2f64.powi(-10),
            cma_radius: 1.0,
            cpe_block: cpe::DEFAULT_BLOCK,
            angle_bits: cpe::DEFAULT_ANGLE_BITS,
            vector_symbols: 8,
            snapshot_interval: 4096,
            matched_filter: true,
            ber_sync_start: 16384,
            guard_interval: 1024,
        }
    }
}

impl RxConfig {
    pub fn validate(&self) -> Result<()> {
        self.adc.validate()?;
        self.tap_spec.validate()?;
        self.error_spec.validate()?;
        if self.vector_symbols == 0 || self.cpe_block == 0 || !self.cpe_block.is_multiple_of(self.vector_symbols) {
            return Err(Error::config("rx cpe_block must be a positive multiple of vector_symbols"));
        }
        if self.snapshot_interval == 0 || !self.snapshot_interval.is_multiple_of(self.cpe_block) {
            return Err(Error::config("rx snapshot_interval must be a positive multiple of cpe_block"));
        }
        if self.guard_interval == 0 || !self.guard_interval.is_multiple_of(self.cpe_block) {
            return Err(Error::config("rx guard_interval must be a positive multiple of cpe_block"));
        }
        if self.tap_spec.total_bits > 16 {
            return Err(Error::config("rx tap_spec wider than 16 bits cannot be streamed"));
        }
        CpeState::new(self.cpe_block, self.angle_bits)?;
        EqualizerState::new(self.tap_spec, self.error_spec, self.mu, self.cma_radius, self.adc.lsb())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RxReport {
    /// Bit error ratio after convergence; 0.5 when nothing could be counted.
    pub ber: f64,
    pub n_bits: u64,
    pub bit_errors: u64,
    pub converged_at: u64,
    pub snr_est_db: f64,
    pub pol_map: [Option<PolMap>; 2],
    pub symbols: u64,
    pub resyncs: u32,
    pub guard_resets: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RxOutput {
    /// Decided labels of both outputs, one entry per symbol.
    pub decisions: Vec<[u8; 2]>,
    pub snapshots: Vec<TapSnapshot>,
    /// Cumulative phase registers after each CPE block.
    pub phases: Vec<[f64; 2]>,
}

impl RxOutput {
    pub fn extend(&mut self, other: RxOutput) {
        self.decisions.extend(other.decisions);
        self.snapshots.extend(other.snapshots);
        self.phases.extend(other.phases);
    }
}

#[derive(Debug, Clone)]
struct MatchedFilter {
    taps: Vec<f64>,
    hist: [Vec<Complex>; 2],
}

impl MatchedFilter {
    fn new(tx: &TxConfig) -> Self {
        let sps = tx.samples_per_symbol as f64;
        let taps: Vec<f64> = rrc_taps(tx.rrc_rolloff, tx.rrc_span, tx.samples_per_symbol)
            .into_iter()
            .map(|h| h / sps)
            .collect();
        let n = taps.len() - 1;
        Self {
            taps,
            hist: [vec![Complex::new(0.0, 0.0); n], vec![Complex::new(0.0, 0.0); n]],
        }
    }

    fn delay(&self) -> usize {
        self.taps.len() / 2
    }

    fn apply(&mut self, input: &[Complex], pol: usize, exec: Exec) -> Vec<Complex> {
        let l = self.taps.len();
        let mut ext = std::mem::take(&mut self.hist[pol]);
        ext.extend_from_slice(input);
        let mut out = vec![Complex::new(0.0, 0.0); input.len()];
        let taps = &self.taps;
        const CHUNK: usize = 4096;
        exec.for_each_chunk_mut(&mut out, CHUNK, |ci, chunk| {
            for (i, o) in chunk.iter_mut().enumerate() {
                let n = ci * CHUNK + i + l - 1;
                let mut acc = Complex::new(0.0, 0.0);
                for (k, h) in taps.iter().enumerate() {
                    acc += ext[n - k] * h;
                }
                *o = acc;
            }
        });
        self.hist[pol] = ext[ext.len() - (l - 1)..].to_vec();
        out
    }
}

/// Streaming receiver. Feed consecutive waveform blocks to
/// [`Receiver::process`]; call [`Receiver::report`] at any point.
#[derive(Debug, Clone)]
pub struct Receiver {
    cfg: RxConfig,
    mf: Option<MatchedFilter>,
    eq: EqualizerState,
    cpe: CpeState,
    ber: BerCounter,
    win: [[CodePair; N_TAPS]; 2],
    samples: u64,
    symbols: u64,
    block_y: [Vec<Complex>; 2],
    block_e: Vec<[f64; 2]>,
    seq: u64,
    ns_per_symbol: f64,
    guard_resets: u32,
    delay: i64,
    exec: Exec,
}

impl Receiver {
    pub fn new(cfg: &RxConfig, tx: &TxConfig) -> Result<Self> {
        cfg.validate()?;
        tx.validate()?;
        if tx.samples_per_symbol != 2 {
            return Err(Error::config("receiver requires 2 samples per symbol"));
        }
        if (tx.sample_rate() - cfg.adc.sample_rate).abs() > 1e-6 * cfg.adc.sample_rate {
            return Err(Error::config(format!(
                "adc sample_rate {} does not match transmitter sample rate {}",
                cfg.adc.sample_rate,
                tx.sample_rate()
            )));
        }
        let mf = cfg.matched_filter.then(|| MatchedFilter::new(tx));
        let tx_delay = rrc_taps(tx.rrc_rolloff, tx.rrc_span, 2).len() / 2;
        let mf_delay = mf.as_ref().map_or(0, |m| m.delay());
        let delay = ((tx_delay + mf_delay + CENTER_TAP) / 2) as i64;
        Ok(Self {
            eq: EqualizerState::new(cfg.tap_spec, cfg.error_spec, cfg.mu, cfg.cma_radius, cfg.adc.lsb())?,
            cpe: CpeState::new(cfg.cpe_block, cfg.angle_bits)?,
            ber: BerCounter::new(tx, delay, cfg.ber_sync_start)?,
            win: [[[0; 2]; N_TAPS]; 2],
            samples: 0,
            symbols: 0,
            block_y: [Vec::with_capacity(cfg.cpe_block), Vec::with_capacity(cfg.cpe_block)],
            block_e: Vec::with_capacity(cfg.cpe_block),
            seq: 0,
            ns_per_symbol: 1e9 / tx.symbol_rate,
            guard_resets: 0,
            delay,
            mf,
            cfg: cfg.clone(),
            exec: Exec::default(),
        })
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    /// Stretch snapshot timestamps onto an event clock running `scale` times
    /// faster than the signal clock.
    pub fn with_time_scale(mut self, scale: f64) -> Self {
        self.ns_per_symbol *= scale;
        self
    }

    pub fn config(&self) -> &RxConfig {
        &self.cfg
    }

    pub fn equalizer(&self) -> &EqualizerState {
        &self.eq
    }

    pub fn cpe(&self) -> &CpeState {
        &self.cpe
    }

    /// Output symbol index minus transmitted symbol index at nominal alignment.
    pub fn nominal_delay(&self) -> i64 {
        self.delay
    }

    pub fn symbols(&self) -> u64 {
        self.symbols
    }

    pub fn process(&mut self, wave: &DualPolWaveform) -> RxOutput {
        let (x, y) = match &mut self.mf {
            Some(mf) => (mf.apply(&wave.x, 0, self.exec), mf.apply(&wave.y, 1, self.exec)),
            None => (wave.x.clone(), wave.y.clone()),
        };
        let adc = self.cfg.adc.clone();
        let mut out = RxOutput::default();
        for (sx, sy) in x.iter().zip(&y) {
            for (w, s) in self.win.iter_mut().zip([sx, sy]) {
                w.copy_within(0..N_TAPS - 1, 1);
                w[0] = adc.code_pair(*s);
            }
            let m = self.samples;
            self.samples += 1;
            if m.is_multiple_of(2) {
                let o = cma_step(&mut self.eq, &self.win[0], &self.win[1]);
                self.block_y[0].push(o.y[0]);
                self.block_y[1].push(o.y[1]);
                self.block_e.push(o.e);
                if self.block_e.len() == self.cfg.cpe_block {
                    self.finish_block(&mut out);
                }
            }
        }
        out
    }

    fn finish_block(&mut self, out: &mut RxOutput) {
        let mut derot: [Vec<Complex>; 2] = [Vec::new(), Vec::new()];
        for p in 0..2 {
            derot[p] = match cpe_block(&self.block_y[p], &mut self.cpe, p) {
                Ok(o) => o.derotated,
                Err(_) => cpe::derotate(&self.block_y[p], self.cpe.cum_phase(p)),
            };
        }
        for i in 0..self.cfg.cpe_block {
            let y = [derot[0][i], derot[1][i]];
            let labels = y.map(qpsk_decide);
            self.ber.push(y, labels, self.block_e[i]);
            out.decisions.push(labels);
        }
        self.symbols += self.cfg.cpe_block as u64;
        let phases = [self.cpe.cum_phase(0), self.cpe.cum_phase(1)];
        out.phases.push(phases);
        if self.symbols.is_multiple_of(self.cfg.guard_interval as u64) && self.outputs_degenerate() {
            self.eq.reinit_y_from_x();
            self.guard_resets += 1;
        }
        if self.symbols.is_multiple_of(self.cfg.snapshot_interval as u64) {
            out.snapshots.push(self.snapshot());
        }
        self.block_y[0].clear();
        self.block_y[1].clear();
        self.block_e.clear();
    }

    /// Both equalizer rows point at the same polarization and the two outputs
    /// carry the same data stream.
    fn outputs_degenerate(&self) -> bool {
        let h = self.eq.dc_response();
        let (a, b) = h.row(0);
        let (c, d) = h.row(1);
        let (Ok(s0), Ok(s1)) = (stokes_from_row(a, b), stokes_from_row(c, d)) else {
            return false;
        };
        if dot3(s0.unit(), s1.unit()) <= 0.99 {
            return false;
        }
        let (ya, yb) = (&self.block_y[0], &self.block_y[1]);
        let n = ya.len() as i64;
        let mut best: f64 = 0.0;
        for lag in -4i64..=4 {
            let (mut c, mut pa, mut pb) = (Complex::new(0.0, 0.0), 0.0, 0.0);
            for i in 0..n {
                let j = i + lag;
                if (0..n).contains(&j) {
                    c += ya[i as usize] * yb[j as usize].conj();
                    pa += ya[i as usize].norm_sqr();
                    pb += yb[j as usize].norm_sqr();
                }
            }
            if pa > 0.0 && pb > 0.0 {
                best = best.max(c.norm() / (pa * pb).sqrt());
            }
        }
        best > 0.6
    }

    pub fn snapshot(&mut self) -> TapSnapshot {
        let s = TapSnapshot {
            seq: self.seq,
            t_ns: (self.symbols as f64 * self.ns_per_symbol).round() as u64,
            flags: 0,
            taps: self.eq.tap_codes(),
            cum_phase_x: self.cpe.cum_phase(0),
            cum_phase_y: self.cpe.cum_phase(1),
        };
        self.seq += 1;
        s
    }

    pub fn windows(&self) -> &[WindowStats] {
        &self.ber.windows
    }

    pub fn report(&self) -> RxReport {
        let windows = &self.ber.windows;
        let conv = ber::convergence_window(windows).unwrap_or(windows.len());
        let tail = &windows[conv.min(windows.len())..];
        let n_bits: u64 = tail.iter().map(|w| w.bits).sum();
        let bit_errors: u64 = tail.iter().map(|w| w.bit_errors).sum();
        let sym: u64 = tail.iter().map(|w| w.symbols).sum();
        let power: f64 = tail.iter().map(|w| w.power).sum();
        let proj: f64 = tail.iter().map(|w| w.projection).sum();
        let snr_est_db = if sym > 0 {
            let (p, g) = (power / sym as f64, proj / sym as f64);
            10.0 * (g * g / (p - g * g).max(1e-30)).log10()
        } else {
            f64::NAN
        };
        RxReport {
            ber: if n_bits > 0 { bit_errors as f64 / n_bits as f64 } else { 0.5 },
            n_bits,
            bit_errors,
            converged_at: (conv * ber::WINDOW) as u64,
            snr_est_db,
            pol_map: self.ber.mapping(),
            symbols: self.symbols,
            resyncs: self.ber.resyncs,
            guard_resets: self.guard_resets,
        }
    }
}

/// Channel estimate implied by an equalizer response and the phase registers:
/// `Ĵ = (Q · diag(e^{−i·cum}) · H)⁻¹`, where `Q` routes each output back to
/// its transmitted tributary and removes its quadrant.
pub fn recovered_channel(h: &JonesMatrix2, cum_phase: [f64; 2], map: [PolMap; 2]) -> Result<JonesMatrix2> {
    if map[0].tx_pol == map[1].tx_pol {
        return Err(Error::SingularMatrix);
    }
    let rows = [h.row(0), h.row(1)];
    let mut out = [[Complex::new(0.0, 0.0); 2]; 2];
    for p in 0..2 {
        let ph = cum_phase[p] + map[p].quadrant as f64 * std::f64::consts::FRAC_PI_2;
        let r = Complex::from_polar(1.0, -ph);
        out[map[p].tx_pol] = [rows[p].0 * r, rows[p].1 * r];
    }
    JonesMatrix2::from_rows(out[0], out[1]).inverse()
}

/// Run the full receiver over one waveform.
pub fn run_receiver(wave: &DualPolWaveform, cfg: &RxConfig, tx: &TxConfig) -> Result<(RxOutput, RxReport)> {
    let mut rx = Receiver::new(cfg, tx)?;
    let out = rx.process(wave);
    Ok((out, rx.report()))
}
