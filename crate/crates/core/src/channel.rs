//! Lumped time-varying Jones channel with ASE noise and injectable events.
//!
//! The link is `J(t) = D(δ(t)) · P_pdl · R(t) · B · e^{iφ(t)}`:
//! `B` is the static cable birefringence, `R(t)` the product of all active
//! rotation events, `P_pdl` a static Hermitian PDL element, `D(δ)` =
//! `diag(1, e^{iδ})` the phase-difference events, and `φ` the common phase
//! (phase-ramp events plus a Wiener laser-phase walk).
//!
//! Event times run on an "event clock" equal to signal time multiplied by
//! `time_scale`. That lets sub-hertz phenomena be exercised with a few
//! milliseconds of 1 GBd signal.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::jones::{normalize3, Complex, JonesMatrix2};
use crate::txsim::DualPolWaveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Dispersive swell: linear up-chirp from `f0` to `f1` under a Hann envelope.
    SwellChirp,
    /// Resonance at `f0` with a half-amplitude harmonic at `2·f0`.
    Resonance,
    /// Differential phase `diag(1, e^{iδ})`, Hann envelope of peak `amplitude`.
    PhaseDiff,
    /// SoP rotation ramping linearly to `amplitude` over the window, then held.
    SopStep,
    /// Common phase ramping linearly to `amplitude` over the window, then held.
    PhaseRamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub kind: EventKind,
    pub t_start: f64,
    pub t_end: f64,
    /// Radians (rotation angle on the Poincaré sphere, or phase).
    pub amplitude: f64,
    #[serde(default)]
    pub f0: f64,
    /// Chirp end frequency; unused by other kinds.
    #[serde(default)]
    pub f1: f64,
    /// Rotation axis as a unit Stokes vector.
    #[serde(default = "default_axis")]
    pub axis: [f64; 3],
}

fn default_axis() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

/// Loose parameters for [`synth_event`].
#[derive(Debug, Clone, PartialEq)]
pub struct EventParams {
    pub t_start: f64,
    pub t_end: f64,
    pub amplitude: f64,
    pub f0: f64,
    pub f1: f64,
    pub axis: [f64; 3],
}

impl Default for EventParams {
    fn default() -> Self {
        Self {
            t_start: 0.0,
            t_end: 1.0,
            amplitude: 0.1,
            f0: 0.0,
            f1: 0.0,
            axis: default_axis(),
        }
    }
}

pub fn synth_event(kind: EventKind, params: EventParams) -> Result<EventSpec> {
    let n = (params.axis.iter().map(|v| v * v).sum::<f64>()).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::config("event axis must be a nonzero finite vector"));
    }
    let mut f1 = params.f1;
    if kind == EventKind::Resonance && f1 < params.f0 {
        f1 = params.f0;
    }
    let ev = EventSpec {
        kind,
        t_start: params.t_start,
        t_end: params.t_end,
        amplitude: params.amplitude,
        f0: params.f0,
        f1,
        axis: normalize3(params.axis),
    };
    ev.validate()?;
    Ok(ev)
}

fn hann(x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        0.0
    } else {
        0.5 * (1.0 - (2.0 * PI * x).cos())
    }
}

/// Flat-top window with raised-cosine tapers over the first and last 10%.
fn tukey(x: f64) -> f64 {
    const TAPER: f64 = 0.1;
    if !(0.0..=1.0).contains(&x) {
        0.0
    } else if x < TAPER {
        0.5 * (1.0 - (PI * x / TAPER).cos())
    } else if x > 1.0 - TAPER {
        0.5 * (1.0 - (PI * (1.0 - x) / TAPER).cos())
    } else {
        1.0
    }
}

impl EventSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.t_start, self.t_end, self.amplitude, self.f0, self.f1]
            .iter()
            .chain(self.axis.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::config("event parameters must be finite"));
        }
        if !(self.t_start < self.t_end) {
            return Err(Error::config(format!(
                "event t_start ({}) must precede t_end ({})",
                self.t_start, self.t_end
            )));
        }
        if self.kind == EventKind::SwellChirp && self.f0 > self.f1 {
            return Err(Error::config(format!(
                "event f0 ({}) must not exceed f1 ({})",
                self.f0, self.f1
            )));
        }
        if self.f0 < 0.0 {
            return Err(Error::config("event frequencies must be nonnegative"));
        }
        let n = self.axis.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("event axis must be unit length, |axis| = {n}")));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    /// Chirp rate in Hz/s.
    pub fn slope(&self) -> f64 {
        (self.f1 - self.f0) / self.duration()
    }

    fn progress(&self, t: f64) -> f64 {
        (t - self.t_start) / self.duration()
    }

    pub fn is_rotation(&self) -> bool {
        matches!(
            self.kind,
            EventKind::SwellChirp | EventKind::Resonance | EventKind::SopStep
        )
    }

    /// The event's modulation at event time `t`: a rotation angle for rotation
    /// events, δ for `PhaseDiff`, and common phase for `PhaseRamp`.
    pub fn value_at(&self, t: f64) -> f64 {
        let x = self.progress(t);
        let tau = t - self.t_start;
        match self.kind {
            EventKind::SwellChirp => {
                if !(0.0..=1.0).contains(&x) {
                    return 0.0;
                }
                let phase = 2.0 * PI * (self.f0 * tau + 0.5 * self.slope() * tau * tau);
                self.amplitude * hann(x) * phase.sin()
            }
            EventKind::Resonance => {
                if !(0.0..=1.0).contains(&x) {
                    return 0.0;
                }
                let w = 2.0 * PI * self.f0 * tau;
                self.amplitude * tukey(x) * (w.sin() + 0.5 * (2.0 * w).sin())
            }
            EventKind::PhaseDiff => self.amplitude * hann(x),
            EventKind::SopStep | EventKind::PhaseRamp => self.amplitude * x.clamp(0.0, 1.0),
        }
    }

    /// Instantaneous chirp frequency (only meaningful for `SwellChirp`).
    pub fn instantaneous_frequency(&self, t: f64) -> f64 {
        self.f0 + self.slope() * (t - self.t_start)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    /// Static cable birefringence (unitary).
    pub base_rotation: JonesMatrix2,
    pub pdl_db: f64,
    pub pdl_axis: [f64; 3],
    pub events: Vec<EventSpec>,
    /// Residual laser linewidth driving a Wiener phase walk (signal clock).
    pub phase_linewidth_hz: f64,
    /// In-band Es/N0 in dB; `f64::INFINITY` disables noise.
    pub snr_db: f64,
    pub seed: u64,
    /// Jones matrix is held constant over this many symbols.
    pub hold_symbols: usize,
    /// Event-clock seconds per signal second.
    pub time_scale: f64,
    /// Ground truth is recorded every this many symbols.
    pub truth_interval_symbols: usize,
}

impl Default for ChannelState {
    fn default() -> Self {
        Self {
            base_rotation: JonesMatrix2::IDENTITY,
            pdl_db: 0.0,
            pdl_axis: [1.0, 0.0, 0.0],
            events: Vec::new(),
            phase_linewidth_hz: 1e3,
            snr_db: 10.0,
            seed: 1,
            hold_symbols: 64,
            time_scale: 1.0,
            truth_interval_symbols: 4096,
        }
    }
}

/// Largest PDL the channel model accepts, dB.
pub const MAX_PDL_DB: f64 = 2.0;

impl ChannelState {
    pub fn validate(&self) -> Result<()> {
        if !self.base_rotation.is_unitary(1e-9) {
            return Err(Error::config("channel base_rotation must be unitary"));
        }
        if !(0.0..=MAX_PDL_DB).contains(&self.pdl_db) {
            return Err(Error::config(format!(
                "channel pdl_db must be in [0, {MAX_PDL_DB}], got {}",
                self.pdl_db
            )));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::config("channel snr_db must be a number (inf disables noise)"));
        }
        if !(self.phase_linewidth_hz >= 0.0 && self.phase_linewidth_hz.is_finite()) {
            return Err(Error::config("channel phase_linewidth_hz must be >= 0"));
        }
        if self.hold_symbols == 0 {
            return Err(Error::config("channel hold_symbols must be positive"));
        }
        if self.truth_interval_symbols == 0 || !self.truth_interval_symbols.is_multiple_of(self.hold_symbols) {
            return Err(Error::config(
                "channel truth_interval_symbols must be a positive multiple of hold_symbols",
            ));
        }
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return Err(Error::config("channel time_scale must be positive"));
        }
        for e in &self.events {
            e.validate()?;
        }
        Ok(())
    }

    /// Deterministic-event part of `φ(t)`.
    pub fn event_phase(&self, t: f64) -> f64 {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::PhaseRamp)
            .map(|e| e.value_at(t))
            .sum()
    }
}

/// Channel Jones matrix at event time `t`, excluding the stochastic laser
/// phase (which [`Channel`] adds per hold block).
pub fn jones_at(state: &ChannelState, t: f64) -> JonesMatrix2 {
    let mut rot = JonesMatrix2::IDENTITY;
    let mut delta = 0.0;
    for e in &state.events {
        match e.kind {
            EventKind::SwellChirp | EventKind::Resonance | EventKind::SopStep => {
                let theta = e.value_at(t);
                if theta != 0.0 {
                    rot = JonesMatrix2::rotation(e.axis, theta) * rot;
                }
            }
            EventKind::PhaseDiff => delta += e.value_at(t),
            EventKind::PhaseRamp => {}
        }
    }
    let mut j = rot * state.base_rotation;
    if state.pdl_db > 0.0 {
        j = JonesMatrix2::pdl(state.pdl_axis, state.pdl_db) * j;
    }
    if delta != 0.0 {
        j = JonesMatrix2::diag(Complex::new(1.0, 0.0), Complex::from_polar(1.0, delta)) * j;
    }
    let phi = state.event_phase(t);
    if phi != 0.0 {
        j = j.scale(Complex::from_polar(1.0, phi));
    }
    j
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    /// Event-clock seconds.
    pub times: Vec<f64>,
    pub jones: Vec<JonesMatrix2>,
    pub common_phase: Vec<f64>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, t: f64, j: JonesMatrix2, phase: f64) {
        self.times.push(t);
        self.jones.push(j);
        self.common_phase.push(phase);
    }

    pub fn extend(&mut self, other: GroundTruth) {
        self.times.extend(other.times);
        self.jones.extend(other.jones);
        self.common_phase.extend(other.common_phase);
    }

    pub const CSV_HEADER: [&'static str; 10] = [
        "t", "xx_re", "xx_im", "xy_re", "xy_im", "yx_re", "yx_im", "yy_re", "yy_im",
        "common_phase",
    ];

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(Self::CSV_HEADER)?;
        for i in 0..self.len() {
            let mut row = vec![self.times[i]];
            for c in self.jones[i].entries() {
                row.push(c.re);
                row.push(c.im);
            }
            row.push(self.common_phase[i]);
            out.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut truth = GroundTruth::default();
        for rec in rdr.records() {
            let rec = rec?;
            let v: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Io(format!("bad number {s:?}: {e}"))))
                .collect::<Result<_>>()?;
            if v.len() != 10 {
                return Err(Error::Io(format!("expected 10 columns, got {}", v.len())));
            }
            let c = |k: usize| Complex::new(v[1 + 2 * k], v[2 + 2 * k]);
            truth.push(v[0], JonesMatrix2::new(c(0), c(1), c(2), c(3)), v[9]);
        }
        Ok(truth)
    }
}

/// Streaming channel; consecutive calls to [`Channel::propagate_block`] must
/// be fed consecutive waveform blocks whose lengths are multiples of the hold
/// interval.
///
/// All randomness is keyed by hold-block index, so output does not depend on
/// block sizes or on the execution policy.
#[derive(Debug, Clone)]
pub struct Channel {
    state: ChannelState,
    sample_rate: f64,
    hold_samples: usize,
    truth_stride: usize,
    noise_sigma: f64,
    wiener_sigma: f64,
    noise_rng: ChaCha8Rng,
    phase_rng: ChaCha8Rng,
    next_block: u64,
    laser_phase: f64,
    exec: Exec,
}

impl Channel {
    pub fn new(state: &ChannelState, sample_rate: f64, samples_per_symbol: usize) -> Result<Self> {
        state.validate()?;
        let hold_samples = state.hold_symbols * samples_per_symbol;
        let noise_sigma = if state.snr_db.is_infinite() {
            0.0
        } else {
            // Unit-energy symbols at `sps` samples each: Es/N0 = sps/σ².
            (samples_per_symbol as f64 * 10f64.powf(-state.snr_db / 10.0)).sqrt()
        };
        let hold_time = hold_samples as f64 / sample_rate;
        Ok(Self {
            hold_samples,
            truth_stride: state.truth_interval_symbols / state.hold_symbols,
            noise_sigma,
            wiener_sigma: (2.0 * PI * state.phase_linewidth_hz * hold_time).sqrt(),
            noise_rng: ChaCha8Rng::seed_from_u64(state.seed),
            phase_rng: ChaCha8Rng::seed_from_u64(state.seed ^ 0x5DEE_CE66_D1CE_F00D),
            next_block: 0,
            laser_phase: 0.0,
            sample_rate,
            state: state.clone(),
            exec: Exec::default(),
        })
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn state(&self) -> &ChannelState {
        &self.state
    }

    pub fn hold_samples(&self) -> usize {
        self.hold_samples
    }

    fn block_time(&self, block: u64) -> f64 {
        (block * self.hold_samples as u64) as f64 / self.sample_rate * self.state.time_scale
    }

    fn wiener_increment(&self, block: u64) -> f64 {
        if self.wiener_sigma == 0.0 {
            return 0.0;
        }
        let mut r = self.phase_rng.clone();
        r.set_stream(block);
        let g: f64 = r.sample(StandardNormal);
        g * self.wiener_sigma
    }

    pub fn propagate_block(&mut self, wave: &DualPolWaveform, truth: &mut GroundTruth) -> DualPolWaveform {
        assert_eq!(wave.x.len(), wave.y.len());
        assert!(
            wave.len().is_multiple_of(self.hold_samples),
            "block length must be a multiple of the hold interval"
        );
        let n_blocks = wave.len() / self.hold_samples;
        let first = self.next_block;

        // Laser phase is constant within a hold block and walks between them.
        let mut phases = Vec::with_capacity(n_blocks);
        for b in 0..n_blocks as u64 {
            phases.push(self.laser_phase);
            self.laser_phase += self.wiener_increment(first + b);
        }

        let state = &self.state;
        let matrices: Vec<(f64, JonesMatrix2)> = self.exec.map_range(n_blocks, |b| {
            let t = self.block_time(first + b as u64);
            let j = jones_at(state, t).scale(Complex::from_polar(1.0, phases[b]));
            (t, j)
        });
        for (b, (t, j)) in matrices.iter().enumerate() {
            if (first + b as u64).is_multiple_of(self.truth_stride as u64) {
                truth.push(*t, *j, state.event_phase(*t) + phases[b]);
            }
        }

        // Interleave x/y so each hold block is one contiguous chunk.
        let hs = self.hold_samples;
        let mut buf: Vec<[Complex; 2]> = wave.x.iter().zip(&wave.y).map(|(a, b)| [*a, *b]).collect();
        let sigma = self.noise_sigma / 2f64.sqrt();
        let noise_rng = &self.noise_rng;
        self.exec.for_each_chunk_mut(&mut buf, hs, |b, chunk| {
            let j = matrices[b].1;
            let mut rng = noise_rng.clone();
            rng.set_stream(first + b as u64);
            for s in chunk.iter_mut() {
                let mut out = j * *s;
                if sigma > 0.0 {
                    for o in out.iter_mut() {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        *o += Complex::new(re * sigma, im * sigma);
                    }
                }
                *s = out;
            }
        });
        self.next_block += n_blocks as u64;

        let (x, y) = buf.into_iter().map(|[a, b]| (a, b)).unzip();
        DualPolWaveform {
            x,
            y,
            sample_rate: wave.sample_rate,
            t0: wave.t0,
        }
    }
}

/// Whole-waveform convenience wrapper around [`Channel`] (2 samples/symbol).
/// A trailing partial hold block is zero-padded internally and trimmed.
pub fn propagate(wave: &DualPolWaveform, state: &ChannelState) -> Result<(DualPolWaveform, GroundTruth)> {
    if wave.is_empty() {
        return Err(Error::config("cannot propagate an empty waveform"));
    }
    let mut ch = Channel::new(state, wave.sample_rate, 2)?;
    let hs = ch.hold_samples();
    let n = wave.len();
    let padded = n.div_ceil(hs) * hs;
    let mut w = wave.clone();
    w.x.resize(padded, Complex::new(0.0, 0.0));
    w.y.resize(padded, Complex::new(0.0, 0.0));
    let mut truth = GroundTruth::default();
    let mut out = ch.propagate_block(&w, &mut truth);
    out.x.truncate(n);
    out.y.truncate(n);
    Ok((out, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stokes::{stokes_from_row, Rotation3};
    use crate::txsim::{modulate, TxConfig};
    use approx::assert_abs_diff_eq;

    fn quiet() -> ChannelState {
        ChannelState {
            phase_linewidth_hz: 0.0,
            snr_db: f64::INFINITY,
            ..Default::default()
        }
    }

    #[test]
    fn identity_without_events() {
        let s = quiet();
        for t in [0.0, 0.3, 17.0] {
            assert_eq!(jones_at(&s, t), JonesMatrix2::IDENTITY);
        }
    }

    #[test]
    fn sop_step_rotates_row_stokes() {
        let mut s = quiet();
        s.events.push(
            synth_event(
                EventKind::SopStep,
                EventParams {
                    t_start: 1.0,
                    t_end: 1.0 + 1e-9,
                    amplitude: PI / 2.0,
                    axis: [0.0, 0.0, 1.0],
                    ..Default::default()
                },
            )
            .unwrap(),
        );
        let before = jones_at(&s, 0.5);
        let after = jones_at(&s, 2.0);
        let (a, b) = before.row(0);
        let sb = stokes_from_row(a, b).unwrap().unit();
        let (a, b) = after.row(0);
        let sa = stokes_from_row(a, b).unwrap().unit();
        // Rows transform with Rᵀ, which mirrors S3: rotation about (a1, a2, -a3).
        let expect = Rotation3::axis_angle([0.0, 0.0, -1.0], PI / 2.0).apply(sb);
        for k in 0..3 {
            assert_abs_diff_eq!(sa[k], expect[k], epsilon = 1e-12);
        }
        assert_abs_diff_eq!(sa[2], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sb[0] * sa[0] + sb[1] * sa[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn phase_diff_leaves_row_stokes() {
        let mut s = quiet();
        s.base_rotation = JonesMatrix2::rotation([0.3, 0.5, 0.8], 1.1);
        s.pdl_db = 1.0;
        let base = jones_at(&s, 0.5);
        s.events.push(EventSpec {
            kind: EventKind::PhaseDiff,
            t_start: 0.0,
            t_end: 1.0,
            amplitude: 0.4,
            f0: 0.0,
            f1: 0.0,
            axis: [0.0, 1.0, 0.0],
        });
        let j = jones_at(&s, 0.5);
        let d = JonesMatrix2::diag(Complex::new(1.0, 0.0), Complex::from_polar(1.0, 0.4));
        assert!((j - d * base).frobenius() < 1e-14);
        for r in 0..2 {
            let (a, b) = base.row(r);
            let s0 = stokes_from_row(a, b).unwrap();
            let (a, b) = j.row(r);
            let s1 = stokes_from_row(a, b).unwrap();
            for k in 0..3 {
                assert_abs_diff_eq!(s0.unit()[k], s1.unit()[k], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn zero_amplitude_events_change_nothing() {
        let mut s = quiet();
        s.base_rotation = JonesMatrix2::rotation([1.0, 0.0, 0.0], 0.3);
        let reference: Vec<_> = (0..20).map(|k| jones_at(&s, k as f64 * 0.5)).collect();
        for kind in [
            EventKind::SwellChirp,
            EventKind::Resonance,
            EventKind::PhaseDiff,
            EventKind::SopStep,
            EventKind::PhaseRamp,
        ] {
            s.events = vec![synth_event(
                kind,
                EventParams {
                    t_start: 1.0,
                    t_end: 8.0,
                    amplitude: 0.0,
                    f0: 0.5,
                    f1: 1.0,
                    ..Default::default()
                },
            )
            .unwrap()];
            for (k, r) in reference.iter().enumerate() {
                assert_eq!(jones_at(&s, k as f64 * 0.5), *r);
            }
        }
    }

    #[test]
    fn unitary_part_stays_unitary() {
        let mut s = quiet();
        s.pdl_db = 0.0;
        s.events.push(
            synth_event(
                EventKind::SwellChirp,
                EventParams { t_start: 0.0, t_end: 50.0, amplitude: 0.5, f0: 0.06, f1: 0.1, ..Default::default() },
            )
            .unwrap(),
        );
        s.events.push(
            synth_event(EventKind::Resonance, EventParams { t_start: 10.0, t_end: 40.0, amplitude: 0.2, f0: 1.0, ..Default::default() })
                .unwrap(),
        );
        for k in 0..500 {
            assert!(jones_at(&s, k as f64 * 0.1).is_unitary(1e-12));
        }
    }

    #[test]
    fn event_validation() {
        let bad = EventParams { t_start: 2.0, t_end: 1.0, ..Default::default() };
        assert!(synth_event(EventKind::SopStep, bad).is_err());
        let bad = EventParams { f0: 0.2, f1: 0.1, ..Default::default() };
        assert!(synth_event(EventKind::SwellChirp, bad).is_err());
        let bad = EventParams { axis: [0.0; 3], ..Default::default() };
        assert!(synth_event(EventKind::SopStep, bad).is_err());
        let ok = synth_event(EventKind::SwellChirp, EventParams { axis: [0.0, 3.0, 4.0], f0: 0.06, f1: 0.1, t_end: 600.0, ..Default::default() }).unwrap();
        assert_abs_diff_eq!(ok.axis[1], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(ok.slope(), 0.04 / 600.0, epsilon = 1e-18);
    }

    #[test]
    fn noiseless_identity_is_bit_exact() {
        let w = modulate(&TxConfig::default(), 2048).unwrap();
        let (out, truth) = propagate(&w, &quiet()).unwrap();
        assert_eq!(out, w);
        assert_eq!(truth.jones[0], JonesMatrix2::IDENTITY);
    }

    #[test]
    fn lossless_channel_preserves_power() {
        let w = modulate(&TxConfig::default(), 4096).unwrap();
        let mut s = quiet();
        s.base_rotation = JonesMatrix2::rotation([0.1, 0.7, -0.2], 2.0);
        s.phase_linewidth_hz = 1e5;
        s.events.push(synth_event(EventKind::PhaseDiff, EventParams { t_end: 1e-6, amplitude: 1.0, ..Default::default() }).unwrap());
        let (out, _) = propagate(&w, &s).unwrap();
        for i in 0..w.len() {
            let pin = w.x[i].norm_sqr() + w.y[i].norm_sqr();
            let pout = out.x[i].norm_sqr() + out.y[i].norm_sqr();
            assert!((pin - pout).abs() <= 1e-12 * pin.max(1.0));
        }
    }

    #[test]
    fn deterministic_across_blocking_and_exec() {
        let w = modulate(&TxConfig::default(), 8192).unwrap();
        let s = ChannelState {
            truth_interval_symbols: 256,
            ..Default::default()
        };
        let (a, ta) = propagate(&w, &s).unwrap();

        let mut ch = Channel::new(&s, w.sample_rate, 2).unwrap().with_exec(Exec::Sequential);
        let mut tb = GroundTruth::default();
        let mut xs = Vec::new();
        for (lo, hi) in [(0usize, 1024usize), (1024, 9216), (9216, 16384)] {
            let part = DualPolWaveform { x: w.x[lo..hi].to_vec(), y: w.y[lo..hi].to_vec(), sample_rate: w.sample_rate, t0: 0.0 };
            xs.extend(ch.propagate_block(&part, &mut tb).x);
        }
        assert_eq!(a.x, xs);
        assert_eq!(ta, tb);
        assert_eq!(ta.len(), 8192 / 256);
    }

    #[test]
    fn truth_csv_round_trip() {
        let mut t = GroundTruth::default();
        t.push(0.5, JonesMatrix2::rotation([0.0, 1.0, 0.0], 0.3), 0.25);
        t.push(1.5, JonesMatrix2::IDENTITY, -1.0);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,xx_re,xx_im,xy_re"));
        assert_eq!(GroundTruth::read_csv(&buf[..]).unwrap(), t);
    }
}
