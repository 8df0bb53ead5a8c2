//! Sensing observables derived from the equalizer tap stream.
//!
//! Sample values that could not be computed (singular matrix, zero power)
//! are stored as NaN and counted as gaps; nothing is interpolated.

mod export;
mod report;
mod spectrogram;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bridge::TapSnapshot;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fixed::FixedSpec;
use crate::jones::{pdl_db, polar_decompose, unitary_correlation, Complex, JonesMatrix2};
use crate::rxdsp::cma::DEFAULT_TAP_SPEC;
use crate::stokes::{stokes_from_row, Rotation3};

pub use export::{read_series_csv, write_series_csv};
pub use report::{analyze, regularize, Analysis, AnalysisSummary, NamedPeaks, FLAT_CORRELATION, FLAT_SOP_RMS};
pub use spectrogram::{
    estimate_chirp_slope, find_peaks, spectrogram, ChirpFit, SpectralPeak, SpectrogramGrid, Window, POWER_FLOOR,
    RIDGE_PROMINENCE_DB,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingSeries {
    pub label: String,
    /// Seconds on the event clock.
    pub t: Vec<f64>,
    /// NaN marks a gap.
    pub values: Vec<f64>,
    pub rate_hz: f64,
}

impl SensingSeries {
    pub fn new(label: impl Into<String>, t: Vec<f64>, values: Vec<f64>) -> Self {
        let rate_hz = rate_of(&t);
        Self {
            label: label.into(),
            t,
            values,
            rate_hz,
        }
    }

    /// Uniformly sampled series starting at t = 0.
    pub fn uniform(label: impl Into<String>, rate_hz: f64, values: Vec<f64>) -> Self {
        let t = (0..values.len()).map(|i| i as f64 / rate_hz).collect();
        Self {
            label: label.into(),
            t,
            values,
            rate_hz,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn gaps(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    pub fn mean(&self) -> f64 {
        let (s, n) = self
            .values
            .iter()
            .filter(|v| !v.is_nan())
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        if n == 0 {
            f64::NAN
        } else {
            s / n as f64
        }
    }

    /// RMS deviation from the mean, ignoring gaps.
    pub fn rms_fluctuation(&self) -> f64 {
        let m = self.mean();
        let (s, n) = self
            .values
            .iter()
            .filter(|v| !v.is_nan())
            .fold((0.0, 0usize), |(s, n), v| (s + (v - m) * (v - m), n + 1));
        if n == 0 {
            f64::NAN
        } else {
            (s / n as f64).sqrt()
        }
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            label: self.label.clone(),
            t: self.t[range.clone()].to_vec(),
            values: self.values[range].to_vec(),
            rate_hz: self.rate_hz,
        }
    }

    pub fn relabel(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

/// Sample rate from the median spacing of `t`.
fn rate_of(t: &[f64]) -> f64 {
    if t.len() < 2 {
        return f64::NAN;
    }
    let mut d: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    d.sort_by(f64::total_cmp);
    1.0 / d[d.len() / 2]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSeries {
    pub label: String,
    pub t: Vec<f64>,
    pub values: Vec<Complex>,
    pub rate_hz: f64,
}

impl ComplexSeries {
    pub fn abs(&self) -> SensingSeries {
        SensingSeries {
            label: format!("{}_abs", self.label),
            t: self.t.clone(),
            values: self.values.iter().map(|c| c.norm()).collect(),
            rate_hz: self.rate_hz,
        }
    }

    pub fn arg(&self) -> SensingSeries {
        SensingSeries {
            label: format!("{}_arg", self.label),
            t: self.t.clone(),
            values: self.values.iter().map(|c| c.arg()).collect(),
            rate_hz: self.rate_hz,
        }
    }
}

/// Time series of Jones matrices; `None` marks a gap.
#[derive(Debug, Clone, PartialEq)]
pub struct JonesSeries {
    pub t: Vec<f64>,
    pub values: Vec<Option<JonesMatrix2>>,
    pub rate_hz: f64,
}

impl JonesSeries {
    pub fn new(t: Vec<f64>, values: Vec<Option<JonesMatrix2>>) -> Self {
        let rate_hz = rate_of(&t);
        Self { t, values, rate_hz }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map<F>(&self, exec: Exec, f: F) -> Self
    where
        F: Fn(&JonesMatrix2) -> Option<JonesMatrix2> + Sync + Send,
    {
        Self {
            t: self.t.clone(),
            values: exec.map(&self.values, |v| v.as_ref().and_then(&f)),
            rate_hz: self.rate_hz,
        }
    }

    pub fn scalar<F>(&self, label: &str, exec: Exec, f: F) -> SensingSeries
    where
        F: Fn(&JonesMatrix2) -> Option<f64> + Sync + Send,
    {
        SensingSeries {
            label: label.to_string(),
            t: self.t.clone(),
            values: exec.map(&self.values, |v| v.as_ref().and_then(&f).unwrap_or(f64::NAN)),
            rate_hz: self.rate_hz,
        }
    }
}

/// How tap codes map to coefficients and frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TapFormat {
    pub tap_spec: FixedSpec,
    /// Equalizer input sample rate (taps are spaced 1/sample_rate).
    pub sample_rate: f64,
}

impl Default for TapFormat {
    fn default() -> Self {
        Self {
            tap_spec: DEFAULT_TAP_SPEC,
            sample_rate: 2e9,
        }
    }
}

/// `H(ω)` with entry pq = Σ_k w_pq[k]·e^{−iωk·Ts}, ω = 2π·freq_offset_hz.
pub fn jones_from_taps(snapshot: &TapSnapshot, freq_offset_hz: f64, fmt: &TapFormat) -> JonesMatrix2 {
    let w = 2.0 * PI * freq_offset_hz / fmt.sample_rate;
    let spec = &fmt.tap_spec;
    let h = |f: usize| -> Complex {
        snapshot
            .filter(f)
            .iter()
            .enumerate()
            .map(|(k, [re, im])| {
                let c = Complex::new(spec.dequantize(*re as i32), spec.dequantize(*im as i32));
                if w == 0.0 {
                    c
                } else {
                    c * Complex::from_polar(1.0, -w * k as f64)
                }
            })
            .sum()
    };
    JonesMatrix2::new(h(0), h(1), h(2), h(3))
}

pub fn snapshot_times(snaps: &[TapSnapshot]) -> Vec<f64> {
    snaps.iter().map(|s| s.t_ns as f64 * 1e-9).collect()
}

/// Equalizer response per snapshot, phase-corrected by the tracker
/// registers: `M_t = diag(e^{−i·cum_x}, e^{−i·cum_y})·H_t(0)`.
pub fn equalizer_series(snaps: &[TapSnapshot], fmt: &TapFormat) -> JonesSeries {
    let values = snaps
        .iter()
        .map(|s| {
            let h = jones_from_taps(s, 0.0, fmt);
            let d = JonesMatrix2::diag(
                Complex::from_polar(1.0, -s.cum_phase_x),
                Complex::from_polar(1.0, -s.cum_phase_y),
            );
            Some(d * h)
        })
        .collect();
    JonesSeries::new(snapshot_times(snaps), values)
}

/// Channel estimate per snapshot, `Ĵ_t = M_t⁻¹`.
pub fn channel_series(snaps: &[TapSnapshot], fmt: &TapFormat, exec: Exec) -> JonesSeries {
    equalizer_series(snaps, fmt).map(exec, |m| m.inverse().ok())
}

/// Inverse of the raw tap response `H_t(0)⁻¹`, without phase correction.
pub fn raw_inverse_series(snaps: &[TapSnapshot], fmt: &TapFormat, exec: Exec) -> JonesSeries {
    let values = exec.map(snaps, |s| jones_from_taps(s, 0.0, fmt).inverse().ok());
    JonesSeries::new(snapshot_times(snaps), values)
}

/// Unitary factor of every sample plus the PDL series in dB.
pub fn strip_pdl(series: &JonesSeries, exec: Exec) -> (JonesSeries, SensingSeries) {
    let parts = exec.map(&series.values, |v| v.as_ref().and_then(|m| polar_decompose(m).ok()));
    let unitary = JonesSeries {
        t: series.t.clone(),
        values: parts.iter().map(|p| p.map(|p| p.unitary)).collect(),
        rate_hz: series.rate_hz,
    };
    let pdl = SensingSeries {
        label: "pdl_db".into(),
        t: series.t.clone(),
        values: parts
            .iter()
            .map(|p| p.and_then(|p| pdl_db(&p.hermitian).ok()).unwrap_or(f64::NAN))
            .collect(),
        rate_hz: series.rate_hz,
    };
    (unitary, pdl)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Row {
    #[default]
    First,
    Second,
}

impl Row {
    pub fn index(self) -> usize {
        match self {
            Row::First => 0,
            Row::Second => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SopSeries {
    pub s1: SensingSeries,
    pub s2: SensingSeries,
    pub s3: SensingSeries,
    /// S1 and S2 after rotating the alignment-window mean onto +S3.
    pub p1: SensingSeries,
    pub p2: SensingSeries,
    pub alignment: Rotation3,
}

/// Stokes trace of one matrix row, then projected so the mean over the first
/// `align_fraction` of the record sits at (0, 0, 1).
pub fn sop_series(series: &JonesSeries, row: Row, align_fraction: f64) -> Result<SopSeries> {
    if series.is_empty() {
        return Err(Error::TooShort { len: 0, needed: 1 });
    }
    if !(align_fraction > 0.0 && align_fraction <= 1.0) {
        return Err(Error::config("alignment fraction must be in (0, 1]"));
    }
    let r = row.index();
    let stokes: Vec<Option<[f64; 3]>> = series
        .values
        .iter()
        .map(|v| {
            v.and_then(|m| {
                let (a, b) = m.row(r);
                stokes_from_row(a, b).ok().map(|s| s.unit())
            })
        })
        .collect();
    let n_align = ((series.len() as f64 * align_fraction).ceil() as usize).clamp(1, series.len());
    let mut mean = [0.0; 3];
    for s in stokes[..n_align].iter().flatten() {
        for k in 0..3 {
            mean[k] += s[k];
        }
    }
    let alignment = Rotation3::to_north(mean);
    let comp = |k: usize, proj: bool| -> Vec<f64> {
        stokes
            .iter()
            .map(|s| match s {
                Some(v) if proj => alignment.apply(*v)[k],
                Some(v) => v[k],
                None => f64::NAN,
            })
            .collect()
    };
    let mk = |label: &str, values| SensingSeries {
        label: label.to_string(),
        t: series.t.clone(),
        values,
        rate_hz: series.rate_hz,
    };
    Ok(SopSeries {
        s1: mk("s1", comp(0, false)),
        s2: mk("s2", comp(1, false)),
        s3: mk("s3", comp(2, false)),
        p1: mk("s1_projected", comp(0, true)),
        p2: mk("s2_projected", comp(1, true)),
        alignment,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    FirstSample,
    /// Compare each sample with the one `lag` samples earlier.
    Sliding(usize),
}

/// `C_t = Tr(U_refᴴ·U_t)/2` for a unitary series.
pub fn correlation_series(series: &JonesSeries, reference: Reference) -> Result<ComplexSeries> {
    if series.is_empty() {
        return Err(Error::TooShort { len: 0, needed: 1 });
    }
    let nan = Complex::new(f64::NAN, f64::NAN);
    let first = series.values.iter().flatten().next().copied();
    let values = (0..series.len())
        .map(|i| {
            let r = match reference {
                Reference::FirstSample => first,
                Reference::Sliding(lag) => i.checked_sub(lag).and_then(|j| series.values[j]),
            };
            match (series.values[i], r) {
                (Some(u), Some(r)) => unitary_correlation(&u, &r).unwrap_or(nan),
                _ => nan,
            }
        })
        .collect();
    Ok(ComplexSeries {
        label: "corr".into(),
        t: series.t.clone(),
        values,
        rate_hz: series.rate_hz,
    })
}

/// Unwrap a phase sequence (NaN gaps are skipped and kept).
pub fn unwrap_phase(values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for &v in values {
        if v.is_nan() {
            out.push(f64::NAN);
            continue;
        }
        if let Some(p) = prev {
            let d = v - p;
            offset -= (d / (2.0 * PI)).round() * 2.0 * PI;
        }
        prev = Some(v);
        out.push(v + offset);
    }
    out
}

/// Largest phase change between consecutive samples that unwrapping trusts;
/// larger steps are reported as cycle-slip gaps.
pub const MAX_PHASE_STEP: f64 = PI / 4.0;

/// Interferometer phase from the tracker registers and the raw unitary
/// series (`U_t` = unitary part of `H_t⁻¹`):
/// `common = (cx + cy)/2 + unwrap(arg det U_t)/2`, `differential = cx − cy`.
/// Samples following a jump of [`MAX_PHASE_STEP`] or more are gaps.
pub fn reconstruct_phase(
    phase_x: &SensingSeries,
    phase_y: &SensingSeries,
    unitary: &JonesSeries,
) -> Result<(SensingSeries, SensingSeries)> {
    let n = phase_x.len();
    if phase_y.len() != n || unitary.len() != n {
        return Err(Error::Alignment(format!(
            "lengths differ: phase_x {}, phase_y {}, unitary {}",
            n,
            phase_y.len(),
            unitary.len()
        )));
    }
    let aligned = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(1.0));
    if !aligned(&phase_x.t, &phase_y.t) || !aligned(&phase_x.t, &unitary.t) {
        return Err(Error::Alignment("time grids differ".into()));
    }
    let det_arg: Vec<f64> = unitary
        .values
        .iter()
        .map(|u| u.map_or(f64::NAN, |u| u.det().arg()))
        .collect();
    let det_arg = unwrap_phase(&det_arg);
    let slip = |v: &[f64], i: usize| i > 0 && (v[i] - v[i - 1]).abs() >= MAX_PHASE_STEP;
    let mut common = vec![f64::NAN; n];
    let mut differential = vec![f64::NAN; n];
    for i in 0..n {
        if slip(&phase_x.values, i) || slip(&phase_y.values, i) || slip(&det_arg, i) {
            continue;
        }
        common[i] = 0.5 * (phase_x.values[i] + phase_y.values[i]) + 0.5 * det_arg[i];
        differential[i] = phase_x.values[i] - phase_y.values[i];
    }
    Ok((
        SensingSeries {
            label: "phase_common".into(),
            t: phase_x.t.clone(),
            values: common,
            rate_hz: phase_x.rate_hz,
        },
        SensingSeries {
            label: "phase_differential".into(),
            t: phase_x.t.clone(),
            values: differential,
            rate_hz: phase_x.rate_hz,
        },
    ))
}

/// Tracker registers of a snapshot stream as two series.
pub fn phase_series(snaps: &[TapSnapshot]) -> (SensingSeries, SensingSeries) {
    let t = snapshot_times(snaps);
    (
        SensingSeries::new("cum_phase_x", t.clone(), snaps.iter().map(|s| s.cum_phase_x).collect()),
        SensingSeries::new("cum_phase_y", t, snaps.iter().map(|s| s.cum_phase_y).collect()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rxdsp::cma::{CENTER_TAP, N_TAPS};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn snapshot_of(h: &JonesMatrix2, seq: u64) -> TapSnapshot {
        let spec = DEFAULT_TAP_SPEC;
        let mut taps = vec![[0i16; 2]; 4 * N_TAPS];
        for (f, c) in h.entries().iter().enumerate() {
            taps[f * N_TAPS + CENTER_TAP] = [spec.quantize(c.re) as i16, spec.quantize(c.im) as i16];
        }
        TapSnapshot {
            seq,
            t_ns: seq * 1_000_000,
            flags: 0,
            taps,
            cum_phase_x: 0.0,
            cum_phase_y: 0.0,
        }
    }

    #[test]
    fn center_spike_is_identity() {
        let s = snapshot_of(&JonesMatrix2::IDENTITY, 0);
        assert_eq!(jones_from_taps(&s, 0.0, &TapFormat::default()), JonesMatrix2::IDENTITY);
    }

    #[test]
    fn pure_delay_has_unit_magnitude_response() {
        let mut s = snapshot_of(&JonesMatrix2::ZERO, 0);
        s.taps[3] = [128, 0];
        s.taps[3 * N_TAPS + 5] = [128, 0];
        let fmt = TapFormat::default();
        for f in [0.0, 1e8, 3.3e8, -7e8, 1e9] {
            let h = jones_from_taps(&s, f, &fmt);
            assert_abs_diff_eq!(h.xx.norm(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(h.yy.norm(), 1.0, epsilon = 1e-12);
            // DTFT of a delay by k samples: phase −ωk·Ts.
            let expect = -2.0 * PI * f / 2e9 * 3.0;
            assert_abs_diff_eq!(Complex::from_polar(1.0, expect).arg(), h.xx.arg(), epsilon = 1e-9);
        }
    }

    fn unitary_series(n: usize) -> JonesSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = (0..n).map(|_| Some(JonesMatrix2::random_unitary(&mut rng))).collect();
        JonesSeries::new((0..n).map(|i| i as f64).collect(), v)
    }

    #[test]
    fn strip_pdl_of_unitary_is_identity_op() {
        let s = unitary_series(50);
        let (u, pdl) = strip_pdl(&s, Exec::Parallel);
        for (a, b) in s.values.iter().zip(&u.values) {
            assert!((a.unwrap() - b.unwrap()).frobenius() < 1e-10);
        }
        assert!(pdl.values.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn strip_pdl_removes_static_pdl() {
        let s = unitary_series(50);
        let p = JonesMatrix2::pdl([0.2, -0.9, 0.1], 1.7);
        let lossy = s.map(Exec::Sequential, |u| Some(p * *u));
        let (u, pdl) = strip_pdl(&lossy, Exec::Sequential);
        for (a, b) in s.values.iter().zip(&u.values) {
            assert!((a.unwrap() - b.unwrap()).frobenius() < 1e-9);
        }
        for v in pdl.values {
            assert_abs_diff_eq!(v, 1.7, epsilon = 1e-9);
        }
    }

    #[test]
    fn singular_samples_become_gaps() {
        let mut s = unitary_series(5);
        s.values[2] = Some(JonesMatrix2::ZERO);
        s.values[3] = None;
        let (u, pdl) = strip_pdl(&s, Exec::Sequential);
        assert!(u.values[2].is_none() && u.values[3].is_none());
        assert_eq!(pdl.gaps(), 2);
    }

    #[test]
    fn constant_series_is_flat() {
        let u = JonesMatrix2::rotation([0.3, 0.4, 0.5], 0.9);
        let s = JonesSeries::new((0..20).map(|i| i as f64).collect(), vec![Some(u); 20]);
        let sop = sop_series(&s, Row::Second, 0.1).unwrap();
        assert!(sop.p1.values.iter().all(|v| v.abs() < 1e-12));
        assert!(sop.p2.values.iter().all(|v| v.abs() < 1e-12));
        let c = correlation_series(&s, Reference::FirstSample).unwrap();
        for v in c.values {
            assert_abs_diff_eq!(v.norm(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(v.arg(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn small_rotation_shows_in_projection() {
        // Row Stokes of U·R(axis, θ) is the row Stokes of U rotated about
        // the mirrored axis; start on S1 and rock about S2.
        let theta0 = 0.05;
        let n = 400;
        let values = (0..n)
            .map(|i| {
                let th = theta0 * (2.0 * PI * 0.05 * i as f64).sin();
                Some(JonesMatrix2::rotation([0.0, 1.0, 0.0], th))
            })
            .collect();
        let s = JonesSeries::new((0..n).map(|i| i as f64).collect(), values);
        let sop = sop_series(&s, Row::First, 1.0).unwrap();
        let amp = sop.p1.values.iter().chain(&sop.p2.values).fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((amp - theta0.sin()).abs() < 2e-3, "amplitude {amp}");
    }

    #[test]
    fn correlation_sees_phase_difference() {
        let base = JonesMatrix2::rotation([0.6, 0.0, 0.8], 1.3);
        let deltas = [0.0, 0.1, 0.4, 1.0];
        let values = deltas
            .iter()
            .map(|d| Some(JonesMatrix2::diag(Complex::new(1.0, 0.0), Complex::from_polar(1.0, *d)) * base))
            .collect();
        let s = JonesSeries::new(vec![0.0, 1.0, 2.0, 3.0], values);
        let c = correlation_series(&s, Reference::FirstSample).unwrap();
        for (v, d) in c.values.iter().zip(deltas) {
            assert_abs_diff_eq!(v.norm(), (d / 2.0).cos(), epsilon = 1e-12);
        }
        let sop = sop_series(&s, Row::First, 0.25).unwrap();
        assert!(sop.p1.values.iter().all(|v| v.abs() < 1e-12));
        let sliding = correlation_series(&s, Reference::Sliding(1)).unwrap();
        assert!(sliding.values[0].re.is_nan());
    }

    #[test]
    fn phase_reconstruction_zero_and_alignment() {
        let t: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let z = SensingSeries::new("x", t.clone(), vec![0.0; 10]);
        let u = JonesSeries::new(t.clone(), vec![Some(JonesMatrix2::IDENTITY); 10]);
        let (c, d) = reconstruct_phase(&z, &z, &u).unwrap();
        assert!(c.values.iter().chain(&d.values).all(|v| *v == 0.0));
        let short = JonesSeries::new(t[..5].to_vec(), vec![Some(JonesMatrix2::IDENTITY); 5]);
        assert!(matches!(reconstruct_phase(&z, &z, &short), Err(Error::Alignment(_))));
    }

    #[test]
    fn phase_jumps_become_gaps() {
        let t: Vec<f64> = (0..4).map(|i| i as f64).collect();
        let x = SensingSeries::new("x", t.clone(), vec![0.0, 0.1, 1.2, 1.3]);
        let y = SensingSeries::new("y", t.clone(), vec![0.0; 4]);
        let u = JonesSeries::new(t, vec![Some(JonesMatrix2::IDENTITY); 4]);
        let (c, d) = reconstruct_phase(&x, &y, &u).unwrap();
        assert!(c.values[2].is_nan() && d.values[2].is_nan());
        assert_abs_diff_eq!(d.values[3], 1.3);
        assert_abs_diff_eq!(c.values[1], 0.05);
    }

    #[test]
    fn common_phase_includes_determinant() {
        let t: Vec<f64> = (0..3).map(|i| i as f64).collect();
        let z = SensingSeries::new("z", t.clone(), vec![0.0; 3]);
        let u = (0..3)
            .map(|i| Some(JonesMatrix2::scalar(Complex::from_polar(1.0, 0.3 * i as f64))))
            .collect();
        let (c, _) = reconstruct_phase(&z, &z, &JonesSeries::new(t, u)).unwrap();
        for (i, v) in c.values.iter().enumerate() {
            assert_abs_diff_eq!(*v, 0.3 * i as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn unwrap_handles_jumps_and_gaps() {
        let w = unwrap_phase(&[3.0, -3.0, f64::NAN, -2.9, 3.1]);
        assert_abs_diff_eq!(w[1], 2.0 * PI - 3.0, epsilon = 1e-12);
        assert!(w[2].is_nan());
        assert_abs_diff_eq!(w[3], 2.0 * PI - 2.9, epsilon = 1e-12);
        assert_abs_diff_eq!(w[4], 3.1, epsilon = 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn series_from(seed: u64, n: usize) -> JonesSeries {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = (0..n).map(|_| Some(JonesMatrix2::random_unitary(&mut rng))).collect();
            JonesSeries::new((0..n).map(|i| i as f64).collect(), v)
        }

        proptest! {
            #[test]
            fn correlation_ignores_common_rotation(seed in 0u64..1000, vseed in 0u64..1000, phase in -3.0f64..3.0) {
                let s = series_from(seed, 12);
                let mut rng = ChaCha8Rng::seed_from_u64(vseed);
                let v = JonesMatrix2::random_unitary(&mut rng);
                let g = Complex::from_polar(1.0, phase);
                let moved = s.map(Exec::Sequential, |u| Some((v * *u).scale(g)));
                for r in [Reference::FirstSample, Reference::Sliding(3)] {
                    let a = correlation_series(&s, r).unwrap();
                    let b = correlation_series(&moved, r).unwrap();
                    for (x, y) in a.values.iter().zip(&b.values) {
                        if x.re.is_nan() {
                            prop_assert!(y.re.is_nan());
                        } else {
                            prop_assert!((x - y).norm() < 1e-10);
                        }
                    }
                }
            }

            #[test]
            fn correlation_ignores_right_rotation(seed in 0u64..1000, vseed in 0u64..1000) {
                let s = series_from(seed, 8);
                let mut rng = ChaCha8Rng::seed_from_u64(vseed);
                let v = JonesMatrix2::random_unitary(&mut rng);
                let moved = s.map(Exec::Sequential, |u| Some(*u * v));
                let a = correlation_series(&s, Reference::FirstSample).unwrap();
                let b = correlation_series(&moved, Reference::FirstSample).unwrap();
                for (x, y) in a.values.iter().zip(&b.values) {
                    prop_assert!((x - y).norm() < 1e-10);
                }
            }

            #[test]
            fn stokes_blind_to_row_phase(seed in 0u64..1000, phases in prop::collection::vec(-3.0f64..3.0, 8)) {
                let s = series_from(seed, 8);
                let mut moved = s.clone();
                for (v, p) in moved.values.iter_mut().zip(&phases) {
                    let m = v.unwrap();
                    *v = Some(JonesMatrix2::diag(Complex::from_polar(1.0, *p), Complex::new(1.0, 0.0)) * m);
                }
                let a = sop_series(&s, Row::First, 0.25).unwrap();
                let b = sop_series(&moved, Row::First, 0.25).unwrap();
                for (x, y) in [(&a.s1, &b.s1), (&a.s2, &b.s2), (&a.s3, &b.s3), (&a.p1, &b.p1), (&a.p2, &b.p2)] {
                    for (p, q) in x.values.iter().zip(&y.values) {
                        prop_assert!((p - q).abs() < 1e-12);
                    }
                }
            }

            #[test]
            fn correlation_magnitude_bounded(seed in 0u64..1000) {
                let c = correlation_series(&series_from(seed, 8), Reference::FirstSample).unwrap();
                prop_assert!(c.values.iter().all(|v| v.norm() <= 1.0 + 1e-12));
                prop_assert!((c.values[0].norm() - 1.0).abs() < 1e-12);
            }

            #[test]
            fn static_pdl_is_stripped(seed in 0u64..1000, db in 0.0f64..2.0, ax in prop::array::uniform3(-1.0f64..1.0)) {
                prop_assume!(ax.iter().map(|a| a * a).sum::<f64>() > 1e-3);
                let s = series_from(seed, 6);
                let p = JonesMatrix2::pdl(ax, db);
                let (u, pdl) = strip_pdl(&s.map(Exec::Sequential, |m| Some(p * *m)), Exec::Sequential);
                for (a, b) in s.values.iter().zip(&u.values) {
                    prop_assert!((a.unwrap() - b.unwrap()).frobenius() < 1e-9);
                }
                prop_assert!(pdl.values.iter().all(|v| (v - db).abs() < 1e-9));
            }

            #[test]
            fn projection_keeps_unit_length(seed in 0u64..1000) {
                let sop = sop_series(&series_from(seed, 10), Row::Second, 0.3).unwrap();
                for i in 0..10 {
                    let n = sop.s1.values[i].powi(2) + sop.s2.values[i].powi(2) + sop.s3.values[i].powi(2);
                    prop_assert!((n - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
