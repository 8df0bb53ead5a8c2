//! Short-time power spectra and ridge tracking.

use std::f64::consts::PI;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::SensingSeries;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::jones::Complex;

/// Floor applied before converting power to dB.
pub const POWER_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    /// Periodic window coefficients.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramGrid {
    /// Segment centre times, seconds.
    pub times: Vec<f64>,
    pub freqs: Vec<f64>,
    /// One-sided PSD in dB (unit²/Hz), indexed `[time][freq]`.
    pub power_db: Vec<Vec<f64>>,
    pub window: Window,
    pub overlap: f64,
    pub segment_len: usize,
    pub rate_hz: f64,
    /// Gap samples replaced by the series mean.
    pub filled_gaps: usize,
}

impl SpectrogramGrid {
    pub fn freq_resolution(&self) -> f64 {
        self.rate_hz / self.segment_len as f64
    }

    pub fn power_linear(&self, slice: usize) -> Vec<f64> {
        self.power_db[slice].iter().map(|p| 10f64.powf(p / 10.0)).collect()
    }

    /// Average PSD over all segments, in dB.
    pub fn mean_spectrum_db(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.freqs.len()];
        for i in 0..self.times.len() {
            for (a, p) in acc.iter_mut().zip(self.power_linear(i)) {
                *a += p;
            }
        }
        let n = self.times.len().max(1) as f64;
        acc.into_iter().map(|a| to_db(a / n)).collect()
    }

    /// Element-wise linear average of grids computed on the same axes.
    pub fn average(grids: &[&SpectrogramGrid]) -> Result<SpectrogramGrid> {
        let first = *grids.first().ok_or(Error::TooShort { len: 0, needed: 1 })?;
        let mut out = first.clone();
        for g in &grids[1..] {
            if g.times.len() != first.times.len() || g.freqs.len() != first.freqs.len() {
                return Err(Error::Alignment("spectrogram axes differ".into()));
            }
        }
        for i in 0..first.times.len() {
            for k in 0..first.freqs.len() {
                let s: f64 = grids.iter().map(|g| 10f64.powf(g.power_db[i][k] / 10.0)).sum();
                out.power_db[i][k] = to_db(s / grids.len() as f64);
            }
        }
        out.filled_gaps = grids.iter().map(|g| g.filled_gaps).sum();
        Ok(out)
    }
}

fn to_db(p: f64) -> f64 {
    10.0 * p.max(POWER_FLOOR).log10()
}

/// Sliding-window power spectral density. Each segment has its mean removed
/// before windowing; NaN gaps are replaced by the series mean.
pub fn spectrogram(
    series: &SensingSeries,
    segment_len: usize,
    overlap: f64,
    window: Window,
    exec: Exec,
) -> Result<SpectrogramGrid> {
    if segment_len < 2 {
        return Err(Error::config("segment_len must be at least 2"));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::config("overlap must be in [0, 1)"));
    }
    if !(series.rate_hz.is_finite() && series.rate_hz > 0.0) {
        return Err(Error::config("series has no valid sample rate"));
    }
    let n = series.len();
    if n < segment_len {
        return Err(Error::TooShort { len: n, needed: segment_len });
    }
    let mean = series.mean();
    let fill = if mean.is_nan() { 0.0 } else { mean };
    let data: Vec<f64> = series.values.iter().map(|v| if v.is_nan() { fill } else { *v }).collect();
    let filled_gaps = series.gaps();

    let hop = ((segment_len as f64 * (1.0 - overlap)).round() as usize).max(1);
    let n_seg = (n - segment_len) / hop + 1;
    let w = window.coefficients(segment_len);
    let fs = series.rate_hz;
    let norm = fs * w.iter().map(|c| c * c).sum::<f64>();
    let n_freq = segment_len / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(segment_len);
    let t0 = series.t.first().copied().unwrap_or(0.0);

    let power_db = exec.map_range(n_seg, |s| {
        let seg = &data[s * hop..s * hop + segment_len];
        let m = seg.iter().sum::<f64>() / segment_len as f64;
        let mut buf: Vec<Complex> = seg
            .iter()
            .zip(&w)
            .map(|(x, c)| Complex::new((x - m) * c, 0.0))
            .collect();
        fft.process(&mut buf);
        (0..n_freq)
            .map(|k| {
                let edge = k == 0 || (segment_len.is_multiple_of(2) && k == segment_len / 2);
                let c = if edge { 1.0 } else { 2.0 };
                to_db(c * buf[k].norm_sqr() / norm)
            })
            .collect()
    });
    Ok(SpectrogramGrid {
        times: (0..n_seg)
            .map(|s| t0 + (s * hop) as f64 / fs + segment_len as f64 / (2.0 * fs))
            .collect(),
        freqs: (0..n_freq).map(|k| k as f64 * fs / segment_len as f64).collect(),
        power_db,
        window,
        overlap,
        segment_len,
        rate_hz: fs,
        filled_gaps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPeak {
    pub freq_hz: f64,
    pub power_db: f64,
    /// Height above the median of the spectrum.
    pub prominence_db: f64,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    if s.is_empty() {
        return f64::NAN;
    }
    let m = s.len() / 2;
    if s.len().is_multiple_of(2) {
        0.5 * (s[m - 1] + s[m])
    } else {
        s[m]
    }
}

/// Parabolic refinement of a peak at bin `k`; returns the fractional offset.
fn parabolic(p: &[f64], k: usize) -> f64 {
    if k == 0 || k + 1 >= p.len() {
        return 0.0;
    }
    let (a, b, c) = (p[k - 1], p[k], p[k + 1]);
    let d = a - 2.0 * b + c;
    if d.abs() < 1e-300 {
        0.0
    } else {
        (0.5 * (a - c) / d).clamp(-0.5, 0.5)
    }
}

/// Local maxima (DC excluded) at least `min_prominence_db` above the median,
/// strongest first.
pub fn find_peaks(freqs: &[f64], spectrum_db: &[f64], min_prominence_db: f64) -> Vec<SpectralPeak> {
    let med = median(spectrum_db);
    let df = if freqs.len() > 1 { freqs[1] - freqs[0] } else { 0.0 };
    let mut peaks: Vec<SpectralPeak> = (1..spectrum_db.len())
        .filter(|&k| {
            let p = spectrum_db[k];
            let left = spectrum_db[k - 1];
            let right = spectrum_db.get(k + 1).copied().unwrap_or(f64::NEG_INFINITY);
            p > left && p >= right && p - med >= min_prominence_db
        })
        .map(|k| SpectralPeak {
            freq_hz: freqs[k] + parabolic(spectrum_db, k) * df,
            power_db: spectrum_db[k],
            prominence_db: spectrum_db[k] - med,
        })
        .collect();
    peaks.sort_by(|a, b| b.power_db.total_cmp(&a.power_db));
    peaks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChirpFit {
    /// Hz per second.
    pub slope: f64,
    /// Frequency at t = 0.
    pub intercept_hz: f64,
    pub slices_used: usize,
}

/// Minimum peak height over the slice median for a slice to join the fit.
pub const RIDGE_PROMINENCE_DB: f64 = 10.0;

/// Track the in-band spectral peak per time slice and fit a straight line,
/// weighting each slice by its peak power.
pub fn estimate_chirp_slope(grid: &SpectrogramGrid, band: [f64; 2]) -> Result<ChirpFit> {
    let [lo, hi] = band;
    if !(lo < hi) {
        return Err(Error::config("band must satisfy lo < hi"));
    }
    let bins: Vec<usize> = (0..grid.freqs.len())
        .filter(|&k| grid.freqs[k] >= lo && grid.freqs[k] <= hi)
        .collect();
    if bins.is_empty() {
        return Err(Error::NoRidge);
    }
    let df = grid.freq_resolution();
    let mut pts: Vec<(f64, f64, f64)> = Vec::new();
    for (i, slice) in grid.power_db.iter().enumerate() {
        let k = *bins
            .iter()
            .max_by(|a, b| slice[**a].total_cmp(&slice[**b]))
            .unwrap();
        if slice[k] - median(slice) < RIDGE_PROMINENCE_DB {
            continue;
        }
        let f = grid.freqs[k] + parabolic(slice, k) * df;
        pts.push((grid.times[i], f, 10f64.powf(slice[k] / 10.0)));
    }
    if pts.len() < 3 {
        return Err(Error::NoRidge);
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mt = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let mf = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let stt: f64 = pts.iter().map(|p| p.2 * (p.0 - mt).powi(2)).sum();
    let stf: f64 = pts.iter().map(|p| p.2 * (p.0 - mt) * (p.1 - mf)).sum();
    if stt <= 0.0 {
        return Err(Error::NoRidge);
    }
    let slope = stf / stt;
    Ok(ChirpFit {
        slope,
        intercept_hz: mf - slope * mt,
        slices_used: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn parseval_holds_per_segment() {
        let x = noise(256, 1);
        let s = SensingSeries::uniform("x", 10.0, x.clone());
        for w in [Window::Rectangular, Window::Hann] {
            let g = spectrogram(&s, 256, 0.0, w, Exec::Sequential).unwrap();
            let m = x.iter().sum::<f64>() / 256.0;
            let coef = w.coefficients(256);
            let energy: f64 = x.iter().zip(&coef).map(|(v, c)| ((v - m) * c).powi(2)).sum::<f64>()
                / coef.iter().map(|c| c * c).sum::<f64>();
            let integral: f64 = g.power_linear(0).iter().sum::<f64>() * g.freq_resolution();
            assert_relative_eq!(integral, energy, max_relative = 1e-9);
        }
    }

    #[test]
    fn tone_lands_in_right_bin() {
        let fs = 2.0;
        let x: Vec<f64> = (0..4096).map(|i| (2.0 * PI * 0.08 * i as f64 / fs).sin()).collect();
        let g = spectrogram(&SensingSeries::uniform("x", fs, x), 512, 0.5, Window::Hann, Exec::Parallel).unwrap();
        let peaks = find_peaks(&g.freqs, &g.mean_spectrum_db(), 10.0);
        assert!((peaks[0].freq_hz - 0.08).abs() < g.freq_resolution() / 2.0);
        assert_eq!(g.times.len(), (4096 - 512) / 256 + 1);
    }

    #[test]
    fn white_noise_is_flat() {
        let s = SensingSeries::uniform("x", 1.0, noise(1 << 16, 2));
        let g = spectrogram(&s, 256, 0.5, Window::Hann, Exec::Parallel).unwrap();
        let mean = g.mean_spectrum_db();
        // Unit variance white noise: one-sided PSD 2/fs.
        let expect = 10.0 * 2f64.log10();
        for p in &mean[2..mean.len() - 1] {
            assert!((p - expect).abs() < 1.0, "{p} vs {expect}");
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let s = SensingSeries::uniform("x", 1.0, noise(5000, 3));
        let a = spectrogram(&s, 128, 0.75, Window::Hann, Exec::Sequential).unwrap();
        let b = spectrogram(&s, 128, 0.75, Window::Hann, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gaps_are_filled_and_counted() {
        let mut x = noise(600, 4);
        x[10] = f64::NAN;
        x[300] = f64::NAN;
        let g = spectrogram(&SensingSeries::uniform("x", 1.0, x), 128, 0.5, Window::Hann, Exec::Sequential).unwrap();
        assert_eq!(g.filled_gaps, 2);
        assert!(g.power_db.iter().flatten().all(|p| p.is_finite()));
    }

    #[test]
    fn dc_only_sits_on_floor() {
        let s = SensingSeries::uniform("x", 1.0, vec![3.25; 512]);
        let g = spectrogram(&s, 128, 0.5, Window::Hann, Exec::Sequential).unwrap();
        assert!(g.power_db.iter().flatten().all(|p| *p < -250.0));
        assert_eq!(*g.freqs.last().unwrap(), 0.5);
    }

    #[test]
    fn short_series_rejected() {
        let s = SensingSeries::uniform("x", 1.0, vec![0.0; 10]);
        assert_eq!(
            spectrogram(&s, 64, 0.5, Window::Hann, Exec::Sequential),
            Err(Error::TooShort { len: 10, needed: 64 })
        );
    }

    fn chirp(fs: f64, dur: f64, f0: f64, f1: f64) -> SensingSeries {
        let k = (f1 - f0) / dur;
        let n = (dur * fs) as usize;
        let x = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                (2.0 * PI * (f0 * t + 0.5 * k * t * t)).sin()
            })
            .collect();
        SensingSeries::uniform("chirp", fs, x)
    }

    #[test]
    fn chirp_slope_recovered() {
        let s = chirp(1.0, 600.0, 0.06, 0.10);
        let g = spectrogram(&s, 128, 0.875, Window::Hann, Exec::Sequential).unwrap();
        let fit = estimate_chirp_slope(&g, [0.03, 0.13]).unwrap();
        let k = 0.04 / 600.0;
        assert!((fit.slope - k).abs() < 0.1 * k, "slope {}", fit.slope);
    }

    #[test]
    fn steady_tone_has_no_slope() {
        let s = chirp(1.0, 600.0, 0.08, 0.08);
        let g = spectrogram(&s, 128, 0.875, Window::Hann, Exec::Sequential).unwrap();
        let fit = estimate_chirp_slope(&g, [0.03, 0.13]).unwrap();
        assert!(fit.slope.abs() < 1e-6);
    }

    #[test]
    fn noise_has_no_ridge() {
        let s = SensingSeries::uniform("x", 1.0, noise(600, 5));
        let g = spectrogram(&s, 128, 0.875, Window::Hann, Exec::Sequential).unwrap();
        assert_eq!(estimate_chirp_slope(&g, [0.03, 0.13]), Err(Error::NoRidge));
    }

    #[test]
    fn grid_average_of_identical_grids() {
        let s = SensingSeries::uniform("x", 1.0, noise(600, 6));
        let g = spectrogram(&s, 128, 0.5, Window::Hann, Exec::Sequential).unwrap();
        let a = SpectrogramGrid::average(&[&g, &g]).unwrap();
        for (x, y) in a.power_db.iter().flatten().zip(g.power_db.iter().flatten()) {
            assert_relative_eq!(x, y, epsilon = 1e-9);
        }
    }
}
