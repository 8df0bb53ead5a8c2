//! The full analysis chain from a snapshot stream to series, spectrograms
//! and a summary.

use serde::Serialize;

use super::{
    correlation_series, estimate_chirp_slope, find_peaks, jones_from_taps, reconstruct_phase, sop_series,
    spectrogram, strip_pdl, ChirpFit, JonesSeries, Reference, SensingSeries, SpectralPeak, SpectrogramGrid,
    TapFormat,
};
use crate::bridge::TapSnapshot;
use crate::config::AnalysisConfig;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::jones::{Complex, JonesMatrix2};

/// Projected S1/S2 RMS below which (together with [`FLAT_CORRELATION`]) a
/// record is reported as flat.
pub const FLAT_SOP_RMS: f64 = 0.05;
pub const FLAT_CORRELATION: f64 = 0.99;

#[derive(Debug, Clone, Serialize)]
pub struct NamedPeaks {
    pub series: String,
    pub peaks: Vec<SpectralPeak>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisSummary {
    pub snapshots: usize,
    /// Records the producer flagged as following dropped data.
    pub flagged_records: usize,
    /// Missing samples on the regular time grid.
    pub missing_samples: usize,
    pub rate_hz: f64,
    pub row: super::Row,
    pub sop_rms: [f64; 2],
    pub pdl_mean_db: f64,
    pub pdl_rms_db: f64,
    pub corr_min: f64,
    pub corr_mean: f64,
    pub freq_resolution_hz: Option<f64>,
    pub peaks: Vec<NamedPeaks>,
    pub chirp: Option<ChirpFit>,
    pub chirp_error: Option<String>,
    pub flat: bool,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    /// All on one time grid.
    pub series: Vec<SensingSeries>,
    pub spectrograms: Vec<(String, SpectrogramGrid)>,
    pub summary: AnalysisSummary,
}

impl Analysis {
    pub fn series(&self, label: &str) -> Option<&SensingSeries> {
        self.series.iter().find(|s| s.label == label)
    }

    pub fn spectrogram(&self, name: &str) -> Option<&SpectrogramGrid> {
        self.spectrograms.iter().find(|(n, _)| n == name).map(|(_, g)| g)
    }
}

/// Place snapshots on a uniform grid using the median spacing of `t_ns`;
/// missing positions are `None`.
pub fn regularize(snaps: &[TapSnapshot]) -> Result<(Vec<f64>, Vec<Option<&TapSnapshot>>)> {
    if snaps.len() < 2 {
        return Err(Error::TooShort { len: snaps.len(), needed: 2 });
    }
    if snaps.windows(2).any(|w| w[1].t_ns <= w[0].t_ns) {
        return Err(Error::Alignment("snapshot times are not increasing".into()));
    }
    let mut d: Vec<u64> = snaps.windows(2).map(|w| w[1].t_ns - w[0].t_ns).collect();
    d.sort_unstable();
    let dt = d[d.len() / 2] as f64;
    let t0 = snaps[0].t_ns;
    let slot = |s: &TapSnapshot| ((s.t_ns - t0) as f64 / dt).round() as usize;
    let n = slot(snaps.last().unwrap()) + 1;
    let mut grid: Vec<Option<&TapSnapshot>> = vec![None; n];
    for s in snaps {
        grid[slot(s)] = Some(s);
    }
    let t = (0..n).map(|k| (t0 as f64 + k as f64 * dt) * 1e-9).collect();
    Ok((t, grid))
}

fn jones_grid<F>(t: &[f64], grid: &[Option<&TapSnapshot>], exec: Exec, f: F) -> JonesSeries
where
    F: Fn(&TapSnapshot) -> Option<JonesMatrix2> + Sync + Send,
{
    JonesSeries::new(t.to_vec(), exec.map(grid, |s| s.and_then(&f)))
}

fn nan_stats(v: &[f64]) -> (f64, f64, f64) {
    let ok: Vec<f64> = v.iter().copied().filter(|x| !x.is_nan()).collect();
    if ok.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let n = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / n;
    let rms = (ok.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let min = ok.iter().copied().fold(f64::INFINITY, f64::min);
    (mean, rms, min)
}

/// Run the sensing chain over a snapshot stream.
pub fn analyze(snaps: &[TapSnapshot], cfg: &AnalysisConfig, fmt: &TapFormat, exec: Exec) -> Result<Analysis> {
    cfg.validate()?;
    let snaps = snaps.get(cfg.skip_snapshots..).unwrap_or(&[]);
    let (t, grid) = regularize(snaps)?;
    let missing = grid.iter().filter(|g| g.is_none()).count();

    let corrected = |s: &TapSnapshot| {
        let d = JonesMatrix2::diag(
            Complex::from_polar(1.0, -s.cum_phase_x),
            Complex::from_polar(1.0, -s.cum_phase_y),
        );
        (d * jones_from_taps(s, 0.0, fmt)).inverse().ok()
    };
    let channel = jones_grid(&t, &grid, exec, corrected);
    let raw = jones_grid(&t, &grid, exec, |s| jones_from_taps(s, 0.0, fmt).inverse().ok());
    let (unitary, pdl) = strip_pdl(&channel, exec);
    let (raw_unitary, _) = strip_pdl(&raw, exec);

    let sop = sop_series(&unitary, cfg.row, cfg.align_fraction)?;
    let corr = correlation_series(&unitary, Reference::FirstSample)?;
    let phase = |f: fn(&TapSnapshot) -> f64, label: &str| {
        SensingSeries::new(label, t.clone(), grid.iter().map(|s| s.map_or(f64::NAN, f)).collect())
    };
    let px = phase(|s| s.cum_phase_x, "cum_phase_x");
    let py = phase(|s| s.cum_phase_y, "cum_phase_y");
    let (common, differential) = reconstruct_phase(&px, &py, &raw_unitary)?;
    let corr_abs = corr.abs();

    let series = vec![
        sop.s1.clone(),
        sop.s2.clone(),
        sop.s3.clone(),
        sop.p1.clone(),
        sop.p2.clone(),
        pdl.clone(),
        corr_abs.clone(),
        corr.arg(),
        common.clone(),
        differential,
        px,
        py,
    ];

    let mut spectrograms = Vec::new();
    let mut peaks = Vec::new();
    let mut chirp = None;
    let mut chirp_error = None;
    let mut freq_resolution_hz = None;
    if t.len() >= cfg.segment_len {
        let spec = |s: &SensingSeries| spectrogram(s, cfg.segment_len, cfg.overlap, cfg.window, exec);
        let g1 = spec(&sop.p1)?;
        let g2 = spec(&sop.p2)?;
        let mean = SpectrogramGrid::average(&[&g1, &g2])?;
        let gc = spec(&corr_abs)?;
        let gp = spec(&common)?;
        freq_resolution_hz = Some(mean.freq_resolution());
        for (name, g) in [("sop_mean", &mean), ("corr_abs", &gc), ("phase_common", &gp)] {
            peaks.push(NamedPeaks {
                series: name.to_string(),
                peaks: find_peaks(&g.freqs, &g.mean_spectrum_db(), cfg.peak_prominence_db),
            });
        }
        if let Some(band) = cfg.chirp_band {
            match estimate_chirp_slope(&mean, band) {
                Ok(f) => chirp = Some(f),
                Err(e) => chirp_error = Some(e.to_string()),
            }
        }
        spectrograms = vec![
            ("s1_projected".to_string(), g1),
            ("s2_projected".to_string(), g2),
            ("sop_mean".to_string(), mean),
            ("corr_abs".to_string(), gc),
            ("phase_common".to_string(), gp),
        ];
    }

    let (_, r1, _) = nan_stats(&sop.p1.values);
    let (_, r2, _) = nan_stats(&sop.p2.values);
    let (pdl_mean, pdl_rms, _) = nan_stats(&pdl.values);
    let (corr_mean, _, corr_min) = nan_stats(&corr_abs.values);
    let summary = AnalysisSummary {
        snapshots: snaps.len(),
        flagged_records: snaps.iter().filter(|s| s.has_gap()).count(),
        missing_samples: missing,
        rate_hz: channel.rate_hz,
        row: cfg.row,
        sop_rms: [r1, r2],
        pdl_mean_db: pdl_mean,
        pdl_rms_db: pdl_rms,
        corr_min,
        corr_mean,
        freq_resolution_hz,
        peaks,
        chirp,
        chirp_error,
        flat: r1.max(r2) < FLAT_SOP_RMS && corr_min > FLAT_CORRELATION,
    };
    Ok(Analysis {
        series,
        spectrograms,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(seq: u64, t_ns: u64) -> TapSnapshot {
        let mut taps = vec![[0i16; 2]; 68];
        taps[8] = [128, 0];
        taps[3 * 17 + 8] = [128, 0];
        TapSnapshot {
            seq,
            t_ns,
            flags: 0,
            taps,
            cum_phase_x: 0.0,
            cum_phase_y: 0.0,
        }
    }

    #[test]
    fn regular_grid_marks_missing_slots() {
        let s = vec![snap(0, 1000), snap(1, 2000), snap(3, 4000), snap(4, 5000)];
        let (t, g) = regularize(&s).unwrap();
        assert_eq!(t.len(), 5);
        assert!(g[2].is_none());
        assert_eq!(g[3].unwrap().seq, 3);
        assert!((t[4] - 5e-6).abs() < 1e-15);
    }

    #[test]
    fn identity_stream_is_flat() {
        let s: Vec<_> = (0..600).map(|i| snap(i, 1000 * (i + 1))).collect();
        let a = analyze(&s, &AnalysisConfig::default(), &TapFormat::default(), Exec::Sequential).unwrap();
        assert!(a.summary.flat);
        assert!(a.summary.peaks.iter().all(|p| p.peaks.is_empty()));
        assert_eq!(a.summary.snapshots, 600 - 16);
        assert_eq!(a.series.len(), 12);
        assert!(a.spectrogram("sop_mean").is_some());
    }

    #[test]
    fn too_few_snapshots() {
        let s = vec![snap(0, 1); 10];
        assert!(analyze(&s, &AnalysisConfig::default(), &TapFormat::default(), Exec::Sequential).is_err());
    }
}
