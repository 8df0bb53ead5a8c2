use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use cohsense::analytics::{analyze, write_series_csv, Row, TapFormat};
use cohsense::bridge::{DecimationMode, Decimator, SnapReader, TapSnapshot};
use cohsense::config::{AnalysisConfig, RunConfig};
use cohsense::Exec;

use crate::util::write_json;

pub struct Options {
    pub input: PathBuf,
    pub out: PathBuf,
    pub row: Option<Row>,
    pub decimation: Option<usize>,
    pub config: Option<PathBuf>,
    pub segment_len: Option<usize>,
    pub chirp_band: Option<[f64; 2]>,
    pub exec: Exec,
}

fn read_stream(path: &Path) -> Result<Vec<TapSnapshot>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut snaps = Vec::new();
    for s in SnapReader::new(BufReader::new(file)) {
        snaps.push(s.with_context(|| format!("reading {}", path.display()))?);
    }
    Ok(snaps)
}

pub fn run(opts: &Options) -> Result<ExitCode> {
    let (mut cfg, fmt) = match &opts.config {
        Some(p) => {
            let run = RunConfig::load(p)?;
            let fmt = TapFormat {
                tap_spec: run.rx.tap_spec,
                sample_rate: run.tx.sample_rate(),
            };
            (run.analysis, fmt)
        }
        None => (AnalysisConfig::default(), TapFormat::default()),
    };
    if let Some(r) = opts.row {
        cfg.row = r;
    }
    if let Some(n) = opts.segment_len {
        cfg.segment_len = n;
    }
    if opts.chirp_band.is_some() {
        cfg.chirp_band = opts.chirp_band;
    }
    cfg.validate()?;
    if opts.decimation == Some(0) {
        return Err(cohsense::Error::Config("--decimation must be at least 1".into()).into());
    }

    let mut snaps = read_stream(&opts.input)?;
    if let Some(d) = opts.decimation.filter(|d| *d > 1) {
        let mut dec = Decimator::new(d, DecimationMode::BoxcarAverage);
        snaps = snaps.into_iter().filter_map(|s| dec.push(s)).collect();
    }
    let analysis = analyze(&snaps, &cfg, &fmt, opts.exec)?;

    std::fs::create_dir_all(&opts.out).with_context(|| format!("creating {}", opts.out.display()))?;
    let refs: Vec<_> = analysis.series.iter().collect();
    write_series_csv(File::create(opts.out.join("series.csv"))?, &refs)?;
    for (name, grid) in &analysis.spectrograms {
        grid.write_csv(File::create(opts.out.join(format!("spectrogram_{name}.csv")))?)?;
    }
    write_json(&opts.out.join("analysis.json"), &analysis.summary)?;

    let s = &analysis.summary;
    println!("snapshots      {} at {:.6e} Hz ({} missing, {} flagged)", s.snapshots, s.rate_hz, s.missing_samples, s.flagged_records);
    println!("sop rms        s1 {:.4}  s2 {:.4} ({:?} row)", s.sop_rms[0], s.sop_rms[1], s.row);
    println!("pdl            {:.3} dB mean, {:.3} dB rms", s.pdl_mean_db, s.pdl_rms_db);
    println!("|C|            min {:.5}, mean {:.5}", s.corr_min, s.corr_mean);
    for np in &s.peaks {
        let list: Vec<String> = np
            .peaks
            .iter()
            .take(5)
            .map(|p| format!("{:.4e} Hz (+{:.1} dB)", p.freq_hz, p.prominence_db))
            .collect();
        let shown = if list.is_empty() { "none".to_string() } else { list.join(", ") };
        println!("peaks {:<9} {}", np.series, shown);
    }
    match (&s.chirp, &s.chirp_error) {
        (Some(c), _) => println!("chirp slope    {:.4e} Hz/s over {} slices", c.slope, c.slices_used),
        (None, Some(e)) => println!("chirp slope    {e}"),
        _ => {}
    }
    println!("flat           {}", s.flat);
    Ok(ExitCode::SUCCESS)
}
