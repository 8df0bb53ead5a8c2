//! CSV output for series and spectrograms.

use std::io::{Read, Write};

use super::{SensingSeries, SpectrogramGrid};
use crate::error::{Error, Result};

/// Columns `t, <label>...`; all series must share the time grid.
pub fn write_series_csv<W: Write>(w: W, series: &[&SensingSeries]) -> Result<()> {
    let first = series.first().ok_or(Error::TooShort { len: 0, needed: 1 })?;
    if series.iter().any(|s| s.len() != first.len()) {
        return Err(Error::Alignment("series lengths differ".into()));
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string()];
    header.extend(series.iter().map(|s| s.label.clone()));
    out.write_record(&header)?;
    for i in 0..first.len() {
        let mut row = vec![format!("{:.9}", first.t[i])];
        row.extend(series.iter().map(|s| format!("{:e}", s.values[i])));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_series_csv<R: Read>(r: R) -> Result<Vec<SensingSeries>> {
    let mut rd = csv::Reader::from_reader(r);
    let labels: Vec<String> = rd.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut t = Vec::new();
    let mut cols = vec![Vec::new(); labels.len()];
    for rec in rd.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::Io(format!("bad number in column {i}")))
        };
        t.push(num(0)?);
        for (j, c) in cols.iter_mut().enumerate() {
            c.push(num(j + 1)?);
        }
    }
    Ok(labels
        .into_iter()
        .zip(cols)
        .map(|(l, v)| SensingSeries::new(l, t.clone(), v))
        .collect())
}

impl SpectrogramGrid {
    /// First row `freq_hz, t...`, then one row per frequency bin.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["freq_hz".to_string()];
        header.extend(self.times.iter().map(|t| format!("{t:.6}")));
        out.write_record(&header)?;
        for (k, f) in self.freqs.iter().enumerate() {
            let mut row = vec![format!("{f:e}")];
            row.extend(self.power_db.iter().map(|s| format!("{:.4}", s[k])));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}
