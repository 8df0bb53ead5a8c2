//! Payload-aware bit error counting.
//!
//! The equalizer may swap tributaries and the phase tracker leaves a
//! quadrant ambiguity, so each receiver output is matched against both
//! transmitted PRBS streams, all four quadrant rotations and a small range of
//! lags. Counting is done over fixed windows; a window whose error rate
//! exceeds [`LOSS_OF_SYNC`] drops the mapping and triggers a new search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::jones::Complex;
use crate::txsim::{qpsk_from_label, SymbolSource, TxConfig};

pub const WINDOW: usize = 1024;
pub const MAX_LAG: i64 = 4;
/// Fraction of matching symbols needed to accept a mapping.
pub const SYNC_THRESHOLD: f64 = 0.6;
pub const LOSS_OF_SYNC: f64 = 0.2;

/// Which transmitted tributary one receiver output carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolMap {
    pub tx_pol: usize,
    /// Output ≈ `i^quadrant` · transmitted symbol.
    pub quadrant: u8,
    /// Symbol lag relative to the nominal pipeline delay.
    pub lag: i64,
}

/// Label of `i^k · s(label)`.
pub fn rotate_label(label: u8, k: u8) -> u8 {
    ROTATION[(k % 4) as usize][(label & 3) as usize]
}

// Gray labels counter-clockwise from the first quadrant: 00, 10, 11, 01.
const ROTATION: [[u8; 4]; 4] = [[0, 1, 2, 3], [2, 0, 3, 1], [3, 2, 1, 0], [1, 3, 0, 2]];

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub synced: bool,
    pub bit_errors: u64,
    pub bits: u64,
    /// Mean |CMA error| over both tributaries.
    pub mean_abs_error: f64,
    /// Σ|y|², Σ Re(y·conj(ŝ)), count — for the EVM-based SNR estimate.
    pub power: f64,
    pub projection: f64,
    pub symbols: u64,
}

#[derive(Debug, Clone)]
pub struct BerCounter {
    source: SymbolSource,
    /// Transmitted labels, `refs[p][i]` is tx symbol `ref_base + i`.
    refs: [VecDeque<u8>; 2],
    ref_base: i64,
    delay: i64,
    sync_start: u64,
    rx_base: u64,
    rx: [Vec<u8>; 2],
    err_sum: f64,
    evm: [f64; 2],
    maps: [Option<PolMap>; 2],
    pub windows: Vec<WindowStats>,
    pub resyncs: u32,
    last_map: [Option<PolMap>; 2],
}

impl BerCounter {
    /// `delay`: receiver output index minus tx symbol index at nominal
    /// alignment. Windows starting before `sync_start` are not counted.
    pub fn new(tx: &TxConfig, delay: i64, sync_start: u64) -> Result<Self> {
        Ok(Self {
            source: SymbolSource::new(tx)?,
            refs: [VecDeque::new(), VecDeque::new()],
            ref_base: 0,
            delay,
            sync_start,
            rx_base: 0,
            rx: [Vec::with_capacity(WINDOW), Vec::with_capacity(WINDOW)],
            err_sum: 0.0,
            evm: [0.0; 2],
            maps: [None; 2],
            windows: Vec::new(),
            resyncs: 0,
            last_map: [None; 2],
        })
    }

    pub fn mapping(&self) -> [Option<PolMap>; 2] {
        self.last_map
    }

    /// Feed one derotated output symbol per tributary with its CMA error.
    pub fn push(&mut self, y: [Complex; 2], labels: [u8; 2], cma_err: [f64; 2]) {
        for p in 0..2 {
            self.rx[p].push(labels[p]);
            let ideal = qpsk_from_label(labels[p]);
            self.evm[0] += y[p].norm_sqr();
            self.evm[1] += (y[p] * ideal.conj()).re;
        }
        self.err_sum += cma_err[0].abs() + cma_err[1].abs();
        if self.rx[0].len() == WINDOW {
            self.close_window();
        }
    }

    fn reference(&mut self, pol: usize, t: i64) -> Option<u8> {
        if t < 0 {
            return None;
        }
        while self.ref_base + (self.refs[pol].len() as i64) <= t {
            let l = self.source.next_labels();
            self.refs[0].push_back(l[0]);
            self.refs[1].push_back(l[1]);
        }
        let i = t - self.ref_base;
        if i < 0 {
            return None;
        }
        self.refs[pol].get(i as usize).copied()
    }

    fn trim_refs(&mut self) {
        let keep_from = self.rx_base as i64 - self.delay - MAX_LAG - 1;
        while self.ref_base < keep_from && !self.refs[0].is_empty() {
            self.refs[0].pop_front();
            self.refs[1].pop_front();
            self.ref_base += 1;
        }
    }

    fn errors(&mut self, p: usize, m: PolMap) -> Option<u64> {
        let mut errs = 0u64;
        for i in 0..WINDOW {
            let t = (self.rx_base + i as u64) as i64 - self.delay - m.lag;
            let r = self.reference(m.tx_pol, t)?;
            errs += (self.rx[p][i] ^ rotate_label(r, m.quadrant)).count_ones() as u64;
        }
        Some(errs)
    }

    fn search(&mut self, p: usize) -> Option<PolMap> {
        let mut best: Option<(u64, PolMap)> = None;
        for tx_pol in 0..2 {
            for quadrant in 0..4 {
                for lag in -MAX_LAG..=MAX_LAG {
                    let m = PolMap { tx_pol, quadrant, lag };
                    if let Some(e) = self.errors(p, m) {
                        if best.is_none_or(|(b, _)| e < b) {
                            best = Some((e, m));
                        }
                    }
                }
            }
        }
        let (e, m) = best?;
        // Symbol match rate is at least 1 − bit errors / symbols.
        let match_rate = 1.0 - e as f64 / WINDOW as f64;
        (match_rate >= SYNC_THRESHOLD).then_some(m)
    }

    fn close_window(&mut self) {
        let n = WINDOW as f64;
        let mut w = WindowStats {
            mean_abs_error: self.err_sum / (2.0 * n),
            power: self.evm[0],
            projection: self.evm[1],
            symbols: 2 * WINDOW as u64,
            ..Default::default()
        };
        if self.rx_base >= self.sync_start {
            let mut synced = true;
            for p in 0..2 {
                if self.maps[p].is_none() {
                    self.maps[p] = self.search(p);
                    if self.maps[p].is_some() && self.last_map[p].is_some() && self.maps[p] != self.last_map[p] {
                        self.resyncs += 1;
                    }
                }
                match self.maps[p].and_then(|m| self.errors(p, m)) {
                    Some(e) if (e as f64) <= LOSS_OF_SYNC * 2.0 * n => {
                        w.bit_errors += e;
                        w.bits += 2 * WINDOW as u64;
                        self.last_map[p] = self.maps[p];
                    }
                    _ => {
                        self.maps[p] = None;
                        synced = false;
                    }
                }
            }
            let distinct = match self.maps {
                [Some(a), Some(b)] => a.tx_pol != b.tx_pol,
                _ => false,
            };
            w.synced = synced && distinct;
            if !w.synced {
                w.bit_errors = 0;
                w.bits = 0;
            }
        }
        self.windows.push(w);
        self.rx_base += WINDOW as u64;
        self.rx[0].clear();
        self.rx[1].clear();
        self.err_sum = 0.0;
        self.evm = [0.0; 2];
        self.trim_refs();
    }
}

/// First window index from which the mean CMA error stays near its final
/// level: the first window at or below 1.1× the mean of the last quarter.
pub fn convergence_window(windows: &[WindowStats]) -> Option<usize> {
    if windows.is_empty() {
        return None;
    }
    let q = (windows.len() / 4).max(1);
    let tail = &windows[windows.len() - q..];
    let level = tail.iter().map(|w| w.mean_abs_error).sum::<f64>() / q as f64;
    windows.iter().position(|w| w.mean_abs_error <= 1.1 * level)
}
