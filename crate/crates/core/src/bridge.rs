//! Snapshot transport from the receiver to the (slower) analysis side.
//!
//! Records are little-endian and self-framing:
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 4 | magic `"SNAP"` |
//! | 4 | 2 | version (1) |
//! | 6 | 2 | flags (bit 0: records were dropped before this one) |
//! | 8 | 8 | seq |
//! | 16 | 8 | t_ns (event clock) |
//! | 24 | 2 | n_taps |
//! | 26 | 16·n_taps | tap codes, `i16` I then Q, filters xx, xy, yx, yy, tap index ascending |
//! | 26+16·n_taps | 8 | cum_phase_x (`f64`) |
//! | 34+16·n_taps | 8 | cum_phase_y (`f64`) |
//! | 42+16·n_taps | 4 | CRC-32 (IEEE) of bytes `4..42+16·n_taps` |
//!
//! With 17 taps a record is 318 bytes.

use std::io::Read;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crossbeam_queue::ArrayQueue;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SNAP";
pub const VERSION: u16 = 1;
pub const FLAG_GAP: u16 = 1;
pub const DEFAULT_N_TAPS: usize = 17;
const HEADER_LEN: usize = 26;
const TRAILER_LEN: usize = 20;

pub const fn record_len(n_taps: usize) -> usize {
    HEADER_LEN + 16 * n_taps + TRAILER_LEN
}

#[derive(Debug, Clone, PartialEq)]
pub struct TapSnapshot {
    pub seq: u64,
    pub t_ns: u64,
    pub flags: u16,
    /// `4·n_taps` (I, Q) code pairs in filter order xx, xy, yx, yy.
    pub taps: Vec<[i16; 2]>,
    pub cum_phase_x: f64,
    pub cum_phase_y: f64,
}

impl TapSnapshot {
    pub fn n_taps(&self) -> usize {
        self.taps.len() / 4
    }

    /// Code pair of tap `k` of filter `f` (0 = xx, 1 = xy, 2 = yx, 3 = yy).
    pub fn tap(&self, f: usize, k: usize) -> [i16; 2] {
        self.taps[f * self.n_taps() + k]
    }

    pub fn filter(&self, f: usize) -> &[[i16; 2]] {
        let n = self.n_taps();
        &self.taps[f * n..(f + 1) * n]
    }

    pub fn has_gap(&self) -> bool {
        self.flags & FLAG_GAP != 0
    }
}

pub fn serialize_into(s: &TapSnapshot, out: &mut Vec<u8>) {
    assert!(s.taps.len().is_multiple_of(4) && s.n_taps() <= u16::MAX as usize);
    let start = out.len();
    out.reserve(record_len(s.n_taps()));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&s.flags.to_le_bytes());
    out.extend_from_slice(&s.seq.to_le_bytes());
    out.extend_from_slice(&s.t_ns.to_le_bytes());
    out.extend_from_slice(&(s.n_taps() as u16).to_le_bytes());
    for [re, im] in &s.taps {
        out.extend_from_slice(&re.to_le_bytes());
        out.extend_from_slice(&im.to_le_bytes());
    }
    out.extend_from_slice(&s.cum_phase_x.to_le_bytes());
    out.extend_from_slice(&s.cum_phase_y.to_le_bytes());
    let crc = crc32fast::hash(&out[start + 4..]);
    out.extend_from_slice(&crc.to_le_bytes());
}

pub fn serialize(s: &TapSnapshot) -> Vec<u8> {
    let mut v = Vec::new();
    serialize_into(s, &mut v);
    v
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u64_at(b: &[u8], i: usize) -> u64 {
    u64::from_le_bytes(b[i..i + 8].try_into().unwrap())
}

/// Length of the record starting at `bytes[0]` once its header is visible.
fn framed_len(bytes: &[u8], offset: u64) -> Result<usize> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            offset,
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    if bytes[..4] != MAGIC {
        return Err(Error::BadMagic { offset });
    }
    let version = u16_at(bytes, 4);
    if version != VERSION {
        return Err(Error::UnsupportedVersion { version, offset });
    }
    Ok(record_len(u16_at(bytes, 24) as usize))
}

/// Parse one record from the front of `bytes`; `offset` is its position in
/// the enclosing stream and is only used for error reporting. Returns the
/// snapshot and the number of bytes consumed.
pub fn parse_at(bytes: &[u8], offset: u64) -> Result<(TapSnapshot, usize)> {
    let len = framed_len(bytes, offset)?;
    if bytes.len() < len {
        return Err(Error::Truncated {
            offset,
            needed: len,
            available: bytes.len(),
        });
    }
    let crc = u32::from_le_bytes(bytes[len - 4..len].try_into().unwrap());
    if crc32fast::hash(&bytes[4..len - 4]) != crc {
        return Err(Error::BadCrc { offset });
    }
    let n_taps = u16_at(bytes, 24) as usize;
    let taps = (0..4 * n_taps)
        .map(|i| {
            let p = HEADER_LEN + 4 * i;
            [u16_at(bytes, p) as i16, u16_at(bytes, p + 2) as i16]
        })
        .collect();
    let tail = HEADER_LEN + 16 * n_taps;
    let snap = TapSnapshot {
        seq: u64_at(bytes, 8),
        t_ns: u64_at(bytes, 16),
        flags: u16_at(bytes, 6),
        taps,
        cum_phase_x: f64::from_bits(u64_at(bytes, tail)),
        cum_phase_y: f64::from_bits(u64_at(bytes, tail + 8)),
    };
    Ok((snap, len))
}

/// Parse exactly one record.
pub fn parse(bytes: &[u8]) -> Result<TapSnapshot> {
    let (s, used) = parse_at(bytes, 0)?;
    if used != bytes.len() {
        return Err(Error::Io(format!(
            "{} trailing bytes after record",
            bytes.len() - used
        )));
    }
    Ok(s)
}

/// Parse a whole in-memory stream of back-to-back records.
pub fn parse_stream(bytes: &[u8]) -> Result<Vec<TapSnapshot>> {
    SnapReader::new(bytes).collect()
}

/// Incremental reader over a `.snap` byte stream. Stops after the first error.
pub struct SnapReader<R> {
    inner: R,
    offset: u64,
    buf: Vec<u8>,
    failed: bool,
}

impl<R: Read> SnapReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            offset: 0,
            buf: Vec::with_capacity(record_len(DEFAULT_N_TAPS)),
            failed: false,
        }
    }

    /// Byte offset of the next record.
    pub fn offset(&self) -> u64 {
        self.offset
    }

    fn fill(&mut self, n: usize) -> Result<usize> {
        while self.buf.len() < n {
            let have = self.buf.len();
            self.buf.resize(n, 0);
            let got = self.inner.read(&mut self.buf[have..])?;
            self.buf.truncate(have + got);
            if got == 0 {
                break;
            }
        }
        Ok(self.buf.len())
    }

    fn next_record(&mut self) -> Result<Option<TapSnapshot>> {
        if self.fill(HEADER_LEN)? == 0 {
            return Ok(None);
        }
        let len = framed_len(&self.buf, self.offset)?;
        self.fill(len)?;
        let (snap, used) = parse_at(&self.buf, self.offset)?;
        self.buf.drain(..used);
        self.offset += used as u64;
        Ok(Some(snap))
    }
}

impl<R: Read> Iterator for SnapReader<R> {
    type Item = Result<TapSnapshot>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.next_record() {
            Ok(s) => s.map(Ok),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecimationMode {
    #[default]
    Subsample,
    BoxcarAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamConfig {
    /// Snapshot production rate on the event clock, Hz. Informational.
    #[serde(default = "default_native_rate")]
    pub native_rate_hz: f64,
    #[serde(default = "one")]
    pub decimation: usize,
    #[serde(default)]
    pub mode: DecimationMode,
    #[serde(default = "default_capacity")]
    pub capacity: usize,
}

fn default_native_rate() -> f64 {
    1e6
}

fn one() -> usize {
    1
}

fn default_capacity() -> usize {
    4096
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            native_rate_hz: default_native_rate(),
            decimation: 1,
            mode: DecimationMode::Subsample,
            capacity: default_capacity(),
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.decimation == 0 {
            return Err(Error::config("bridge decimation must be >= 1"));
        }
        if self.capacity == 0 {
            return Err(Error::config("bridge capacity must be >= 1"));
        }
        if !(self.native_rate_hz > 0.0 && self.native_rate_hz.is_finite()) {
            return Err(Error::config("bridge native_rate_hz must be positive"));
        }
        Ok(())
    }

    pub fn effective_rate_hz(&self) -> f64 {
        self.native_rate_hz / self.decimation as f64
    }
}

/// Producer-side decimator: one output per `decimation` inputs.
#[derive(Debug, Clone)]
pub struct Decimator {
    decimation: usize,
    mode: DecimationMode,
    count: usize,
    sums: Vec<[i64; 2]>,
    phase: [f64; 2],
    flags: u16,
}

impl Decimator {
    pub fn new(decimation: usize, mode: DecimationMode) -> Self {
        assert!(decimation >= 1);
        Self {
            decimation,
            mode,
            count: 0,
            sums: Vec::new(),
            phase: [0.0; 2],
            flags: 0,
        }
    }

    pub fn push(&mut self, s: TapSnapshot) -> Option<TapSnapshot> {
        self.count += 1;
        self.flags |= s.flags;
        if self.mode == DecimationMode::BoxcarAverage && self.decimation > 1 {
            if self.sums.len() != s.taps.len() {
                self.sums = vec![[0; 2]; s.taps.len()];
            }
            for (acc, t) in self.sums.iter_mut().zip(&s.taps) {
                acc[0] += t[0] as i64;
                acc[1] += t[1] as i64;
            }
            self.phase[0] += s.cum_phase_x;
            self.phase[1] += s.cum_phase_y;
        }
        if self.count < self.decimation {
            return None;
        }
        let mut out = s;
        out.flags = std::mem::take(&mut self.flags);
        if self.mode == DecimationMode::BoxcarAverage && self.decimation > 1 {
            let d = self.decimation as f64;
            for (t, acc) in out.taps.iter_mut().zip(&self.sums) {
                *t = acc.map(|v| (v as f64 / d).round_ties_even() as i16);
            }
            out.cum_phase_x = self.phase[0] / d;
            out.cum_phase_y = self.phase[1] / d;
            self.sums.iter_mut().for_each(|a| *a = [0; 2]);
            self.phase = [0.0; 2];
        }
        self.count = 0;
        Some(out)
    }
}

/// A snapshot as seen by the consumer, with the number of decimated records
/// the producer had to drop since the previous delivery.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub snapshot: TapSnapshot,
    pub dropped_before: u64,
}

#[derive(Debug, Default)]
struct Shared {
    dropped: AtomicU64,
    pushed: AtomicU64,
}

pub struct SnapshotProducer {
    decimator: Decimator,
    queue: Arc<ArrayQueue<Delivery>>,
    shared: Arc<Shared>,
    gap: u64,
}

pub struct SnapshotConsumer {
    queue: Arc<ArrayQueue<Delivery>>,
    shared: Arc<Shared>,
}

/// Build a bounded single-producer/single-consumer snapshot stream.
pub fn snapshot_stream(cfg: &StreamConfig) -> Result<(SnapshotProducer, SnapshotConsumer)> {
    cfg.validate()?;
    let queue = Arc::new(ArrayQueue::new(cfg.capacity));
    let shared = Arc::new(Shared::default());
    Ok((
        SnapshotProducer {
            decimator: Decimator::new(cfg.decimation, cfg.mode),
            queue: queue.clone(),
            shared: shared.clone(),
            gap: 0,
        },
        SnapshotConsumer { queue, shared },
    ))
}

impl SnapshotProducer {
    /// Never blocks. When the queue is full the decimated record is dropped,
    /// the next delivered record is flagged, and `Overflow` is returned.
    pub fn push(&mut self, s: TapSnapshot) -> Result<()> {
        let Some(mut out) = self.decimator.push(s) else {
            return Ok(());
        };
        if self.gap > 0 {
            out.flags |= FLAG_GAP;
        }
        let item = Delivery {
            snapshot: out,
            dropped_before: self.gap,
        };
        match self.queue.push(item) {
            Ok(()) => {
                self.gap = 0;
                self.shared.pushed.fetch_add(1, Ordering::Release);
                Ok(())
            }
            Err(_) => {
                self.gap += 1;
                let dropped = self.shared.dropped.fetch_add(1, Ordering::AcqRel) + 1;
                Err(Error::Overflow { dropped })
            }
        }
    }

    pub fn dropped(&self) -> u64 {
        self.shared.dropped.load(Ordering::Acquire)
    }

    /// Records currently waiting for the consumer.
    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn capacity(&self) -> usize {
        self.queue.capacity()
    }
}

impl SnapshotConsumer {
    /// Drain everything currently queued, in order.
    pub fn poll(&self) -> Vec<Delivery> {
        let mut out = Vec::with_capacity(self.queue.len());
        while let Some(d) = self.queue.pop() {
            out.push(d);
        }
        out
    }

    pub fn pop(&self) -> Option<Delivery> {
        self.queue.pop()
    }

    pub fn dropped(&self) -> u64 {
        self.shared.dropped.load(Ordering::Acquire)
    }

    /// Records successfully enqueued so far.
    pub fn delivered_total(&self) -> u64 {
        self.shared.pushed.load(Ordering::Acquire)
    }

    /// True once the producer has been dropped and nothing is left queued.
    pub fn is_finished(&self) -> bool {
        Arc::strong_count(&self.queue) == 1 && self.queue.is_empty()
    }
}
