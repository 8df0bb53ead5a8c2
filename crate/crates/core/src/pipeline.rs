//! End-to-end link driven in bounded-memory chunks.

use crate::channel::{Channel, ChannelState, GroundTruth};
use crate::error::Result;
use crate::exec::Exec;
use crate::rxdsp::{Receiver, RxConfig, RxOutput, RxReport};
use crate::txsim::{Modulator, TxConfig};

pub const DEFAULT_CHUNK_SYMBOLS: usize = 1 << 16;

/// Transmitter, channel and receiver advanced in lockstep.
pub struct Link {
    modulator: Modulator,
    channel: Channel,
    receiver: Receiver,
    chunk: usize,
    symbols: u64,
}

impl Link {
    pub fn new(tx: &TxConfig, channel: &ChannelState, rx: &RxConfig) -> Result<Self> {
        Self::with_exec(tx, channel, rx, Exec::default())
    }

    pub fn with_exec(tx: &TxConfig, channel: &ChannelState, rx: &RxConfig, exec: Exec) -> Result<Self> {
        let modulator = Modulator::new(tx)?.with_exec(exec);
        let ch = Channel::new(channel, tx.sample_rate(), tx.samples_per_symbol)?.with_exec(exec);
        let receiver = Receiver::new(rx, tx)?
            .with_exec(exec)
            .with_time_scale(channel.time_scale);
        let chunk = DEFAULT_CHUNK_SYMBOLS.div_ceil(channel.hold_symbols) * channel.hold_symbols;
        Ok(Self {
            modulator,
            channel: ch,
            receiver,
            chunk,
            symbols: 0,
        })
    }

    pub fn receiver(&self) -> &Receiver {
        &self.receiver
    }

    pub fn symbols(&self) -> u64 {
        self.symbols
    }

    /// Advance by `n_symbols`, which must be a multiple of the hold interval.
    pub fn step(&mut self, n_symbols: usize) -> (RxOutput, GroundTruth) {
        let wave = self.modulator.next_block(n_symbols);
        let mut truth = GroundTruth::default();
        let rx_in = self.channel.propagate_block(&wave, &mut truth);
        let out = self.receiver.process(&rx_in);
        self.symbols += n_symbols as u64;
        (out, truth)
    }

    /// Run `n_symbols` (rounded up to whole hold intervals), handing each
    /// chunk's results to `sink`.
    pub fn run<F>(&mut self, n_symbols: u64, mut sink: F) -> RxReport
    where
        F: FnMut(RxOutput, GroundTruth),
    {
        let hold = self.channel.state().hold_symbols as u64;
        let total = n_symbols.div_ceil(hold) * hold;
        let mut left = total;
        while left > 0 {
            let n = left.min(self.chunk as u64) as usize;
            let (out, truth) = self.step(n);
            sink(out, truth);
            left -= n as u64;
        }
        self.receiver.report()
    }

    pub fn report(&self) -> RxReport {
        self.receiver.report()
    }
}

/// Everything a whole run produced, kept in memory.
#[derive(Debug, Clone)]
pub struct LinkRun {
    pub output: RxOutput,
    pub truth: GroundTruth,
    pub report: RxReport,
}

/// Run a link and collect snapshots, phases and ground truth (decisions are
/// discarded to bound memory).
pub fn run_link(tx: &TxConfig, channel: &ChannelState, rx: &RxConfig, n_symbols: u64, exec: Exec) -> Result<LinkRun> {
    let mut link = Link::with_exec(tx, channel, rx, exec)?;
    let mut output = RxOutput::default();
    let mut truth = GroundTruth::default();
    let report = link.run(n_symbols, |mut o, t| {
        o.decisions.clear();
        output.extend(o);
        truth.extend(t);
    });
    Ok(LinkRun { output, truth, report })
}
