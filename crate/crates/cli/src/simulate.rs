use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use cohsense::bridge::{serialize_into, snapshot_stream, StreamConfig};
use cohsense::channel::GroundTruth;
use cohsense::config::{derive_seed, streams, RunConfig};
use cohsense::pipeline::Link;
use cohsense::rxdsp::RxReport;
use cohsense::Exec;
use serde::Serialize;

use crate::util::{sha256_bytes, sha256_file, write_json};

#[derive(Debug, Serialize)]
struct BridgeStats {
    native_rate_hz: f64,
    decimation: usize,
    effective_rate_hz: f64,
    records_written: u64,
    records_dropped: u64,
    bytes_written: u64,
}

#[derive(Debug, Serialize)]
struct Report {
    n_symbols: u64,
    rx: RxReport,
    bridge: BridgeStats,
    truth_rows: usize,
    elapsed_s: f64,
}

#[derive(Debug, Serialize)]
struct Seeds {
    root: u64,
    channel: u64,
    base_rotation: u64,
    prbs_x: u16,
    prbs_y: u16,
}

#[derive(Debug, Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    parallel_feature: bool,
    config_file: &'static str,
    config_sha256: String,
    seeds: Seeds,
    outputs: BTreeMap<String, String>,
}

fn stream_writer(
    path: &Path,
    consumer: cohsense::bridge::SnapshotConsumer,
) -> Result<std::thread::JoinHandle<Result<(u64, u64)>>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(std::thread::spawn(move || {
        let mut w = BufWriter::new(file);
        let mut buf = Vec::new();
        let (mut records, mut bytes) = (0u64, 0u64);
        loop {
            match consumer.pop() {
                Some(d) => {
                    buf.clear();
                    serialize_into(&d.snapshot, &mut buf);
                    w.write_all(&buf)?;
                    records += 1;
                    bytes += buf.len() as u64;
                }
                None if consumer.is_finished() => break,
                None => std::thread::sleep(Duration::from_micros(200)),
            }
        }
        w.flush()?;
        Ok((records, bytes))
    }))
}

pub fn run(config: &Path, out: &Path, exec: Exec) -> Result<ExitCode> {
    let cfg = RunConfig::load(config)?;
    let state = cfg.channel_state()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let normalized = cfg.to_toml_string()?;
    std::fs::write(out.join("config.toml"), &normalized)?;

    let start = Instant::now();
    let stream_cfg: StreamConfig = cfg.stream_config();
    let (mut producer, consumer) = snapshot_stream(&stream_cfg)?;
    let stream_path = out.join(&cfg.outputs.stream);
    let writer = stream_writer(&stream_path, consumer)?;

    let mut link = Link::with_exec(&cfg.tx, &state, &cfg.rx, exec)?;
    let mut truth = GroundTruth::default();
    let rx = link.run(cfg.n_symbols, |o, t| {
        truth.extend(t);
        for s in o.snapshots {
            // Overflow is recorded in the stream itself via the gap flag.
            let _ = producer.push(s);
        }
        while producer.queued() > producer.capacity() / 2 {
            std::thread::yield_now();
        }
    });
    let dropped = producer.dropped();
    drop(producer);
    let (records, bytes) = writer.join().map_err(|_| anyhow::anyhow!("stream writer panicked"))??;

    let truth_path = out.join(&cfg.outputs.truth);
    truth.write_csv(BufWriter::new(File::create(&truth_path)?))?;
    let report = Report {
        n_symbols: rx.symbols,
        bridge: BridgeStats {
            native_rate_hz: stream_cfg.native_rate_hz,
            decimation: stream_cfg.decimation,
            effective_rate_hz: stream_cfg.effective_rate_hz(),
            records_written: records,
            records_dropped: dropped,
            bytes_written: bytes,
        },
        truth_rows: truth.times.len(),
        rx,
        elapsed_s: start.elapsed().as_secs_f64(),
    };
    let report_path = out.join(&cfg.outputs.report);
    write_json(&report_path, &report)?;

    let mut outputs = BTreeMap::new();
    for p in [&stream_path, &truth_path] {
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        outputs.insert(name, sha256_file(p)?);
    }
    let manifest = Manifest {
        tool: "cohsense",
        version: env!("CARGO_PKG_VERSION"),
        parallel_feature: Exec::Parallel.is_parallel(),
        config_file: "config.toml",
        config_sha256: sha256_bytes(normalized.as_bytes()),
        seeds: Seeds {
            root: cfg.seed,
            channel: derive_seed(cfg.seed, streams::CHANNEL),
            base_rotation: derive_seed(cfg.seed, streams::BASE_ROTATION),
            prbs_x: cfg.tx.seed_x,
            prbs_y: cfg.tx.seed_y,
        },
        outputs,
    };
    write_json(&out.join(&cfg.outputs.manifest), &manifest)?;

    let r = &report.rx;
    println!("symbols        {}", r.symbols);
    println!("ber            {:.3e} ({} errors / {} bits)", r.ber, r.bit_errors, r.n_bits);
    println!("converged at   symbol {}", r.converged_at);
    println!("snr estimate   {:.2} dB", r.snr_est_db);
    println!(
        "stream         {} records at {:.6e} Hz ({} dropped) -> {}",
        records,
        stream_cfg.effective_rate_hz(),
        dropped,
        stream_path.display()
    );
    println!("elapsed        {:.2} s", report.elapsed_s);
    Ok(ExitCode::SUCCESS)
}
