use std::io::Cursor;

use cohsense::bridge::{
    parse_stream, record_len, serialize, snapshot_stream, DecimationMode, SnapReader, StreamConfig, TapSnapshot,
    DEFAULT_N_TAPS, FLAG_GAP,
};
use cohsense::pipeline::run_link;
use cohsense::rxdsp::RxConfig;
use cohsense::txsim::TxConfig;
use cohsense::{Error, Exec};

fn snap(seq: u64) -> TapSnapshot {
    TapSnapshot {
        seq,
        t_ns: seq * 4096,
        flags: 0,
        taps: (0..4 * DEFAULT_N_TAPS as i16).map(|i| [i - 30, 7 * i - 200]).collect(),
        cum_phase_x: seq as f64 * 0.25,
        cum_phase_y: -(seq as f64) * 0.5,
    }
}

#[test]
fn receiver_snapshots_survive_the_wire() {
    let run = run_link(&TxConfig::default(), &Default::default(), &RxConfig::default(), 50_000, Exec::default()).unwrap();
    let snaps = &run.output.snapshots;
    assert!(snaps.len() >= 10);
    let mut bytes = Vec::new();
    for s in snaps {
        let b = serialize(s);
        assert_eq!(b.len(), record_len(DEFAULT_N_TAPS));
        bytes.extend(b);
    }
    assert_eq!(&parse_stream(&bytes).unwrap(), snaps);
}

#[test]
fn overflow_drops_and_flags_the_next_record() {
    let cfg = StreamConfig {
        capacity: 4,
        ..Default::default()
    };
    let (mut p, c) = snapshot_stream(&cfg).unwrap();
    for seq in 0..4 {
        p.push(snap(seq)).unwrap();
    }
    for seq in 4..7 {
        assert!(matches!(p.push(snap(seq)), Err(Error::Overflow { .. })));
    }
    let first = c.poll();
    assert_eq!(first.len(), 4);
    assert!(first.iter().all(|d| !d.snapshot.has_gap()));
    p.push(snap(7)).unwrap();
    let next = c.pop().unwrap();
    assert_eq!(next.snapshot.seq, 7);
    assert_eq!(next.dropped_before, 3);
    assert_eq!(next.snapshot.flags & FLAG_GAP, FLAG_GAP);
    assert_eq!(c.dropped(), 3);
    drop(p);
    assert!(c.is_finished());
}

#[test]
fn threaded_decimated_stream_is_ordered() {
    let cfg = StreamConfig {
        decimation: 8,
        mode: DecimationMode::BoxcarAverage,
        capacity: 64,
        ..Default::default()
    };
    let (mut p, c) = snapshot_stream(&cfg).unwrap();
    let reader = std::thread::spawn(move || {
        let mut seqs = Vec::new();
        loop {
            match c.pop() {
                Some(d) => seqs.push(d.snapshot.seq),
                None if c.is_finished() => break,
                None => std::thread::yield_now(),
            }
        }
        seqs
    });
    for seq in 0..80_000 {
        let _ = p.push(snap(seq));
        while p.queued() > p.capacity() / 2 {
            std::thread::yield_now();
        }
    }
    assert_eq!(p.dropped(), 0);
    drop(p);
    let seqs = reader.join().unwrap();
    assert_eq!(seqs.len(), 10_000);
    assert!(seqs.iter().enumerate().all(|(k, s)| *s == 8 * k as u64 + 7));
}

#[test]
fn truncated_file_reports_offset() {
    let mut bytes = Vec::new();
    for seq in 0..3 {
        bytes.extend(serialize(&snap(seq)));
    }
    bytes.truncate(bytes.len() - 10);
    let results: Vec<_> = SnapReader::new(Cursor::new(bytes)).collect();
    assert_eq!(results.len(), 3);
    assert!(results[0].is_ok() && results[1].is_ok());
    match &results[2] {
        Err(Error::Truncated { offset, .. }) => assert_eq!(*offset, 2 * record_len(DEFAULT_N_TAPS) as u64),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn corrupted_byte_fails_crc() {
    let mut bytes = serialize(&snap(1));
    bytes.extend(serialize(&snap(2)));
    let at = record_len(DEFAULT_N_TAPS) + 40;
    bytes[at] ^= 0x10;
    let err = parse_stream(&bytes).unwrap_err();
    assert!(matches!(err, Error::BadCrc { offset } if offset == record_len(DEFAULT_N_TAPS) as u64));
}
