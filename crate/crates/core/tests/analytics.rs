use cohsense::analytics::{analyze, Analysis, TapFormat};
use cohsense::channel::{ChannelState, EventKind, EventSpec};
use cohsense::config::AnalysisConfig;
use cohsense::jones::JonesMatrix2;
use cohsense::pipeline::run_link;
use cohsense::rxdsp::RxConfig;
use cohsense::txsim::TxConfig;
use cohsense::Exec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const N: u64 = 320_000;

fn channel(seed: u64) -> ChannelState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ChannelState {
        base_rotation: JonesMatrix2::random_unitary(&mut rng),
        snr_db: 20.0,
        seed,
        ..Default::default()
    }
}

fn event(kind: EventKind, amplitude: f64) -> EventSpec {
    EventSpec {
        kind,
        t_start: 120e-6,
        t_end: 200e-6,
        amplitude,
        f0: 0.0,
        f1: 0.0,
        axis: [0.0, 0.6, 0.8],
    }
}

fn run(ch: &ChannelState) -> Analysis {
    let out = run_link(&TxConfig::default(), ch, &RxConfig::default(), N, Exec::default()).unwrap();
    analyze(&out.output.snapshots, &AnalysisConfig::default(), &TapFormat::default(), Exec::default()).unwrap()
}

fn values_between(a: &Analysis, label: &str, t0: f64, t1: f64) -> Vec<f64> {
    let s = a.series(label).unwrap();
    s.t.iter()
        .zip(&s.values)
        .filter(|(t, v)| **t >= t0 && **t <= t1 && v.is_finite())
        .map(|(_, v)| *v)
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn quiet_link_is_flat() {
    let a = run(&channel(31));
    assert!(a.summary.flat, "{:?}", a.summary);
    assert_eq!(a.series.len(), 12);
    assert_eq!(a.summary.missing_samples, 0);
}

#[test]
fn static_pdl_is_measured() {
    let ch = ChannelState {
        pdl_db: 1.5,
        pdl_axis: [0.2, 0.9, -0.4],
        ..channel(32)
    };
    let a = run(&ch);
    assert!((a.summary.pdl_mean_db - 1.5).abs() <= 0.2, "{}", a.summary.pdl_mean_db);
}

#[test]
fn pdl_estimate_ignores_cable_rotation() {
    let estimates: Vec<f64> = (40..43)
        .map(|seed| {
            let ch = ChannelState {
                pdl_db: 1.0,
                pdl_axis: [1.0, 0.0, 0.0],
                ..channel(seed)
            };
            run(&ch).summary.pdl_mean_db
        })
        .collect();
    let lo = estimates.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = estimates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(hi - lo <= 0.2, "{estimates:?}");
}

#[test]
fn sop_step_moves_stokes_and_correlation() {
    let angle = 0.6;
    let ch = ChannelState {
        events: vec![event(EventKind::SopStep, angle)],
        ..channel(33)
    };
    let a = run(&ch);
    let c_after = mean(&values_between(&a, "corr_abs", 220e-6, 1.0));
    assert!((c_after - (angle / 2.0).cos()).abs() < 0.01, "{c_after}");
    let before: Vec<f64> = values_between(&a, "s1_projected", 0.0, 110e-6)
        .into_iter()
        .zip(values_between(&a, "s2_projected", 0.0, 110e-6))
        .map(|(x, y)| x.hypot(y))
        .collect();
    let after: Vec<f64> = values_between(&a, "s1_projected", 220e-6, 1.0)
        .into_iter()
        .zip(values_between(&a, "s2_projected", 220e-6, 1.0))
        .map(|(x, y)| x.hypot(y))
        .collect();
    assert!(mean(&after) > 5.0 * mean(&before), "{} vs {}", mean(&after), mean(&before));
}

#[test]
fn common_phase_ramp_is_recovered() {
    let ch = ChannelState {
        phase_linewidth_hz: 0.0,
        events: vec![event(EventKind::PhaseRamp, 1.0)],
        ..channel(34)
    };
    let a = run(&ch);
    let before = mean(&values_between(&a, "phase_common", 0.0, 110e-6));
    let after = mean(&values_between(&a, "phase_common", 220e-6, 1.0));
    assert!(((after - before).abs() - 1.0).abs() < 0.1, "step {}", after - before);
    let d_before = mean(&values_between(&a, "phase_differential", 0.0, 110e-6));
    let d_after = mean(&values_between(&a, "phase_differential", 220e-6, 1.0));
    assert!((d_after - d_before).abs() < 0.05, "differential moved {}", d_after - d_before);
}
