use cohsense::analytics::{jones_from_taps, TapFormat};
use cohsense::channel::{jones_at, propagate, ChannelState};
use cohsense::jones::{polar_decompose, unitary_correlation, JonesMatrix2};
use cohsense::pipeline::run_link;
use cohsense::rxdsp::{adc_quantize, recovered_channel, RxConfig};
use cohsense::txsim::{modulate, TxConfig};
use cohsense::Exec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Gaussian upper tail by composite Simpson integration of the density.
fn q_function(x: f64) -> f64 {
    let (a, b, n) = (x, x + 12.0, 20_000);
    let h = (b - a) / n as f64;
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(a) + pdf(b);
    for k in 1..n {
        s += pdf(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn random_channel(seed: u64, snr_db: f64) -> ChannelState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ChannelState {
        base_rotation: JonesMatrix2::random_unitary(&mut rng),
        snr_db,
        seed,
        ..Default::default()
    }
}

#[test]
fn adc_noise_matches_uniform_quantizer() {
    let tx = TxConfig::default();
    let wave = modulate(&tx, 20_000).unwrap();
    let rx = RxConfig::default();
    let q = adc_quantize(&wave, &rx.adc).unwrap();
    let lsb = rx.adc.lsb();
    let fs = rx.adc.full_scale;
    let mut err = 0.0;
    let mut count = 0usize;
    for (a, b) in wave.x.iter().zip(&q.x) {
        if a.re.abs() < fs && a.im.abs() < fs {
            err += (a - b).norm_sqr();
            count += 1;
        }
    }
    let measured = err / count as f64;
    let expected = lsb * lsb / 6.0;
    assert!(count > wave.len() * 9 / 10);
    assert!((measured / expected - 1.0).abs() < 0.1, "{measured} vs {expected}");
}

#[test]
fn noiseless_rotation_is_error_free() {
    let ch = random_channel(21, f64::INFINITY);
    let run = run_link(&TxConfig::default(), &ch, &RxConfig::default(), 150_000, Exec::default()).unwrap();
    let r = run.report;
    assert!(r.pol_map[0].is_some() && r.pol_map[1].is_some());
    assert_eq!(r.bit_errors, 0, "{r:?}");
    assert!(r.n_bits > 400_000);
}

#[test]
fn ber_tracks_qpsk_theory_at_10db() {
    let ch = ChannelState {
        phase_linewidth_hz: 0.0,
        ..random_channel(22, 10.0)
    };
    let run = run_link(&TxConfig::default(), &ch, &RxConfig::default(), 600_000, Exec::default()).unwrap();
    let theory = q_function(10f64.powf(10.0 / 20.0));
    assert!((theory - 7.83e-4).abs() < 1e-5);
    let ratio = run.report.ber / theory;
    assert!((0.6..1.8).contains(&ratio), "ber {} theory {theory}", run.report.ber);
}

#[test]
fn recovered_unitary_matches_truth() {
    let ch = ChannelState {
        pdl_db: 1.0,
        pdl_axis: [0.3, -0.5, 0.8],
        ..random_channel(23, 20.0)
    };
    let run = run_link(&TxConfig::default(), &ch, &RxConfig::default(), 200_000, Exec::default()).unwrap();
    let map = [run.report.pol_map[0].unwrap(), run.report.pol_map[1].unwrap()];
    let truth = polar_decompose(&jones_at(&ch, 0.0)).unwrap().unitary;
    let snaps = &run.output.snapshots;
    for s in &snaps[snaps.len() / 2..] {
        let h = jones_from_taps(s, 0.0, &TapFormat::default());
        let j = recovered_channel(&h, [s.cum_phase_x, s.cum_phase_y], map).unwrap();
        let u = polar_decompose(&j).unwrap().unitary;
        let c = unitary_correlation(&u, &truth).unwrap().norm();
        assert!(c >= 0.99, "seq {}: |C| = {c}", s.seq);
    }
}

#[test]
fn sequential_and_parallel_agree() {
    let ch = random_channel(24, 12.0);
    let tx = TxConfig::default();
    let rx = RxConfig::default();
    let a = run_link(&tx, &ch, &rx, 70_000, Exec::Sequential).unwrap();
    let b = run_link(&tx, &ch, &rx, 70_000, Exec::Parallel).unwrap();
    assert_eq!(a.output.snapshots, b.output.snapshots);
    assert_eq!(a.report, b.report);
}

#[test]
fn channel_truth_matches_model() {
    let ch = random_channel(25, f64::INFINITY);
    let tx = TxConfig::default();
    let wave = modulate(&tx, 8192).unwrap();
    let (_, truth) = propagate(&wave, &ch).unwrap();
    assert!(!truth.is_empty());
    for (t, j) in truth.times.iter().zip(&truth.jones) {
        let model = polar_decompose(&jones_at(&ch, *t)).unwrap().unitary;
        let got = polar_decompose(j).unwrap().unitary;
        assert!(unitary_correlation(&model, &got).unwrap().norm() > 1.0 - 1e-12);
    }
}
