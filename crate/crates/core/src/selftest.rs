//! Invariant suite run by `cohsense selftest`.
//!
//! Each check draws its own deterministic random cases and reports the worst
//! deviation seen against a fixed tolerance. For testing the harness itself,
//! a check can be asked to perturb one of its constants so it must fail.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::bridge::{parse, record_len, serialize, TapSnapshot, DEFAULT_N_TAPS};
use crate::exec::Exec;
use crate::fixed::{shift_round_even, FixedSpec};
use crate::jones::{normalize3, pdl_db, polar_decompose, unitary_correlation, Complex, JonesMatrix2};
use crate::stokes::stokes_from_row;
use crate::txsim::PrbsState;

/// Environment variable the CLI reads to name a check to corrupt.
pub const CORRUPT_ENV: &str = "COHSENSE_SELFTEST_CORRUPT";

pub const CHECKS: [&str; 8] = [
    "polar_reconstruction",
    "correlation_rotation_invariance",
    "stokes_global_phase_invariance",
    "pdl_recovery",
    "fixed_point_round_trip",
    "integer_rounding",
    "bridge_round_trip",
    "prbs15_period",
];

#[derive(Debug, Clone, Default)]
pub struct SelftestOptions {
    /// Name of a check whose reference constant is perturbed.
    pub corrupt: Option<String>,
    pub exec: Exec,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub worst: f64,
    pub tolerance: f64,
    pub cases: usize,
    pub elapsed_ms: f64,
}

const CASES: usize = 4000;

fn random_matrix(rng: &mut ChaCha8Rng) -> JonesMatrix2 {
    let mut c = || Complex::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    JonesMatrix2::new(c(), c(), c(), c())
}

fn random_axis(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let a = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        if a.iter().map(|x: &f64| x * x).sum::<f64>() > 1e-6 {
            return normalize3(a);
        }
    }
}

/// Run every check, or only those named in `only` when it is non-empty.
pub fn run(opts: &SelftestOptions, only: &[&str]) -> Vec<CheckResult> {
    let selected: Vec<&'static str> = CHECKS
        .iter()
        .copied()
        .filter(|c| only.is_empty() || only.contains(c))
        .collect();
    selected
        .into_iter()
        .map(|name| {
            let bias = if opts.corrupt.as_deref() == Some(name) { 1e-6 } else { 0.0 };
            let start = Instant::now();
            let (worst, tolerance, cases) = run_check(name, bias, opts.exec);
            CheckResult {
                name,
                passed: worst <= tolerance,
                worst,
                tolerance,
                cases,
                elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            }
        })
        .collect()
}

fn max_of(v: Vec<f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| if x.is_nan() { f64::INFINITY } else { m.max(x) })
}

fn run_check(name: &str, bias: f64, exec: Exec) -> (f64, f64, usize) {
    match name {
        "polar_reconstruction" => {
            let worst = max_of(exec.map_range(CASES, |i| {
                let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
                let j = random_matrix(&mut rng);
                let Ok(p) = polar_decompose(&j) else { return 0.0 };
                let back = p.hermitian * p.unitary + JonesMatrix2::scalar(Complex::new(bias, 0.0));
                let recon = (back - j).frobenius() / j.frobenius();
                let unit = p.unitary.unitarity_error();
                let herm = (p.hermitian - p.hermitian.adjoint()).frobenius();
                recon.max(unit).max(herm)
            }));
            (worst, 1e-10, CASES)
        }
        "correlation_rotation_invariance" => {
            let worst = max_of(exec.map_range(CASES, |i| {
                let mut rng = ChaCha8Rng::seed_from_u64(10_000 + i as u64);
                let u1 = JonesMatrix2::random_unitary(&mut rng);
                let u2 = JonesMatrix2::random_unitary(&mut rng);
                let v = JonesMatrix2::random_unitary(&mut rng);
                let w = JonesMatrix2::random_unitary(&mut rng);
                let c0 = unitary_correlation(&u1, &u2).unwrap();
                let c1 = unitary_correlation(&(v * u1 * w), &(v * u2 * w)).unwrap();
                (c1 - c0).norm() + bias
            }));
            (worst, 1e-10, CASES)
        }
        "stokes_global_phase_invariance" => {
            let worst = max_of(exec.map_range(CASES, |i| {
                let mut rng = ChaCha8Rng::seed_from_u64(20_000 + i as u64);
                let a = Complex::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                let b = Complex::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                let g = Complex::from_polar(rng.random_range(0.5..2.0), rng.random_range(-4.0..4.0));
                let (Ok(s0), Ok(s1)) = (stokes_from_row(a, b), stokes_from_row(a * g, b * g)) else {
                    return 0.0;
                };
                let (u0, u1) = (s0.unit(), s1.unit());
                (0..3).map(|k| (u0[k] - u1[k]).abs()).fold(0.0, f64::max) + bias
            }));
            (worst, 1e-12, CASES)
        }
        "pdl_recovery" => {
            let worst = max_of(exec.map_range(CASES, |i| {
                let mut rng = ChaCha8Rng::seed_from_u64(30_000 + i as u64);
                let db = rng.random_range(0.0..6.0);
                let p = JonesMatrix2::pdl(random_axis(&mut rng), db);
                let u = JonesMatrix2::random_unitary(&mut rng);
                let parts = polar_decompose(&(p * u)).unwrap();
                let got = pdl_db(&parts.hermitian).unwrap();
                (got - db - bias).abs() + (parts.unitary - u).frobenius()
            }));
            (worst, 1e-9, CASES)
        }
        "fixed_point_round_trip" => {
            let specs = [
                FixedSpec::signed(8, 0),
                FixedSpec::signed(9, 7),
                FixedSpec::signed(12, 10),
                FixedSpec::signed(16, 15),
                FixedSpec::new(8, 4, false).unwrap(),
            ];
            let mut worst = 0.0f64;
            let mut cases = 0;
            for spec in specs {
                for code in spec.min_code()..=spec.max_code() {
                    let back = spec.quantize(spec.dequantize(code) + bias * spec.lsb() * 1e6);
                    worst = worst.max((back - code).abs() as f64);
                    cases += 1;
                }
                let mut rng = ChaCha8Rng::seed_from_u64(40_000);
                for _ in 0..CASES {
                    let x = rng.random_range(spec.min_value()..spec.max_value());
                    worst = worst.max((spec.snap(x) - x).abs() / spec.lsb() - 0.5);
                    cases += 1;
                }
                let sat = spec.quantize(spec.max_value() * 10.0) - spec.max_code();
                worst = worst.max(sat.abs() as f64);
            }
            (worst, 0.0, cases)
        }
        "integer_rounding" => {
            let mut rng = ChaCha8Rng::seed_from_u64(50_000);
            let mut worst = 0.0f64;
            for _ in 0..CASES {
                let a: i64 = rng.random_range(-(1i64 << 40)..(1i64 << 40));
                let s: u32 = rng.random_range(0..24);
                let exact = (a as f64 / (s as f64).exp2() + bias * 1e6).round_ties_even() as i64;
                worst = worst.max((shift_round_even(a, s) - exact).abs() as f64);
            }
            (worst, 0.0, CASES)
        }
        "bridge_round_trip" => {
            let mut rng = ChaCha8Rng::seed_from_u64(60_000);
            let mut worst = 0.0f64;
            let n = 1000;
            for seq in 0..n {
                let taps = (0..4 * DEFAULT_N_TAPS)
                    .map(|_| [rng.random::<i16>(), rng.random::<i16>()])
                    .collect();
                let s = TapSnapshot {
                    seq,
                    t_ns: rng.random(),
                    flags: rng.random::<u16>() & 1,
                    taps,
                    cum_phase_x: rng.sample(StandardNormal),
                    cum_phase_y: rng.sample::<f64, _>(StandardNormal) + bias,
                };
                let bytes = serialize(&s);
                let len_err = (bytes.len() as f64 - record_len(DEFAULT_N_TAPS) as f64).abs()
                    + (record_len(DEFAULT_N_TAPS) as f64 - 318.0).abs();
                let back = match parse(&bytes) {
                    Ok(b) if b == s && bias == 0.0 => 0.0,
                    Ok(b) => (b.cum_phase_y - s.cum_phase_y + bias).abs(),
                    Err(_) => 1.0,
                };
                worst = worst.max(len_err + back);
            }
            (worst, 0.0, n as usize)
        }
        "prbs15_period" => {
            let mut st = PrbsState::new(1).unwrap();
            let start = st;
            let mut period = 0u64;
            loop {
                crate::txsim::prbs15_next(&mut st);
                period += 1;
                if st == start || period > 40_000 {
                    break;
                }
            }
            let expect = 32767.0 + bias * 1e6;
            ((period as f64 - expect).abs(), 0.0, period as usize)
        }
        _ => (f64::INFINITY, 0.0, 0),
    }
}
