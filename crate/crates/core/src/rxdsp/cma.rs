//! Fixed-point 2×2 butterfly equalizer adapted by the constant modulus algorithm.
//!
//! Taps are T/2-spaced. The filter runs on the visible tap codes (`tap_spec`,
//! 9 bits by default); each tap also has a wide accumulator with
//! [`ACC_EXTRA_BITS`] extra fractional bits that integrates the updates, and
//! the visible code is the accumulator rounded half-to-even and saturated.

use crate::error::{Error, Result};
use crate::fixed::{shift_round_even, FixedSpec};
use crate::jones::{Complex, JonesMatrix2};
use crate::rxdsp::adc::CodePair;

pub const N_TAPS: usize = 17;
pub const CENTER_TAP: usize = N_TAPS / 2;
/// Filter order: output x from input x, output x from input y, then output y.
pub const FILTERS: [&str; 4] = ["xx", "xy", "yx", "yy"];
pub const ACC_EXTRA_BITS: u32 = 16;
pub const DEFAULT_TAP_SPEC: FixedSpec = FixedSpec::signed(9, 7);
pub const DEFAULT_ERROR_SPEC: FixedSpec = FixedSpec::signed(9, 7);

#[derive(Debug, Clone, PartialEq)]
pub struct EqualizerState {
    /// Visible tap codes, `taps[filter][k]`.
    pub taps: [[CodePair; N_TAPS]; 4],
    acc: [[[i64; 2]; N_TAPS]; 4],
    pub tap_spec: FixedSpec,
    pub error_spec: FixedSpec,
    pub mu: f64,
    pub cma_radius: f64,
    /// Real value of one input code step.
    pub input_lsb: f64,
}

impl EqualizerState {
    /// Center-spike initialization: `w_xx[8] = w_yy[8] = 1`, all else 0.
    pub fn new(tap_spec: FixedSpec, error_spec: FixedSpec, mu: f64, cma_radius: f64, input_lsb: f64) -> Result<Self> {
        tap_spec.validate()?;
        error_spec.validate()?;
        if tap_spec.frac_bits + ACC_EXTRA_BITS > 48 {
            return Err(Error::config("tap_spec has too many fractional bits"));
        }
        if !(mu > 0.0 && mu.log2().fract() == 0.0) {
            return Err(Error::config(format!("cma mu must be a power of two, got {mu}")));
        }
        if !(cma_radius > 0.0 && cma_radius.is_finite()) {
            return Err(Error::config("cma_radius must be positive"));
        }
        if tap_spec.max_value() < 1.0 {
            return Err(Error::config("tap_spec must be able to represent 1.0"));
        }
        let mut eq = Self {
            taps: [[[0; 2]; N_TAPS]; 4],
            acc: [[[0; 2]; N_TAPS]; 4],
            tap_spec,
            error_spec,
            mu,
            cma_radius,
            input_lsb,
        };
        let one = 1i64 << (tap_spec.frac_bits + ACC_EXTRA_BITS);
        eq.acc[0][CENTER_TAP] = [one, 0];
        eq.acc[3][CENTER_TAP] = [one, 0];
        eq.refresh_visible();
        Ok(eq)
    }

    fn acc_bounds(&self) -> (i64, i64) {
        let s = 1i64 << ACC_EXTRA_BITS;
        (self.tap_spec.min_code() as i64 * s, self.tap_spec.max_code() as i64 * s)
    }

    fn visible(&self, a: i64) -> i16 {
        shift_round_even(a, ACC_EXTRA_BITS).clamp(self.tap_spec.min_code() as i64, self.tap_spec.max_code() as i64)
            as i16
    }

    fn refresh_visible(&mut self) {
        for f in 0..4 {
            for k in 0..N_TAPS {
                let a = self.acc[f][k];
                self.taps[f][k] = [self.visible(a[0]), self.visible(a[1])];
            }
        }
    }

    pub fn tap_value(&self, f: usize, k: usize) -> Complex {
        let [re, im] = self.taps[f][k];
        Complex::new(self.tap_spec.dequantize(re as i32), self.tap_spec.dequantize(im as i32))
    }

    /// Frequency response `H(ω)` (ω in rad/s, sample period `ts`).
    pub fn response(&self, omega_ts: f64) -> JonesMatrix2 {
        let h = |f: usize| -> Complex {
            (0..N_TAPS)
                .map(|k| self.tap_value(f, k) * Complex::from_polar(1.0, -omega_ts * k as f64))
                .sum()
        };
        JonesMatrix2::new(h(0), h(1), h(2), h(3))
    }

    pub fn dc_response(&self) -> JonesMatrix2 {
        self.response(0.0)
    }

    /// Filter output for one tributary in code units (tap LSB × input LSB).
    fn output_codes(&self, p: usize, x_win: &[CodePair; N_TAPS], y_win: &[CodePair; N_TAPS]) -> [i64; 2] {
        let (mut re, mut im) = (0i64, 0i64);
        for (f, win) in [(2 * p, x_win), (2 * p + 1, y_win)] {
            for k in 0..N_TAPS {
                let [wr, wi] = self.taps[f][k].map(i64::from);
                let [xr, xi] = win[k].map(i64::from);
                re += wr * xr - wi * xi;
                im += wr * xi + wi * xr;
            }
        }
        [re, im]
    }

    fn out_scale(&self) -> f64 {
        self.tap_spec.lsb() * self.input_lsb
    }

    /// Equalizer output for both tributaries without adapting.
    pub fn filter(&self, x_win: &[CodePair; N_TAPS], y_win: &[CodePair; N_TAPS]) -> [Complex; 2] {
        let s = self.out_scale();
        [0, 1].map(|p| {
            let [re, im] = self.output_codes(p, x_win, y_win);
            Complex::new(re as f64 * s, im as f64 * s)
        })
    }

    /// Quantized CMA error `R² − |y|²`.
    pub fn error(&self, y: Complex) -> f64 {
        self.error_spec.snap(self.cma_radius * self.cma_radius - y.norm_sqr())
    }

    fn adapt(&mut self, p: usize, e: f64, y: Complex, x_win: &[CodePair; N_TAPS], y_win: &[CodePair; N_TAPS]) {
        if e == 0.0 {
            return;
        }
        let acc_scale = ((self.tap_spec.frac_bits + ACC_EXTRA_BITS) as f64).exp2();
        let c = y * (self.mu * e * self.input_lsb * acc_scale);
        let (lo, hi) = self.acc_bounds();
        for (f, win) in [(2 * p, x_win), (2 * p + 1, y_win)] {
            for k in 0..N_TAPS {
                let x = Complex::new(win[k][0] as f64, -(win[k][1] as f64));
                let d = c * x;
                let a = &mut self.acc[f][k];
                a[0] = (a[0] + d.re.round_ties_even() as i64).clamp(lo, hi);
                a[1] = (a[1] + d.im.round_ties_even() as i64).clamp(lo, hi);
                let a = *a;
                self.taps[f][k] = [self.visible(a[0]), self.visible(a[1])];
            }
        }
    }

    /// Re-initialize the y filter as the orthogonal complement of the x
    /// filter: `w_yx[k] = −conj(w_xy[16−k])`, `w_yy[k] = conj(w_xx[16−k])`.
    pub fn reinit_y_from_x(&mut self) {
        let (lo, hi) = self.acc_bounds();
        for k in 0..N_TAPS {
            let r = N_TAPS - 1 - k;
            let xy = self.acc[1][r];
            let xx = self.acc[0][r];
            self.acc[2][k] = [(-xy[0]).clamp(lo, hi), xy[1].clamp(lo, hi)];
            self.acc[3][k] = [xx[0], (-xx[1]).clamp(lo, hi)];
        }
        self.refresh_visible();
    }

    /// True when every visible tap is a valid code of `tap_spec`.
    pub fn taps_in_range(&self) -> bool {
        self.taps
            .iter()
            .flatten()
            .flatten()
            .all(|&c| self.tap_spec.contains(c as i32))
    }

    /// Visible taps flattened in bridge order.
    pub fn tap_codes(&self) -> Vec<[i16; 2]> {
        self.taps.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmaOutput {
    pub y: [Complex; 2],
    /// Quantized error for each tributary.
    pub e: [f64; 2],
}

/// Filter one T/2 window per input polarization and adapt the taps.
/// Windows are newest-first: `x_win[k] = x[m − k]`.
pub fn cma_step(eq: &mut EqualizerState, x_win: &[CodePair; N_TAPS], y_win: &[CodePair; N_TAPS]) -> CmaOutput {
    let y = eq.filter(x_win, y_win);
    let e = [eq.error(y[0]), eq.error(y[1])];
    for p in 0..2 {
        eq.adapt(p, e[p], y[p], x_win, y_win);
    }
    debug_assert!(eq.taps_in_range());
    CmaOutput { y, e }
}
