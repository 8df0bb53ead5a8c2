//! Fixed-point formats for the bit-accurate datapath.
//!
//! Rounding is always round-half-to-even and overflow always saturates, which
//! is what the DSP registers do. The receiver's bit widths (8-bit ADC, 9-bit
//! taps and error, 7-bit phase angle) are all expressed as a [`FixedSpec`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    #[default]
    NearestEven,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overflow {
    #[default]
    Saturate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedSpec {
    pub total_bits: u32,
    pub frac_bits: u32,
    #[serde(default = "yes")]
    pub signed: bool,
    #[serde(default)]
    pub rounding: Rounding,
    #[serde(default)]
    pub overflow: Overflow,
}

fn yes() -> bool {
    true
}

impl FixedSpec {
    pub fn new(total_bits: u32, frac_bits: u32, signed: bool) -> Result<Self> {
        let spec = Self {
            total_bits,
            frac_bits,
            signed,
            rounding: Rounding::NearestEven,
            overflow: Overflow::Saturate,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Signed format; panics on an invalid width, so only for constants.
    pub const fn signed(total_bits: u32, frac_bits: u32) -> Self {
        assert!(total_bits >= 1 && total_bits <= 16 && frac_bits < total_bits);
        Self {
            total_bits,
            frac_bits,
            signed: true,
            rounding: Rounding::NearestEven,
            overflow: Overflow::Saturate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=16).contains(&self.total_bits) {
            return Err(Error::config(format!(
                "fixed-point total_bits must be in 1..=16, got {}",
                self.total_bits
            )));
        }
        if self.frac_bits >= self.total_bits {
            return Err(Error::config(format!(
                "fixed-point frac_bits ({}) must be below total_bits ({})",
                self.frac_bits, self.total_bits
            )));
        }
        Ok(())
    }

    pub fn min_code(&self) -> i32 {
        if self.signed {
            -(1 << (self.total_bits - 1))
        } else {
            0
        }
    }

    pub fn max_code(&self) -> i32 {
        if self.signed {
            (1 << (self.total_bits - 1)) - 1
        } else {
            (1 << self.total_bits) - 1
        }
    }

    pub fn lsb(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn max_value(&self) -> f64 {
        self.max_code() as f64 * self.lsb()
    }

    pub fn min_value(&self) -> f64 {
        self.min_code() as f64 * self.lsb()
    }

    pub fn contains(&self, code: i32) -> bool {
        (self.min_code()..=self.max_code()).contains(&code)
    }

    pub fn quantize(&self, x: f64) -> i32 {
        quantize(x, self)
    }

    pub fn dequantize(&self, code: i32) -> f64 {
        dequantize(code, self)
    }

    /// Quantize then dequantize.
    pub fn snap(&self, x: f64) -> f64 {
        self.dequantize(self.quantize(x))
    }
}

pub fn quantize(x: f64, spec: &FixedSpec) -> i32 {
    if x.is_nan() {
        return 0;
    }
    let scaled = (x * (spec.frac_bits as f64).exp2()).round_ties_even();
    scaled.clamp(spec.min_code() as f64, spec.max_code() as f64) as i32
}

pub fn dequantize(code: i32, spec: &FixedSpec) -> f64 {
    code as f64 * spec.lsb()
}

/// `a / 2^s` rounded half-to-even, in integer arithmetic.
pub fn shift_round_even(a: i64, s: u32) -> i64 {
    if s == 0 {
        return a;
    }
    let q = a >> s;
    let r = a - (q << s);
    let half = 1i64 << (s - 1);
    if r > half || (r == half && q & 1 == 1) {
        q + 1
    } else {
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TAP: FixedSpec = FixedSpec::signed(9, 7);

    #[test]
    fn basic_codes() {
        assert_eq!(quantize(0.0, &TAP), 0);
        assert_eq!(quantize(1.0, &TAP), 128);
        assert_eq!(quantize(10.0, &TAP), 255);
        assert_eq!(dequantize(255, &TAP), 1.9921875);
        assert_eq!(quantize(-10.0, &TAP), -256);
        assert_eq!(quantize(f64::INFINITY, &TAP), 255);
        assert_eq!(quantize(f64::NAN, &TAP), 0);
    }

    #[test]
    fn ties_go_to_even() {
        let lsb = TAP.lsb();
        assert_eq!(quantize(0.5 * lsb, &TAP), 0);
        assert_eq!(quantize(1.5 * lsb, &TAP), 2);
        assert_eq!(quantize(-2.5 * lsb, &TAP), -2);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(FixedSpec::new(0, 0, true).is_err());
        assert!(FixedSpec::new(17, 0, true).is_err());
        assert!(FixedSpec::new(8, 8, true).is_err());
        assert!(FixedSpec::new(16, 15, false).is_ok());
    }

    #[test]
    fn unsigned_range() {
        let u = FixedSpec::new(8, 0, false).unwrap();
        assert_eq!(u.quantize(-3.0), 0);
        assert_eq!(u.quantize(300.0), 255);
    }

    #[test]
    fn integer_shift_rounding() {
        assert_eq!(shift_round_even(3, 1), 2);
        assert_eq!(shift_round_even(5, 1), 2);
        assert_eq!(shift_round_even(-3, 1), -2);
        assert_eq!(shift_round_even(-5, 1), -2);
        assert_eq!(shift_round_even(7, 2), 2);
        assert_eq!(shift_round_even(-7, 2), -2);
    }

    fn spec_strategy() -> impl Strategy<Value = FixedSpec> {
        (1u32..=16, any::<bool>())
            .prop_flat_map(|(t, s)| (Just(t), 0..t, Just(s)))
            .prop_map(|(t, f, s)| FixedSpec::new(t, f, s).unwrap())
    }

    proptest! {
        #[test]
        fn within_half_lsb_of_clamp(spec in spec_strategy(), x in -1e5f64..1e5) {
            let back = spec.snap(x);
            let clamped = x.clamp(spec.min_value(), spec.max_value());
            prop_assert!((back - clamped).abs() <= 0.5 * spec.lsb() + 1e-12);
        }

        #[test]
        fn monotone(spec in spec_strategy(), a in -1e4f64..1e4, b in -1e4f64..1e4) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(spec.quantize(lo) <= spec.quantize(hi));
        }

        #[test]
        fn shift_matches_float_rounding(a in -1i64 << 40..1i64 << 40, s in 0u32..20) {
            let f = (a as f64 / (s as f64).exp2()).round_ties_even() as i64;
            prop_assert_eq!(shift_round_even(a, s), f);
        }

        #[test]
        fn round_trip_idempotent(spec in spec_strategy(), x in -1e4f64..1e4) {
            let c = spec.quantize(x);
            prop_assert_eq!(spec.quantize(spec.dequantize(c)), c);
        }
    }
}
