//! Front-end analog-to-digital conversion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jones::Complex;
use crate::txsim::DualPolWaveform;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdcSpec {
    #[serde(default = "default_bits")]
    pub bits: u32,
    /// Input amplitude mapped to the largest positive code.
    #[serde(default = "default_full_scale")]
    pub full_scale: f64,
    #[serde(default = "default_rate")]
    pub sample_rate: f64,
}

fn default_bits() -> u32 {
    8
}

fn default_full_scale() -> f64 {
    2.5
}

fn default_rate() -> f64 {
    2e9
}

impl Default for AdcSpec {
    fn default() -> Self {
        Self {
            bits: default_bits(),
            full_scale: default_full_scale(),
            sample_rate: default_rate(),
        }
    }
}

/// One complex ADC sample as (I, Q) codes.
pub type CodePair = [i16; 2];

impl AdcSpec {
    pub fn validate(&self) -> Result<()> {
        if !(2..=16).contains(&self.bits) {
            return Err(Error::config(format!("adc bits must be in 2..=16, got {}", self.bits)));
        }
        if !(self.full_scale > 0.0 && self.full_scale.is_finite()) {
            return Err(Error::config("adc full_scale must be positive"));
        }
        if !(self.sample_rate > 0.0) {
            return Err(Error::config("adc sample_rate must be positive"));
        }
        Ok(())
    }

    pub fn max_code(&self) -> i32 {
        (1 << (self.bits - 1)) - 1
    }

    pub fn min_code(&self) -> i32 {
        -(1 << (self.bits - 1))
    }

    /// Real value of one code step.
    pub fn lsb(&self) -> f64 {
        self.full_scale / self.max_code() as f64
    }

    /// Mid-tread, round-half-even, saturating.
    pub fn code(&self, x: f64) -> i16 {
        if x.is_nan() {
            return 0;
        }
        (x / self.lsb())
            .round_ties_even()
            .clamp(self.min_code() as f64, self.max_code() as f64) as i16
    }

    pub fn code_pair(&self, z: Complex) -> CodePair {
        [self.code(z.re), self.code(z.im)]
    }

    pub fn value(&self, c: CodePair) -> Complex {
        Complex::new(c[0] as f64, c[1] as f64) * self.lsb()
    }
}

/// Quantize both polarizations, returning codes.
pub fn adc_codes(wave: &DualPolWaveform, spec: &AdcSpec) -> [Vec<CodePair>; 2] {
    [&wave.x, &wave.y].map(|v| v.iter().map(|z| spec.code_pair(*z)).collect())
}

/// Quantize both polarizations and rescale back to real units.
pub fn adc_quantize(wave: &DualPolWaveform, spec: &AdcSpec) -> Result<DualPolWaveform> {
    spec.validate()?;
    let q = |v: &[Complex]| -> Vec<Complex> { v.iter().map(|z| spec.value(spec.code_pair(*z))).collect() };
    Ok(DualPolWaveform {
        x: q(&wave.x),
        y: q(&wave.y),
        sample_rate: wave.sample_rate,
        t0: wave.t0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundaries() {
        let s = AdcSpec::default();
        assert_eq!(s.code(0.0), 0);
        assert_eq!(s.code(s.full_scale), 127);
        assert_eq!(s.code(10.0 * s.full_scale), 127);
        assert_eq!(s.code(-10.0 * s.full_scale), -128);
        assert_eq!(s.code(0.5 * s.lsb()), 0);
        assert_eq!(s.code(1.5 * s.lsb()), 2);
    }

    #[test]
    fn rescaled_error_is_bounded() {
        let s = AdcSpec::default();
        let w = DualPolWaveform {
            x: (0..1000).map(|i| Complex::new((i as f64 * 0.01).sin(), 0.3)).collect(),
            y: (0..1000).map(|i| Complex::new(-0.2, (i as f64 * 0.02).cos())).collect(),
            sample_rate: 2e9,
            t0: 0.0,
        };
        let q = adc_quantize(&w, &s).unwrap();
        for (a, b) in w.x.iter().chain(&w.y).zip(q.x.iter().chain(&q.y)) {
            assert!((a - b).re.abs() <= 0.5 * s.lsb() + 1e-15);
            assert!((a - b).im.abs() <= 0.5 * s.lsb() + 1e-15);
        }
    }

    #[test]
    fn rejects_bad_full_scale() {
        let s = AdcSpec { full_scale: 0.0, ..Default::default() };
        assert!(s.validate().is_err());
    }
}
