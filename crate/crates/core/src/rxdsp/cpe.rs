//! Block-wise principal-component carrier phase tracker.
//!
//! Squaring a QPSK symbol collapses the four points onto an antipodal pair
//! whose axis sits at `π/2 + 2φ`. The principal axis of the second-moment
//! matrix of the squared block therefore gives `φ` modulo `π/2`.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::jones::Complex;

pub const DEFAULT_BLOCK: usize = 64;
pub const DEFAULT_ANGLE_BITS: u32 = 7;
/// Anisotropy `(λ₁−λ₂)/(λ₁+λ₂)` below which a block carries no phase.
pub const MIN_ANISOTROPY: f64 = 1e-3;

/// Unwrapped phase register of one polarization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PhaseRegister {
    pub last_code: i32,
    pub cum_code: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpeState {
    pub block_size: usize,
    pub angle_bits: u32,
    pub regs: [PhaseRegister; 2],
}

impl CpeState {
    pub fn new(block_size: usize, angle_bits: u32) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::config("cpe block_size must be positive"));
        }
        if !(2..=16).contains(&angle_bits) {
            return Err(Error::config("cpe angle_bits must be in 2..=16"));
        }
        Ok(Self {
            block_size,
            angle_bits,
            regs: [PhaseRegister::default(); 2],
        })
    }

    /// Radians per angle code.
    pub fn step(&self) -> f64 {
        FRAC_PI_2 / (1u64 << self.angle_bits) as f64
    }

    pub fn cum_phase(&self, pol: usize) -> f64 {
        self.regs[pol].cum_code as f64 * self.step()
    }

    fn half_range(&self) -> i32 {
        1 << (self.angle_bits - 1)
    }

    /// Map a phase in radians to a code in `[−2^(b−1), 2^(b−1))`.
    pub fn angle_code(&self, phi: f64) -> i32 {
        let h = self.half_range();
        let c = (phi / self.step()).round_ties_even() as i64;
        (c + h as i64).rem_euclid(2 * h as i64) as i32 - h
    }
}

impl Default for CpeState {
    fn default() -> Self {
        Self::new(DEFAULT_BLOCK, DEFAULT_ANGLE_BITS).unwrap()
    }
}

/// Unquantized block phase estimate in `[−π/4, π/4)`.
pub fn pca_phase(symbols: &[Complex]) -> Result<f64> {
    let (mut mxx, mut myy, mut mxy) = (0.0, 0.0, 0.0);
    for s in symbols {
        let z = s * s;
        mxx += z.re * z.re;
        myy += z.im * z.im;
        mxy += z.re * z.im;
    }
    let total = mxx + myy;
    let spread = ((mxx - myy).powi(2) + 4.0 * mxy * mxy).sqrt();
    if !(total > 0.0) || spread < MIN_ANISOTROPY * total {
        return Err(Error::DegenerateBlock);
    }
    let alpha = 0.5 * (2.0 * mxy).atan2(mxx - myy);
    Ok(wrap_quarter((alpha - FRAC_PI_2) / 2.0))
}

/// Wrap into `[−π/4, π/4)`.
pub fn wrap_quarter(phi: f64) -> f64 {
    let w = (phi + PI / 4.0).rem_euclid(FRAC_PI_2) - PI / 4.0;
    if w >= PI / 4.0 {
        w - FRAC_PI_2
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpeBlockOutput {
    /// Quantized block estimate in `[−π/4, π/4)`.
    pub phase_estimate: f64,
    /// Unwrapped accumulated phase after this block.
    pub cum_phase: f64,
    /// Symbols rotated by `−cum_phase`.
    pub derotated: Vec<Complex>,
}

/// Estimate, unwrap and remove the phase of one block of one polarization.
/// On `DegenerateBlock` the register is left untouched.
pub fn cpe_block(symbols: &[Complex], state: &mut CpeState, pol: usize) -> Result<CpeBlockOutput> {
    if symbols.len() != state.block_size {
        return Err(Error::config(format!(
            "cpe block needs {} symbols, got {}",
            state.block_size,
            symbols.len()
        )));
    }
    let code = state.angle_code(pca_phase(symbols)?);
    let h = state.half_range();
    let reg = &mut state.regs[pol];
    let delta = (code - reg.last_code + h).rem_euclid(2 * h) - h;
    reg.cum_code += delta as i64;
    reg.last_code = code;
    let cum_phase = state.cum_phase(pol);
    Ok(CpeBlockOutput {
        phase_estimate: code as f64 * state.step(),
        cum_phase,
        derotated: derotate(symbols, cum_phase),
    })
}

pub fn derotate(symbols: &[Complex], phase: f64) -> Vec<Complex> {
    let r = Complex::from_polar(1.0, -phase);
    symbols.iter().map(|s| s * r).collect()
}
