//! Exact 2×2 complex Jones-matrix algebra.
//!
//! Everything here is closed form: no iterative eigen-solvers, so results are
//! deterministic and cheap enough to run per tap snapshot.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Complex = Complex64;

pub const ZERO: Complex = Complex::new(0.0, 0.0);
pub const ONE: Complex = Complex::new(1.0, 0.0);
pub const I: Complex = Complex::new(0.0, 1.0);

/// Relative singular-value floor below which a matrix is treated as singular.
pub const SINGULAR_RATIO: f64 = 1e-9;

/// A 2×2 complex field transfer matrix, rows indexed by output polarization.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JonesMatrix2 {
    pub xx: Complex,
    pub xy: Complex,
    pub yx: Complex,
    pub yy: Complex,
}

impl fmt::Debug for JonesMatrix2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[[{:.6}, {:.6}], [{:.6}, {:.6}]]",
            self.xx, self.xy, self.yx, self.yy
        )
    }
}

impl Default for JonesMatrix2 {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl JonesMatrix2 {
    pub const IDENTITY: Self = Self::new(ONE, ZERO, ZERO, ONE);
    pub const ZERO: Self = Self::new(ZERO, ZERO, ZERO, ZERO);

    pub const fn new(xx: Complex, xy: Complex, yx: Complex, yy: Complex) -> Self {
        Self { xx, xy, yx, yy }
    }

    pub fn diag(a: Complex, b: Complex) -> Self {
        Self::new(a, ZERO, ZERO, b)
    }

    pub fn scalar(s: Complex) -> Self {
        Self::diag(s, s)
    }

    pub fn from_rows(r0: [Complex; 2], r1: [Complex; 2]) -> Self {
        Self::new(r0[0], r0[1], r1[0], r1[1])
    }

    pub fn row(&self, r: usize) -> (Complex, Complex) {
        match r {
            0 => (self.xx, self.xy),
            1 => (self.yx, self.yy),
            _ => panic!("row index {r} out of range"),
        }
    }

    pub fn entries(&self) -> [Complex; 4] {
        [self.xx, self.xy, self.yx, self.yy]
    }

    pub fn adjoint(&self) -> Self {
        Self::new(
            self.xx.conj(),
            self.yx.conj(),
            self.xy.conj(),
            self.yy.conj(),
        )
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.xx, self.yx, self.xy, self.yy)
    }

    pub fn det(&self) -> Complex {
        self.xx * self.yy - self.xy * self.yx
    }

    pub fn trace(&self) -> Complex {
        self.xx + self.yy
    }

    /// Adjugate: `adj(J)·J = det(J)·I`.
    pub fn adjugate(&self) -> Self {
        Self::new(self.yy, -self.xy, -self.yx, self.xx)
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.entries().iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    pub fn scale(&self, s: Complex) -> Self {
        Self::new(self.xx * s, self.xy * s, self.yx * s, self.yy * s)
    }

    pub fn is_finite(&self) -> bool {
        self.entries().iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Singular values, largest first.
    pub fn singular_values(&self) -> (f64, f64) {
        let f2 = self.frobenius_sq();
        let d = self.det().norm();
        let disc = (f2 * f2 - 4.0 * d * d).max(0.0).sqrt();
        let s_max = ((f2 + disc) / 2.0).sqrt();
        // Product is exact; avoids cancellation in (f2 - disc).
        let s_min = if s_max > 0.0 { d / s_max } else { 0.0 };
        (s_max, s_min)
    }

    fn check_nonsingular(&self) -> Result<()> {
        let (s_max, s_min) = self.singular_values();
        if !self.is_finite() || s_max == 0.0 || s_min <= SINGULAR_RATIO * s_max {
            return Err(Error::SingularMatrix);
        }
        Ok(())
    }

    pub fn inverse(&self) -> Result<Self> {
        self.check_nonsingular()?;
        let inv_det = self.det().inv();
        Ok(self.adjugate().scale(inv_det))
    }

    /// `‖JᴴJ − I‖_F`.
    pub fn unitarity_error(&self) -> f64 {
        (self.adjoint() * *self - Self::IDENTITY).frobenius()
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_error() <= tol
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (*self - self.adjoint()).frobenius() <= tol * self.frobenius().max(1.0)
    }

    /// Pauli matrix for the given Stokes axis (0 → S1, 1 → S2, 2 → S3).
    pub fn pauli(axis: usize) -> Self {
        match axis {
            0 => Self::diag(ONE, -ONE),
            1 => Self::new(ZERO, ONE, ONE, ZERO),
            2 => Self::new(ZERO, -I, I, ZERO),
            _ => panic!("Stokes axis {axis} out of range"),
        }
    }

    /// `a·σ` with the Pauli matrices ordered to match (S1, S2, S3).
    pub fn pauli_dot(a: [f64; 3]) -> Self {
        Self::new(
            Complex::new(a[0], 0.0),
            Complex::new(a[1], -a[2]),
            Complex::new(a[1], a[2]),
            Complex::new(-a[0], 0.0),
        )
    }

    /// SU(2) element rotating column-vector Stokes states by `angle` about
    /// `axis` (right-handed on the Poincaré sphere).
    pub fn rotation(axis: [f64; 3], angle: f64) -> Self {
        let (s, c) = (angle / 2.0).sin_cos();
        let n = normalize3(axis);
        Self::IDENTITY.scale(Complex::new(c, 0.0)) + Self::pauli_dot(n).scale(Complex::new(0.0, -s))
    }

    /// Hermitian PDL element with `pdl_db` of power-ratio loss along `axis`,
    /// geometric-mean gain 1.
    pub fn pdl(axis: [f64; 3], pdl_db: f64) -> Self {
        let gamma = pdl_db * std::f64::consts::LN_10 / 20.0;
        let n = normalize3(axis);
        Self::IDENTITY.scale(Complex::new((gamma / 2.0).cosh(), 0.0))
            + Self::pauli_dot(n).scale(Complex::new((gamma / 2.0).sinh(), 0.0))
    }

    /// Haar-random element of U(2).
    pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut q = [0.0f64; 4];
        loop {
            for v in q.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 1e-6 {
                q.iter_mut().for_each(|v| *v /= n);
                break;
            }
        }
        let su2 = Self::new(
            Complex::new(q[0], q[1]),
            Complex::new(q[2], q[3]),
            Complex::new(-q[2], q[3]),
            Complex::new(q[0], -q[1]),
        );
        let phi: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        su2.scale(Complex::from_polar(1.0, phi))
    }
}

pub fn normalize3(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    if n == 0.0 {
        return [0.0, 0.0, 1.0];
    }
    [a[0] / n, a[1] / n, a[2] / n]
}

impl Mul for JonesMatrix2 {
    type Output = Self;
    fn mul(self, b: Self) -> Self {
        Self::new(
            self.xx * b.xx + self.xy * b.yx,
            self.xx * b.xy + self.xy * b.yy,
            self.yx * b.xx + self.yy * b.yx,
            self.yx * b.xy + self.yy * b.yy,
        )
    }
}

impl Mul<[Complex; 2]> for JonesMatrix2 {
    type Output = [Complex; 2];
    fn mul(self, v: [Complex; 2]) -> [Complex; 2] {
        [
            self.xx * v[0] + self.xy * v[1],
            self.yx * v[0] + self.yy * v[1],
        ]
    }
}

impl Add for JonesMatrix2 {
    type Output = Self;
    fn add(self, b: Self) -> Self {
        Self::new(self.xx + b.xx, self.xy + b.xy, self.yx + b.yx, self.yy + b.yy)
    }
}

impl Sub for JonesMatrix2 {
    type Output = Self;
    fn sub(self, b: Self) -> Self {
        Self::new(self.xx - b.xx, self.xy - b.xy, self.yx - b.yx, self.yy - b.yy)
    }
}

/// Left polar factors `J = P·U`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarParts {
    /// Hermitian positive-definite factor (the PDL).
    pub hermitian: JonesMatrix2,
    /// Unitary factor (the SoP rotation, including global phase).
    pub unitary: JonesMatrix2,
}

/// Left polar decomposition `J = P·U`, `P = (J·Jᴴ)^½`.
///
/// For a 2×2 matrix with `d = det J` and singular values σ₁, σ₂:
/// `(J·Jᴴ)^½ = (J·Jᴴ + |d|·I)/(σ₁+σ₂)` and
/// `U = (J + (d/|d|)·adj(J)ᴴ)/(σ₁+σ₂)`, with `σ₁+σ₂ = √(‖J‖²_F + 2|d|)`.
pub fn polar_decompose(j: &JonesMatrix2) -> Result<PolarParts> {
    j.check_nonsingular()?;
    let d = j.det();
    let dn = d.norm();
    let s = (j.frobenius_sq() + 2.0 * dn).sqrt();
    let inv_s = Complex::new(1.0 / s, 0.0);
    let phase = d / dn;
    let unitary = (*j + j.adjugate().adjoint().scale(phase)).scale(inv_s);
    let jjh = *j * j.adjoint();
    let mut hermitian = (jjh + JonesMatrix2::scalar(Complex::new(dn, 0.0))).scale(inv_s);
    // Diagonal of J·Jᴴ is real up to rounding; make P exactly Hermitian.
    hermitian.xx.im = 0.0;
    hermitian.yy.im = 0.0;
    let off = (hermitian.xy + hermitian.yx.conj()) * 0.5;
    hermitian.xy = off;
    hermitian.yx = off.conj();
    Ok(PolarParts { hermitian, unitary })
}

/// Eigenvalues of the Hermitian part of `p`, largest first.
pub fn hermitian_eigenvalues(p: &JonesMatrix2) -> (f64, f64) {
    let a = p.xx.re;
    let d = p.yy.re;
    let b = (p.xy + p.yx.conj()) * 0.5;
    let mean = 0.5 * (a + d);
    let disc = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    (mean + disc, mean - disc)
}

/// Polarization-dependent loss of a Hermitian PSD factor, in dB (power ratio).
pub fn pdl_db(p: &JonesMatrix2) -> Result<f64> {
    let (hi, lo) = hermitian_eigenvalues(p);
    if !(lo > 0.0) || !hi.is_finite() || lo <= SINGULAR_RATIO * hi {
        return Err(Error::SingularMatrix);
    }
    Ok(20.0 * (hi / lo).log10())
}

/// Tolerance on unitarity accepted by [`unitary_correlation`].
pub const UNITARY_TOL: f64 = 1e-6;

/// Closeness of two unitary Jones matrices: `C = Tr(U₂ᴴ·U₁)/2`.
///
/// `|C| = 1` exactly when the two differ only by a global phase, and `C` is
/// unchanged when both are rotated by the same static unitary on either side.
pub fn unitary_correlation(u1: &JonesMatrix2, u2: &JonesMatrix2) -> Result<Complex> {
    for u in [u1, u2] {
        let err = u.unitarity_error();
        if !(err <= UNITARY_TOL) {
            return Err(Error::NotUnitary(err));
        }
    }
    Ok((u2.adjoint() * *u1).trace() * 0.5)
}
