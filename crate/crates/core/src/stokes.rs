//! Stokes vectors and rotations on the Poincaré sphere.
//!
//! Sign convention for a field `(a, b)`:
//! `S1 = |a|²−|b|²`, `S2 = 2·Re(a·b̄)`, `S3 = −2·Im(a·b̄)`, all divided by
//! `S0 = |a|²+|b|²`. Tools using the opposite handedness should flip `S3`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jones::Complex;

/// Power below which a row is treated as carrying no field.
pub const MIN_POWER: f64 = 1e-18;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StokesVector {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesVector {
    pub fn unit(&self) -> [f64; 3] {
        [self.s1, self.s2, self.s3]
    }

    pub fn norm(&self) -> f64 {
        norm3(self.unit())
    }
}

pub fn stokes_from_row(a: Complex, b: Complex) -> Result<StokesVector> {
    let pa = a.norm_sqr();
    let pb = b.norm_sqr();
    let s0 = pa + pb;
    if !(s0 > MIN_POWER) || !s0.is_finite() {
        return Err(Error::ZeroPower);
    }
    let cross = a * b.conj();
    let s1 = (pa - pb) / s0;
    let s2 = 2.0 * cross.re / s0;
    let s3 = -2.0 * cross.im / s0;
    // Renormalize away the last few ulps so |s| = 1 holds tightly.
    let n = norm3([s1, s2, s3]);
    Ok(StokesVector {
        s0,
        s1: s1 / n,
        s2: s2 / n,
        s3: s3 / n,
    })
}

pub fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

/// Real 3×3 rotation matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3(pub [[f64; 3]; 3]);

impl Rotation3 {
    pub const IDENTITY: Self = Self([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    /// Rodrigues rotation by `angle` about unit `axis` (right-handed).
    pub fn axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let n = norm3(axis);
        let [x, y, z] = if n > 0.0 {
            [axis[0] / n, axis[1] / n, axis[2] / n]
        } else {
            return Self::IDENTITY;
        };
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        Self([
            [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
            [y * x * t + z * s, c + y * y * t, y * z * t - x * s],
            [z * x * t - y * s, z * y * t + x * s, c + z * z * t],
        ])
    }

    /// Rotation taking the direction of `v` onto +S3.
    pub fn to_north(v: [f64; 3]) -> Self {
        let n = norm3(v);
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let u = [v[0] / n, v[1] / n, v[2] / n];
        let z = [0.0, 0.0, 1.0];
        let c = dot3(u, z).clamp(-1.0, 1.0);
        let axis = cross3(u, z);
        if norm3(axis) < 1e-12 {
            return if c > 0.0 {
                Self::IDENTITY
            } else {
                Self::axis_angle([1.0, 0.0, 0.0], std::f64::consts::PI)
            };
        }
        Self::axis_angle(axis, c.acos())
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            dot3(m[0], v),
            dot3(m[1], v),
            dot3(m[2], v),
        ]
    }
}
