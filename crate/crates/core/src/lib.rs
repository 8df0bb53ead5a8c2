//! Bit-accurate model of a coherent dual-polarization QPSK transceiver whose
//! adaptive equalizer doubles as a polarization and phase sensor.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analytics;
pub mod bridge;
pub mod channel;
pub mod config;
pub mod error;
pub mod exec;
pub mod fixed;
pub mod jones;
pub mod pipeline;
pub mod rxdsp;
pub mod selftest;
pub mod stokes;
pub mod txsim;

pub use error::{Error, Result};
pub use exec::Exec;
pub use jones::{Complex, JonesMatrix2};
