//! Declarative run configuration (TOML).
//!
//! Unknown keys are rejected. Every random draw in a run is derived from the
//! single root `seed`.

use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::{Row, Window};
use crate::bridge::StreamConfig;
use crate::channel::{ChannelState, EventSpec};
use crate::error::{Error, Result};
use crate::jones::{Complex, JonesMatrix2};
use crate::rxdsp::RxConfig;
use crate::txsim::TxConfig;

/// Sub-stream indices for [`derive_seed`].
pub mod streams {
    pub const BASE_ROTATION: u64 = 1;
    pub const CHANNEL: u64 = 2;
}

/// Independent 64-bit seed for sub-stream `stream` of a root seed.
pub fn derive_seed(root: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stream);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseRotation {
    #[default]
    Identity,
    /// Haar-random unitary drawn from the root seed.
    Random,
    AxisAngle { axis: [f64; 3], angle: f64 },
    /// Explicit matrix, row-major, split into real and imaginary parts.
    Matrix { re: [[f64; 2]; 2], im: [[f64; 2]; 2] },
}

impl BaseRotation {
    pub fn resolve(&self, root_seed: u64) -> Result<JonesMatrix2> {
        let m = match self {
            BaseRotation::Identity => JonesMatrix2::IDENTITY,
            BaseRotation::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(root_seed, streams::BASE_ROTATION));
                JonesMatrix2::random_unitary(&mut rng)
            }
            BaseRotation::AxisAngle { axis, angle } => {
                if axis.iter().all(|a| *a == 0.0) {
                    return Err(Error::config("channel.base_rotation.axis must be nonzero"));
                }
                JonesMatrix2::rotation(*axis, *angle)
            }
            BaseRotation::Matrix { re, im } => {
                let c = |r: usize, k: usize| Complex::new(re[r][k], im[r][k]);
                JonesMatrix2::new(c(0, 0), c(0, 1), c(1, 0), c(1, 1))
            }
        };
        if !m.is_unitary(1e-9) {
            return Err(Error::config("channel.base_rotation must be unitary"));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub base_rotation: BaseRotation,
    pub pdl_db: f64,
    pub pdl_axis: [f64; 3],
    pub phase_linewidth_hz: f64,
    pub snr_db: f64,
    pub hold_symbols: usize,
    pub time_scale: f64,
    pub truth_interval_symbols: usize,
    pub events: Vec<EventSpec>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        let s = ChannelState::default();
        Self {
            base_rotation: BaseRotation::Identity,
            pdl_db: s.pdl_db,
            pdl_axis: s.pdl_axis,
            phase_linewidth_hz: s.phase_linewidth_hz,
            snr_db: s.snr_db,
            hold_symbols: s.hold_symbols,
            time_scale: s.time_scale,
            truth_interval_symbols: s.truth_interval_symbols,
            events: Vec::new(),
        }
    }
}

impl ChannelConfig {
    pub fn to_state(&self, root_seed: u64) -> Result<ChannelState> {
        let state = ChannelState {
            base_rotation: self.base_rotation.resolve(root_seed)?,
            pdl_db: self.pdl_db,
            pdl_axis: self.pdl_axis,
            events: self.events.clone(),
            phase_linewidth_hz: self.phase_linewidth_hz,
            snr_db: self.snr_db,
            seed: derive_seed(root_seed, streams::CHANNEL),
            hold_symbols: self.hold_symbols,
            time_scale: self.time_scale,
            truth_interval_symbols: self.truth_interval_symbols,
        };
        state.validate()?;
        Ok(state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub segment_len: usize,
    pub overlap: f64,
    pub window: Window,
    /// Fraction of the record whose mean SoP defines the S3 = 1 frame.
    pub align_fraction: f64,
    pub row: Row,
    /// Snapshots dropped from the start while the equalizer converges.
    pub skip_snapshots: usize,
    /// Band searched for a chirp ridge, Hz; none skips the fit.
    pub chirp_band: Option<[f64; 2]>,
    pub peak_prominence_db: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            segment_len: 256,
            overlap: 0.5,
            window: Window::Hann,
            align_fraction: 0.1,
            row: Row::First,
            skip_snapshots: 16,
            chirp_band: None,
            peak_prominence_db: 10.0,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.segment_len < 2 {
            return Err(Error::config("analysis.segment_len must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::config("analysis.overlap must be in [0, 1)"));
        }
        if !(self.align_fraction > 0.0 && self.align_fraction <= 1.0) {
            return Err(Error::config("analysis.align_fraction must be in (0, 1]"));
        }
        if let Some([lo, hi]) = self.chirp_band {
            if !(lo >= 0.0 && lo < hi) {
                return Err(Error::config("analysis.chirp_band must satisfy 0 <= lo < hi"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsConfig {
    pub stream: PathBuf,
    pub truth: PathBuf,
    pub report: PathBuf,
    pub manifest: PathBuf,
}

impl Default for OutputsConfig {
    fn default() -> Self {
        Self {
            stream: "stream.snap".into(),
            truth: "truth.csv".into(),
            report: "report.json".into(),
            manifest: "manifest.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub n_symbols: u64,
    pub tx: TxConfig,
    pub channel: ChannelConfig,
    pub rx: RxConfig,
    pub bridge: StreamConfig,
    pub analysis: AnalysisConfig,
    pub outputs: OutputsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_symbols: 100_000,
            tx: TxConfig::default(),
            channel: ChannelConfig::default(),
            rx: RxConfig::default(),
            bridge: StreamConfig::default(),
            analysis: AnalysisConfig::default(),
            outputs: OutputsConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parse and validate.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_symbols == 0 {
            return Err(Error::config("n_symbols must be positive"));
        }
        self.tx.validate()?;
        self.rx.validate()?;
        self.bridge.validate()?;
        self.analysis.validate()?;
        self.channel_state()?;
        Ok(())
    }

    pub fn channel_state(&self) -> Result<ChannelState> {
        self.channel.to_state(self.seed)
    }

    /// Snapshot rate on the event clock before bridge decimation, Hz.
    pub fn snapshot_rate_hz(&self) -> f64 {
        self.tx.symbol_rate / self.rx.snapshot_interval as f64 / self.channel.time_scale
    }

    /// Bridge settings with the native rate filled in from the link.
    pub fn stream_config(&self) -> StreamConfig {
        StreamConfig {
            native_rate_hz: self.snapshot_rate_hz(),
            ..self.bridge.clone()
        }
    }
}
