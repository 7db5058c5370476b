//! Behavioral Monte-Carlo model of memory-in-logic PUF cells.
//!
//! A cell is a bistable element whose power-up value is decided by the sign
//! of its static mismatch plus a systematic offset plus readout noise. The
//! crate generates seeded device populations, reads signatures under a given
//! environment, enrolls golden references, masks biased positions and
//! computes the usual signature-quality metrics (inter-HD, intra-HD, bias
//! colormaps, histograms and robustness sweeps).

pub mod bits;
pub mod entropy;
pub mod error;
pub mod metrics;
pub mod population;
pub mod rng;
pub mod signature;

pub use bits::{BitVector, PositionMask};
pub use entropy::{EnvironmentCondition, NoiseCalibration, PowerUpOutcome};
pub use error::{Error, Result};
pub use metrics::MetricReport;
pub use population::{DevicePopulation, PlacementConfig, PlacementKind, PopulationSpec};
pub use signature::{GoldenSignature, ReadoutSession, SignatureSet};
