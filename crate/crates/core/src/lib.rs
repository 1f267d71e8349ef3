//! Synthetic MF R-Mode signal generation, CW ranging-tone phase extraction and
//! skywave ground-truth labeling.
//!
//! The crate is organized along the processing chain:
//!
//! - [`propagation`]: great-circle distance, single-hop skywave excess delay and
//!   the phasor combination of groundwave and skywave.
//! - [`solar`]: sunrise/sunset and the per-day daytime windows that feed the
//!   labeler's statistics pool.
//! - [`labeler`]: three-day daytime Z-score labeling of phase series.
//! - [`sim`]: MSK + CW waveform synthesis, the time-domain two-path channel and
//!   whole-campaign phase synthesis.
//! - [`estimator`]: per-epoch tone phase/amplitude extraction from IQ.
//! - [`dataio`]: phase-log, label and IQ file formats.

pub mod dataio;
pub mod error;
pub mod estimator;
pub mod labeler;
pub mod phase;
pub mod propagation;
pub mod sim;
pub mod solar;

pub use error::{Error, Result};
