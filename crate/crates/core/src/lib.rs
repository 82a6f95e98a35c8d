//! End-to-end simulation and analysis of two-photon quantum interference on a
//! lossy scattering beamsplitter.
//!
//! The crate covers the whole chain of a Hong-Ou-Mandel measurement on a
//! plasmonic splitter:
//!
//! - [`fock`]: exact two-mode Fock-space model of the splitter, with photon
//!   loss as per-photon amplitude damping,
//! - [`wavepacket`]: top-hat spectral profiles, delay-dependent wavepacket
//!   overlap and the analytic coincidence dip,
//! - [`plasmonics`]: stripe-waveguide propagation loss and Bragg-reflector
//!   splitting-ratio characterization,
//! - [`event`]: Monte Carlo generation of time-tagged detection streams,
//! - [`tags`]: the `HTAG` binary time-tag file format,
//! - [`analysis`]: coincidence counting, accidental subtraction, visibility
//!   and dip fitting,
//! - [`fit`]: the damped Gauss-Newton least-squares engine behind the fits.

// Validation sites use `!(x > 0.0)` so NaN fails closed.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod event;
pub mod fit;
pub mod fock;
pub mod plasmonics;
pub mod tags;
pub mod units;
pub mod wavepacket;

pub use analysis::{CoincidenceResult, DipFit, Measured, Verdict};
pub use error::{Error, Result};
pub use event::{Channel, DetectorModel, SourceConfig, TimeTagRecord};
pub use fock::{BeamsplitterParams, LossParams, OverlapParam, TwoModeFockState};
pub use wavepacket::{DelayScan, SpectralProfile};
