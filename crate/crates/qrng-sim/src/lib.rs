//! Simulator and analysis toolkit for a gated photon-counting quantum
//! random number generator.
//!
//! The modelled apparatus is a pulsed laser attenuated to the few-photon
//! level, firing into a gated avalanche photodiode. Photon numbers per
//! pulse are Poissonian, so with detection efficiency `eta` and mean
//! photon number `lambda` the no-click probability of a gate is
//! `exp(-eta * lambda)`; tuning the attenuator to `eta * lambda = ln 2`
//! makes click and no-click equally likely and each gate yields one raw
//! random bit.
//!
//! Modules follow the signal path:
//!
//! * [`optics`]: closed-form photon statistics, power-to-photon-number
//!   conversion, and the attenuator balance condition.
//! * [`detector`]: gated detector model with efficiency thinning, dark
//!   counts, afterpulsing with exponential memory, and dead time.
//! * [`acquisition`]: the per-gate simulation engine, gate-delay scans,
//!   and the attenuator calibration loop.
//! * [`extraction`]: decimation and the von Neumann / Peres debiasers.
//! * [`stats`]: serial correlation, correlograms, and an ENT-style
//!   battery (entropy, chi-square, arithmetic mean, Monte Carlo pi).
//!
//! Every simulated stream is a pure function of its configuration and a
//! 64-bit seed; see [`seed`] for the replica-derivation scheme.

pub mod acquisition;
pub mod bitstream;
pub mod detector;
mod error;
pub mod extraction;
pub mod optics;
pub mod seed;
pub mod stats;

pub use bitstream::BitStream;
pub use error::{Error, Result};
