//! Semiclassical model of a microwave resonator coupled to inhomogeneously
//! broadened erbium spin sub-ensembles.
//!
//! The crate is `no_std` (it needs `alloc`) and has no IO. It provides
//!
//! * [`model`]: physical constants, the device description and closed-form
//!   thermal/Zeeman utilities,
//! * [`spectroscopy`]: steady-state transmission `S21` and field sweeps,
//! * [`dynamics`]: RK4 Maxwell-Bloch integration of cavity + spin packets,
//!   pulse calibration, Hahn echo and free-induction decay,
//! * [`decoherence`]: closed-form `T2(T)`, ESEEM and instantaneous diffusion
//!   models,
//! * [`fitting`]: a bounded Levenberg-Marquardt engine and the model fits
//!   built on top of it,
//! * [`protocols`]: the multimode echo memory and mode-capacity estimates.
//!
//! Internal rates and frequencies are angular (rad/s) unless a name says
//! otherwise (`*_hz`).

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
pub(crate) mod math;

pub mod decoherence;
pub mod dynamics;
pub mod fitting;
pub mod model;
pub mod protocols;
pub mod spectroscopy;

pub use error::{Error, Result};
pub use num_complex::Complex64;
