//! Thin re-exports of `libm` so the rest of the crate reads like `std` code.

pub(crate) use core::f64::consts::{PI, TAU};
pub(crate) use libm::{atan, cos, erf, exp, expm1, log, sin, sqrt, tan};

