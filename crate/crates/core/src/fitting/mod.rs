//! Least-squares engine and the model fits built on it.

mod linalg;
mod lm;
mod routines;

pub use linalg::{cholesky_solve, symmetric_eigen, SquareMatrix};
pub use lm::{least_squares, least_squares_with, FitProblem, FitResult, LmSettings, Parameter};
pub use routines::{
    fit_avoided_crossing, fit_echo_decay, fit_resonator, fit_t2_temperature, fit_theta2,
    CrossingFit, CrossingResidual, EchoDecayFit, EchoDecayOptions, ResonatorFit,
    ECHO_DECAY_MIN_POINTS,
};
