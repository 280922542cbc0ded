//! Time-domain Maxwell-Bloch dynamics of the cavity and a discretised spin
//! line, plus the pulse experiments built on it.

mod discretize;
mod experiments;
mod integrate;

pub use discretize::{
    discretize_ensemble, discretize_with, DiscretizationOptions, EnsembleDiscretization,
    Lineshape, Sampling, SpinPacket,
};
pub use experiments::{
    calibrate_pi_pulse, maximize_first_peak, simulate_echo, simulate_fid, simulate_hahn_echo,
    EchoResult, EchoSequence, FidResult, PiCalibration, ECHO_HALF_WINDOW,
};
pub use integrate::{
    integrate, DynamicsModel, EnsembleState, IntegrationSettings, Integrator, PulseSegment,
    PulseSequence, SimulationTrace, TimedPulse,
};

pub(crate) use experiments::find_echo_in;
