//! Pulse calibration, spin echoes and free-induction decay.

use alloc::vec::Vec;

use num_complex::Complex64;

use super::discretize::EnsembleDiscretization;
use super::integrate::{
    DynamicsModel, EnsembleState, IntegrationSettings, Integrator, PulseSequence,
    SimulationTrace, TimedPulse,
};
use crate::fitting::{least_squares, FitProblem, Parameter};
use crate::math::{cos, exp, sin, sqrt, PI};
use crate::{Error, Result};

/// Half width of the echo search window around the expected echo time.
pub const ECHO_HALF_WINDOW: f64 = 300e-9;

/// Cavity ring-down allowed after a calibration pulse before the central
/// packet's inversion is read, in units of `1/kappa`.
const CALIBRATION_RINGDOWN: f64 = 8.0;

/// Finds the first local maximum of `f` on a geometric grid over `[lo, hi]`
/// that exceeds `threshold`, then refines it by golden-section search.
/// Returns `(x, f(x), found)`; when nothing exceeds the threshold the best
/// grid point is returned with `found = false`.
pub fn maximize_first_peak<F>(mut f: F, lo: f64, hi: f64, points: usize, threshold: f64) -> Result<(f64, f64, bool)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let points = points.max(3);
    let ratio = libm::pow(hi / lo, 1.0 / (points - 1) as f64);
    let xs: Vec<f64> = (0..points).map(|i| lo * libm::pow(ratio, i as f64)).collect();
    let mut ys: Vec<f64> = Vec::with_capacity(points);
    let mut bracket = None;
    for (i, &x) in xs.iter().enumerate() {
        ys.push(f(x)?);
        if i >= 2 && ys[i - 1] > ys[i - 2] && ys[i - 1] >= ys[i] && ys[i - 1] > threshold {
            bracket = Some((xs[i - 2], xs[i]));
            break;
        }
    }
    let Some((mut a, mut b)) = bracket else {
        let (i, &y) = ys
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("at least three samples");
        return Ok((xs[i], y, false));
    };
    let phi = 0.5 * (sqrt(5.0) - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..40 {
        if (b - a) < 1e-7 * b {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d)?;
        }
    }
    let (x, y) = if fc > fd { (c, fc) } else { (d, fd) };
    Ok((x, y, true))
}

/// A calibrated rectangular pulse: `amplitude` (sqrt(photons/s)) applied for
/// `duration` rotates the central packet as close to `s_z = +1` as the
/// coupled dynamics allow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiCalibration {
    pub duration: f64,
    pub amplitude: f64,
    pub achieved_sz: f64,
}

impl PiCalibration {
    /// Pulse giving flip angle `theta` by scaling the duration.
    pub fn pulse(&self, theta: f64, centre: f64, phase: f64) -> TimedPulse {
        let width = self.duration * theta / PI;
        TimedPulse {
            t_start: centre - 0.5 * width,
            width,
            drive: Complex64::from_polar(self.amplitude, phase),
        }
    }
}

/// Inversion of the central packet after a rectangular pulse and ring-down.
fn central_inversion(
    model: &DynamicsModel,
    disc: &EnsembleDiscretization,
    settings: IntegrationSettings,
    duration: f64,
    amplitude: f64,
) -> Result<f64> {
    let mut it = Integrator::new(model, disc, settings)?;
    let centre = disc.central_index();
    let drive = Complex64::new(amplitude, 0.0);
    let pulse_steps = super::integrate::segment_steps(duration, settings.dt);
    for _ in 0..pulse_steps {
        it.step(drive)?;
    }
    let ring = super::integrate::segment_steps(CALIBRATION_RINGDOWN / model.resonator.kappa, settings.dt);
    for _ in 0..ring {
        it.step(Complex64::new(0.0, 0.0))?;
    }
    Ok(it.state().s_z[centre])
}

/// Searches the drive amplitude of a rectangular `duration` pulse that
/// inverts the central packet.
pub fn calibrate_pi_pulse(
    model: &DynamicsModel,
    disc: &EnsembleDiscretization,
    duration: f64,
    settings: IntegrationSettings,
) -> Result<PiCalibration> {
    if !(duration > 0.0) {
        return Err(Error::arg("duration", "pulse duration must be positive"));
    }
    let r = &model.resonator;
    if !(r.kappa_ext_in > 0.0) {
        return Err(Error::arg("kappa_ext_in", "cannot drive a cavity without an input port"));
    }
    // Bare-cavity estimate: Rabi rate 2 g |alpha| with alpha = sqrt(k_in) beta / kappa.
    let g = disc.rabi_coupling();
    let guess = PI / (2.0 * g * duration) * r.kappa / sqrt(r.kappa_ext_in);
    let (amplitude, achieved_sz, found) = maximize_first_peak(
        |a| central_inversion(model, disc, settings, duration, a),
        0.2 * guess,
        20.0 * guess,
        60,
        0.0,
    )?;
    if !found {
        return Err(Error::CalibrationFailed {
            best_amplitude: amplitude,
            best_sz: achieved_sz,
        });
    }
    Ok(PiCalibration {
        duration,
        amplitude,
        achieved_sz,
    })
}

/// Two-pulse sequence: flip angles and phases of both pulses, centres
/// separated by `tau`. The first pulse is centred at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EchoSequence {
    pub tau: f64,
    pub first_angle: f64,
    pub second_angle: f64,
    pub first_phase: f64,
    pub second_phase: f64,
}

impl EchoSequence {
    pub fn hahn(tau: f64, theta2: f64) -> Self {
        Self {
            tau,
            first_angle: PI / 2.0,
            second_angle: theta2,
            first_phase: 0.0,
            second_phase: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EchoResult {
    pub trace: SimulationTrace,
    /// Time of the maximum of `|a_out|` in the echo window, measured from
    /// the centre of the first pulse.
    pub echo_time: f64,
    pub echo_amplitude: f64,
    /// `int |a_out|^2 dt` over the window (photons).
    pub echo_energy: f64,
    /// Phase of `a_out` at the echo maximum (rad).
    pub echo_phase: f64,
    /// False when the maximum sits on the window edge, i.e. no echo peak.
    pub present: bool,
}

/// Finds an echo in `[t_expected - half_window, t_expected + half_window]`:
/// the largest interior local maximum of `|a_out|`. Returns
/// `(time, amplitude, energy, phase, present)`.
pub(crate) fn find_echo(trace: &SimulationTrace, t_expected: f64, half_window: f64) -> (f64, f64, f64, f64, bool) {
    find_echo_in(&trace.a_out, trace, t_expected, half_window)
}

/// As [`find_echo`] on an arbitrary signal sampled like `trace`.
pub(crate) fn find_echo_in(
    signal: &[Complex64],
    trace: &SimulationTrace,
    t_expected: f64,
    half_window: f64,
) -> (f64, f64, f64, f64, bool) {
    let range = trace.window(t_expected - half_window, t_expected + half_window);
    let (lo, hi) = (range.start, range.end.min(signal.len()));
    let energy = super::integrate::trapezoid(&signal[lo..hi.max(lo)], trace.dt);
    let mut best: Option<usize> = None;
    for i in lo + 1..hi.saturating_sub(1) {
        let a = signal[i].norm();
        if a > signal[i - 1].norm() && a >= signal[i + 1].norm() && best.is_none_or(|b| a > signal[b].norm()) {
            best = Some(i);
        }
    }
    match best {
        Some(i) => (trace.time(i), signal[i].norm(), energy, signal[i].arg(), true),
        None => (t_expected, 0.0, energy, 0.0, false),
    }
}

/// Runs an arbitrary two-pulse echo sequence and looks for the echo at
/// `2 tau`, integrating until `2 tau + tail`.
pub fn simulate_echo(
    model: &DynamicsModel,
    disc: &EnsembleDiscretization,
    cal: &PiCalibration,
    seq: &EchoSequence,
    settings: IntegrationSettings,
    tail: f64,
) -> Result<EchoResult> {
    if !(seq.first_angle > 0.0 && seq.first_angle <= PI) {
        return Err(Error::arg("first_angle", "flip angle must lie in (0, pi]"));
    }
    if !(seq.second_angle > 0.0 && seq.second_angle <= PI) {
        return Err(Error::arg("theta2", "flip angle must lie in (0, pi]"));
    }
    let p1 = cal.pulse(seq.first_angle, 0.0, seq.first_phase);
    let p2 = cal.pulse(seq.second_angle, seq.tau, seq.second_phase);
    if !(seq.tau > p1.width.max(p2.width)) {
        return Err(Error::arg("tau", "pulse separation must exceed the pulse widths"));
    }
    let t_end = 2.0 * seq.tau + tail;
    let pulses = PulseSequence::from_pulses(p1.t_start, &[p1, p2], t_end)?;
    let mut it = Integrator::with_state(
        model,
        disc,
        settings,
        EnsembleState::ground(disc.len()),
        p1.t_start,
    )?;
    let trace = it.run(&pulses)?;
    let (echo_time, echo_amplitude, echo_energy, echo_phase, present) =
        find_echo(&trace, 2.0 * seq.tau, ECHO_HALF_WINDOW);
    Ok(EchoResult {
        trace,
        echo_time,
        echo_amplitude,
        echo_energy,
        echo_phase,
        present,
    })
}

/// `pi/2 - tau - theta2` Hahn echo, integrated to `2 tau + 1 us`.
pub fn simulate_hahn_echo(
    model: &DynamicsModel,
    disc: &EnsembleDiscretization,
    cal: &PiCalibration,
    tau: f64,
    theta2: f64,
    settings: IntegrationSettings,
) -> Result<EchoResult> {
    simulate_echo(model, disc, cal, &EchoSequence::hahn(tau, theta2), settings, 1e-6)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FidResult {
    /// 1/e time of the fitted exponential envelope (s).
    pub t2_star: f64,
    /// RMS of the envelope fit residual relative to the initial amplitude.
    pub relative_rms_residual: f64,
    /// False when the residual shows the decay is not exponential.
    pub exponential: bool,
    pub trace: SimulationTrace,
}

/// Residual threshold separating exponential from non-exponential decay.
const FID_EXPONENTIAL_TOLERANCE: f64 = 0.01;

/// Free-induction decay of the bare ensemble after a weak hard pulse of
/// `tip_angle` applied to all packets. The spins do not radiate back into
/// the cavity here, so the envelope of `sum c_k s_k` is set by the line
/// alone. Lumped tail packets (multiplicity above one) are left in the
/// ground state: the far-wing spins they represent dephase within about
/// `1 / cutoff`, while a single lumped packet would ring for `T2`.
pub fn simulate_fid(
    model: &DynamicsModel,
    disc: &EnsembleDiscretization,
    settings: IntegrationSettings,
    tip_angle: f64,
) -> Result<FidResult> {
    if !(tip_angle > 0.0 && tip_angle < PI) {
        return Err(Error::arg("tip_angle", "tip angle must lie in (0, pi)"));
    }
    let tipped: Vec<bool> = disc.multiplicities().map(|m| m < 1.0 + 1e-9).collect();
    let state = EnsembleState {
        alpha: Complex64::new(0.0, 0.0),
        s_minus: tipped
            .iter()
            .map(|&t| if t { Complex64::new(0.0, -0.5 * sin(tip_angle)) } else { Complex64::new(0.0, 0.0) })
            .collect(),
        s_z: tipped.iter().map(|&t| if t { -cos(tip_angle) } else { -1.0 }).collect(),
    };
    let mut settings = settings;
    settings.cavity_feedback = false;
    let span = 10.0 / (disc.gamma2_star + model.gamma2_h);
    let mut it = Integrator::with_state(model, disc, settings, state, 0.0)?;
    let trace = it.run_free(span)?;

    let m0 = trace.magnetization[0].norm();
    if !(m0 > 0.0) {
        return Err(Error::arg("discretization", "ensemble has no coupling to observe"));
    }
    let envelope: Vec<f64> = trace.magnetization.iter().map(|m| m.norm() / m0).collect();
    let last = envelope[envelope.len() - 1];
    if last > 0.5 {
        return Err(Error::NoConvergence {
            what: "free-induction decay (envelope does not decay; check the discretisation)",
        });
    }
    // Fit down to 5 % of the initial amplitude.
    let cut = envelope
        .iter()
        .position(|&e| e < 0.05)
        .unwrap_or(envelope.len());
    if cut < 4 {
        return Err(Error::NoConvergence {
            what: "free-induction decay (decay faster than the sampling)",
        });
    }
    let t: Vec<f64> = (0..cut).map(|i| trace.time(i)).collect();
    let y = &envelope[..cut];
    let guess = t
        .iter()
        .zip(y)
        .find(|(_, &e)| e < exp(-1.0))
        .map(|(&t, _)| t)
        .unwrap_or(t[cut - 1]);
    let problem = FitProblem::new(
        alloc::vec![
            Parameter::new("amplitude", 1.0, 0.0, 10.0),
            Parameter::new("t2_star", guess, 1e-3 * guess, 1e3 * guess),
        ],
        |p: &[f64], out: &mut [f64]| {
            for ((o, &ti), &yi) in out.iter_mut().zip(&t).zip(y) {
                *o = p[0] * exp(-ti / p[1]) - yi;
            }
        },
        cut,
    )?;
    let fit = least_squares(&problem)?;
    let rms = sqrt(fit.cost / cut as f64);
    Ok(FidResult {
        t2_star: fit.params[1],
        relative_rms_residual: rms,
        exponential: rms < FID_EXPONENTIAL_TOLERANCE,
        trace,
    })
}
