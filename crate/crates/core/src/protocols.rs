//! Multi-pulse storage and retrieval, and the mode-capacity estimates.
//!
//! A train of weak pulses is written into the ensemble, a single refocusing
//! pulse at `t_R` reverses the dephasing and each input `j` comes back as an
//! echo at `2 t_R - t_j`, so the train is read out in reverse order.
//!
//! The refocusing pulse leaves its own transient in the output, which does
//! not depend on the stored pulses. By default the same readout is also
//! simulated with an empty memory and subtracted; what remains is the echo
//! signal alone. The subtraction is exact to first order in the input
//! amplitude.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::decoherence::{eseem_envelope, EseemParams};
use crate::dynamics::{
    find_echo_in, DynamicsModel, EnsembleDiscretization, EnsembleState, IntegrationSettings,
    Integrator, PiCalibration, PulseSequence, SimulationTrace, TimedPulse,
};
use crate::math::{log, PI};
use crate::{Error, Result};

/// Largest `|s_z + 1|` after write-in that still counts as linear.
pub const LINEAR_GUARD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryExperiment {
    pub n_pulses: usize,
    /// Width of each input pulse (s).
    pub pulse_width: f64,
    /// Centre-to-centre spacing of the inputs (s); the first is centred at 0.
    pub pulse_spacing: f64,
    /// Input amplitude as a fraction of the calibrated pi-pulse amplitude.
    pub input_amplitude: f64,
    /// Phase of every input pulse (rad).
    pub input_phase: f64,
    /// Centre of the refocusing pi pulse (s).
    pub refocus_time: f64,
    /// Extra time simulated after the last expected echo (s).
    pub tail: f64,
    /// Subtract an empty-memory reference run before extracting echoes.
    pub subtract_reference: bool,
}

impl MemoryExperiment {
    /// Sixteen 10 ns pulses 250 ns apart, refocused at 7 us.
    ///
    /// The refocusing pulse leaves the line inverted above the masing
    /// threshold; the inversion collapses in a burst that takes about 2 us
    /// to ring down. With these timings the first echo arrives 3.25 us after
    /// the refocusing pulse, and the longest storage time still exceeds `T2`.
    /// The input amplitude keeps the write-in well inside the linear regime,
    /// where the echoes also stay linear through the burst.
    pub fn sixteen_pulse() -> Self {
        Self {
            n_pulses: 16,
            pulse_width: 10e-9,
            pulse_spacing: 250e-9,
            input_amplitude: 0.0005,
            input_phase: 0.0,
            refocus_time: 7.0e-6,
            tail: 300e-9,
            subtract_reference: true,
        }
    }

    pub fn input_centre(&self, j: usize) -> f64 {
        j as f64 * self.pulse_spacing
    }

    pub fn expected_echo_time(&self, j: usize) -> f64 {
        2.0 * self.refocus_time - self.input_centre(j)
    }

    /// End of the simulated span.
    pub fn span(&self) -> f64 {
        self.expected_echo_time(0) + 0.5 * self.pulse_spacing + self.tail
    }

    /// Checks the geometry against a pi pulse of width `pi_width`.
    pub fn validate(&self, pi_width: f64) -> Result<()> {
        if self.n_pulses == 0 {
            return Err(Error::arg("n_pulses", "at least one input pulse is required"));
        }
        if !(self.pulse_width > 0.0) {
            return Err(Error::arg("pulse_width", "must be positive"));
        }
        if !(self.input_amplitude > 0.0) || !self.input_amplitude.is_finite() {
            return Err(Error::arg("input_amplitude", "must be positive"));
        }
        if !(self.tail >= 0.0) {
            return Err(Error::arg("tail", "must not be negative"));
        }
        if self.n_pulses > 1 && !(self.pulse_spacing > self.pulse_width) {
            return Err(Error::Config("input pulses overlap"));
        }
        let last_end = self.input_centre(self.n_pulses - 1) + 0.5 * self.pulse_width;
        if !(self.refocus_time - 0.5 * pi_width > last_end) {
            return Err(Error::Config("input pulses must end before the refocusing pulse"));
        }
        // The first echo window must start after the refocusing pulse.
        let first_echo = self.expected_echo_time(self.n_pulses - 1);
        if !(first_echo - 0.5 * self.window_half_width() > self.refocus_time + 0.5 * pi_width) {
            return Err(Error::Config("echo windows overlap the refocusing pulse"));
        }
        Ok(())
    }

    /// Half width of each echo window.
    pub fn window_half_width(&self) -> f64 {
        if self.n_pulses > 1 {
            0.5 * self.pulse_spacing
        } else {
            crate::dynamics::ECHO_HALF_WINDOW
        }
    }

    fn input_pulses(&self, pi_amplitude: f64) -> Vec<TimedPulse> {
        let drive = Complex64::from_polar(self.input_amplitude * pi_amplitude, self.input_phase);
        (0..self.n_pulses)
            .map(|j| TimedPulse {
                t_start: self.input_centre(j) - 0.5 * self.pulse_width,
                width: self.pulse_width,
                drive,
            })
            .collect()
    }
}

/// One stored pulse and its echo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoredPulse {
    pub t_in: f64,
    /// Input energy `int |beta|^2 dt` (photons).
    pub e_in: f64,
    pub t_echo: f64,
    /// Echo energy in its window (photons).
    pub e_echo: f64,
    pub amp_echo: f64,
    pub efficiency: f64,
    pub present: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryResult {
    pub pulses: Vec<StoredPulse>,
    /// `order[k]` is the input index of the `k`-th echo in time.
    pub order: Vec<usize>,
    /// Efficiency of the echo whose delay from its input is closest to `T2`.
    pub efficiency_at_t2_delay: f64,
    /// Efficiency of the echo emitted closest to `t_R + T2`.
    pub efficiency_at_t2_after_refocus: f64,
    /// Largest `|s_z + 1|` just before the refocusing pulse.
    pub max_write_excitation: f64,
    /// True when the write-in stayed in the linear regime.
    pub linear: bool,
    pub refocus_time: f64,
    /// Raw output trace of the full run.
    pub trace: SimulationTrace,
    /// Output with the empty-memory reference subtracted (equal to the raw
    /// output when subtraction is off).
    pub echo_signal: Vec<Complex64>,
}

impl MemoryResult {
    /// Echo times strictly reversed with respect to the inputs.
    pub fn reversed(&self) -> bool {
        let n = self.order.len();
        self.pulses.iter().all(|p| p.present) && self.order.iter().enumerate().all(|(k, &j)| j == n - 1 - k)
    }

    /// Amplitude decay rate against the pulse-to-echo delay, from a
    /// log-linear fit of the peak amplitudes over the present echoes.
    /// Returns `None` with fewer than two echoes.
    pub fn amplitude_decay_rate(&self) -> Option<f64> {
        log_slope(
            self.pulses
                .iter()
                .filter(|p| p.present && p.amp_echo > 0.0)
                .map(|p| (p.t_echo - p.t_in, log(p.amp_echo))),
        )
        .map(|s| -s)
    }

    /// Decay rate of the echo field envelope `sqrt(E_echo)` against the
    /// storage time `t_R - t_in`. A pulse stored for `t` dephases for `2t`,
    /// so this is `2 / T2` for a pure exponential.
    pub fn envelope_decay_rate(&self) -> Option<f64> {
        log_slope(
            self.pulses
                .iter()
                .filter(|p| p.present && p.e_echo > 0.0)
                .map(|p| (self.refocus_time - p.t_in, 0.5 * log(p.e_echo))),
        )
        .map(|s| -s)
    }

    /// Echo amplitudes multiplied by the ESEEM envelope at the storage time
    /// of each pulse, for comparison with data that include the nuclear bath.
    pub fn with_eseem(&self, refocus_time: f64, params: &EseemParams) -> Result<Vec<f64>> {
        self.pulses
            .iter()
            .map(|p| Ok(p.amp_echo * eseem_envelope(refocus_time - p.t_in, params)?))
            .collect()
    }
}

/// Runs the storage experiment. `t2` only selects which echoes are quoted
/// as the efficiency at `T2`.
pub fn run_memory(
    model: &DynamicsModel,
    disc: &EnsembleDiscretization,
    cal: &PiCalibration,
    exp: &MemoryExperiment,
    settings: IntegrationSettings,
    t2: f64,
) -> Result<MemoryResult> {
    exp.validate(cal.duration)?;
    if !(t2 > 0.0) {
        return Err(Error::arg("t2", "must be positive"));
    }
    let inputs = exp.input_pulses(cal.amplitude);
    let pi = cal.pulse(PI, exp.refocus_time, 0.0);
    let t0 = inputs[0].t_start;
    let t_end = exp.span();

    let write = PulseSequence::from_pulses(t0, &inputs, pi.t_start)?;
    let mut it = Integrator::with_state(model, disc, settings, EnsembleState::ground(disc.len()), t0)?;
    let mut trace = it.run(&write)?;
    it.idle_to_sample_grid()?;
    let max_write_excitation = it.state().s_z.iter().map(|z| (z + 1.0).abs()).fold(0.0, f64::max);
    let split = it.time();
    let read = PulseSequence::from_pulses(split, &[pi], t_end)?;
    let readout = it.run(&read)?;
    trace.append(&readout)?;

    let mut echo_signal = trace.a_out.clone();
    if exp.subtract_reference {
        let mut reference = Integrator::with_state(model, disc, settings, EnsembleState::ground(disc.len()), split)?;
        let empty = reference.run(&read)?;
        // Both runs sample the same grid from `split`; before it the
        // reference is exactly zero.
        let i0 = libm::round((split - trace.t0) / trace.dt) as usize;
        for (s, r) in echo_signal[i0..].iter_mut().zip(&empty.a_out) {
            *s -= *r;
        }
    }

    let half = exp.window_half_width();
    let mut pulses = Vec::with_capacity(exp.n_pulses);
    for (j, p) in inputs.iter().enumerate() {
        let (t_echo, amp, e_echo, _, present) =
            find_echo_in(&echo_signal, &trace, exp.expected_echo_time(j), half);
        let e_in = p.drive.norm_sqr() * p.width;
        pulses.push(StoredPulse {
            t_in: p.centre(),
            e_in,
            t_echo,
            e_echo,
            amp_echo: amp,
            efficiency: e_echo / e_in,
            present,
        });
    }
    let mut order: Vec<usize> = (0..pulses.len()).collect();
    order.sort_by(|&a, &b| pulses[a].t_echo.total_cmp(&pulses[b].t_echo));

    let closest = |key: &dyn Fn(&StoredPulse) -> f64| {
        pulses
            .iter()
            .min_by(|a, b| key(a).abs().total_cmp(&key(b).abs()))
            .map(|p| p.efficiency)
            .unwrap_or(0.0)
    };
    let efficiency_at_t2_delay = closest(&|p| p.t_echo - p.t_in - t2);
    let efficiency_at_t2_after_refocus = closest(&|p| p.t_echo - exp.refocus_time - t2);

    Ok(MemoryResult {
        pulses,
        order,
        efficiency_at_t2_delay,
        efficiency_at_t2_after_refocus,
        max_write_excitation,
        linear: max_write_excitation < LINEAR_GUARD,
        refocus_time: exp.refocus_time,
        trace,
        echo_signal,
    })
}

fn log_slope(points: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let (n, sx, sy, sxx, sxy) = points.fold((0.0, 0.0, 0.0, 0.0, 0.0), |a, (x, y)| {
        (a.0 + 1.0, a.1 + x, a.2 + y, a.3 + x * x, a.4 + x * y)
    });
    let den = n * sxx - sx * sx;
    if n < 2.0 || !(den > 0.0) {
        return None;
    }
    Some((n * sxy - sx * sy) / den)
}

/// Number of temporal modes the memory can hold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeCapacity {
    /// `T2 / T2*`.
    pub n_m: f64,
    /// `T2 / echo width`.
    pub n_eff: f64,
}

pub fn mode_capacity(t2: f64, t2_star: f64, echo_width: f64) -> Result<ModeCapacity> {
    for (name, v) in [("T2", t2), ("T2*", t2_star), ("echo_width", echo_width)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::arg(name, "must be positive and finite"));
        }
    }
    Ok(ModeCapacity {
        n_m: t2 / t2_star,
        n_eff: t2 / echo_width,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capacity_examples() {
        let c = mode_capacity(5.6e-6, 22e-9, 100e-9).unwrap();
        assert!((c.n_eff - 56.0).abs() < 1e-9);
        assert!((c.n_m - 254.545).abs() < 1e-3);
        let same = mode_capacity(5.6e-6, 22e-9, 22e-9).unwrap();
        assert_eq!(same.n_m, same.n_eff);
        assert!(c.n_eff <= c.n_m);
        assert!(mode_capacity(0.0, 22e-9, 1e-9).is_err());
        assert!(mode_capacity(1e-6, f64::NAN, 1e-9).is_err());
    }

    #[test]
    fn small_memory_run() {
        use crate::dynamics::{calibrate_pi_pulse, discretize_ensemble};
        let dev = crate::model::DeviceConfig::er_yso();
        let e = dev.ensemble("s2a").unwrap();
        let model = DynamicsModel::from_device(&dev, "s2a").unwrap();
        let disc = discretize_ensemble(e.v_n, e.gamma2_star, 201, 15.0).unwrap();
        let settings = IntegrationSettings::new(dev.resonator.omega0).with_dt(0.1e-9);
        let cal = calibrate_pi_pulse(&model, &disc, 40e-9, settings).unwrap();
        let exp = MemoryExperiment {
            n_pulses: 3,
            refocus_time: 2.0e-6,
            ..MemoryExperiment::sixteen_pulse()
        };
        let r = run_memory(&model, &disc, &cal, &exp, settings, 5.6e-6).unwrap();
        assert_eq!(r.pulses.len(), 3);
        assert!(r.linear);
        assert_eq!(r.trace.len(), r.echo_signal.len());
        let e_in = (exp.input_amplitude * cal.amplitude).powi(2) * exp.pulse_width;
        for p in &r.pulses {
            assert!((p.e_in / e_in - 1.0).abs() < 1e-12);
            assert!(p.efficiency >= 0.0 && p.efficiency <= 1.0);
        }
        if r.pulses.iter().all(|p| p.present) {
            assert!(r.reversed());
        }
        // Before the refocusing pulse the subtracted signal is the raw one.
        let before = r.trace.window(0.0, 1.0e-6);
        for i in before {
            assert_eq!(r.echo_signal[i], r.trace.a_out[i]);
        }
        assert!(run_memory(&model, &disc, &cal, &exp, settings, 0.0).is_err());
    }

    #[test]
    fn slope_of_a_line() {
        let s = log_slope([(0.0, 1.0), (1.0, -1.0), (2.0, -3.0)].into_iter()).unwrap();
        assert!((s + 2.0).abs() < 1e-12);
        assert!(log_slope([(1.0, 1.0)].into_iter()).is_none());
        assert!(log_slope([(1.0, 1.0), (1.0, 2.0)].into_iter()).is_none());
    }

    #[test]
    fn geometry_checks() {
        let exp = MemoryExperiment::sixteen_pulse();
        exp.validate(40e-9).unwrap();
        assert!((exp.expected_echo_time(15) - (14.0e-6 - 3.75e-6)).abs() < 1e-15);
        let mut late = exp.clone();
        late.refocus_time = 3.76e-6;
        assert!(late.validate(40e-9).is_err());
        let mut crowded = exp.clone();
        crowded.pulse_spacing = 5e-9;
        assert!(crowded.validate(40e-9).is_err());
        let mut none = exp;
        none.n_pulses = 0;
        assert!(none.validate(40e-9).is_err());
    }
}
