//! Fixed-step RK4 integration of the cavity field and spin packets.
//!
//! In a frame rotating at `omega_f`:
//!
//! ```text
//! d alpha/dt = -(kappa + i D_c) alpha - i sum_k c_k s_k + sqrt(k_in) beta(t)
//! d s_k/dt   = -(G_2 + i D_k) s_k + i g alpha z_k
//! d z_k/dt   = -G_1 (z_k + 1) - 4 g Im(conj(alpha) s_k)
//! ```
//!
//! with `D_c = omega0 - omega_f`, `D_k = omega_s + delta_k - omega_f`,
//! `g` the packets' common single-spin coupling and `c_k = g m_k`, where
//! `m_k` is the packet multiplicity (one for regular packets). With equal
//! weights this is the textbook form with `c_k = g_k`. The conserved
//! excitation number of the lossless system is
//! `|alpha|^2 + sum_k m_k (z_k + 1) / 2`.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::discretize::EnsembleDiscretization;
use crate::math::sqrt;
use crate::model::{DeviceConfig, Resonator};
use crate::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// The parts of a device that enter the time-domain model: the cavity and
/// one spin line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsModel {
    pub resonator: Resonator,
    /// Centre of the spin line (rad/s).
    pub spin_frequency: f64,
    /// Homogeneous decoherence rate `1/T2` (1/s).
    pub gamma2_h: f64,
    /// Longitudinal relaxation rate `1/T1` (1/s).
    pub gamma1: f64,
}

impl DynamicsModel {
    pub fn from_device(device: &DeviceConfig, label: &str) -> Result<Self> {
        let e = device
            .ensemble(label)
            .ok_or(Error::arg("ensemble", "no sub-ensemble with that label"))?;
        Ok(Self {
            resonator: device.resonator,
            spin_frequency: e.spin_frequency(device.field),
            gamma2_h: e.gamma2_h,
            gamma1: e.gamma1,
        })
    }

    /// Same model without dissipation (closed cavity, no spin relaxation).
    pub fn lossless(&self) -> Self {
        let mut r = self.resonator;
        r.kappa = 0.0;
        r.kappa_int = 0.0;
        r.kappa_ext_in = 0.0;
        r.kappa_ext_out = 0.0;
        Self {
            resonator: r,
            gamma2_h: 0.0,
            gamma1: 0.0,
            ..*self
        }
    }
}

/// A rectangular drive segment: `drive` is the incoming field amplitude in
/// sqrt(photons/s), constant for `duration` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSegment {
    pub duration: f64,
    pub drive: Complex64,
}

/// A pulse placed on an absolute time axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPulse {
    pub t_start: f64,
    pub width: f64,
    pub drive: Complex64,
}

impl TimedPulse {
    pub fn centre(&self) -> f64 {
        self.t_start + 0.5 * self.width
    }

    pub fn end(&self) -> f64 {
        self.t_start + self.width
    }
}

/// Consecutive drive segments starting at `t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    pub t0: f64,
    pub segments: Vec<PulseSegment>,
}

impl PulseSequence {
    pub fn new(t0: f64) -> Self {
        Self {
            t0,
            segments: Vec::new(),
        }
    }

    pub fn push(&mut self, duration: f64, drive: Complex64) -> Result<&mut Self> {
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::arg("duration", "segment duration must be positive"));
        }
        self.segments.push(PulseSegment { duration, drive });
        Ok(self)
    }

    pub fn idle(&mut self, duration: f64) -> Result<&mut Self> {
        self.push(duration, Complex64::new(0.0, 0.0))
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Builds a sequence from non-overlapping pulses, filling gaps with idle
    /// segments and running until `t_end`.
    pub fn from_pulses(t0: f64, pulses: &[TimedPulse], t_end: f64) -> Result<Self> {
        let mut sorted = pulses.to_vec();
        sorted.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
        let mut seq = Self::new(t0);
        let mut t = t0;
        for p in &sorted {
            if p.t_start < t - 1e-15 {
                return Err(Error::Config("pulses overlap or start before the sequence"));
            }
            if p.t_start > t {
                seq.idle(p.t_start - t)?;
            }
            seq.push(p.width, p.drive)?;
            t = p.end();
        }
        if t_end > t {
            seq.idle(t_end - t)?;
        }
        Ok(seq)
    }
}

/// Cavity field and packet Bloch variables.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    pub alpha: Complex64,
    pub s_minus: Vec<Complex64>,
    pub s_z: Vec<f64>,
}

impl EnsembleState {
    pub fn ground(packets: usize) -> Self {
        Self {
            alpha: Complex64::new(0.0, 0.0),
            s_minus: vec![Complex64::new(0.0, 0.0); packets],
            s_z: vec![-1.0; packets],
        }
    }

    /// Excitation number `|alpha|^2 + sum m_k (z_k + 1) / 2`.
    pub fn excitations(&self, disc: &EnsembleDiscretization) -> f64 {
        let spins: f64 = self
            .s_z
            .iter()
            .zip(disc.multiplicities())
            .map(|(z, m)| m * (z + 1.0) / 2.0)
            .sum();
        self.alpha.norm_sqr() + spins
    }

    /// Largest `(z_k + 1) / 2` over packets.
    pub fn max_excited_fraction(&self) -> f64 {
        self.s_z.iter().map(|z| (z + 1.0) / 2.0).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationSettings {
    /// Step size (s).
    pub dt: f64,
    /// Rotating-frame frequency (rad/s).
    pub frame_frequency: f64,
    /// Record every `decimation`-th step.
    pub decimation: usize,
    /// When false the spins do not radiate into the cavity (the source term
    /// `sum c_k s_k` is dropped from the field equation but still recorded);
    /// used to look at the bare ensemble.
    pub cavity_feedback: bool,
}

impl IntegrationSettings {
    pub const DEFAULT_DT: f64 = 0.05e-9;

    pub fn new(frame_frequency: f64) -> Self {
        Self {
            dt: Self::DEFAULT_DT,
            frame_frequency,
            decimation: 10,
            cavity_feedback: true,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_decimation(mut self, decimation: usize) -> Self {
        self.decimation = decimation;
        self
    }
}

/// Uniformly sampled output of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub t0: f64,
    /// Sample spacing (s), `decimation * dt`.
    pub dt: f64,
    pub alpha: Vec<Complex64>,
    /// Transmitted field `sqrt(k_out) alpha`, sqrt(photons/s).
    pub a_out: Vec<Complex64>,
    /// Ensemble source term `sum_k c_k s_k` (rad/s).
    pub magnetization: Vec<Complex64>,
    /// Incoming drive at each sample.
    pub drive: Vec<Complex64>,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.a_out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a_out.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + self.dt * i as f64
    }

    /// Appends a trace that continues this one on the same sample grid. A
    /// first sample that duplicates the last one is dropped.
    pub fn append(&mut self, other: &SimulationTrace) -> Result<()> {
        if (other.dt - self.dt).abs() > 1e-9 * self.dt {
            return Err(Error::arg("trace", "sample spacing differs"));
        }
        if self.is_empty() {
            *self = other.clone();
            return Ok(());
        }
        let last = self.time(self.len() - 1);
        let skip = if (other.t0 - last).abs() < 0.5 * self.dt {
            1
        } else if (other.t0 - last - self.dt).abs() < 0.5 * self.dt {
            0
        } else {
            return Err(Error::arg("trace", "traces are not contiguous"));
        };
        self.alpha.extend_from_slice(other.alpha.get(skip..).unwrap_or(&[]));
        self.a_out.extend_from_slice(other.a_out.get(skip..).unwrap_or(&[]));
        self.magnetization
            .extend_from_slice(other.magnetization.get(skip..).unwrap_or(&[]));
        self.drive.extend_from_slice(other.drive.get(skip..).unwrap_or(&[]));
        Ok(())
    }

    /// Sample index range covering `[t_lo, t_hi]`, clamped to the trace.
    pub fn window(&self, t_lo: f64, t_hi: f64) -> core::ops::Range<usize> {
        let n = self.len();
        let idx = |t: f64| {
            let x = libm::ceil((t - self.t0) / self.dt - 1e-9);
            if x <= 0.0 {
                0
            } else {
                (x as usize).min(n)
            }
        };
        let lo = idx(t_lo);
        let hi = (libm::floor((t_hi - self.t0) / self.dt + 1e-9).max(-1.0) + 1.0) as usize;
        lo..hi.min(n).max(lo)
    }

    /// Output energy `int |a_out|^2 dt` over `[t_lo, t_hi]` (photons), by the
    /// trapezoid rule.
    pub fn output_energy(&self, t_lo: f64, t_hi: f64) -> f64 {
        trapezoid(&self.a_out[self.window(t_lo, t_hi)], self.dt)
    }

    /// Input energy `int |beta|^2 dt` over `[t_lo, t_hi]` (photons).
    pub fn input_energy(&self, t_lo: f64, t_hi: f64) -> f64 {
        trapezoid(&self.drive[self.window(t_lo, t_hi)], self.dt)
    }
}

pub(crate) fn trapezoid(v: &[Complex64], dt: f64) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let inner: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    let ends = 0.5 * (v[0].norm_sqr() + v[v.len() - 1].norm_sqr());
    (inner - ends) * dt
}

/// Stepper for one simulation. Owns its state; steps are deterministic and
/// the cavity source is always reduced in packet order.
#[derive(Debug, Clone)]
pub struct Integrator {
    settings: IntegrationSettings,
    kappa: f64,
    cavity_detuning: f64,
    sqrt_k_in: f64,
    sqrt_k_out: f64,
    gamma2_h: f64,
    gamma1: f64,
    rabi: f64,
    feedback: f64,
    detunings: Vec<f64>,
    cavity_couplings: Vec<f64>,
    state: EnsembleState,
    steps: u64,
    t0: f64,
    // scratch
    acc_s: Vec<Complex64>,
    acc_z: Vec<f64>,
    tmp_s: Vec<Complex64>,
    tmp_z: Vec<f64>,
}

impl Integrator {
    pub fn new(
        model: &DynamicsModel,
        disc: &EnsembleDiscretization,
        settings: IntegrationSettings,
    ) -> Result<Self> {
        Self::with_state(model, disc, settings, EnsembleState::ground(disc.len()), 0.0)
    }

    pub fn with_state(
        model: &DynamicsModel,
        disc: &EnsembleDiscretization,
        settings: IntegrationSettings,
        state: EnsembleState,
        t0: f64,
    ) -> Result<Self> {
        if !(settings.dt > 0.0) || !settings.dt.is_finite() {
            return Err(Error::arg("dt", "step size must be positive"));
        }
        if settings.decimation == 0 {
            return Err(Error::arg("decimation", "decimation must be at least 1"));
        }
        if state.s_minus.len() != disc.len() || state.s_z.len() != disc.len() {
            return Err(Error::arg("state", "state size does not match the discretisation"));
        }
        model.resonator.validate()?;
        let rabi = disc.rabi_coupling();
        let offset = model.spin_frequency - settings.frame_frequency;
        let cavity_couplings = disc.multiplicities().map(|m| rabi * m).collect();
        let n = disc.len();
        Ok(Self {
            settings,
            kappa: model.resonator.kappa,
            cavity_detuning: model.resonator.omega0 - settings.frame_frequency,
            sqrt_k_in: sqrt(model.resonator.kappa_ext_in),
            sqrt_k_out: sqrt(model.resonator.kappa_ext_out),
            gamma2_h: model.gamma2_h,
            gamma1: model.gamma1,
            rabi,
            feedback: if settings.cavity_feedback { 1.0 } else { 0.0 },
            detunings: disc.packets.iter().map(|p| p.delta + offset).collect(),
            cavity_couplings,
            state,
            steps: 0,
            t0,
            acc_s: vec![Complex64::new(0.0, 0.0); n],
            acc_z: vec![0.0; n],
            tmp_s: vec![Complex64::new(0.0, 0.0); n],
            tmp_z: vec![0.0; n],
        })
    }

    pub fn state(&self) -> &EnsembleState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.t0 + self.steps as f64 * self.settings.dt
    }

    pub fn dt(&self) -> f64 {
        self.settings.dt
    }

    /// Largest rate the step has to resolve; the RK4 step is comfortably
    /// stable while `dt * stiffness < 0.1`.
    pub fn stiffness(&self, drive: f64) -> f64 {
        let max_det = self.detunings.iter().map(|d| d.abs()).fold(0.0, f64::max);
        let rabi = 2.0 * self.rabi * self.sqrt_k_in * drive / self.kappa.max(1.0);
        max_det + self.kappa + rabi
    }

    /// Source term `sum_k c_k s_k`.
    pub fn magnetization(&self) -> Complex64 {
        source(&self.cavity_couplings, &self.state.s_minus)
    }

    fn relaxation_off(&self) -> bool {
        self.gamma1 == 0.0 && self.gamma2_h == 0.0
    }

    /// Advances one RK4 step with constant drive `beta`.
    pub fn step(&mut self, beta: Complex64) -> Result<()> {
        let h = self.settings.dt;
        let n = self.detunings.len();
        let drive = self.sqrt_k_in * beta;
        let cav = Complex64::new(-self.kappa, -self.cavity_detuning);
        let g = self.rabi;
        let g2 = self.gamma2_h;
        let g1 = self.gamma1;

        let fb = self.feedback;
        let alpha0 = self.state.alpha;
        let mut alpha_stage = alpha0;
        let mut src = source(&self.cavity_couplings, &self.state.s_minus);
        let mut alpha_acc = alpha0;

        // (weight in the final sum, offset to the next stage's input)
        const STAGES: [(f64, f64); 4] = [(1.0 / 6.0, 0.5), (1.0 / 3.0, 0.5), (1.0 / 3.0, 1.0), (1.0 / 6.0, 0.0)];
        let mut max_abs_z: f64 = 0.0;
        let mut finite = true;
        for (stage, &(w, next)) in STAGES.iter().enumerate() {
            let d_alpha = cav * alpha_stage - I * fb * src + drive;
            alpha_acc += h * w * d_alpha;
            let alpha_next = alpha0 + h * next * d_alpha;
            let conj_alpha = alpha_stage.conj();
            let i_g_alpha = I * g * alpha_stage;
            let mut src_next = Complex64::new(0.0, 0.0);
            let last = stage == 3;
            for k in 0..n {
                let (s, z) = if stage == 0 {
                    (self.state.s_minus[k], self.state.s_z[k])
                } else {
                    (self.tmp_s[k], self.tmp_z[k])
                };
                let ds = Complex64::new(-g2, -self.detunings[k]) * s + i_g_alpha * z;
                let dz = -g1 * (z + 1.0) - 4.0 * g * (conj_alpha * s).im;
                if stage == 0 {
                    self.acc_s[k] = self.state.s_minus[k] + h * w * ds;
                    self.acc_z[k] = self.state.s_z[k] + h * w * dz;
                } else {
                    self.acc_s[k] += h * w * ds;
                    self.acc_z[k] += h * w * dz;
                }
                if last {
                    let z_new = self.acc_z[k];
                    finite &= z_new.is_finite() && self.acc_s[k].re.is_finite();
                    max_abs_z = max_abs_z.max(z_new.abs());
                } else {
                    let s_next = self.state.s_minus[k] + h * next * ds;
                    self.tmp_s[k] = s_next;
                    self.tmp_z[k] = self.state.s_z[k] + h * next * dz;
                    src_next += self.cavity_couplings[k] * s_next;
                }
            }
            alpha_stage = alpha_next;
            src = src_next;
        }

        if !finite || !alpha_acc.re.is_finite() || !alpha_acc.im.is_finite() {
            return Err(Error::Unstable {
                time: self.time(),
                dt: h,
                max_abs_sz: f64::NAN,
            });
        }
        if self.relaxation_off() && max_abs_z > 1.0 + 1e-6 {
            return Err(Error::Unstable {
                time: self.time(),
                dt: h,
                max_abs_sz: max_abs_z,
            });
        }
        self.state.alpha = alpha_acc;
        core::mem::swap(&mut self.state.s_minus, &mut self.acc_s);
        core::mem::swap(&mut self.state.s_z, &mut self.acc_z);
        self.steps += 1;
        Ok(())
    }

    fn sample(&self, trace: &mut SimulationTrace, beta: Complex64) {
        let a = self.state.alpha;
        trace.alpha.push(a);
        trace.a_out.push(self.sqrt_k_out * a);
        trace.magnetization.push(self.magnetization());
        trace.drive.push(beta);
    }

    /// Runs a whole sequence, recording every `decimation`-th step (and the
    /// initial state). Segment lengths are rounded to whole steps.
    pub fn run(&mut self, seq: &PulseSequence) -> Result<SimulationTrace> {
        let dec = self.settings.decimation;
        let h = self.settings.dt;
        let total_steps: usize = seq
            .segments
            .iter()
            .map(|s| segment_steps(s.duration, h))
            .sum();
        let cap = total_steps / dec + 2;
        let mut trace = SimulationTrace {
            t0: self.time(),
            dt: h * dec as f64,
            alpha: Vec::with_capacity(cap),
            a_out: Vec::with_capacity(cap),
            magnetization: Vec::with_capacity(cap),
            drive: Vec::with_capacity(cap),
        };
        let first = seq.segments.first().map(|s| s.drive).unwrap_or_default();
        self.sample(&mut trace, first);
        let mut count = 0usize;
        for (i, seg) in seq.segments.iter().enumerate() {
            let steps = segment_steps(seg.duration, h);
            for j in 0..steps {
                self.step(seg.drive)?;
                count += 1;
                if count.is_multiple_of(dec) {
                    // A sample on a segment boundary belongs to the next segment.
                    let beta = if j + 1 == steps {
                        seq.segments.get(i + 1).map(|s| s.drive).unwrap_or_default()
                    } else {
                        seg.drive
                    };
                    self.sample(&mut trace, beta);
                }
            }
        }
        Ok(trace)
    }

    /// Steps without drive until the step count is a multiple of the
    /// decimation, so a following [`run`](Self::run) samples on the same grid.
    pub fn idle_to_sample_grid(&mut self) -> Result<()> {
        let dec = self.settings.decimation as u64;
        while !self.steps.is_multiple_of(dec) {
            self.step(Complex64::new(0.0, 0.0))?;
        }
        Ok(())
    }

    /// Runs without drive for `duration`.
    pub fn run_free(&mut self, duration: f64) -> Result<SimulationTrace> {
        let mut seq = PulseSequence::new(self.time());
        seq.idle(duration)?;
        self.run(&seq)
    }
}

#[inline]
fn source(c: &[f64], s: &[Complex64]) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (ck, sk) in c.iter().zip(s) {
        acc += *ck * *sk;
    }
    acc
}

pub(crate) fn segment_steps(duration: f64, dt: f64) -> usize {
    libm::round(duration / dt).max(1.0) as usize
}

/// Integrates `seq` from the ground state.
pub fn integrate(
    model: &DynamicsModel,
    disc: &EnsembleDiscretization,
    seq: &PulseSequence,
    settings: IntegrationSettings,
) -> Result<SimulationTrace> {
    let mut it = Integrator::with_state(model, disc, settings, EnsembleState::ground(disc.len()), seq.t0)?;
    it.run(seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::discretize::discretize_ensemble;
    use crate::model::angular;

    fn small_model() -> (DynamicsModel, EnsembleDiscretization) {
        let r = Resonator::symmetric_from_q(3.721e9, 8.2e6, 400.0).unwrap();
        let model = DynamicsModel {
            resonator: r,
            spin_frequency: r.omega0,
            gamma2_h: 1.0 / 5.6e-6,
            gamma1: 0.1,
        };
        let disc = discretize_ensemble(angular(13.2e6), angular(7.3e6), 101, 15.0).unwrap();
        (model, disc)
    }

    #[test]
    fn ground_state_is_stationary() {
        let (model, disc) = small_model();
        let settings = IntegrationSettings::new(model.resonator.omega0);
        let mut it = Integrator::new(&model, &disc, settings).unwrap();
        for _ in 0..1000 {
            it.step(Complex64::new(0.0, 0.0)).unwrap();
        }
        assert_eq!(it.state().alpha, Complex64::new(0.0, 0.0));
        assert!(it.state().s_z.iter().all(|&z| z == -1.0));
    }

    #[test]
    fn empty_cavity_fills_to_lorentzian_steady_state() {
        let (model, mut disc) = small_model();
        disc.v_n = 0.0;
        for p in &mut disc.packets {
            p.g = 0.0;
        }
        let r = model.resonator;
        let settings = IntegrationSettings::new(r.omega0).with_dt(0.1e-9);
        let mut it = Integrator::new(&model, &disc, settings).unwrap();
        let beta = Complex64::new(1.0, 0.0);
        for _ in 0..20_000 {
            it.step(beta).unwrap();
        }
        let expected = sqrt(r.kappa_ext_in) / r.kappa;
        assert!((it.state().alpha - expected).norm() < 1e-9 * expected);
    }

    #[test]
    fn sequence_construction() {
        let p = |t: f64, w: f64| TimedPulse {
            t_start: t,
            width: w,
            drive: Complex64::new(1.0, 0.0),
        };
        let seq = PulseSequence::from_pulses(0.0, &[p(10e-9, 5e-9), p(0.0, 5e-9)], 50e-9).unwrap();
        assert_eq!(seq.segments.len(), 4);
        assert!((seq.duration() - 50e-9).abs() < 1e-20);
        assert!(PulseSequence::from_pulses(0.0, &[p(0.0, 10e-9), p(5e-9, 5e-9)], 50e-9).is_err());
        assert!(PulseSequence::new(0.0).push(-1.0, Complex64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn trace_sampling_and_windows() {
        let (model, disc) = small_model();
        let settings = IntegrationSettings::new(model.resonator.omega0).with_decimation(4);
        let mut seq = PulseSequence::new(0.0);
        seq.push(2e-9, Complex64::new(3.0, 0.0)).unwrap().idle(2e-9).unwrap();
        let trace = integrate(&model, &disc, &seq, settings).unwrap();
        // 80 steps, one sample every 4 plus the initial one
        assert_eq!(trace.len(), 21);
        assert!((trace.dt - 0.2e-9).abs() < 1e-24);
        // the boundary sample at 2 ns already belongs to the idle segment
        assert_eq!(trace.drive[10], Complex64::new(0.0, 0.0));
        assert_eq!(trace.drive[9], Complex64::new(3.0, 0.0));
        assert_eq!(trace.window(0.2e-9, 0.6e-9), 1..4);
        assert!((trace.input_energy(0.0, 1.8e-9) - 9.0 * 1.8e-9).abs() < 1e-18);
    }

    #[test]
    fn traces_append_on_a_shared_grid() {
        let (model, disc) = small_model();
        let settings = IntegrationSettings::new(model.resonator.omega0);
        // 21 steps: the grid is re-joined at step 30, no shared sample.
        // 20 steps: the join sample at step 20 appears in both traces.
        for (width, shared) in [(1.03e-9, 0), (1.0e-9, 1)] {
            let mut it = Integrator::new(&model, &disc, settings).unwrap();
            let mut seq = PulseSequence::new(0.0);
            seq.push(width, Complex64::new(1e3, 0.0)).unwrap();
            let mut a = it.run(&seq).unwrap();
            it.idle_to_sample_grid().unwrap();
            let b = it.run_free(2e-9).unwrap();
            let n = a.len();
            a.append(&b).unwrap();
            assert_eq!(a.len(), n + b.len() - shared);
            assert!((a.time(a.len() - 1) - it.time()).abs() < 1e-18);
            let mut bad = b.clone();
            bad.t0 += 1e-9;
            assert!(a.append(&bad).is_err());
        }
    }

    #[test]
    fn rejects_bad_settings() {
        let (model, disc) = small_model();
        let s = IntegrationSettings::new(model.resonator.omega0);
        assert!(Integrator::new(&model, &disc, s.with_dt(0.0)).is_err());
        assert!(Integrator::new(&model, &disc, s.with_decimation(0)).is_err());
        let wrong = EnsembleState::ground(3);
        assert!(Integrator::with_state(&model, &disc, s, wrong, 0.0).is_err());
    }

    #[test]
    fn blow_up_is_reported() {
        let (model, disc) = small_model();
        let s = IntegrationSettings::new(model.resonator.omega0).with_dt(1e-6);
        let mut it = Integrator::new(&model, &disc, s).unwrap();
        let err = (0..200).try_for_each(|_| it.step(Complex64::new(1e6, 0.0)));
        assert!(matches!(err, Err(Error::Unstable { .. })));
    }
}
