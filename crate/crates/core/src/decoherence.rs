//! Closed-form decoherence models: thermally activated flip-flops of the
//! bath sub-ensembles, two-pulse ESEEM, and instantaneous diffusion.

use alloc::vec::Vec;

use crate::math::{cos, exp, sin, PI, TAU};
use crate::{Error, Result};

/// Magnitude of the 89Y gyromagnetic ratio, Hz/T.
pub const YTTRIUM_89_GAMMA_HZ_PER_T: f64 = 2.0859e6;

/// `1/T2(T) = gamma_r + sum_i xi / ((1 + e^{T_i/T}) (1 + e^{-T_i/T}))`
/// over the three off-resonant sub-ensembles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureModel {
    /// Residual dephasing rate (1/s).
    pub gamma_r: f64,
    /// Flip-flop amplitude (1/s).
    pub xi: f64,
    /// Effective Zeeman temperatures of the bath ensembles (K).
    pub t_i: [f64; 3],
}

impl TemperatureModel {
    pub fn new(gamma_r: f64, xi: f64, t_i: [f64; 3]) -> Result<Self> {
        let m = Self { gamma_r, xi, t_i };
        m.validate()?;
        Ok(m)
    }

    /// Takes the bath temperatures from a slice, which must hold exactly three.
    pub fn from_slice(gamma_r: f64, xi: f64, t_i: &[f64]) -> Result<Self> {
        let t: [f64; 3] = t_i
            .try_into()
            .map_err(|_| Error::arg("T_i", "exactly three bath temperatures are required"))?;
        Self::new(gamma_r, xi, t)
    }

    /// Model with residual rate `gamma_r` whose flip-flop amplitude is fixed
    /// by one point `T2(t_anchor) = t2_anchor`.
    pub fn through_point(gamma_r: f64, t_anchor: f64, t2_anchor: f64, t_i: [f64; 3]) -> Result<Self> {
        if !(t_anchor > 0.0 && t2_anchor > 0.0) {
            return Err(Error::arg("anchor", "temperature and T2 must be positive"));
        }
        let s = flip_flop_sum(&t_i, t_anchor);
        if !(s > 0.0) {
            return Err(Error::arg("anchor", "bath is frozen out at the anchor temperature"));
        }
        Self::new(gamma_r, (1.0 / t2_anchor - gamma_r) / s, t_i)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_r > 0.0) {
            return Err(Error::arg("gamma_r", "residual rate must be positive"));
        }
        if !(self.xi >= 0.0) {
            return Err(Error::arg("xi", "flip-flop amplitude must be non-negative"));
        }
        if self.t_i.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::arg("T_i", "bath temperatures must be positive"));
        }
        Ok(())
    }

    /// Sum of the thermal flip-flop factors at bath temperature `t`;
    /// each factor tends to 1/4 at high temperature.
    pub fn flip_flop_factor(&self, t: f64) -> f64 {
        flip_flop_sum(&self.t_i, t)
    }

    /// Decoherence rate `1/T2` (1/s).
    pub fn rate(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::arg("T", "temperature must be positive"));
        }
        Ok(self.gamma_r + self.xi * self.flip_flop_factor(t))
    }
}

pub(crate) fn flip_flop_sum(t_i: &[f64], t: f64) -> f64 {
    t_i.iter()
        .map(|&ti| {
            let x = ti / t;
            // (1 + e^x)(1 + e^-x) = 2 + 2 cosh x; written to stay finite.
            let e = exp(-x.abs());
            e / ((1.0 + e) * (1.0 + e))
        })
        .sum()
}

/// Coherence time `T2` (s) at temperature `t` (K).
pub fn t2_of_temperature(t: f64, model: &TemperatureModel) -> Result<f64> {
    Ok(1.0 / model.rate(t)?)
}

/// One nucleus in the two-pulse ESEEM formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nucleus {
    /// Modulation depth `k`.
    pub depth: f64,
    /// Nuclear frequencies in the two electron-spin manifolds (rad/s).
    pub omega_alpha: f64,
    pub omega_beta: f64,
}

impl Nucleus {
    /// Weakly coupled nucleus: both manifolds at the Larmor frequency.
    pub fn larmor(depth: f64, omega: f64) -> Self {
        Self {
            depth,
            omega_alpha: omega,
            omega_beta: omega,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.depth) {
            return Err(Error::arg("k", "modulation depth must lie in [0, 1]"));
        }
        if !(self.omega_alpha > 0.0 && self.omega_beta > 0.0) {
            return Err(Error::arg("omega", "nuclear frequencies must be positive"));
        }
        Ok(())
    }

    /// `1 - (k/4) [2 - 2 cos(wa t) - 2 cos(wb t) + cos((wa - wb) t) + cos((wa + wb) t)]`
    pub fn modulation(&self, tau: f64) -> f64 {
        let (a, b) = (self.omega_alpha * tau, self.omega_beta * tau);
        1.0 - 0.25
            * self.depth
            * (2.0 - 2.0 * cos(a) - 2.0 * cos(b) + cos(a - b) + cos(a + b))
    }
}

/// Product of the single-nucleus modulations. An empty list means no ESEEM.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EseemParams {
    pub nuclei: Vec<Nucleus>,
}

impl EseemParams {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn single(nucleus: Nucleus) -> Self {
        Self {
            nuclei: alloc::vec![nucleus],
        }
    }

    /// One effective 89Y nucleus at its Larmor frequency in field `b` (T).
    pub fn yttrium(depth: f64, field_t: f64) -> Self {
        Self::single(Nucleus::larmor(depth, TAU * YTTRIUM_89_GAMMA_HZ_PER_T * field_t))
    }

    pub fn validate(&self) -> Result<()> {
        self.nuclei.iter().try_for_each(Nucleus::validate)
    }
}

/// ESEEM factor at pulse separation `tau`.
pub fn eseem_envelope(tau: f64, params: &EseemParams) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::arg("tau", "pulse separation must be non-negative"));
    }
    params.validate()?;
    Ok(params.nuclei.iter().map(|n| n.modulation(tau)).product())
}

/// Two-pulse echo amplitude at total delay `two_tau`:
/// `A0 exp(-2 tau / T2) * eseem(tau)`.
pub fn echo_decay(two_tau: f64, t2: f64, a0: f64, params: &EseemParams) -> Result<f64> {
    if !(two_tau >= 0.0) {
        return Err(Error::arg("two_tau", "delay must be non-negative"));
    }
    if !(t2 > 0.0) {
        return Err(Error::arg("T2", "coherence time must be positive"));
    }
    Ok(a0 * exp(-two_tau / t2) * eseem_envelope(0.5 * two_tau, params)?)
}

/// Instantaneous diffusion: `1/T2(theta2) = gamma0 + gamma_id sin^2(theta2 / 2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdModel {
    pub gamma0: f64,
    pub gamma_id: f64,
}

impl IdModel {
    /// From the coherence times at `theta2 -> 0` and `theta2 = pi`.
    pub fn from_endpoints(t2_small_angle: f64, t2_pi: f64) -> Result<Self> {
        if !(t2_small_angle > 0.0 && t2_pi > 0.0) {
            return Err(Error::arg("T2", "coherence times must be positive"));
        }
        let gamma0 = 1.0 / t2_small_angle;
        let m = Self {
            gamma0,
            gamma_id: 1.0 / t2_pi - gamma0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0 >= 0.0 && self.gamma_id >= 0.0) {
            return Err(Error::arg("IdModel", "rates must be non-negative"));
        }
        Ok(())
    }
}

/// `1/T2` at second-pulse angle `theta2` in `[0, pi]`.
pub fn id_rate(theta2: f64, model: &IdModel) -> Result<f64> {
    if !(0.0..=PI).contains(&theta2) {
        return Err(Error::arg("theta2", "angle must lie in [0, pi]"));
    }
    let s = sin(0.5 * theta2);
    Ok(model.gamma0 + model.gamma_id * s * s)
}

/// Dipolar coupling `v_D / 2 pi` (Hz) from the instantaneous-diffusion rate,
/// using the convention `v_D / 2 pi = gamma_id / pi`.
pub fn dipolar_coupling_from_id(model: &IdModel) -> f64 {
    model.gamma_id / PI
}
