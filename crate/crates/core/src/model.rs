//! Physical constants, the device description and closed-form utilities.

use alloc::string::String;
use alloc::vec::Vec;

use crate::math::{exp, expm1, TAU};
use crate::{Error, Result};

/// CODATA 2018 values (SI), plus the ratios used throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub mu_b: f64,
    pub h: f64,
    pub hbar: f64,
    pub k_b: f64,
}

/// Bohr magneton, J/T.
pub const MU_B: f64 = 9.274_010_078_3e-24;
/// Planck constant, J s (exact).
pub const H: f64 = 6.626_070_15e-34;
/// Reduced Planck constant, J s.
pub const HBAR: f64 = H / TAU;
/// Boltzmann constant, J/K (exact).
pub const K_B: f64 = 1.380_649e-23;

/// `mu_B / h` in Hz/T (about 13.996 GHz/T).
pub const MU_B_OVER_H: f64 = MU_B / H;
/// `mu_B / k_B` in K/T (about 0.6717 K/T).
pub const MU_B_OVER_K_B: f64 = MU_B / K_B;
/// `h / k_B` in K/Hz.
pub const H_OVER_K_B: f64 = H / K_B;

impl PhysicalConstants {
    pub const CODATA_2018: Self = Self {
        mu_b: MU_B,
        h: H,
        hbar: HBAR,
        k_b: K_B,
    };

    pub fn mu_b_over_h(&self) -> f64 {
        self.mu_b / self.h
    }

    pub fn mu_b_over_k_b(&self) -> f64 {
        self.mu_b / self.k_b
    }

    pub fn h_over_k_b(&self) -> f64 {
        self.h / self.k_b
    }
}

/// Hz to rad/s.
#[inline]
pub fn angular(f_hz: f64) -> f64 {
    TAU * f_hz
}

/// rad/s to Hz.
#[inline]
pub fn cyclic(omega: f64) -> f64 {
    omega / TAU
}

/// Electron Zeeman transition frequency `g mu_B B / h` in Hz.
pub fn zeeman_frequency(g: f64, field_t: f64) -> Result<f64> {
    if !(field_t >= 0.0) {
        return Err(Error::arg("B", "magnetic field must be non-negative"));
    }
    Ok(g * MU_B_OVER_H * field_t)
}

/// Field (T) at which a transition with g-factor `g` reaches `f_hz`.
pub fn resonance_field(g: f64, f_hz: f64) -> Result<f64> {
    if !(g > 0.0) {
        return Err(Error::arg("g", "g-factor must be positive"));
    }
    Ok(f_hz / (g * MU_B_OVER_H))
}

/// Effective Zeeman temperature `g mu_B B / k_B` in K.
pub fn effective_temperature(g: f64, field_t: f64) -> Result<f64> {
    if !(field_t >= 0.0) {
        return Err(Error::arg("B", "magnetic field must be non-negative"));
    }
    Ok(g * MU_B_OVER_K_B * field_t)
}

/// Two-level Boltzmann occupations `(P_up, P_down)` of a transition with
/// effective temperature `t_i` at bath temperature `t`.
pub fn boltzmann_populations(t_i: f64, t: f64) -> Result<(f64, f64)> {
    if !(t > 0.0) {
        return Err(Error::arg("T", "temperature must be positive"));
    }
    if !(t_i >= 0.0) {
        return Err(Error::arg("T_i", "effective temperature must be non-negative"));
    }
    let x = t_i / t;
    // exp(-x) underflows gracefully; exp(x) may overflow to inf which still
    // gives the right limit.
    let up = 1.0 / (1.0 + exp(x));
    let down = 1.0 / (1.0 + exp(-x));
    Ok((up, down))
}

/// Bose-Einstein mean photon number of a mode at `f_hz` and temperature `t`.
pub fn thermal_occupancy(f_hz: f64, t: f64) -> Result<f64> {
    if !(f_hz > 0.0) {
        return Err(Error::arg("f", "frequency must be positive"));
    }
    if !(t > 0.0) {
        return Err(Error::arg("T", "temperature must be positive"));
    }
    Ok(1.0 / expm1(H_OVER_K_B * f_hz / t))
}

/// Number of photons in a rectangular pulse of `power` watts lasting
/// `duration` seconds at carrier `f_hz`.
pub fn photon_count(power: f64, duration: f64, f_hz: f64) -> Result<f64> {
    if !(power >= 0.0) {
        return Err(Error::arg("power", "power must be non-negative"));
    }
    if !(duration > 0.0) {
        return Err(Error::arg("duration", "duration must be positive"));
    }
    if !(f_hz > 0.0) {
        return Err(Error::arg("f", "frequency must be positive"));
    }
    Ok(power * duration / (H * f_hz))
}

/// One Zeeman sub-ensemble. Rates are angular except `gamma2_h` and
/// `gamma1`, which are plain inverse lifetimes.
#[derive(Debug, Clone, PartialEq)]
pub struct SubEnsemble {
    pub label: String,
    pub g: f64,
    /// Collective coupling `v_N` (rad/s).
    pub v_n: f64,
    /// Inhomogeneous HWHM `Gamma2*` (rad/s).
    pub gamma2_star: f64,
    /// Homogeneous decoherence rate `1/T2` (1/s).
    pub gamma2_h: f64,
    /// Longitudinal relaxation rate `1/T1` (1/s).
    pub gamma1: f64,
    /// Spin concentration (1/cm^3); informational.
    pub n_s: f64,
    /// Additive offset on the Zeeman line (rad/s).
    pub freq_offset: f64,
}

impl SubEnsemble {
    pub fn validate(&self) -> Result<()> {
        if !(self.g > 0.0) {
            return Err(Error::arg("g", "g-factor must be positive"));
        }
        for (name, v) in [
            ("v_n", self.v_n),
            ("gamma2_star", self.gamma2_star),
            ("gamma2_h", self.gamma2_h),
            ("gamma1", self.gamma1),
            ("n_s", self.n_s),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::arg(name, "rates and densities must be finite and >= 0"));
            }
        }
        if self.gamma2_h > self.gamma2_star {
            return Err(Error::arg(
                "gamma2_h",
                "homogeneous rate exceeds the inhomogeneous linewidth",
            ));
        }
        Ok(())
    }

    /// Transition angular frequency at field `b` (rad/s), offset included.
    pub fn spin_frequency(&self, field_t: f64) -> f64 {
        angular(self.g * MU_B_OVER_H * field_t) + self.freq_offset
    }

    /// Field at which the line reaches angular frequency `omega`.
    pub fn field_at(&self, omega: f64) -> f64 {
        cyclic(omega - self.freq_offset) / (self.g * MU_B_OVER_H)
    }

    /// `T2* = 1 / Gamma2*`.
    pub fn t2_star(&self) -> f64 {
        1.0 / self.gamma2_star
    }
}

/// Single cavity mode with separate input, output and internal loss rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resonator {
    pub omega0: f64,
    /// Total HWHM, `kappa_int + kappa_ext_in + kappa_ext_out`.
    pub kappa: f64,
    pub kappa_ext_in: f64,
    pub kappa_ext_out: f64,
    pub kappa_int: f64,
}

impl Resonator {
    /// Builds a resonator from its parts; `kappa` is their sum.
    pub fn new(omega0: f64, kappa_int: f64, kappa_ext_in: f64, kappa_ext_out: f64) -> Result<Self> {
        let r = Self {
            omega0,
            kappa: kappa_int + kappa_ext_in + kappa_ext_out,
            kappa_ext_in,
            kappa_ext_out,
            kappa_int,
        };
        r.validate()?;
        Ok(r)
    }

    /// Symmetric two-port resonator: internal loss from the intrinsic
    /// quality factor, the rest of `kappa` split evenly between ports.
    /// Arguments are cyclic (Hz).
    pub fn symmetric_from_q(f0_hz: f64, kappa_hz: f64, q_int: f64) -> Result<Self> {
        if !(q_int > 0.0) {
            return Err(Error::arg("q_int", "quality factor must be positive"));
        }
        let kappa_int_hz = f0_hz / (2.0 * q_int);
        let ext = kappa_hz - kappa_int_hz;
        if ext < 0.0 {
            return Err(Error::arg("kappa", "total linewidth below the internal loss rate"));
        }
        Self::new(
            angular(f0_hz),
            angular(kappa_int_hz),
            angular(ext / 2.0),
            angular(ext / 2.0),
        )
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("omega0", self.omega0),
            ("kappa_int", self.kappa_int),
            ("kappa_ext_in", self.kappa_ext_in),
            ("kappa_ext_out", self.kappa_ext_out),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::arg(name, "resonator rates must be finite and >= 0"));
            }
        }
        let sum = self.kappa_int + self.kappa_ext_in + self.kappa_ext_out;
        if (self.kappa - sum).abs() > 1e-9 * sum.max(1.0) {
            return Err(Error::arg("kappa", "kappa must equal the sum of its parts"));
        }
        Ok(())
    }

    /// Peak transmission of the bare cavity, `sqrt(k_in k_out) / kappa`.
    pub fn bare_peak_transmission(&self) -> f64 {
        libm::sqrt(self.kappa_ext_in * self.kappa_ext_out) / self.kappa
    }
}

/// Resonator, spin sub-ensembles, applied field and bath temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceConfig {
    pub resonator: Resonator,
    pub ensembles: Vec<SubEnsemble>,
    pub field: f64,
    pub temperature: f64,
}

impl DeviceConfig {
    pub fn validate(&self) -> Result<()> {
        self.resonator.validate()?;
        if self.ensembles.is_empty() {
            return Err(Error::arg("ensembles", "at least one sub-ensemble is required"));
        }
        for e in &self.ensembles {
            e.validate()?;
        }
        if !(self.field >= 0.0) {
            return Err(Error::arg("B", "magnetic field must be non-negative"));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::arg("temperature", "temperature must be positive"));
        }
        Ok(())
    }

    pub fn ensemble(&self, label: &str) -> Option<&SubEnsemble> {
        self.ensembles.iter().find(|e| e.label == label)
    }

    pub fn ensemble_index(&self, label: &str) -> Option<usize> {
        self.ensembles.iter().position(|e| e.label == label)
    }

    /// Effective Zeeman temperatures of every ensemble except `exclude`.
    pub fn bath_temperatures(&self, exclude: &str) -> Vec<f64> {
        self.ensembles
            .iter()
            .filter(|e| e.label != exclude)
            .map(|e| e.g * MU_B_OVER_K_B * self.field)
            .collect()
    }

    /// Er:YSO on a copper lambda/2 resonator, as characterised at 246 mT and
    /// 25 mK. Only the `s2a` line has measured coupling and linewidth; the
    /// couplings and widths of the other three lines are placeholders.
    pub fn er_yso() -> Self {
        let resonator = Resonator::symmetric_from_q(3.721e9, 8.2e6, 400.0)
            .expect("bundled resonator parameters are valid");
        let field = 0.246;
        let placeholder = |label: &str, g: f64, vn_mhz: f64, width_mhz: f64| SubEnsemble {
            label: label.into(),
            g,
            v_n: angular(vn_mhz * 1e6),
            gamma2_star: angular(width_mhz * 1e6),
            gamma2_h: 1.0 / 5.6e-6,
            gamma1: 0.1,
            n_s: 1e17,
            freq_offset: 0.0,
        };
        let mut s2a = placeholder("s2a", 1.1, 13.2, 7.3);
        // Put the line on the cavity at 246 mT; the quoted g = 1.1 is rounded.
        s2a.freq_offset = resonator.omega0 - angular(1.1 * MU_B_OVER_H * field);
        Self {
            resonator,
            ensembles: alloc::vec![
                placeholder("g14p2", 14.2, 2.0, 10.0),
                placeholder("g4p0", 4.0, 4.0, 10.0),
                placeholder("g1p9", 1.9, 6.0, 10.0),
                s2a,
            ],
            field,
            temperature: 0.025,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn derived_ratios_match_primaries() {
        let c = PhysicalConstants::CODATA_2018;
        assert!(rel(c.mu_b_over_h(), MU_B_OVER_H) < 1e-12);
        assert!(rel(c.mu_b_over_k_b(), MU_B_OVER_K_B) < 1e-12);
        assert!(rel(c.h_over_k_b(), H_OVER_K_B) < 1e-12);
        assert!(rel(c.hbar * TAU, c.h) < 1e-12);
        assert!(rel(MU_B_OVER_H, 13.996_245_e9) < 1e-6);
        assert!(rel(MU_B_OVER_K_B, 0.671_713_8) < 1e-6);
    }

    #[test]
    fn zeeman_values() {
        assert_eq!(zeeman_frequency(1.1, 0.0).unwrap(), 0.0);
        let f = zeeman_frequency(1.1, 0.246).unwrap();
        assert!(rel(f, 1.1 * 13.996_25e9 * 0.246) < 1e-6);
        assert!((f / 1e9 - 3.787).abs() < 1e-3);
        let b = resonance_field(1.9, 3.721e9).unwrap();
        assert!((b * 1e3 - 139.9).abs() < 0.05, "{b}");
        assert!(zeeman_frequency(1.1, -1e-3).is_err());
    }

    #[test]
    fn effective_temperatures() {
        let t = |g| effective_temperature(g, 0.246).unwrap();
        assert!((t(14.2) - 2.347).abs() < 1e-3);
        assert!((t(4.0) - 0.661).abs() < 1e-3);
        assert!((t(1.9) - 0.314).abs() < 1e-3);
        assert_eq!(effective_temperature(3.0, 0.0).unwrap(), 0.0);
        assert!(effective_temperature(3.0, -0.1).is_err());
    }

    #[test]
    fn boltzmann_limits() {
        let (u, d) = boltzmann_populations(1e-12, 1e6).unwrap();
        assert!((u - 0.5).abs() < 1e-12 && (d - 0.5).abs() < 1e-12);
        let (u, _) = boltzmann_populations(0.3, 0.3).unwrap();
        assert!((u - 1.0 / (1.0 + core::f64::consts::E)).abs() < 1e-15);
        assert!((u - 0.2689).abs() < 1e-4);
        let (u, d) = boltzmann_populations(100.0, 0.01).unwrap();
        assert_eq!(u, 0.0);
        assert_eq!(d, 1.0);
        assert!(boltzmann_populations(1.0, 0.0).is_err());
    }

    #[test]
    fn thermal_occupancy_values() {
        let n = thermal_occupancy(3.721e9, 0.025).unwrap();
        assert!(n > 7e-4 && n < 9e-4, "{n}");
        assert!(thermal_occupancy(3.721e9, 1e-4).unwrap() < 1e-300);
        // Bisection in log T on the occupancy: n = 50 at about 9 K.
        let (mut lo, mut hi) = (0.1_f64, 100.0_f64);
        for _ in 0..200 {
            let mid = libm::sqrt(lo * hi);
            if thermal_occupancy(3.721e9, mid).unwrap() < 50.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - 9.0).abs() < 0.1, "{lo}");
        assert!(thermal_occupancy(0.0, 1.0).is_err());
        assert!(thermal_occupancy(1e9, -1.0).is_err());
    }

    #[test]
    fn photon_counts() {
        let n = photon_count(115e-6, 10e-9, 3.721e9).unwrap();
        assert!((n / 1e11 - 4.66).abs() < 0.01, "{n}");
        assert_eq!(photon_count(0.0, 1e-9, 1e9).unwrap(), 0.0);
        let e1 = H * 5e9;
        assert!(rel(photon_count(e1 / 3e-9, 3e-9, 5e9).unwrap(), 1.0) < 1e-12);
        assert!(photon_count(1.0, 0.0, 1e9).is_err());
    }

    #[test]
    fn bundled_device() {
        let dev = DeviceConfig::er_yso();
        dev.validate().unwrap();
        let r = dev.resonator;
        assert!((cyclic(r.kappa_int) / 1e6 - 4.651).abs() < 1e-3);
        assert!((cyclic(r.kappa_ext_in) / 1e6 - 1.774).abs() < 1e-3);
        assert!(rel(cyclic(r.kappa), 8.2e6) < 1e-12);
        let s2a = dev.ensemble("s2a").unwrap();
        assert!(rel(s2a.spin_frequency(0.246), r.omega0) < 1e-12);
        assert!(rel(s2a.field_at(r.omega0), 0.246) < 1e-12);
        let bath = dev.bath_temperatures("s2a");
        assert_eq!(bath.len(), 3);
        assert!((bath[0] - 2.347).abs() < 1e-3);
    }

    #[test]
    fn invalid_ensembles_rejected() {
        let mut e = DeviceConfig::er_yso().ensembles[3].clone();
        e.gamma2_h = e.gamma2_star * 2.0;
        assert!(e.validate().is_err());
        e.gamma2_h = 0.0;
        e.g = 0.0;
        assert!(e.validate().is_err());
        assert!(Resonator::symmetric_from_q(3.7e9, 1e6, 400.0).is_err());
    }
}
