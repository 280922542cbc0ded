//! Model fits: bare resonator, avoided crossing, echo decay with ESEEM,
//! `T2(T)` and `T2(theta2)`.
//!
//! Each routine seeds its own start point from the data, so none of them
//! needs hand-tuned initial values.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::lm::{least_squares, FitProblem, FitResult, Parameter};
use crate::decoherence::{flip_flop_sum, EseemParams, IdModel, Nucleus, TemperatureModel};
use crate::math::{exp, log, sin, sqrt, PI, TAU};
use crate::model::{angular, cyclic, DeviceConfig, Resonator};
use crate::spectroscopy::{ensemble_susceptibility, interpolated_peaks, TransmissionMap};
use crate::{Error, Result};

/// Bare-resonator Lorentzian fit (cyclic units).
#[derive(Debug, Clone, PartialEq)]
pub struct ResonatorFit {
    pub f0_hz: f64,
    /// HWHM (Hz).
    pub kappa_hz: f64,
    /// Peak `|S21|`.
    pub amplitude: f64,
    pub fit: FitResult,
}

/// Fits `|S21| = A / sqrt(1 + ((f - f0) / kappa)^2)` to a magnitude
/// spectrum. Seeds: the largest sample for `f0` and `A`, the half-power
/// width for `kappa`.
pub fn fit_resonator(freqs_hz: &[f64], magnitude: &[f64]) -> Result<ResonatorFit> {
    let m = freqs_hz.len();
    if m != magnitude.len() {
        return Err(Error::arg("spectrum", "frequency and magnitude lengths differ"));
    }
    if m < 4 {
        return Err(Error::arg("spectrum", "at least four points are required"));
    }
    let centre = 0.5 * (freqs_hz[0] + freqs_hz[m - 1]);
    let span = (freqs_hz[m - 1] - freqs_hz[0]).abs().max(1.0);
    let x: Vec<f64> = freqs_hz.iter().map(|f| (f - centre) / span).collect();

    let (imax, &amax) = magnitude
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let half = amax / core::f64::consts::SQRT_2;
    let mut lo = imax;
    while lo > 0 && magnitude[lo] >= half {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < m && magnitude[hi] >= half {
        hi += 1;
    }
    let width0 = (0.5 * (x[hi] - x[lo])).max(1e-6);
    let peaked = imax > 0 && imax + 1 < m;

    let problem = FitProblem::new(
        vec![
            Parameter::new("amplitude", amax.max(1e-300), 0.0, 10.0 * amax.max(1e-300)),
            Parameter::new("f0", x[imax], -1.0, 1.0),
            Parameter::new("kappa", width0, 1e-9, 10.0),
        ],
        |p: &[f64], out: &mut [f64]| {
            for i in 0..out.len() {
                let u = (x[i] - p[1]) / p[2];
                out[i] = p[0] / sqrt(1.0 + u * u) - magnitude[i];
            }
        },
        m,
    )?;
    let mut fit = least_squares(&problem)?;
    let f0_hz = centre + fit.params[1] * span;
    let kappa_hz = fit.params[2] * span;
    let inside = f0_hz >= freqs_hz[0].min(freqs_hz[m - 1]) && f0_hz <= freqs_hz[0].max(freqs_hz[m - 1]);
    fit.converged &= peaked && inside && !fit.at_bound[1] && !fit.at_bound[2];
    fit.params[1] = f0_hz;
    fit.params[2] = kappa_hz;
    fit.stderr[1] *= span;
    fit.stderr[2] *= span;
    rescale_covariance(&mut fit, &[1.0, span, span]);
    rename(&mut fit, &["amplitude", "f0_hz", "kappa_hz"]);
    Ok(ResonatorFit {
        f0_hz,
        kappa_hz,
        amplitude: fit.params[0],
        fit,
    })
}

fn rename(fit: &mut FitResult, names: &[&str]) {
    for (n, new) in fit.names.iter_mut().zip(names) {
        *n = (*new).into();
    }
}

fn rescale_covariance(fit: &mut FitResult, scale: &[f64]) {
    let n = fit.n_params();
    for i in 0..n {
        for j in 0..n {
            fit.covariance[i * n + j] *= scale[i] * scale[j];
        }
    }
}

/// Result of the avoided-crossing fit. Angular units throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossingFit {
    pub v_n: f64,
    pub gamma2_star: f64,
    /// `d omega_s / dB` (rad/s per T).
    pub slope: f64,
    /// Field at which the fitted line crosses the cavity (T).
    pub crossing_field: f64,
    pub fit: FitResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossingResidual {
    /// `|S21|` only.
    #[default]
    Magnitude,
    /// Real and imaginary parts.
    Complex,
}

/// Fits coupling, linewidth and the field dependence of one sub-ensemble
/// over a 2-D transmission map. The resonator and all other ensembles of
/// `device` are held fixed. Seeds: crossing from the deepest dip of the
/// cavity column, slope from the ensemble's g-factor, coupling from half
/// the peak separation on the crossing row, linewidth equal to `kappa`.
pub fn fit_avoided_crossing(
    map: &TransmissionMap,
    device: &DeviceConfig,
    label: &str,
    mode: CrossingResidual,
) -> Result<CrossingFit> {
    let idx = device
        .ensemble_index(label)
        .ok_or(Error::arg("ensemble", "no sub-ensemble with that label"))?;
    let target = &device.ensembles[idx];
    let r: Resonator = device.resonator;
    let fields = map.grid.fields();
    let freqs = map.grid.frequencies_hz();
    let (nb, nf) = (fields.len(), freqs.len());
    if nb < 2 || nf < 4 {
        return Err(Error::arg("map", "grid too small for a crossing fit"));
    }

    // Fixed part of the denominator at every grid point.
    let mut background = Vec::with_capacity(nb * nf);
    for &b in fields {
        for &f in freqs {
            let w = angular(f);
            let mut d = Complex64::new(r.kappa, r.omega0 - w);
            for (j, e) in device.ensembles.iter().enumerate() {
                if j != idx {
                    d += ensemble_susceptibility(e, b, w);
                }
            }
            background.push(d);
        }
    }
    let numerator = sqrt(r.kappa_ext_in * r.kappa_ext_out);

    // Seeds. Work in MHz and mT so parameters are of order one to a hundred.
    let b_mid = 0.5 * (fields[0] + fields[nb - 1]);
    let f0 = cyclic(r.omega0);
    let col = map.column_abs(f0);
    let (ib, _) = col
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let slope0 = target.g * crate::model::MU_B_OVER_H * 1e-9; // MHz per mT
    let row: Vec<f64> = map.row(ib).iter().map(|z| z.norm()).collect();
    let mut peaks = interpolated_peaks(freqs, &row);
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    let v0 = if peaks.len() >= 2 {
        (0.25 * (peaks[0].0 - peaks[1].0).abs() * 1e-6).max(0.1)
    } else {
        1.0
    };
    let kappa_mhz = cyclic(r.kappa) * 1e-6;
    // line centre at b_mid relative to the cavity, MHz
    let c0 = slope0 * (b_mid - fields[ib]) * 1e3;

    let m = match mode {
        CrossingResidual::Magnitude => nb * nf,
        CrossingResidual::Complex => 2 * nb * nf,
    };
    let data = &map.values;
    let to_rad = TAU * 1e6;
    let problem = FitProblem::new(
        vec![
            Parameter::new("v_n_mhz", v0, 0.0, 1e3),
            Parameter::new("gamma2_star_mhz", kappa_mhz, 1e-3, 1e3),
            Parameter::new("slope_mhz_per_mt", slope0, 1e-3, 1e3),
            Parameter::new("line_offset_mhz", c0, -1e4, 1e4),
        ],
        |p: &[f64], out: &mut [f64]| {
            let v2 = (p[0] * to_rad) * (p[0] * to_rad);
            let gam = p[1] * to_rad;
            for (ibf, &b) in fields.iter().enumerate() {
                let ws = r.omega0 + to_rad * (p[3] + p[2] * (b - b_mid) * 1e3);
                for (jf, &f) in freqs.iter().enumerate() {
                    let k = ibf * nf + jf;
                    let chi = Complex64::new(v2, 0.0) / Complex64::new(gam, ws - angular(f));
                    let model = Complex64::new(numerator, 0.0) / (background[k] + chi);
                    match mode {
                        CrossingResidual::Magnitude => out[k] = model.norm() - data[k].norm(),
                        CrossingResidual::Complex => {
                            let d = model - data[k];
                            out[2 * k] = d.re;
                            out[2 * k + 1] = d.im;
                        }
                    }
                }
            }
        },
        m,
    )?;
    let mut fit = least_squares(&problem)?;
    let slope = fit.params[2] * to_rad * 1e3;
    let crossing_field = b_mid - fit.params[3] * to_rad / slope;
    let inside = crossing_field >= fields[0] && crossing_field <= fields[nb - 1];
    fit.converged &= inside;
    Ok(CrossingFit {
        v_n: fit.params[0] * to_rad,
        gamma2_star: fit.params[1] * to_rad,
        slope,
        crossing_field,
        fit,
    })
}

/// Echo-decay fit: `T2`, `A0` and one effective nucleus.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoDecayFit {
    pub t2: f64,
    pub a0: f64,
    pub eseem: EseemParams,
    pub fit: FitResult,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EchoDecayOptions {
    /// Seed for the nuclear frequency (rad/s), normally the Larmor frequency.
    pub seed_frequency: f64,
    /// Fit separate `omega_alpha` and `omega_beta` instead of one frequency.
    pub split_frequencies: bool,
}

/// Minimum number of points for an echo-decay fit.
pub const ECHO_DECAY_MIN_POINTS: usize = 8;

/// Fits `A0 exp(-2 tau / T2) eseem(tau)` to `(2 tau, amplitude)` points.
/// `T2` and `A0` are seeded by a log-linear regression, the frequency at
/// `seed_frequency`, the depth at 0.1. The convergence flag is cleared when
/// the data span less than one modulation period or have fewer than
/// [`ECHO_DECAY_MIN_POINTS`] points.
pub fn fit_echo_decay(points: &[(f64, f64)], opts: &EchoDecayOptions) -> Result<EchoDecayFit> {
    if points.len() < 5 {
        return Err(Error::arg("points", "need at least five echo amplitudes"));
    }
    if !(opts.seed_frequency > 0.0) {
        return Err(Error::arg("seed_frequency", "must be positive"));
    }
    if points.iter().any(|&(t, a)| !(t >= 0.0) || !(a > 0.0)) {
        return Err(Error::arg("points", "delays must be >= 0 and amplitudes > 0"));
    }
    let n = points.len() as f64;
    let (sx, sy, sxx, sxy) = points.iter().fold((0.0, 0.0, 0.0, 0.0), |acc, &(t, a)| {
        let y = log(a);
        (acc.0 + t, acc.1 + y, acc.2 + t * t, acc.3 + t * y)
    });
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let t_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let t_max = points.iter().map(|p| p.0).fold(0.0, f64::max);
    let t2_0 = if slope < 0.0 { -1.0 / slope } else { 10.0 * t_max.max(1e-9) };
    let a0_0 = exp(intercept);

    // Parameters in us, MHz (angular / 1e6) and amplitude / a0_0.
    let us = 1e-6;
    let w0 = opts.seed_frequency * us;
    let mut params = vec![
        Parameter::new("a0", 1.0, 0.0, 100.0),
        Parameter::new("t2_us", t2_0 / us, 1e-6, 1e6),
        Parameter::new("k", 0.1, 0.0, 1.0),
        Parameter::new("omega_alpha_mrad", w0, 0.2 * w0, 5.0 * w0),
    ];
    if opts.split_frequencies {
        params.push(Parameter::new("omega_beta_mrad", w0, 0.2 * w0, 5.0 * w0));
    }
    let split = opts.split_frequencies;
    let problem = FitProblem::new(
        params,
        |p: &[f64], out: &mut [f64]| {
            let wb = if split { p[4] } else { p[3] };
            let nuc = Nucleus {
                depth: p[2],
                omega_alpha: p[3],
                omega_beta: wb,
            };
            for (o, &(two_tau, a)) in out.iter_mut().zip(points) {
                let t = two_tau / us;
                *o = p[0] * exp(-t / p[1]) * nuc.modulation(0.5 * t) - a / a0_0;
            }
        },
        points.len(),
    )?;
    let mut fit = least_squares(&problem)?;
    let period = TAU / opts.seed_frequency;
    let span_tau = 0.5 * (t_max - t_min);
    fit.converged &= points.len() >= ECHO_DECAY_MIN_POINTS && span_tau >= period;
    let wa = fit.params[3] / us;
    let wb = if split { fit.params[4] / us } else { wa };
    let t2 = fit.params[1] * us;
    let a0 = fit.params[0] * a0_0;
    let mut scale = vec![a0_0, us, 1.0, 1.0 / us];
    if split {
        scale.push(1.0 / us);
    }
    for (i, s) in scale.iter().enumerate() {
        fit.params[i] *= s;
        fit.stderr[i] *= s;
    }
    rescale_covariance(&mut fit, &scale);
    rename(&mut fit, &["a0", "t2_s", "k", "omega_alpha_rad_s", "omega_beta_rad_s"]);
    Ok(EchoDecayFit {
        t2,
        a0,
        eseem: EseemParams::single(Nucleus {
            depth: fit.params[2],
            omega_alpha: wa,
            omega_beta: wb,
        }),
        fit,
    })
}

/// Fits `gamma_r` and `xi` of the `T2(T)` model to `(T, T2)` points; the
/// bath temperatures are inputs. Residuals are in `T2`. Two temperatures
/// determine the model exactly.
pub fn fit_t2_temperature(points: &[(f64, f64)], t_i: [f64; 3]) -> Result<(TemperatureModel, FitResult)> {
    if points.iter().any(|&(t, t2)| !(t > 0.0) || !(t2 > 0.0)) {
        return Err(Error::arg("points", "temperatures and T2 must be positive"));
    }
    let distinct = points.iter().any(|p| p.0 != points[0].0);
    if points.len() < 2 || !distinct {
        return Err(Error::arg("points", "at least two distinct temperatures are required"));
    }
    let us = 1e-6;
    let coldest = points.iter().min_by(|a, b| a.0.total_cmp(&b.0)).expect("non-empty");
    let hottest = points.iter().max_by(|a, b| a.0.total_cmp(&b.0)).expect("non-empty");
    let gr0 = us / coldest.1;
    let s_hot = flip_flop_sum(&t_i, hottest.0);
    let xi0 = if s_hot > 1e-12 {
        ((us / hottest.1 - gr0) / s_hot).max(1e-3)
    } else {
        1e-3
    };
    let factors: Vec<f64> = points.iter().map(|&(t, _)| flip_flop_sum(&t_i, t)).collect();
    let problem = FitProblem::new(
        vec![
            Parameter::new("gamma_r_per_us", gr0, 1e-9, 1e6),
            Parameter::new("xi_per_us", xi0, 0.0, 1e6),
        ],
        |p: &[f64], out: &mut [f64]| {
            for ((o, &(_, t2)), &s) in out.iter_mut().zip(points).zip(&factors) {
                *o = 1.0 / (p[0] + p[1] * s) - t2 / us;
            }
        },
        points.len(),
    )?;
    let mut fit = least_squares(&problem)?;
    let scale = [1.0 / us, 1.0 / us];
    for i in 0..2 {
        fit.params[i] *= scale[i];
        fit.stderr[i] *= scale[i];
    }
    rescale_covariance(&mut fit, &scale);
    rename(&mut fit, &["gamma_r_per_s", "xi_per_s"]);
    let model = TemperatureModel::new(fit.params[0], fit.params[1], t_i)?;
    Ok((model, fit))
}

/// Fits the instantaneous-diffusion model to `(theta2, T2)` points and
/// returns it with the derived `v_D / 2 pi` (Hz).
pub fn fit_theta2(points: &[(f64, f64)]) -> Result<(IdModel, f64, FitResult)> {
    if points.iter().any(|&(a, _)| !(0.0..=PI).contains(&a)) {
        return Err(Error::arg("theta2", "angles must lie in [0, pi]"));
    }
    if points.iter().any(|&(_, t2)| !(t2 > 0.0)) {
        return Err(Error::arg("T2", "coherence times must be positive"));
    }
    let mut angles: Vec<f64> = points.iter().map(|p| p.0).collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if angles.len() < 3 {
        return Err(Error::arg("theta2", "at least three distinct angles are required"));
    }
    let us = 1e-6;
    let lo = points.iter().min_by(|a, b| a.0.total_cmp(&b.0)).expect("non-empty");
    let hi = points.iter().max_by(|a, b| a.0.total_cmp(&b.0)).expect("non-empty");
    let s2 = |a: f64| {
        let s = sin(0.5 * a);
        s * s
    };
    let (slo, shi) = (s2(lo.0), s2(hi.0));
    let (rlo, rhi) = (us / lo.1, us / hi.1);
    let gid0 = if shi > slo { ((rhi - rlo) / (shi - slo)).max(1e-4) } else { 1e-4 };
    let g00 = (rlo - gid0 * slo).max(1e-4);
    let problem = FitProblem::new(
        vec![
            Parameter::new("gamma0_per_us", g00, 0.0, 1e6),
            Parameter::new("gamma_id_per_us", gid0, 0.0, 1e6),
        ],
        |p: &[f64], out: &mut [f64]| {
            for (o, &(a, t2)) in out.iter_mut().zip(points) {
                *o = 1.0 / (p[0] + p[1] * s2(a)) - t2 / us;
            }
        },
        points.len(),
    )?;
    let mut fit = least_squares(&problem)?;
    let scale = [1.0 / us, 1.0 / us];
    for i in 0..2 {
        fit.params[i] *= scale[i];
        fit.stderr[i] *= scale[i];
    }
    rescale_covariance(&mut fit, &scale);
    rename(&mut fit, &["gamma0_per_s", "gamma_id_per_s"]);
    let model = IdModel {
        gamma0: fit.params[0],
        gamma_id: fit.params[1],
    };
    let v_d = crate::decoherence::dipolar_coupling_from_id(&model);
    Ok((model, v_d, fit))
}
