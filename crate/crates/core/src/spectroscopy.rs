//! Continuous-wave transmission of the coupled cavity.
//!
//! Every enabled sub-ensemble adds a Lorentzian susceptibility
//! `v_N^2 / (i (omega_s - omega) + Gamma2*)` to the cavity denominator:
//!
//! ```text
//! S21(omega) = sqrt(k_in k_out) / [ i (omega0 - omega) + kappa + sum_j chi_j(omega) ]
//! ```

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::math::sqrt;
use crate::model::{DeviceConfig, Resonator, SubEnsemble};
use crate::{Error, Result};

/// Lorentzian susceptibility of one ensemble at probe `omega`.
#[inline]
pub fn ensemble_susceptibility(ens: &SubEnsemble, field: f64, omega: f64) -> Complex64 {
    let detuning = ens.spin_frequency(field) - omega;
    Complex64::new(ens.v_n * ens.v_n, 0.0) / Complex64::new(ens.gamma2_star, detuning)
}

/// Cavity transmission with an explicit list of ensembles at field `field`.
pub fn s21_with(resonator: &Resonator, ensembles: &[SubEnsemble], field: f64, omega: f64) -> Complex64 {
    let mut denom = Complex64::new(resonator.kappa, resonator.omega0 - omega);
    for e in ensembles {
        denom += ensemble_susceptibility(e, field, omega);
    }
    Complex64::new(sqrt(resonator.kappa_ext_in * resonator.kappa_ext_out), 0.0) / denom
}

/// Complex transmission `S21` of the device at angular probe frequency.
pub fn s21(omega: f64, device: &DeviceConfig) -> Complex64 {
    s21_with(&device.resonator, &device.ensembles, device.field, omega)
}

/// Field and probe-frequency axes of a 2-D sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSweepGrid {
    fields: Vec<f64>,
    frequencies_hz: Vec<f64>,
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[1] > w[0])
}

impl FieldSweepGrid {
    pub fn new(fields: Vec<f64>, frequencies_hz: Vec<f64>) -> Result<Self> {
        if fields.is_empty() || frequencies_hz.is_empty() {
            return Err(Error::arg("grid", "sweep axes must be non-empty"));
        }
        if !strictly_increasing(&fields) || !strictly_increasing(&frequencies_hz) {
            return Err(Error::arg("grid", "sweep axes must be strictly increasing"));
        }
        Ok(Self {
            fields,
            frequencies_hz,
        })
    }

    /// `n` evenly spaced points on `[lo, hi]` for each axis (inclusive).
    pub fn linspace(b_lo: f64, b_hi: f64, nb: usize, f_lo: f64, f_hi: f64, nf: usize) -> Result<Self> {
        Self::new(linspace(b_lo, b_hi, nb), linspace(f_lo, f_hi, nf))
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    pub fn frequencies_hz(&self) -> &[f64] {
        &self.frequencies_hz
    }

    pub fn len(&self) -> usize {
        self.fields.len() * self.frequencies_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Complex `S21` over a [`FieldSweepGrid`], field-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionMap {
    pub grid: FieldSweepGrid,
    pub values: Vec<Complex64>,
}

impl TransmissionMap {
    pub fn at(&self, field_idx: usize, freq_idx: usize) -> Complex64 {
        self.values[field_idx * self.grid.frequencies_hz.len() + freq_idx]
    }

    /// One fixed-field row.
    pub fn row(&self, field_idx: usize) -> &[Complex64] {
        let nf = self.grid.frequencies_hz.len();
        &self.values[field_idx * nf..(field_idx + 1) * nf]
    }

    /// `|S21|` along the field axis at the frequency column closest to `f_hz`.
    pub fn column_abs(&self, f_hz: f64) -> Vec<f64> {
        let j = nearest_index(&self.grid.frequencies_hz, f_hz);
        (0..self.grid.fields.len())
            .map(|i| self.at(i, j).norm())
            .collect()
    }

    /// Iterator over `(B, f_hz, S21)` in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64, Complex64)> + '_ {
        let nf = self.grid.frequencies_hz.len();
        self.values.iter().enumerate().map(move |(k, &v)| {
            (self.grid.fields[k / nf], self.grid.frequencies_hz[k % nf], v)
        })
    }
}

pub(crate) fn nearest_index(axis: &[f64], x: f64) -> usize {
    let mut best = 0;
    for (i, &a) in axis.iter().enumerate() {
        if (a - x).abs() < (axis[best] - x).abs() {
            best = i;
        }
    }
    best
}

/// Evaluates `S21` at every grid point, field-major.
pub fn field_sweep(device: &DeviceConfig, grid: &FieldSweepGrid) -> TransmissionMap {
    let mut values = Vec::with_capacity(grid.len());
    for &b in &grid.fields {
        for &f in &grid.frequencies_hz {
            values.push(s21_with(
                &device.resonator,
                &device.ensembles,
                b,
                crate::model::angular(f),
            ));
        }
    }
    TransmissionMap {
        grid: grid.clone(),
        values,
    }
}

/// Normal-mode splitting of a resonant ensemble (Hz):
/// `2 sqrt(v_N^2 - (kappa - Gamma2*)^2 / 4) / 2 pi`, zero when unresolved.
pub fn normal_mode_splitting(resonator: &Resonator, ensemble: &SubEnsemble) -> f64 {
    let dk = resonator.kappa - ensemble.gamma2_star;
    let radicand = ensemble.v_n * ensemble.v_n - dk * dk / 4.0;
    if radicand > 0.0 {
        2.0 * sqrt(radicand) / crate::math::TAU
    } else {
        0.0
    }
}

/// Local maxima of `y`, refined by a parabola through the three samples
/// around each. Returns `(x, y)` pairs in ascending `x`.
pub fn interpolated_peaks(x: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    interpolated_extrema(x, y, true)
}

/// Local minima of `y`, refined like [`interpolated_peaks`].
pub fn interpolated_dips(x: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    interpolated_extrema(x, y, false)
}

fn interpolated_extrema(x: &[f64], y: &[f64], maxima: bool) -> Vec<(f64, f64)> {
    let s = if maxima { 1.0 } else { -1.0 };
    let mut out = Vec::new();
    if x.len() < 3 || x.len() != y.len() {
        return out;
    }
    for i in 1..y.len() - 1 {
        let (a, b, c) = (s * y[i - 1], s * y[i], s * y[i + 1]);
        if b > a && b >= c {
            let denom = a - 2.0 * b + c;
            let shift = if denom != 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
            let h = x[i + 1] - x[i];
            let peak = b - 0.25 * (a - c) * shift;
            out.push((x[i] + shift * h, s * peak));
        }
    }
    out
}

/// Fields at which spin lines cross the cavity, read off a map.
///
/// Each field row contributes the frequency of its strongest transmission
/// peak. A line passing upward through the cavity pulls that peak up below
/// the crossing and down above it, so the crossing shows up as a downward
/// jump of more than `min_jump_hz` between adjacent rows. The position
/// inside the step assumes a dispersive pull proportional to
/// `1/(B - B*)` in the rows next to the step.
pub fn cavity_line_crossings(map: &TransmissionMap, min_jump_hz: f64) -> Vec<f64> {
    let fields = &map.grid.fields;
    let freqs = &map.grid.frequencies_hz;
    let peak: Vec<f64> = (0..fields.len())
        .map(|i| {
            let mag: Vec<f64> = map.row(i).iter().map(|v| v.norm()).collect();
            interpolated_peaks(freqs, &mag)
                .into_iter()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map_or(f64::NAN, |p| p.0)
        })
        .collect();
    let mut out = Vec::new();
    for i in 0..fields.len().saturating_sub(1) {
        let jump = peak[i + 1] - peak[i];
        if !(jump < -min_jump_hz) {
            continue;
        }
        let before = if i > 0 { peak[i] - peak[i - 1] } else { 0.0 };
        let after = if i + 2 < fields.len() { peak[i + 2] - peak[i + 1] } else { 0.0 };
        if jump > before || jump > after {
            continue;
        }
        // With a pull a / (B - B*) on a constant background, the ratio of
        // the step to the neighbouring increment fixes where B* sits.
        let locate = |r: f64| {
            let u = (1.0 + r) / (r - 1.0);
            if u.is_finite() { u.clamp(0.0, 1.0) } else { 0.5 }
        };
        let mut estimates = Vec::new();
        if i > 0 && before != 0.0 {
            estimates.push(locate(jump / before));
        }
        if i + 2 < fields.len() && after != 0.0 {
            estimates.push(1.0 - locate(jump / after));
        }
        let frac = if estimates.is_empty() {
            0.5
        } else {
            estimates.iter().sum::<f64>() / estimates.len() as f64
        };
        out.push(fields[i] + frac * (fields[i + 1] - fields[i]));
    }
    out
}
