//! Deterministic discretisation of an inhomogeneous line into spin packets.
//!
//! Packets sit at equal-probability quantiles of the lineshape truncated to
//! `|delta| <= cutoff`, so every interior packet carries the same weight and
//! sees the same Rabi frequency. The probability mass outside the cutoff is
//! folded into the two outermost packets, which keeps `sum w_k = 1` without
//! renormalising the line (renormalising biases the on-resonance
//! susceptibility by the missing tail, about 3 % at a 20 HWHM cutoff).

use alloc::vec::Vec;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::{erf, log, sqrt, tan, PI};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Lineshape {
    #[default]
    Lorentzian,
    Gaussian,
}

impl Lineshape {
    /// Cumulative distribution of a line with half width at half maximum `hwhm`.
    fn cdf(self, x: f64, hwhm: f64) -> f64 {
        match self {
            Lineshape::Lorentzian => 0.5 + crate::math::atan(x / hwhm) / PI,
            Lineshape::Gaussian => {
                let sigma = hwhm / sqrt(2.0 * log(2.0));
                0.5 * (1.0 + erf(x / (sigma * core::f64::consts::SQRT_2)))
            }
        }
    }

    fn quantile(self, u: f64, hwhm: f64, bound: f64) -> f64 {
        match self {
            Lineshape::Lorentzian => hwhm * tan(PI * (u - 0.5)),
            Lineshape::Gaussian => {
                let (mut lo, mut hi) = (-bound, bound);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if self.cdf(mid, hwhm) < u {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }
}

/// How packet detunings are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    /// Midpoint quantiles; reproducible and noise free.
    #[default]
    Quadrature,
    /// Uniform random quantiles from a seeded ChaCha8 stream. Only meant for
    /// cross-checking the quadrature.
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiscretizationOptions {
    pub lineshape: Lineshape,
    pub sampling: Sampling,
    /// Permit `M = 1` (a single packet at zero detuning carrying all of `v_N`).
    pub allow_degenerate: bool,
}

/// One packet: detuning from the line centre, collective coupling
/// `g_k = v_N sqrt(w_k)` and its share `w_k` of the ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinPacket {
    pub delta: f64,
    pub g: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleDiscretization {
    pub packets: Vec<SpinPacket>,
    /// Half width of the detuning support (rad/s).
    pub cutoff: f64,
    pub distribution: Lineshape,
    pub v_n: f64,
    pub gamma2_star: f64,
    /// Weight of a regular (interior) packet. Packets heavier than this
    /// stand for `weight / reference_weight` regular packets.
    pub reference_weight: f64,
}

/// Lorentzian quadrature discretisation with `m` packets over
/// `+-cutoff_factor * gamma2_star`.
pub fn discretize_ensemble(
    v_n: f64,
    gamma2_star: f64,
    m: usize,
    cutoff_factor: f64,
) -> Result<EnsembleDiscretization> {
    discretize_with(v_n, gamma2_star, m, cutoff_factor, &DiscretizationOptions::default())
}

pub fn discretize_with(
    v_n: f64,
    gamma2_star: f64,
    m: usize,
    cutoff_factor: f64,
    opts: &DiscretizationOptions,
) -> Result<EnsembleDiscretization> {
    if !(v_n >= 0.0) {
        return Err(Error::arg("v_n", "coupling must be non-negative"));
    }
    if m == 1 && opts.allow_degenerate {
        return Ok(EnsembleDiscretization {
            packets: alloc::vec![SpinPacket {
                delta: 0.0,
                g: v_n,
                weight: 1.0,
            }],
            cutoff: 0.0,
            distribution: opts.lineshape,
            v_n,
            gamma2_star,
            reference_weight: 1.0,
        });
    }
    if m < 2 {
        return Err(Error::arg("M", "at least two packets are needed to resolve a line"));
    }
    if !(gamma2_star > 0.0) {
        return Err(Error::arg("gamma2_star", "linewidth must be positive"));
    }
    if !(cutoff_factor > 1.0) {
        return Err(Error::arg("cutoff_factor", "cutoff must exceed one half width"));
    }
    let shape = opts.lineshape;
    let cutoff = cutoff_factor * gamma2_star;
    let u_lo = shape.cdf(-cutoff, gamma2_star);
    let u_hi = 1.0 - u_lo;
    let du = (u_hi - u_lo) / m as f64;

    let mut quantiles: Vec<f64> = match opts.sampling {
        Sampling::Quadrature => (0..m).map(|k| u_lo + (k as f64 + 0.5) * du).collect(),
        Sampling::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut q: Vec<f64> = (0..m)
                .map(|_| u_lo + (u_hi - u_lo) * rng.random::<f64>())
                .collect();
            q.sort_by(f64::total_cmp);
            q
        }
    };
    // Quadrature quantiles are symmetric by construction; force exact
    // mirror symmetry against rounding in the tangent.
    if opts.sampling == Sampling::Quadrature {
        for k in 0..m / 2 {
            quantiles[m - 1 - k] = 1.0 - quantiles[k];
        }
        if m % 2 == 1 {
            quantiles[m / 2] = 0.5;
        }
    }

    let mut packets: Vec<SpinPacket> = quantiles
        .iter()
        .map(|&u| SpinPacket {
            delta: shape.quantile(u, gamma2_star, cutoff),
            g: 0.0,
            weight: du,
        })
        .collect();
    if opts.sampling == Sampling::Quadrature {
        for k in 0..m / 2 {
            packets[m - 1 - k].delta = -packets[k].delta;
        }
        if m % 2 == 1 {
            packets[m / 2].delta = 0.0;
        }
    }
    packets[0].weight += u_lo;
    packets[m - 1].weight += 1.0 - u_hi;
    let total: f64 = packets.iter().map(|p| p.weight).sum();
    for p in &mut packets {
        // total differs from one only by rounding
        p.weight /= total;
        p.g = v_n * sqrt(p.weight);
    }
    Ok(EnsembleDiscretization {
        packets,
        cutoff,
        distribution: shape,
        v_n,
        gamma2_star,
        reference_weight: du / total,
    })
}

impl EnsembleDiscretization {
    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    /// Single-spin coupling of a regular packet; sets the Rabi frequency
    /// `2 g_ref |alpha|` seen by every packet.
    pub fn rabi_coupling(&self) -> f64 {
        self.v_n * sqrt(self.reference_weight)
    }

    /// `weight / reference_weight` for each packet.
    pub fn multiplicities(&self) -> impl Iterator<Item = f64> + '_ {
        self.packets
            .iter()
            .map(move |p| p.weight / self.reference_weight)
    }

    /// Index of the packet closest to zero detuning.
    pub fn central_index(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.packets.iter().enumerate() {
            if p.delta.abs() < self.packets[best].delta.abs() {
                best = i;
            }
        }
        best
    }

    pub fn max_abs_detuning(&self) -> f64 {
        self.packets
            .iter()
            .map(|p| p.delta.abs())
            .fold(0.0, f64::max)
    }

    /// Discrete susceptibility `sum_k g_k^2 / (damping + i (probe + delta_k))`
    /// with `probe = omega_s - omega`.
    pub fn susceptibility(&self, probe: f64, damping: f64) -> Complex64 {
        self.packets
            .iter()
            .map(|p| Complex64::new(p.g * p.g, 0.0) / Complex64::new(damping, probe + p.delta))
            .sum()
    }

    /// Continuum Lorentzian susceptibility `v_N^2 / (Gamma2* + damping + i probe)`.
    pub fn lorentzian_susceptibility(&self, probe: f64, damping: f64) -> Complex64 {
        Complex64::new(self.v_n * self.v_n, 0.0)
            / Complex64::new(self.gamma2_star + damping, probe)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::angular;

    fn paper() -> (f64, f64) {
        (angular(13.2e6), angular(7.3e6))
    }

    #[test]
    fn couplings_sum_to_collective() {
        let (v, g) = paper();
        for m in [2, 3, 10, 2001] {
            let d = discretize_ensemble(v, g, m, 20.0).unwrap();
            let s: f64 = d.packets.iter().map(|p| p.g * p.g).sum();
            assert!(((s - v * v) / (v * v)).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_and_bounded() {
        let (v, g) = paper();
        let d = discretize_ensemble(v, g, 2001, 20.0).unwrap();
        let m = d.len();
        for k in 0..m {
            assert_eq!(d.packets[k].delta, -d.packets[m - 1 - k].delta);
        }
        assert_eq!(d.packets[d.central_index()].delta, 0.0);
        assert!(d.max_abs_detuning() < 20.0 * g);
        let mults: Vec<f64> = d.multiplicities().collect();
        assert!((mults[1] - 1.0).abs() < 1e-9);
        assert!(mults[0] > 30.0);
    }

    #[test]
    fn degenerate_requires_flag() {
        let (v, g) = paper();
        assert!(discretize_ensemble(v, g, 1, 20.0).is_err());
        assert!(discretize_ensemble(v, g, 0, 20.0).is_err());
        assert!(discretize_ensemble(v, g, 10, 1.0).is_err());
        let opts = DiscretizationOptions {
            allow_degenerate: true,
            ..Default::default()
        };
        let d = discretize_with(v, g, 1, 20.0, &opts).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.packets[0].g, v);
        assert_eq!(d.packets[0].delta, 0.0);
    }

    #[test]
    fn on_resonance_susceptibility() {
        // Closed form v^2 / Gamma2* versus the discrete sum with the
        // homogeneous rate 1/T2 as the only damping.
        let (v, g) = paper();
        let d = discretize_ensemble(v, g, 2001, 20.0).unwrap();
        let chi = d.susceptibility(0.0, 1.0 / 5.6e-6);
        let target = v * v / g;
        assert!((chi - target).norm() / target < 0.01, "{chi} vs {target}");
    }

    #[test]
    fn susceptibility_band() {
        // Over |probe| < 5 Gamma2*, with a probe damping of a few local packet
        // spacings so the comb is not resolved.
        let (v, g) = paper();
        let d = discretize_ensemble(v, g, 2001, 20.0).unwrap();
        let damping = 0.2 * g;
        for i in -50..=50 {
            let probe = g * i as f64 / 10.0;
            let a = d.susceptibility(probe, damping);
            let b = d.lorentzian_susceptibility(probe, damping);
            assert!((a - b).norm() / b.norm() < 0.01, "probe {i}: {a} vs {b}");
        }
    }

    #[test]
    fn gaussian_quantiles_have_right_width() {
        let (v, g) = paper();
        let opts = DiscretizationOptions {
            lineshape: Lineshape::Gaussian,
            ..Default::default()
        };
        let d = discretize_with(v, g, 4001, 6.0, &opts).unwrap();
        // Fraction of a Gaussian within +-HWHM is erf(sqrt(ln 2)) = 0.7610.
        let inside: f64 = d
            .packets
            .iter()
            .filter(|p| p.delta.abs() <= g)
            .map(|p| p.weight)
            .sum();
        assert!((inside - 0.7610).abs() < 1e-3, "{inside}");
    }

    #[test]
    fn random_sampling_is_seeded() {
        let (v, g) = paper();
        let opts = DiscretizationOptions {
            sampling: Sampling::Random { seed: 7 },
            ..Default::default()
        };
        let a = discretize_with(v, g, 500, 20.0, &opts).unwrap();
        let b = discretize_with(v, g, 500, 20.0, &opts).unwrap();
        assert_eq!(a, b);
        let s: f64 = a.packets.iter().map(|p| p.g * p.g).sum();
        assert!(((s - v * v) / (v * v)).abs() < 1e-12);
    }
}
