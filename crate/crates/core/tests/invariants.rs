//! Property tests for the closed-form models, the discretisation, the
//! integrator and the fitting engine.

use proptest::prelude::*;
use spinmem_core::decoherence::*;
use spinmem_core::dynamics::*;
use spinmem_core::fitting::*;
use spinmem_core::model::*;
use spinmem_core::protocols::mode_capacity;
use spinmem_core::spectroscopy::*;
use spinmem_core::Complex64;
use std::f64::consts::PI;

fn s2a_device() -> DeviceConfig {
    DeviceConfig::er_yso()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn populations_sum_to_one(t_i in 1e-3f64..50.0, t in 1e-3f64..50.0) {
        let (up, down) = boltzmann_populations(t_i, t).unwrap();
        prop_assert!((up + down - 1.0).abs() < 1e-12);
        prop_assert!(down >= up);
    }

    #[test]
    fn zeeman_is_linear(g in 0.1f64..20.0, b in 0.0f64..1.0, c in 0.1f64..10.0) {
        let f = zeeman_frequency(g, b).unwrap();
        prop_assert!((zeeman_frequency(c * g, b).unwrap() - c * f).abs() <= 1e-12 * c * f.max(1.0));
        prop_assert!((zeeman_frequency(g, c * b).unwrap() - c * f).abs() <= 1e-12 * c * f.max(1.0));
        let t = effective_temperature(g, b).unwrap();
        prop_assert!((effective_temperature(c * g, b).unwrap() - c * t).abs() <= 1e-12 * c * t.max(1e-300));
        if b > 0.0 {
            prop_assert!((resonance_field(g, f).unwrap() / b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn occupancy_monotone(f in 1e8f64..2e10, t in 1e-3f64..5.0, df in 1.0001f64..2.0) {
        let n = thermal_occupancy(f, t).unwrap();
        prop_assert!(thermal_occupancy(f, t * df).unwrap() > n || n == 0.0 && thermal_occupancy(f, t * df).unwrap() >= 0.0);
        prop_assert!(thermal_occupancy(f * df, t).unwrap() <= n);
    }

    #[test]
    fn transmission_is_passive(b in 0.0f64..0.4, df in -200e6f64..200e6) {
        let dev = s2a_device();
        let s = s21(dev.resonator.omega0 + angular(df), &DeviceConfig { field: b, ..dev.clone() });
        prop_assert!(s.norm() <= 1.0 + 1e-9);
        prop_assert!(s.norm() <= dev.resonator.bare_peak_transmission() + 1e-12);
    }

    #[test]
    fn resonant_transmission_is_symmetric(df in 0.0f64..100e6) {
        let dev = s2a_device();
        let w0 = dev.resonator.omega0;
        let only: Vec<SubEnsemble> = dev.ensembles.iter().filter(|e| e.label == "s2a").cloned().collect();
        let up = s21_with(&dev.resonator, &only, dev.field, w0 + angular(df)).norm();
        let down = s21_with(&dev.resonator, &only, dev.field, w0 - angular(df)).norm();
        prop_assert!((up - down).abs() < 1e-9);
    }

    #[test]
    fn t2_non_increasing_in_temperature(t in 0.005f64..3.0, dt in 1e-4f64..1.0) {
        let m = TemperatureModel::new(1.0 / 5.63e-6, 1.0 / 11e-6, [2.347, 0.661, 0.314]).unwrap();
        prop_assert!(t2_of_temperature(t + dt, &m).unwrap() <= t2_of_temperature(t, &m).unwrap());
        prop_assert!(t2_of_temperature(t, &m).unwrap() <= 5.63e-6 * (1.0 + 1e-12));
    }

    #[test]
    fn eseem_bounds(tau in 0.0f64..20e-6, k in 0.0f64..=1.0, fa in 1e4f64..5e6, fb in 1e4f64..5e6) {
        let equal = EseemParams::single(Nucleus { depth: k, omega_alpha: 2.0 * PI * fa, omega_beta: 2.0 * PI * fa });
        let e = eseem_envelope(tau, &equal).unwrap();
        prop_assert!(e <= 1.0 + 1e-12 && e >= 1.0 - 2.0 * k - 1e-12);
        let half = EseemParams::single(Nucleus { depth: 0.5 * k, omega_alpha: 2.0 * PI * fa, omega_beta: 2.0 * PI * fb });
        let e = eseem_envelope(tau, &half).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&e));
        let two = EseemParams { nuclei: vec![half.nuclei[0]; 2] };
        let e2 = eseem_envelope(tau, &two).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&e2));
    }

    #[test]
    fn echo_decay_strips_to_eseem(two_tau in 0.0f64..20e-6, k in 0.0f64..0.5) {
        let p = EseemParams::yttrium(k, 0.246);
        let a = echo_decay(two_tau, 5.6e-6, 1.0, &p).unwrap();
        let stripped = a * (two_tau / 5.6e-6).exp();
        prop_assert!((stripped - eseem_envelope(0.5 * two_tau, &p).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn id_rate_increasing(a in 0.0f64..PI, da in 1e-6f64..1.0) {
        let m = IdModel::from_endpoints(7e-6, 5.6e-6).unwrap();
        let b = (a + da).min(PI);
        prop_assert!(id_rate(b, &m).unwrap() >= id_rate(a, &m).unwrap());
    }

    #[test]
    fn mode_capacity_ordering(t2 in 1e-7f64..1e-3, t2s in 1e-9f64..1e-6, extra in 1.0f64..100.0) {
        let c = mode_capacity(t2, t2s, t2s * extra).unwrap();
        prop_assert!(c.n_eff <= c.n_m * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn discretisation_sum_rule(m in 2usize..3000, c in 1.5f64..40.0, v in 1e6f64..1e9, gamma in 1e6f64..1e9) {
        let d = discretize_ensemble(v, gamma, m, c).unwrap();
        let sum: f64 = d.packets.iter().map(|p| p.g * p.g).sum();
        prop_assert!((sum / (v * v) - 1.0).abs() < 1e-9);
        for (a, b) in d.packets.iter().zip(d.packets.iter().rev()) {
            prop_assert_eq!(a.delta, -b.delta);
        }
        prop_assert!(d.max_abs_detuning() <= c * gamma * (1.0 + 1e-12));
    }

    #[test]
    fn lossless_excitation_conserved(seed in 0u64..1000, amp in 1e2f64..1e5) {
        let dev = s2a_device();
        let model = DynamicsModel::from_device(&dev, "s2a").unwrap().lossless();
        let e = dev.ensemble("s2a").unwrap();
        let disc = discretize_ensemble(e.v_n, e.gamma2_star, 41, 5.0).unwrap();
        let settings = IntegrationSettings::new(dev.resonator.omega0 + (seed as f64) * 1e5);
        let mut state = EnsembleState::ground(disc.len());
        state.alpha = Complex64::new(amp.sqrt(), 0.3 * amp.sqrt());
        let mults: Vec<f64> = disc.multiplicities().collect();
        let count = |s: &EnsembleState| {
            s.alpha.norm_sqr() + s.s_z.iter().zip(&mults).map(|(z, m)| m * (z + 1.0) / 2.0).sum::<f64>()
        };
        let n0 = count(&state);
        let mut it = Integrator::with_state(&model, &disc, settings, state, 0.0).unwrap();
        for _ in 0..2000 {
            it.step(Complex64::new(0.0, 0.0)).unwrap();
            for (s, z) in it.state().s_minus.iter().zip(&it.state().s_z) {
                prop_assert!(s.norm_sqr() + 0.25 * z * z <= 0.25 + 1e-9);
            }
        }
        prop_assert!((count(it.state()) / n0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn exponential_fit_recovers_parameters(a in 0.1f64..10.0, tau in 0.5f64..5.0, c in -1.0f64..1.0) {
        let x: Vec<f64> = (0..60).map(|i| i as f64 * 0.2).collect();
        let y: Vec<f64> = x.iter().map(|t| a * (-t / tau).exp() + c).collect();
        let p = FitProblem::new(
            vec![
                Parameter::new("a", 1.0, 0.0, 100.0),
                Parameter::new("tau", 1.0, 0.01, 100.0),
                Parameter::unbounded("c", 0.0),
            ],
            |p: &[f64], r: &mut [f64]| for i in 0..r.len() { r[i] = p[0] * (-x[i] / p[1]).exp() + p[2] - y[i]; },
            x.len(),
        ).unwrap();
        let fit = least_squares(&p).unwrap();
        prop_assert!(fit.converged);
        prop_assert!((fit.params[0] - a).abs() < 1e-6 * a.max(1.0));
        prop_assert!((fit.params[1] - tau).abs() < 1e-6 * tau);
        let n = fit.n_params();
        for i in 0..n {
            for j in 0..n {
                prop_assert!((fit.covariance[i * n + j] - fit.covariance[j * n + i]).abs() <= 1e-12 * (fit.covariance[i * n + i].abs() + fit.covariance[j * n + j].abs() + 1e-300));
            }
            prop_assert!(fit.covariance[i * n + i] >= 0.0);
        }
    }

    #[test]
    fn fits_stay_within_bounds(lo in -5.0f64..0.0, width in 0.1f64..2.0) {
        let hi = lo + width;
        let p = FitProblem::new(
            vec![Parameter::new("x", lo + 0.5 * width, lo, hi)],
            |p: &[f64], r: &mut [f64]| { r[0] = p[0] - 10.0; r[1] = 0.5 * (p[0] - 10.0); },
            2,
        ).unwrap();
        let fit = least_squares(&p).unwrap();
        prop_assert!(fit.params[0] >= lo && fit.params[0] <= hi);
        prop_assert!(fit.at_bound[0]);
    }
}
