//! Cross-checks of the Maxwell-Bloch integrator against closed forms and
//! against itself.

use spinmem_core::dynamics::*;
use spinmem_core::model::*;
use spinmem_core::spectroscopy::s21_with;
use spinmem_core::Complex64;
use std::f64::consts::PI;

fn s2a(m: usize) -> (DeviceConfig, DynamicsModel, EnsembleDiscretization) {
    let dev = DeviceConfig::er_yso();
    let e = dev.ensemble("s2a").unwrap().clone();
    let model = DynamicsModel::from_device(&dev, "s2a").unwrap();
    let disc = discretize_ensemble(e.v_n, e.gamma2_star, m, 15.0).unwrap();
    (dev, model, disc)
}

#[test]
fn lossless_run_conserves_excitations_over_1e5_steps() {
    let (dev, model, disc) = s2a(101);
    let model = model.lossless();
    let settings = IntegrationSettings::new(dev.resonator.omega0 + angular(3e6));
    let mut state = EnsembleState::ground(disc.len());
    state.alpha = Complex64::new(30.0, -10.0);
    let n0 = state.excitations(&disc);
    let mut it = Integrator::with_state(&model, &disc, settings, state, 0.0).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..100_000 {
        it.step(Complex64::new(0.0, 0.0)).unwrap();
        if k % 1000 == 999 {
            worst = worst.max((it.state().excitations(&disc) / n0 - 1.0).abs());
        }
    }
    assert!(worst < 1e-6, "relative drift {worst:e}");
    // The field must actually have exchanged excitations with the spins.
    assert!(it.state().alpha.norm_sqr() < 0.99 * n0);
}

#[test]
fn bloch_vectors_stay_inside_the_sphere_under_strong_drive() {
    let (dev, model, disc) = s2a(61);
    let mut model = model;
    model.gamma1 = 0.0;
    model.gamma2_h = 0.0;
    let settings = IntegrationSettings::new(dev.resonator.omega0).with_decimation(1);
    let mut it = Integrator::new(&model, &disc, settings).unwrap();
    for k in 0..20_000 {
        let drive = if k < 2000 { Complex64::new(5e5, 2e5) } else { Complex64::new(0.0, 0.0) };
        it.step(drive).unwrap();
        for (s, z) in it.state().s_minus.iter().zip(&it.state().s_z) {
            assert!(s.norm_sqr() + 0.25 * z * z <= 0.25 + 1e-9);
        }
    }
    assert!(it.state().max_excited_fraction() > 0.1);
}

/// Weak continuous drive in the frame of the probe: the transmitted field
/// settles to `S21(omega) * beta`.
#[test]
fn weak_drive_steady_state_matches_transmission() {
    let (dev, model, disc) = s2a(2001);
    let e = dev.ensemble("s2a").unwrap().clone();
    let beta = Complex64::new(1.0, 0.0);
    for df in [0.0, 6e6, -13e6, 25e6, -60e6] {
        let probe = dev.resonator.omega0 + angular(df);
        let settings = IntegrationSettings::new(probe).with_decimation(100);
        let mut it = Integrator::new(&model, &disc, settings).unwrap();
        for _ in 0..40_000 {
            it.step(beta).unwrap();
        }
        let simulated = it.state().alpha * dev.resonator.kappa_ext_out.sqrt();
        let expected = s21_with(&dev.resonator, std::slice::from_ref(&e), dev.field, probe) * beta;
        let rel = (simulated - expected).norm() / expected.norm();
        assert!(rel < 0.01, "detuning {df:e} Hz: relative error {rel:.4}");
    }
}

fn hahn_amplitude(dt: f64, decimation: usize, disc: &EnsembleDiscretization, model: &DynamicsModel, cal: &PiCalibration) -> f64 {
    let settings = IntegrationSettings::new(model.resonator.omega0).with_dt(dt).with_decimation(decimation);
    simulate_hahn_echo(model, disc, cal, 0.4e-6, PI, settings).unwrap().echo_amplitude
}

#[test]
fn step_halving_is_fourth_order() {
    let (_, model, disc) = s2a(201);
    // One fixed pulse shared by every step size; sample spacing 0.4 ns.
    let cal = calibrate_pi_pulse(&model, &disc, 40e-9, IntegrationSettings::new(model.resonator.omega0).with_dt(0.1e-9)).unwrap();
    let a1 = hahn_amplitude(0.4e-9, 1, &disc, &model, &cal);
    let a2 = hahn_amplitude(0.2e-9, 2, &disc, &model, &cal);
    let a4 = hahn_amplitude(0.1e-9, 4, &disc, &model, &cal);
    let a8 = hahn_amplitude(0.05e-9, 8, &disc, &model, &cal);
    let ratio = (a1 - a2) / (a2 - a4);
    assert!((ratio - 16.0).abs() < 4.0, "error ratio {ratio}");
    assert!(((a4 - a8) / a8).abs() < 1e-3);
}

#[test]
fn echo_phase_follows_the_first_pulse_conjugated() {
    let (_, model, disc) = s2a(401);
    let settings = IntegrationSettings::new(model.resonator.omega0).with_dt(0.1e-9);
    let cal = calibrate_pi_pulse(&model, &disc, 40e-9, settings).unwrap();
    let run = |phase: f64| {
        let seq = EchoSequence { first_phase: phase, ..EchoSequence::hahn(0.5e-6, PI) };
        simulate_echo(&model, &disc, &cal, &seq, settings, 0.5e-6).unwrap()
    };
    let base = run(0.0);
    for deg in [30.0f64, -75.0, 140.0] {
        let shifted = run(deg.to_radians());
        // Compare the two fields at the unshifted echo maximum.
        let i = base.trace.window(base.echo_time, 1.0).start;
        let change = (shifted.trace.a_out[i] / base.trace.a_out[i]
            * Complex64::from_polar(1.0, deg.to_radians()))
        .arg();
        assert!(change.to_degrees().abs() < 2.0, "offset {deg} deg: residual {:.2} deg", change.to_degrees());
    }
}

#[test]
fn echo_amplitude_is_tau_independent_without_homogeneous_loss() {
    let (_, mut model, disc) = s2a(801);
    model.gamma2_h = 0.0;
    model.gamma1 = 0.0;
    let settings = IntegrationSettings::new(model.resonator.omega0).with_dt(0.1e-9);
    let cal = calibrate_pi_pulse(&model, &disc, 40e-9, settings).unwrap();
    let amps: Vec<f64> = [0.6e-6, 1.0e-6, 1.6e-6]
        .iter()
        .map(|&tau| simulate_hahn_echo(&model, &disc, &cal, tau, PI, settings).unwrap().echo_amplitude)
        .collect();
    for a in &amps[1..] {
        assert!((a / amps[0] - 1.0).abs() < 0.02, "{amps:?}");
    }
}

#[test]
fn doubling_the_linewidth_halves_t2_star() {
    let (_, model, _) = s2a(2);
    let settings = IntegrationSettings::new(model.resonator.omega0).with_decimation(2);
    let v = angular(13.2e6);
    let narrow = discretize_ensemble(v, angular(7.3e6), 1201, 15.0).unwrap();
    let wide = discretize_ensemble(v, angular(14.6e6), 1201, 15.0).unwrap();
    let a = simulate_fid(&model, &narrow, settings, 0.1).unwrap().t2_star;
    let b = simulate_fid(&model, &wide, settings, 0.1).unwrap().t2_star;
    assert!((a / b - 2.0).abs() < 0.05, "{a:e} {b:e}");
}

#[test]
fn lorentzian_line_decays_exponentially() {
    let (_, model, _) = s2a(2);
    let disc = discretize_ensemble(angular(13.2e6), angular(7.3e6), 1201, 15.0).unwrap();
    let fid = simulate_fid(&model, &disc, IntegrationSettings::new(model.resonator.omega0), 0.1).unwrap();
    assert!(fid.exponential, "residual {}", fid.relative_rms_residual);
    assert!((fid.t2_star * angular(7.3e6) - 1.0).abs() < 0.02, "{:e}", fid.t2_star);
}

#[test]
fn gaussian_line_is_flagged_non_exponential() {
    let (_, model, _) = s2a(2);
    let opts = DiscretizationOptions { lineshape: Lineshape::Gaussian, ..Default::default() };
    let disc = discretize_with(angular(13.2e6), angular(7.3e6), 1201, 6.0, &opts).unwrap();
    let fid = simulate_fid(&model, &disc, IntegrationSettings::new(model.resonator.omega0), 0.1).unwrap();
    assert!(!fid.exponential, "residual {}", fid.relative_rms_residual);
}
