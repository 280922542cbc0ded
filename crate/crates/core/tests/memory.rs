//! Multi-pulse storage on a reduced ensemble: ordering, efficiency bounds
//! and linear response.

use spinmem_core::dynamics::*;
use spinmem_core::model::*;
use spinmem_core::protocols::*;

struct Setup {
    model: DynamicsModel,
    disc: EnsembleDiscretization,
    cal: PiCalibration,
    settings: IntegrationSettings,
}

fn setup() -> Setup {
    let dev = DeviceConfig::er_yso();
    let e = dev.ensemble("s2a").unwrap();
    let model = DynamicsModel::from_device(&dev, "s2a").unwrap();
    let disc = discretize_ensemble(e.v_n, e.gamma2_star, 301, 15.0).unwrap();
    let settings = IntegrationSettings::new(dev.resonator.omega0).with_dt(0.1e-9);
    let cal = calibrate_pi_pulse(&model, &disc, 40e-9, settings).unwrap();
    Setup { model, disc, cal, settings }
}

// Widely spaced inputs and a late refocusing pulse keep every echo clear of
// its neighbours and of the emission burst that follows inversion.
fn experiment(amplitude: f64) -> MemoryExperiment {
    MemoryExperiment {
        n_pulses: 5,
        refocus_time: 6.0e-6,
        input_amplitude: amplitude,
        pulse_spacing: 800e-9,
        ..MemoryExperiment::sixteen_pulse()
    }
}

#[test]
fn storage_is_ordered_bounded_and_linear() {
    let s = setup();
    let run = |a: f64| run_memory(&s.model, &s.disc, &s.cal, &experiment(a), s.settings, 5.6e-6).unwrap();
    let full = run(0.002);
    let half = run(0.001);

    assert!(full.linear && half.linear);
    assert!(full.reversed(), "order {:?}", full.order);
    assert_eq!(full.order, vec![4, 3, 2, 1, 0]);

    // Later inputs have shorter delays and must not be less efficient.
    for w in full.pulses.windows(2) {
        assert!(w[0].efficiency <= w[1].efficiency, "{:?}", full.pulses);
    }
    for (a, b) in full.pulses.iter().zip(&half.pulses) {
        assert!(a.efficiency <= 1.0);
        assert!((b.amp_echo / a.amp_echo - 0.5).abs() < 0.005, "amplitude ratio {}", b.amp_echo / a.amp_echo);
        assert!((b.efficiency / a.efficiency - 1.0).abs() < 0.02);
    }

    let rate = full.envelope_decay_rate().unwrap();
    assert!(rate > 0.0);
}

#[test]
fn invalid_geometry_rejected() {
    let s = setup();
    let mut exp = experiment(0.002);
    exp.pulse_spacing = 5e-9;
    assert!(run_memory(&s.model, &s.disc, &s.cal, &exp, s.settings, 5.6e-6).is_err());
    let mut exp = experiment(0.002);
    exp.refocus_time = 0.5e-6;
    assert!(run_memory(&s.model, &s.disc, &s.cal, &exp, s.settings, 5.6e-6).is_err());
}

#[test]
fn strong_input_is_flagged_nonlinear() {
    let s = setup();
    let mut exp = experiment(0.3);
    exp.n_pulses = 2;
    exp.refocus_time = 2.0e-6;
    let r = run_memory(&s.model, &s.disc, &s.cal, &exp, s.settings, 5.6e-6).unwrap();
    assert!(!r.linear, "excitation {}", r.max_write_excitation);
}
