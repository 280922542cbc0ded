//! One function per subcommand. Each returns the data it computed plus a
//! JSON summary; writing files is left to [`run`].

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};
use spinmem_core::decoherence::{eseem_envelope, echo_decay, id_rate, t2_of_temperature};
use spinmem_core::dynamics::{
    calibrate_pi_pulse, discretize_with, simulate_fid, simulate_hahn_echo, DynamicsModel, EchoResult,
    EnsembleDiscretization, EnsembleState, FidResult, IntegrationSettings, Integrator, PiCalibration, PulseSequence,
    SimulationTrace, TimedPulse,
};
use spinmem_core::fitting::{
    fit_avoided_crossing, fit_echo_decay, fit_resonator, fit_t2_temperature, fit_theta2, EchoDecayOptions, FitResult,
};
use spinmem_core::model::cyclic;
use spinmem_core::protocols::{mode_capacity, run_memory, MemoryResult};
use spinmem_core::spectroscopy::{
    cavity_line_crossings, interpolated_peaks, normal_mode_splitting, s21_with, FieldSweepGrid, TransmissionMap,
};
use spinmem_core::Complex64;

use crate::config::{Config, EchoDecayMode, ScanConfig};
use crate::error::{CliError, CliResult};
use crate::output::{self, Manifest};

/// Smallest downward step of the cavity peak counted as a line crossing.
pub const CROSSING_MIN_JUMP_HZ: f64 = 20e3;

/// Half width of the field window cut around the target line for the
/// avoided-crossing fit.
pub const CROSSING_FIT_HALF_WINDOW_T: f64 = 8e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipe {
    Fig1b,
    Fig2a,
    Fig2b,
    Fig3,
    Fig4,
}

impl Recipe {
    pub fn name(self) -> &'static str {
        match self {
            Recipe::Fig1b => "fig1b",
            Recipe::Fig2a => "fig2a",
            Recipe::Fig2b => "fig2b",
            Recipe::Fig3 => "fig3",
            Recipe::Fig4 => "fig4",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Sweep,
    Echo,
    Fid,
    EchoDecay,
    T2Scan,
    Theta2Scan,
    Memory,
    Fit { data: Option<PathBuf> },
    Recipe(Recipe),
}

impl Command {
    pub fn name(&self) -> String {
        match self {
            Command::Sweep => "sweep".into(),
            Command::Echo => "echo".into(),
            Command::Fid => "fid".into(),
            Command::EchoDecay => "echodecay".into(),
            Command::T2Scan => "t2scan".into(),
            Command::Theta2Scan => "theta2scan".into(),
            Command::Memory => "memory".into(),
            Command::Fit { .. } => "fit".into(),
            Command::Recipe(r) => format!("recipe {}", r.name()),
        }
    }
}

/// Runs `command` and writes its CSV to `out`, side files next to it and
/// the manifest to `<out>.manifest.json`.
pub fn run(command: &Command, cfg: &Config, config_text: &str, out: &Path) -> CliResult<Manifest> {
    let mut outputs = vec![out.to_path_buf()];
    let results = match command {
        Command::Sweep | Command::Recipe(Recipe::Fig1b) => {
            let map = sweep(cfg)?;
            output::write_sweep(out, &map)?;
            let mut summary = sweep_summary(cfg, &map);
            if matches!(command, Command::Recipe(_)) {
                let fit = crossing_fit(cfg, &map)?;
                let rows_path = output::sibling(out, "fit.csv");
                output::write_fit_rows(&rows_path, &fit_rows(&fit.1))?;
                outputs.push(rows_path);
                summary["crossing_fit"] = fit.0;
            }
            summary
        }
        Command::Echo | Command::Recipe(Recipe::Fig2a) => {
            let dynamics = Dynamics::prepare(cfg)?;
            let (trace, summary) = if cfg.pulses.is_empty() || matches!(command, Command::Recipe(_)) {
                let r = dynamics.hahn_echo(cfg.echo.tau, cfg.echo.theta2, cfg.echo.tail)?;
                (r.trace.clone(), echo_summary(cfg, &r))
            } else {
                dynamics.pulse_train(cfg)?
            };
            output::write_trace(out, &trace, 1)?;
            json!({ "calibration": dynamics.calibration_json(), "echo": summary })
        }
        Command::Fid => {
            let (model, disc) = model_and_discretization(cfg)?;
            let settings = cfg.sim.integration(cfg.device.resonator.omega0);
            let fid = simulate_fid(&model, &disc, settings, cfg.fid_tip)?;
            output::write_trace(out, &fid.trace, 1)?;
            fid_summary(cfg, &fid)
        }
        Command::EchoDecay | Command::Recipe(Recipe::Fig2b) => {
            let points = echo_decay_points(cfg)?;
            output::write_table(out, output::ECHODECAY_HEADER, points.iter().map(|&(t, a)| [t, a]))?;
            let mut summary = json!({ "mode": format!("{:?}", cfg.echodecay.mode).to_lowercase() });
            if matches!(command, Command::Recipe(_)) {
                let (fit_json, fit) = fit_echo_points(cfg, &points)?;
                let rows_path = output::sibling(out, "fit.csv");
                output::write_fit_rows(&rows_path, &fit_rows(&fit))?;
                outputs.push(rows_path);
                summary["fit"] = fit_json;
            }
            summary
        }
        Command::T2Scan | Command::Recipe(Recipe::Fig3) => {
            let points = t2_scan(cfg)?;
            output::write_table(out, output::T2SCAN_HEADER, points.iter().map(|&(t, t2)| [t, t2]))?;
            let mut summary = t2_summary(cfg)?;
            if matches!(command, Command::Recipe(_)) {
                let (fit_json, fit) = fit_t2_points(cfg, &points)?;
                let rows_path = output::sibling(out, "fit.csv");
                output::write_fit_rows(&rows_path, &fit_rows(&fit))?;
                outputs.push(rows_path);
                summary["fit"] = fit_json;
            }
            summary
        }
        Command::Theta2Scan => {
            let points = theta2_scan(cfg)?;
            output::write_table(out, output::THETA2SCAN_HEADER, points.iter().map(|&(a, t2)| [a, t2]))?;
            json!({
                "gamma0_per_s": cfg.id_model.gamma0,
                "gamma_id_per_s": cfg.id_model.gamma_id,
                "v_d_hz": spinmem_core::decoherence::dipolar_coupling_from_id(&cfg.id_model),
            })
        }
        Command::Memory | Command::Recipe(Recipe::Fig4) => {
            let dynamics = Dynamics::prepare(cfg)?;
            let result = dynamics.memory(cfg)?;
            output::write_memory(out, &result)?;
            let trace_path = output::sibling(out, "trace.csv");
            let mut trace = result.trace.clone();
            trace.a_out = result.echo_signal.clone();
            output::write_trace(&trace_path, &trace, 1)?;
            outputs.push(trace_path);
            json!({ "calibration": dynamics.calibration_json(), "memory": memory_summary(cfg, &result)? })
        }
        Command::Fit { data } => {
            let data = data
                .clone()
                .or_else(|| cfg.fit.data.clone())
                .ok_or_else(|| CliError::config("fit needs a data file (--data or `fit.data`)"))?;
            let (summary, rows) = fit_file(cfg, &data)?;
            output::write_fit_rows(out, &rows)?;
            let json_path = output::sibling(out, "json");
            output::write_json(&json_path, &summary)?;
            outputs.push(json_path);
            summary
        }
    };
    let manifest = Manifest {
        command: command.name(),
        config_sha256: output::config_hash(config_text),
        dt_s: cfg.sim.dt,
        packets: cfg.sim.packets,
        seed: cfg.sim.seed,
        outputs,
        results,
    };
    manifest.write(&output::sibling(out, "manifest.json"))?;
    Ok(manifest)
}

/// Transmission over the configured grid, rows evaluated in parallel.
pub fn sweep(cfg: &Config) -> CliResult<TransmissionMap> {
    let s = &cfg.sweep;
    if s.nb == 0 || s.nf == 0 {
        return Err(CliError::config("sweep grid is empty"));
    }
    let grid = FieldSweepGrid::linspace(s.b_min, s.b_max, s.nb, s.f_min_hz, s.f_max_hz, s.nf)?;
    let dev = &cfg.device;
    let rows: Vec<Vec<Complex64>> = grid
        .fields()
        .par_iter()
        .map(|&b| {
            grid.frequencies_hz()
                .iter()
                .map(|&f| s21_with(&dev.resonator, &dev.ensembles, b, spinmem_core::model::angular(f)))
                .collect()
        })
        .collect();
    Ok(TransmissionMap {
        grid,
        values: rows.concat(),
    })
}

/// Fields at which each line is expected to cross the cavity.
pub fn expected_crossings(cfg: &Config) -> Vec<(String, f64)> {
    let mut v: Vec<(String, f64)> = cfg
        .device
        .ensembles
        .iter()
        .map(|e| (e.label.clone(), e.field_at(cfg.device.resonator.omega0)))
        .collect();
    v.sort_by(|a, b| a.1.total_cmp(&b.1));
    v
}

/// Peaks of `|S21|` along the frequency cut at the target's crossing field.
pub fn resonant_cut_peaks(cfg: &Config, freqs_hz: &[f64]) -> Vec<(f64, f64)> {
    let target = cfg.target_ensemble();
    let b0 = target.field_at(cfg.device.resonator.omega0);
    let mag: Vec<f64> = freqs_hz
        .iter()
        .map(|&f| s21_with(&cfg.device.resonator, &cfg.device.ensembles, b0, spinmem_core::model::angular(f)).norm())
        .collect();
    interpolated_peaks(freqs_hz, &mag)
}

fn sweep_summary(cfg: &Config, map: &TransmissionMap) -> Value {
    let found = cavity_line_crossings(map, CROSSING_MIN_JUMP_HZ);
    let expected = expected_crossings(cfg);
    let peaks = resonant_cut_peaks(cfg, map.grid.frequencies_hz());
    let separation = if peaks.len() >= 2 {
        Some(peaks[peaks.len() - 1].0 - peaks[0].0)
    } else {
        None
    };
    json!({
        "crossings_found_t": found,
        "crossings_expected_t": expected.iter().map(|(l, b)| json!({"label": l, "field_t": b})).collect::<Vec<_>>(),
        "resonant_cut_peaks_hz": peaks.iter().map(|p| p.0).collect::<Vec<_>>(),
        "resonant_cut_peak_separation_hz": separation,
        "normal_mode_splitting_hz": normal_mode_splitting(&cfg.device.resonator, cfg.target_ensemble()),
        "unconstrained_ensembles": cfg.unconstrained,
    })
}

/// Rows of `map` within [`CROSSING_FIT_HALF_WINDOW_T`] of the target crossing.
pub fn crossing_window(cfg: &Config, map: &TransmissionMap) -> CliResult<TransmissionMap> {
    let b0 = cfg.target_ensemble().field_at(cfg.device.resonator.omega0);
    let fields = map.grid.fields();
    let nf = map.grid.frequencies_hz().len();
    let keep: Vec<usize> = (0..fields.len())
        .filter(|&i| (fields[i] - b0).abs() <= CROSSING_FIT_HALF_WINDOW_T)
        .collect();
    if keep.len() < 2 {
        return Err(CliError::config("sweep grid does not cover the target crossing"));
    }
    let grid = FieldSweepGrid::new(keep.iter().map(|&i| fields[i]).collect(), map.grid.frequencies_hz().to_vec())?;
    let values = keep.iter().flat_map(|&i| map.values[i * nf..(i + 1) * nf].iter().copied()).collect();
    Ok(TransmissionMap { grid, values })
}

/// Avoided-crossing fit of the target line on the window around it.
pub fn crossing_fit(cfg: &Config, map: &TransmissionMap) -> CliResult<(Value, FitResult)> {
    let window = crossing_window(cfg, map)?;
    let fit = fit_avoided_crossing(&window, &cfg.device, &cfg.target, cfg.fit.residual)?;
    let summary = json!({
        "v_n_hz": cyclic(fit.v_n),
        "gamma2_star_hz": cyclic(fit.gamma2_star),
        "slope_hz_per_t": cyclic(fit.slope),
        "crossing_field_t": fit.crossing_field,
        "converged": fit.fit.converged,
        "cost": fit.fit.cost,
        "iterations": fit.fit.iterations,
    });
    Ok((summary, fit.fit))
}

fn model_and_discretization(cfg: &Config) -> CliResult<(DynamicsModel, EnsembleDiscretization)> {
    let e = cfg.target_ensemble();
    let model = DynamicsModel::from_device(&cfg.device, &cfg.target)?;
    let disc = discretize_with(
        e.v_n,
        e.gamma2_star,
        cfg.sim.packets,
        cfg.sim.cutoff,
        &cfg.sim.discretization_options(),
    )?;
    Ok((model, disc))
}

/// Model, packets and pi-pulse calibration of the target line.
pub struct Dynamics {
    pub model: DynamicsModel,
    pub disc: EnsembleDiscretization,
    pub settings: IntegrationSettings,
    pub cal: PiCalibration,
}

impl Dynamics {
    pub fn prepare(cfg: &Config) -> CliResult<Self> {
        let (model, disc) = model_and_discretization(cfg)?;
        let settings = cfg.sim.integration(cfg.device.resonator.omega0);
        let cal = calibrate_pi_pulse(&model, &disc, cfg.sim.pi_width, settings)?;
        Ok(Self {
            model,
            disc,
            settings,
            cal,
        })
    }

    pub fn calibration_json(&self) -> Value {
        json!({
            "pi_width_s": self.cal.duration,
            "pi_amplitude": self.cal.amplitude,
            "achieved_sz": self.cal.achieved_sz,
        })
    }

    pub fn hahn_echo(&self, tau: f64, theta2: f64, tail: f64) -> CliResult<EchoResult> {
        let seq = spinmem_core::dynamics::EchoSequence::hahn(tau, theta2);
        if (tail - 1e-6).abs() < 1e-15 {
            Ok(simulate_hahn_echo(&self.model, &self.disc, &self.cal, tau, theta2, self.settings)?)
        } else {
            Ok(spinmem_core::dynamics::simulate_echo(
                &self.model,
                &self.disc,
                &self.cal,
                &seq,
                self.settings,
                tail,
            )?)
        }
    }

    /// Arbitrary `pulse.N` train; amplitudes scale the pi amplitude.
    pub fn pulse_train(&self, cfg: &Config) -> CliResult<(SimulationTrace, Value)> {
        let pulses: Vec<TimedPulse> = cfg
            .pulses
            .iter()
            .map(|p| TimedPulse {
                t_start: p.t_start,
                width: p.width,
                drive: Complex64::from_polar(p.amplitude * self.cal.amplitude, p.phase),
            })
            .collect();
        let t0 = pulses.iter().map(|p| p.t_start).fold(f64::INFINITY, f64::min);
        let end = pulses.iter().map(|p| p.end()).fold(f64::NEG_INFINITY, f64::max);
        let seq = PulseSequence::from_pulses(t0, &pulses, end + cfg.echo.tail)?;
        let mut it = Integrator::with_state(
            &self.model,
            &self.disc,
            self.settings,
            EnsembleState::ground(self.disc.len()),
            t0,
        )?;
        let trace = it.run(&seq)?;
        let after = trace.window(end, f64::INFINITY);
        let (i_max, a_max) = after
            .clone()
            .map(|i| (i, trace.a_out[i].norm()))
            .fold((after.start, 0.0), |best, x| if x.1 > best.1 { x } else { best });
        let summary = json!({
            "pulses": cfg.pulses.len(),
            "last_pulse_end_s": end,
            "max_output_after_pulses": a_max,
            "max_output_time_s": if trace.is_empty() { 0.0 } else { trace.time(i_max.min(trace.len() - 1)) },
        });
        Ok((trace, summary))
    }

    pub fn memory(&self, cfg: &Config) -> CliResult<MemoryResult> {
        let t2 = 1.0 / cfg.target_ensemble().gamma2_h;
        Ok(run_memory(&self.model, &self.disc, &self.cal, &cfg.memory, self.settings, t2)?)
    }
}

fn echo_summary(cfg: &Config, r: &EchoResult) -> Value {
    json!({
        "tau_s": cfg.echo.tau,
        "theta2_rad": cfg.echo.theta2,
        "present": r.present,
        "echo_time_s": r.echo_time,
        "echo_offset_from_2tau_s": r.echo_time - 2.0 * cfg.echo.tau,
        "echo_amplitude": r.echo_amplitude,
        "echo_energy": r.echo_energy,
        "echo_phase_rad": r.echo_phase,
    })
}

fn fid_summary(cfg: &Config, fid: &FidResult) -> Value {
    json!({
        "tip_rad": cfg.fid_tip,
        "t2_star_s": fid.t2_star,
        "expected_t2_star_s": 1.0 / cfg.target_ensemble().gamma2_star,
        "relative_rms_residual": fid.relative_rms_residual,
        "exponential": fid.exponential,
    })
}

fn linspace(min: f64, max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![min],
        _ => (0..n).map(|i| min + (max - min) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn check_scan(name: &str, s: &ScanConfig) -> CliResult<()> {
    if s.points == 0 {
        return Err(CliError::config(format!("{name}: grid is empty")));
    }
    if !(s.max >= s.min) {
        return Err(CliError::config(format!("{name}: maximum below minimum")));
    }
    Ok(())
}

/// `(2 tau, amplitude)` of the configured echo-decay grid.
pub fn echo_decay_points(cfg: &Config) -> CliResult<Vec<(f64, f64)>> {
    let d = &cfg.echodecay;
    check_scan(
        "echodecay",
        &ScanConfig {
            min: d.two_tau_min,
            max: d.two_tau_max,
            points: d.points,
        },
    )?;
    let grid = linspace(d.two_tau_min, d.two_tau_max, d.points);
    let t2 = 1.0 / cfg.target_ensemble().gamma2_h;
    match d.mode {
        EchoDecayMode::Analytic => grid
            .iter()
            .map(|&tt| Ok((tt, echo_decay(tt, t2, 1.0, &d.eseem)?)))
            .collect(),
        EchoDecayMode::Simulate => {
            let dynamics = Dynamics::prepare(cfg)?;
            grid.par_iter()
                .map(|&tt| {
                    let r = dynamics.hahn_echo(0.5 * tt, PI, 0.5e-6)?;
                    Ok((tt, r.echo_amplitude * eseem_envelope(0.5 * tt, &d.eseem)?))
                })
                .collect()
        }
    }
}

fn fit_echo_points(cfg: &Config, points: &[(f64, f64)]) -> CliResult<(Value, FitResult)> {
    let usable: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.1 > 0.0).collect();
    let fit = fit_echo_decay(
        &usable,
        &EchoDecayOptions {
            seed_frequency: cfg.fit.seed_frequency,
            split_frequencies: cfg.fit.split_frequencies,
        },
    )?;
    let n = &fit.eseem.nuclei[0];
    let summary = json!({
        "t2_s": fit.t2,
        "a0": fit.a0,
        "depth": n.depth,
        "f_alpha_hz": cyclic(n.omega_alpha),
        "f_beta_hz": cyclic(n.omega_beta),
        "converged": fit.fit.converged,
    });
    Ok((summary, fit.fit))
}

pub fn t2_scan(cfg: &Config) -> CliResult<Vec<(f64, f64)>> {
    let s = &cfg.t2scan;
    check_scan("t2scan", s)?;
    // Logarithmic spacing: the interesting range spans two decades.
    let (lo, hi) = (s.min.ln(), s.max.ln());
    linspace(lo, hi, s.points)
        .par_iter()
        .map(|&x| {
            let t = x.exp();
            Ok((t, t2_of_temperature(t, &cfg.temperature_model)?))
        })
        .collect()
}

fn t2_summary(cfg: &Config) -> CliResult<Value> {
    let m = &cfg.temperature_model;
    let t25 = t2_of_temperature(0.025, m)?;
    let t50 = t2_of_temperature(0.050, m)?;
    Ok(json!({
        "gamma_r_per_s": m.gamma_r,
        "xi_per_s": m.xi,
        "bath_temperatures_k": m.t_i,
        "t2_at_1k_s": t2_of_temperature(1.0, m)?,
        "t2_at_25mk_s": t25,
        "t2_at_50mk_s": t50,
        "relative_change_25_to_50mk": (t25 - t50) / t25,
    }))
}

fn fit_t2_points(cfg: &Config, points: &[(f64, f64)]) -> CliResult<(Value, FitResult)> {
    let (model, fit) = fit_t2_temperature(points, cfg.temperature_model.t_i)?;
    Ok((
        json!({
            "gamma_r_per_s": model.gamma_r,
            "xi_per_s": model.xi,
            "converged": fit.converged,
        }),
        fit,
    ))
}

pub fn theta2_scan(cfg: &Config) -> CliResult<Vec<(f64, f64)>> {
    let s = &cfg.theta2scan;
    check_scan("theta2scan", s)?;
    linspace(s.min, s.max, s.points)
        .iter()
        .map(|&a| Ok((a, 1.0 / id_rate(a, &cfg.id_model)?)))
        .collect()
}

fn memory_summary(cfg: &Config, r: &MemoryResult) -> CliResult<Value> {
    let t2 = 1.0 / cfg.target_ensemble().gamma2_h;
    let eseem = r.with_eseem(cfg.memory.refocus_time, &cfg.memory_eseem)?;
    let capacity = mode_capacity(t2, 1.0 / cfg.target_ensemble().gamma2_star, 100e-9)?;
    Ok(json!({
        "echoes_present": r.pulses.iter().filter(|p| p.present).count(),
        "order": r.order,
        "reversed": r.reversed(),
        "linear": r.linear,
        "max_write_excitation": r.max_write_excitation,
        "efficiency_at_t2_delay": r.efficiency_at_t2_delay,
        "efficiency_at_t2_after_refocus": r.efficiency_at_t2_after_refocus,
        "amplitude_decay_rate_per_s": r.amplitude_decay_rate(),
        "envelope_decay_rate_per_s": r.envelope_decay_rate(),
        "expected_envelope_rate_per_s": 2.0 / t2,
        "echo_amplitudes_with_eseem": eseem,
        "mode_capacity": { "n_m": capacity.n_m, "n_eff_100ns": capacity.n_eff },
    }))
}

/// `(parameter, value, stderr)` rows.
pub type FitRows = Vec<(String, f64, f64)>;

pub fn fit_rows(fit: &FitResult) -> FitRows {
    fit.names
        .iter()
        .zip(&fit.params)
        .zip(&fit.stderr)
        .map(|((n, v), e)| (n.clone(), *v, *e))
        .collect()
}

fn fit_json(fit: &FitResult) -> Value {
    json!({
        "parameters": fit.names,
        "values": fit.params,
        "stderr": fit.stderr.iter().map(|e| if e.is_finite() { json!(e) } else { Value::Null }).collect::<Vec<_>>(),
        "covariance": fit.covariance.iter().map(|e| if e.is_finite() { json!(e) } else { Value::Null }).collect::<Vec<_>>(),
        "cost": fit.cost,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "at_bound": fit.at_bound,
        "poorly_determined": fit.poorly_determined,
        "error_convention": "1 sigma from the covariance scaled by the residual variance",
    })
}

/// Fits a data file, choosing the model from its header.
pub fn fit_file(cfg: &Config, path: &Path) -> CliResult<(Value, FitRows)> {
    let header = output::read_header(path)?;
    let is = |h: &[&str]| header.iter().map(String::as_str).eq(h.iter().copied());
    if is(&output::SWEEP_HEADER) {
        let rows = output::read_table(path, &output::SWEEP_HEADER)?;
        let map = map_from_rows(path, &rows)?;
        if map.grid.fields().len() == 1 {
            let mags: Vec<f64> = map.values.iter().map(|v| v.norm()).collect();
            let fit = fit_resonator(map.grid.frequencies_hz(), &mags)?;
            let mut summary = fit_json(&fit.fit);
            summary["model"] = json!("resonator");
            Ok((summary, fit_rows(&fit.fit)))
        } else {
            let fit = fit_avoided_crossing(&map, &cfg.device, &cfg.target, cfg.fit.residual)?;
            let mut summary = fit_json(&fit.fit);
            summary["model"] = json!("avoided_crossing");
            summary["crossing_field_t"] = json!(fit.crossing_field);
            Ok((summary, fit_rows(&fit.fit)))
        }
    } else if is(&output::ECHODECAY_HEADER) {
        let pts = pairs(output::read_table(path, &output::ECHODECAY_HEADER)?);
        let (extra, fit) = fit_echo_points(cfg, &pts)?;
        let mut summary = fit_json(&fit);
        summary["model"] = json!("echo_decay");
        summary["derived"] = extra;
        Ok((summary, fit_rows(&fit)))
    } else if is(&output::T2SCAN_HEADER) {
        let pts = pairs(output::read_table(path, &output::T2SCAN_HEADER)?);
        let (extra, fit) = fit_t2_points(cfg, &pts)?;
        let mut summary = fit_json(&fit);
        summary["model"] = json!("t2_temperature");
        summary["derived"] = extra;
        Ok((summary, fit_rows(&fit)))
    } else if is(&output::THETA2SCAN_HEADER) {
        let pts = pairs(output::read_table(path, &output::THETA2SCAN_HEADER)?);
        let (_, v_d, fit) = fit_theta2(&pts)?;
        let mut summary = fit_json(&fit);
        summary["model"] = json!("instantaneous_diffusion");
        summary["v_d_hz"] = json!(v_d);
        let mut rows = fit_rows(&fit);
        let rel = fit.stderr[1] / fit.params[1];
        rows.push(("v_d_hz".into(), v_d, v_d * rel));
        Ok((summary, rows))
    } else {
        Err(CliError::config(format!(
            "{}: no fit is defined for columns {header:?}",
            path.display()
        )))
    }
}

fn pairs(rows: Vec<Vec<f64>>) -> Vec<(f64, f64)> {
    rows.into_iter().map(|r| (r[0], r[1])).collect()
}

/// Rebuilds a field-major map from sweep rows.
fn map_from_rows(path: &Path, rows: &[Vec<f64>]) -> CliResult<TransmissionMap> {
    if rows.is_empty() {
        return Err(CliError::config(format!("{}: no data rows", path.display())));
    }
    let b0 = rows[0][0];
    let nf = rows.iter().take_while(|r| r[0] == b0).count();
    if !rows.len().is_multiple_of(nf) {
        return Err(CliError::config(format!("{}: rows do not form a field-major grid", path.display())));
    }
    let freqs: Vec<f64> = rows[..nf].iter().map(|r| r[1]).collect();
    let mut fields = Vec::new();
    for (k, chunk) in rows.chunks(nf).enumerate() {
        let b = chunk[0][0];
        if chunk.iter().zip(&freqs).any(|(r, &f)| r[0] != b || r[1] != f) {
            return Err(CliError::config(format!(
                "{}: field block {} does not repeat the frequency axis",
                path.display(),
                k + 1
            )));
        }
        fields.push(b);
    }
    let grid = FieldSweepGrid::new(fields, freqs)?;
    let values = rows.iter().map(|r| Complex64::new(r[2], r[3])).collect();
    Ok(TransmissionMap { grid, values })
}
