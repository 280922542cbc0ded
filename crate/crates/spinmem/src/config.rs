//! Flat `key = value` configuration files.
//!
//! Lines are `section.key = value`; `#` starts a comment. Sections other
//! than the reserved ones below describe sub-ensembles and are named by
//! their label (`s2a.g = 1.1`). Pulse trains use `pulse.N.field` entries.
//! Every key in a file must be consumed, so a misspelt key is an error.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::path::PathBuf;

use spinmem_core::decoherence::{EseemParams, IdModel, TemperatureModel};
use spinmem_core::dynamics::{DiscretizationOptions, IntegrationSettings, Lineshape, Sampling};
use spinmem_core::fitting::CrossingResidual;
use spinmem_core::model::{angular, DeviceConfig, Resonator, SubEnsemble, MU_B_OVER_H};
use spinmem_core::protocols::MemoryExperiment;

use crate::error::{CliError, CliResult};

/// The Er:YSO device and default run parameters shipped with the tool.
pub const BUNDLED_ER_YSO: &str = include_str!("../config/er_yso.cfg");

const RESERVED: [&str; 13] = [
    "resonator",
    "device",
    "sim",
    "sweep",
    "echo",
    "pulse",
    "fid",
    "echodecay",
    "decoherence",
    "t2scan",
    "theta2scan",
    "memory",
    "fit",
];

/// Parsed but untyped entries, with the line each came from.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, usize)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("line {line_no}: expected `key = value`")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || k.contains(char::is_whitespace) || !k.contains('.') {
                return Err(CliError::config(format!("line {line_no}: malformed key `{k}`")));
            }
            if v.is_empty() {
                return Err(CliError::config(format!("line {line_no}: key `{k}` has no value")));
            }
            if entries.insert(k.to_string(), (v.to_string(), line_no)).is_some() {
                return Err(CliError::config(format!("line {line_no}: duplicate key `{k}`")));
            }
        }
        Ok(Self { entries })
    }

    /// Sets or replaces a value (used for command-line overrides).
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), (value.to_string(), 0));
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Typed access that remembers which keys were read.
struct Reader<'a> {
    raw: &'a RawConfig,
    used: RefCell<BTreeSet<String>>,
}

impl<'a> Reader<'a> {
    fn new(raw: &'a RawConfig) -> Self {
        Self {
            raw,
            used: RefCell::new(BTreeSet::new()),
        }
    }

    fn str(&self, key: &str) -> Option<&'a str> {
        let v = self.raw.entries.get(key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some(v.0.as_str())
    }

    fn opt_f64(&self, key: &str) -> CliResult<Option<f64>> {
        match self.str(key) {
            None => Ok(None),
            Some(s) => s
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| CliError::config(format!("key `{key}`: expected a number, got `{s}`"))),
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> CliResult<f64> {
        Ok(self.opt_f64(key)?.unwrap_or(default))
    }

    fn req_f64(&self, key: &str) -> CliResult<f64> {
        self.opt_f64(key)?
            .ok_or_else(|| CliError::config(format!("missing key `{key}`")))
    }

    fn positive(&self, key: &str, default: f64) -> CliResult<f64> {
        let v = self.f64_or(key, default)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(CliError::config(format!("key `{key}`: must be positive, got {v}")))
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> CliResult<usize> {
        match self.str(key) {
            None => Ok(default),
            Some(s) => s
                .parse::<usize>()
                .map_err(|_| CliError::config(format!("key `{key}`: expected a non-negative integer, got `{s}`"))),
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> CliResult<bool> {
        match self.str(key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(s) => Err(CliError::config(format!("key `{key}`: expected true or false, got `{s}`"))),
        }
    }

    fn unused(&self) -> Vec<String> {
        let used = self.used.borrow();
        self.raw
            .entries
            .keys()
            .filter(|k| !used.contains(*k))
            .cloned()
            .collect()
    }
}

/// Settings of the time-domain model.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub packets: usize,
    pub cutoff: f64,
    pub lineshape: Lineshape,
    /// Seed of the random sampling mode; quadrature when absent.
    pub seed: Option<u64>,
    pub decimation: usize,
    pub pi_width: f64,
}

impl SimConfig {
    pub fn discretization_options(&self) -> DiscretizationOptions {
        DiscretizationOptions {
            lineshape: self.lineshape,
            sampling: match self.seed {
                Some(seed) => Sampling::Random { seed },
                None => Sampling::Quadrature,
            },
            allow_degenerate: false,
        }
    }

    pub fn integration(&self, frame_frequency: f64) -> IntegrationSettings {
        IntegrationSettings::new(frame_frequency)
            .with_dt(self.dt)
            .with_decimation(self.decimation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub b_min: f64,
    pub b_max: f64,
    pub nb: usize,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub nf: usize,
}

/// One `pulse.N` entry: times in seconds, amplitude in units of the
/// calibrated pi-pulse amplitude, phase in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec {
    pub index: usize,
    pub t_start: f64,
    pub width: f64,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EchoConfig {
    pub tau: f64,
    pub theta2: f64,
    pub tail: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EchoDecayMode {
    /// Closed-form decay times the ESEEM envelope.
    Analytic,
    /// Hahn echoes from the time-domain model, ESEEM applied afterwards.
    Simulate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EchoDecayConfig {
    pub mode: EchoDecayMode,
    pub two_tau_min: f64,
    pub two_tau_max: f64,
    pub points: usize,
    pub eseem: EseemParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub data: Option<PathBuf>,
    pub residual: CrossingResidual,
    /// Seed of the nuclear frequency for echo-decay fits (rad/s).
    pub seed_frequency: f64,
    pub split_frequencies: bool,
}

/// Everything a command needs, in SI units with angular rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub device: DeviceConfig,
    pub target: String,
    /// Labels of ensembles whose coupling and width are placeholders.
    pub unconstrained: Vec<String>,
    pub sim: SimConfig,
    pub sweep: SweepConfig,
    pub echo: EchoConfig,
    pub pulses: Vec<PulseSpec>,
    pub fid_tip: f64,
    pub echodecay: EchoDecayConfig,
    pub temperature_model: TemperatureModel,
    pub t2scan: ScanConfig,
    pub id_model: IdModel,
    pub theta2scan: ScanConfig,
    pub memory: MemoryExperiment,
    pub memory_eseem: EseemParams,
    pub fit: FitConfig,
}

impl Config {
    pub fn bundled() -> Self {
        Self::from_raw(&RawConfig::parse(BUNDLED_ER_YSO).expect("bundled config parses"))
            .expect("bundled config is valid")
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        Self::from_raw(&RawConfig::parse(text)?)
    }

    pub fn from_raw(raw: &RawConfig) -> CliResult<Self> {
        let r = Reader::new(raw);
        let resonator = Resonator::symmetric_from_q(
            r.positive("resonator.f0_ghz", 3.721)? * 1e9,
            r.positive("resonator.kappa_mhz", 8.2)? * 1e6,
            r.positive("resonator.q_int", 400.0)?,
        )?;
        let field = r.f64_or("device.field_mt", 246.0)? * 1e-3;
        if field < 0.0 {
            return Err(CliError::config("key `device.field_mt`: must be non-negative"));
        }
        let temperature = r.positive("device.temperature_mk", 25.0)? * 1e-3;

        let (ensembles, unconstrained) = read_ensembles(&r, raw, &resonator)?;
        if ensembles.is_empty() {
            return Err(CliError::config("no sub-ensembles defined"));
        }
        let device = DeviceConfig {
            resonator,
            ensembles,
            field,
            temperature,
        };
        device.validate()?;
        let target = r.str("device.target").unwrap_or("s2a").to_string();
        if device.ensemble(&target).is_none() {
            return Err(CliError::config(format!("key `device.target`: no ensemble `{target}`")));
        }

        let lineshape = match r.str("sim.lineshape").unwrap_or("lorentzian") {
            "lorentzian" => Lineshape::Lorentzian,
            "gaussian" => Lineshape::Gaussian,
            other => return Err(CliError::config(format!("key `sim.lineshape`: unknown lineshape `{other}`"))),
        };
        let seed = match r.str("sim.seed") {
            None => None,
            Some(s) => Some(
                s.parse::<u64>()
                    .map_err(|_| CliError::config(format!("key `sim.seed`: expected an integer, got `{s}`")))?,
            ),
        };
        let sim = SimConfig {
            dt: r.positive("sim.dt_ns", 0.05)? * 1e-9,
            packets: r.usize_or("sim.packets", 2001)?,
            cutoff: r.positive("sim.cutoff", 15.0)?,
            lineshape,
            seed,
            decimation: r.usize_or("sim.decimation", 10)?,
            pi_width: r.positive("sim.pi_width_ns", 40.0)? * 1e-9,
        };
        if sim.packets < 2 {
            return Err(CliError::config("key `sim.packets`: need at least 2 packets"));
        }
        if sim.decimation == 0 {
            return Err(CliError::config("key `sim.decimation`: must be at least 1"));
        }

        let sweep = SweepConfig {
            b_min: r.f64_or("sweep.b_min_mt", 0.0)? * 1e-3,
            b_max: r.f64_or("sweep.b_max_mt", 300.0)? * 1e-3,
            nb: r.usize_or("sweep.nb", 600)?,
            f_min_hz: r.positive("sweep.f_min_ghz", 3.681)? * 1e9,
            f_max_hz: r.positive("sweep.f_max_ghz", 3.761)? * 1e9,
            nf: r.usize_or("sweep.nf", 600)?,
        };

        let echo = EchoConfig {
            tau: r.positive("echo.tau_us", 0.4)? * 1e-6,
            theta2: r.positive("echo.theta2_deg", 180.0)?.to_radians(),
            tail: r.positive("echo.tail_us", 1.0)? * 1e-6,
        };
        if echo.theta2 > PI + 1e-12 {
            return Err(CliError::config("key `echo.theta2_deg`: must lie in (0, 180]"));
        }
        let pulses = read_pulses(&r, raw)?;
        let fid_tip = r.positive("fid.tip_deg", 10.0)?.to_radians();

        let larmor_field = field;
        let echodecay = EchoDecayConfig {
            mode: match r.str("echodecay.mode").unwrap_or("analytic") {
                "analytic" => EchoDecayMode::Analytic,
                "simulate" => EchoDecayMode::Simulate,
                other => return Err(CliError::config(format!("key `echodecay.mode`: unknown mode `{other}`"))),
            },
            two_tau_min: r.positive("echodecay.two_tau_min_us", 0.5)? * 1e-6,
            two_tau_max: r.positive("echodecay.two_tau_max_us", 14.0)? * 1e-6,
            points: r.usize_or("echodecay.points", 120)?,
            eseem: eseem(&r, "echodecay.eseem_depth", larmor_field)?,
        };

        let gamma_r = 1.0 / (r.positive("decoherence.t2_floor_us", 5.63)? * 1e-6);
        let t_i: [f64; 3] = device
            .bath_temperatures(&target)
            .try_into()
            .map_err(|_| CliError::config("the temperature model needs exactly three ensembles besides the target"))?;
        let temperature_model = match (r.opt_f64("decoherence.xi_per_us")?, r.opt_f64("decoherence.t2_at_1k_us")?) {
            (Some(_), Some(_)) => {
                return Err(CliError::config(
                    "keys `decoherence.xi_per_us` and `decoherence.t2_at_1k_us` are mutually exclusive",
                ))
            }
            (Some(xi), None) => TemperatureModel::new(gamma_r, xi * 1e6, t_i)?,
            (None, t2_1k) => TemperatureModel::through_point(gamma_r, 1.0, t2_1k.unwrap_or(4.4) * 1e-6, t_i)?,
        };
        let t2scan = ScanConfig {
            min: r.positive("t2scan.t_min_k", 0.01)?,
            max: r.positive("t2scan.t_max_k", 2.0)?,
            points: r.usize_or("t2scan.points", 60)?,
        };

        let id_model = IdModel::from_endpoints(
            r.positive("theta2scan.t2_small_angle_us", 7.0)? * 1e-6,
            r.positive("theta2scan.t2_pi_us", 5.6)? * 1e-6,
        )?;
        let theta2scan = ScanConfig {
            min: 0.0,
            max: PI,
            points: r.usize_or("theta2scan.points", 19)?,
        };

        let defaults = MemoryExperiment::sixteen_pulse();
        let memory = MemoryExperiment {
            n_pulses: r.usize_or("memory.n_pulses", defaults.n_pulses)?,
            pulse_width: r.positive("memory.width_ns", defaults.pulse_width * 1e9)? * 1e-9,
            pulse_spacing: r.positive("memory.spacing_ns", defaults.pulse_spacing * 1e9)? * 1e-9,
            input_amplitude: r.positive("memory.amplitude", defaults.input_amplitude)?,
            input_phase: r.f64_or("memory.phase_deg", 0.0)?.to_radians(),
            refocus_time: r.positive("memory.refocus_us", defaults.refocus_time * 1e6)? * 1e-6,
            tail: r.positive("memory.tail_ns", defaults.tail * 1e9)? * 1e-9,
            subtract_reference: r.bool_or("memory.subtract_reference", defaults.subtract_reference)?,
        };
        let memory_eseem = eseem(&r, "memory.eseem_depth", larmor_field)?;

        let fit = FitConfig {
            data: r.str("fit.data").map(PathBuf::from),
            residual: match r.str("fit.residual").unwrap_or("magnitude") {
                "magnitude" => CrossingResidual::Magnitude,
                "complex" => CrossingResidual::Complex,
                other => return Err(CliError::config(format!("key `fit.residual`: unknown residual `{other}`"))),
            },
            seed_frequency: angular(
                r.f64_or(
                    "fit.seed_frequency_mhz",
                    spinmem_core::decoherence::YTTRIUM_89_GAMMA_HZ_PER_T * field / 1e6,
                )? * 1e6,
            ),
            split_frequencies: r.bool_or("fit.split_frequencies", false)?,
        };

        let unused = r.unused();
        if let Some(k) = unused.first() {
            return Err(CliError::config(format!("unknown key `{k}`")));
        }
        Ok(Config {
            device,
            target,
            unconstrained,
            sim,
            sweep,
            echo,
            pulses,
            fid_tip,
            echodecay,
            temperature_model,
            t2scan,
            id_model,
            theta2scan,
            memory,
            memory_eseem,
            fit,
        })
    }

    pub fn target_ensemble(&self) -> &SubEnsemble {
        self.device
            .ensemble(&self.target)
            .expect("target checked at load time")
    }
}

fn eseem(r: &Reader, key: &str, field: f64) -> CliResult<EseemParams> {
    match r.opt_f64(key)? {
        None => Ok(EseemParams::none()),
        Some(k) if (0.0..=1.0).contains(&k) => Ok(EseemParams::yttrium(k, field)),
        Some(k) => Err(CliError::config(format!("key `{key}`: depth must lie in [0, 1], got {k}"))),
    }
}

fn read_ensembles(r: &Reader, raw: &RawConfig, resonator: &Resonator) -> CliResult<(Vec<SubEnsemble>, Vec<String>)> {
    // Labels in order of first appearance in the file.
    let mut labels: Vec<(usize, String)> = Vec::new();
    for (key, (_, line)) in &raw.entries {
        let section = key.split('.').next().unwrap_or("");
        if RESERVED.contains(&section) {
            continue;
        }
        match labels.iter_mut().find(|(_, l)| l == section) {
            Some(entry) => entry.0 = entry.0.min(*line),
            None => labels.push((*line, section.to_string())),
        }
    }
    labels.sort();
    let mut out = Vec::new();
    let mut unconstrained = Vec::new();
    for (_, label) in labels {
        let k = |name: &str| format!("{label}.{name}");
        let g = r.req_f64(&k("g"))?;
        let mut e = SubEnsemble {
            label: label.clone(),
            g,
            v_n: angular(r.req_f64(&k("vn_mhz"))? * 1e6),
            gamma2_star: angular(r.req_f64(&k("gamma2star_mhz"))? * 1e6),
            gamma2_h: 1.0 / (r.positive(&k("t2_us"), 5.6)? * 1e-6),
            gamma1: 1.0 / r.positive(&k("t1_s"), 10.0)?,
            n_s: r.f64_or(&k("n_s"), 0.0)?,
            freq_offset: 0.0,
        };
        match (r.opt_f64(&k("offset_mhz"))?, r.opt_f64(&k("resonance_mt"))?) {
            (Some(_), Some(_)) => {
                return Err(CliError::config(format!(
                    "keys `{}` and `{}` are mutually exclusive",
                    k("offset_mhz"),
                    k("resonance_mt")
                )))
            }
            (Some(off), None) => e.freq_offset = angular(off * 1e6),
            (None, Some(b_mt)) => e.freq_offset = resonator.omega0 - angular(g * MU_B_OVER_H * b_mt * 1e-3),
            (None, None) => {}
        }
        if r.bool_or(&k("unconstrained"), false)? {
            unconstrained.push(label.clone());
        }
        e.validate()
            .map_err(|err| CliError::config(format!("ensemble `{label}`: {err}")))?;
        out.push(e);
    }
    Ok((out, unconstrained))
}

fn read_pulses(r: &Reader, raw: &RawConfig) -> CliResult<Vec<PulseSpec>> {
    let mut indices = BTreeSet::new();
    for key in raw.keys() {
        if let Some(rest) = key.strip_prefix("pulse.") {
            let idx = rest
                .split('.')
                .next()
                .and_then(|n| n.parse::<usize>().ok())
                .ok_or_else(|| CliError::config(format!("key `{key}`: expected `pulse.N.field`")))?;
            indices.insert(idx);
        }
    }
    let mut pulses = Vec::new();
    for idx in indices {
        let k = |name: &str| format!("pulse.{idx}.{name}");
        let p = PulseSpec {
            index: idx,
            t_start: r.req_f64(&k("t_start_ns"))? * 1e-9,
            width: r.req_f64(&k("width_ns"))? * 1e-9,
            amplitude: r.req_f64(&k("amplitude"))?,
            phase: r.f64_or(&k("phase_deg"), 0.0)?.to_radians(),
        };
        if !(p.width > 0.0) || !(p.amplitude >= 0.0) {
            return Err(CliError::config(format!(
                "pulse {idx}: width must be positive and amplitude non-negative"
            )));
        }
        pulses.push(p);
    }
    Ok(pulses)
}
