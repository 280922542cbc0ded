use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use spinmem::commands::{self, Command, Recipe};
use spinmem::config::{RawConfig, BUNDLED_ER_YSO};
use spinmem::{CliError, CliResult, Config};

#[derive(Parser)]
#[command(name = "spinmem", version, about = "Spin-ensemble microwave memory simulations")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Key=value configuration file; the bundled Er:YSO file when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output CSV path. The manifest goes to `<out>.manifest.json`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Integration step in nanoseconds (overrides `sim.dt_ns`).
    #[arg(long, global = true)]
    dt_ns: Option<f64>,

    /// Number of spin packets (overrides `sim.packets`).
    #[arg(long, global = true)]
    packets: Option<usize>,

    /// Worker threads for parallel scans.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for the sampled discretisation (overrides `sim.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Transmission map over field and frequency.
    Sweep,
    /// Hahn echo, or the `pulse.N` train when one is configured.
    Echo,
    /// Free-induction decay after a small tip.
    Fid,
    /// Echo amplitude against the pulse delay.
    Echodecay,
    /// Coherence time against temperature.
    T2scan,
    /// Coherence time against the refocusing angle.
    Theta2scan,
    /// Multi-pulse storage and retrieval.
    Memory,
    /// Fit a CSV written by one of the other subcommands.
    Fit {
        /// Data file; defaults to `fit.data` in the configuration.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Regenerate one of the reference figures.
    Recipe {
        #[arg(value_enum)]
        figure: Figure,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Figure {
    Fig1b,
    Fig2a,
    Fig2b,
    Fig3,
    Fig4,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spinmem: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?,
        None => BUNDLED_ER_YSO.to_string(),
    };
    let mut raw = RawConfig::parse(&text)?;
    let mut effective = text.clone();
    let mut set = |key: &str, value: String| {
        effective.push_str(&format!("\n{key} = {value}"));
        raw.set(key, value);
    };
    if let Some(dt) = cli.dt_ns {
        set("sim.dt_ns", dt.to_string());
    }
    if let Some(m) = cli.packets {
        set("sim.packets", m.to_string());
    }
    if let Some(s) = cli.seed {
        set("sim.seed", s.to_string());
    }
    let cfg = Config::from_raw(&raw)?;

    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }

    let command = match cli.command {
        Cmd::Sweep => Command::Sweep,
        Cmd::Echo => Command::Echo,
        Cmd::Fid => Command::Fid,
        Cmd::Echodecay => Command::EchoDecay,
        Cmd::T2scan => Command::T2Scan,
        Cmd::Theta2scan => Command::Theta2Scan,
        Cmd::Memory => Command::Memory,
        Cmd::Fit { data } => Command::Fit { data },
        Cmd::Recipe { figure } => Command::Recipe(match figure {
            Figure::Fig1b => Recipe::Fig1b,
            Figure::Fig2a => Recipe::Fig2a,
            Figure::Fig2b => Recipe::Fig2b,
            Figure::Fig3 => Recipe::Fig3,
            Figure::Fig4 => Recipe::Fig4,
        }),
    };
    let out = cli
        .out
        .ok_or_else(|| CliError::config("--out is required"))?;
    let manifest = commands::run(&command, &cfg, &effective, &out)?;
    for path in &manifest.outputs {
        println!("{}", path.display());
    }
    Ok(())
}
