//! CSV tables and the run manifest.
//!
//! Numbers are written with Rust's shortest round-trip formatting so a
//! table read back parses to the identical `f64`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use spinmem_core::dynamics::SimulationTrace;
use spinmem_core::protocols::MemoryResult;
use spinmem_core::spectroscopy::TransmissionMap;

use crate::error::{CliError, CliResult};

pub const SWEEP_HEADER: [&str; 5] = ["b_tesla", "f_hz", "s21_re", "s21_im", "s21_abs"];
pub const TRACE_HEADER: [&str; 6] = ["t_s", "a_out_re", "a_out_im", "a_out_abs", "alpha_abs", "mx_abs"];
pub const ECHODECAY_HEADER: [&str; 2] = ["two_tau_s", "amplitude"];
pub const T2SCAN_HEADER: [&str; 2] = ["temperature_k", "t2_s"];
pub const THETA2SCAN_HEADER: [&str; 2] = ["theta2_rad", "t2_s"];
pub const MEMORY_HEADER: [&str; 7] = ["pulse_idx", "t_in_s", "e_in", "t_echo_s", "e_echo", "amp_echo", "efficiency"];
pub const FIT_HEADER: [&str; 3] = ["parameter", "value", "stderr"];

/// Writes rows of numbers under `header`.
pub fn write_table<const N: usize>(
    path: &Path,
    header: [&str; N],
    rows: impl IntoIterator<Item = [f64; N]>,
) -> CliResult<()> {
    let mut w = open_csv(path)?;
    w.write_record(header).map_err(|e| csv_io(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(|&v| num(v)))
            .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_sweep(path: &Path, map: &TransmissionMap) -> CliResult<()> {
    write_table(
        path,
        SWEEP_HEADER,
        map.iter().map(|(b, f, s)| [b, f, s.re, s.im, s.norm()]),
    )
}

/// Time trace, sampled every `every`-th stored sample.
pub fn write_trace(path: &Path, trace: &SimulationTrace, every: usize) -> CliResult<()> {
    let every = every.max(1);
    write_table(
        path,
        TRACE_HEADER,
        (0..trace.len()).step_by(every).map(|i| {
            let a = trace.a_out[i];
            [trace.time(i), a.re, a.im, a.norm(), trace.alpha[i].norm(), trace.magnetization[i].norm()]
        }),
    )
}

pub fn write_memory(path: &Path, result: &MemoryResult) -> CliResult<()> {
    let mut w = open_csv(path)?;
    w.write_record(MEMORY_HEADER).map_err(|e| csv_io(path, e))?;
    for (j, p) in result.pulses.iter().enumerate() {
        w.write_record([
            j.to_string(),
            num(p.t_in),
            num(p.e_in),
            num(p.t_echo),
            num(p.e_echo),
            num(p.amp_echo),
            num(p.efficiency),
        ])
        .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// `parameter,value,stderr` rows.
pub fn write_fit_rows(path: &Path, rows: &[(String, f64, f64)]) -> CliResult<()> {
    let mut w = open_csv(path)?;
    w.write_record(FIT_HEADER).map_err(|e| csv_io(path, e))?;
    for (name, value, err) in rows {
        w.write_record([name.clone(), num(*value), num(*err)])
            .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Shortest round-trip text for `v`, in exponent form outside `[1e-3, 1e9)`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-3..1e9).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

fn open_csv(path: &Path) -> CliResult<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_io(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::config(format!("{}: {other:?}", path.display())),
    }
}

/// Reads a numeric table, checking the header against `expected`.
pub fn read_table(path: &Path, expected: &[&str]) -> CliResult<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| csv_io(path, e))?.iter().map(String::from).collect();
    if header != expected {
        return Err(CliError::config(format!(
            "{}: expected columns {expected:?}, found {header:?}",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_io(path, e))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|_| CliError::config(format!("{}: row {}: non-numeric value", path.display(), n + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Header of a CSV file, for picking a fit by schema.
pub fn read_header(path: &Path) -> CliResult<Vec<String>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    Ok(r.headers().map_err(|e| csv_io(path, e))?.iter().map(String::from).collect())
}

/// Hex SHA-256 of the configuration text.
pub fn config_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Side file `<out>.<suffix>`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".");
    name.push(suffix);
    PathBuf::from(name)
}

/// Reproducibility record written next to every output.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub dt_s: f64,
    pub packets: usize,
    pub seed: Option<u64>,
    pub outputs: Vec<PathBuf>,
    pub results: Value,
}

impl Manifest {
    pub fn to_json(&self) -> Value {
        json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "config_sha256": self.config_sha256,
            "dt_s": self.dt_s,
            "packets": self.packets,
            "seed": self.seed,
            "outputs": self.outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "results": self.results,
        })
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_json(path, &self.to_json())
    }
}

pub fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(path, e.into()))?;
    writeln!(w).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, 1.0, -2.5e-7, 5.6e-6, 3.721e9, 1e-300, f64::MAX, 0.1 + 0.2] {
            let t = num(v);
            assert_eq!(t.parse::<f64>().unwrap(), v, "{t}");
        }
        assert_eq!(num(5.6e-6), "5.6e-6");
        assert_eq!(num(0.25), "0.25");
    }

    #[test]
    fn tables_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let rows = [[0.1, 1.0 / 3.0], [f64::MIN_POSITIVE, -2.5e-300]];
        write_table(&path, T2SCAN_HEADER, rows).unwrap();
        let back = read_table(&path, &T2SCAN_HEADER).unwrap();
        assert_eq!(back, rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
        assert!(read_table(&path, &THETA2SCAN_HEADER).is_err());
    }

    #[test]
    fn hash_and_sibling() {
        assert_eq!(
            config_hash("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(sibling(Path::new("out/x.csv"), "manifest.json"), PathBuf::from("out/x.csv.manifest.json"));
    }

    #[test]
    fn unwritable_path_reports_the_path() {
        let err = write_table(Path::new("/nonexistent-dir/x.csv"), T2SCAN_HEADER, [[1.0, 2.0]]).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"));
        assert_eq!(err.exit_code(), 2);
    }
}
