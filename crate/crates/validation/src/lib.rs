//! Pass/fail bookkeeping for the validation runs.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

/// One measured quantity and whether it met its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub what: String,
    pub pass: bool,
}

impl Check {
    pub fn new(what: impl Into<String>, pass: bool) -> Self {
        Self { what: what.into(), pass }
    }
}

/// `|a / b - 1|`.
pub fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

/// A criterion passes when it has at least one check and all of them pass.
pub fn passed(checks: &[Check]) -> bool {
    !checks.is_empty() && checks.iter().all(|c| c.pass)
}

/// The single summary line of a criterion. Failing checks are marked `[x]`.
pub fn format_line(id: usize, title: &str, checks: &[Check], elapsed: Duration) -> String {
    let details: Vec<String> = checks
        .iter()
        .map(|c| format!("{}{}", if c.pass { "" } else { "[x] " }, c.what))
        .collect();
    format!(
        "AC{id:<2} {} {title} ({:.1} s): {}",
        if passed(checks) { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        details.join("; ")
    )
}

/// Runs `f`, prints its line and returns whether it passed. A panic inside
/// `f` counts as a failed check carrying the panic message.
pub fn run_criterion(id: usize, title: &str, f: impl FnOnce() -> Vec<Check>) -> bool {
    let start = Instant::now();
    let checks = match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(c) => c,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            vec![Check::new(format!("error: {msg}"), false)]
        }
    };
    println!("{}", format_line(id, title, &checks, start.elapsed()));
    passed(&checks)
}
