//! Bounded Levenberg-Marquardt with a forward-difference Jacobian.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::linalg::{cholesky_solve, symmetric_eigen, SquareMatrix};
use crate::math::sqrt;
use crate::{Error, Result};

/// A named, bounded fit parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub initial: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, initial: f64, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            initial,
            lower,
            upper,
        }
    }

    pub fn unbounded(name: impl Into<String>, initial: f64) -> Self {
        Self::new(name, initial, f64::NEG_INFINITY, f64::INFINITY)
    }

    fn clamp(&self, x: f64) -> f64 {
        x.max(self.lower).min(self.upper)
    }
}

/// Parameters plus a residual evaluator `r(p)` writing into a buffer of
/// length `n_residuals`.
pub struct FitProblem<F> {
    pub params: Vec<Parameter>,
    pub residual: F,
    pub n_residuals: usize,
}

impl<F> FitProblem<F>
where
    F: Fn(&[f64], &mut [f64]),
{
    pub fn new(params: Vec<Parameter>, residual: F, n_residuals: usize) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::arg("params", "at least one parameter is required"));
        }
        for p in &params {
            if !(p.lower <= p.upper) {
                return Err(Error::arg("bounds", "lower bound exceeds upper bound"));
            }
            if !(p.initial >= p.lower && p.initial <= p.upper) || !p.initial.is_finite() {
                return Err(Error::arg("initial", "initial value outside its bounds"));
            }
        }
        if n_residuals < params.len() {
            return Err(Error::arg("residuals", "fewer residuals than parameters"));
        }
        Ok(Self {
            params,
            residual,
            n_residuals,
        })
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) -> f64 {
        (self.residual)(x, out);
        out.iter().map(|r| r * r).sum()
    }
}

/// Fixed settings of the engine. The defaults are the ones every routine in
/// this crate uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmSettings {
    pub max_iterations: usize,
    /// Stop when `|dx| <= xtol (|x| + xtol)`.
    pub xtol: f64,
    /// Stop when the relative decrease of the cost is below `ftol`.
    pub ftol: f64,
    /// Relative forward-difference step.
    pub rel_step: f64,
    /// Absolute floor of the forward-difference step.
    pub abs_step: f64,
    pub initial_damping: f64,
    pub max_damping: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            xtol: 1e-10,
            ftol: 1e-12,
            rel_step: 1e-6,
            abs_step: 1e-12,
            initial_damping: 1e-3,
            max_damping: 1e32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    /// One-sigma errors from `s^2 (J^T J)^-1` with `s^2 = cost / (m - n)`;
    /// infinite along directions the data do not constrain.
    pub stderr: Vec<f64>,
    /// Row-major `n x n` covariance.
    pub covariance: Vec<f64>,
    /// Residual sum of squares.
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Cost after the start and after every accepted step.
    pub cost_history: Vec<f64>,
    /// Parameters sitting on a bound.
    pub at_bound: Vec<bool>,
    /// Parameters the data barely constrain (relative error above one, or
    /// in the null space of `J^T J`).
    pub poorly_determined: Vec<bool>,
}

impl FitResult {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.params[i])
    }

    pub fn error(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.stderr[i])
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }
}

fn jacobian<F: Fn(&[f64], &mut [f64])>(
    problem: &FitProblem<F>,
    x: &[f64],
    r: &[f64],
    settings: &LmSettings,
    jac: &mut [f64],
    scratch: &mut [f64],
) {
    let n = x.len();
    let m = r.len();
    let mut xp = x.to_vec();
    for j in 0..n {
        let p = &problem.params[j];
        let mut h = (settings.rel_step * x[j].abs()).max(settings.abs_step);
        if x[j] + h > p.upper {
            h = -h;
        }
        xp[j] = x[j] + h;
        let h = xp[j] - x[j];
        (problem.residual)(&xp, scratch);
        for i in 0..m {
            jac[i * n + j] = (scratch[i] - r[i]) / h;
        }
        xp[j] = x[j];
    }
}

fn normal_equations(jac: &[f64], r: &[f64], n: usize) -> (SquareMatrix, Vec<f64>) {
    let m = r.len();
    let mut a = SquareMatrix::zeros(n);
    let mut g = vec![0.0; n];
    for i in 0..m {
        let row = &jac[i * n..(i + 1) * n];
        for p in 0..n {
            g[p] += row[p] * r[i];
            for q in 0..=p {
                let v = a.get(p, q) + row[p] * row[q];
                a.set(p, q, v);
            }
        }
    }
    for p in 0..n {
        for q in 0..p {
            let v = a.get(p, q);
            a.set(q, p, v);
        }
    }
    (a, g)
}

/// Runs the engine with default settings.
pub fn least_squares<F: Fn(&[f64], &mut [f64])>(problem: &FitProblem<F>) -> Result<FitResult> {
    least_squares_with(problem, &LmSettings::default())
}

pub fn least_squares_with<F: Fn(&[f64], &mut [f64])>(
    problem: &FitProblem<F>,
    settings: &LmSettings,
) -> Result<FitResult> {
    let n = problem.params.len();
    let m = problem.n_residuals;
    let mut x: Vec<f64> = problem.params.iter().map(|p| p.initial).collect();
    let mut r = vec![0.0; m];
    let mut r_trial = vec![0.0; m];
    let mut scratch = vec![0.0; m];
    let mut jac = vec![0.0; m * n];
    let mut cost = problem.eval(&x, &mut r);
    if !cost.is_finite() {
        return Err(Error::arg("initial", "residuals are not finite at the start point"));
    }
    let mut history = vec![cost];
    let mut lambda = settings.initial_damping;
    let mut converged = cost == 0.0;
    let mut iterations = 0;

    'outer: while !converged && iterations < settings.max_iterations {
        iterations += 1;
        jacobian(problem, &x, &r, settings, &mut jac, &mut scratch);
        let (a, g) = normal_equations(&jac, &r, n);
        let diag = a.diag();
        let dmax = diag.iter().cloned().fold(0.0, f64::max);
        if dmax == 0.0 {
            // Residuals do not depend on any parameter.
            converged = true;
            break;
        }
        loop {
            let mut damped = a.clone();
            for i in 0..n {
                let d = diag[i].max(1e-12 * dmax);
                damped.set(i, i, diag[i] + lambda * d);
            }
            let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
            let step = match cholesky_solve(&damped, &neg_g) {
                Some(s) => s,
                None => {
                    lambda *= 10.0;
                    if lambda > settings.max_damping {
                        return Err(Error::NoConvergence {
                            what: "least squares (damping exceeded its cap)",
                        });
                    }
                    continue;
                }
            };
            let trial: Vec<f64> = x
                .iter()
                .zip(&step)
                .zip(&problem.params)
                .map(|((xi, si), p)| p.clamp(xi + si))
                .collect();
            let dx: f64 = sqrt(trial.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum());
            let xnorm: f64 = sqrt(x.iter().map(|v| v * v).sum());
            let small_step = dx <= settings.xtol * (xnorm + settings.xtol);
            let trial_cost = problem.eval(&trial, &mut r_trial);
            if trial_cost.is_finite() && trial_cost < cost {
                let rel_drop = (cost - trial_cost) / cost;
                x = trial;
                core::mem::swap(&mut r, &mut r_trial);
                cost = trial_cost;
                history.push(cost);
                lambda = (lambda / 10.0).max(1e-15);
                if small_step || rel_drop <= settings.ftol || cost == 0.0 {
                    converged = true;
                }
                continue 'outer;
            }
            if small_step {
                // No decrease even for a vanishing step: at a minimum to
                // working precision.
                converged = true;
                break 'outer;
            }
            lambda *= 10.0;
            if lambda > settings.max_damping {
                return Err(Error::NoConvergence {
                    what: "least squares (damping exceeded its cap)",
                });
            }
        }
    }

    // Covariance at the solution.
    jacobian(problem, &x, &r, settings, &mut jac, &mut scratch);
    let (a, _) = normal_equations(&jac, &r, n);
    let dof = if m > n { (m - n) as f64 } else { 1.0 };
    let s2 = cost / dof;
    let (covariance, null) = covariance_from_normal(&a, s2);
    let stderr: Vec<f64> = (0..n)
        .map(|i| {
            if null[i] {
                f64::INFINITY
            } else {
                sqrt(covariance[i * n + i].max(0.0))
            }
        })
        .collect();
    let at_bound: Vec<bool> = x
        .iter()
        .zip(&problem.params)
        .map(|(&v, p)| v <= p.lower || v >= p.upper)
        .collect();
    let poorly_determined = (0..n)
        .map(|i| null[i] || stderr[i] > x[i].abs())
        .collect();
    Ok(FitResult {
        names: problem.params.iter().map(|p| p.name.clone()).collect(),
        params: x,
        stderr,
        covariance,
        cost,
        converged,
        iterations,
        cost_history: history,
        at_bound,
        poorly_determined,
    })
}

/// `s2 * A^+` via an eigen-decomposition of the diagonally scaled normal
/// matrix. Also reports which parameters load on (numerically) null
/// directions.
fn covariance_from_normal(a: &SquareMatrix, s2: f64) -> (Vec<f64>, Vec<bool>) {
    let n = a.n;
    let d: Vec<f64> = (0..n).map(|i| sqrt(a.get(i, i))).collect();
    let mut scaled = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let v = if d[i] > 0.0 && d[j] > 0.0 {
                a.get(i, j) / (d[i] * d[j])
            } else {
                0.0
            };
            scaled.set(i, j, v);
        }
    }
    let (w, v) = symmetric_eigen(&scaled);
    let wmax = w.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<bool> = w.iter().map(|&x| x > 1e-12 * wmax).collect();
    let mut cov = vec![0.0; n * n];
    let mut null = vec![false; n];
    for i in 0..n {
        if d[i] == 0.0 {
            null[i] = true;
        }
        for k in 0..n {
            if !keep[k] && v.get(i, k) * v.get(i, k) > 1e-6 {
                null[i] = true;
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if d[i] == 0.0 || d[j] == 0.0 {
                continue;
            }
            let mut s = 0.0;
            for k in 0..n {
                if keep[k] {
                    s += v.get(i, k) * v.get(j, k) / w[k];
                }
            }
            cov[i * n + j] = s2 * s / (d[i] * d[j]);
        }
    }
    (cov, null)
}
