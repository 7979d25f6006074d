//! Dirichlet eigenvalues and normalized eigenfunctions.
//!
//! The m-th eigenvalue is bracketed with the oscillation index of the left
//! shot (number of zeros of `φ(·, λ)` in `(0, 1]`, which equals the number of
//! eigenvalues below λ), narrowed by bisection on that index, and polished by
//! false-position steps on `F(λ) = φ(1, λ)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::CoefficientFunction;
use crate::numeric::bracketed_root;
use crate::problem::DirichletProblem;
use crate::shooting::{oscillation_index, shoot_left, ShotSolution, Shooter};

const BISECTION_WIDTH: f64 = 1e-9;
const SECANT_STEPS: usize = 3;
const SCAN_LIMIT: usize = 100_000;

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub index: usize,
    pub lambda: f64,
    /// Left shot at `lambda`, scaled so `∫ w y² = 1` and positive near 0.
    pub eigenfunction: ShotSolution,
    pub zero_count: usize,
    /// `F'(λ_m)` for the unnormalized shot `φ'(0) = 1`.
    pub char_derivative: f64,
}

/// Scalar part of an [`EigenResult`], as written to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSummary {
    pub index: usize,
    pub lambda: f64,
    pub zero_count: usize,
    pub char_derivative: f64,
}

impl EigenResult {
    pub fn summary(&self) -> EigenSummary {
        EigenSummary {
            index: self.index,
            lambda: self.lambda,
            zero_count: self.zero_count,
            char_derivative: self.char_derivative,
        }
    }
}

fn index_at(problem: &DirichletProblem, lambda: f64) -> Result<usize> {
    Ok(oscillation_index(&shoot_left(problem, lambda)?))
}

/// The m-th Dirichlet eigenvalue (`m >= 1`).
///
/// `bracket_hint`, if it brackets the eigenvalue by oscillation index, skips
/// the scan.
pub fn eigenvalue(
    problem: &DirichletProblem,
    m: usize,
    bracket_hint: Option<(f64, f64)>,
) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("eigenvalue index starts at 1".into()));
    }
    let target = m - 1;

    let hinted = match bracket_hint {
        Some((a, b)) if a < b => {
            (index_at(problem, a)? <= target && index_at(problem, b)? > target).then_some((a, b))
        }
        _ => None,
    };
    let (mut lo, mut hi) = match hinted {
        Some(bracket) => bracket,
        None => scan(problem, m)?,
    };

    while hi - lo > BISECTION_WIDTH * lo.abs().max(1.0) {
        let mid = 0.5 * (lo + hi);
        if index_at(problem, mid)? > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    let f = |l: f64| -> Result<f64> { Ok(shoot_left(problem, l)?.terminal_value) };
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if flo != 0.0 && fhi != 0.0 && flo.signum() == fhi.signum() {
        return Err(Error::SearchFailure {
            m,
            lo,
            hi,
            detail: format!("F does not change sign across the bracket ({flo:e}, {fhi:e})"),
        });
    }
    bracketed_root(f, lo, hi, flo, fhi, BISECTION_WIDTH * lo.abs().max(1.0), SECANT_STEPS)
}

fn scan(problem: &DirichletProblem, m: usize) -> Result<(f64, f64)> {
    let w_min = problem.w().min();
    let mut lo = -(1.0 + problem.q().max_abs()) / w_min - 1.0;
    let mut expansions = 0;
    while index_at(problem, lo)? != 0 {
        lo = 2.0 * lo - 1.0;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::SearchFailure {
                m,
                lo,
                hi: lo,
                detail: "no lower bound with zero oscillations".into(),
            });
        }
    }
    let mf = m as f64;
    let step = 0.25 * ((mf + 1.0).powi(2) - mf * mf) * PI * PI / w_min;
    let mut hi = lo + step;
    for _ in 0..SCAN_LIMIT {
        if index_at(problem, hi)? >= m {
            return Ok((lo, hi));
        }
        lo = hi;
        hi += step;
    }
    Err(Error::SearchFailure {
        m,
        lo,
        hi,
        detail: format!("oscillation index did not reach {m} within {SCAN_LIMIT} steps"),
    })
}

/// Scales `sol` so that `∫ w y² = 1` and `y > 0` near `x = 0`.
pub fn normalize(sol: &ShotSolution, w: &CoefficientFunction) -> ShotSolution {
    let norm = sol.weighted_square_integral(w).sqrt();
    let thr = 1e-13 * sol.max_abs();
    let first = sol.y[1..].iter().find(|v| v.abs() > thr).copied().unwrap_or(1.0);
    let mut out = sol.scaled(first.signum() / norm);
    out.scale_exponent = 0;
    out
}

pub fn eigenfunction(problem: &DirichletProblem, m: usize) -> Result<EigenResult> {
    eigenfunction_with_hint(problem, m, None)
}

pub fn eigenfunction_with_hint(
    problem: &DirichletProblem,
    m: usize,
    bracket_hint: Option<(f64, f64)>,
) -> Result<EigenResult> {
    let lambda = eigenvalue(problem, m, bracket_hint)?;
    let (phi, u) = Shooter::new(problem).left_variational(lambda)?;
    let eigenfunction = normalize(&phi, problem.w());
    Ok(EigenResult {
        index: m,
        lambda,
        zero_count: eigenfunction.sign_changes,
        char_derivative: u.terminal_value * 1e150f64.powi(u.scale_exponent),
        eigenfunction,
    })
}

/// Both sides of `∫ w φ² = φ'(1) u(1) - φ(1) u'(1)` at an eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplicityReport {
    pub simple: bool,
    pub weighted_norm: f64,
    pub boundary_bracket: f64,
    pub relative_residual: f64,
    pub char_derivative: f64,
}

pub fn verify_simplicity(result: &EigenResult, problem: &DirichletProblem) -> SimplicityReport {
    let report = |lhs: f64, rhs: f64, scale: f64| {
        let relative_residual = (lhs - rhs).abs() / lhs.abs();
        SimplicityReport {
            simple: relative_residual <= 1e-6
                && result.char_derivative.abs() > 1e-10 * scale,
            weighted_norm: lhs,
            boundary_bracket: rhs,
            relative_residual,
            char_derivative: result.char_derivative,
        }
    };
    match Shooter::new(problem).left_variational(result.lambda) {
        Ok((phi, u)) => {
            let lhs = phi.weighted_square_integral(problem.w());
            let rhs = phi.terminal_slope * u.terminal_value - phi.terminal_value * u.terminal_slope;
            report(lhs, rhs, phi.max_abs())
        }
        Err(_) => report(f64::NAN, f64::NAN, f64::NAN),
    }
}
