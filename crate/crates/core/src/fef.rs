//! The first eigenvalue function `λ(t, r)`: lowest Dirichlet eigenvalue of
//! `-y'' + (q - r δ(x - t)) y = λ w y`.
//!
//! Every interior value is computed twice and cross-checked:
//! - *direct*: first eigenvalue of the problem carrying the interaction;
//! - *characterization*: root below `λ₁` of
//!   `G(λ) = r φ(t, λ) ψ(t, λ) - φ(1, λ)`, built from the unperturbed left
//!   and right shots (`φ(0) = 0, φ'(0) = 1`, `ψ(1) = 0, ψ'(1) = -1`).

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_num;
use crate::numeric::{adaptive_gauss, bracketed_root};
use crate::problem::DirichletProblem;
use crate::shooting::{ShotSolution, Shooter};
use crate::spectrum::{self, EigenResult};

const ROOT_WIDTH: f64 = 1e-9;
const GUARD_SAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FefConfig {
    /// Largest coupling accepted by [`FefSolver::partials`].
    pub max_coupling: f64,
    /// Routes must agree to `agreement * (1 + |λ|)`.
    pub agreement: f64,
}

impl Default for FefConfig {
    fn default() -> Self {
        Self {
            max_coupling: 0.1,
            agreement: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FefMethod {
    Direct,
    Characterization,
    CrossChecked,
    /// `r = 0` or `t ∈ {0, 1}`: the value is `λ₁` by definition.
    Definition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FefSample {
    pub t: f64,
    pub r: f64,
    pub lambda: f64,
    pub method: FefMethod,
    /// `c(t, r) = φ(t, λ) / ψ(t, λ)`.
    pub matching_constant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FefPartials {
    pub dlambda_dt: f64,
    pub dlambda_dr: f64,
}

/// State of the unperturbed shots at `x = t`, plus `φ(1)`.
#[derive(Debug, Clone, Copy)]
struct Matching {
    phi: f64,
    dphi: f64,
    psi: f64,
    dpsi: f64,
    phi_end: f64,
    psi_scale: f64,
}

impl Matching {
    fn g(&self, r: f64) -> f64 {
        r * self.phi * self.psi - self.phi_end
    }

    fn ratio(&self) -> f64 {
        if self.psi.abs() < 1e-12 * self.psi_scale {
            self.dphi / self.dpsi
        } else {
            self.phi / self.psi
        }
    }
}

fn unscale(sol: &ShotSolution, v: f64) -> f64 {
    v * 1e150f64.powi(sol.scale_exponent)
}

/// Evaluates `λ(t, r)` and friends for one unperturbed problem. Caches `λ₁`.
#[derive(Debug, Clone)]
pub struct FefSolver {
    base: DirichletProblem,
    lambda1: f64,
    ground: EigenResult,
    /// `max Φ²` of the normalized ground state; `-∂λ(t,0)/∂r ≤ max Φ²`.
    slope_bound: f64,
    config: FefConfig,
}

impl FefSolver {
    pub fn new(base: &DirichletProblem) -> Result<Self> {
        Self::with_config(base, FefConfig::default())
    }

    pub fn with_config(base: &DirichletProblem, config: FefConfig) -> Result<Self> {
        if !base.interactions().is_empty() {
            return Err(Error::InvalidArgument(
                "the first eigenvalue function is defined for a problem without interactions"
                    .into(),
            ));
        }
        let ground = spectrum::eigenfunction(base, 1)?;
        let slope_bound = ground
            .eigenfunction
            .y
            .iter()
            .fold(0.0f64, |m, y| m.max(y * y));
        Ok(Self {
            base: base.clone(),
            lambda1: ground.lambda,
            ground,
            slope_bound,
            config,
        })
    }

    pub fn problem(&self) -> &DirichletProblem {
        &self.base
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    /// Normalized first eigenfunction of the unperturbed problem.
    pub fn ground_state(&self) -> &EigenResult {
        &self.ground
    }

    pub fn config(&self) -> FefConfig {
        self.config
    }

    fn check_args(t: f64, r: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidArgument(format!("t = {t} outside [0, 1]")));
        }
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "coupling must be finite and >= 0, got {r}"
            )));
        }
        Ok(())
    }

    fn matching(&self, t: f64, lambda: f64) -> Result<Matching> {
        let shooter = Shooter::new(&self.base).with_probes(&[t]);
        let left = shooter.left(lambda)?;
        let right = shooter.right(lambda)?;
        let kl = left.knots[0];
        let kr = right.knots[0];
        Ok(Matching {
            phi: unscale(&left, kl.y),
            dphi: unscale(&left, kl.yprime_plus),
            psi: unscale(&right, kr.y),
            dpsi: unscale(&right, kr.yprime_plus),
            phi_end: unscale(&left, left.terminal_value),
            psi_scale: unscale(&right, right.max_abs()),
        })
    }

    /// `G(λ) = r φ(t, λ) ψ(t, λ) - φ(1, λ)`.
    pub fn characteristic_g(&self, t: f64, r: f64, lambda: f64) -> Result<f64> {
        Ok(self.matching(t, lambda)?.g(r))
    }

    /// Lower end `λ₁ - C r` of a bracket where `G < 0`, doubling `C` as needed.
    fn lower_bracket(&self, t: f64, r: f64) -> Result<(f64, f64)> {
        let mut c = 2.0 * self.slope_bound.max(1.0);
        for _ in 0..64 {
            let lo = self.lambda1 - c * r;
            let g = self.characteristic_g(t, r, lo)?;
            if g < 0.0 {
                return Ok((lo, g));
            }
            c *= 2.0;
        }
        Err(Error::Range(format!(
            "no sign change of G below lambda1 at t = {t}, r = {r}"
        )))
    }

    /// `λ(t, r)` from the characterization, with the matching constant.
    pub fn characterization(&self, t: f64, r: f64) -> Result<(f64, f64)> {
        Self::check_args(t, r)?;
        if r == 0.0 || t == 0.0 || t == 1.0 {
            return Ok((self.lambda1, self.matching(t, self.lambda1)?.ratio()));
        }
        let (lo, glo) = self.lower_bracket(t, r)?;
        let hi = self.lambda1;
        let ghi = self.characteristic_g(t, r, hi)?;
        if ghi <= 0.0 {
            return Err(Error::Range(format!(
                "G(lambda1) = {ghi:e} is not positive at t = {t}, r = {r}"
            )));
        }
        let root = bracketed_root(
            |l| self.characteristic_g(t, r, l),
            lo,
            hi,
            glo,
            ghi,
            ROOT_WIDTH * hi.abs().max(1.0),
            3,
        )?;
        // No second root between λ(t, r) and λ₁.
        for k in 1..=GUARD_SAMPLES {
            let l = root + (hi - root) * k as f64 / GUARD_SAMPLES as f64;
            if self.characteristic_g(t, r, l)? <= 0.0 {
                return Err(Error::Range(format!(
                    "G has another root in ({root}, {hi}] at t = {t}, r = {r}"
                )));
            }
        }
        Ok((root, self.matching(t, root)?.ratio()))
    }

    /// `λ(t, r)` as the first eigenvalue of the perturbed problem.
    pub fn direct(&self, t: f64, r: f64) -> Result<f64> {
        Self::check_args(t, r)?;
        if r == 0.0 || t == 0.0 || t == 1.0 {
            return Ok(self.lambda1);
        }
        let perturbed = self.base.with_interaction(t, r)?;
        let hint = (self.lambda1 - 2.0 * self.slope_bound.max(1.0) * r, self.lambda1);
        spectrum::eigenvalue(&perturbed, 1, Some(hint))
    }

    /// Normalized first eigenfunction of the perturbed problem.
    pub fn perturbed_eigenfunction(&self, t: f64, r: f64) -> Result<EigenResult> {
        let perturbed = self.base.with_interaction(t, r)?;
        let hint = (self.lambda1 - 2.0 * self.slope_bound.max(1.0) * r, self.lambda1);
        spectrum::eigenfunction_with_hint(&perturbed, 1, Some(hint))
    }

    /// Cross-checked `λ(t, r)`.
    pub fn value(&self, t: f64, r: f64) -> Result<FefSample> {
        Self::check_args(t, r)?;
        if r == 0.0 || t == 0.0 || t == 1.0 {
            let c = if t == 0.0 || t == 1.0 {
                // φ/ψ → φ'(1)/ψ'(1) = -φ'(1) where both vanish.
                let phi = Shooter::new(&self.base).left(self.lambda1)?;
                -unscale(&phi, phi.terminal_slope)
            } else {
                self.matching(t, self.lambda1)?.ratio()
            };
            return Ok(FefSample {
                t,
                r,
                lambda: self.lambda1,
                method: FefMethod::Definition,
                matching_constant: c,
            });
        }
        let (characterization, c) = self.characterization(t, r)?;
        let direct = self.direct(t, r)?;
        if (direct - characterization).abs() > self.config.agreement * (1.0 + direct.abs()) {
            return Err(Error::Inconsistent {
                t,
                r,
                direct,
                characterization,
            });
        }
        Ok(FefSample {
            t,
            r,
            lambda: direct,
            method: FefMethod::CrossChecked,
            matching_constant: c,
        })
    }

    /// `(∂λ/∂t, ∂λ/∂r)` from the implicit-function system
    /// `∂λ/∂t · D = r ∂(φψ)/∂t`, `∂λ/∂r · D = φψ`,
    /// `D = u(1, λ) - r ∂(φψ)/∂λ`, `u = ∂φ/∂λ`.
    pub fn partials(&self, t: f64, r: f64) -> Result<FefPartials> {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::InvalidArgument(format!("t = {t} outside (0, 1)")));
        }
        Self::check_args(t, r)?;
        if r > self.config.max_coupling {
            return Err(Error::Range(format!(
                "r = {r} exceeds the coupling range {}",
                self.config.max_coupling
            )));
        }
        let lambda = self.value(t, r)?.lambda;
        let shooter = Shooter::new(&self.base).with_probes(&[t]);
        let (left, u) = shooter.left_variational(lambda)?;
        let (right, psi_l) = shooter.right_variational(lambda)?;
        let (kp, ku) = (left.knots[0], u.knots[0]);
        let (ks, kv) = (right.knots[0], psi_l.knots[0]);

        let phi_psi = kp.y * ks.y;
        let d_lambda = ku.y * ks.y + kp.y * kv.y;
        let d_t = kp.yprime_plus * ks.y + kp.y * ks.yprime_plus;
        let denominator = u.terminal_value - r * d_lambda;
        if denominator.abs() < 1e-12 {
            return Err(Error::SingularDerivative { t, r, denominator });
        }
        Ok(FefPartials {
            dlambda_dt: r * d_t / denominator,
            dlambda_dr: phi_psi / denominator,
        })
    }

    /// `r φ²(t) ∫ₜ¹ ds / φ²(s) - 1` at `λ = λ(t, r)`; zero for the exact
    /// first eigenvalue function. Needs `0 < t < 1`, `r > 0`.
    pub fn integral_form_residual(&self, t: f64, r: f64) -> Result<f64> {
        if !(t > 0.0 && t < 1.0 && r > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "integral form needs 0 < t < 1 and r > 0, got t = {t}, r = {r}"
            )));
        }
        let lambda = self.value(t, r)?.lambda;
        let phi = Shooter::new(&self.base).with_probes(&[t]).left(lambda)?;
        let f = |x: f64| {
            let y = phi.value_at(x).0;
            1.0 / (y * y)
        };
        let nodes = phi.grid.nodes();
        let start = phi.grid.cell_of(t);
        let mut integral = adaptive_gauss(&f, t, nodes[start + 1], 1e-13);
        for w in nodes[start + 1..].windows(2) {
            integral += adaptive_gauss(&f, w[0], w[1], 1e-13);
        }
        let phi_t = phi.knots[0].y;
        Ok(r * phi_t * phi_t * integral - 1.0)
    }

    /// `λ(tᵢ, rⱼ)` over a grid. `t_grid` must be strictly increasing in
    /// `[0, 1]`; `r_list` nonnegative and distinct. The result lists `r` in
    /// descending order ending with `r = 0` (added when absent).
    pub fn surface(&self, t_grid: &[f64], r_list: &[f64]) -> Result<LambdaSurface> {
        if t_grid.is_empty() {
            return Err(Error::InvalidArgument("empty t grid".into()));
        }
        if t_grid.windows(2).any(|w| w[0] >= w[1]) || t_grid.iter().any(|t| !(0.0..=1.0).contains(t))
        {
            return Err(Error::InvalidArgument(
                "t grid must be strictly increasing within [0, 1]".into(),
            ));
        }
        let mut rs = r_list.to_vec();
        if let Some(r) = rs.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
            return Err(Error::InvalidArgument(format!("invalid coupling {r}")));
        }
        if !rs.contains(&0.0) {
            rs.push(0.0);
        }
        rs.sort_by(|a, b| b.total_cmp(a));
        if rs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate coupling values".into()));
        }

        let cells: Vec<(usize, usize)> = (0..t_grid.len())
            .flat_map(|i| (0..rs.len()).map(move |j| (i, j)))
            .collect();
        let flat: Vec<f64> = cells
            .par_iter()
            .map(|&(i, j)| self.value(t_grid[i], rs[j]).map(|s| s.lambda))
            .collect::<Result<_>>()?;
        let values = flat.chunks(rs.len()).map(|c| c.to_vec()).collect();
        Ok(LambdaSurface {
            t_grid: t_grid.to_vec(),
            r_list: rs,
            values,
            lambda1: self.lambda1,
            metadata: SurfaceMetadata::default(),
        })
    }
}

pub fn fef_value(problem: &DirichletProblem, t: f64, r: f64) -> Result<FefSample> {
    FefSolver::new(problem)?.value(t, r)
}

pub fn fef_surface(problem: &DirichletProblem, t_grid: &[f64], r_list: &[f64]) -> Result<LambdaSurface> {
    FefSolver::new(problem)?.surface(t_grid, r_list)
}

pub fn fef_partials(problem: &DirichletProblem, t: f64, r: f64) -> Result<FefPartials> {
    FefSolver::new(problem)?.partials(t, r)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceMetadata {
    pub potential: String,
    pub weight: String,
    pub grid_points: usize,
}

/// Sampled `λ(tᵢ, rⱼ)`; `values[i][j]` belongs to `t_grid[i]`, `r_list[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaSurface {
    pub t_grid: Vec<f64>,
    /// Descending, last entry `0`.
    pub r_list: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub lambda1: f64,
    #[serde(default)]
    pub metadata: SurfaceMetadata,
}

impl LambdaSurface {
    /// Column index of `r = 0`.
    pub fn baseline_column(&self) -> Result<usize> {
        self.r_list
            .iter()
            .position(|&r| r == 0.0)
            .ok_or(Error::MissingBaseline)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[j]).collect()
    }

    /// Shape, finiteness, and the first-eigenvalue-function invariants:
    /// constant `r = 0` column, every entry `<= λ₁`, nonincreasing in `r`.
    pub fn check(&self) -> Result<()> {
        let nt = self.t_grid.len();
        let nr = self.r_list.len();
        if nt == 0 || nr == 0 || self.values.len() != nt || self.values.iter().any(|r| r.len() != nr)
        {
            return Err(Error::InvalidData("surface shape mismatch".into()));
        }
        if self.values.iter().flatten().any(|v| !v.is_finite()) || !self.lambda1.is_finite() {
            return Err(Error::InvalidData("non-finite surface entry".into()));
        }
        let base = self.baseline_column()?;
        let tol = 1e-9 * (1.0 + self.lambda1.abs());
        for (i, row) in self.values.iter().enumerate() {
            if (row[base] - self.lambda1).abs() > tol {
                return Err(Error::DataIntegrity(format!(
                    "r = 0 entry at t = {} is {} but lambda1 = {}",
                    self.t_grid[i], row[base], self.lambda1
                )));
            }
            if let Some(v) = row.iter().find(|&&v| v > self.lambda1 + tol) {
                return Err(Error::DataIntegrity(format!(
                    "entry {v} exceeds lambda1 at t = {}",
                    self.t_grid[i]
                )));
            }
            let mut order: Vec<usize> = (0..nr).collect();
            order.sort_by(|&a, &b| self.r_list[a].total_cmp(&self.r_list[b]));
            for w in order.windows(2) {
                if row[w[1]] > row[w[0]] + tol {
                    return Err(Error::DataIntegrity(format!(
                        "lambda increases with r at t = {}",
                        self.t_grid[i]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Long format `t,r,lambda`, rows ordered by t then by `r_list`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,r,lambda")?;
        for (t, row) in self.t_grid.iter().zip(&self.values) {
            for (r, v) in self.r_list.iter().zip(row) {
                writeln!(out, "{},{},{}", fmt_num(*t), fmt_num(*r), fmt_num(*v))?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "r", "lambda"] {
            return Err(Error::InvalidData(
                "surface CSV header must be `t,r,lambda`".into(),
            ));
        }
        let mut rows = Vec::new();
        for (n, record) in reader.records().enumerate() {
            let record = record?;
            let mut vals = [0.0; 3];
            for (k, v) in vals.iter_mut().enumerate() {
                *v = record[k].parse::<f64>().map_err(|e| {
                    Error::InvalidData(format!("row {}: `{}`: {e}", n + 1, &record[k]))
                })?;
                if !v.is_finite() {
                    return Err(Error::InvalidData(format!(
                        "row {}: non-finite value `{}`",
                        n + 1,
                        &record[k]
                    )));
                }
            }
            rows.push(vals);
        }
        let mut ts: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        let mut rs: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        rs.sort_by(|a, b| b.total_cmp(a));
        rs.dedup();
        if rows.len() != ts.len() * rs.len() {
            return Err(Error::InvalidData(format!(
                "{} rows do not form a full {} x {} grid",
                rows.len(),
                ts.len(),
                rs.len()
            )));
        }
        let mut values = vec![vec![f64::NAN; rs.len()]; ts.len()];
        for row in &rows {
            let i = ts.partition_point(|&t| t < row[0]);
            let j = rs.iter().position(|&r| r == row[1]).expect("r collected above");
            if !values[i][j].is_nan() {
                return Err(Error::InvalidData(format!(
                    "duplicate entry at t = {}, r = {}",
                    row[0], row[1]
                )));
            }
            values[i][j] = row[2];
        }
        if values.iter().flatten().any(|v| v.is_nan()) {
            return Err(Error::InvalidData("surface grid has holes".into()));
        }
        let base = rs.iter().position(|&r| r == 0.0).ok_or(Error::MissingBaseline)?;
        let lambda1 = values[0][base];
        Ok(Self {
            t_grid: ts,
            r_list: rs,
            values,
            lambda1,
            metadata: SurfaceMetadata::default(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let surface: Self = serde_json::from_str(s)?;
        if surface.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite surface entry".into()));
        }
        Ok(surface)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{CoefficientFunction, Grid};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn solver(q: impl Fn(f64) -> f64) -> FefSolver {
        let g = Grid::uniform(2001).unwrap();
        let p = DirichletProblem::unperturbed(
            CoefficientFunction::sample(&g, q).unwrap(),
            CoefficientFunction::constant(&g, 1.0).unwrap(),
        )
        .unwrap();
        FefSolver::new(&p).unwrap()
    }

    /// Oracle for q = 0, w = 1: bisection on ρ[cot(ρt) + cot(ρ(1-t))] = r
    /// for ρ in (0, π).
    fn free_oracle(t: f64, r: f64) -> f64 {
        let h = |p: f64| p * (1.0 / (p * t).tan() + 1.0 / (p * (1.0 - t)).tan()) - r;
        let (mut lo, mut hi) = (1.0, PI - 1e-15);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let rho = 0.5 * (lo + hi);
        rho * rho
    }

    #[test]
    fn oracle_sanity() {
        assert_abs_diff_eq!(free_oracle(0.5, 0.1), 9.668587537385769, epsilon = 1e-12);
    }

    #[test]
    fn zero_coupling_is_lambda1() {
        let s = solver(|_| 0.0);
        for t in [0.1, 0.5, 0.77] {
            let v = s.value(t, 0.0).unwrap();
            assert_abs_diff_eq!(v.lambda, PI * PI, epsilon = 1e-7);
            assert_eq!(v.method, FefMethod::Definition);
            assert!(v.matching_constant > 0.0);
        }
    }

    #[test]
    fn free_problem_values() {
        let s = solver(|_| 0.0);
        let v = s.value(0.5, 0.1).unwrap();
        assert_eq!(v.method, FefMethod::CrossChecked);
        assert_abs_diff_eq!(v.lambda, free_oracle(0.5, 0.1), epsilon = 1e-9);
        assert!(v.matching_constant > 0.0);

        let v = s.value(0.3, 0.01).unwrap();
        let first_order = PI * PI - 0.02 * (0.3 * PI).sin().powi(2);
        assert_abs_diff_eq!(v.lambda, first_order, epsilon = 1e-4);
        assert_abs_diff_eq!(v.lambda, free_oracle(0.3, 0.01), epsilon = 1e-9);
    }

    #[test]
    fn shifted_potential_slope() {
        let s = solver(|_| 2.0);
        let v = s.value(0.5, 1e-3).unwrap();
        assert_abs_diff_eq!(v.lambda, PI * PI + 2.0 - 2e-3, epsilon = 1e-5);
        let direct = s.perturbed_eigenfunction(0.5, 1e-3).unwrap().lambda;
        assert_abs_diff_eq!(v.lambda, direct, epsilon = 1e-9);
    }

    #[test]
    fn surface_zero_row_and_symmetry() {
        let s = solver(|_| 0.0);
        let ts: Vec<f64> = (0..11).map(|i| 0.05 + 0.09 * i as f64).collect();
        let surf = s.surface(&ts, &[0.0]).unwrap();
        assert!(surf.values.iter().all(|row| (row[0] - PI * PI).abs() < 1e-7));

        let ts: Vec<f64> = (1..10).map(|i| i as f64 / 10.0).collect();
        let surf = s.surface(&ts, &[0.05, 0.1]).unwrap();
        surf.check().unwrap();
        for i in 0..ts.len() {
            for j in 0..surf.r_list.len() {
                assert_abs_diff_eq!(
                    surf.values[i][j],
                    surf.values[ts.len() - 1 - i][j],
                    epsilon = 1e-9
                );
            }
        }
        assert_eq!(surf.r_list, vec![0.1, 0.05, 0.0]);
    }

    #[test]
    fn partials_at_zero_coupling() {
        let s = solver(|_| 0.0);
        for t in [0.2, 0.5, 0.9] {
            let p = s.partials(t, 0.0).unwrap();
            assert_abs_diff_eq!(p.dlambda_dr, -2.0 * (PI * t).sin().powi(2), epsilon = 1e-8);
            assert_eq!(p.dlambda_dt, 0.0);
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let s = solver(|_| 0.0);
        let (t, r, h) = (0.5, 0.05, 1e-5);
        let p = s.partials(t, r).unwrap();
        let fd = (s.value(t, r + h).unwrap().lambda - s.value(t, r - h).unwrap().lambda) / (2.0 * h);
        assert_abs_diff_eq!(p.dlambda_dr, fd, epsilon = 1e-6);

        let s = solver(|x| 5.0 * (2.0 * PI * x).cos() + 3.0 * x);
        let (t, r) = (0.3, 0.05);
        let p = s.partials(t, r).unwrap();
        let fd = (s.value(t + h, r).unwrap().lambda - s.value(t - h, r).unwrap().lambda) / (2.0 * h);
        assert_abs_diff_eq!(p.dlambda_dt, fd, epsilon = 1e-6);
    }

    #[test]
    fn partials_reject_large_coupling() {
        let s = solver(|_| 0.0);
        assert!(matches!(s.partials(0.5, 0.2), Err(Error::Range(_))));
    }

    #[test]
    fn integral_form_holds() {
        let s = solver(|x| 5.0 * (2.0 * PI * x).cos() + 3.0 * x);
        for (t, r) in [(0.1, 0.01), (0.5, 0.05), (0.9, 0.1)] {
            let res = s.integral_form_residual(t, r).unwrap();
            assert!(res.abs() < 1e-6, "t = {t}, r = {r}: {res}");
        }
    }

    #[test]
    fn surface_csv_json_roundtrip() {
        let surf = LambdaSurface {
            t_grid: vec![0.25, 0.5],
            r_list: vec![0.1, 0.0],
            values: vec![vec![9.5, 9.8], vec![9.4, 9.8]],
            lambda1: 9.8,
            metadata: SurfaceMetadata::default(),
        };
        let mut buf = Vec::new();
        surf.write_csv(&mut buf).unwrap();
        assert_eq!(LambdaSurface::read_csv(buf.as_slice()).unwrap(), surf);
        let json = surf.to_json().unwrap();
        assert_eq!(LambdaSurface::from_json(&json).unwrap(), surf);
    }

    #[test]
    fn surface_csv_without_baseline() {
        let csv = "t,r,lambda\n0.5,0.1,9.6\n0.6,0.1,9.6\n";
        assert!(matches!(
            LambdaSurface::read_csv(csv.as_bytes()),
            Err(Error::MissingBaseline)
        ));
    }

    #[test]
    fn check_flags_violations() {
        let mut surf = LambdaSurface {
            t_grid: vec![0.5],
            r_list: vec![0.1, 0.0],
            values: vec![vec![9.9, 9.8]],
            lambda1: 9.8,
            metadata: SurfaceMetadata::default(),
        };
        assert!(matches!(surf.check(), Err(Error::DataIntegrity(_))));
        surf.values[0][0] = 9.7;
        surf.check().unwrap();
    }
}
