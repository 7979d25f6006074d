//! Measure differential equations `-dy• + y dμ = λ w y dx` with
//! `μ = density dx + Σ mᵢ δ_{tᵢ}`, and the weak* bump approximation of a
//! point interaction.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fef::FefSolver;
use crate::grid::{CoefficientFunction, Grid};
use crate::io::fmt_num;
use crate::problem::DirichletProblem;
use crate::shooting::{Breakpoint, Direction, Integrator, Knot};
use crate::spectrum;

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    density: CoefficientFunction,
    /// `(position, mass)`, positions strictly increasing in `(0, 1)`.
    atoms: Vec<(f64, f64)>,
}

impl AtomicMeasure {
    pub fn new(density: CoefficientFunction, mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        for &(t, m) in &atoms {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidArgument(format!("atom at {t} outside (0, 1)")));
            }
            if !m.is_finite() {
                return Err(Error::InvalidArgument(format!("atom mass {m} at {t}")));
            }
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        if atoms.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidArgument("atom positions must be distinct".into()));
        }
        Ok(Self { density, atoms })
    }

    /// `q dx - Σ rᵢ δ_{tᵢ}` for the problem's potential and interactions.
    pub fn from_problem(problem: &DirichletProblem) -> Self {
        Self {
            density: problem.q().clone(),
            atoms: problem
                .interactions()
                .iter()
                .map(|i| (i.position(), -i.strength()))
                .collect(),
        }
    }

    pub fn density(&self) -> &CoefficientFunction {
        &self.density
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    /// `∫|density| + Σ|mᵢ|`, trapezoid on the grid.
    pub fn total_variation(&self) -> f64 {
        let v = self.density.values();
        let h = self.density.grid().spacing();
        let ac: f64 = v.windows(2).map(|p| 0.5 * h * (p[0].abs() + p[1].abs())).sum();
        ac + self.atoms.iter().map(|a| a.1.abs()).sum::<f64>()
    }
}

/// Solution of the MDE initial value problem. `ybullet` follows the
/// right-derivative convention; values at atoms are in `knots`.
#[derive(Debug, Clone)]
pub struct MdeSolution {
    pub grid: Grid,
    pub y: Vec<f64>,
    pub ybullet: Vec<f64>,
    pub knots: Vec<Knot>,
    pub lambda: f64,
    /// Stored values are the true ones times `1e-150^scale_exponent`.
    pub scale_exponent: i32,
}

struct Point {
    x: f64,
    y: f64,
    left: f64,
    right: f64,
    mass: f64,
}

impl MdeSolution {
    fn points(&self, mu: &AtomicMeasure) -> Vec<Point> {
        let nodes = self.grid.nodes();
        let mut out = Vec::with_capacity(nodes.len() + self.knots.len());
        let mut k = 0;
        for (i, &x) in nodes.iter().enumerate() {
            while k < self.knots.len() && self.knots[k].x <= x {
                let kn = self.knots[k];
                let mass = mu.atoms[k].1;
                if kn.x < x {
                    out.push(Point {
                        x: kn.x,
                        y: kn.y,
                        left: kn.yprime_minus,
                        right: kn.yprime_plus,
                        mass,
                    });
                } else {
                    out.push(Point {
                        x,
                        y: self.y[i],
                        left: kn.yprime_minus,
                        right: kn.yprime_plus,
                        mass,
                    });
                }
                k += 1;
            }
            if out.last().is_none_or(|p| p.x < x) {
                out.push(Point {
                    x,
                    y: self.y[i],
                    left: self.ybullet[i],
                    right: self.ybullet[i],
                    mass: 0.0,
                });
            }
        }
        out
    }

    /// Largest violation of the integral system
    /// `y(x) = y₀ + ∫₀ˣ y•`, `y•(x⁻) = z₀ + ∫₀ˣ (q - λw) y + Σ_{tᵢ<x} mᵢ y(tᵢ)`
    /// over all nodes and atoms, relative to the solution size. Integrals use
    /// the endpoint-corrected trapezoid rule on each cell.
    pub fn integral_residual(&self, mu: &AtomicMeasure, w: &CoefficientFunction, y0: f64, z0: f64) -> f64 {
        let scale = 1e-150f64.powi(self.scale_exponent);
        let (y0, z0) = (y0 * scale, z0 * scale);
        let pts = self.points(mu);
        let grid = mu.density.grid();
        let h = grid.spacing();
        let dens = mu.density.values();
        let wv = w.values();
        let lambda = self.lambda;
        let g = |cell: usize, x: f64| mu.density.eval_in_cell(cell, x) - lambda * w.eval_in_cell(cell, x);

        let size = self
            .y
            .iter()
            .chain(&self.ybullet)
            .fold(y0.abs().max(z0.abs()), |m, v| m.max(v.abs()));
        let (mut iy, mut ib, mut jumps) = (0.0, 0.0, 0.0);
        let mut worst = 0.0f64;
        for pair in pts.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let len = b.x - a.x;
            let cell = grid.cell_of(0.5 * (a.x + b.x));
            let dg = ((dens[cell + 1] - dens[cell]) - lambda * (wv[cell + 1] - wv[cell])) / h;
            let (ga, gb) = (g(cell, a.x), g(cell, b.x));
            let fa = ga * a.y;
            let fb = gb * b.y;
            iy += 0.5 * len * (a.right + b.left) + len * len / 12.0 * (fa - fb);
            let dfa = dg * a.y + ga * a.right;
            let dfb = dg * b.y + gb * b.left;
            ib += 0.5 * len * (fa + fb) + len * len / 12.0 * (dfa - dfb);
            // The jump at `a` enters y•(b⁻).
            jumps += a.mass * a.y;
            worst = worst
                .max((b.y - (y0 + iy)).abs())
                .max((b.left - (z0 + ib + jumps)).abs())
                .max((b.right - b.left - b.mass * b.y).abs());
        }
        worst / size.max(f64::MIN_POSITIVE)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,y,ybullet")?;
        for ((x, y), yb) in self.grid.nodes().iter().zip(&self.y).zip(&self.ybullet) {
            writeln!(out, "{},{},{}", fmt_num(*x), fmt_num(*y), fmt_num(*yb))?;
        }
        Ok(())
    }
}

/// Solves `-dy• + y dμ = λ w y dx` from `x = 0` with `y(0) = y0`,
/// `y•(0) = z0`. At an atom of mass `m`, `y•` jumps by `m y`.
pub fn mde_solve(
    mu: &AtomicMeasure,
    lambda: f64,
    w: &CoefficientFunction,
    y0: f64,
    z0: f64,
) -> Result<MdeSolution> {
    if mu.density.grid() != w.grid() {
        return Err(Error::InvalidArgument(
            "measure density and weight live on different grids".into(),
        ));
    }
    if ![lambda, y0, z0].iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite lambda or initial data".into()));
    }
    let integrator = Integrator {
        density: &mu.density,
        w,
        lambda,
        breakpoints: mu.atoms.iter().map(|&(x, mass)| Breakpoint { x, mass }).collect(),
        direction: Direction::LeftToRight,
        variational: false,
    };
    let out = integrator.run(y0, z0)?;
    Ok(MdeSolution {
        grid: mu.density.grid().clone(),
        y: out.base.y,
        ybullet: out.base.yprime,
        knots: out.base.knots,
        lambda,
        scale_exponent: out.scale_exponent,
    })
}

/// `(n / 2ε) χ_[t-ε/n, t+ε/n]` with `ε = min(t, 1-t)`. Each node carries the
/// bump's average over its dual cell, so the trapezoid mass is 1.
pub fn bump_family(t: f64, n: usize, grid: &Grid) -> Result<CoefficientFunction> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::InvalidArgument(format!("bump centre {t} outside (0, 1)")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("bump index must be positive".into()));
    }
    let eps = t.min(1.0 - t);
    let half = eps / n as f64;
    let h = grid.spacing();
    if 2.0 * half < 4.0 * h {
        return Err(Error::Resolution(format!(
            "bump support {:e} spans fewer than 4 cells of width {h:e}",
            2.0 * half
        )));
    }
    let (lo, hi) = (t - half, t + half);
    let height = 1.0 / (2.0 * half);
    let nodes = grid.nodes();
    let last = nodes.len() - 1;
    let mut values: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let a = if i == 0 { x } else { x - 0.5 * h };
            let b = if i == last { x } else { x + 0.5 * h };
            let overlap = (b.min(hi) - a.max(lo)).max(0.0);
            height * overlap / (b - a)
        })
        .collect();
    let mass: f64 = values.windows(2).map(|p| 0.5 * h * (p[0] + p[1])).sum();
    values.iter_mut().for_each(|v| *v /= mass);
    CoefficientFunction::from_values(grid.clone(), values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub n: usize,
    pub lambda_n: f64,
    pub gap: f64,
}

/// `λ₁(q - r bump_n)` against `λ(t, r)` for each `n`.
pub fn weakstar_convergence_study(
    q: &CoefficientFunction,
    w: &CoefficientFunction,
    t: f64,
    r: f64,
    n_list: &[usize],
) -> Result<Vec<StudyRow>> {
    let base = DirichletProblem::unperturbed(q.clone(), w.clone())?;
    let solver = FefSolver::new(&base)?;
    let reference = solver.value(t, r)?.lambda;
    n_list
        .par_iter()
        .map(|&n| {
            let bump = bump_family(t, n, q.grid())?;
            let p = DirichletProblem::unperturbed(q.add_scaled(&bump, -r)?, w.clone())?;
            let lambda_n = spectrum::eigenvalue(&p, 1, None)?;
            Ok(StudyRow {
                n,
                lambda_n,
                gap: (lambda_n - reference).abs(),
            })
        })
        .collect()
}

pub fn write_study_csv<W: Write>(rows: &[StudyRow], mut out: W) -> Result<()> {
    writeln!(out, "n,lambda_n,gap")?;
    for row in rows {
        writeln!(out, "{},{},{}", row.n, fmt_num(row.lambda_n), fmt_num(row.gap))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shooting::Shooter;
    use approx::assert_abs_diff_eq;

    fn grid() -> Grid {
        Grid::uniform(2001).unwrap()
    }

    fn zero_measure(atoms: Vec<(f64, f64)>) -> AtomicMeasure {
        AtomicMeasure::new(CoefficientFunction::constant(&grid(), 0.0).unwrap(), atoms).unwrap()
    }

    #[test]
    fn free_motion() {
        let mu = zero_measure(vec![]);
        let w = CoefficientFunction::constant(&grid(), 1.0).unwrap();
        let s = mde_solve(&mu, 0.0, &w, 0.0, 1.0).unwrap();
        for (x, (y, yb)) in s.grid.nodes().iter().zip(s.y.iter().zip(&s.ybullet)) {
            assert_abs_diff_eq!(*y, *x, epsilon = 1e-14);
            assert_abs_diff_eq!(*yb, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn positive_atom_piecewise_linear() {
        let mu = zero_measure(vec![(0.5, 1.0)]);
        let w = CoefficientFunction::constant(&grid(), 1.0).unwrap();
        let s = mde_solve(&mu, 0.0, &w, 0.0, 1.0).unwrap();
        let k = s.knots[0];
        assert_abs_diff_eq!(k.yprime_minus, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(k.yprime_plus, 1.5, epsilon = 1e-14);
        assert_abs_diff_eq!(*s.y.last().unwrap(), 1.25, epsilon = 1e-13);
        assert!(s.integral_residual(&mu, &w, 0.0, 1.0) < 1e-12);
    }

    #[test]
    fn interaction_eigenvalue_hits_zero() {
        let mu = zero_measure(vec![(0.5, -0.1)]);
        let w = CoefficientFunction::constant(&grid(), 1.0).unwrap();
        let s = mde_solve(&mu, 9.668587537385769, &w, 0.0, 1.0).unwrap();
        assert!(s.y.last().unwrap().abs() < 1e-10);
    }

    #[test]
    fn integral_system_holds_with_smooth_density() {
        let g = grid();
        let q = CoefficientFunction::sample(&g, |x| 5.0 * (2.0 * std::f64::consts::PI * x).cos() + 3.0 * x).unwrap();
        let w = CoefficientFunction::sample(&g, |x| 1.0 + 0.5 * x).unwrap();
        let mu = AtomicMeasure::new(q, vec![(0.3, -0.2), (0.71234, 0.4)]).unwrap();
        let s = mde_solve(&mu, 25.0, &w, 0.3, -1.0).unwrap();
        let res = s.integral_residual(&mu, &w, 0.3, -1.0);
        assert!(res < 1e-9, "{res}");
    }

    #[test]
    fn matches_shooting() {
        let g = grid();
        let q = CoefficientFunction::sample(&g, |x| x * x).unwrap();
        let w = CoefficientFunction::constant(&g, 1.0).unwrap();
        let p = DirichletProblem::unperturbed(q, w.clone()).unwrap().with_interaction(0.4, 0.3).unwrap();
        let mu = AtomicMeasure::from_problem(&p);
        let a = mde_solve(&mu, 12.0, &w, 0.0, 1.0).unwrap();
        let b = Shooter::new(&p).left(12.0).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.ybullet, b.yprime);
    }

    #[test]
    fn bump_shapes() {
        let g = grid();
        let b = bump_family(0.5, 1, &g).unwrap();
        assert!(b.values().iter().all(|v| (v - 1.0).abs() < 1e-13));

        let b = bump_family(0.5, 10, &g).unwrap();
        let mass: f64 = b.values().windows(2).map(|p| 0.5 * g.spacing() * (p[0] + p[1])).sum();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.eval(0.5), 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b.eval(0.45), 5.0, epsilon = 1e-9);
        assert_eq!(b.eval(0.3), 0.0);
    }

    #[test]
    fn bump_moments_converge() {
        let g = grid();
        let moment = |n| {
            let b = bump_family(0.3, n, &g).unwrap();
            let f: Vec<f64> = g.nodes().iter().zip(b.values()).map(|(x, v)| x * x * v).collect();
            let m: f64 = f.windows(2).map(|p| 0.5 * g.spacing() * (p[0] + p[1])).sum();
            (m - 0.09).abs()
        };
        let (e4, e8) = (moment(4), moment(8));
        assert!(e8 < e4 / 3.0, "{e4} {e8}");
    }

    #[test]
    fn under_resolved_bump() {
        let g = Grid::uniform(101).unwrap();
        assert!(matches!(bump_family(0.5, 30, &g), Err(Error::Resolution(_))));
        assert!(bump_family(0.5, 20, &g).is_ok());
    }

    #[test]
    fn study_without_coupling() {
        let g = grid();
        let q = CoefficientFunction::constant(&g, 0.0).unwrap();
        let w = CoefficientFunction::constant(&g, 1.0).unwrap();
        let rows = weakstar_convergence_study(&q, &w, 0.5, 0.0, &[4, 8]).unwrap();
        assert!(rows.iter().all(|r| r.gap == 0.0));
    }
}
