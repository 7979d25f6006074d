//! Initial-value integration of `-y'' + q y = λ w y` with δ-interaction jumps.
//!
//! The integrator is classical RK4 over grid cells. A cell that contains an
//! interaction (or a probe point) is split there, and the slope jump
//! `y'(t-) - y'(t+) = r y(t)` is applied between the two sub-steps. The
//! variational system for `u = ∂y/∂λ`,
//!
//! ```text
//! -u'' + q u = λ w u + w y,   u = u' = 0 at the starting endpoint,
//! ```
//!
//! is integrated alongside the base solution when requested, so derivatives
//! with respect to λ never come from finite differences.

use std::io::Write;
use std::ops::Deref;

use crate::error::{Error, Result};
use crate::grid::{CoefficientFunction, Grid};
use crate::io::fmt_num;
use crate::problem::DirichletProblem;

/// States larger than this are rescaled by [`RESCALE_FACTOR`].
const OVERFLOW_GUARD: f64 = 1e150;
const RESCALE_FACTOR: f64 = 1e-150;

/// Relative threshold below which a node value counts as a zero.
const ZERO_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    LeftToRight,
    RightToLeft,
}

/// Solution data at an interaction or probe point lying between nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Knot {
    pub x: f64,
    pub y: f64,
    pub yprime_minus: f64,
    pub yprime_plus: f64,
}

/// A shooting solution sampled at the grid nodes.
///
/// `yprime` follows the right-derivative convention where a node coincides
/// with an interaction. Values are stored relative to a scale of
/// `1e150^scale_exponent`; the exponent stays 0 unless the overflow guard
/// fired.
#[derive(Debug, Clone)]
pub struct ShotSolution {
    pub grid: Grid,
    pub y: Vec<f64>,
    pub yprime: Vec<f64>,
    /// Interaction and probe points, ascending in x.
    pub knots: Vec<Knot>,
    pub direction: Direction,
    pub lambda: f64,
    /// `y` at the far endpoint (`φ(1)` or `ψ(0)`).
    pub terminal_value: f64,
    pub terminal_slope: f64,
    pub sign_changes: usize,
    pub scale_exponent: i32,
}

/// `∂y/∂λ` for a shooting solution; same layout, zero initial data.
#[derive(Debug, Clone)]
pub struct VariationalSolution(pub ShotSolution);

impl Deref for VariationalSolution {
    type Target = ShotSolution;

    fn deref(&self) -> &ShotSolution {
        &self.0
    }
}

impl ShotSolution {
    /// `(y, y')` at an arbitrary `x` by cubic Hermite interpolation of the
    /// stored node and knot data. Exact at nodes and knots; right derivative
    /// at a jump.
    pub fn value_at(&self, x: f64) -> (f64, f64) {
        let nodes = self.grid.nodes();
        if let Some(k) = self.knot_at(x) {
            return (k.y, k.yprime_plus);
        }
        let i = self.grid.cell_of(x);
        if x == nodes[i] {
            return (self.y[i], self.yprime[i]);
        }
        if x == nodes[i + 1] {
            return (self.y[i + 1], self.yprime[i + 1]);
        }

        let (mut a, mut ya, mut pa) = (nodes[i], self.y[i], self.yprime[i]);
        let (mut b, mut yb, mut pb) = (nodes[i + 1], self.y[i + 1], self.yprime[i + 1]);
        for k in &self.knots {
            if k.x >= a && k.x <= x {
                a = k.x;
                ya = k.y;
                pa = k.yprime_plus;
            }
            if k.x > x && k.x <= b {
                b = k.x;
                yb = k.y;
                pb = k.yprime_minus;
                break;
            }
        }
        // A right endpoint that is a node carrying a jump needs y'(x-).
        if b == nodes[i + 1] {
            if let Some(k) = self.knot_at(b) {
                pb = k.yprime_minus;
            }
        }
        hermite(a, ya, pa, b, yb, pb, x)
    }

    fn knot_at(&self, x: f64) -> Option<&Knot> {
        self.knots.iter().find(|k| k.x == x)
    }

    pub fn max_abs(&self) -> f64 {
        self.y.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Interior zeros located between sign changes (Hermite interpolant plus
    /// bisection).
    pub fn interior_zeros(&self) -> Vec<f64> {
        let nodes = self.grid.nodes();
        let thr = ZERO_TOL * self.max_abs();
        let mut zeros = Vec::new();
        let mut prev: Option<usize> = None;
        for i in 1..nodes.len() - 1 {
            if self.y[i].abs() <= thr {
                continue;
            }
            if let Some(p) = prev {
                if self.y[p].signum() != self.y[i].signum() {
                    let (mut lo, mut hi) = (nodes[p], nodes[i]);
                    let s_lo = self.y[p].signum();
                    for _ in 0..80 {
                        let mid = 0.5 * (lo + hi);
                        if self.value_at(mid).0.signum() == s_lo {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    zeros.push(0.5 * (lo + hi));
                }
            }
            prev = Some(i);
        }
        zeros
    }

    /// `∫ w y² dx` by the composite trapezoid rule on the nodes, with knots
    /// inserted as extra abscissae.
    pub fn weighted_square_integral(&self, w: &CoefficientFunction) -> f64 {
        let mut points: Vec<(f64, f64)> = self
            .grid
            .nodes()
            .iter()
            .zip(&self.y)
            .map(|(&x, &y)| (x, y))
            .collect();
        for k in &self.knots {
            if !points.iter().any(|p| p.0 == k.x) {
                points.push((k.x, k.y));
            }
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        points
            .windows(2)
            .map(|p| {
                let fa = w.eval(p[0].0) * p[0].1 * p[0].1;
                let fb = w.eval(p[1].0) * p[1].1 * p[1].1;
                0.5 * (p[1].0 - p[0].0) * (fa + fb)
            })
            .sum()
    }

    /// Multiplies every stored value by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.y.iter_mut().for_each(|v| *v *= factor);
        out.yprime.iter_mut().for_each(|v| *v *= factor);
        for k in &mut out.knots {
            k.y *= factor;
            k.yprime_minus *= factor;
            k.yprime_plus *= factor;
        }
        out.terminal_value *= factor;
        out.terminal_slope *= factor;
        out
    }

    /// CSV with header `x,y,yprime`, one row per node.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,y,yprime")?;
        for ((x, y), yp) in self.grid.nodes().iter().zip(&self.y).zip(&self.yprime) {
            writeln!(out, "{},{},{}", fmt_num(*x), fmt_num(*y), fmt_num(*yp))?;
        }
        Ok(())
    }
}

fn hermite(a: f64, ya: f64, pa: f64, b: f64, yb: f64, pb: f64, x: f64) -> (f64, f64) {
    let h = b - a;
    let s = (x - a) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let y = (2.0 * s3 - 3.0 * s2 + 1.0) * ya
        + (s3 - 2.0 * s2 + s) * h * pa
        + (-2.0 * s3 + 3.0 * s2) * yb
        + (s3 - s2) * h * pb;
    let dy = (6.0 * s2 - 6.0 * s) / h * ya
        + (3.0 * s2 - 4.0 * s + 1.0) * pa
        + (-6.0 * s2 + 6.0 * s) / h * yb
        + (3.0 * s2 - 2.0 * s) * pb;
    (y, dy)
}

/// Strict sign changes over the interior nodes; values within
/// `1e-13 * max|y|` of zero are skipped so a zero sitting on a node is counted
/// once.
pub fn count_sign_changes(sol: &ShotSolution) -> usize {
    let n = sol.y.len();
    if n < 3 {
        return 0;
    }
    sign_changes(&sol.y[1..n - 1], ZERO_TOL * sol.max_abs())
}

/// Interior sign changes plus the one between the last interior node and the
/// terminal value. For a left shot this counts the zeros of `φ(·, λ)` in
/// `(0, 1]`, i.e. the number of eigenvalues below λ.
pub(crate) fn oscillation_index(sol: &ShotSolution) -> usize {
    let n = sol.y.len();
    let thr = ZERO_TOL * sol.max_abs();
    match sol.direction {
        Direction::LeftToRight => sign_changes(&sol.y[1..n], thr),
        Direction::RightToLeft => sign_changes(&sol.y[0..n - 1], thr),
    }
}

fn sign_changes(values: &[f64], thr: f64) -> usize {
    let mut count = 0;
    let mut last = 0.0f64;
    for &v in values {
        if v.abs() <= thr {
            continue;
        }
        if last != 0.0 && last.signum() != v.signum() {
            count += 1;
        }
        last = v;
    }
    count
}

/// A point where the integrator stops: `y'(x+) = y'(x-) + mass * y(x)`.
/// Probes are breakpoints with zero mass.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Breakpoint {
    pub x: f64,
    pub mass: f64,
}

pub(crate) struct Trajectory {
    pub y: Vec<f64>,
    pub yprime: Vec<f64>,
    pub knots: Vec<Knot>,
}

pub(crate) struct IntegrationOutput {
    pub base: Trajectory,
    pub variational: Option<Trajectory>,
    pub scale_exponent: i32,
}

/// Integrates `y'' = (density - λ w) y` plus atom jumps from one endpoint to
/// the other, optionally together with the λ-variational system.
pub(crate) struct Integrator<'a> {
    pub density: &'a CoefficientFunction,
    pub w: &'a CoefficientFunction,
    pub lambda: f64,
    /// Sorted ascending, positions in `[0, 1]`.
    pub breakpoints: Vec<Breakpoint>,
    pub direction: Direction,
    pub variational: bool,
}

enum Event {
    Node(usize),
    Break(usize),
}

impl Integrator<'_> {
    pub fn run(&self, y0: f64, z0: f64) -> Result<IntegrationOutput> {
        let grid = self.density.grid();
        let nodes = grid.nodes();
        let n = nodes.len();
        let forward = self.direction == Direction::LeftToRight;

        let events = self.events(nodes);
        let mut base = Trajectory {
            y: vec![0.0; n],
            yprime: vec![0.0; n],
            knots: Vec::with_capacity(self.breakpoints.len()),
        };
        let mut var = self.variational.then(|| Trajectory {
            y: vec![0.0; n],
            yprime: vec![0.0; n],
            knots: Vec::with_capacity(self.breakpoints.len()),
        });

        let start = if forward { 0 } else { n - 1 };
        let mut x = nodes[start];
        let mut s = [y0, z0, 0.0, 0.0];
        let mut exponent = 0i32;

        for event in events {
            let target = match event {
                Event::Node(i) => nodes[i],
                Event::Break(k) => self.breakpoints[k].x,
            };
            if target != x {
                let cell = grid.cell_of(0.5 * (x + target));
                s = self.rk4_step(cell, x, target, s);
                x = target;
                if !s.iter().all(|v| v.is_finite()) {
                    return Err(Error::Overflow {
                        lambda: self.lambda,
                    });
                }
                if s.iter().any(|v| v.abs() > OVERFLOW_GUARD) {
                    s.iter_mut().for_each(|v| *v *= RESCALE_FACTOR);
                    rescale(&mut base, RESCALE_FACTOR);
                    if let Some(v) = var.as_mut() {
                        rescale(v, RESCALE_FACTOR);
                    }
                    exponent += 1;
                }
            }
            match event {
                Event::Node(i) => {
                    base.y[i] = s[0];
                    base.yprime[i] = s[1];
                    if let Some(v) = var.as_mut() {
                        v.y[i] = s[2];
                        v.yprime[i] = s[3];
                    }
                }
                Event::Break(k) => {
                    let m = self.breakpoints[k].mass;
                    let before = s;
                    if forward {
                        s[1] += m * s[0];
                        s[3] += m * s[2];
                    } else {
                        s[1] -= m * s[0];
                        s[3] -= m * s[2];
                    }
                    let (minus, plus) = if forward { (before, s) } else { (s, before) };
                    base.knots.push(Knot {
                        x,
                        y: s[0],
                        yprime_minus: minus[1],
                        yprime_plus: plus[1],
                    });
                    if let Some(v) = var.as_mut() {
                        v.knots.push(Knot {
                            x,
                            y: s[2],
                            yprime_minus: minus[3],
                            yprime_plus: plus[3],
                        });
                    }
                }
            }
        }

        if !forward {
            base.knots.reverse();
            if let Some(v) = var.as_mut() {
                v.knots.reverse();
            }
        }
        Ok(IntegrationOutput {
            base,
            variational: var,
            scale_exponent: exponent,
        })
    }

    /// Nodes and breakpoints in path order. At a coincident position the
    /// stored node value must follow the right-derivative convention: the
    /// jump comes first going rightwards and last going leftwards.
    fn events(&self, nodes: &[f64]) -> Vec<Event> {
        let n = nodes.len();
        let mut ev = Vec::with_capacity(n + self.breakpoints.len());
        let bps = &self.breakpoints;
        match self.direction {
            Direction::LeftToRight => {
                let mut k = 0;
                for (i, &x) in nodes.iter().enumerate() {
                    while k < bps.len() && bps[k].x <= x {
                        ev.push(Event::Break(k));
                        k += 1;
                    }
                    ev.push(Event::Node(i));
                }
            }
            Direction::RightToLeft => {
                let mut k = bps.len();
                for i in (0..n).rev() {
                    while k > 0 && bps[k - 1].x > nodes[i] {
                        ev.push(Event::Break(k - 1));
                        k -= 1;
                    }
                    ev.push(Event::Node(i));
                    while k > 0 && bps[k - 1].x == nodes[i] {
                        ev.push(Event::Break(k - 1));
                        k -= 1;
                    }
                }
            }
        }
        ev
    }

    #[inline]
    fn rk4_step(&self, cell: usize, a: f64, b: f64, s: [f64; 4]) -> [f64; 4] {
        let h = b - a;
        let m = a + 0.5 * h;
        let (c0, w0) = self.coeffs(cell, a);
        let (cm, wm) = self.coeffs(cell, m);
        let (c1, w1) = self.coeffs(cell, b);

        let f = |c: f64, w: f64, s: [f64; 4]| [s[1], c * s[0], s[3], c * s[2] - w * s[0]];
        let add = |s: [f64; 4], k: [f64; 4], t: f64| {
            [s[0] + t * k[0], s[1] + t * k[1], s[2] + t * k[2], s[3] + t * k[3]]
        };

        let k1 = f(c0, w0, s);
        let k2 = f(cm, wm, add(s, k1, 0.5 * h));
        let k3 = f(cm, wm, add(s, k2, 0.5 * h));
        let k4 = f(c1, w1, add(s, k3, h));
        let mut out = s;
        for j in 0..4 {
            out[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if !self.variational {
            out[2] = 0.0;
            out[3] = 0.0;
        }
        out
    }

    #[inline]
    fn coeffs(&self, cell: usize, x: f64) -> (f64, f64) {
        let w = self.w.eval_in_cell(cell, x);
        (self.density.eval_in_cell(cell, x) - self.lambda * w, w)
    }
}

fn rescale(t: &mut Trajectory, f: f64) {
    t.y.iter_mut().for_each(|v| *v *= f);
    t.yprime.iter_mut().for_each(|v| *v *= f);
    for k in &mut t.knots {
        k.y *= f;
        k.yprime_minus *= f;
        k.yprime_plus *= f;
    }
}

/// Shooting driver for a [`DirichletProblem`], optionally recording the
/// solution exactly at extra probe points.
pub struct Shooter<'a> {
    problem: &'a DirichletProblem,
    probes: Vec<f64>,
}

impl<'a> Shooter<'a> {
    pub fn new(problem: &'a DirichletProblem) -> Self {
        Self {
            problem,
            probes: Vec::new(),
        }
    }

    /// Points in `[0, 1]` where the state is recorded as a knot.
    pub fn with_probes(mut self, probes: &[f64]) -> Self {
        self.probes.extend_from_slice(probes);
        self
    }

    /// `φ(·, λ)` with `φ(0) = 0`, `φ'(0) = 1`.
    pub fn left(&self, lambda: f64) -> Result<ShotSolution> {
        Ok(self.run(lambda, Direction::LeftToRight, false)?.0)
    }

    /// `ψ(·, λ)` with `ψ(1) = 0`, `ψ'(1) = -1`.
    pub fn right(&self, lambda: f64) -> Result<ShotSolution> {
        Ok(self.run(lambda, Direction::RightToLeft, false)?.0)
    }

    pub fn left_variational(&self, lambda: f64) -> Result<(ShotSolution, VariationalSolution)> {
        let (base, var) = self.run(lambda, Direction::LeftToRight, true)?;
        Ok((base, var.expect("variational requested")))
    }

    pub fn right_variational(&self, lambda: f64) -> Result<(ShotSolution, VariationalSolution)> {
        let (base, var) = self.run(lambda, Direction::RightToLeft, true)?;
        Ok((base, var.expect("variational requested")))
    }

    fn run(
        &self,
        lambda: f64,
        direction: Direction,
        variational: bool,
    ) -> Result<(ShotSolution, Option<VariationalSolution>)> {
        if !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda = {lambda}")));
        }
        if let Some(p) = self.probes.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidArgument(format!("probe {p} outside [0, 1]")));
        }
        let mut breakpoints: Vec<Breakpoint> = self
            .problem
            .interactions()
            .iter()
            .map(|i| Breakpoint {
                x: i.position(),
                mass: -i.strength(),
            })
            .collect();
        for &p in &self.probes {
            if !breakpoints.iter().any(|b| b.x == p) {
                breakpoints.push(Breakpoint { x: p, mass: 0.0 });
            }
        }
        breakpoints.sort_by(|a, b| a.x.total_cmp(&b.x));

        let integrator = Integrator {
            density: self.problem.q(),
            w: self.problem.w(),
            lambda,
            breakpoints,
            direction,
            variational,
        };
        let (y0, z0) = match direction {
            Direction::LeftToRight => (0.0, 1.0),
            Direction::RightToLeft => (0.0, -1.0),
        };
        let out = integrator.run(y0, z0)?;
        let grid = self.problem.grid().clone();
        let wrap = |t: Trajectory| assemble(grid.clone(), t, direction, lambda, out.scale_exponent);
        let base = wrap(out.base);
        let var = out.variational.map(|t| VariationalSolution(wrap(t)));
        Ok((base, var))
    }
}

pub(crate) fn assemble(
    grid: Grid,
    t: Trajectory,
    direction: Direction,
    lambda: f64,
    scale_exponent: i32,
) -> ShotSolution {
    let far = match direction {
        Direction::LeftToRight => t.y.len() - 1,
        Direction::RightToLeft => 0,
    };
    let mut sol = ShotSolution {
        grid,
        terminal_value: t.y[far],
        terminal_slope: t.yprime[far],
        y: t.y,
        yprime: t.yprime,
        knots: t.knots,
        direction,
        lambda,
        sign_changes: 0,
        scale_exponent,
    };
    sol.sign_changes = count_sign_changes(&sol);
    sol
}

pub fn shoot_left(problem: &DirichletProblem, lambda: f64) -> Result<ShotSolution> {
    Shooter::new(problem).left(lambda)
}

pub fn shoot_right(problem: &DirichletProblem, lambda: f64) -> Result<ShotSolution> {
    Shooter::new(problem).right(lambda)
}

/// `φ(x)ψ'(x) - φ'(x)ψ(x)`.
pub fn wronskian(phi: &ShotSolution, psi: &ShotSolution, x: f64) -> Result<f64> {
    if phi.lambda != psi.lambda {
        return Err(Error::InvalidArgument(format!(
            "wronskian of solutions at different lambda ({} vs {})",
            phi.lambda, psi.lambda
        )));
    }
    if phi.grid != psi.grid {
        return Err(Error::InvalidArgument("solutions on different grids".into()));
    }
    let (p, dp) = phi.value_at(x);
    let (s, ds) = psi.value_at(x);
    Ok(p * ds - dp * s)
}

/// Terminal value with its overflow exponent: the true value is
/// `mantissa * 1e150^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledValue {
    pub mantissa: f64,
    pub exponent: i32,
}

impl ScaledValue {
    pub fn to_f64(self) -> f64 {
        self.mantissa * OVERFLOW_GUARD.powi(self.exponent)
    }
}

pub fn characteristic_scaled(problem: &DirichletProblem, lambda: f64) -> Result<ScaledValue> {
    let phi = shoot_left(problem, lambda)?;
    Ok(ScaledValue {
        mantissa: phi.terminal_value,
        exponent: phi.scale_exponent,
    })
}

/// `F(λ) = φ(1, λ)`; vanishes exactly at the Dirichlet eigenvalues.
/// May be `±inf` for very negative λ; only its sign matters there.
pub fn characteristic(problem: &DirichletProblem, lambda: f64) -> Result<f64> {
    Ok(characteristic_scaled(problem, lambda)?.to_f64())
}

/// `F'(λ) = u(1, λ)` from the variational system.
pub fn characteristic_derivative(problem: &DirichletProblem, lambda: f64) -> Result<f64> {
    let (_, u) = Shooter::new(problem).left_variational(lambda)?;
    Ok(u.terminal_value * OVERFLOW_GUARD.powi(u.scale_exponent))
}
