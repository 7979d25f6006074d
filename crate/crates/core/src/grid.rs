//! Uniform grids on `[0, 1]` and piecewise-linear coefficient functions.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_num;

/// Default number of grid nodes (h = 5e-4).
pub const DEFAULT_GRID_POINTS: usize = 2001;

/// Uniform grid on `[0, 1]`. Cheap to clone; nodes are shared.
#[derive(Debug, Clone)]
pub struct Grid {
    nodes: Arc<[f64]>,
    h: f64,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.nodes, &other.nodes) || self.nodes == other.nodes
    }
}

impl Grid {
    pub fn uniform(n_points: usize) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2 points, got {n_points}"
            )));
        }
        let last = (n_points - 1) as f64;
        let mut nodes: Vec<f64> = (0..n_points).map(|i| i as f64 / last).collect();
        nodes[n_points - 1] = 1.0;
        Ok(Self {
            nodes: nodes.into(),
            h: 1.0 / last,
        })
    }

    /// Accepts externally supplied nodes if they describe a uniform grid on
    /// `[0, 1]` (to 1e-9 of the spacing) and returns the exact uniform grid.
    pub fn from_nodes(nodes: &[f64]) -> Result<Self> {
        let grid = Self::uniform(nodes.len())?;
        let tol = 1e-9 * grid.h;
        for (i, (&a, &b)) in nodes.iter().zip(grid.nodes.iter()).enumerate() {
            if !a.is_finite() || (a - b).abs() > tol {
                return Err(Error::InvalidData(format!(
                    "node {i} = {a} does not lie on the uniform grid (expected {b})"
                )));
            }
        }
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Index `i` of the cell `[x_i, x_{i+1}]` containing `x` (clamped to the grid).
    pub fn cell_of(&self, x: f64) -> usize {
        let cells = self.nodes.len() - 1;
        if x <= 0.0 {
            return 0;
        }
        let mut i = ((x / self.h) as usize).min(cells - 1);
        // Guard the floor against rounding in x / h.
        while i > 0 && self.nodes[i] > x {
            i -= 1;
        }
        while i + 1 < cells && self.nodes[i + 1] <= x {
            i += 1;
        }
        i
    }
}

/// A real function on `[0, 1]` stored by its node values; linear in between.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFunction {
    grid: Grid,
    values: Arc<[f64]>,
}

impl CoefficientFunction {
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for a {}-node grid",
                values.len(),
                grid.len()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite value {v} at node {i}"
            )));
        }
        Ok(Self {
            grid,
            values: values.into(),
        })
    }

    /// Samples `f` at every node.
    pub fn sample(grid: &Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Self::from_values(grid.clone(), values)
    }

    pub fn constant(grid: &Grid, c: f64) -> Result<Self> {
        Self::from_values(grid.clone(), vec![c; grid.len()])
    }

    /// Like [`Self::from_values`] but also requires strictly positive values.
    pub fn weight(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let f = Self::from_values(grid, values)?;
        f.require_positive()?;
        Ok(f)
    }

    pub fn require_positive(&self) -> Result<()> {
        match self.values.iter().enumerate().find(|(_, &v)| v <= 0.0) {
            Some((i, v)) => Err(Error::InvalidData(format!(
                "weight must be positive, node {i} has {v}"
            ))),
            None => Ok(()),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        let cell = self.grid.cell_of(x);
        if x == self.grid.nodes[cell + 1] {
            return self.values[cell + 1];
        }
        self.eval_in_cell(cell, x)
    }

    /// Linear interpolation inside a known cell; no search.
    #[inline]
    pub fn eval_in_cell(&self, cell: usize, x: f64) -> f64 {
        let x0 = self.grid.nodes[cell];
        let v0 = self.values[cell];
        let v1 = self.values[cell + 1];
        v0 + (x - x0) / self.grid.h * (v1 - v0)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self + factor * other`, node by node.
    pub fn add_scaled(&self, other: &Self, factor: f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::InvalidArgument("coefficient grids differ".into()));
        }
        let values = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a + factor * b)
            .collect();
        Self::from_values(self.grid.clone(), values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_values(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,value")?;
        for (x, v) in self.grid.nodes().iter().zip(self.values.iter()) {
            writeln!(out, "{},{}", fmt_num(*x), fmt_num(*v))?;
        }
        Ok(())
    }

    /// Reads `x,value` rows. The nodes must form a uniform grid on `[0, 1]`.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = reader.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "value" {
            return Err(Error::InvalidData(format!(
                "expected header `x,value`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let parse = |k: usize| -> Result<f64> {
                record[k].parse::<f64>().map_err(|e| {
                    Error::InvalidData(format!("row {}: `{}`: {e}", row + 1, &record[k]))
                })
            };
            xs.push(parse(0)?);
            vs.push(parse(1)?);
        }
        let grid = Grid::from_nodes(&xs)?;
        Self::from_values(grid, vs)
    }

    pub fn to_json(&self) -> CoefficientJson {
        CoefficientJson {
            nodes: self.grid.nodes().to_vec(),
            values: self.values.to_vec(),
        }
    }

    pub fn from_json(json: &CoefficientJson) -> Result<Self> {
        if json.nodes.len() != json.values.len() {
            return Err(Error::InvalidData("nodes and values differ in length".into()));
        }
        Self::from_values(Grid::from_nodes(&json.nodes)?, json.values.clone())
    }
}

/// JSON shape `{ "nodes": [...], "values": [...] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientJson {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
}
