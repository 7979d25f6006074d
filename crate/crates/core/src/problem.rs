use crate::error::{Error, Result};
use crate::grid::{CoefficientFunction, Grid};

/// A contact interaction `-r δ(x - t)` added to the potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointInteraction {
    position: f64,
    strength: f64,
}

impl PointInteraction {
    pub fn new(position: f64, strength: f64) -> Result<Self> {
        if !(position > 0.0 && position < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "interaction position must lie in (0, 1), got {position}"
            )));
        }
        if !(strength >= 0.0 && strength.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "interaction strength must be finite and >= 0, got {strength}"
            )));
        }
        Ok(Self { position, strength })
    }

    pub fn position(&self) -> f64 {
        self.position
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }
}

/// `-y'' + q y - Σ r_k δ(x - t_k) y = λ w y` on `[0, 1]` with `y(0) = y(1) = 0`.
#[derive(Debug, Clone)]
pub struct DirichletProblem {
    q: CoefficientFunction,
    w: CoefficientFunction,
    interactions: Vec<PointInteraction>,
}

impl DirichletProblem {
    pub fn new(
        q: CoefficientFunction,
        w: CoefficientFunction,
        interactions: Vec<PointInteraction>,
    ) -> Result<Self> {
        if q.grid() != w.grid() {
            return Err(Error::InvalidArgument(
                "potential and weight live on different grids".into(),
            ));
        }
        w.require_positive()?;
        for pair in interactions.windows(2) {
            if pair[0].position() >= pair[1].position() {
                return Err(Error::InvalidArgument(
                    "interaction positions must be distinct and ascending".into(),
                ));
            }
        }
        Ok(Self {
            q,
            w,
            interactions,
        })
    }

    /// Unperturbed problem `(E_q)`.
    pub fn unperturbed(q: CoefficientFunction, w: CoefficientFunction) -> Result<Self> {
        Self::new(q, w, Vec::new())
    }

    /// Same coefficients with exactly one interaction at `(t, r)`.
    pub fn with_interaction(&self, t: f64, r: f64) -> Result<Self> {
        Self::new(
            self.q.clone(),
            self.w.clone(),
            vec![PointInteraction::new(t, r)?],
        )
    }

    /// Same coefficients, no interactions.
    pub fn base(&self) -> Self {
        Self {
            q: self.q.clone(),
            w: self.w.clone(),
            interactions: Vec::new(),
        }
    }

    pub fn q(&self) -> &CoefficientFunction {
        &self.q
    }

    pub fn w(&self) -> &CoefficientFunction {
        &self.w
    }

    pub fn interactions(&self) -> &[PointInteraction] {
        &self.interactions
    }

    pub fn grid(&self) -> &Grid {
        self.q.grid()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize) -> (CoefficientFunction, CoefficientFunction) {
        let g = Grid::uniform(n).unwrap();
        (
            CoefficientFunction::constant(&g, 0.0).unwrap(),
            CoefficientFunction::constant(&g, 1.0).unwrap(),
        )
    }

    #[test]
    fn interaction_bounds() {
        assert!(PointInteraction::new(0.0, 1.0).is_err());
        assert!(PointInteraction::new(1.0, 1.0).is_err());
        assert!(PointInteraction::new(0.5, -1e-9).is_err());
        assert!(PointInteraction::new(0.5, f64::NAN).is_err());
        assert!(PointInteraction::new(0.5, 0.0).is_ok());
    }

    #[test]
    fn interactions_sorted_and_distinct() {
        let (q, w) = unit(11);
        let a = PointInteraction::new(0.3, 1.0).unwrap();
        let b = PointInteraction::new(0.6, 1.0).unwrap();
        assert!(DirichletProblem::new(q.clone(), w.clone(), vec![a, b]).is_ok());
        assert!(DirichletProblem::new(q.clone(), w.clone(), vec![b, a]).is_err());
        assert!(DirichletProblem::new(q, w, vec![a, a]).is_err());
    }

    #[test]
    fn grids_must_match() {
        let (q, _) = unit(11);
        let (_, w) = unit(21);
        assert!(DirichletProblem::unperturbed(q, w).is_err());
    }
}
