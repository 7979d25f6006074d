//! Built-in coefficient rules: `zero`, `const:<c>`, `cos:<a>,<k>`
//! (`a cos(2πkx)`), `affine:<a>,<b>` (`a x + b`) and `step:<c>,<x0>`
//! (`c` for `x >= x0`, else 0). Rules can be summed.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{CoefficientFunction, Grid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rule {
    Zero,
    Const(f64),
    Cos { amplitude: f64, frequency: f64 },
    Affine { slope: f64, offset: f64 },
    Step { height: f64, at: f64 },
}

impl Rule {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Rule::Zero => 0.0,
            Rule::Const(c) => c,
            Rule::Cos {
                amplitude,
                frequency,
            } => amplitude * (2.0 * PI * frequency * x).cos(),
            Rule::Affine { slope, offset } => slope * x + offset,
            Rule::Step { height, at } => {
                if x >= at {
                    height
                } else {
                    0.0
                }
            }
        }
    }
}

fn parse_args(name: &str, args: &str, n: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = args
        .split(',')
        .map(|a| a.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidArgument(format!("rule `{name}:{args}`: {e}")))?;
    if vals.len() != n || vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "rule `{name}` takes {n} finite argument(s), got `{args}`"
        )));
    }
    Ok(vals)
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "zero" {
            return Ok(Rule::Zero);
        }
        let (name, args) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("unknown rule `{s}`")))?;
        match name {
            "const" => Ok(Rule::Const(parse_args(name, args, 1)?[0])),
            "cos" => {
                let v = parse_args(name, args, 2)?;
                Ok(Rule::Cos {
                    amplitude: v[0],
                    frequency: v[1],
                })
            }
            "affine" => {
                let v = parse_args(name, args, 2)?;
                Ok(Rule::Affine {
                    slope: v[0],
                    offset: v[1],
                })
            }
            "step" => {
                let v = parse_args(name, args, 2)?;
                Ok(Rule::Step {
                    height: v[0],
                    at: v[1],
                })
            }
            _ => Err(Error::InvalidArgument(format!("unknown rule `{s}`"))),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Rule::Zero => write!(f, "zero"),
            Rule::Const(c) => write!(f, "const:{c}"),
            Rule::Cos {
                amplitude,
                frequency,
            } => write!(f, "cos:{amplitude},{frequency}"),
            Rule::Affine { slope, offset } => write!(f, "affine:{slope},{offset}"),
            Rule::Step { height, at } => write!(f, "step:{height},{at}"),
        }
    }
}

/// A sum of rules.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSum(pub Vec<Rule>);

impl RuleSum {
    pub fn parse<S: AsRef<str>>(terms: &[S]) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument("empty rule list".into()));
        }
        Ok(Self(
            terms
                .iter()
                .map(|t| t.as_ref().parse())
                .collect::<Result<_>>()?,
        ))
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().map(|r| r.eval(x)).sum()
    }

    pub fn sample(&self, grid: &Grid) -> Result<CoefficientFunction> {
        CoefficientFunction::sample(grid, |x| self.eval(x))
    }
}

impl fmt::Display for RuleSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|r| r.to_string()).collect();
        write!(f, "{}", parts.join("+"))
    }
}
