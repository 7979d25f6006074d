//! Small numerical kernels shared by the solvers.

use crate::error::Result;

/// Bisection on the sign of `f` until the bracket is narrower than `width`,
/// then up to `polish` false-position steps. Returns the best abscissa seen.
///
/// `f(lo)` and `f(hi)` must have opposite signs (or one of them be zero).
pub(crate) fn bracketed_root(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
    mut flo: f64,
    mut fhi: f64,
    width: f64,
    polish: usize,
) -> Result<f64> {
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    debug_assert!(flo.signum() != fhi.signum());
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    let mut best = if flo.abs() < fhi.abs() { (lo, flo) } else { (hi, fhi) };
    for _ in 0..polish {
        let x = lo - flo * (hi - lo) / (fhi - flo);
        if !(x > lo && x < hi) {
            break;
        }
        let fx = f(x)?;
        if fx.abs() < best.1.abs() {
            best = (x, fx);
        }
        if fx == 0.0 {
            break;
        }
        if fx.signum() == flo.signum() {
            lo = x;
            flo = fx;
        } else {
            hi = x;
            fhi = fx;
        }
    }
    Ok(best.0)
}

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_08,
    0.478_628_670_499_366_47,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_08,
];

fn gauss5(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    GL5_NODES
        .iter()
        .zip(GL5_WEIGHTS.iter())
        .map(|(x, w)| w * f(c + h * x))
        .sum::<f64>()
        * h
}

/// Adaptive 5-point Gauss–Legendre quadrature with relative tolerance `tol`.
pub(crate) fn adaptive_gauss(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let left = gauss5(f, a, m);
        let right = gauss5(f, m, b);
        let sum = left + right;
        if depth == 0 || (sum - whole).abs() <= tol * sum.abs().max(f64::MIN_POSITIVE) {
            return sum;
        }
        rec(f, a, m, left, tol, depth - 1) + rec(f, m, b, right, tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    rec(f, a, b, gauss5(f, a, b), tol, 40)
}

/// Four-point Lagrange interpolation of uniformly spaced samples
/// `values[i] = g(x0 + i h)`. Outside the sample range the end stencil is
/// used, i.e. cubic extrapolation.
pub(crate) fn cubic_interp(x0: f64, h: f64, values: &[f64], x: f64) -> f64 {
    let n = values.len();
    debug_assert!(n >= 4);
    let s = (x - x0) / h;
    let start = (s.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let mut out = 0.0;
    for j in 0..4 {
        let mut l = 1.0;
        for k in 0..4 {
            if k != j {
                l *= (s - (start + k) as f64) / (j as f64 - k as f64);
            }
        }
        out += l * values[start + j];
    }
    out
}

/// Trapezoid rule on arbitrary abscissae.
pub(crate) fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}
