//! Bracketed scalar root finding: bisection safeguarded Newton.

use crate::error::{Error, Result};

/// Outcome of a bracketed solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub residual: f64,
    pub iterations: usize,
    /// Newton iterates accepted; each lay strictly inside the current bracket.
    pub newton_steps: usize,
}

const MAX_ITER: usize = 400;

/// Find a zero of `f` on `[lo, hi]`, where `f` returns `(value, derivative)`.
///
/// Requires a sign change (a zero value at an endpoint is accepted as the
/// root). Iterates until the bracket collapses to adjacent floats, a Newton
/// step falls below `rel_step · |x|`, or `|f| ≤ ftol`.
pub fn solve_bracketed<F>(f: F, lo: f64, hi: f64, guess: Option<f64>, ftol: f64) -> Result<Root>
where
    F: Fn(f64) -> Result<(f64, f64)>,
{
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let (fa, _) = f(a)?;
    if fa == 0.0 {
        return Ok(Root { x: a, residual: 0.0, iterations: 0, newton_steps: 0 });
    }
    let (fb, _) = f(b)?;
    if fb == 0.0 {
        return Ok(Root { x: b, residual: 0.0, iterations: 0, newton_steps: 0 });
    }
    if fa.signum() == fb.signum() {
        return Err(Error::InvalidArgument(format!(
            "no sign change on [{a}, {b}]: f = {fa:e}, {fb:e}"
        )));
    }
    let neg_at_a = fa < 0.0;

    let mut x = match guess {
        Some(g) if g > a && g < b => g,
        _ => 0.5 * (a + b),
    };
    let mut best = (f64::INFINITY, x);
    let mut prev_abs = f64::INFINITY;
    let mut newton_steps = 0;
    for it in 1..=MAX_ITER {
        let (fx, dfx) = f(x)?;
        if fx.abs() < best.0 {
            best = (fx.abs(), x);
        }
        if fx == 0.0 || fx.abs() <= ftol {
            return Ok(Root { x, residual: fx.abs(), iterations: it, newton_steps });
        }
        if (fx < 0.0) == neg_at_a {
            a = x;
        } else {
            b = x;
        }
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let newton = x - fx / dfx;
        let progressing = fx.abs() <= 0.5 * prev_abs;
        prev_abs = fx.abs();
        if dfx != 0.0 && newton.is_finite() && newton > a && newton < b && progressing {
            debug_assert!(newton > a && newton < b);
            newton_steps += 1;
            let step = (newton - x).abs();
            x = newton;
            if step <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
                let (fx, _) = f(x)?;
                if fx.abs() < best.0 {
                    best = (fx.abs(), x);
                }
                return Ok(Root { x: best.1, residual: best.0, iterations: it, newton_steps });
            }
        } else {
            x = mid;
        }
    }
    Ok(Root { x: best.1, residual: best.0, iterations: MAX_ITER, newton_steps })
}

/// Plain bisection on a sign predicate: returns the final `(lo, hi)` with
/// `pred(lo) == pred_lo` and `pred(hi) != pred_lo`, `hi - lo ≤ width`.
pub fn bisect_predicate<F>(mut lo: f64, mut hi: f64, width: f64, mut pred: F) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<bool>,
{
    let at_lo = pred(lo)?;
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid)? == at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, hi))
}
