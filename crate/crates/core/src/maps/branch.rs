use serde::{Deserialize, Serialize};

use super::expr::{differentiate, parse_expr, sub, Expr};
use crate::error::{Error, Result};
use crate::roots::solve_bracketed;

/// A closed interval `[lo, hi]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

impl Interval {
    /// Endpoints are reordered if given backwards.
    pub fn new(a: f64, b: f64) -> Self {
        Interval { lo: a.min(b), hi: a.max(b) }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lo - tol && x <= self.hi + tol
    }

    pub fn contains_interval(&self, other: &Interval, tol: f64) -> bool {
        other.lo >= self.lo - tol && other.hi <= self.hi + tol
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

/// Value (and optionally derivative) declared at a removable singularity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeclaredLimit {
    pub x: f64,
    pub value: f64,
    #[serde(default)]
    pub derivative: Option<f64>,
}

/// An expression together with its symbolic first and second derivatives.
#[derive(Debug, Clone)]
pub struct SmoothFn {
    source: String,
    expr: Expr,
    d1: Expr,
    d2: Expr,
    displacement: Expr,
    limits: Vec<DeclaredLimit>,
}

impl SmoothFn {
    pub fn parse(src: &str, limits: Vec<DeclaredLimit>) -> Result<Self> {
        Ok(Self::from_expr(src.to_string(), parse_expr(src)?, limits))
    }

    pub fn from_expr(source: String, expr: Expr, limits: Vec<DeclaredLimit>) -> Self {
        let d1 = differentiate(&expr);
        let d2 = differentiate(&d1);
        let displacement = sub(expr.clone(), Expr::Var);
        SmoothFn { source, expr, d1, d2, displacement, limits }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn derivative_expr(&self) -> &Expr {
        &self.d1
    }

    fn limit_at(&self, x: f64) -> Option<&DeclaredLimit> {
        self.limits.iter().find(|l| l.x == x)
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        match self.limit_at(x) {
            Some(l) => Ok(l.value),
            None => self.expr.eval(x),
        }
    }

    pub fn deriv(&self, x: f64) -> Result<f64> {
        match self.limit_at(x).and_then(|l| l.derivative) {
            Some(d) => Ok(d),
            None => self.d1.eval(x),
        }
    }

    pub fn second_deriv(&self, x: f64) -> Result<f64> {
        self.d2.eval(x)
    }

    /// `f(x) − x`, evaluated symbolically where the expression has the form
    /// `x + r(x)`.
    pub fn displacement(&self, x: f64) -> Result<f64> {
        match self.limit_at(x) {
            Some(l) => Ok(l.value - x),
            None => self.displacement.eval(x),
        }
    }
}

/// Solve `forward(x) = y` for `x ∈ j`, where `forward` is strictly monotone on `j`.
///
/// The result satisfies `|forward(x) − y| ≤ tol · max(1, |y|)`; the solve
/// continues to full double precision when it can.
pub fn invert_branch(forward: &SmoothFn, j: Interval, y: f64, tol: f64) -> Result<f64> {
    invert_with_guess(forward, j, y, tol, None)
}

pub(crate) fn invert_with_guess(
    forward: &SmoothFn,
    j: Interval,
    y: f64,
    tol: f64,
    guess: Option<f64>,
) -> Result<f64> {
    let f_lo = forward.eval(j.lo)?;
    let f_hi = forward.eval(j.hi)?;
    if f_lo == f_hi {
        return Err(Error::NotMonotone { lo: j.lo, hi: j.hi });
    }
    let (img_lo, img_hi) = (f_lo.min(f_hi), f_lo.max(f_hi));
    let slack = tol * y.abs().max(1.0);
    if y < img_lo - slack || y > img_hi + slack {
        return Err(Error::OutOfRange { y, lo: img_lo, hi: img_hi });
    }
    if y <= img_lo {
        return Ok(if f_lo <= f_hi { j.lo } else { j.hi });
    }
    if y >= img_hi {
        return Ok(if f_lo <= f_hi { j.hi } else { j.lo });
    }
    let root = solve_bracketed(
        |x| Ok((forward.eval(x)? - y, forward.deriv(x)?)),
        j.lo,
        j.hi,
        guess,
        0.0,
    )?;
    if root.residual > slack {
        return Err(Error::NotMonotone { lo: j.lo, hi: j.hi });
    }
    Ok(root.x)
}

/// How a branch `g_i` is specified.
#[derive(Debug, Clone)]
pub enum BranchKind {
    /// `g(y) = a·y + b`.
    Affine { a: f64, b: f64 },
    /// `g` given directly as an expression in `x`.
    Contraction(SmoothFn),
    /// The expanding map `f` given on `I_i`; `g = f⁻¹` by numerical inversion.
    InverseOfForward(SmoothFn),
}

/// One monotone branch `g_i : D(g_i) → R(g_i) ⊆ I_i`.
#[derive(Debug, Clone)]
pub struct Branch {
    pub index: usize,
    pub kind: BranchKind,
    /// `D(g_i)`.
    pub domain: Interval,
    /// `R(g_i) = g_i(D(g_i))`.
    pub range: Interval,
    /// `I_i`.
    pub interval: Interval,
    /// +1 when `g_i` is increasing, −1 when decreasing.
    pub orientation: i8,
}

/// Inversion tolerance relative to `max(1, |y|)`.
pub const INVERSION_TOL: f64 = 1e-13;

impl Branch {
    /// `g_i(y)` together with the signed derivative `g_i′(y)`.
    pub fn g_with_deriv(&self, y: f64) -> Result<(f64, f64)> {
        match &self.kind {
            BranchKind::Affine { a, b } => Ok((a * y + b, *a)),
            BranchKind::Contraction(g) => Ok((g.eval(y)?, g.deriv(y)?)),
            BranchKind::InverseOfForward(f) => {
                let y = self.domain.clamp(y);
                let x = invert_with_guess(f, self.interval, y, INVERSION_TOL, None)?;
                Ok((x, 1.0 / f.deriv(x)?))
            }
        }
    }

    pub fn g(&self, y: f64) -> Result<f64> {
        Ok(self.g_with_deriv(y)?.0)
    }

    /// `f(x) = g_i⁻¹(x)` for `x ∈ I_i`, with the signed derivative `f′(x)`.
    pub fn f_with_deriv(&self, x: f64) -> Result<(f64, f64)> {
        match &self.kind {
            BranchKind::Affine { a, b } => Ok(((x - b) / a, 1.0 / a)),
            BranchKind::InverseOfForward(f) => Ok((f.eval(x)?, f.deriv(x)?)),
            BranchKind::Contraction(g) => {
                let x = self.range.clamp(x);
                let y = invert_with_guess(g, self.domain, x, INVERSION_TOL, None)?;
                Ok((y, 1.0 / g.deriv(y)?))
            }
        }
    }

    pub fn f(&self, x: f64) -> Result<f64> {
        Ok(self.f_with_deriv(x)?.0)
    }

    /// `f(x) − x` without cancellation where the branch allows it.
    pub fn f_displacement(&self, x: f64) -> Result<f64> {
        match &self.kind {
            BranchKind::InverseOfForward(f) => f.displacement(x),
            _ => Ok(self.f(x)? - x),
        }
    }

    /// `y − g(y)` without cancellation where the branch allows it.
    pub fn g_displacement(&self, y: f64) -> Result<f64> {
        match &self.kind {
            BranchKind::Contraction(g) => Ok(-g.displacement(y)?),
            _ => Ok(y - self.g(y)?),
        }
    }

    /// Image of an interval under `g_i`.
    pub fn g_interval(&self, iv: Interval) -> Result<Interval> {
        Ok(Interval::new(self.g(iv.lo)?, self.g(iv.hi)?))
    }

    /// `|d/dy log|g′(y)||` and `|d/dx log|f′(x)||` at one sample point of the
    /// branch's natural coordinate (`y ∈ D(g)` for contractions, `x ∈ I_i`
    /// for forward maps).
    pub(crate) fn log_derivative_slopes(&self, s: f64) -> Result<(f64, f64)> {
        match &self.kind {
            BranchKind::Affine { .. } => Ok((0.0, 0.0)),
            BranchKind::Contraction(g) => {
                let d1 = g.deriv(s)?;
                let d2 = g.second_deriv(s)?;
                Ok(((d2 / d1).abs(), (d2 / (d1 * d1)).abs()))
            }
            BranchKind::InverseOfForward(f) => {
                let d1 = f.deriv(s)?;
                let d2 = f.second_deriv(s)?;
                Ok(((d2 / (d1 * d1)).abs(), (d2 / d1).abs()))
            }
        }
    }

    /// Interval over which [`Self::log_derivative_slopes`] is sampled.
    pub(crate) fn sample_interval(&self) -> Interval {
        match self.kind {
            BranchKind::InverseOfForward(_) => self.interval,
            _ => self.domain,
        }
    }

    /// Signed derivative of the branch in its natural coordinate.
    pub(crate) fn natural_deriv(&self, s: f64) -> Result<f64> {
        match &self.kind {
            BranchKind::Affine { a, .. } => Ok(*a),
            BranchKind::Contraction(g) => g.deriv(s),
            BranchKind::InverseOfForward(f) => f.deriv(s),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            BranchKind::Affine { .. } => "affine",
            BranchKind::Contraction(_) => "contraction",
            BranchKind::InverseOfForward(_) => "inverse-of-forward",
        }
    }
}
