//! Gap cascades at parabolic fixed points and their asymptotic laws.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::cylinders::refine;
use crate::error::{Error, Result};
use crate::maps::{invert_with_guess, BranchKind, Interval, MarkovSystem, INVERSION_TOL};
use crate::orbits::{PeriodicPoint, PointClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Plus => "+",
            Side::Minus => "-",
        })
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+" | "plus" | "right" => Ok(Side::Plus),
            "-" | "minus" | "left" => Ok(Side::Minus),
            _ => Err(Error::InvalidArgument(format!("unknown side `{s}`; use + or -"))),
        }
    }
}

/// Backward orbit `x_k → x` under the branch fixing `x`, with
/// `D_k` the interval between `x_{k+1}` and `x_k`, so that `f(D_k) = D_{k−1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapCascade {
    pub point: f64,
    pub side: Side,
    /// `x_0 … x_{K+1}`.
    pub xs: Vec<f64>,
    /// `|D_0| … |D_K|`.
    pub lengths: Vec<f64>,
}

impl GapCascade {
    /// Number of gaps `K + 1`.
    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    /// `|D_k|` for `k ≥ 1` as `(k, |D_k|)` pairs on a log-spaced grid in `[lo, hi]`.
    fn log_grid(&self, lo: usize, hi: usize, points: usize) -> Vec<(f64, f64)> {
        let hi = hi.min(self.len().saturating_sub(1));
        let lo = lo.max(1);
        if lo > hi {
            return Vec::new();
        }
        let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
        let mut ks: Vec<usize> = (0..points)
            .map(|i| {
                let s = if points > 1 { i as f64 / (points - 1) as f64 } else { 1.0 };
                ((a + s * (b - a)).exp().round() as usize).clamp(lo, hi)
            })
            .collect();
        ks.dedup();
        ks.into_iter().map(|k| (k as f64, self.lengths[k])).collect()
    }
}

/// Build the cascade for a parabolic fixed point on the given side.
///
/// `x_0` is the endpoint of the `I_i` fixed by the point on that side, and
/// each `|D_k|` is the displacement `f(x_{k+1}) − x_{k+1}`, evaluated from the
/// expression for `f − id` when available.
pub fn gap_cascade(system: &MarkovSystem, point: &PeriodicPoint, side: Side, count: usize) -> Result<GapCascade> {
    if point.class != PointClass::Parabolic {
        return Err(Error::InvalidArgument(format!(
            "gap cascades need a parabolic point; x = {} has multiplier {}",
            point.x, point.multiplier
        )));
    }
    if point.period != 1 {
        return Err(Error::InvalidArgument(
            "gap cascades are implemented for fixed points; pass period-1 points".into(),
        ));
    }
    let branch = system.branch(point.word.symbols()[0]);
    let p = point.x;
    let x0 = match side {
        Side::Plus => branch.interval.hi,
        Side::Minus => branch.interval.lo,
    };
    if (x0 - p).abs() <= system.endpoint_tol() {
        return Err(Error::InvalidArgument(format!("no room on side {side} of x = {p}")));
    }
    let mut xs = Vec::with_capacity(count + 2);
    xs.push(x0);
    let mut lengths = Vec::with_capacity(count + 1);
    for k in 1..=count + 1 {
        let prev = xs[k - 1];
        let (next, gap) = match &branch.kind {
            BranchKind::InverseOfForward(f) => {
                let guess = prev - f.displacement(prev)?;
                let next = invert_with_guess(f, Interval::new(p, prev), prev, INVERSION_TOL, Some(guess))?;
                (next, f.displacement(next)?.abs())
            }
            _ => (branch.g(prev)?, branch.g_displacement(prev)?.abs()),
        };
        if next == prev || (next - p).abs() < 1e-300 || gap == 0.0 {
            return Err(Error::InversionStall { step: k, x: next });
        }
        xs.push(next);
        lengths.push(gap);
    }
    Ok(GapCascade { point: p, side, xs, lengths })
}

fn least_squares(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, my - slope * mx, r2))
}

/// Points sampled on the log-spaced grid of a fit.
const FIT_POINTS: usize = 200;
/// Local-slope drift above which a power-law fit is flagged.
pub const DRIFT_FLAG: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub k_range: [usize; 2],
    pub beta: f64,
    pub r2: f64,
    /// Difference of the exponents fitted on the two halves of the range.
    pub drift: f64,
    pub flagged: bool,
    pub degenerate: bool,
}

fn default_range(c: &GapCascade, decades: u32) -> (usize, usize) {
    let hi = c.len().saturating_sub(1);
    ((hi / 10usize.pow(decades)).max(1), hi)
}

/// `|D_k| ≈ C·k^{−β}` over `k_range` (default: the last two decades).
pub fn fit_power_law(cascade: &GapCascade, k_range: Option<(usize, usize)>) -> PowerLawFit {
    let (lo, hi) = k_range.unwrap_or_else(|| default_range(cascade, 2));
    let pts: Vec<(f64, f64)> =
        cascade.log_grid(lo, hi, FIT_POINTS).into_iter().map(|(k, d)| (k.ln(), d.ln())).collect();
    let degenerate_fit = PowerLawFit {
        k_range: [lo, hi],
        beta: f64::NAN,
        r2: 0.0,
        drift: f64::NAN,
        flagged: true,
        degenerate: true,
    };
    let Some((slope, _, r2)) = least_squares(&pts) else { return degenerate_fit };
    if pts.iter().all(|p| p.1 == pts[0].1) {
        return PowerLawFit { beta: -slope, r2, ..degenerate_fit };
    }
    let half = pts.len() / 2;
    let drift = match (least_squares(&pts[..=half]), least_squares(&pts[half..])) {
        (Some(a), Some(b)) => (a.0 - b.0).abs(),
        _ => 0.0,
    };
    PowerLawFit { k_range: [lo, hi], beta: -slope, r2, drift, flagged: drift > DRIFT_FLAG, degenerate: false }
}

/// Factor allowed between the extremes of `|D_k|·k·(log k)²`.
pub const LOG_BAND: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogCorrectedFit {
    pub k_range: [usize; 2],
    pub min: f64,
    pub max: f64,
    /// `max / min`.
    pub band: f64,
    pub within_band: bool,
    /// `log(ρ_hi / ρ_lo)` between the ends of the range.
    pub drift: f64,
    pub degenerate: bool,
}

/// Ratio series `ρ_k = |D_k|·k·(log k)²` over `k_range` (default: the last decade).
pub fn fit_log_corrected(cascade: &GapCascade, k_range: Option<(usize, usize)>) -> LogCorrectedFit {
    let (lo, hi) = k_range.unwrap_or_else(|| default_range(cascade, 1));
    let lo = lo.max(2);
    let hi = hi.min(cascade.len().saturating_sub(1));
    let rho = |k: usize| {
        let kf = k as f64;
        cascade.lengths[k] * kf * kf.ln().powi(2)
    };
    if lo > hi {
        return LogCorrectedFit {
            k_range: [lo, hi],
            min: f64::NAN,
            max: f64::NAN,
            band: f64::NAN,
            within_band: false,
            drift: f64::NAN,
            degenerate: true,
        };
    }
    let (mut min, mut max) = (f64::INFINITY, 0.0f64);
    for k in lo..=hi {
        let r = rho(k);
        min = min.min(r);
        max = max.max(r);
    }
    let seg = &cascade.lengths[lo..=hi];
    let degenerate = seg.iter().all(|d| *d == seg[0]);
    let band = max / min;
    LogCorrectedFit {
        k_range: [lo, hi],
        min,
        max,
        band,
        within_band: !degenerate && band <= LOG_BAND,
        drift: (rho(hi) / rho(lo)).ln(),
        degenerate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Convergent,
    Divergent,
    Inconclusive,
}

/// Which rule produced a tail-series verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictRule {
    SmallTail,
    GrowingDecades,
    TailFit,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailSeries {
    pub t: f64,
    /// `(k, Σ_{j≤k} |D_j|^t)` at `K/10^m`, increasing in `k`.
    pub checkpoints: Vec<(usize, f64)>,
    pub total: f64,
    /// Sums over the decades ending at `K`, most recent first.
    pub decade_increments: Vec<f64>,
    /// `(σ, γ)` of `|D_k|^t ≈ C·k^{−σ}·(log k)^{−γ}` over the last two decades.
    pub tail_fit: Option<(f64, f64)>,
    pub verdict: Verdict,
    pub rule: VerdictRule,
}

/// Relative size of the last-decade increment below which the sum is called convergent.
pub const SMALL_TAIL: f64 = 1e-3;
pub const SIGMA_MARGIN: f64 = 0.05;
pub const GAMMA_MARGIN: f64 = 0.25;

fn tail_fit(cascade: &GapCascade, t: f64) -> Option<(f64, f64)> {
    let (lo, hi) = default_range(cascade, 2);
    let pts: Vec<[f64; 3]> = cascade
        .log_grid(lo.max(3), hi, FIT_POINTS)
        .into_iter()
        .map(|(k, d)| [k.ln(), k.ln().ln(), t * d.ln()])
        .collect();
    if pts.len() < 3 {
        return None;
    }
    // y = c − σ·u − γ·v by the normal equations.
    let n = pts.len() as f64;
    let mean = |i: usize| pts.iter().map(|p| p[i]).sum::<f64>() / n;
    let (mu, mv, my) = (mean(0), mean(1), mean(2));
    let cov = |i: usize, j: usize, mi: f64, mj: f64| {
        pts.iter().map(|p| (p[i] - mi) * (p[j] - mj)).sum::<f64>()
    };
    let (suu, svv, suv) = (cov(0, 0, mu, mu), cov(1, 1, mv, mv), cov(0, 1, mu, mv));
    let (suy, svy) = (cov(0, 2, mu, my), cov(1, 2, mv, my));
    let det = suu * svv - suv * suv;
    if det.abs() <= 1e-300 {
        return None;
    }
    let bu = (suy * svv - svy * suv) / det;
    let bv = (svy * suu - suy * suv) / det;
    Some((-bu, -bv))
}

/// Partial sums of `Σ|D_k|^t` with a heuristic convergence verdict.
///
/// Rules, in order: a last-decade increment below `10⁻³` of the total is
/// convergent; increments that do not decrease over the last three decades
/// are divergent; otherwise a fit of the last two decades against
/// `k^{−σ}(log k)^{−γ}` decides when `σ` or `γ` clears 1 by its margin.
pub fn tail_series(cascade: &GapCascade, t: f64) -> TailSeries {
    let terms: Vec<f64> = cascade.lengths.iter().map(|d| d.powf(t)).collect();
    let k_max = terms.len().saturating_sub(1);
    let mut marks = Vec::new();
    let mut k = k_max;
    while k >= 1 {
        marks.push(k);
        k /= 10;
    }
    marks.reverse();
    let mut checkpoints = Vec::with_capacity(marks.len());
    let mut sum = 0.0;
    let mut next = 0;
    for (j, term) in terms.iter().enumerate() {
        sum += term;
        if next < marks.len() && j == marks[next] {
            checkpoints.push((j, sum));
            next += 1;
        }
    }
    let total = sum;
    let decade_increments: Vec<f64> =
        checkpoints.windows(2).rev().map(|w| w[1].1 - w[0].1).collect();
    let fit = tail_fit(cascade, t);
    let (verdict, rule) = match decade_increments.as_slice() {
        [last, ..] if *last < SMALL_TAIL * total => (Verdict::Convergent, VerdictRule::SmallTail),
        [i0, i1, i2, ..] if i0 >= i1 && i1 >= i2 => (Verdict::Divergent, VerdictRule::GrowingDecades),
        _ => match fit {
            Some((s, _)) if s > 1.0 + SIGMA_MARGIN => (Verdict::Convergent, VerdictRule::TailFit),
            Some((s, _)) if s < 1.0 - SIGMA_MARGIN => (Verdict::Divergent, VerdictRule::TailFit),
            Some((_, g)) if g > 1.0 + GAMMA_MARGIN => (Verdict::Convergent, VerdictRule::TailFit),
            Some((_, g)) if g < 1.0 - GAMMA_MARGIN => (Verdict::Divergent, VerdictRule::TailFit),
            _ => (Verdict::Inconclusive, VerdictRule::None),
        },
    };
    TailSeries { t, checkpoints, total, decade_increments, tail_fit: fit, verdict, rule }
}

/// Local exponent `b` in `f(x) − x ≈ c·|x − p|^b`, regressed over the last
/// decade of the cascade.
pub fn local_exponent(cascade: &GapCascade) -> Option<f64> {
    let (lo, hi) = default_range(cascade, 1);
    let pts: Vec<(f64, f64)> = cascade
        .log_grid(lo, hi, FIT_POINTS)
        .into_iter()
        .map(|(k, d)| ((cascade.xs[k as usize + 1] - cascade.point).abs().ln(), d.ln()))
        .collect();
    least_squares(&pts).map(|(slope, _, _)| slope)
}

/// `Σ |Δ_w|` over depth-`n` cylinders: an outer estimate of the Lebesgue measure of the limit set.
pub fn cover_measure(system: &MarkovSystem, n: usize) -> Result<f64> {
    Ok(refine(system, n)?.iter().map(|c| c.length()).sum())
}

/// Check `f(x_{k+1}) = x_k` along the cascade; returns the largest deviation.
pub fn cascade_consistency(system: &MarkovSystem, point: &PeriodicPoint, cascade: &GapCascade) -> Result<f64> {
    let branch = system.branch(point.word.symbols()[0]);
    let mut worst = 0.0f64;
    for w in cascade.xs.windows(2) {
        worst = worst.max((branch.f(w[1])? - w[0]).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::builtin;
    use crate::maps::make_system;
    use crate::orbits::enumerate_periodic;

    fn parabolic(name: &str) -> (MarkovSystem, PeriodicPoint) {
        let s = make_system(&builtin(name).unwrap()).unwrap();
        let p = enumerate_periodic(&s, 1)
            .unwrap()
            .into_iter()
            .find(|p| p.class == PointClass::Parabolic)
            .unwrap();
        (s, p)
    }

    #[test]
    fn quadratic_model_is_harmonic() {
        let (s, p) = parabolic("parabolic-b2");
        let c = gap_cascade(&s, &p, Side::Plus, 10_000).unwrap();
        for k in [1_000, 5_000, 10_000] {
            assert!((c.xs[k] * k as f64 - 1.0).abs() < 0.05, "k={k}: {}", c.xs[k]);
        }
        assert!(cascade_consistency(&s, &p, &c).unwrap() <= 1e-14);
        assert!(c.xs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn power_laws_recover_beta() {
        for (name, beta) in [("parabolic-b2", 2.0), ("parabolic-b3", 1.5), ("parabolic-b4", 4.0 / 3.0)] {
            let (s, p) = parabolic(name);
            let c = gap_cascade(&s, &p, Side::Plus, 100_000).unwrap();
            let fit = fit_power_law(&c, Some((1_000, 100_000)));
            assert!((fit.beta - beta).abs() < 0.05, "{name}: {fit:?}");
            assert!(fit.r2 > 0.999);
        }
    }

    #[test]
    fn quadratic_model_fails_log_band() {
        let (s, p) = parabolic("parabolic-b2");
        let c = gap_cascade(&s, &p, Side::Plus, 100_000).unwrap();
        let fit = fit_log_corrected(&c, Some((10_000, 100_000)));
        assert!(!fit.within_band, "{fit:?}");
        assert!(fit.drift < -1.0);
    }

    #[test]
    fn p_series_threshold_flips_verdict() {
        let (s, p) = parabolic("parabolic-b2");
        let c = gap_cascade(&s, &p, Side::Plus, 100_000).unwrap();
        assert_eq!(tail_series(&c, 0.4).verdict, Verdict::Divergent);
        assert_eq!(tail_series(&c, 0.6).verdict, Verdict::Convergent);
        let (s, p) = parabolic("parabolic-b3");
        let c = gap_cascade(&s, &p, Side::Plus, 100_000).unwrap();
        // β = 3/2: threshold at t = 2/3.
        assert_eq!(tail_series(&c, 2.0 / 3.0 - 0.1).verdict, Verdict::Divergent);
        assert_eq!(tail_series(&c, 2.0 / 3.0 + 0.1).verdict, Verdict::Convergent);
    }

    #[test]
    fn local_exponent_of_models() {
        for (name, b) in [("parabolic-b2", 2.0), ("parabolic-b3", 3.0)] {
            let (s, p) = parabolic(name);
            let c = gap_cascade(&s, &p, Side::Plus, 10_000).unwrap();
            assert!((local_exponent(&c).unwrap() - b).abs() < 0.01);
        }
    }

    #[test]
    fn rejects_expanding_and_missing_side() {
        let (s, p) = parabolic("paper-example");
        assert!(gap_cascade(&s, &p, Side::Minus, 10).is_err());
        let expanding = enumerate_periodic(&s, 1).unwrap().pop().unwrap();
        assert_eq!(expanding.class, PointClass::Expanding);
        assert!(gap_cascade(&s, &expanding, Side::Plus, 10).is_err());
    }

    #[test]
    fn constant_sequence_is_degenerate() {
        let c = GapCascade {
            point: 0.0,
            side: Side::Plus,
            xs: (0..=1001).map(|k| 1.0 - k as f64 * 1e-4).collect(),
            lengths: vec![1e-4; 1001],
        };
        assert!(fit_log_corrected(&c, None).degenerate);
        assert!(fit_power_law(&c, None).degenerate);
    }

    #[test]
    fn cover_measures() {
        let s = make_system(&builtin("cantor-thirds").unwrap()).unwrap();
        for n in 1..=6 {
            assert!((cover_measure(&s, n).unwrap() - (2.0f64 / 3.0).powi(n as i32)).abs() < 1e-14);
        }
        let g = make_system(&builtin("golden-mean-thirds").unwrap()).unwrap();
        for n in 2..=6 {
            assert!(cover_measure(&g, n).unwrap() < (2.0f64 / 3.0).powi(n as i32));
        }
    }

    #[test]
    fn side_parsing() {
        assert_eq!("+".parse::<Side>().unwrap(), Side::Plus);
        assert_eq!("left".parse::<Side>().unwrap(), Side::Minus);
        assert!("up".parse::<Side>().is_err());
    }
}
