//! Orbits, hyperbolic times, periodic points and the membership heuristic for `H`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::MarkovSystem;
use crate::roots::solve_bracketed;
use crate::symbolic::{is_admissible_periodic, Word};

/// Relative tolerance for deciding which `I_i` holds an orbit point.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Slack absorbing summation rounding in the hyperbolic-time comparison.
pub const HYPERBOLIC_SLACK: f64 = 1e-9;
/// Distance at which an orbit is considered to have landed on a parabolic orbit.
pub const LANDING_TOL: f64 = 1e-10;

/// A finite forward orbit with its branch coding and derivative sums.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitAnalysis {
    pub start: f64,
    /// `x_0 … x_N`.
    pub positions: Vec<f64>,
    /// Branch used at step `k`, 1-based.
    pub branches: Vec<u32>,
    /// `S_k = log|(f^k)′(x)|` for `k = 0…N`.
    pub partial_sums: Vec<f64>,
    /// True when the orbit left `∪I_i` before the requested length.
    pub escaped: bool,
    pub lyapunov_estimate: f64,
}

impl OrbitAnalysis {
    /// Number of completed steps `N`.
    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }
}

/// Follow `x` for up to `steps` iterations of `f`.
pub fn orbit_analyze(system: &MarkovSystem, x: f64, steps: usize) -> Result<OrbitAnalysis> {
    let tol = MEMBERSHIP_TOL * system.interval().len();
    let mut positions = vec![x];
    let mut branches = Vec::with_capacity(steps);
    let mut partial_sums = vec![0.0];
    let mut escaped = false;
    let mut cur = x;
    let mut sum = 0.0;
    for _ in 0..steps {
        let Some(i) = system.branch_at(cur, tol) else {
            escaped = true;
            break;
        };
        let branch = &system.branches()[i];
        let (next, df) = match branch.f_with_deriv(branch.interval.clamp(cur)) {
            Ok(v) => v,
            Err(_) => {
                escaped = true;
                break;
            }
        };
        sum += df.abs().ln();
        branches.push(branch.index as u32);
        partial_sums.push(sum);
        positions.push(next);
        cur = next;
    }
    let n = branches.len();
    Ok(OrbitAnalysis {
        start: x,
        positions,
        branches,
        partial_sums,
        escaped,
        lyapunov_estimate: if n == 0 { 0.0 } else { sum / n as f64 },
    })
}

/// All `n ≤ N` with `|(f^k)′(f^{n−k}x)| ≥ e^{kα}` for every `1 ≤ k ≤ n`.
///
/// With `T_j = S_j − jα` this is `T_n ≥ max_{j<n} T_j`, a single prefix-maximum scan.
pub fn hyperbolic_times(analysis: &OrbitAnalysis, alpha: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for (j, s) in analysis.partial_sums.iter().enumerate() {
        let t = s - j as f64 * alpha;
        if j > 0 && t >= best - HYPERBOLIC_SLACK * (1.0 + t.abs()) {
            out.push(j);
        }
        best = best.max(t);
    }
    out
}

/// Expansion and distortion constants attached to hyperbolic times of exponent `α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InstantConstants {
    pub alpha: f64,
    /// Image scale below which one step of `f` distorts by at most `e^{α/2}`,
    /// capped by the separation of the `I_i`.
    pub c1: f64,
    /// Distortion bound `exp(θ_f·|I| / (1 − e^{−α/2}))`.
    pub c2: f64,
}

pub fn instant_constants(system: &MarkovSystem, alpha: f64) -> InstantConstants {
    let mut ivs: Vec<_> = system.branches().iter().map(|b| b.interval).collect();
    ivs.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let separation = ivs
        .windows(2)
        .map(|w| w[1].lo - w[0].hi)
        .fold(system.interval().len(), f64::min);
    let theta_f = system.theta_f();
    let c1 = if theta_f > 0.0 { separation.min(alpha / (2.0 * theta_f)) } else { separation };
    let c2 = (theta_f * system.interval().len() / (1.0 - (-alpha / 2.0).exp())).exp();
    InstantConstants { alpha, c1, c2 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PointClass {
    Expanding,
    Parabolic,
}

/// A periodic point coded by a primitive word.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicPoint {
    pub word: Word,
    pub period: usize,
    pub x: f64,
    /// `|(f^m)′(x)|` for the primitive period `m`.
    pub multiplier: f64,
    pub class: PointClass,
    /// `|g_w(x) − x|` at the returned point.
    pub residual: f64,
}

/// Fixed point of `g_w` on `I_{w_1}` and `log|(f^{|w|})′|` there.
pub(crate) fn solve_periodic(system: &MarkovSystem, word: &Word) -> Result<(f64, f64, f64)> {
    let symbols = word.symbols();
    let chain = |x: f64| -> Result<(f64, f64)> {
        let mut y = x;
        let mut d = 1.0;
        for &s in symbols.iter().rev() {
            let (gy, dg) = system.branch(s).g_with_deriv(y)?;
            y = gy;
            d *= dg;
        }
        Ok((y, d))
    };
    let j = system.branch(symbols[0]).interval;
    let root = solve_bracketed(
        |x| {
            let (y, d) = chain(x)?;
            Ok((y - x, d - 1.0))
        },
        j.lo,
        j.hi,
        None,
        0.0,
    )?;
    let mut y = root.x;
    let mut log_mult = 0.0;
    for &s in symbols.iter().rev() {
        let (gy, dg) = system.branch(s).g_with_deriv(y)?;
        log_mult -= dg.abs().ln();
        y = gy;
    }
    Ok((root.x, log_mult, (y - root.x).abs()))
}

/// Classify a multiplier: parabolic within `tol` of 1, expanding above.
pub fn classify_point(point: &PeriodicPoint, tol: f64) -> Result<PointClass> {
    classify_multiplier(point.multiplier, tol)
}

pub(crate) fn classify_multiplier(multiplier: f64, tol: f64) -> Result<PointClass> {
    if (multiplier - 1.0).abs() <= tol {
        Ok(PointClass::Parabolic)
    } else if multiplier < 1.0 - tol {
        Err(Error::ContractionDetected { multiplier })
    } else {
        Ok(PointClass::Expanding)
    }
}

/// Admissible periodic words of length exactly `n`, lexicographic.
pub fn periodic_words(system: &MarkovSystem, n: usize) -> Vec<Word> {
    let spec = system.subshift();
    system
        .graph()
        .enumerate_words(n, system.exec())
        .into_iter()
        .filter(|w| is_admissible_periodic(spec, w))
        .collect()
}

/// Every point with `f^n(x) = x`, one per admissible periodic word of
/// length `n`, labelled by its primitive word.
pub fn enumerate_periodic(system: &MarkovSystem, n: usize) -> Result<Vec<PeriodicPoint>> {
    if n == 0 {
        return Err(Error::InvalidArgument("period must be at least 1".into()));
    }
    let tol = system.defaults().parabolic_tol;
    let words = periodic_words(system, n);
    system.exec().try_map(&words, |w| {
        let root = w.primitive_root();
        let (x, log_mult, residual) = solve_periodic(system, &root)?;
        let multiplier = log_mult.exp();
        Ok(PeriodicPoint {
            period: root.len(),
            word: root,
            x,
            multiplier,
            class: classify_multiplier(multiplier, tol)?,
            residual,
        })
    })
}

/// Periodic points with primitive period at most `n_max`, keyed by word.
pub fn periodic_up_to(system: &MarkovSystem, n_max: usize) -> Result<Vec<PeriodicPoint>> {
    let mut seen = BTreeMap::new();
    for n in 1..=n_max {
        for p in enumerate_periodic(system, n)? {
            seen.entry(p.word.clone()).or_insert(p);
        }
    }
    Ok(seen.into_values().collect())
}

/// Finite-depth evidence for uniform hyperbolicity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HyperbolicityReport {
    pub n_max: usize,
    pub points: usize,
    /// `min multiplier^{1/period}`.
    pub min_rate: f64,
    pub parabolic: Vec<PeriodicPoint>,
    pub verdict: String,
}

pub fn uniform_hyperbolicity_report(system: &MarkovSystem, n_max: usize) -> Result<HyperbolicityReport> {
    let points = periodic_up_to(system, n_max)?;
    let min_rate = points
        .iter()
        .map(|p| p.multiplier.powf(1.0 / p.period as f64))
        .fold(f64::INFINITY, f64::min);
    let parabolic: Vec<PeriodicPoint> =
        points.iter().filter(|p| p.class == PointClass::Parabolic).cloned().collect();
    let verdict = if parabolic.is_empty() {
        format!("no parabolic orbit found up to period {n_max} (finite-depth evidence, not proof)")
    } else {
        format!(
            "{} parabolic periodic point(s) up to period {n_max}; not uniformly hyperbolic",
            parabolic.len()
        )
    };
    Ok(HyperbolicityReport { n_max, points: points.len(), min_rate, parabolic, verdict })
}

/// Heuristic verdict on membership in `H` from a finite orbit window.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict")]
pub enum HMembership {
    /// Hyperbolic times with this exponent recur with spacing at most `N/4`.
    InH { alpha: f64, max_spacing: usize },
    /// The orbit reaches a parabolic periodic point at step `step`.
    LikelyNotInH { step: usize, parabolic_x: f64 },
    Inconclusive,
}

fn max_spacing(times: &[usize], n: usize) -> usize {
    let mut prev = 0;
    let mut worst = 0;
    for &t in times.iter().chain(std::iter::once(&n)) {
        worst = worst.max(t - prev);
        prev = t;
    }
    worst
}

/// Classify `x` using an `n`-step window, the exponents in `alphas`, and the
/// parabolic periodic points up to the system's default maximal period.
pub fn h_membership(system: &MarkovSystem, x: f64, n: usize, alphas: &[f64]) -> Result<HMembership> {
    let parabolic = uniform_hyperbolicity_report(system, system.defaults().max_period)?.parabolic;
    let analysis = orbit_analyze(system, x, n)?;
    let tol = LANDING_TOL * system.interval().len();
    for (k, &pos) in analysis.positions.iter().enumerate() {
        if let Some(p) = parabolic.iter().find(|p| (p.x - pos).abs() <= tol) {
            return Ok(HMembership::LikelyNotInH { step: k, parabolic_x: p.x });
        }
    }
    let steps = analysis.len();
    if steps == 0 {
        return Ok(HMembership::Inconclusive);
    }
    let mut sorted: Vec<f64> = alphas.iter().copied().filter(|a| *a > 0.0).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    for alpha in sorted {
        let times = hyperbolic_times(&analysis, alpha);
        let spacing = max_spacing(&times, steps);
        if !times.is_empty() && 4 * spacing <= steps {
            return Ok(HMembership::InH { alpha, max_spacing: spacing });
        }
    }
    Ok(HMembership::Inconclusive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::builtin;
    use crate::maps::make_system;

    fn sys(name: &str) -> MarkovSystem {
        make_system(&builtin(name).unwrap()).unwrap()
    }

    #[test]
    fn thirds_orbit_of_quarter() {
        let a = orbit_analyze(&sys("cantor-thirds"), 0.25, 20).unwrap();
        assert!(!a.escaped);
        assert_eq!(a.len(), 20);
        assert!((a.lyapunov_estimate - 3f64.ln()).abs() < 1e-15);
        assert_eq!(&a.branches[..4], &[1, 2, 1, 2]);
    }

    #[test]
    fn gap_point_escapes() {
        let a = orbit_analyze(&sys("cantor-thirds"), 0.5, 10).unwrap();
        assert!(a.escaped);
        assert_eq!(a.len(), 0);
    }

    #[test]
    fn parabolic_orbit_has_no_expansion() {
        let s = sys("paper-example");
        let a = orbit_analyze(&s, 0.0, 30).unwrap();
        assert_eq!(a.lyapunov_estimate, 0.0);
        for alpha in [1e-6, 0.1, 1.0] {
            assert!(hyperbolic_times(&a, alpha).is_empty());
        }
    }

    #[test]
    fn hyperbolic_times_on_thirds() {
        let s = sys("cantor-thirds");
        let a = orbit_analyze(&s, 0.0, 50).unwrap();
        let l3 = 3f64.ln();
        assert_eq!(hyperbolic_times(&a, l3), (1..=50).collect::<Vec<_>>());
        assert!(hyperbolic_times(&a, 1.2 * l3).is_empty());
    }

    #[test]
    fn hyperbolic_times_nest_in_alpha() {
        let s = sys("nonlinear-perturbed");
        let a = orbit_analyze(&s, 0.1, 40).unwrap();
        let mut prev: Option<Vec<usize>> = None;
        for alpha in [1.2, 1.0, 0.8, 0.5] {
            let t = hyperbolic_times(&a, alpha);
            if let Some(p) = prev {
                assert!(p.iter().all(|k| t.contains(k)));
            }
            prev = Some(t);
        }
    }

    #[test]
    fn thirds_period_two() {
        let pts = enumerate_periodic(&sys("cantor-thirds"), 2).unwrap();
        assert_eq!(pts.len(), 4);
        let xs: Vec<f64> = pts.iter().map(|p| p.x).collect();
        let expect = [0.0, 0.25, 0.75, 1.0];
        for (x, e) in xs.iter().zip(expect) {
            assert!((x - e).abs() < 1e-15, "{xs:?}");
        }
        for p in &pts {
            let m = if p.period == 1 { 3.0 } else { 9.0 };
            assert!((p.multiplier - m).abs() < 1e-12);
        }
    }

    #[test]
    fn golden_mean_period_three_count() {
        assert_eq!(enumerate_periodic(&sys("golden-mean-thirds"), 3).unwrap().len(), 4);
    }

    #[test]
    fn paper_example_fixed_points() {
        let pts = enumerate_periodic(&sys("paper-example"), 1).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].x, 0.0);
        assert!((pts[0].multiplier - 1.0).abs() <= 1e-8);
        assert_eq!(pts[0].class, PointClass::Parabolic);
        assert!((pts[1].x - 1.0).abs() <= 1e-12);
        assert!((pts[1].multiplier - 10.0).abs() <= 1e-8);
        assert_eq!(pts[1].class, PointClass::Expanding);
    }

    #[test]
    fn periodic_points_reevaluate() {
        for name in ["nonlinear-perturbed", "paper-example", "golden-mean-thirds"] {
            let s = sys(name);
            for n in 1..=5 {
                for p in enumerate_periodic(&s, n).unwrap() {
                    let a = orbit_analyze(&s, p.x, p.period).unwrap();
                    let back = a.positions[p.period];
                    // Forward re-evaluation amplifies the rounding of x by the multiplier.
                    let floor = 4.0 * p.multiplier * f64::EPSILON;
                    assert!((back - p.x).abs() <= 1e-12 + floor, "{name} {} {back} {}", p.word, p.x);
                    assert!(p.residual <= 1e-13);
                }
            }
        }
    }

    #[test]
    fn classification() {
        let mut p = PeriodicPoint {
            word: Word::new(vec![1]),
            period: 1,
            x: 0.0,
            multiplier: 1.0,
            class: PointClass::Parabolic,
            residual: 0.0,
        };
        assert_eq!(classify_point(&p, 1e-8).unwrap(), PointClass::Parabolic);
        p.multiplier = 10.0;
        assert_eq!(classify_point(&p, 1e-8).unwrap(), PointClass::Expanding);
        p.multiplier = 0.5;
        assert!(matches!(classify_point(&p, 1e-8), Err(Error::ContractionDetected { .. })));
    }

    #[test]
    fn hyperbolicity_reports() {
        let r = uniform_hyperbolicity_report(&sys("cantor-thirds"), 8).unwrap();
        assert!((r.min_rate - 3.0).abs() < 1e-9);
        assert!(r.parabolic.is_empty());
        let r = uniform_hyperbolicity_report(&sys("golden-mean-thirds"), 6).unwrap();
        assert!((r.min_rate - 3.0).abs() < 1e-9);
        let r = uniform_hyperbolicity_report(&sys("paper-example"), 3).unwrap();
        assert_eq!(r.parabolic.len(), 1);
        assert_eq!(r.parabolic[0].x, 0.0);
    }

    #[test]
    fn membership_verdicts() {
        let alphas = [0.5, 1.0, 2.0];
        let s = sys("cantor-thirds");
        assert!(matches!(h_membership(&s, 0.0, 40, &alphas).unwrap(), HMembership::InH { alpha, .. } if alpha == 1.0));
        let s = sys("paper-example");
        assert!(matches!(
            h_membership(&s, 0.9, 40, &alphas).unwrap(),
            HMembership::LikelyNotInH { step: 1, .. }
        ));
        assert!(matches!(h_membership(&s, 1.0, 40, &alphas).unwrap(), HMembership::InH { .. }));
    }

    #[test]
    fn pliss_lower_bound() {
        for name in ["cantor-thirds", "golden-mean-thirds"] {
            let s = sys(name);
            let a = orbit_analyze(&s, 0.25, 50).unwrap();
            assert!(!hyperbolic_times(&a, 0.5 * 3f64.ln()).is_empty(), "{name}");
        }
    }

    #[test]
    fn instants_are_finite() {
        let c = instant_constants(&sys("nonlinear-perturbed"), 0.5);
        assert!(c.c1 > 0.0 && c.c2 >= 1.0 && c.c2.is_finite());
    }
}
