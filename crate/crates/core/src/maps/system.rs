use serde::Serialize;

use super::branch::{invert_branch, Branch, BranchKind, Interval, SmoothFn, INVERSION_TOL};
use crate::config::{AnalysisDefaults, BranchConfig, SystemConfig};
use crate::cylinders::Refinement;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::symbolic::{
    repair_complete_invariance, transitive_components, FollowerGraph, SubshiftSpec, Word,
};

/// Safety factor applied to sampled Lipschitz constants.
pub const THETA_SAFETY: f64 = 1.1;
/// Relative change of the sampled θ under grid doubling that flags non-Lipschitz growth.
pub const THETA_GROWTH_FLAG: f64 = 0.05;
const MONOTONE_SAMPLES: usize = 200;

/// A validated Markov interval system: branches, a completely invariant
/// transitive subshift, and the distortion constants `θ` and `λ = e^{4θ|I|}`.
#[derive(Debug, Clone)]
pub struct MarkovSystem {
    name: String,
    interval: Interval,
    branches: Vec<Branch>,
    subshift: SubshiftSpec,
    graph: FollowerGraph,
    theta: f64,
    theta_f: f64,
    lambda: f64,
    warnings: Vec<String>,
    defaults: AnalysisDefaults,
    exec: Exec,
}

/// Summary suitable for reports.
#[derive(Debug, Clone, Serialize)]
pub struct SystemSummary {
    pub name: String,
    pub interval: Interval,
    pub branches: Vec<BranchSummary>,
    pub forbidden: Vec<Word>,
    pub l_q: usize,
    pub theta: f64,
    pub theta_f: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchSummary {
    pub index: usize,
    pub kind: &'static str,
    pub domain: Interval,
    pub range: Interval,
    pub interval: Interval,
    pub orientation: i8,
}

impl MarkovSystem {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    /// Branch for a 1-based symbol.
    pub fn branch(&self, symbol: u32) -> &Branch {
        &self.branches[symbol as usize - 1]
    }

    pub fn subshift(&self) -> &SubshiftSpec {
        &self.subshift
    }

    pub fn graph(&self) -> &FollowerGraph {
        &self.graph
    }

    /// Lipschitz constant of `log|g_i′|` (sampled, with safety factor).
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Lipschitz constant of `log|f′|` over `∪I_i` (sampled, with safety factor).
    pub fn theta_f(&self) -> f64 {
        self.theta_f
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn defaults(&self) -> &AnalysisDefaults {
        &self.defaults
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    /// Tolerance used for endpoint comparisons, `1e-12·|I|`.
    pub fn endpoint_tol(&self) -> f64 {
        1e-12 * self.interval.len()
    }

    /// Index of the branch whose `I_i` contains `x` (within `tol`).
    pub fn branch_at(&self, x: f64, tol: f64) -> Option<usize> {
        self.branches.iter().position(|b| b.interval.contains(x, tol))
    }

    pub fn summary(&self) -> SystemSummary {
        SystemSummary {
            name: self.name.clone(),
            interval: self.interval,
            branches: self
                .branches
                .iter()
                .map(|b| BranchSummary {
                    index: b.index,
                    kind: b.kind_name(),
                    domain: b.domain,
                    range: b.range,
                    interval: b.interval,
                    orientation: b.orientation,
                })
                .collect(),
            forbidden: self.subshift.forbidden().to_vec(),
            l_q: self.subshift.max_forbidden_len(),
            theta: self.theta,
            theta_f: self.theta_f,
            lambda: self.lambda,
        }
    }
}

fn build_branch(index: usize, cfg: &BranchConfig, ambient: Interval) -> Result<Branch> {
    let sign = |v: f64| if v > 0.0 { 1 } else { -1 };
    match cfg {
        BranchConfig::Affine { a, b, domain, interval } => {
            if *a == 0.0 || !a.is_finite() {
                return Err(Error::Config(format!("affine slope must be nonzero, got {a}")));
            }
            let domain = domain.unwrap_or(ambient);
            let range = Interval::new(a * domain.lo + b, a * domain.hi + b);
            Ok(Branch {
                index,
                kind: BranchKind::Affine { a: *a, b: *b },
                domain,
                range,
                interval: interval.unwrap_or(range),
                orientation: sign(*a),
            })
        }
        BranchConfig::Expr { forward: None, contraction: Some(src), domain, interval, limits, .. } => {
            let g = SmoothFn::parse(src, limits.clone())?;
            let domain = domain.unwrap_or(ambient);
            let (g_lo, g_hi) = (g.eval(domain.lo)?, g.eval(domain.hi)?);
            let range = Interval::new(g_lo, g_hi);
            Ok(Branch {
                index,
                kind: BranchKind::Contraction(g),
                domain,
                range,
                interval: interval.unwrap_or(range),
                orientation: sign(g_hi - g_lo),
            })
        }
        BranchConfig::Expr {
            forward: Some(src),
            contraction: None,
            interval,
            image,
            search,
            limits,
            ..
        } => {
            let f = SmoothFn::parse(src, limits.clone())?;
            let interval = match (interval, image) {
                (Some(iv), _) => *iv,
                (None, Some(img)) => {
                    let search = search.unwrap_or(ambient);
                    let a = invert_branch(&f, search, img.lo, INVERSION_TOL)?;
                    let b = invert_branch(&f, search, img.hi, INVERSION_TOL)?;
                    Interval::new(a, b)
                }
                (None, None) => {
                    return Err(Error::Config("forward maps need `interval` or `image`".into()))
                }
            };
            let (f_lo, f_hi) = (f.eval(interval.lo)?, f.eval(interval.hi)?);
            Ok(Branch {
                index,
                kind: BranchKind::InverseOfForward(f),
                domain: Interval::new(f_lo, f_hi),
                range: interval,
                interval,
                orientation: sign(f_hi - f_lo),
            })
        }
        BranchConfig::Expr { .. } => Err(Error::Config(
            "give exactly one of `forward` or `contraction`".into(),
        )),
    }
}

/// Sampled supremum of the log-derivative slopes of one branch on an
/// `n`-point midpoint grid. Returns `(sup for g, sup for f)`.
fn sample_slopes(branch: &Branch, n: usize, exec: Exec) -> (f64, f64) {
    let iv = branch.sample_interval();
    let vals = exec.map_range(n, |k| {
        let s = iv.lo + (k as f64 + 0.5) / n as f64 * iv.len();
        branch.log_derivative_slopes(s).ok()
    });
    vals.into_iter()
        .flatten()
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .fold((0.0f64, 0.0f64), |(ga, fa), (g, f)| (ga.max(g), fa.max(f)))
}

fn is_strictly_monotone(branch: &Branch) -> bool {
    let iv = branch.sample_interval();
    (0..MONOTONE_SAMPLES).all(|k| {
        let s = iv.lo + (k as f64 + 0.5) / MONOTONE_SAMPLES as f64 * iv.len();
        match branch.natural_deriv(s) {
            Ok(d) => d != 0.0 && (d > 0.0) == (branch.orientation > 0),
            Err(_) => false,
        }
    })
}

/// Assemble and validate a system from its configuration.
///
/// Every violated invariant is collected into a single
/// [`Error::Validation`]; warnings are kept on the system.
pub fn make_system(cfg: &SystemConfig) -> Result<MarkovSystem> {
    let ambient = cfg.interval;
    let tol = 1e-12 * ambient.len();
    let mut errors = Vec::new();
    let mut warnings = Vec::new();

    let mut branches = Vec::new();
    for (i, bc) in cfg.branches.iter().enumerate() {
        match build_branch(i + 1, bc, ambient) {
            Ok(b) => branches.push(b),
            Err(e) => errors.push(format!("branch {}: {e}", i + 1)),
        }
    }
    if !errors.is_empty() {
        return Err(Error::Validation(errors));
    }

    let mut order: Vec<usize> = (0..branches.len()).collect();
    order.sort_by(|&a, &b| branches[a].interval.lo.total_cmp(&branches[b].interval.lo));
    for w in order.windows(2) {
        let (a, b) = (&branches[w[0]], &branches[w[1]]);
        if b.interval.lo < a.interval.hi - tol {
            errors.push(format!("I_{} and I_{} overlap", a.index, b.index));
        } else if b.interval.lo <= a.interval.hi + tol {
            warnings.push(format!("I_{} and I_{} touch", a.index, b.index));
        }
    }
    for b in &branches {
        if !ambient.contains_interval(&b.interval, tol) {
            errors.push(format!("I_{} is not contained in I", b.index));
        }
        if !is_strictly_monotone(b) {
            errors.push(format!("branch {} is not strictly monotone", b.index));
        }
    }

    let words: Vec<Word> = cfg.forbidden.iter().map(|w| Word::new(w.clone())).collect();
    let subshift = SubshiftSpec::new(branches.len(), words)
        .and_then(|s| repair_complete_invariance(&s))
        .and_then(|s| {
            let comps = transitive_components(&s.follower_graph()?);
            if comps.len() > 1 {
                warnings.push(format!(
                    "subshift splits into {} transitive components; using component {}",
                    comps.len(),
                    cfg.component
                ));
            }
            comps.into_iter().nth(cfg.component).ok_or(Error::NoTransitivity)
        });
    let subshift = match subshift {
        Ok(s) => s,
        Err(e) => {
            errors.push(format!("subshift: {e}"));
            return Err(Error::Validation(errors));
        }
    };
    let graph = subshift.follower_graph()?;

    let pairs = graph.enumerate_words(2, Exec::Sequential);
    let mut touching = Vec::new();
    for pair in &pairs {
        let (i, j) = (pair.symbols()[0], pair.symbols()[1]);
        let (gi, ij) = (&branches[i as usize - 1], branches[j as usize - 1].interval);
        if !gi.domain.contains_interval(&ij, tol) {
            errors.push(format!("I_{j} is not inside the domain of g_{i}"));
            continue;
        }
        match gi.g_interval(ij) {
            Ok(img) if gi.interval.contains_interval(&img, tol) => {
                if img.lo <= gi.interval.lo + tol || img.hi >= gi.interval.hi - tol {
                    touching.push(format!("g_{i}(I_{j})"));
                }
            }
            Ok(_) => errors.push(format!("g_{i}(I_{j}) escapes I_{i}")),
            Err(e) => errors.push(format!("g_{i}(I_{j}): {e}")),
        }
    }
    if !touching.is_empty() {
        warnings.push(format!(
            "branch images touch the boundary of their I_i (relaxed inclusion): {}",
            touching.join(", ")
        ));
    }
    if !errors.is_empty() {
        return Err(Error::Validation(errors));
    }

    let exec = Exec::default();
    let n = cfg.defaults.theta_samples.max(16);
    let (mut theta_g, mut theta_f) = (0.0f64, 0.0f64);
    for b in &branches {
        let (g1, f1) = sample_slopes(b, n, exec);
        let (g2, f2) = sample_slopes(b, 2 * n, exec);
        let grew = |a: f64, b: f64| b > a * (1.0 + THETA_GROWTH_FLAG) && b > 1e-300;
        if grew(g1, g2) || grew(f1, f2) {
            warnings.push(format!(
                "branch {}: sampled log-derivative slope grows under grid refinement \
                 ({:.4e} -> {:.4e}); log|g'| may not be Lipschitz",
                b.index,
                g1.max(f1),
                g2.max(f2)
            ));
        }
        theta_g = theta_g.max(g1.max(g2));
        theta_f = theta_f.max(f1.max(f2));
    }
    let theta = THETA_SAFETY * theta_g;
    let theta_f = THETA_SAFETY * theta_f;
    let lambda = (4.0 * theta * ambient.len()).exp();

    let system = MarkovSystem {
        name: cfg.name.clone().unwrap_or_else(|| "unnamed".into()),
        interval: ambient,
        branches,
        subshift,
        graph,
        theta,
        theta_f,
        lambda,
        warnings,
        defaults: cfg.defaults.clone(),
        exec,
    };

    let probe = cfg.defaults.probe_depth.max(2);
    let refinement = Refinement::build(&system, probe)?;
    let d = refinement.max_diameters();
    let non_increasing = d.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    if !non_increasing || d[probe - 1] >= d[0] {
        return Err(Error::Validation(vec![format!(
            "cylinder diameters d_1..d_{probe} are not decreasing: {d:?}"
        )]));
    }
    Ok(system)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::builtin;

    #[test]
    fn thirds_is_valid_with_trivial_constants() {
        let s = make_system(&builtin("cantor-thirds").unwrap()).unwrap();
        assert_eq!(s.theta(), 0.0);
        assert_eq!(s.theta_f(), 0.0);
        assert_eq!(s.lambda(), 1.0);
        assert_eq!(s.branches().len(), 2);
    }

    #[test]
    fn paper_example_is_valid() {
        let s = make_system(&builtin("paper-example").unwrap()).unwrap();
        let i1 = s.branch(1).interval;
        assert_eq!(i1.lo, 0.0);
        assert!((i1.hi - 0.8095).abs() < 5e-5);
        assert_eq!(s.branch(2).interval, Interval::new(0.9, 1.0));
        assert!(s.theta().is_finite() && s.theta() > 0.0);
        assert!(s.lambda() >= 1.0);
    }

    #[test]
    fn nonlinear_theta_matches_dense_grid() {
        let s = make_system(&builtin("nonlinear-perturbed").unwrap()).unwrap();
        // |g''/g'| = (1/50)/(1/3 + y/50) is maximal at y = 0.
        let oracle = (0.02f64 / (1.0 / 3.0)) * THETA_SAFETY;
        assert!((s.theta() - oracle).abs() < 1e-5 * oracle, "{}", s.theta());
    }

    #[test]
    fn overlapping_intervals_are_rejected() {
        let mut cfg = builtin("cantor-thirds").unwrap();
        cfg.branches[1] = BranchConfig::Affine { a: 0.5, b: 0.25, domain: None, interval: None };
        match make_system(&cfg) {
            Err(Error::Validation(msgs)) => {
                assert!(msgs.iter().any(|m| m.contains("overlap")), "{msgs:?}")
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn non_monotone_branch_is_rejected() {
        let mut cfg = builtin("cantor-thirds").unwrap();
        cfg.branches[0] = BranchConfig::Expr {
            forward: None,
            contraction: Some("(x-0.5)^2".into()),
            domain: None,
            interval: Some(Interval::new(0.0, 0.3)),
            image: None,
            search: None,
            limits: vec![],
        };
        assert!(matches!(make_system(&cfg), Err(Error::Validation(_))));
    }

    #[test]
    fn escaping_range_is_rejected() {
        let mut cfg = builtin("cantor-thirds").unwrap();
        cfg.branches[0] = BranchConfig::Affine {
            a: 1.0 / 3.0,
            b: 0.0,
            domain: None,
            interval: Some(Interval::new(0.0, 0.2)),
        };
        assert!(matches!(make_system(&cfg), Err(Error::Validation(_))));
    }

    #[test]
    fn split_subshift_selects_component() {
        let mut cfg = builtin("cantor-thirds").unwrap();
        cfg.forbidden = vec![vec![1, 2], vec![2, 1]];
        cfg.component = 1;
        let s = make_system(&cfg);
        // A single fixed branch has d_n -> 0 and is a valid (degenerate) system.
        let s = s.unwrap();
        assert!(s.warnings().iter().any(|w| w.contains("components")));
        assert_eq!(s.graph().enumerate_words(3, Exec::Sequential).len(), 1);
        cfg.component = 5;
        assert!(make_system(&cfg).is_err());
    }
}
