//! Geometric cylinders `Δ_w`, diameter statistics, distortion pads and gaps.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::maps::{Interval, MarkovSystem};
use crate::symbolic::Word;

/// One depth-`n` cylinder `Δ_w = g_{w_1}(Δ_{σw})`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cylinder {
    pub word: Word,
    pub left: f64,
    pub right: f64,
    /// Reference point `x_w = g_w(mid I_{w_n})` inside the cylinder.
    pub point: f64,
    /// `log|(f^n)′(x_w)|`.
    pub log_deriv: f64,
    /// `log|f′(x_w)|`, the first factor of `log_deriv`.
    pub log_step: f64,
}

impl Cylinder {
    pub fn depth(&self) -> usize {
        self.word.len()
    }

    pub fn length(&self) -> f64 {
        self.right - self.left
    }

    pub fn interval(&self) -> Interval {
        Interval::new(self.left, self.right)
    }

    /// `|(g_w)′|` at the preimage of the reference point.
    pub fn deriv_mid(&self) -> f64 {
        (-self.log_deriv).exp()
    }
}

/// All cylinders of depths `1..=n`, each level in lexicographic word order.
#[derive(Debug, Clone)]
pub struct Refinement {
    levels: Vec<Vec<Cylinder>>,
}

fn base_cylinder(system: &MarkovSystem, symbol: u32) -> Result<Cylinder> {
    let branch = system.branch(symbol);
    let iv = branch.interval;
    let point = iv.mid();
    let (_, df) = branch.f_with_deriv(point)?;
    let log_step = df.abs().ln();
    Ok(Cylinder {
        word: Word::new(vec![symbol]),
        left: iv.lo,
        right: iv.hi,
        point,
        log_deriv: log_step,
        log_step,
    })
}

fn child_cylinder(system: &MarkovSystem, word: &Word, tail: &Cylinder) -> Result<Cylinder> {
    let branch = system.branch(word.symbols()[0]);
    let a = branch.g(tail.left)?;
    let b = branch.g(tail.right)?;
    let (point, dg) = branch.g_with_deriv(tail.point)?;
    let log_step = -dg.abs().ln();
    Ok(Cylinder {
        word: word.clone(),
        left: a.min(b),
        right: a.max(b),
        point,
        log_deriv: log_step + tail.log_deriv,
        log_step,
    })
}

impl Refinement {
    /// Refine to depth `n`, reusing each level for the next.
    pub fn build(system: &MarkovSystem, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("depth must be at least 1".into()));
        }
        let exec = system.exec();
        let graph = system.graph();
        let mut levels: Vec<Vec<Cylinder>> = Vec::with_capacity(n);
        let first = graph.enumerate_words(1, exec);
        levels.push(exec.try_map(&first, |w| base_cylinder(system, w.symbols()[0]))?);
        for depth in 2..=n {
            let words = graph.enumerate_words(depth, exec);
            let prev = &levels[depth - 2];
            let next = exec.try_map(&words, |w| {
                let tail = w.tail();
                let idx = prev
                    .binary_search_by(|c| c.word.cmp(&tail))
                    .map_err(|_| Error::InvalidWord(format!("tail of {w} is not admissible")))?;
                child_cylinder(system, w, &prev[idx])
            })?;
            levels.push(next);
        }
        Ok(Refinement { levels })
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Cylinders of depth `n` (1-based).
    pub fn level(&self, n: usize) -> &[Cylinder] {
        &self.levels[n - 1]
    }

    pub fn deepest(&self) -> &[Cylinder] {
        self.levels.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn find(&self, word: &Word) -> Option<&Cylinder> {
        let level = self.levels.get(word.len().checked_sub(1)?)?;
        level.binary_search_by(|c| c.word.cmp(word)).ok().map(|i| &level[i])
    }

    /// `d_k` for `k = 1..=depth`.
    pub fn max_diameters(&self) -> Vec<f64> {
        self.levels
            .iter()
            .map(|l| l.iter().map(Cylinder::length).fold(0.0, f64::max))
            .collect()
    }

    /// Tempered-distortion pad at depth `n` from the stored diameters.
    pub fn distortion(&self, theta_f: f64, n: usize) -> DistortionBound {
        let sum: f64 = self.max_diameters()[..n].iter().sum();
        let log_pad = theta_f * sum;
        DistortionBound { depth: n, rho: log_pad / n as f64, pad: log_pad.exp() }
    }

    /// Adjacent pairs at depth `n` separated by at most `tol`.
    pub fn touching(&self, n: usize, tol: f64) -> Vec<(Word, Word)> {
        sorted_by_position(self.level(n))
            .windows(2)
            .filter(|w| w[1].left - w[0].right <= tol)
            .map(|w| (w[0].word.clone(), w[1].word.clone()))
            .collect()
    }
}

fn sorted_by_position(level: &[Cylinder]) -> Vec<&Cylinder> {
    let mut v: Vec<&Cylinder> = level.iter().collect();
    v.sort_by(|a, b| a.left.total_cmp(&b.left).then_with(|| a.word.cmp(&b.word)));
    v
}

/// Depth-`n` cylinders in lexicographic word order.
pub fn refine(system: &MarkovSystem, n: usize) -> Result<Vec<Cylinder>> {
    Ok(Refinement::build(system, n)?.levels.pop().unwrap_or_default())
}

/// `d_n = max |Δ_w|` over admissible words of length `n`.
pub fn max_diameter(system: &MarkovSystem, n: usize) -> Result<f64> {
    Ok(refine(system, n)?.iter().map(Cylinder::length).fold(0.0, f64::max))
}

/// `ρ_n = θ_f·Σ_{k≤n} d_k / n` and `pad = e^{n·ρ_n}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistortionBound {
    pub depth: usize,
    pub rho: f64,
    pub pad: f64,
}

pub fn distortion_pad(system: &MarkovSystem, n: usize) -> Result<DistortionBound> {
    Ok(Refinement::build(system, n)?.distortion(system.theta_f(), n))
}

/// `(θ, λ)` of the system.
pub fn schwartz_constants(system: &MarkovSystem) -> (f64, f64) {
    (system.theta(), system.lambda())
}

/// `log|(f^n)′(x)|` along the coding `word`, iterating the forward branches.
pub fn log_deriv_along(system: &MarkovSystem, word: &Word, x: f64) -> Result<f64> {
    let mut x = x;
    let mut total = 0.0;
    for &s in word.symbols() {
        let (fx, df) = system.branch(s).f_with_deriv(x)?;
        total += df.abs().ln();
        x = fx;
    }
    Ok(total)
}

/// An open interval of `I` free of depth-`n` cylinders.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gap {
    pub left: f64,
    pub right: f64,
    /// Cylinder on the left, `None` at the left end of `I`.
    pub left_word: Option<Word>,
    pub right_word: Option<Word>,
    /// Whether `d_n ≤ |G| / (3λ)`.
    pub separated: bool,
}

impl Gap {
    pub fn length(&self) -> f64 {
        self.right - self.left
    }
}

/// Gaps between consecutive depth-`n` cylinders and at the ends of `I`.
pub fn gap_list(system: &MarkovSystem, n: usize) -> Result<Vec<Gap>> {
    let level = refine(system, n)?;
    Ok(gaps_of_level(system, &level))
}

pub(crate) fn gaps_of_level(system: &MarkovSystem, level: &[Cylinder]) -> Vec<Gap> {
    let tol = system.endpoint_tol();
    let ambient = system.interval();
    let d_n = level.iter().map(Cylinder::length).fold(0.0, f64::max);
    let bound = 3.0 * system.lambda();
    let sorted = sorted_by_position(level);
    let mut out = Vec::new();
    let mut push = |left: f64, right: f64, lw: Option<&Cylinder>, rw: Option<&Cylinder>| {
        if right - left > tol {
            out.push(Gap {
                left,
                right,
                left_word: lw.map(|c| c.word.clone()),
                right_word: rw.map(|c| c.word.clone()),
                separated: d_n <= (right - left) / bound,
            });
        }
    };
    let (first, last) = match (sorted.first(), sorted.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return out,
    };
    push(ambient.lo, first.left, None, Some(first));
    let mut reach = first;
    for c in &sorted[1..] {
        if c.left > reach.right {
            push(reach.right, c.left, Some(reach), Some(c));
        }
        if c.right > reach.right {
            reach = c;
        }
    }
    push(last.right.max(reach.right), ambient.hi, Some(reach), None);
    out
}

/// [`refine`] under an explicit execution policy.
pub fn refine_with(system: &MarkovSystem, n: usize, exec: Exec) -> Result<Vec<Cylinder>> {
    refine(&system.clone().with_exec(exec), n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::builtin;
    use crate::maps::make_system;

    fn sys(name: &str) -> MarkovSystem {
        make_system(&builtin(name).unwrap()).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-15
    }

    #[test]
    fn thirds_depth_two() {
        let c = refine(&sys("cantor-thirds"), 2).unwrap();
        let expect = [(0.0, 1.0 / 9.0), (2.0 / 9.0, 1.0 / 3.0), (2.0 / 3.0, 7.0 / 9.0), (8.0 / 9.0, 1.0)];
        assert_eq!(c.len(), 4);
        for (cyl, (l, r)) in c.iter().zip(expect) {
            assert!(close(cyl.left, l) && close(cyl.right, r), "{cyl:?}");
            assert!((cyl.deriv_mid() - 1.0 / 9.0).abs() < 1e-15);
        }
    }

    #[test]
    fn golden_mean_drops_forbidden_cylinder() {
        let c = refine(&sys("golden-mean-thirds"), 2).unwrap();
        let words: Vec<String> = c.iter().map(|c| c.word.to_string()).collect();
        assert_eq!(words, ["1.2", "2.1", "2.2"]);
    }

    #[test]
    fn paper_example_first_level() {
        let c = refine(&sys("paper-example"), 1).unwrap();
        assert_eq!(c[0].left, 0.0);
        assert!((c[0].right - 0.8095).abs() < 5e-5);
        assert_eq!((c[1].left, c[1].right), (0.9, 1.0));
    }

    #[test]
    fn thirds_diameters_and_pad() {
        let s = sys("cantor-thirds");
        let r = Refinement::build(&s, 6).unwrap();
        for (k, d) in r.max_diameters().iter().enumerate() {
            assert!((d - 3f64.powi(-(k as i32 + 1))).abs() < 1e-15);
        }
        let b = r.distortion(s.theta_f(), 6);
        assert_eq!((b.rho, b.pad), (0.0, 1.0));
        assert_eq!(schwartz_constants(&s), (0.0, 1.0));
    }

    #[test]
    fn nesting_and_disjointness() {
        for name in ["nonlinear-perturbed", "paper-example", "golden-mean-thirds"] {
            let s = sys(name);
            let r = Refinement::build(&s, 7).unwrap();
            let tol = s.endpoint_tol();
            for n in 2..=7 {
                for c in r.level(n) {
                    let parent = r.find(&c.word.prefix(n - 1)).unwrap();
                    assert!(c.left >= parent.left - tol && c.right <= parent.right + tol);
                    assert!(c.right > c.left);
                    assert!(c.point >= c.left - tol && c.point <= c.right + tol);
                }
                assert!(r.touching(n, tol).is_empty(), "{name} depth {n}");
            }
        }
    }

    #[test]
    fn log_deriv_matches_orbit_recomputation() {
        let s = sys("nonlinear-perturbed");
        for c in refine(&s, 5).unwrap() {
            let direct = log_deriv_along(&s, &c.word, c.point).unwrap();
            assert!((direct - c.log_deriv).abs() < 1e-10);
        }
    }

    #[test]
    fn pad_bounds_sampled_distortion() {
        let s = sys("nonlinear-perturbed");
        let r = Refinement::build(&s, 8).unwrap();
        for n in 1..=8 {
            let pad = r.distortion(s.theta_f(), n).pad;
            let level = r.level(n);
            let step = (level.len() / 32).max(1);
            for c in level.iter().step_by(step) {
                let a = log_deriv_along(&s, &c.word, c.left).unwrap();
                let b = log_deriv_along(&s, &c.word, c.right).unwrap();
                assert!((a - b).abs().exp() <= pad * (1.0 + 1e-12), "n={n}");
            }
        }
        let pads: Vec<f64> = (1..=8).map(|n| r.distortion(s.theta_f(), n).rho).collect();
        assert!(pads.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn thirds_gap() {
        let g = gap_list(&sys("cantor-thirds"), 1).unwrap();
        assert_eq!(g.len(), 1);
        assert!(close(g[0].left, 1.0 / 3.0) && close(g[0].right, 2.0 / 3.0));
        assert_eq!(g[0].left_word.as_ref().unwrap().to_string(), "1");
    }

    #[test]
    fn golden_mean_gap_covers_removed_cylinder() {
        let g = gap_list(&sys("golden-mean-thirds"), 2).unwrap();
        assert!(g[0].left == 0.0 && close(g[0].right, 2.0 / 9.0));
        assert!(g[0].left_word.is_none());
    }

    #[test]
    fn parallel_matches_sequential() {
        let s = sys("paper-example");
        let a = refine_with(&s, 8, Exec::Sequential).unwrap();
        let b = refine_with(&s, 8, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
