//! Cylinder transfer matrices and approximate conformal measures.

use serde::ser::Serializer;
use serde::Serialize;
use serde_json::{json, Value};

use crate::cylinders::{Cylinder, Refinement};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::maps::{Interval, MarkovSystem};
use crate::symbolic::Word;

/// The depth-`n` cylinder transfer matrix: row `v` has entry
/// `|f′(x_v)|^{−t}` at every `u = σv·s` with `v·s` admissible, where `x_v`
/// is the point of `Δ_v` with the largest `|f′|` among its endpoints and
/// reference point. The potential then increases under refinement, so the
/// eigenvalue is non-decreasing in `n`.
#[derive(Debug, Clone)]
pub struct TransferMatrix {
    pub depth: usize,
    pub words: Vec<Word>,
    pub cells: Vec<Interval>,
    /// `log|f′(x_v)|`.
    pub log_steps: Vec<f64>,
    pub succ: Vec<Vec<usize>>,
}

fn peak_log_step(system: &MarkovSystem, refinement: &Refinement, c: &Cylinder) -> f64 {
    let branch = system.branch(c.word.symbols()[0]);
    let samples: Vec<f64> = match refinement.find(&c.word.tail()) {
        Some(tail) if c.depth() > 1 => [tail.left, tail.right]
            .iter()
            .filter_map(|&y| branch.g_with_deriv(y).ok())
            .map(|(_, dg)| -dg.abs().ln())
            .collect(),
        _ => [c.left, c.right]
            .iter()
            .filter_map(|&x| branch.f_with_deriv(x).ok())
            .map(|(_, df)| df.abs().ln())
            .collect(),
    };
    samples.into_iter().filter(|l| l.is_finite()).fold(c.log_step, f64::max)
}

impl TransferMatrix {
    pub fn build(system: &MarkovSystem, n: usize) -> Result<Self> {
        let window = system.subshift().window();
        if n == 0 || n < window {
            return Err(Error::InvalidArgument(format!(
                "operator depth {n} must be at least max(1, l(Q) - 1) = {}",
                window.max(1)
            )));
        }
        let refinement = Refinement::build(system, n)?;
        let level = refinement.level(n);
        let words: Vec<Word> = level.iter().map(|c| c.word.clone()).collect();
        let index = |w: &[u32]| words.binary_search_by(|x| x.symbols().cmp(w)).ok();
        let mut succ = vec![Vec::new(); words.len()];
        for ext in system.graph().enumerate_words(n + 1, system.exec()) {
            let s = ext.symbols();
            if let (Some(v), Some(u)) = (index(&s[..n]), index(&s[1..])) {
                succ[v].push(u);
            }
        }
        Ok(TransferMatrix {
            depth: n,
            cells: level.iter().map(|c| c.interval()).collect(),
            log_steps: level.iter().map(|c| peak_log_step(system, &refinement, c)).collect(),
            words,
            succ,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    fn weights(&self, t: f64) -> Vec<f64> {
        self.log_steps.iter().map(|l| (-t * l).exp()).collect()
    }

    fn apply(&self, w: &[f64], v: &[f64], exec: Exec) -> Vec<f64> {
        exec.map_range(self.len(), |i| w[i] * self.succ[i].iter().map(|&j| v[j]).sum::<f64>())
    }
}

/// Leading eigenpair by power iteration from the uniform vector.
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub eigenvalue: f64,
    /// Nonnegative, summing to 1.
    pub vector: Vec<f64>,
    pub iterations: usize,
}

/// Power iteration with L1 normalization, stopped when both the eigenvalue
/// change and the total-variation change are at most `tol`.
pub fn power_iteration(
    matrix: &TransferMatrix,
    t: f64,
    iters: usize,
    tol: f64,
    exec: Exec,
) -> Result<Eigenpair> {
    let n = matrix.len();
    if n == 0 {
        return Err(Error::EmptySubshift);
    }
    let w = matrix.weights(t);
    let mut v = vec![1.0 / n as f64; n];
    let mut prev = f64::NAN;
    let mut last_change = f64::INFINITY;
    for it in 1..=iters {
        let mut next = matrix.apply(&w, &v, exec);
        let lambda: f64 = next.iter().sum();
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::NoConvergence { iters: it, last_change: lambda });
        }
        next.iter_mut().for_each(|x| *x /= lambda);
        let tv = 0.5 * next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum::<f64>();
        let dl = (lambda - prev).abs();
        last_change = dl.max(tv);
        v = next;
        if dl <= tol && tv <= tol {
            return Ok(Eigenpair { eigenvalue: lambda, vector: v, iterations: it });
        }
        prev = lambda;
    }
    Err(Error::NoConvergence { iters, last_change })
}

fn serialize_f64_sentinel<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

/// Depth-`n` cylinder weights of an approximate `t`-conformal measure.
#[derive(Debug, Clone, Serialize)]
pub struct CylinderMeasure {
    pub t: f64,
    pub depth: usize,
    pub words: Vec<Word>,
    pub weights: Vec<f64>,
    /// `e^{P(φ_t)}` at this depth; equal to 1 only at the Bowen root.
    pub eigenvalue: f64,
    pub residual: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub cells: Vec<Interval>,
}

impl CylinderMeasure {
    /// Export as `{t, depth, eigenvalue, residual, weights: [{word, mass}]}`.
    pub fn to_json(&self) -> Value {
        json!({
            "t": self.t,
            "depth": self.depth,
            "eigenvalue": self.eigenvalue,
            "residual": self.residual,
            "weights": self
                .words
                .iter()
                .zip(&self.weights)
                .map(|(w, m)| json!({"word": w, "mass": m}))
                .collect::<Vec<_>>(),
        })
    }

    pub fn mass_of(&self, word: &Word) -> Option<f64> {
        self.words.binary_search(word).ok().map(|i| self.weights[i])
    }
}

fn residual_with(matrix: &TransferMatrix, t: f64, weights: &[f64]) -> f64 {
    (0..matrix.len())
        .map(|v| {
            let image: f64 = matrix.succ[v].iter().map(|&u| weights[u]).sum();
            (image - (t * matrix.log_steps[v]).exp() * weights[v]).abs()
        })
        .fold(0.0, f64::max)
}

pub fn conformal_measure(
    system: &MarkovSystem,
    t: f64,
    n: usize,
    iters: usize,
    tol: f64,
) -> Result<CylinderMeasure> {
    let matrix = TransferMatrix::build(system, n)?;
    let pair = power_iteration(&matrix, t, iters, tol, system.exec())?;
    let residual = residual_with(&matrix, t, &pair.vector);
    Ok(CylinderMeasure {
        t,
        depth: n,
        weights: pair.vector,
        eigenvalue: pair.eigenvalue,
        residual,
        iterations: pair.iterations,
        words: matrix.words,
        cells: matrix.cells,
    })
}

/// `max_v |ν(f Δ_v) − |f′(x_v)|^t ν(Δ_v)|`, with `ν(f Δ_v)` aggregated from
/// the depth-`n` weights.
pub fn conformality_residual(system: &MarkovSystem, measure: &CylinderMeasure) -> Result<f64> {
    let matrix = TransferMatrix::build(system, measure.depth)?;
    if matrix.words != measure.words {
        return Err(Error::InvalidArgument("measure words do not match the system".into()));
    }
    Ok(residual_with(&matrix, measure.t, &measure.weights))
}

/// One radius of a pointwise-dimension probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbePoint {
    pub r: f64,
    /// Outer estimate of `ν(B(x, r))`.
    pub mass: f64,
    /// `log ν(B) / log r`, `+inf` when the ball carries no mass.
    #[serde(serialize_with = "serialize_f64_sentinel")]
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionProbe {
    pub x: f64,
    pub points: Vec<ProbePoint>,
    /// Mass of the depth-`n` cylinders containing `x`; watch this decay with `n`
    /// at parabolic points.
    pub cylinder_mass: f64,
}

pub fn pointwise_dimension_probe(measure: &CylinderMeasure, x: f64, radii: &[f64]) -> DimensionProbe {
    let ball_mass = |lo: f64, hi: f64| -> f64 {
        measure
            .cells
            .iter()
            .zip(&measure.weights)
            .filter(|(c, _)| c.lo <= hi && c.hi >= lo)
            .map(|(_, w)| w)
            .sum()
    };
    let points = radii
        .iter()
        .map(|&r| {
            let mass = ball_mass(x - r, x + r);
            let ratio = if mass > 0.0 { mass.ln() / r.ln() } else { f64::INFINITY };
            ProbePoint { r, mass, ratio }
        })
        .collect();
    DimensionProbe { x, points, cylinder_mass: ball_mass(x, x) }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TcEntry {
    pub t: f64,
    pub eigenvalue: Option<f64>,
    pub converged: bool,
}

/// Finite-depth proxy for `t_c`; depends on the depth used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TcScan {
    pub depth: usize,
    pub grid_tol: f64,
    pub entries: Vec<TcEntry>,
    pub proxy: Option<f64>,
    /// Grid point whose eigenvalue is closest to 1.
    pub nearest: Option<TcEntry>,
}

pub const TC_GRID_TOL: f64 = 1e-3;

pub fn t_c_scan(
    system: &MarkovSystem,
    grid: &[f64],
    n: usize,
    iters: usize,
    tol: f64,
    grid_tol: f64,
) -> Result<TcScan> {
    let matrix = TransferMatrix::build(system, n)?;
    let mut ts = grid.to_vec();
    ts.sort_by(f64::total_cmp);
    let entries: Vec<TcEntry> = ts
        .iter()
        .map(|&t| match power_iteration(&matrix, t, iters, tol, system.exec()) {
            Ok(p) => TcEntry { t, eigenvalue: Some(p.eigenvalue), converged: true },
            Err(_) => TcEntry { t, eigenvalue: None, converged: false },
        })
        .collect();
    let gap = |e: &TcEntry| e.eigenvalue.map(|l| (l - 1.0).abs());
    let proxy = entries.iter().find(|e| gap(e).is_some_and(|g| g <= grid_tol)).map(|e| e.t);
    let nearest = entries
        .iter()
        .filter(|e| e.converged)
        .min_by(|a, b| gap(a).unwrap().total_cmp(&gap(b).unwrap()))
        .cloned();
    Ok(TcScan { depth: n, grid_tol, entries, proxy, nearest })
}
