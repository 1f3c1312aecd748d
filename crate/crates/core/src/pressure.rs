//! Topological pressure of `φ_t = −t·log|f′|` and the Bowen root.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::conformal::{power_iteration, TransferMatrix};
use crate::cylinders::Refinement;
use crate::error::{Error, Result};
use crate::exec::log_sum_exp;
use crate::maps::MarkovSystem;
use crate::orbits::{periodic_words, solve_periodic};
use crate::roots::bisect_predicate;
use crate::symbolic::Word;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cylinder,
    Periodic,
    Operator,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Cylinder, Method::Periodic, Method::Operator];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cylinder => "cylinder",
            Method::Periodic => "periodic",
            Method::Operator => "operator",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

/// A two-sided estimate of `P(φ_t)` at depth `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PressureEstimate {
    pub t: f64,
    pub n: usize,
    pub lower: f64,
    pub upper: f64,
    pub method: Method,
    /// Periodic orbit carrying more than half of the periodic sum.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dominated_by: Option<Word>,
}

#[derive(Debug, Clone)]
enum ModelData {
    Cylinder { log_derivs: Vec<f64>, log_pad: f64 },
    Periodic { words: Vec<Word>, log_mults: Vec<f64> },
    Operator { matrix: TransferMatrix, iters: usize, tol: f64 },
}

/// Everything about a pressure estimator that does not depend on `t`.
#[derive(Debug, Clone)]
pub struct PressureModel<'a> {
    system: &'a MarkovSystem,
    n: usize,
    method: Method,
    data: ModelData,
}

impl<'a> PressureModel<'a> {
    pub fn new(system: &'a MarkovSystem, n: usize, method: Method) -> Result<Self> {
        let d = system.defaults();
        Self::with_iteration(system, n, method, d.power_iters, d.power_tol)
    }

    /// As [`Self::new`], with explicit power-iteration limits for the operator method.
    pub fn with_iteration(
        system: &'a MarkovSystem,
        n: usize,
        method: Method,
        iters: usize,
        tol: f64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("depth must be at least 1".into()));
        }
        let data = match method {
            Method::Cylinder => {
                let r = Refinement::build(system, n)?;
                let pad = r.distortion(system.theta_f(), n);
                ModelData::Cylinder {
                    log_derivs: r.level(n).iter().map(|c| c.log_deriv).collect(),
                    log_pad: pad.pad.ln(),
                }
            }
            Method::Periodic => {
                if !system.graph().is_transitive() {
                    return Err(Error::NoTransitivity);
                }
                let words = periodic_words(system, n);
                if words.is_empty() {
                    return Err(Error::InvalidArgument(format!("no periodic points of period {n}")));
                }
                let roots: Vec<Word> = words.iter().map(Word::primitive_root).collect();
                let log_mults = system.exec().try_map(&roots, |u| {
                    let (_, log_mult, _) = solve_periodic(system, u)?;
                    Ok::<f64, Error>(log_mult * (n / u.len()) as f64)
                })?;
                ModelData::Periodic { words, log_mults }
            }
            Method::Operator => ModelData::Operator { matrix: TransferMatrix::build(system, n)?, iters, tol },
        };
        Ok(PressureModel { system, n, method, data })
    }

    pub fn depth(&self) -> usize {
        self.n
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn estimate(&self, t: f64) -> Result<PressureEstimate> {
        let n = self.n as f64;
        let mut dominated_by = None;
        let (lower, upper) = match &self.data {
            ModelData::Cylinder { log_derivs, log_pad } => {
                let terms: Vec<f64> = log_derivs.iter().map(|l| -t * l).collect();
                let s = log_sum_exp(&terms);
                ((s - t * log_pad) / n, (s + t * log_pad) / n)
            }
            ModelData::Periodic { words, log_mults } => {
                let terms: Vec<f64> = log_mults.iter().map(|l| -t * l).collect();
                let s = log_sum_exp(&terms);
                if let Some((i, top)) =
                    terms.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))
                {
                    if (top - s).exp() > 0.5 {
                        dominated_by = Some(words[i].primitive_root());
                    }
                }
                (s / n, s / n)
            }
            ModelData::Operator { matrix, iters, tol } => {
                let pair = power_iteration(matrix, t, *iters, *tol, self.system.exec())?;
                let p = pair.eigenvalue.ln();
                (p, p)
            }
        };
        Ok(PressureEstimate { t, n: self.n, lower, upper, method: self.method, dominated_by })
    }
}

pub fn pressure_cylinder(system: &MarkovSystem, t: f64, n: usize) -> Result<PressureEstimate> {
    PressureModel::new(system, n, Method::Cylinder)?.estimate(t)
}

pub fn pressure_periodic(system: &MarkovSystem, t: f64, n: usize) -> Result<PressureEstimate> {
    PressureModel::new(system, n, Method::Periodic)?.estimate(t)
}

pub fn pressure_operator(
    system: &MarkovSystem,
    t: f64,
    n: usize,
    iters: usize,
    tol: f64,
) -> Result<PressureEstimate> {
    PressureModel::with_iteration(system, n, Method::Operator, iters, tol)?.estimate(t)
}

/// Estimates over a grid of exponents, sharing the `t`-independent work.
pub fn pressure_curve(
    system: &MarkovSystem,
    ts: &[f64],
    n: usize,
    method: Method,
) -> Result<Vec<PressureEstimate>> {
    let model = PressureModel::new(system, n, method)?;
    ts.iter().map(|&t| model.estimate(t)).collect()
}

/// The Bowen root `t_0` with a bracket built from the lower and upper estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BowenResult {
    pub t0: f64,
    pub n: usize,
    /// `[t_lo, t_hi]`: the lower estimate is positive at `t_lo`, the upper
    /// estimate is non-positive at `t_hi`.
    pub bracket: [f64; 2],
    pub method: Method,
}

/// Largest exponent searched for a sign change.
pub const T_MAX_CAP: f64 = 4.0;

pub fn bowen_root(system: &MarkovSystem, n: usize, tol: f64, method: Method) -> Result<BowenResult> {
    bowen_root_with(&PressureModel::new(system, n, method)?, tol)
}

pub fn bowen_root_with(model: &PressureModel<'_>, tol: f64) -> Result<BowenResult> {
    let (n, method) = (model.depth(), model.method());
    let at_zero = model.estimate(0.0)?;
    if at_zero.upper <= 0.0 {
        return Ok(BowenResult { t0: 0.0, n, bracket: [0.0, 0.0], method });
    }
    let mut t_max = 1.0;
    while model.estimate(t_max)?.upper > 0.0 {
        if t_max >= T_MAX_CAP {
            return Err(Error::NoSignChange { t_max });
        }
        t_max = (2.0 * t_max).min(T_MAX_CAP);
    }
    let (_, t_hi) = bisect_predicate(0.0, t_max, tol, |t| Ok(model.estimate(t)?.upper > 0.0))?;
    let (t_lo, _) = if at_zero.lower > 0.0 {
        bisect_predicate(0.0, t_hi, tol, |t| Ok(model.estimate(t)?.lower > 0.0))?
    } else {
        (0.0, 0.0)
    };
    Ok(BowenResult { t0: 0.5 * (t_lo + t_hi), n, bracket: [t_lo, t_hi], method })
}
