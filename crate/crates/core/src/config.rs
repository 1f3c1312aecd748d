//! System configuration files and the built-in example registry.
//!
//! Configurations are JSON objects:
//!
//! ```json
//! {
//!   "name": "golden-mean-thirds",
//!   "interval": [0, 1],
//!   "branches": [
//!     { "kind": "affine", "a": 0.3333333333333333, "b": 0 },
//!     { "kind": "expr", "forward": "x + x^2*exp(-1/x)", "image": [0, 1],
//!       "limits": [{ "x": 0, "value": 0, "derivative": 1 }] },
//!     { "kind": "expr", "contraction": "(x+9)/10" }
//!   ],
//!   "forbidden": [[1, 1]]
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::maps::{DeclaredLimit, Interval};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default)]
    pub name: Option<String>,
    /// Ambient interval `I`.
    pub interval: Interval,
    pub branches: Vec<BranchConfig>,
    /// Forbidden words, 1-based symbols.
    #[serde(default)]
    pub forbidden: Vec<Vec<u32>>,
    /// Which transitive component to analyse when the subshift splits.
    #[serde(default)]
    pub component: usize,
    #[serde(default)]
    pub defaults: AnalysisDefaults,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BranchConfig {
    /// `g(y) = a·y + b` on `domain` (default: the ambient interval).
    Affine {
        a: f64,
        b: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain: Option<Interval>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        interval: Option<Interval>,
    },
    /// Exactly one of `forward` (the expanding map on `I_i`) or `contraction`
    /// (the branch `g_i` itself).
    Expr {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        forward: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        contraction: Option<String>,
        /// `D(g_i)` for contractions.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain: Option<Interval>,
        /// `I_i`; for forward maps either this or `image` is required.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        interval: Option<Interval>,
        /// For forward maps: `I_i` is solved as the preimage of `image` within `search`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        image: Option<Interval>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        search: Option<Interval>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        limits: Vec<DeclaredLimit>,
    },
}

/// Depths and tolerances used when a command does not override them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisDefaults {
    pub depth: usize,
    pub bowen_tol: f64,
    pub power_iters: usize,
    pub power_tol: f64,
    pub theta_samples: usize,
    pub probe_depth: usize,
    pub parabolic_tol: f64,
    pub max_period: usize,
    pub cascade_count: usize,
    pub orbit_steps: usize,
}

impl Default for AnalysisDefaults {
    fn default() -> Self {
        AnalysisDefaults {
            depth: 8,
            bowen_tol: 1e-9,
            power_iters: 20_000,
            power_tol: 1e-13,
            theta_samples: 10_000,
            probe_depth: 6,
            parabolic_tol: 1e-8,
            max_period: 6,
            cascade_count: 100_000,
            orbit_steps: 50,
        }
    }
}

impl SystemConfig {
    /// SHA-256 of the canonical JSON serialization.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_value(self)
            .and_then(|v| serde_json::to_string(&v))
            .unwrap_or_default();
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SystemConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if self.branches.is_empty() {
            return Err(Error::Config("`branches` must list at least one branch".into()));
        }
        if !(self.interval.len() > 0.0) {
            return Err(Error::Config("`interval` must have positive length".into()));
        }
        for (i, b) in self.branches.iter().enumerate() {
            if let BranchConfig::Expr { forward, contraction, interval, image, .. } = b {
                match (forward, contraction) {
                    (Some(_), None) if interval.is_none() && image.is_none() => {
                        return Err(Error::Config(format!(
                            "branch {}: forward maps need `interval` or `image`",
                            i + 1
                        )))
                    }
                    (Some(_), None) | (None, Some(_)) => {}
                    _ => {
                        return Err(Error::Config(format!(
                            "branch {}: give exactly one of `forward` or `contraction`",
                            i + 1
                        )))
                    }
                }
            }
        }
        Ok(())
    }
}

/// Names accepted by [`builtin`].
pub const BUILTINS: &[&str] = &[
    "cantor-thirds",
    "golden-mean-thirds",
    "nonlinear-perturbed",
    "paper-example",
    "parabolic-b2",
    "parabolic-b3",
    "parabolic-b4",
];

fn affine(a: f64, b: f64) -> BranchConfig {
    BranchConfig::Affine { a, b, domain: None, interval: None }
}

fn contraction(src: &str) -> BranchConfig {
    BranchConfig::Expr {
        forward: None,
        contraction: Some(src.into()),
        domain: None,
        interval: None,
        image: None,
        search: None,
        limits: Vec::new(),
    }
}

fn forward_onto_unit(src: &str, limits: Vec<DeclaredLimit>) -> BranchConfig {
    BranchConfig::Expr {
        forward: Some(src.into()),
        contraction: None,
        domain: None,
        interval: None,
        image: Some(Interval::new(0.0, 1.0)),
        search: Some(Interval::new(0.0, 1.0)),
        limits,
    }
}

/// Built-in example systems.
pub fn builtin(name: &str) -> Option<SystemConfig> {
    let unit = Interval::new(0.0, 1.0);
    let make = |branches: Vec<BranchConfig>, forbidden: Vec<Vec<u32>>| SystemConfig {
        name: Some(name.to_string()),
        interval: unit,
        branches,
        forbidden,
        component: 0,
        defaults: AnalysisDefaults::default(),
    };
    let parabolic = |b: u32| {
        make(
            vec![
                forward_onto_unit(&format!("x + x^{b}"), Vec::new()),
                contraction("(x+9)/10"),
            ],
            Vec::new(),
        )
    };
    Some(match name {
        "cantor-thirds" => make(vec![affine(1.0 / 3.0, 0.0), affine(1.0 / 3.0, 2.0 / 3.0)], vec![]),
        "golden-mean-thirds" => make(
            vec![affine(1.0 / 3.0, 0.0), affine(1.0 / 3.0, 2.0 / 3.0)],
            vec![vec![1, 1]],
        ),
        "nonlinear-perturbed" => make(
            vec![contraction("x/3 + x^2/100"), contraction("x/3 + x^2/100 + 0.65")],
            vec![],
        ),
        "paper-example" => make(
            vec![
                forward_onto_unit(
                    "x + x^2*exp(-1/x)",
                    vec![DeclaredLimit { x: 0.0, value: 0.0, derivative: Some(1.0) }],
                ),
                contraction("(x+9)/10"),
            ],
            vec![],
        ),
        "parabolic-b2" => parabolic(2),
        "parabolic-b3" => parabolic(3),
        "parabolic-b4" => parabolic(4),
        _ => return None,
    })
}

/// Load a configuration file, or a built-in system by name.
pub fn load_config(path: &str) -> Result<SystemConfig> {
    let name = path.strip_prefix("builtin:").unwrap_or(path);
    if !Path::new(path).exists() {
        if let Some(cfg) = builtin(name) {
            return Ok(cfg);
        }
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read `{path}`: {e}")))?;
    SystemConfig::from_json(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{path}: {msg}")),
        other => other,
    })
}
