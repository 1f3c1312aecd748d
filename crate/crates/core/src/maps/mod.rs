//! Branch maps: the expression language, individual branches, and system assembly.

mod branch;
mod expr;
mod system;

pub use branch::{invert_branch, Branch, BranchKind, DeclaredLimit, Interval, SmoothFn, INVERSION_TOL};
pub(crate) use branch::invert_with_guess;
pub use expr::{differentiate, parse_expr, Expr};
pub use system::{make_system, BranchSummary, MarkovSystem, SystemSummary, THETA_SAFETY};
