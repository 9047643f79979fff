//! Mixed-integer linear encodings of the trained models.
//!
//! Each observation gets its own block of variables with a name prefix
//! `o{id}_`: one binary `u{ℓ}` and one continuous `r{ℓ}` per leaf, and the
//! output `yhat`. Feature values are external symbols (`o{id}_h`, …) that a
//! host model fixes or optimizes. The block contains
//!
//! * `Σ u = 1`;
//! * two big-M constraints per split node tying the sign of its linear form
//!   to the leaves on either side (a strict inequality becomes `≤ −ε`);
//! * four constraints per leaf making `r = u · (α0 + α·x)`;
//! * `yhat = Σ r`.
//!
//! Big-M values inside a node's subtree come from the training rows that
//! reached it, padded by 1%; leaves outside the subtree use the range of the
//! form over the whole training feature box.

mod encode;
pub mod lp;
mod verify;

use serde::Serialize;

pub use encode::{encode_tobit, encode_tree, feature_names};
pub use lp::{emit_lp, parse_lp, write_manifest, LpFile};
pub use verify::{verify_encoding, AssignmentOutcome, VerifyReport, OUTPUT_TOL};

/// Offset standing in for the strict inequality of a split, in the units of
/// the split's linear form.
pub const EPSILON: f64 = 1e-6;
/// Relative padding applied to data-derived big-M bounds.
pub const BOUND_SLACK: f64 = 0.01;

#[derive(Debug, thiserror::Error)]
pub enum MilpError {
    #[error("node {0} has no finite big-M bounds")]
    UnboundedNode(usize),
    #[error("leaf {0} has no finite big-M bounds")]
    UnboundedLeaf(usize),
    #[error("feature {0} has no finite bounds")]
    UnboundedFeature(usize),
    #[error("no binary assignment is feasible")]
    NoFeasibleAssignment,
    #[error("{0} binary assignments are feasible")]
    MultipleFeasibleAssignments(usize),
    #[error("too many binaries to enumerate ({0})")]
    TooManyBinaries(usize),
    #[error("expected {expected} feature values, got {got}")]
    FeatureCount { expected: usize, got: usize },
    #[error("LP parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("block {0} not found in LP file")]
    MissingBlock(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64, tol: f64) -> bool {
        match self {
            Sense::Le => lhs <= rhs + tol,
            Sense::Ge => lhs >= rhs - tol,
            Sense::Eq => (lhs - rhs).abs() <= tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(String, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MilpBlock {
    pub prefix: String,
    /// Block-owned variables: binaries, leaf outputs and the output.
    pub variables: Vec<Variable>,
    /// External feature symbols with their modeled bounds, in feature order.
    pub features: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub output_var: String,
}

/// Per-observation size of a block. `n_continuous` counts the leaf outputs
/// `r`; the output `yhat` is one more continuous variable on top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EncodingStats {
    pub n_constraints: usize,
    pub n_binary: usize,
    pub n_continuous: usize,
}

impl MilpBlock {
    pub fn stats(&self) -> EncodingStats {
        let n_binary = self.variables.iter().filter(|v| v.kind == VarKind::Binary).count();
        let n_cont = self
            .variables
            .iter()
            .filter(|v| v.kind == VarKind::Continuous && v.name != self.output_var)
            .count();
        EncodingStats {
            n_constraints: self.constraints.len(),
            n_binary,
            n_continuous: n_cont,
        }
    }

    pub fn binaries(&self) -> Vec<&str> {
        self.variables
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .map(|v| v.name.as_str())
            .collect()
    }
}

/// Range of an affine form over a feature box.
pub fn compute_bigm(form: &crate::linear::AffineForm, feature_bounds: &[(f64, f64)]) -> (f64, f64) {
    form.interval(feature_bounds)
}

/// Widens `(lo, hi)` by [`BOUND_SLACK`] of its width, and at least `2ε`.
pub fn pad_bounds((lo, hi): (f64, f64)) -> (f64, f64) {
    let s = (BOUND_SLACK * (hi - lo)).max(2.0 * EPSILON);
    (lo - s, hi + s)
}
