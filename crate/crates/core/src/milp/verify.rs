//! Exhaustive check of a block: with the features fixed, every binary
//! assignment is tried and the remaining continuous variables are pinned by
//! bound propagation.

use std::collections::HashMap;

use super::{MilpBlock, MilpError, Sense, VarKind};

pub const FEASIBILITY_TOL: f64 = 1e-9;
pub const OUTPUT_TOL: f64 = 1e-6;
const MAX_BINARIES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub enum AssignmentOutcome {
    Feasible { yhat: f64 },
    /// Name of the first constraint that rules the assignment out.
    Excluded { constraint: String },
    /// Feasible, but the constraints leave this continuous variable free.
    Undetermined { variable: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    /// Binary values in block order, one entry per assignment tried.
    pub assignments: Vec<(Vec<u8>, AssignmentOutcome)>,
    pub expected: f64,
}

impl VerifyReport {
    pub fn feasible(&self) -> Vec<(&[u8], f64)> {
        self.assignments
            .iter()
            .filter_map(|(a, o)| match o {
                AssignmentOutcome::Feasible { yhat } => Some((a.as_slice(), *yhat)),
                AssignmentOutcome::Undetermined { .. } => Some((a.as_slice(), f64::NAN)),
                AssignmentOutcome::Excluded { .. } => None,
            })
            .collect()
    }

    /// The unique feasible output, or the reason there is none.
    pub fn unique_output(&self) -> Result<f64, MilpError> {
        match self.feasible().as_slice() {
            [] => Err(MilpError::NoFeasibleAssignment),
            [(_, y)] => Ok(*y),
            many => Err(MilpError::MultipleFeasibleAssignments(many.len())),
        }
    }

    pub fn passed(&self) -> bool {
        self.unique_output().is_ok_and(|y| (y - self.expected).abs() < OUTPUT_TOL)
    }

    /// Names of constraints that excluded at least one assignment.
    pub fn excluding_constraints(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self
            .assignments
            .iter()
            .filter_map(|(_, o)| match o {
                AssignmentOutcome::Excluded { constraint } => Some(constraint.as_str()),
                _ => None,
            })
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

pub fn verify_encoding(block: &MilpBlock, x: &[f64], expected: f64) -> Result<VerifyReport, MilpError> {
    if x.len() != block.features.len() {
        return Err(MilpError::FeatureCount {
            expected: block.features.len(),
            got: x.len(),
        });
    }
    let binaries: Vec<&str> = block.binaries();
    if binaries.len() > MAX_BINARIES {
        return Err(MilpError::TooManyBinaries(binaries.len()));
    }
    let continuous: Vec<&str> = block
        .variables
        .iter()
        .filter(|v| v.kind == VarKind::Continuous)
        .map(|v| v.name.as_str())
        .collect();

    let mut fixed: HashMap<&str, f64> = block.features.iter().map(|v| v.name.as_str()).zip(x.iter().copied()).collect();
    let mut assignments = Vec::with_capacity(1 << binaries.len());
    for mask in 0u32..(1u32 << binaries.len()) {
        let bits: Vec<u8> = (0..binaries.len()).map(|i| (mask >> i & 1) as u8).collect();
        for (b, &v) in binaries.iter().zip(&bits) {
            fixed.insert(b, f64::from(v));
        }
        let outcome = solve(block, &fixed, &continuous);
        assignments.push((bits, outcome));
    }
    Ok(VerifyReport { assignments, expected })
}

/// Range of `Σ a·v` over the free variables except `skip`.
fn activity(free: &[(&str, f64)], skip: usize, bounds: &HashMap<&str, (f64, f64)>) -> (f64, f64) {
    free.iter().enumerate().filter(|&(i, _)| i != skip).fold((0.0, 0.0), |(lo, hi), (_, &(n, a))| {
        let (l, u) = bounds[n];
        if a >= 0.0 {
            (lo + a * l, hi + a * u)
        } else {
            (lo + a * u, hi + a * l)
        }
    })
}

fn solve(block: &MilpBlock, fixed: &HashMap<&str, f64>, continuous: &[&str]) -> AssignmentOutcome {
    let mut bounds: HashMap<&str, (f64, f64)> = block
        .variables
        .iter()
        .filter(|v| v.kind == VarKind::Continuous)
        .map(|v| (v.name.as_str(), (v.lower, v.upper)))
        .collect();
    for c in &block.constraints {
        for (n, _) in &c.terms {
            if !fixed.contains_key(n.as_str()) {
                bounds.entry(n.as_str()).or_insert((f64::NEG_INFINITY, f64::INFINITY));
            }
        }
    }
    let excluded = |name: &str| AssignmentOutcome::Excluded {
        constraint: name.to_string(),
    };

    for _ in 0..(2 * continuous.len() + 2) {
        let mut changed = false;
        for c in &block.constraints {
            let mut rhs = c.rhs;
            let mut free: Vec<(&str, f64)> = Vec::new();
            for (n, a) in &c.terms {
                match fixed.get(n.as_str()) {
                    Some(v) => rhs -= a * v,
                    None => free.push((n.as_str(), *a)),
                }
            }
            if free.is_empty() {
                if !c.sense.holds(0.0, rhs, FEASIBILITY_TOL) {
                    return excluded(&c.name);
                }
                continue;
            }
            // activity range of Σ a·v over current bounds
            for (i, &(n, a)) in free.iter().enumerate() {
                let (rlo, rhi) = activity(&free, i, &bounds);
                let (mut l, mut u) = bounds[n];
                // a·v ≤ rhs − rlo and/or a·v ≥ rhs − rhi
                if matches!(c.sense, Sense::Le | Sense::Eq) && rlo.is_finite() {
                    let cap = (rhs - rlo) / a;
                    if a > 0.0 {
                        u = u.min(cap);
                    } else {
                        l = l.max(cap);
                    }
                }
                if matches!(c.sense, Sense::Ge | Sense::Eq) && rhi.is_finite() {
                    let floor = (rhs - rhi) / a;
                    if a > 0.0 {
                        l = l.max(floor);
                    } else {
                        u = u.min(floor);
                    }
                }
                if l > u + FEASIBILITY_TOL {
                    return excluded(&c.name);
                }
                if l > u {
                    let m = 0.5 * (l + u);
                    (l, u) = (m, m);
                }
                if (l, u) != bounds[n] {
                    changed = true;
                    bounds.insert(n, (l, u));
                }
            }
        }
        if !changed {
            break;
        }
    }

    // every continuous variable must be pinned; evaluate at the midpoint
    let mut values: HashMap<&str, f64> = fixed.clone();
    for &n in continuous {
        let (l, u) = bounds[n];
        if !(l.is_finite() && u.is_finite()) || u - l > OUTPUT_TOL {
            return AssignmentOutcome::Undetermined { variable: n.to_string() };
        }
        values.insert(n, 0.5 * (l + u));
    }
    for c in &block.constraints {
        let lhs: f64 = c.terms.iter().map(|(n, a)| a * values[n.as_str()]).sum();
        if !c.sense.holds(lhs, c.rhs, 1e-7) {
            return excluded(&c.name);
        }
    }
    AssignmentOutcome::Feasible {
        yhat: values[block.output_var.as_str()],
    }
}
