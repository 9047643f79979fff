use std::collections::BTreeMap;

use super::{pad_bounds, Constraint, MilpBlock, MilpError, Sense, VarKind, Variable, EPSILON};
use crate::linear::AffineForm;
use crate::tobit::TobitModel;
use crate::tree::{NodeRef, RegressionTree};

struct NodeSpec<'a> {
    form: &'a AffineForm,
    neg: Vec<usize>,
    pos: Vec<usize>,
    local: (f64, f64),
    boxed: (f64, f64),
    /// Which side gets the `ε` offset: the negative side for tree splits,
    /// the positive side for the censoring rule.
    strict_pos: bool,
}

struct LeafSpec<'a> {
    form: &'a AffineForm,
    local: (f64, f64),
    boxed: (f64, f64),
}

pub fn feature_names(n: usize) -> Vec<String> {
    if n == 4 {
        ["h", "k", "p", "r"].iter().map(|s| s.to_string()).collect()
    } else {
        (0..n).map(|j| format!("x{j}")).collect()
    }
}

fn finite(b: (f64, f64)) -> bool {
    b.0.is_finite() && b.1.is_finite() && b.0 <= b.1
}

pub fn encode_tree(tree: &RegressionTree, obs_id: usize) -> Result<MilpBlock, MilpError> {
    if let Some(j) = tree.feature_bounds.iter().position(|&b| !finite(b)) {
        return Err(MilpError::UnboundedFeature(j));
    }
    let fb = &tree.feature_bounds;
    let mut nodes = Vec::with_capacity(tree.nodes.len());
    for (i, n) in tree.nodes.iter().enumerate() {
        if !finite((n.m_lower, n.m_upper)) {
            return Err(MilpError::UnboundedNode(i));
        }
        nodes.push(NodeSpec {
            form: &n.beta,
            neg: tree.leaves_under(n.child_neg),
            pos: tree.leaves_under(n.child_pos),
            local: pad_bounds((n.m_lower, n.m_upper)),
            boxed: pad_bounds(n.beta.interval(fb)),
            strict_pos: false,
        });
    }
    let mut leaves = Vec::with_capacity(tree.leaves.len());
    for (i, l) in tree.leaves.iter().enumerate() {
        if !finite((l.m_lower, l.m_upper)) {
            return Err(MilpError::UnboundedLeaf(i));
        }
        let (local, boxed) = if l.is_zero_leaf {
            ((0.0, 0.0), (0.0, 0.0))
        } else {
            (pad_bounds((l.m_lower, l.m_upper)), pad_bounds(l.alpha.interval(fb)))
        };
        leaves.push(LeafSpec {
            form: &l.alpha,
            local,
            boxed,
        });
    }
    debug_assert!(matches!(tree.root, NodeRef::Node(0)) || tree.nodes.is_empty());
    Ok(assemble(obs_id, fb, &nodes, &leaves))
}

/// Leaf 0 is the censored side (`yhat = 0`), leaf 1 the linear side.
pub fn encode_tobit(model: &TobitModel, feature_bounds: &[(f64, f64)], obs_id: usize) -> Result<MilpBlock, MilpError> {
    if let Some(j) = feature_bounds.iter().position(|&b| !finite(b)) {
        return Err(MilpError::UnboundedFeature(j));
    }
    if feature_bounds.len() != model.n_features() {
        return Err(MilpError::FeatureCount {
            expected: model.n_features(),
            got: feature_bounds.len(),
        });
    }
    let range = pad_bounds(model.alpha.interval(feature_bounds));
    let zero = AffineForm::zero(model.n_features());
    let nodes = [NodeSpec {
        form: &model.alpha,
        neg: vec![0],
        pos: vec![1],
        local: range,
        boxed: range,
        strict_pos: true,
    }];
    let leaves = [
        LeafSpec {
            form: &zero,
            local: (0.0, 0.0),
            boxed: (0.0, 0.0),
        },
        LeafSpec {
            form: &model.alpha,
            local: range,
            boxed: range,
        },
    ];
    Ok(assemble(obs_id, feature_bounds, &nodes, &leaves))
}

struct Terms {
    map: BTreeMap<usize, f64>,
}

fn assemble(obs_id: usize, fb: &[(f64, f64)], nodes: &[NodeSpec], leaves: &[LeafSpec]) -> MilpBlock {
    let prefix = format!("o{obs_id}_");
    let feat: Vec<String> = feature_names(fb.len()).iter().map(|n| format!("{prefix}{n}")).collect();
    let u = |l: usize| format!("{prefix}u{l}");
    let r = |l: usize| format!("{prefix}r{l}");
    let yhat = format!("{prefix}yhat");
    let n_leaves = leaves.len();

    let mut variables = Vec::new();
    for l in 0..n_leaves {
        variables.push(Variable {
            name: u(l),
            kind: VarKind::Binary,
            lower: 0.0,
            upper: 1.0,
        });
    }
    for l in 0..n_leaves {
        variables.push(Variable {
            name: r(l),
            kind: VarKind::Continuous,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        });
    }
    variables.push(Variable {
        name: yhat.clone(),
        kind: VarKind::Continuous,
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    });
    let features = feat
        .iter()
        .zip(fb)
        .map(|(name, &(lo, hi))| Variable {
            name: name.clone(),
            kind: VarKind::Continuous,
            lower: lo,
            upper: hi,
        })
        .collect();

    // Terms are collected as feature j → j, binary ℓ → F + ℓ, r ℓ → F + L + ℓ,
    // so every constraint lists features, then binaries, then leaf outputs.
    let nf = fb.len();
    let name_of = |k: usize| -> String {
        if k < nf {
            feat[k].clone()
        } else if k < nf + n_leaves {
            u(k - nf)
        } else {
            r(k - nf - n_leaves)
        }
    };
    let finish = |name: String, t: Terms, sense: Sense, rhs: f64| Constraint {
        name,
        terms: t.map.into_iter().filter(|&(_, c)| c != 0.0).map(|(k, c)| (name_of(k), c)).collect(),
        sense,
        rhs,
    };
    let with_form = |form: &AffineForm, scale: f64| Terms {
        map: form.weights().iter().enumerate().map(|(j, &w)| (j, scale * w)).collect(),
    };

    let mut constraints = Vec::new();
    constraints.push(Constraint {
        name: format!("{prefix}onehot"),
        terms: (0..n_leaves).map(|l| (u(l), 1.0)).collect(),
        sense: Sense::Eq,
        rhs: 1.0,
    });

    for (i, n) in nodes.iter().enumerate() {
        let outside: Vec<usize> = (0..n_leaves).filter(|l| !n.neg.contains(l) && !n.pos.contains(l)).collect();
        let (eps_pos, eps_neg) = if n.strict_pos { (EPSILON, 0.0) } else { (0.0, EPSILON) };

        // β-form ≥ 0 (or ≥ ε) when a positive-side leaf is active.
        let mut lo = with_form(n.form, 1.0);
        for &l in &n.neg {
            lo.map.insert(nf + l, -n.local.0);
        }
        for &l in &outside {
            lo.map.insert(nf + l, -n.boxed.0);
        }
        for &l in &n.pos {
            lo.map.insert(nf + l, -eps_pos);
        }
        constraints.push(finish(format!("{prefix}n{i}_pos"), lo, Sense::Ge, -n.form.intercept()));

        // β-form ≤ −ε (or ≤ 0) when a negative-side leaf is active.
        let mut hi = with_form(n.form, 1.0);
        for &l in &n.pos {
            hi.map.insert(nf + l, -n.local.1);
        }
        for &l in &outside {
            hi.map.insert(nf + l, -n.boxed.1);
        }
        for &l in &n.neg {
            hi.map.insert(nf + l, eps_neg);
        }
        constraints.push(finish(format!("{prefix}n{i}_neg"), hi, Sense::Le, -n.form.intercept()));
    }

    for (l, leaf) in leaves.iter().enumerate() {
        let (ll, ul) = leaf.local;
        let (lb, ub) = leaf.boxed;
        let ru = nf + n_leaves + l;
        let ui = nf + l;
        let pair = |a: f64| Terms {
            map: [(ui, a), (ru, 1.0)].into_iter().collect(),
        };
        constraints.push(finish(format!("{prefix}l{l}_a"), pair(-ll), Sense::Ge, 0.0));
        constraints.push(finish(format!("{prefix}l{l}_b"), pair(-ul), Sense::Le, 0.0));
        let mut c = with_form(leaf.form, -1.0);
        c.map.insert(ui, -ub);
        c.map.insert(ru, 1.0);
        constraints.push(finish(format!("{prefix}l{l}_c"), c, Sense::Ge, leaf.form.intercept() - ub));
        let mut d = with_form(leaf.form, -1.0);
        d.map.insert(ui, -lb);
        d.map.insert(ru, 1.0);
        constraints.push(finish(format!("{prefix}l{l}_d"), d, Sense::Le, leaf.form.intercept() - lb));
    }

    let mut out = vec![(yhat.clone(), 1.0)];
    out.extend((0..n_leaves).map(|l| (r(l), -1.0)));
    constraints.push(Constraint {
        name: format!("{prefix}yhat_def"),
        terms: out,
        sense: Sense::Eq,
        rhs: 0.0,
    });

    MilpBlock {
        prefix,
        variables,
        features,
        constraints,
        output_var: yhat,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{emit_lp, parse_lp, verify_encoding, AssignmentOutcome};
    use crate::tree::{Leaf, SplitNode};

    fn leaf(alpha: Vec<f64>, zero: bool, bounds: (f64, f64)) -> Leaf {
        Leaf {
            alpha: AffineForm::new(alpha),
            is_zero_leaf: zero,
            m_lower: bounds.0,
            m_upper: bounds.1,
            train_mae: 0.0,
            n_train: 10,
            rank_deficient: false,
        }
    }

    fn node(beta: Vec<f64>, neg: NodeRef, pos: NodeRef, bounds: (f64, f64)) -> SplitNode {
        SplitNode {
            beta: AffineForm::new(beta),
            threshold_c: 0.1,
            child_neg: neg,
            child_pos: pos,
            m_lower: bounds.0,
            m_upper: bounds.1,
            n_train: 20,
            train_accuracy: 1.0,
            regularized: false,
        }
    }

    /// Zero leaf for x0 + x1 < 1, then leaves split on x0 − x1.
    fn two_node_tree() -> RegressionTree {
        RegressionTree {
            n_features: 2,
            feature_bounds: vec![(0.0, 2.0), (0.0, 2.0)],
            root: NodeRef::Node(0),
            nodes: vec![
                node(vec![-1.0, 1.0, 1.0], NodeRef::Leaf(0), NodeRef::Node(1), (-1.0, 3.0)),
                node(vec![0.0, 1.0, -1.0], NodeRef::Leaf(1), NodeRef::Leaf(2), (-2.0, 2.0)),
            ],
            leaves: vec![
                leaf(vec![0.0, 0.0, 0.0], true, (0.0, 0.0)),
                leaf(vec![1.0, 0.5, 0.2], false, (1.0, 2.4)),
                leaf(vec![3.0, 1.0, -0.5], false, (2.0, 5.0)),
            ],
        }
    }

    #[test]
    fn two_node_tree_counts_and_equivalence() {
        let tree = two_node_tree();
        let block = encode_tree(&tree, 0).unwrap();
        let s = block.stats();
        assert_eq!((s.n_constraints, s.n_binary, s.n_continuous), (18, 3, 3));
        for x in [[0.2, 0.3], [1.5, 0.2], [0.3, 1.6], [2.0, 2.0], [0.0, 0.0], [1.0, 0.5]] {
            let want = tree.predict(&x);
            let rep = verify_encoding(&block, &x, want).unwrap();
            assert!(rep.passed(), "{x:?}: {:?}", rep.assignments);
            assert_eq!(rep.feasible().len(), 1);
        }
    }

    #[test]
    fn single_leaf_tree() {
        let tree = RegressionTree {
            n_features: 2,
            feature_bounds: vec![(0.0, 1.0), (0.0, 1.0)],
            root: NodeRef::Leaf(0),
            nodes: vec![],
            leaves: vec![leaf(vec![0.5, 2.0, -1.0], false, (-0.5, 2.5))],
        };
        let block = encode_tree(&tree, 7).unwrap();
        assert_eq!(block.stats().n_constraints, 6);
        let rep = verify_encoding(&block, &[0.25, 0.5], 0.5).unwrap();
        assert_eq!(rep.feasible(), vec![(&[1u8][..], 0.5)]);

        let mut buf = Vec::new();
        emit_lp(std::slice::from_ref(&block), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let expected = "\\ blocks: 1
Minimize
 obj: 0
Subject To
 o7_onehot: 1 o7_u0 = 1
 o7_l0_a: 0.53 o7_u0 + 1 o7_r0 >= 0
 o7_l0_b: - 2.53 o7_u0 + 1 o7_r0 <= 0
 o7_l0_c: - 2 o7_x0 + 1 o7_x1 - 2.53 o7_u0 + 1 o7_r0 >= -2.03
 o7_l0_d: - 2 o7_x0 + 1 o7_x1 + 0.53 o7_u0 + 1 o7_r0 <= 1.03
 o7_yhat_def: 1 o7_yhat - 1 o7_r0 = 0
Bounds
 0 <= o7_x0 <= 1
 0 <= o7_x1 <= 1
 0 <= o7_u0 <= 1
 o7_r0 free
 o7_yhat free
Binaries
 o7_u0
End
";
        assert_eq!(text, expected);
    }

    #[test]
    fn tobit_counts_and_sides() {
        let model = TobitModel {
            alpha: AffineForm::new(vec![-0.702, -0.027, -0.001, 1.382, -0.132]),
            sigma: 1.0,
            loglik: 0.0,
        };
        let fb = [(5.0, 30.0), (20.0, 200.0), (0.5, 12.0), (0.0, 10.0)];
        let block = encode_tobit(&model, &fb, 0).unwrap();
        let s = block.stats();
        assert_eq!((s.n_constraints, s.n_binary, s.n_continuous), (12, 2, 2));

        let rep = verify_encoding(&block, &[10.0, 50.0, 0.5, 1.0], 0.0).unwrap();
        assert_eq!(rep.feasible(), vec![(&[1u8, 0][..], 0.0)]);
        let rep = verify_encoding(&block, &[10.0, 50.0, 5.0, 1.0], 5.756).unwrap();
        let feasible = rep.feasible();
        assert_eq!(feasible.len(), 1);
        assert_eq!(feasible[0].0, &[0u8, 1][..]);
        assert!((feasible[0].1 - 5.756).abs() < 1e-9);
    }

    #[test]
    fn lp_round_trip_and_corruption() {
        let tree = two_node_tree();
        let blocks: Vec<MilpBlock> = (0..3).map(|i| encode_tree(&tree, i).unwrap()).collect();
        let mut buf = Vec::new();
        emit_lp(&blocks, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lp = parse_lp(&text).unwrap();
        assert_eq!(lp.constraints.len(), 54);
        for b in &blocks {
            let back = lp.extract_block(&b.prefix, 2).unwrap();
            assert_eq!(back.constraints, b.constraints);
            assert_eq!(back.features, b.features);
            assert_eq!(back.stats(), b.stats());
        }

        // flip one leaf coefficient in the file: the verifier must notice
        let bad = text.replace(" o1_l2_c: - 1 o1_x0", " o1_l2_c: - 1.5 o1_x0");
        assert_ne!(bad, text);
        let block = parse_lp(&bad).unwrap().extract_block("o1_", 2).unwrap();
        let x = [1.8, 0.4];
        let rep = verify_encoding(&block, &x, tree.predict(&x)).unwrap();
        assert!(!rep.passed());
        assert!(rep.excluding_constraints().contains(&"o1_l2_c"), "{:?}", rep.assignments);
        assert!(rep.assignments.iter().all(|(_, o)| !matches!(o, AssignmentOutcome::Feasible { .. })));
    }
}
