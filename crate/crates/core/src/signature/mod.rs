//! SPN signatures: the syntactic layer.
//!
//! A signature is a tree of leaves, products over disjoint scopes, and
//! weighted sums over a shared scope. Leaf symbols are opaque here; they are
//! bound to concrete distributions by [`crate::model`].

mod parser;
mod render;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpnError};

pub use parser::parse_signature;
pub use render::{render_signature, render_weight};

/// Tolerance on `sum(weights) == 1` for sum nodes.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// A non-empty set of dimension indices in `1..=n`, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Scope {
    dims: Vec<usize>,
    n: usize,
}

impl Scope {
    pub fn new(mut dims: Vec<usize>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(SpnError::Scope("ambient dimension must be positive".into()));
        }
        if dims.is_empty() {
            return Err(SpnError::Scope("empty scope".into()));
        }
        if let Some(&bad) = dims.iter().find(|&&d| d == 0 || d > n) {
            return Err(SpnError::Scope(format!("index {bad} outside [1, {n}]")));
        }
        dims.sort_unstable();
        if dims.windows(2).any(|w| w[0] == w[1]) {
            return Err(SpnError::Scope("duplicate index in scope".into()));
        }
        Ok(Scope { dims, n })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn is_disjoint(&self, other: &Scope) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.dims.len() && j < other.dims.len() {
            match self.dims[i].cmp(&other.dims[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return false,
            }
        }
        true
    }

    fn union<'a>(scopes: impl Iterator<Item = &'a Scope>, n: usize) -> Result<Scope> {
        Scope::new(scopes.flat_map(|s| s.dims.iter().copied()).collect(), n)
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, d) in self.dims.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{d}")?;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedChild {
    pub weight: f64,
    pub node: SignatureNode,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Leaf { symbol: String },
    Product { children: Vec<SignatureNode> },
    Sum { children: Vec<WeightedChild> },
}

/// A validated signature tree. Construction goes through [`SignatureNode::leaf`],
/// [`SignatureNode::product`] and [`SignatureNode::sum`], which enforce the
/// scope and simplex rules, so every value of this type is well formed.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureNode {
    kind: NodeKind,
    scope: Scope,
}

/// Leaf count `e`, weight count `k`, ambient dimension `n` and root height.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureStats {
    pub e: usize,
    pub k: usize,
    pub n: usize,
    pub depth: usize,
}

impl SignatureNode {
    pub fn leaf(symbol: impl Into<String>, scope: Scope) -> Result<Self> {
        let symbol = symbol.into();
        if symbol.is_empty() {
            return Err(SpnError::Syntax { pos: 0, msg: "empty leaf symbol".into() });
        }
        Ok(SignatureNode { kind: NodeKind::Leaf { symbol }, scope })
    }

    pub fn product(children: Vec<SignatureNode>) -> Result<Self> {
        if children.len() < 2 {
            return Err(SpnError::Scope(format!(
                "product node needs at least 2 children, got {}",
                children.len()
            )));
        }
        let n = children[0].scope.n;
        check_same_n(children.iter().map(|c| &c.scope), n)?;
        for (i, a) in children.iter().enumerate() {
            for b in &children[i + 1..] {
                if !a.scope.is_disjoint(&b.scope) {
                    return Err(SpnError::Scope(format!(
                        "product children scopes {} and {} overlap",
                        a.scope, b.scope
                    )));
                }
            }
        }
        let scope = Scope::union(children.iter().map(|c| &c.scope), n)?;
        Ok(SignatureNode { kind: NodeKind::Product { children }, scope })
    }

    pub fn sum(children: Vec<(f64, SignatureNode)>) -> Result<Self> {
        if children.len() < 2 {
            return Err(SpnError::Scope(format!(
                "sum node needs at least 2 children, got {}",
                children.len()
            )));
        }
        let scope = children[0].1.scope.clone();
        for (_, c) in &children[1..] {
            if c.scope != scope {
                return Err(SpnError::Scope(format!(
                    "sum children scopes {} and {} differ",
                    scope, c.scope
                )));
            }
        }
        let weights: Vec<f64> = children.iter().map(|(w, _)| *w).collect();
        check_simplex(&weights)?;
        let children = children
            .into_iter()
            .map(|(weight, node)| WeightedChild { weight, node })
            .collect();
        Ok(SignatureNode { kind: NodeKind::Sum { children }, scope })
    }

    pub fn kind(&self) -> &NodeKind {
        &self.kind
    }

    pub fn scope(&self) -> &Scope {
        &self.scope
    }

    pub fn n(&self) -> usize {
        self.scope.n
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }

    pub fn is_sum(&self) -> bool {
        matches!(self.kind, NodeKind::Sum { .. })
    }

    /// Leaf symbol, for leaves.
    pub fn symbol(&self) -> Option<&str> {
        match &self.kind {
            NodeKind::Leaf { symbol } => Some(symbol),
            _ => None,
        }
    }

    /// Children in order, without weights.
    pub fn children(&self) -> Vec<&SignatureNode> {
        match &self.kind {
            NodeKind::Leaf { .. } => Vec::new(),
            NodeKind::Product { children } => children.iter().collect(),
            NodeKind::Sum { children } => children.iter().map(|c| &c.node).collect(),
        }
    }

    /// Mixing weights of a sum node, `None` otherwise.
    pub fn weights(&self) -> Option<Vec<f64>> {
        match &self.kind {
            NodeKind::Sum { children } => Some(children.iter().map(|c| c.weight).collect()),
            _ => None,
        }
    }

    /// Leaves in depth-first (left to right) order. Position in this list is
    /// the leaf index used throughout the crate.
    pub fn leaves(&self) -> Vec<&SignatureNode> {
        let mut out = Vec::new();
        self.visit_pre_order(&mut |node| {
            if node.is_leaf() {
                out.push(node);
            }
        });
        out
    }

    /// Sum nodes in pre-order.
    pub fn sum_nodes(&self) -> Vec<&SignatureNode> {
        let mut out = Vec::new();
        self.visit_pre_order(&mut |node| {
            if node.is_sum() {
                out.push(node);
            }
        });
        out
    }

    pub fn visit_pre_order<'a>(&'a self, f: &mut impl FnMut(&'a SignatureNode)) {
        f(self);
        for child in self.children() {
            child.visit_pre_order(f);
        }
    }

    pub fn leaf_count(&self) -> usize {
        match &self.kind {
            NodeKind::Leaf { .. } => 1,
            _ => self.children().iter().map(|c| c.leaf_count()).sum(),
        }
    }

    /// Number of mixing weights in this subtree.
    pub fn weight_count(&self) -> usize {
        match &self.kind {
            NodeKind::Leaf { .. } => 0,
            NodeKind::Product { children } => children.iter().map(|c| c.weight_count()).sum(),
            NodeKind::Sum { children } => {
                children.len() + children.iter().map(|c| c.node.weight_count()).sum::<usize>()
            }
        }
    }

    pub fn depth(&self) -> usize {
        self.children().iter().map(|c| 1 + c.depth()).max().unwrap_or(0)
    }

    pub fn contains_sum(&self) -> bool {
        self.is_sum() || self.children().iter().any(|c| c.contains_sum())
    }

    /// Rebuilds the tree with new leaf symbols (depth-first order) and new
    /// sum weights (pre-order), keeping the shape and scopes.
    pub fn with_parameters(&self, symbols: &[String], weights: &[Vec<f64>]) -> Result<Self> {
        let mut leaf_i = 0;
        let mut sum_i = 0;
        let out = self.rebuild(symbols, weights, &mut leaf_i, &mut sum_i)?;
        if leaf_i != symbols.len() || sum_i != weights.len() {
            return Err(SpnError::Structure);
        }
        Ok(out)
    }

    fn rebuild(
        &self,
        symbols: &[String],
        weights: &[Vec<f64>],
        leaf_i: &mut usize,
        sum_i: &mut usize,
    ) -> Result<Self> {
        match &self.kind {
            NodeKind::Leaf { .. } => {
                let symbol = symbols.get(*leaf_i).ok_or(SpnError::Structure)?.clone();
                *leaf_i += 1;
                SignatureNode::leaf(symbol, self.scope.clone())
            }
            NodeKind::Product { children } => {
                let kids = children
                    .iter()
                    .map(|c| c.rebuild(symbols, weights, leaf_i, sum_i))
                    .collect::<Result<Vec<_>>>()?;
                SignatureNode::product(kids)
            }
            NodeKind::Sum { children } => {
                let w = weights.get(*sum_i).ok_or(SpnError::Structure)?;
                *sum_i += 1;
                if w.len() != children.len() {
                    return Err(SpnError::Structure);
                }
                let kids = children
                    .iter()
                    .zip(w)
                    .map(|(c, &wi)| Ok((wi, c.node.rebuild(symbols, weights, leaf_i, sum_i)?)))
                    .collect::<Result<Vec<_>>>()?;
                SignatureNode::sum(kids)
            }
        }
    }
}

fn check_same_n<'a>(scopes: impl Iterator<Item = &'a Scope>, n: usize) -> Result<()> {
    for s in scopes {
        if s.n != n {
            return Err(SpnError::Scope(format!(
                "children declared over ambient dimensions {} and {n}",
                s.n
            )));
        }
    }
    Ok(())
}

/// Checks membership in the probability simplex within [`SIMPLEX_TOLERANCE`].
pub fn check_simplex(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(SpnError::Weight("empty weight vector".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(SpnError::Weight(format!("weight {w} outside [0, 1]")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(SpnError::Weight(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

/// Exact counts for a signature.
pub fn structure_stats(node: &SignatureNode) -> StructureStats {
    StructureStats {
        e: node.leaf_count(),
        k: node.weight_count(),
        n: node.n(),
        depth: node.depth(),
    }
}

/// `(1, 1)`-similarity: same shape, same arities, same scopes at every
/// corresponding node. Weights and leaf symbols are ignored; children are
/// matched by position.
pub fn same_structure(a: &SignatureNode, b: &SignatureNode) -> bool {
    if a.scope != b.scope {
        return false;
    }
    match (&a.kind, &b.kind) {
        (NodeKind::Leaf { .. }, NodeKind::Leaf { .. }) => true,
        (NodeKind::Product { children: x }, NodeKind::Product { children: y }) => {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| same_structure(p, q))
        }
        (NodeKind::Sum { children: x }, NodeKind::Sum { children: y }) => {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| same_structure(&p.node, &q.node))
        }
        _ => false,
    }
}

impl fmt::Display for SignatureNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_signature(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const REFERENCE: &str =
        "((0.7(((0.4(f1,{1})+0.6(f2,{1})))x(f3,{2}))+0.3((f4,{1})x(f5,{2}))),{1,2})";

    fn reference() -> SignatureNode {
        parse_signature(REFERENCE, 2).unwrap()
    }

    #[test]
    fn reference_stats() {
        let s = reference();
        assert_eq!(structure_stats(&s), StructureStats { e: 5, k: 4, n: 2, depth: 3 });
        assert_eq!(s.weights().unwrap(), vec![0.7, 0.3]);
    }

    #[test]
    fn single_leaf_stats() {
        let s = parse_signature("(f1,{1})", 1).unwrap();
        assert!(s.is_leaf());
        assert_eq!(structure_stats(&s), StructureStats { e: 1, k: 0, n: 1, depth: 0 });
    }

    #[test]
    fn balanced_sum_of_products() {
        let text = "((0.5((f1,{1})x(f2,{2})x(f3,{3})x(f4,{4}))+0.5((g1,{1})x(g2,{2})x(g3,{3})x(g4,{4}))),{1,2,3,4})";
        let s = parse_signature(text, 4).unwrap();
        let st = structure_stats(&s);
        assert_eq!((st.e, st.k, st.depth), (8, 2, 2));
    }

    #[test]
    fn sum_children_must_share_scope() {
        let err = parse_signature("((0.5(f1,{1})+0.5(f2,{2})),{1})", 2).unwrap_err();
        assert!(matches!(err, SpnError::Scope(_)), "{err:?}");
    }

    #[test]
    fn product_children_must_be_disjoint() {
        let err = parse_signature("(((f1,{1})x(f2,{1,2})),{1,2})", 2).unwrap_err();
        assert!(matches!(err, SpnError::Scope(_)));
    }

    #[test]
    fn declared_scope_must_match() {
        let err = parse_signature("(((f1,{1})x(f2,{2})),{1,2,3})", 3).unwrap_err();
        assert!(matches!(err, SpnError::Scope(_)));
    }

    #[test]
    fn weights_must_be_in_simplex() {
        let err = parse_signature("((0.5(f1,{1})+0.6(f2,{1})),{1})", 1).unwrap_err();
        assert!(matches!(err, SpnError::Weight(_)));
        let err = parse_signature("((1.5(f1,{1})+0.0(f2,{1})),{1})", 1).unwrap_err();
        assert!(matches!(err, SpnError::Weight(_)));
    }

    #[test]
    fn scope_index_out_of_range() {
        assert!(matches!(parse_signature("(f1,{3})", 2), Err(SpnError::Scope(_))));
        assert!(matches!(parse_signature("(f1,{0})", 2), Err(SpnError::Scope(_))));
        assert!(matches!(parse_signature("(f1,{1,1})", 2), Err(SpnError::Scope(_))));
    }

    #[test]
    fn one_child_nodes_rejected() {
        assert!(parse_signature("((1.0(f1,{1})),{1})", 1).is_err());
        assert!(SignatureNode::product(vec![reference()]).is_err());
    }

    #[test]
    fn same_structure_ignores_weights_and_symbols() {
        let other = parse_signature(
            "((0.5(((0.9(g1,{1})+0.1(g2,{1})))x(g3,{2}))+0.5((g4,{1})x(g5,{2}))),{1,2})",
            2,
        )
        .unwrap();
        assert!(same_structure(&reference(), &other));
        assert!(same_structure(&reference(), &reference()));
    }

    #[test]
    fn swapped_sum_children_differ() {
        let swapped = parse_signature(
            "((0.3((f4,{1})x(f5,{2}))+0.7(((0.4(f1,{1})+0.6(f2,{1})))x(f3,{2}))),{1,2})",
            2,
        )
        .unwrap();
        assert!(!same_structure(&reference(), &swapped));
    }

    #[test]
    fn with_parameters_keeps_shape() {
        let s = reference();
        let symbols: Vec<String> = (1..=5).map(|i| format!("h{i}")).collect();
        let t = s.with_parameters(&symbols, &[vec![0.1, 0.9], vec![0.5, 0.5]]).unwrap();
        assert!(same_structure(&s, &t));
        assert_eq!(t.leaves()[4].symbol(), Some("h5"));
        assert_eq!(t.sum_nodes()[1].weights().unwrap(), vec![0.5, 0.5]);
    }
}
