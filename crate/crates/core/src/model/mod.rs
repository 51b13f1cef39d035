//! Concrete SPN distributions: a signature whose leaf symbols are bound to
//! categorical or Gaussian leaves.

mod gaussian;
pub mod io;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use gaussian::Gaussian;

use crate::error::{Result, SpnError};
use crate::rng;
use crate::signature::{check_simplex, NodeKind, SignatureNode};

/// A categorical pmf over the grid `{0..support}^dims`, flattened row-major
/// with the lowest scope index most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    probs: Vec<f64>,
    support: usize,
    dims: usize,
}

impl Categorical {
    pub fn new(probs: Vec<f64>, dims: usize) -> Result<Self> {
        if dims == 0 || probs.is_empty() {
            return Err(SpnError::Binding("empty categorical leaf".into()));
        }
        let support = (probs.len() as f64).powf(1.0 / dims as f64).round() as usize;
        if support.checked_pow(dims as u32) != Some(probs.len()) {
            return Err(SpnError::Binding(format!(
                "{} probabilities do not form a grid over {dims} dimensions",
                probs.len()
            )));
        }
        check_simplex(&probs).map_err(|e| SpnError::Binding(e.to_string()))?;
        Ok(Categorical { probs, support, dims })
    }

    /// Single-dimension leaf.
    pub fn univariate(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs, 1)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn support(&self) -> usize {
        self.support
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    fn index(&self, coords: &[f64]) -> Option<usize> {
        let mut idx = 0usize;
        for &c in coords {
            if c < 0.0 || c.fract() != 0.0 || c >= self.support as f64 {
                return None;
            }
            idx = idx * self.support + c as usize;
        }
        Some(idx)
    }

    pub fn log_pmf(&self, coords: &[f64]) -> f64 {
        self.index(coords).map(|i| self.probs[i].ln()).unwrap_or(f64::NEG_INFINITY)
    }

    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut flat = None;
        for (i, &p) in self.probs.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            acc += p;
            flat = Some(i);
            if u < acc {
                break;
            }
        }
        let mut flat = flat.expect("pmf has positive mass");
        for slot in out.iter_mut().rev() {
            *slot = (flat % self.support) as f64;
            flat /= self.support;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeafKind {
    Categorical,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LeafDistribution {
    Categorical(Categorical),
    Gaussian(Gaussian),
}

impl LeafDistribution {
    pub fn categorical(probs: Vec<f64>) -> Result<Self> {
        Ok(LeafDistribution::Categorical(Categorical::univariate(probs)?))
    }

    pub fn gaussian(mean: Vec<f64>, cov_row_major: Vec<f64>) -> Result<Self> {
        Ok(LeafDistribution::Gaussian(Gaussian::new(mean, cov_row_major)?))
    }

    pub fn kind(&self) -> LeafKind {
        match self {
            LeafDistribution::Categorical(_) => LeafKind::Categorical,
            LeafDistribution::Gaussian(_) => LeafKind::Gaussian,
        }
    }

    /// Number of coordinates the leaf is defined over.
    pub fn dim(&self) -> usize {
        match self {
            LeafDistribution::Categorical(c) => c.dims(),
            LeafDistribution::Gaussian(g) => g.dim(),
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        match self {
            LeafDistribution::Categorical(c) => c.log_pmf(x),
            LeafDistribution::Gaussian(g) => g.log_density(x),
        }
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            LeafDistribution::Categorical(c) => c.sample_into(rng, out),
            LeafDistribution::Gaussian(g) => g.sample_into(rng, out),
        }
    }
}

/// A point drawn from a model together with the leaves that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub point: Vec<f64>,
    /// Indices (depth-first order) of the leaves that generated the
    /// coordinate blocks, ascending. Their scopes partition `1..=n`.
    pub leaf_path: Vec<usize>,
}

#[derive(Debug, Clone)]
enum FlatKind {
    Leaf(usize),
    Product(Vec<usize>),
    Sum(Vec<(f64, usize)>),
}

#[derive(Debug, Clone)]
struct FlatNode {
    kind: FlatKind,
    /// zero-based coordinates
    dims: Vec<usize>,
}

/// Flattened tree, node 0 is the root; children always have larger ids.
#[derive(Debug, Clone)]
struct Compiled {
    nodes: Vec<FlatNode>,
}

impl Compiled {
    fn build(root: &SignatureNode) -> Self {
        let mut nodes = Vec::new();
        let mut leaf_counter = 0;
        Self::push(root, &mut nodes, &mut leaf_counter);
        Compiled { nodes }
    }

    fn push(node: &SignatureNode, nodes: &mut Vec<FlatNode>, leaf_counter: &mut usize) -> usize {
        let id = nodes.len();
        let dims = node.scope().dims().iter().map(|d| d - 1).collect();
        nodes.push(FlatNode { kind: FlatKind::Leaf(usize::MAX), dims });
        let kind = match node.kind() {
            NodeKind::Leaf { .. } => {
                *leaf_counter += 1;
                FlatKind::Leaf(*leaf_counter - 1)
            }
            NodeKind::Product { children } => FlatKind::Product(
                children.iter().map(|c| Self::push(c, nodes, leaf_counter)).collect(),
            ),
            NodeKind::Sum { children } => FlatKind::Sum(
                children
                    .iter()
                    .map(|c| (c.weight, Self::push(&c.node, nodes, leaf_counter)))
                    .collect(),
            ),
        };
        nodes[id].kind = kind;
        id
    }
}

/// An SPN distribution over `R^n` (or the integer grid, for categorical
/// leaves). Immutable once built.
#[derive(Debug, Clone)]
pub struct SpnModel {
    structure: SignatureNode,
    symbols: Vec<String>,
    leaves: Vec<LeafDistribution>,
    path_weights: Vec<f64>,
    compiled: Compiled,
}

impl PartialEq for SpnModel {
    fn eq(&self, other: &Self) -> bool {
        self.structure == other.structure && self.leaves == other.leaves
    }
}

impl SpnModel {
    /// Binds every leaf symbol of `structure` to a distribution.
    pub fn new(structure: SignatureNode, bindings: BTreeMap<String, LeafDistribution>) -> Result<Self> {
        let symbols: Vec<String> =
            structure.leaves().iter().map(|l| l.symbol().unwrap_or_default().to_string()).collect();
        let mut seen = HashSet::new();
        for s in &symbols {
            if !seen.insert(s.as_str()) {
                return Err(SpnError::Binding(format!("leaf symbol {s} appears more than once")));
            }
        }
        if let Some(extra) = bindings.keys().find(|k| !seen.contains(k.as_str())) {
            return Err(SpnError::Binding(format!("binding for unknown leaf {extra}")));
        }
        let mut bindings = bindings;
        let leaves = symbols
            .iter()
            .map(|s| {
                bindings.remove(s).ok_or_else(|| SpnError::Binding(format!("leaf {s} is unbound")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_leaves(structure, leaves)
    }

    /// Binds leaves by depth-first position, keeping the structure's symbols.
    pub fn from_leaves(structure: SignatureNode, leaves: Vec<LeafDistribution>) -> Result<Self> {
        let leaf_nodes = structure.leaves();
        if leaf_nodes.len() != leaves.len() {
            return Err(SpnError::Binding(format!(
                "{} leaves in structure, {} distributions supplied",
                leaf_nodes.len(),
                leaves.len()
            )));
        }
        let symbols: Vec<String> =
            leaf_nodes.iter().map(|l| l.symbol().unwrap_or_default().to_string()).collect();
        if symbols.iter().collect::<HashSet<_>>().len() != symbols.len() {
            return Err(SpnError::Binding("leaf symbols must be distinct".into()));
        }
        let n = structure.n();
        if structure.scope().len() != n {
            return Err(SpnError::Binding(format!(
                "root scope {} does not cover all {n} dimensions",
                structure.scope()
            )));
        }
        for (node, leaf) in leaf_nodes.iter().zip(&leaves) {
            if node.scope().len() != leaf.dim() {
                return Err(SpnError::Binding(format!(
                    "leaf {} has scope {} but a {}-dimensional distribution",
                    node.symbol().unwrap_or_default(),
                    node.scope(),
                    leaf.dim()
                )));
            }
        }
        let kinds: BTreeSet<_> = leaves.iter().map(|l| l.kind() as u8).collect();
        if kinds.len() > 1 {
            return Err(SpnError::Binding("categorical and Gaussian leaves mixed in one model".into()));
        }
        if leaves[0].kind() == LeafKind::Categorical {
            // every dimension needs one consistent support size
            let mut support = vec![None; n];
            for (node, leaf) in leaf_nodes.iter().zip(&leaves) {
                let LeafDistribution::Categorical(c) = leaf else { unreachable!() };
                for &d in node.scope().dims() {
                    match support[d - 1] {
                        None => support[d - 1] = Some(c.support()),
                        Some(s) if s != c.support() => {
                            return Err(SpnError::Support(format!(
                                "dimension {d} has support sizes {s} and {}",
                                c.support()
                            )))
                        }
                        _ => {}
                    }
                }
            }
        }
        drop(leaf_nodes);
        let compiled = Compiled::build(&structure);
        let mut model = SpnModel { structure, symbols, leaves, path_weights: Vec::new(), compiled };
        model.path_weights = model.compute_path_weights();
        Ok(model)
    }

    pub fn structure(&self) -> &SignatureNode {
        &self.structure
    }

    pub fn n(&self) -> usize {
        self.structure.n()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaves(&self) -> &[LeafDistribution] {
        &self.leaves
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn leaf_kind(&self) -> LeafKind {
        self.leaves[0].kind()
    }

    /// Leaf scopes in depth-first order, as one-based dimension indices.
    pub fn leaf_scopes(&self) -> Vec<Vec<usize>> {
        self.structure.leaves().iter().map(|l| l.scope().dims().to_vec()).collect()
    }

    /// Per-dimension support sizes for categorical models.
    pub fn grid_shape(&self) -> Option<Vec<usize>> {
        if self.leaf_kind() != LeafKind::Categorical {
            return None;
        }
        let mut shape = vec![0; self.n()];
        for (dims, leaf) in self.leaf_scopes().iter().zip(&self.leaves) {
            if let LeafDistribution::Categorical(c) = leaf {
                for &d in dims {
                    shape[d - 1] = c.support();
                }
            }
        }
        Some(shape)
    }

    /// Same structure, new leaves (depth-first order).
    pub fn with_leaves(&self, leaves: Vec<LeafDistribution>) -> Result<Self> {
        Self::from_leaves(self.structure.clone(), leaves)
    }

    /// Same shape and leaves, new sum weights (pre-order).
    pub fn with_weights(&self, weights: &[Vec<f64>]) -> Result<Self> {
        let structure = self.structure.with_parameters(&self.symbols, weights)?;
        Self::from_leaves(structure, self.leaves.clone())
    }

    /// Sum-node weight vectors in pre-order.
    pub fn sum_weights(&self) -> Vec<Vec<f64>> {
        self.structure.sum_nodes().iter().filter_map(|s| s.weights()).collect()
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n() {
            return Err(SpnError::Dimension { expected: self.n(), got: x.len() });
        }
        let mut buf = Vec::new();
        Ok(self.log_density_at(0, x, &mut buf))
    }

    /// Density (or pmf) at `x`, evaluated in log space.
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_density(x)?.exp())
    }

    fn log_density_at(&self, id: usize, x: &[f64], buf: &mut Vec<f64>) -> f64 {
        let node = &self.compiled.nodes[id];
        match &node.kind {
            FlatKind::Leaf(i) => {
                buf.clear();
                buf.extend(node.dims.iter().map(|&d| x[d]));
                let coords = std::mem::take(buf);
                let v = self.leaves[*i].log_density(&coords);
                *buf = coords;
                v
            }
            FlatKind::Product(children) => {
                let mut total = 0.0;
                for &c in children {
                    total += self.log_density_at(c, x, buf);
                    if total == f64::NEG_INFINITY {
                        break;
                    }
                }
                total
            }
            FlatKind::Sum(children) => {
                let terms: Vec<f64> = children
                    .iter()
                    .filter(|(w, _)| *w > 0.0)
                    .map(|&(w, c)| w.ln() + self.log_density_at(c, x, buf))
                    .collect();
                log_sum_exp(&terms)
            }
        }
    }

    /// Ancestral sampling. Draw `i` uses its own stream of `seed`, so the
    /// output is identical however the draws are scheduled.
    pub fn sample(&self, seed: u64, count: usize) -> Vec<LabeledSample> {
        crate::par::map_indexed(count, |i| self.sample_one(&mut rng::stream(seed, i as u64)))
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> LabeledSample {
        let mut point = vec![0.0; self.n()];
        let mut leaf_path = Vec::new();
        let mut buf = Vec::new();
        self.sample_at(0, rng, &mut point, &mut leaf_path, &mut buf);
        leaf_path.sort_unstable();
        LabeledSample { point, leaf_path }
    }

    fn sample_at<R: Rng + ?Sized>(
        &self,
        id: usize,
        rng: &mut R,
        point: &mut [f64],
        path: &mut Vec<usize>,
        buf: &mut Vec<f64>,
    ) {
        let node = &self.compiled.nodes[id];
        match &node.kind {
            FlatKind::Leaf(i) => {
                buf.clear();
                buf.resize(node.dims.len(), 0.0);
                self.leaves[*i].sample_into(rng, buf);
                for (&d, &v) in node.dims.iter().zip(buf.iter()) {
                    point[d] = v;
                }
                path.push(*i);
            }
            FlatKind::Product(children) => {
                for &c in children {
                    self.sample_at(c, rng, point, path, buf);
                }
            }
            FlatKind::Sum(children) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = None;
                for &(w, c) in children {
                    if w <= 0.0 {
                        continue;
                    }
                    acc += w;
                    chosen = Some(c);
                    if u < acc {
                        break;
                    }
                }
                let c = chosen.expect("sum node has a positive weight");
                self.sample_at(c, rng, point, path, buf);
            }
        }
    }

    fn compute_path_weights(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.leaves.len()];
        let mut stack = vec![(0usize, 1.0f64)];
        while let Some((id, w)) = stack.pop() {
            match &self.compiled.nodes[id].kind {
                FlatKind::Leaf(i) => out[*i] = w,
                FlatKind::Product(children) => stack.extend(children.iter().map(|&c| (c, w))),
                FlatKind::Sum(children) => stack.extend(children.iter().map(|&(cw, c)| (c, w * cw))),
            }
        }
        out
    }

    /// Product of the mixing weights on the root-to-leaf path.
    pub fn path_weight(&self, leaf_index: usize) -> Result<f64> {
        self.path_weights
            .get(leaf_index)
            .copied()
            .ok_or(SpnError::Index { index: leaf_index, leaves: self.leaves.len() })
    }

    pub fn path_weights(&self) -> &[f64] {
        &self.path_weights
    }

    /// Leaves whose path weight is below `eps / (3e)`.
    pub fn negligible_leaves(&self, epsilon: f64) -> BTreeSet<usize> {
        let threshold = epsilon / (3.0 * self.leaves.len() as f64);
        self.negligible_below(threshold)
    }

    pub fn negligible_below(&self, threshold: f64) -> BTreeSet<usize> {
        self.path_weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w < threshold)
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}
