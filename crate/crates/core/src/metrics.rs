//! Total variation distances between SPNs and the analytic bounds that relate
//! them to leaf and weight perturbations.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Result, SpnError};
use crate::model::{Gaussian, LeafDistribution, LeafKind, SpnModel};
use crate::rng;
use crate::signature::{same_structure, NodeKind, SignatureNode};

/// Largest joint grid enumerated exactly.
pub const GRID_CAP: u128 = 10_000_000;

/// Monte Carlo sample count for per-leaf Gaussian TV when `d > 1`.
pub const LEAF_MC_SAMPLES: usize = 100_000;

/// Fixed seed for the per-leaf Monte Carlo TV, so reports are reproducible.
pub const LEAF_MC_SEED: u64 = 0x5eed_1eaf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub is_same_structure: bool,
    /// TV between corresponding leaves, depth-first order.
    pub leaf_eps: Vec<f64>,
    /// `|w - w'|` for every mixing weight, sum nodes in pre-order.
    pub weight_alpha: Vec<f64>,
    pub eps: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// A probability table over the grid of a scope, row-major with the lowest
/// dimension index most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    /// one-based dimension indices, ascending
    pub dims: Vec<usize>,
    pub shape: Vec<usize>,
    pub probs: Vec<f64>,
}

fn grid_size(shape: &[usize]) -> u128 {
    shape.iter().map(|&s| s as u128).product()
}

fn decode_index(mut flat: usize, shape: &[usize], out: &mut [usize]) {
    for (slot, &s) in out.iter_mut().zip(shape).rev() {
        *slot = flat % s;
        flat /= s;
    }
}

fn encode_index(coords: impl Iterator<Item = usize>, shape: &[usize]) -> usize {
    coords.zip(shape).fold(0, |acc, (c, &s)| acc * s + c)
}

/// Joint tables of every node of a categorical model, in pre-order.
pub fn node_tables(model: &SpnModel) -> Result<Vec<JointTable>> {
    let shape = model
        .grid_shape()
        .ok_or_else(|| SpnError::Support("exact tables need categorical leaves".into()))?;
    let size = grid_size(&shape);
    if size > GRID_CAP {
        return Err(SpnError::Size { size, cap: GRID_CAP });
    }
    let mut out = Vec::new();
    let mut leaf_counter = 0;
    build_tables(model.structure(), model.leaves(), &shape, &mut leaf_counter, &mut out);
    Ok(out)
}

fn build_tables(
    node: &SignatureNode,
    leaves: &[LeafDistribution],
    full_shape: &[usize],
    leaf_counter: &mut usize,
    out: &mut Vec<JointTable>,
) -> usize {
    let id = out.len();
    let dims = node.scope().dims().to_vec();
    let shape: Vec<usize> = dims.iter().map(|&d| full_shape[d - 1]).collect();
    out.push(JointTable { dims: dims.clone(), shape: shape.clone(), probs: Vec::new() });
    let probs = match node.kind() {
        NodeKind::Leaf { .. } => {
            let LeafDistribution::Categorical(c) = &leaves[*leaf_counter] else {
                unreachable!("checked by grid_shape")
            };
            *leaf_counter += 1;
            c.probs().to_vec()
        }
        NodeKind::Product { children } => {
            let ids: Vec<usize> =
                children.iter().map(|c| build_tables(c, leaves, full_shape, leaf_counter, out)).collect();
            let size: usize = shape.iter().product();
            let mut coords = vec![0; dims.len()];
            // position of each child dim inside this node's dims
            let maps: Vec<Vec<usize>> = ids
                .iter()
                .map(|&c| out[c].dims.iter().map(|d| dims.binary_search(d).unwrap()).collect())
                .collect();
            (0..size)
                .map(|flat| {
                    decode_index(flat, &shape, &mut coords);
                    ids.iter()
                        .zip(&maps)
                        .map(|(&c, map)| {
                            out[c].probs[encode_index(map.iter().map(|&p| coords[p]), &out[c].shape)]
                        })
                        .product()
                })
                .collect()
        }
        NodeKind::Sum { children } => {
            let size: usize = shape.iter().product();
            let mut acc = vec![0.0; size];
            for c in children {
                let cid = build_tables(&c.node, leaves, full_shape, leaf_counter, out);
                acc.iter_mut().zip(&out[cid].probs).for_each(|(a, p)| *a += c.weight * p);
            }
            acc
        }
    };
    out[id].probs = probs;
    id
}

/// Joint pmf of a categorical model over its full grid.
pub fn joint_table(model: &SpnModel) -> Result<JointTable> {
    Ok(node_tables(model)?.swap_remove(0))
}

fn check_same_grid(a: &SpnModel, b: &SpnModel) -> Result<Vec<usize>> {
    let (Some(sa), Some(sb)) = (a.grid_shape(), b.grid_shape()) else {
        return Err(SpnError::Support("exact TV needs categorical leaves on both sides".into()));
    };
    if sa != sb {
        return Err(SpnError::Support(format!("grids {sa:?} and {sb:?} differ")));
    }
    let size = grid_size(&sa);
    if size > GRID_CAP {
        return Err(SpnError::Size { size, cap: GRID_CAP });
    }
    Ok(sa)
}

/// `½ Σ_x |a(x) - b(x)|` over the joint grid.
pub fn tv_exact(a: &SpnModel, b: &SpnModel) -> Result<f64> {
    check_same_grid(a, b)?;
    let ta = joint_table(a)?;
    let tb = joint_table(b)?;
    Ok(0.5 * l1(&ta.probs, &tb.probs))
}

pub fn l1(p: &[f64], q: &[f64]) -> f64 {
    let len = p.len().max(q.len());
    (0..len)
        .map(|i| (p.get(i).copied().unwrap_or(0.0) - q.get(i).copied().unwrap_or(0.0)).abs())
        .sum()
}

/// Importance estimate of TV: draws `x` from `(a + b)/2` and averages
/// `|a(x) - b(x)| / (a(x) + b(x))`.
pub fn tv_monte_carlo(a: &SpnModel, b: &SpnModel, samples: usize, seed: u64) -> Result<McEstimate> {
    if samples < 1000 {
        return Err(SpnError::Config(format!("need at least 1000 samples, got {samples}")));
    }
    if a.n() != b.n() {
        return Err(SpnError::Dimension { expected: a.n(), got: b.n() });
    }
    let terms = crate::par::map_indexed(samples, |i| {
        let mut rng = rng::stream(seed, i as u64);
        let from_a: bool = rand::Rng::random(&mut rng);
        let x = if from_a { a.sample_one(&mut rng) } else { b.sample_one(&mut rng) }.point;
        let la = a.log_density(&x)?;
        let lb = b.log_density(&x)?;
        disagreement(la, lb)
    });
    let terms = terms.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(mean_and_se(&terms))
}

/// `|p - q| / (p + q)` from log densities.
fn disagreement(lp: f64, lq: f64) -> Result<f64> {
    match (lp == f64::NEG_INFINITY, lq == f64::NEG_INFINITY) {
        (true, true) => Err(SpnError::Numerical("both densities underflow at a drawn point".into())),
        (true, false) | (false, true) => Ok(1.0),
        _ => Ok(((lp - lq) / 2.0).tanh().abs()),
    }
}

fn mean_and_se(terms: &[f64]) -> McEstimate {
    let n = terms.len() as f64;
    let mean = terms.iter().sum::<f64>() / n;
    let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
    McEstimate { estimate: mean, std_error: (var / n).sqrt() }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Closed-form TV between `N(m1, s1²)` and `N(m2, s2²)`.
pub fn gaussian_tv_1d(m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
    if (s1 - s2).abs() <= 1e-14 * s1.max(s2) {
        return 2.0 * normal_cdf((m1 - m2).abs() / (2.0 * s1)) - 1.0;
    }
    // p = N(m1, s1) narrower; p > q exactly between the two density crossings
    let (m1, s1, m2, s2) = if s1 < s2 { (m1, s1, m2, s2) } else { (m2, s2, m1, s1) };
    let (v1, v2) = (s1 * s1, s2 * s2);
    // log p(x) - log q(x) = 0  =>  a x² + b x + c = 0
    let a = 1.0 / v2 - 1.0 / v1;
    let b = 2.0 * (m1 / v1 - m2 / v2);
    let c = m2 * m2 / v2 - m1 * m1 / v1 + 2.0 * (s2 / s1).ln();
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    let (r1, r2) = {
        let x1 = (-b - disc) / (2.0 * a);
        let x2 = (-b + disc) / (2.0 * a);
        (x1.min(x2), x1.max(x2))
    };
    let p = normal_cdf((r2 - m1) / s1) - normal_cdf((r1 - m1) / s1);
    let q = normal_cdf((r2 - m2) / s2) - normal_cdf((r1 - m2) / s2);
    (p - q).clamp(0.0, 1.0)
}

/// TV between two Gaussians: closed form when `d = 1`, Monte Carlo
/// (fixed seed) otherwise.
pub fn gaussian_tv(a: &Gaussian, b: &Gaussian, samples: usize, seed: u64) -> f64 {
    if a.dim() != b.dim() {
        return 1.0;
    }
    if a.dim() == 1 {
        return gaussian_tv_1d(a.mean()[0], a.cov()[(0, 0)].sqrt(), b.mean()[0], b.cov()[(0, 0)].sqrt());
    }
    let terms = crate::par::map_indexed(samples, |i| {
        let mut rng = rng::stream(seed, i as u64);
        let mut x = vec![0.0; a.dim()];
        if rand::Rng::random::<bool>(&mut rng) {
            a.sample_into(&mut rng, &mut x);
        } else {
            b.sample_into(&mut rng, &mut x);
        }
        disagreement(a.log_density(&x), b.log_density(&x)).unwrap_or(0.0)
    });
    mean_and_se(&terms).estimate
}

/// TV between two leaves. Leaves of different kinds are mutually singular.
pub fn leaf_tv(a: &LeafDistribution, b: &LeafDistribution) -> f64 {
    match (a, b) {
        (LeafDistribution::Categorical(p), LeafDistribution::Categorical(q)) => {
            (0.5 * l1(p.probs(), q.probs())).min(1.0)
        }
        (LeafDistribution::Gaussian(p), LeafDistribution::Gaussian(q)) => {
            gaussian_tv(p, q, LEAF_MC_SAMPLES, LEAF_MC_SEED)
        }
        _ => 1.0,
    }
}

/// The least `(eps, alpha)` for which the two models are similar under
/// index-wise matching of children.
pub fn similarity(a: &SpnModel, b: &SpnModel) -> SimilarityReport {
    if !same_structure(a.structure(), b.structure()) || a.leaf_kind() != b.leaf_kind() {
        return SimilarityReport {
            is_same_structure: false,
            leaf_eps: Vec::new(),
            weight_alpha: Vec::new(),
            eps: 1.0,
            alpha: 1.0,
        };
    }
    let leaf_eps: Vec<f64> = a.leaves().iter().zip(b.leaves()).map(|(p, q)| leaf_tv(p, q)).collect();
    let weight_alpha: Vec<f64> = a
        .sum_weights()
        .iter()
        .zip(b.sum_weights())
        .flat_map(|(wa, wb)| wa.iter().zip(wb).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>())
        .collect();
    let eps = leaf_eps.iter().copied().fold(0.0, f64::max);
    let alpha = weight_alpha.iter().copied().fold(0.0, f64::max);
    SimilarityReport { is_same_structure: true, leaf_eps, weight_alpha, eps, alpha }
}

/// `n·eps + k·alpha/2`, the TV bound for `(eps, alpha)`-similar SPNs.
pub fn tv_bound_similar(report: &SimilarityReport, n: usize, k: usize) -> Result<f64> {
    if !report.is_same_structure {
        return Err(SpnError::Structure);
    }
    Ok(n as f64 * report.eps + k as f64 * report.alpha / 2.0)
}

/// `(‖Πp − Πq‖₁, Σ‖pᵢ − qᵢ‖₁)` for product pmfs, the left side on the
/// exact joint grid.
pub fn product_l1_check(ps: &[Vec<f64>], qs: &[Vec<f64>]) -> Result<(f64, f64)> {
    if ps.len() != qs.len() || ps.is_empty() {
        return Err(SpnError::Support("factor lists must be non-empty and of equal length".into()));
    }
    let shape: Vec<usize> = ps.iter().zip(qs).map(|(p, q)| p.len().max(q.len())).collect();
    let size = grid_size(&shape);
    if size > GRID_CAP {
        return Err(SpnError::Size { size, cap: GRID_CAP });
    }
    let at = |v: &Vec<f64>, i: usize| v.get(i).copied().unwrap_or(0.0);
    let mut coords = vec![0; shape.len()];
    let mut lhs = 0.0;
    for flat in 0..size as usize {
        decode_index(flat, &shape, &mut coords);
        let a: f64 = ps.iter().zip(&coords).map(|(p, &c)| at(p, c)).product();
        let b: f64 = qs.iter().zip(&coords).map(|(q, &c)| at(q, c)).product();
        lhs += (a - b).abs();
    }
    let rhs = ps.iter().zip(qs).map(|(p, q)| l1(p, q)).sum();
    Ok((lhs, rhs))
}

/// One node's entry in the subtree check: exact `‖f̂ − f‖₁` on the node's
/// scope and the path-weighted bound for it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubtreeBound {
    /// pre-order node index
    pub node: usize,
    pub l1: f64,
    pub bound: f64,
}

/// Checks `‖f̂ᵢ − fᵢ‖₁ ≤ 2 Σ_{j ∈ N} Wⱼ⁽ⁱ⁾ + 2 n̂ ε / 3n + 2 k̂ ε / 3k` at every
/// node whose subtree contains a sum node. `Wⱼ⁽ⁱ⁾` is the weight product from
/// node `i` down to negligible leaf `j`, `n̂` and `k̂` the subtree's scope size
/// and weight count. Categorical models only.
pub fn subtree_bounds(
    truth: &SpnModel,
    decoded: &SpnModel,
    eps: f64,
    negligible: &BTreeSet<usize>,
) -> Result<Vec<SubtreeBound>> {
    if !same_structure(truth.structure(), decoded.structure()) {
        return Err(SpnError::Structure);
    }
    check_same_grid(truth, decoded)?;
    let ta = node_tables(truth)?;
    let tb = node_tables(decoded)?;
    let n = truth.n() as f64;
    let k = truth.structure().weight_count() as f64;
    let mut out = Vec::new();
    let mut pre = 0usize;
    let mut leaf = 0usize;
    collect_bounds(truth.structure(), &ta, &tb, eps, n, k, negligible, &mut pre, &mut leaf, &mut out);
    Ok(out)
}

/// Returns, for the subtree at `node`, the negligible leaves under it with
/// their weight products relative to `node`.
#[allow(clippy::too_many_arguments)]
fn collect_bounds(
    node: &SignatureNode,
    ta: &[JointTable],
    tb: &[JointTable],
    eps: f64,
    n: f64,
    k: f64,
    negligible: &BTreeSet<usize>,
    pre: &mut usize,
    leaf: &mut usize,
    out: &mut Vec<SubtreeBound>,
) -> Vec<f64> {
    let id = *pre;
    *pre += 1;
    let rel: Vec<f64> = match node.kind() {
        NodeKind::Leaf { .. } => {
            let i = *leaf;
            *leaf += 1;
            if negligible.contains(&i) {
                vec![1.0]
            } else {
                Vec::new()
            }
        }
        NodeKind::Product { children } => children
            .iter()
            .flat_map(|c| collect_bounds(c, ta, tb, eps, n, k, negligible, pre, leaf, out))
            .collect(),
        NodeKind::Sum { children } => children
            .iter()
            .flat_map(|c| {
                collect_bounds(&c.node, ta, tb, eps, n, k, negligible, pre, leaf, out)
                    .into_iter()
                    .map(|w| w * c.weight)
                    .collect::<Vec<_>>()
            })
            .collect(),
    };
    if node.contains_sum() {
        let n_hat = node.scope().len() as f64;
        let k_hat = node.weight_count() as f64;
        let bound = 2.0 * rel.iter().sum::<f64>() + 2.0 * n_hat * eps / (3.0 * n) + 2.0 * k_hat * eps / (3.0 * k);
        out.push(SubtreeBound { node: id, l1: l1(&ta[id].probs, &tb[id].probs), bound });
    }
    rel
}

/// Whether both models use the same leaf class; convenience for callers that
/// pick between exact and Monte Carlo TV.
pub fn exact_applicable(a: &SpnModel, b: &SpnModel) -> bool {
    a.leaf_kind() == LeafKind::Categorical && check_same_grid(a, b).is_ok()
}
