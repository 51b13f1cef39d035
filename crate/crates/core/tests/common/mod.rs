//! Shared generators for the integration tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use spn_core::model::Categorical;
use spn_core::signature::Scope;
use spn_core::{parse_signature, LeafDistribution, SignatureNode, SpnModel};

pub const REFERENCE: &str = "((0.7(((0.4(f1,{1})+0.6(f2,{1})))x(f3,{2}))+0.3((f4,{1})x(f5,{2}))),{1,2})";

pub fn rng(seed: u64) -> ChaCha8Rng {
    spn_core::rng::stream(seed, 0)
}

/// Normalised exponentials, with an occasional exact zero.
pub fn random_pmf<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    let mut p: Vec<f64> = (0..d).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    if d > 1 && rng.random_bool(0.2) {
        let i = rng.random_range(0..d);
        p[i] = 0.0;
    }
    let s: f64 = p.iter().sum();
    if s == 0.0 {
        p[0] = 1.0;
        return p;
    }
    p.iter().map(|v| v / s).collect()
}

pub fn random_categorical<R: Rng>(rng: &mut R, support: usize, dims: usize) -> LeafDistribution {
    let probs = random_pmf(rng, support.pow(dims as u32));
    LeafDistribution::Categorical(Categorical::new(probs, dims).unwrap())
}

/// Random structure over dimensions `1..=n` with at most `max_depth` edges
/// from root to leaf. Leaves may cover several dimensions.
pub fn random_structure<R: Rng>(rng: &mut R, n: usize, max_depth: usize) -> SignatureNode {
    let mut next = 0;
    build(rng, (1..=n).collect(), n, max_depth, &mut next)
}

fn build<R: Rng>(rng: &mut R, dims: Vec<usize>, n: usize, depth: usize, next: &mut usize) -> SignatureNode {
    let stop = depth == 0 || (dims.len() == 1 && rng.random_bool(0.4));
    if stop {
        *next += 1;
        return SignatureNode::leaf(format!("f{next}"), Scope::new(dims, n).unwrap()).unwrap();
    }
    if dims.len() >= 2 && rng.random_bool(0.5) {
        let mut dims = dims;
        dims.shuffle(rng);
        let parts = rng.random_range(2..=dims.len().min(3));
        let mut cuts: Vec<usize> = (1..dims.len()).collect();
        cuts.shuffle(rng);
        let mut cuts: Vec<usize> = cuts[..parts - 1].to_vec();
        cuts.sort_unstable();
        cuts.push(dims.len());
        let mut start = 0;
        let children = cuts
            .iter()
            .map(|&end| {
                let part = dims[start..end].to_vec();
                start = end;
                build(rng, part, n, depth - 1, next)
            })
            .collect();
        SignatureNode::product(children).unwrap()
    } else {
        let k = rng.random_range(2..=3);
        let w = random_pmf(rng, k);
        let children = w.into_iter().map(|wi| (wi, build(rng, dims.clone(), n, depth - 1, next))).collect();
        SignatureNode::sum(children).unwrap()
    }
}

/// Random categorical parameters (support `s` everywhere) on `structure`.
pub fn random_parameters<R: Rng>(rng: &mut R, structure: &SignatureNode, support: usize) -> SpnModel {
    let leaves: Vec<LeafDistribution> =
        structure.leaves().iter().map(|l| random_categorical(rng, support, l.scope().len())).collect();
    let weights: Vec<Vec<f64>> =
        structure.sum_nodes().iter().map(|s| random_pmf(rng, s.children().len())).collect();
    SpnModel::from_leaves(structure.clone(), leaves).unwrap().with_weights(&weights).unwrap()
}

pub fn reference_structure() -> SignatureNode {
    parse_signature(REFERENCE, 2).unwrap()
}

pub fn reference_model() -> SpnModel {
    let leaves = [[0.2, 0.5, 0.3], [0.6, 0.3, 0.1], [0.1, 0.1, 0.8], [0.3, 0.3, 0.4], [0.5, 0.25, 0.25]];
    SpnModel::from_leaves(
        reference_structure(),
        leaves.iter().map(|p| LeafDistribution::categorical(p.to_vec()).unwrap()).collect(),
    )
    .unwrap()
}
