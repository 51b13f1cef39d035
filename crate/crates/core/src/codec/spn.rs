//! Whole-network encoder and decoder.
//!
//! The message is laid out as follows: every leaf's sample points in
//! depth-first leaf order; every leaf's bit block in the same order; then
//! every sum node's weight block in pre-order. The layout is a pure function
//! of the structure, the leaf classes and the codec parameters, so the
//! decoder recomputes it instead of reading it from the wire.

use std::collections::BTreeSet;

use serde::Serialize;

use super::bits::{bit_width, BitString};
use super::leaf::{
    categorical_bit_budget, categorical_bit_count, leaf_decode_categorical, leaf_encode_categorical,
    GaussianCodecConfig,
};
use super::simplex::{levels_for_step, net_bits, quantize_to_levels, NetPoint};
use crate::error::{Result, SpnError};
use crate::model::io::{LeafClass, StructureSpec};
use crate::model::{Categorical, LabeledSample, LeafDistribution, SpnModel};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CodecVariant {
    /// Leaves at `ε/3n`, weights on a `2ε/3k` net; negligible leaves get filler.
    Strong,
    /// Leaves at `ε/2n`, weights on an `ε/k` net; negligible leaves rejected.
    Weak,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecParams {
    pub eps: f64,
    pub variant: CodecVariant,
    pub gaussian: GaussianCodecConfig,
}

impl CodecParams {
    pub fn strong(eps: f64) -> Self {
        CodecParams { eps, variant: CodecVariant::Strong, gaussian: GaussianCodecConfig::default() }
    }

    pub fn weak(eps: f64) -> Self {
        CodecParams { variant: CodecVariant::Weak, ..Self::strong(eps) }
    }

    pub fn leaf_accuracy(&self, n: usize) -> f64 {
        match self.variant {
            CodecVariant::Strong => self.eps / (3.0 * n as f64),
            CodecVariant::Weak => self.eps / (2.0 * n as f64),
        }
    }

    /// Weight net step; 1 when there are no weights.
    pub fn weight_step(&self, k: usize) -> f64 {
        if k == 0 {
            return 1.0;
        }
        match self.variant {
            CodecVariant::Strong => 2.0 * self.eps / (3.0 * k as f64),
            CodecVariant::Weak => self.eps / k as f64,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(SpnError::Config(format!("eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

fn outcomes(support: usize, dims: usize) -> usize {
    support.pow(dims as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LeafSlot {
    pub points: usize,
    pub bits: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SumSlot {
    pub k: usize,
    pub levels: u64,
    pub bits_per_weight: u32,
}

impl SumSlot {
    /// Only the first `k − 1` indices are sent.
    pub fn bits(&self) -> usize {
        net_bits(self.k, self.levels)
    }
}

/// Per-leaf and per-sum-node block sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MessageLayout {
    pub leaves: Vec<LeafSlot>,
    pub sums: Vec<SumSlot>,
}

impl MessageLayout {
    pub fn new(spec: &StructureSpec, params: &CodecParams) -> Result<Self> {
        params.check()?;
        let eps_leaf = params.leaf_accuracy(spec.n());
        let leaves = spec
            .leaf_classes
            .iter()
            .map(|c| match *c {
                LeafClass::Categorical { support, dims } => {
                    LeafSlot { points: 0, bits: categorical_bit_count(outcomes(support, dims), eps_leaf) }
                }
                LeafClass::Gaussian { dim } => LeafSlot {
                    points: params.gaussian.points(dim),
                    bits: params.gaussian.bit_count(dim, eps_leaf),
                },
            })
            .collect();
        let levels = levels_for_step(params.weight_step(spec.structure.weight_count()).min(1.0));
        let sums = spec
            .structure
            .sum_nodes()
            .iter()
            .map(|s| SumSlot { k: s.children().len(), levels, bits_per_weight: bit_width(levels) })
            .collect();
        Ok(MessageLayout { leaves, sums })
    }

    pub fn total_points(&self) -> usize {
        self.leaves.iter().map(|l| l.points).sum()
    }

    pub fn leaf_bits(&self) -> usize {
        self.leaves.iter().map(|l| l.bits).sum()
    }

    pub fn weight_bits(&self) -> usize {
        self.sums.iter().map(SumSlot::bits).sum()
    }

    pub fn total_bits(&self) -> usize {
        self.leaf_bits() + self.weight_bits()
    }

    /// Bit offset of sum node `j`'s block.
    pub fn weight_offset(&self, j: usize) -> usize {
        self.leaf_bits() + self.sums[..j].iter().map(SumSlot::bits).sum::<usize>()
    }
}

/// Sample and bit budgets for one structure at one accuracy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressionBudget {
    /// per-leaf sample-point budget (maximum over leaves)
    pub tau: usize,
    /// per-leaf bit budget (maximum over leaves)
    pub t: usize,
    /// per-leaf encoder sample requirement (maximum over leaves)
    pub m: usize,
    pub eps_leaf: f64,
    pub eps_weight_step: f64,
    /// total samples the encoder asks for: `⌈48·m·e·ln(6e)/ε⌉`
    pub m0: usize,
    pub e: usize,
    pub k: usize,
    /// `Σ_j k_j·⌈log₂(L+1)⌉` over sum nodes
    pub weight_bits_budget: usize,
}

impl CompressionBudget {
    pub fn new(spec: &StructureSpec, params: &CodecParams) -> Result<Self> {
        let layout = MessageLayout::new(spec, params)?;
        let eps_leaf = params.leaf_accuracy(spec.n());
        let e = spec.leaf_classes.len();
        let k = spec.structure.weight_count();
        let per_leaf: Vec<(usize, usize, usize)> = spec
            .leaf_classes
            .iter()
            .map(|c| match *c {
                LeafClass::Categorical { support, dims } => {
                    (0, categorical_bit_budget(outcomes(support, dims), eps_leaf), 0)
                }
                LeafClass::Gaussian { dim } => (
                    params.gaussian.points(dim),
                    params.gaussian.bit_count(dim, eps_leaf),
                    params.gaussian.samples_needed(dim),
                ),
            })
            .collect();
        let tau = per_leaf.iter().map(|p| p.0).max().unwrap_or(0);
        let t = per_leaf.iter().map(|p| p.1).max().unwrap_or(0);
        let m = per_leaf.iter().map(|p| p.2).max().unwrap_or(0);
        let ef = e as f64;
        let m0 = (48.0 * m as f64 * ef * (6.0 * ef).ln() / params.eps - 1e-9).ceil().max(0.0) as usize;
        let weight_bits_budget = layout.sums.iter().map(|s| s.k * s.bits_per_weight as usize).sum();
        Ok(CompressionBudget {
            tau,
            t,
            m,
            eps_leaf,
            eps_weight_step: params.weight_step(k),
            m0,
            e,
            k,
            weight_bits_budget,
        })
    }

    pub fn point_budget(&self) -> usize {
        self.e * self.tau
    }

    /// `e·t + Σ_j k_j·⌈log₂(L+1)⌉`.
    pub fn bit_budget(&self) -> usize {
        self.e * self.t + self.weight_bits_budget
    }

    /// `e·t + k·⌈log₂(1/step)⌉`, the weight term written without the `+1`
    /// grid-point convention.
    pub fn nominal_bit_budget(&self) -> usize {
        let w = if self.k == 0 { 0 } else { (1.0 / self.eps_weight_step - 1e-9).log2().ceil().max(0.0) as usize };
        self.e * self.t + self.k * w
    }

    /// Samples each leaf should receive for the allocation argument:
    /// `m·ln(6e)`.
    pub fn per_leaf_target(&self) -> f64 {
        self.m as f64 * (6.0 * self.e as f64).ln()
    }
}

/// Sample points followed by a bit payload; see the module docs for layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedMessage {
    pub n: usize,
    pub points: Vec<Vec<f64>>,
    pub bits: BitString,
}

/// Encodes `model` from labelled samples. The encoder sees the true model;
/// samples are used only for Gaussian leaves.
pub fn spn_encode(model: &SpnModel, samples: &[LabeledSample], params: &CodecParams) -> Result<CompressedMessage> {
    let spec = StructureSpec::of_model(model);
    let layout = MessageLayout::new(&spec, params)?;
    let budget = CompressionBudget::new(&spec, params)?;
    if samples.len() < budget.m0 {
        return Err(SpnError::InsufficientSamples { needed: budget.m0, have: samples.len() });
    }
    let n = model.n();
    if let Some(bad) = samples.iter().find(|s| s.point.len() != n) {
        return Err(SpnError::Dimension { expected: n, got: bad.point.len() });
    }
    let negligible = model.negligible_leaves(params.eps);
    if params.variant == CodecVariant::Weak && !negligible.is_empty() {
        return Err(SpnError::Config(format!(
            "the weak variant requires no negligible leaves, found {:?}",
            negligible
        )));
    }
    let filler = filler_points(samples, budget.tau, n);
    let scopes = model.leaf_scopes();

    let blocks = par::map_indexed(model.leaf_count(), |i| -> Result<(Vec<Vec<f64>>, BitString)> {
        let slot = layout.leaves[i];
        if negligible.contains(&i) {
            return Ok((filler[..slot.points].to_vec(), BitString::zeros(slot.bits)));
        }
        match &model.leaves()[i] {
            LeafDistribution::Categorical(c) => Ok((Vec::new(), leaf_encode_categorical(c.probs(), budget.eps_leaf)?)),
            LeafDistribution::Gaussian(g) => {
                let routed: Vec<&LabeledSample> =
                    samples.iter().filter(|s| s.leaf_path.binary_search(&i).is_ok()).collect();
                let projected: Vec<Vec<f64>> =
                    routed.iter().map(|s| scopes[i].iter().map(|&d| s.point[d - 1]).collect()).collect();
                let enc = params
                    .gaussian
                    .encode(&projected, g, budget.eps_leaf)
                    .map_err(|e| SpnError::LeafEncodeFailure { leaf: i, reason: e.to_string() })?;
                Ok((enc.chosen.iter().map(|&j| routed[j].point.clone()).collect(), enc.bits))
            }
        }
    });

    let mut points = Vec::with_capacity(layout.total_points());
    let mut bits = BitString::new();
    for block in blocks {
        let (p, b) = block?;
        points.extend(p);
        bits.extend(&b);
    }
    for (weights, slot) in model.sum_weights().iter().zip(&layout.sums) {
        quantize_to_levels(weights, slot.levels)?.write(&mut bits);
    }
    debug_assert_eq!(points.len(), layout.total_points());
    debug_assert_eq!(bits.len(), layout.total_bits());
    Ok(CompressedMessage { n, points, bits })
}

/// The `count` lexicographically smallest sample points, padded with zero
/// vectors if there are too few samples.
fn filler_points(samples: &[LabeledSample], count: usize, n: usize) -> Vec<Vec<f64>> {
    let mut sorted: Vec<&Vec<f64>> = samples.iter().map(|s| &s.point).collect();
    sorted.sort_by(|a, b| {
        a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out: Vec<Vec<f64>> = sorted.into_iter().take(count).cloned().collect();
    out.resize(count, vec![0.0; n]);
    out
}

/// Rebuilds a model with the given structure and leaf classes from a message.
pub fn spn_decode(spec: &StructureSpec, message: &CompressedMessage, params: &CodecParams) -> Result<SpnModel> {
    let layout = MessageLayout::new(spec, params)?;
    let n = spec.n();
    if message.n != n {
        return Err(SpnError::Layout(format!("message is over {} dimensions, structure over {n}", message.n)));
    }
    if message.points.len() != layout.total_points() {
        return Err(SpnError::Layout(format!(
            "message carries {} points, layout needs {}",
            message.points.len(),
            layout.total_points()
        )));
    }
    if message.points.iter().any(|p| p.len() != n) {
        return Err(SpnError::Layout("point of the wrong dimension".into()));
    }
    if message.bits.len() < layout.total_bits() {
        return Err(SpnError::Bitstream(format!(
            "payload has {} bits, layout needs {}",
            message.bits.len(),
            layout.total_bits()
        )));
    }
    if message.bits.len() > layout.total_bits() {
        return Err(SpnError::Layout(format!(
            "payload has {} bits, layout needs {}",
            message.bits.len(),
            layout.total_bits()
        )));
    }

    let eps_leaf = params.leaf_accuracy(n);
    let scopes: Vec<Vec<usize>> = spec.structure.leaves().iter().map(|l| l.scope().dims().to_vec()).collect();
    let mut reader = message.bits.reader();
    let mut next_point = 0;
    let mut leaves = Vec::with_capacity(layout.leaves.len());
    for (i, class) in spec.leaf_classes.iter().enumerate() {
        let leaf = match *class {
            LeafClass::Categorical { support, dims } => {
                let probs = leaf_decode_categorical(&mut reader, outcomes(support, dims), eps_leaf)?;
                LeafDistribution::Categorical(Categorical::new(probs, dims)?)
            }
            LeafClass::Gaussian { dim } => {
                let count = layout.leaves[i].points;
                let pts: Vec<Vec<f64>> = message.points[next_point..next_point + count]
                    .iter()
                    .map(|p| scopes[i].iter().map(|&d| p[d - 1]).collect())
                    .collect();
                next_point += count;
                LeafDistribution::Gaussian(params.gaussian.decode(&pts, &mut reader, dim, eps_leaf)?)
            }
        };
        leaves.push(leaf);
    }
    let mut weights = Vec::with_capacity(layout.sums.len());
    for slot in &layout.sums {
        let p = NetPoint::read(&mut reader, slot.k, slot.levels)?
            .ok_or_else(|| SpnError::Bitstream("weight block is not a net point".into()))?;
        weights.push(p.values());
    }
    let symbols: Vec<String> =
        spec.structure.leaves().iter().map(|l| l.symbol().unwrap_or_default().to_string()).collect();
    let structure = spec.structure.with_parameters(&symbols, &weights)?;
    SpnModel::from_leaves(structure, leaves)
}

/// Leaves that received fewer than `target` routed samples.
pub fn underfilled_leaves(e: usize, samples: &[LabeledSample], target: f64) -> BTreeSet<usize> {
    let mut counts = vec![0usize; e];
    for s in samples {
        for &i in &s.leaf_path {
            counts[i] += 1;
        }
    }
    (0..e).filter(|&i| (counts[i] as f64) < target).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{similarity, subtree_bounds, tv_exact};
    use crate::signature::parse_signature;

    const REFERENCE: &str = "((0.7(((0.4(f1,{1})+0.6(f2,{1})))x(f3,{2}))+0.3((f4,{1})x(f5,{2}))),{1,2})";

    fn reference() -> SpnModel {
        let leaves = [[0.2, 0.5, 0.3], [0.6, 0.3, 0.1], [0.1, 0.1, 0.8], [0.3, 0.3, 0.4], [0.5, 0.25, 0.25]];
        SpnModel::from_leaves(
            parse_signature(REFERENCE, 2).unwrap(),
            leaves.iter().map(|p| LeafDistribution::categorical(p.to_vec()).unwrap()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn reference_weight_budget() {
        let spec = StructureSpec::of_model(&reference());
        let params = CodecParams::strong(0.3);
        let layout = MessageLayout::new(&spec, &params).unwrap();
        assert!(layout.sums.iter().all(|s| s.levels == 20 && s.bits_per_weight == 5));
        assert_eq!(layout.weight_bits(), 10);
        let budget = CompressionBudget::new(&spec, &params).unwrap();
        assert_eq!(budget.weight_bits_budget, 20);
        assert_eq!(budget.m0, 0);
        assert_eq!(budget.tau, 0);
        // leaves at 0.05 accuracy over 3 outcomes: 60 levels, 6 bits each
        assert_eq!(budget.t, 18);
        assert_eq!(layout.leaf_bits(), 5 * 12);
        assert!(layout.total_bits() <= budget.bit_budget());
        assert!(layout.total_bits() <= budget.nominal_bit_budget());
    }

    #[test]
    fn round_trip_within_eps() {
        let model = reference();
        let params = CodecParams::strong(0.3);
        let msg = spn_encode(&model, &[], &params).unwrap();
        assert!(msg.points.is_empty());
        let spec = StructureSpec::of_model(&model);
        let decoded = spn_decode(&spec, &msg, &params).unwrap();
        let tv = tv_exact(&model, &decoded).unwrap();
        assert!(tv <= 0.3, "tv {tv}");
        let report = similarity(&model, &decoded);
        assert!(report.eps <= 0.05 + 1e-12);
        assert!(report.alpha <= 2.0 * 0.3 / 12.0 + 1e-12);
        assert_eq!(spn_decode(&spec, &msg, &params).unwrap(), decoded);
        for b in subtree_bounds(&model, &decoded, 0.3, &BTreeSet::new()).unwrap() {
            assert!(b.l1 <= b.bound + 1e-12);
        }
    }

    #[test]
    fn single_leaf_reduces_to_leaf_codec() {
        let s = parse_signature("(f1,{1})", 1).unwrap();
        let m = SpnModel::from_leaves(s, vec![LeafDistribution::categorical(vec![0.3, 0.7]).unwrap()]).unwrap();
        let params = CodecParams::strong(0.5);
        let msg = spn_encode(&m, &[], &params).unwrap();
        assert_eq!(msg.points.len(), 0);
        assert_eq!(msg.bits, leaf_encode_categorical(&[0.3, 0.7], 0.5 / 3.0).unwrap());
        let d = spn_decode(&StructureSpec::of_model(&m), &msg, &params).unwrap();
        assert!(tv_exact(&m, &d).unwrap() <= 0.5);
    }

    #[test]
    fn tampering_a_weight_bit_touches_one_sum_node() {
        let model = reference();
        let params = CodecParams::strong(0.3);
        let spec = StructureSpec::of_model(&model);
        let layout = MessageLayout::new(&spec, &params).unwrap();
        let msg = spn_encode(&model, &[], &params).unwrap();
        let base = spn_decode(&spec, &msg, &params).unwrap();
        for j in 0..layout.sums.len() {
            let mut t = msg.clone();
            // lowest bit of the first index in block j
            t.bits.flip(layout.weight_offset(j) + layout.sums[j].bits_per_weight as usize - 1);
            let d = spn_decode(&spec, &t, &params).unwrap();
            assert_eq!(d.leaves(), base.leaves());
            let (wa, wb) = (base.sum_weights(), d.sum_weights());
            let changed: Vec<usize> = (0..wa.len()).filter(|&i| wa[i] != wb[i]).collect();
            assert_eq!(changed, vec![j]);
        }
    }

    #[test]
    fn layout_errors() {
        let model = reference();
        let params = CodecParams::strong(0.3);
        let spec = StructureSpec::of_model(&model);
        let mut msg = spn_encode(&model, &[], &params).unwrap();
        let mut short = BitString::new();
        for i in 0..msg.bits.len() - 1 {
            short.push(msg.bits.get(i));
        }
        let truncated = CompressedMessage { bits: short, ..msg.clone() };
        assert!(matches!(spn_decode(&spec, &truncated, &params), Err(SpnError::Bitstream(_))));
        msg.points.push(vec![0.0, 0.0]);
        assert!(matches!(spn_decode(&spec, &msg, &params), Err(SpnError::Layout(_))));
    }

    #[test]
    fn negligible_leaf_gets_filler() {
        let s = parse_signature("((0.9999(f1,{1})+0.0001(f2,{1})),{1})", 1).unwrap();
        let leaves = vec![
            LeafDistribution::categorical(vec![0.2, 0.8]).unwrap(),
            LeafDistribution::categorical(vec![0.9, 0.1]).unwrap(),
        ];
        let model = SpnModel::from_leaves(s, leaves).unwrap();
        let params = CodecParams::strong(0.3);
        assert_eq!(model.negligible_leaves(0.3), BTreeSet::from([1]));
        let msg = spn_encode(&model, &[], &params).unwrap();
        let spec = StructureSpec::of_model(&model);
        let decoded = spn_decode(&spec, &msg, &params).unwrap();
        // filler bits are zero: the leaf decodes to the last vertex
        if let LeafDistribution::Categorical(c) = &decoded.leaves()[1] {
            assert_eq!(c.probs(), &[0.0, 1.0]);
        }
        assert!(tv_exact(&model, &decoded).unwrap() <= 0.3);
        assert!(matches!(spn_encode(&model, &[], &CodecParams::weak(0.3)), Err(SpnError::Config(_))));
    }

    #[test]
    fn gaussian_model_round_trip() {
        let s = parse_signature("((0.6(g1,{1})+0.4(g2,{1})),{1})", 1).unwrap();
        let model = SpnModel::from_leaves(
            s,
            vec![
                LeafDistribution::gaussian(vec![-2.0], vec![1.0]).unwrap(),
                LeafDistribution::gaussian(vec![3.0], vec![0.25]).unwrap(),
            ],
        )
        .unwrap();
        let params = CodecParams::strong(0.3);
        let spec = StructureSpec::of_model(&model);
        let budget = CompressionBudget::new(&spec, &params).unwrap();
        assert_eq!(budget.m, 14);
        let samples = model.sample(3, budget.m0);
        assert!(matches!(
            spn_encode(&model, &samples[..10], &params),
            Err(SpnError::InsufficientSamples { .. })
        ));
        let msg = spn_encode(&model, &samples, &params).unwrap();
        assert_eq!(msg.points.len(), 4);
        assert!(msg.points.len() <= budget.point_budget());
        assert!(msg.bits.len() <= budget.bit_budget());
        let decoded = spn_decode(&spec, &msg, &params).unwrap();
        let r = similarity(&model, &decoded);
        assert!(r.eps < 0.05, "leaf eps {}", r.eps);
        assert_eq!(spn_decode(&spec, &msg, &params).unwrap(), decoded);
    }
}
