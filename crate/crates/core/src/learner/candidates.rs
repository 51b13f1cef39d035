use super::select::PmfGroups;
use crate::codec::simplex::{enumerate_net, net_size, NetPoint};
use crate::codec::{CodecParams, MessageLayout};
use crate::error::{Result, SpnError};
use crate::metrics::joint_table;
use crate::model::io::{LeafClass, StructureSpec};
use crate::model::{Categorical, LeafDistribution, SpnModel};
use crate::par;

/// Every model the categorical codec can emit for one structure at one
/// accuracy, with each candidate's pmf over the joint grid.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub spec: StructureSpec,
    pub eps: f64,
    pub candidates: Vec<SpnModel>,
    /// Net-point index per leaf (depth-first) then per sum node (pre-order).
    pub provenance: Vec<Vec<usize>>,
    pub grid_shape: Vec<usize>,
    pub tables: Vec<Vec<f64>>,
    pub groups: PmfGroups,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Position of a model equal to `model`, if any.
    pub fn position(&self, model: &SpnModel) -> Option<usize> {
        self.candidates.iter().position(|c| c == model)
    }

    /// Flat grid index of a point, or a support error.
    pub fn grid_index(&self, point: &[f64]) -> Result<usize> {
        if point.len() != self.grid_shape.len() {
            return Err(SpnError::Dimension { expected: self.grid_shape.len(), got: point.len() });
        }
        let mut idx = 0;
        for (&x, &s) in point.iter().zip(&self.grid_shape) {
            if !(x >= 0.0 && x.fract() == 0.0 && x < s as f64) {
                return Err(SpnError::Support(format!("value {x} outside the grid {{0..{}}}", s - 1)));
            }
            idx = idx * s + x as usize;
        }
        Ok(idx)
    }
}

/// `(vector length, net levels)` per leaf and per sum node.
type Nets = (Vec<(usize, u64)>, Vec<(usize, u64)>);

fn nets(spec: &StructureSpec, eps: f64) -> Result<Nets> {
    if spec.leaf_classes.iter().any(|c| matches!(c, LeafClass::Gaussian { .. })) {
        return Err(SpnError::Config("candidate enumeration needs categorical leaves".into()));
    }
    let params = CodecParams::strong(eps);
    let layout = MessageLayout::new(spec, &params)?;
    let eps_leaf = params.leaf_accuracy(spec.n());
    let leaves = spec
        .leaf_classes
        .iter()
        .map(|c| match *c {
            LeafClass::Categorical { support, dims } => {
                let d = support.pow(dims as u32);
                (d, crate::codec::leaf::categorical_levels(d, eps_leaf))
            }
            LeafClass::Gaussian { .. } => unreachable!(),
        })
        .collect();
    let sums = layout.sums.iter().map(|s| (s.k, s.levels)).collect();
    Ok((leaves, sums))
}

/// Exact number of candidates, saturating at `u128::MAX`.
pub fn candidate_count(spec: &StructureSpec, eps: f64) -> Result<u128> {
    let (leaves, sums) = nets(spec, eps)?;
    Ok(leaves.iter().chain(&sums).fold(1u128, |acc, &(k, l)| acc.saturating_mul(net_size(k, l))))
}

/// Enumerates the Cartesian product of leaf nets and weight nets; the first
/// leaf is the most significant digit.
pub fn enumerate_candidates(spec: &StructureSpec, eps: f64, cap: u128) -> Result<CandidateSet> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(SpnError::Config(format!("eps must be positive, got {eps}")));
    }
    let count = candidate_count(spec, eps)?;
    if count > cap {
        return Err(SpnError::CapExceeded { count, cap });
    }
    let (leaf_nets, sum_nets) = nets(spec, eps)?;
    let leaf_options: Vec<Vec<LeafDistribution>> = leaf_nets
        .iter()
        .zip(&spec.leaf_classes)
        .map(|(&(d, l), class)| {
            let dims = match *class {
                LeafClass::Categorical { dims, .. } => dims,
                LeafClass::Gaussian { .. } => unreachable!(),
            };
            enumerate_net(d, l)
                .iter()
                .map(|p| Ok(LeafDistribution::Categorical(Categorical::new(p.values(), dims)?)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let weight_options: Vec<Vec<Vec<f64>>> =
        sum_nets.iter().map(|&(k, l)| enumerate_net(k, l).iter().map(NetPoint::values).collect()).collect();
    let radices: Vec<usize> =
        leaf_options.iter().map(Vec::len).chain(weight_options.iter().map(Vec::len)).collect();
    let symbols: Vec<String> =
        spec.structure.leaves().iter().map(|l| l.symbol().unwrap_or_default().to_string()).collect();
    let e = leaf_options.len();

    let built = par::map_indexed(count as usize, |flat| -> Result<(Vec<usize>, SpnModel, Vec<f64>)> {
        let mut digits = vec![0; radices.len()];
        let mut rest = flat;
        for (slot, &r) in digits.iter_mut().zip(&radices).rev() {
            *slot = rest % r;
            rest /= r;
        }
        let leaves = (0..e).map(|i| leaf_options[i][digits[i]].clone()).collect();
        let weights: Vec<Vec<f64>> =
            (0..weight_options.len()).map(|j| weight_options[j][digits[e + j]].clone()).collect();
        let structure = spec.structure.with_parameters(&symbols, &weights)?;
        let model = SpnModel::from_leaves(structure, leaves)?;
        let table = joint_table(&model)?;
        Ok((digits, model, table.probs))
    });

    let mut provenance = Vec::with_capacity(built.len());
    let mut candidates = Vec::with_capacity(built.len());
    let mut tables = Vec::with_capacity(built.len());
    for b in built {
        let (d, m, t) = b?;
        provenance.push(d);
        candidates.push(m);
        tables.push(t);
    }
    let grid_shape = candidates.first().and_then(SpnModel::grid_shape).unwrap_or_default();
    let groups = PmfGroups::new(&tables);
    Ok(CandidateSet { spec: spec.clone(), eps, candidates, provenance, grid_shape, tables, groups })
}
