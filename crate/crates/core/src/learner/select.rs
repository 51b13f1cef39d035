use std::collections::HashMap;

use super::candidates::{enumerate_candidates, CandidateSet};
use crate::codec::{CodecParams, CompressionBudget};
use crate::error::{Result, SpnError};
use crate::model::io::StructureSpec;
use crate::model::SpnModel;
use crate::par;

#[derive(Debug, Clone)]
pub struct LearnResult {
    pub chosen_index: usize,
    pub chosen: SpnModel,
    /// Contests won by each candidate.
    pub empirical_scores: Vec<u64>,
    pub sample_count: usize,
    pub candidate_count: usize,
    pub eps_target: f64,
    pub delta_target: Option<f64>,
    pub theoretical_sample_size: Option<u64>,
}

impl LearnResult {
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "chosen_index": self.chosen_index,
            "wins": self.empirical_scores[self.chosen_index],
            "sample_count": self.sample_count,
            "candidate_count": self.candidate_count,
            "eps_target": self.eps_target,
            "delta_target": self.delta_target,
            "theoretical_sample_size": self.theoretical_sample_size,
        })
    }
}

/// Scheffé tournament. For each pair `i < j` the set `A = {x : fᵢ(x) > fⱼ(x)}`
/// is scored against the empirical measure; the closer candidate wins, the
/// lower index on ties. Most wins is chosen, lowest index on ties.
pub fn select_min_distance(set: &CandidateSet, sample: &[Vec<f64>]) -> Result<LearnResult> {
    if set.is_empty() {
        return Err(SpnError::EmptyCandidateSet);
    }
    if sample.is_empty() {
        return Err(SpnError::InsufficientSamples { needed: 1, have: 0 });
    }
    let g = set.tables[0].len();
    let mut empirical = vec![0.0; g];
    for p in sample {
        empirical[set.grid_index(p)?] += 1.0;
    }
    let m = sample.len() as f64;
    empirical.iter_mut().for_each(|v| *v /= m);

    let wins = tournament(&set.tables, &set.groups, &empirical);
    let c = set.len();
    let best = (0..c).fold(0, |b, i| if wins[i] > wins[b] { i } else { b });
    Ok(LearnResult {
        chosen_index: best,
        chosen: set.candidates[best].clone(),
        empirical_scores: wins,
        sample_count: sample.len(),
        candidate_count: c,
        eps_target: set.eps,
        delta_target: None,
        theoretical_sample_size: None,
    })
}

/// True when `j` wins its contest against `i` (with `i < j`).
fn contest(fi: &[f64], fj: &[f64], empirical: &[f64]) -> bool {
    let (mut pi, mut pj, mut pe) = (0.0, 0.0, 0.0);
    for x in 0..fi.len() {
        if fi[x] > fj[x] {
            pi += fi[x];
            pj += fj[x];
            pe += empirical[x];
        }
    }
    (pj - pe).abs() < (pi - pe).abs()
}

/// All-pairs tournament, `O(C²·G)`. Reference for [`tournament`].
pub fn tournament_all_pairs(tables: &[Vec<f64>], empirical: &[f64]) -> Vec<u64> {
    let c = tables.len();
    par::fold_vec(c, c, |i, acc| {
        for j in i + 1..c {
            if contest(&tables[i], &tables[j], empirical) {
                acc[j] += 1;
            } else {
                acc[i] += 1;
            }
        }
    })
}

/// Candidates partitioned by bitwise-equal pmf, groups in order of first
/// appearance, members ascending.
#[derive(Debug, Clone)]
pub struct PmfGroups {
    group_of: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl PmfGroups {
    pub fn new(tables: &[Vec<f64>]) -> Self {
        let mut group_of = Vec::with_capacity(tables.len());
        let mut members: Vec<Vec<usize>> = Vec::new();
        let mut ids: HashMap<Vec<u64>, usize> = HashMap::new();
        for (i, t) in tables.iter().enumerate() {
            let key: Vec<u64> = t.iter().map(|v| v.to_bits()).collect();
            let g = *ids.entry(key).or_insert_with(|| {
                members.push(Vec::new());
                members.len() - 1
            });
            members[g].push(i);
            group_of.push(g);
        }
        PmfGroups { group_of, members }
    }

    pub fn distinct(&self) -> usize {
        self.members.len()
    }
}

/// Same wins as [`tournament_all_pairs`], but contests are run once per
/// pair of distinct pmfs. Many parameter settings share a pmf, so this is
/// far cheaper. Bitwise-equal pmfs tie, and a tie goes to the lower index.
pub fn tournament(tables: &[Vec<f64>], groups: &PmfGroups, empirical: &[f64]) -> Vec<u64> {
    let PmfGroups { group_of, members } = groups;
    let reps: Vec<&[f64]> = members.iter().map(|m| tables[m[0]].as_slice()).collect();
    let sizes: Vec<u64> = members.iter().map(|m| m.len() as u64).collect();
    let u = reps.len();
    // lower_wins[a][b]: a member of `a` beats a higher-indexed member of `b`
    let lower_wins: Vec<Vec<bool>> =
        par::map_indexed(u, |a| (0..u).map(|b| a == b || !contest(reps[a], reps[b], empirical)).collect());
    // wins of a member of `a` = base[a] + Σ_b below_b·(upper_wins − lower_wins)
    // where below_b counts members of `b` with a smaller index; the
    // correction only matters for pairs whose outcome depends on order
    let base: Vec<u64> =
        (0..u).map(|a| (0..u).filter(|&b| b != a && lower_wins[a][b]).map(|b| sizes[b]).sum()).collect();
    let order_dependent: Vec<Vec<(usize, i64)>> = (0..u)
        .map(|a| {
            (0..u)
                .filter(|&b| b != a)
                .filter_map(|b| {
                    let d = i64::from(!lower_wins[b][a]) - i64::from(lower_wins[a][b]);
                    (d != 0).then_some((b, d))
                })
                .collect()
        })
        .collect();
    par::map_indexed(tables.len(), |i| {
        let a = group_of[i];
        let own = &members[a];
        let mut w = base[a] as i64 + (own.len() - 1 - own.partition_point(|&j| j < i)) as i64;
        for &(b, d) in &order_dependent[a] {
            w += d * members[b].partition_point(|&j| j < i) as i64;
        }
        w as u64
    })
}

/// `m(ε/6) + ⌈(t(ε/6) + τ(ε/6)) / ε²⌉` with the network codec's totals.
pub fn theoretical_sample_size(spec: &StructureSpec, eps: f64) -> Result<u64> {
    let b = CompressionBudget::new(spec, &CodecParams::strong(eps / 6.0))?;
    let extra = ((b.bit_budget() + b.point_budget()) as f64 / (eps * eps) - 1e-9).ceil() as u64;
    Ok(b.m0 as u64 + extra)
}

/// Enumerates at `ε/6` and runs the tournament on `sample`.
pub fn pac_learn(spec: &StructureSpec, sample: &[Vec<f64>], eps: f64, delta: f64, cap: u128) -> Result<LearnResult> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(SpnError::Config(format!("delta must lie in (0, 1), got {delta}")));
    }
    let set = enumerate_candidates(spec, eps / 6.0, cap)?;
    let theory = theoretical_sample_size(spec, eps)?;
    log::info!("sample size {} (theoretical {theory}), {} candidates", sample.len(), set.len());
    let mut r = select_min_distance(&set, sample)?;
    r.eps_target = eps;
    r.delta_target = Some(delta);
    r.theoretical_sample_size = Some(theory);
    Ok(r)
}
