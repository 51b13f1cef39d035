//! Sample-size sweeps: for each structure, snap a truth onto the candidate
//! grid, learn it from `m` samples over many seeded trials and record the
//! exact TV error.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::candidates::enumerate_candidates;
use super::select::select_min_distance;
use crate::codec::{spn_decode, spn_encode, CodecParams};
use crate::error::{Result, SpnError};
use crate::metrics::l1;
use crate::model::io::{ModelFile, StructureSpec};
use crate::{par, rng};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureEntry {
    pub id: String,
    /// Truth; snapped onto the candidate grid before use.
    pub model: ModelFile,
    /// Overrides the config-wide candidate grid accuracy.
    #[serde(default)]
    pub grid_eps: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub structures: Vec<StructureEntry>,
    pub eps_grid: Vec<f64>,
    pub m_grid: Vec<usize>,
    pub trials: usize,
    pub seed_base: u64,
    pub cap: u64,
    /// Candidate grid accuracy; defaults to the smallest `eps_grid` entry.
    #[serde(default)]
    pub grid_eps: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SpnError::Config(m.into()));
        if self.structures.is_empty() {
            return bad("no structures");
        }
        if self.eps_grid.is_empty() || self.eps_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return bad("eps_grid must be non-empty and positive");
        }
        if self.m_grid.is_empty() || self.m_grid.contains(&0) {
            return bad("m_grid must be non-empty and positive");
        }
        if self.trials == 0 {
            return bad("trials must be positive");
        }
        let mut ids: Vec<&str> = self.structures.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate structure id");
        }
        for s in &self.structures {
            if let Some(g) = s.grid_eps.or(self.grid_eps) {
                if !(g > 0.0 && g.is_finite()) {
                    return bad("grid_eps must be positive");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub structure_id: String,
    pub e: usize,
    pub k: usize,
    pub n: usize,
    pub depth: usize,
    pub eps: f64,
    pub m: usize,
    pub trial: usize,
    pub tv_error: f64,
    pub success: bool,
}

/// Runs every (structure, m, trial) job. Trial `t` of a structure uses the
/// same seed for every `m`, and sampling is prefix-stable, so samples are
/// nested across the `m` grid.
pub fn run_scaling(config: &ExperimentConfig) -> Result<Vec<ScalingRow>> {
    config.validate()?;
    let min_eps = config.eps_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let mut rows = Vec::new();
    for (si, entry) in config.structures.iter().enumerate() {
        let truth = entry.model.clone().into_model()?;
        let spec = StructureSpec::of_model(&truth);
        let grid_eps = entry.grid_eps.or(config.grid_eps).unwrap_or(min_eps);
        let set = enumerate_candidates(&spec, grid_eps, config.cap as u128)?;
        let params = CodecParams::strong(grid_eps);
        let snapped = spn_decode(&spec, &spn_encode(&truth, &[], &params)?, &params)?;
        let truth_index = set
            .position(&snapped)
            .ok_or_else(|| SpnError::Numerical("snapped truth is not a candidate".into()))?;
        let truth_table = &set.tables[truth_index];
        let tv: Vec<f64> = set.tables.iter().map(|t| 0.5 * l1(truth_table, t)).collect();
        let stats = crate::signature::structure_stats(truth.structure());
        log::info!("{}: {} candidates at grid accuracy {grid_eps}", entry.id, set.len());

        let structure_seed = rng::derive_seed(config.seed_base, si as u64);
        let jobs: Vec<(usize, usize)> =
            config.m_grid.iter().flat_map(|&m| (0..config.trials).map(move |t| (m, t))).collect();
        let errors = par::map_slice(&jobs, |&(m, t)| -> Result<f64> {
            let sample: Vec<Vec<f64>> = snapped
                .sample(rng::derive_seed(structure_seed, t as u64), m)
                .into_iter()
                .map(|s| s.point)
                .collect();
            Ok(tv[select_min_distance(&set, &sample)?.chosen_index])
        });
        for (&(m, trial), err) in jobs.iter().zip(errors) {
            let err = err?;
            for &eps in &config.eps_grid {
                rows.push(ScalingRow {
                    structure_id: entry.id.clone(),
                    e: stats.e,
                    k: stats.k,
                    n: stats.n,
                    depth: stats.depth,
                    eps,
                    m,
                    trial,
                    tv_error: err,
                    success: err <= eps,
                });
            }
        }
    }
    rows.sort_by(|a, b| {
        (&a.structure_id, a.m, a.trial)
            .cmp(&(&b.structure_id, b.m, b.trial))
            .then(a.eps.total_cmp(&b.eps))
    });
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[ScalingRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| SpnError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// `(m, median TV error)` for one structure, `m` ascending. Each trial is
/// counted once even when several eps values were recorded.
pub fn median_curve(rows: &[ScalingRow], structure_id: &str) -> Vec<(usize, f64)> {
    let mut by_m: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.structure_id == structure_id) {
        by_m.entry(r.m).or_default().insert(r.trial, r.tv_error);
    }
    by_m.into_iter()
        .map(|(m, trials)| {
            let mut v: Vec<f64> = trials.into_values().collect();
            v.sort_by(f64::total_cmp);
            let mid = v.len() / 2;
            let med = if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) };
            (m, med)
        })
        .collect()
}

/// Least-squares slope of `ln(error)` on `ln(m)`; `None` if any median is 0.
pub fn loglog_slope(curve: &[(usize, f64)]) -> Option<f64> {
    if curve.len() < 2 || curve.iter().any(|&(_, e)| e <= 0.0) {
        return None;
    }
    let pts: Vec<(f64, f64)> = curve.iter().map(|&(m, e)| ((m as f64).ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Smallest `m` at which the median curve reaches `target`, interpolating
/// linearly in `ln m` between grid points.
pub fn required_m(curve: &[(usize, f64)], target: f64) -> Option<f64> {
    let first = curve.first()?;
    if first.1 <= target {
        return Some(first.0 as f64);
    }
    curve.windows(2).find_map(|w| {
        let ((m0, e0), (m1, e1)) = (w[0], w[1]);
        (e1 <= target).then(|| {
            let f = (e0 - target) / (e0 - e1);
            ((m0 as f64).ln() + f * ((m1 as f64).ln() - (m0 as f64).ln())).exp()
        })
    })
}
