//! Learning by message enumeration: every message the categorical codec can
//! emit decodes to a candidate model, and a Scheffé tournament picks one.

mod candidates;
mod experiment;
mod select;

pub use candidates::{candidate_count, enumerate_candidates, CandidateSet};
pub use experiment::{
    loglog_slope, median_curve, required_m, run_scaling, write_csv, ExperimentConfig, ScalingRow,
    StructureEntry,
};
pub use select::{
    pac_learn, select_min_distance, theoretical_sample_size, tournament, tournament_all_pairs, LearnResult, PmfGroups,
};
