//! Tree-structured sum-product networks as distributions, their signature
//! calculus, a sample-compression codec for SPNs with categorical and
//! Gaussian leaves, and a compression-based learner.

pub mod codec;
pub mod error;
pub mod learner;
pub mod metrics;
pub mod model;
pub mod par;
pub mod rng;
pub mod signature;

pub use error::{Result, SpnError};
pub use model::{LabeledSample, LeafDistribution, SpnModel};
pub use signature::{parse_signature, render_signature, same_structure, structure_stats, SignatureNode};
