//! JSON model files.
//!
//! ```json
//! {
//!   "signature": "((0.5(a,{1})+0.5(b,{1})),{1})",
//!   "n": 1,
//!   "leaves": {
//!     "a": {"type": "categorical", "params": {"probs": [0.2, 0.8]}},
//!     "b": {"type": "gaussian", "params": {"mean": [0.0], "covariance": [1.0]}}
//!   }
//! }
//! ```
//!
//! A structure file has the same shape with `params` replaced by the leaf
//! class: `{"type": "categorical", "support": 3}` or `{"type": "gaussian"}`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Categorical, LeafDistribution, LeafKind, SpnModel};
use crate::error::{Result, SpnError};
use crate::signature::{parse_signature, render_signature, SignatureNode};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "lowercase")]
pub enum LeafParams {
    Categorical { probs: Vec<f64> },
    Gaussian { mean: Vec<f64>, covariance: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub signature: String,
    pub n: usize,
    pub leaves: BTreeMap<String, LeafParams>,
}

impl ModelFile {
    pub fn from_model(model: &SpnModel) -> Self {
        let leaves = model
            .symbols()
            .iter()
            .zip(model.leaves())
            .map(|(s, l)| {
                let p = match l {
                    LeafDistribution::Categorical(c) => LeafParams::Categorical { probs: c.probs().to_vec() },
                    LeafDistribution::Gaussian(g) => LeafParams::Gaussian {
                        mean: g.mean().iter().copied().collect(),
                        covariance: g.cov_row_major(),
                    },
                };
                (s.clone(), p)
            })
            .collect();
        ModelFile { signature: render_signature(model.structure()), n: model.n(), leaves }
    }

    pub fn into_model(self) -> Result<SpnModel> {
        let structure = parse_signature(&self.signature, self.n)?;
        let scopes: BTreeMap<String, usize> = structure
            .leaves()
            .iter()
            .map(|l| (l.symbol().unwrap_or_default().to_string(), l.scope().len()))
            .collect();
        let bindings = self
            .leaves
            .into_iter()
            .map(|(sym, p)| {
                let leaf = match p {
                    LeafParams::Categorical { probs } => {
                        let dims = scopes.get(&sym).copied().unwrap_or(1);
                        LeafDistribution::Categorical(Categorical::new(probs, dims)?)
                    }
                    LeafParams::Gaussian { mean, covariance } => LeafDistribution::gaussian(mean, covariance)?,
                };
                Ok((sym, leaf))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        SpnModel::new(structure, bindings)
    }
}

/// Deterministic pretty JSON for a model.
pub fn model_to_json(model: &SpnModel) -> String {
    let mut s = serde_json::to_string_pretty(&ModelFile::from_model(model)).expect("model serializes");
    s.push('\n');
    s
}

pub fn model_from_json(text: &str) -> Result<SpnModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    file.into_model()
}

pub fn read_model(path: impl AsRef<Path>) -> Result<SpnModel> {
    model_from_json(&std::fs::read_to_string(path)?)
}

pub fn write_model(model: &SpnModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_json(model))?;
    Ok(())
}

/// The leaf class of one leaf: what a decoder must know beyond the signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LeafClass {
    Categorical { support: usize, dims: usize },
    Gaussian { dim: usize },
}

impl LeafClass {
    pub fn of(leaf: &LeafDistribution) -> Self {
        match leaf {
            LeafDistribution::Categorical(c) => LeafClass::Categorical { support: c.support(), dims: c.dims() },
            LeafDistribution::Gaussian(g) => LeafClass::Gaussian { dim: g.dim() },
        }
    }

    pub fn kind(&self) -> LeafKind {
        match self {
            LeafClass::Categorical { .. } => LeafKind::Categorical,
            LeafClass::Gaussian { .. } => LeafKind::Gaussian,
        }
    }
}

/// A signature plus the leaf class of every leaf: the class `Dist([s]_F)`
/// that decoders and learners operate on.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureSpec {
    pub structure: SignatureNode,
    pub leaf_classes: Vec<LeafClass>,
}

impl StructureSpec {
    pub fn of_model(model: &SpnModel) -> Self {
        StructureSpec {
            structure: model.structure().clone(),
            leaf_classes: model.leaves().iter().map(LeafClass::of).collect(),
        }
    }

    /// Every leaf categorical over its scope with the given per-dimension support.
    pub fn categorical(structure: SignatureNode, support: usize) -> Self {
        let leaf_classes = structure
            .leaves()
            .iter()
            .map(|l| LeafClass::Categorical { support, dims: l.scope().len() })
            .collect();
        StructureSpec { structure, leaf_classes }
    }

    pub fn gaussian(structure: SignatureNode) -> Self {
        let leaf_classes =
            structure.leaves().iter().map(|l| LeafClass::Gaussian { dim: l.scope().len() }).collect();
        StructureSpec { structure, leaf_classes }
    }

    pub fn kind(&self) -> LeafKind {
        self.leaf_classes[0].kind()
    }

    pub fn n(&self) -> usize {
        self.structure.n()
    }

    /// Reads a structure file or a full model file (parameters ignored).
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let signature = raw
            .get("signature")
            .and_then(|v| v.as_str())
            .ok_or_else(|| SpnError::Config("missing \"signature\"".into()))?;
        let n = raw
            .get("n")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| SpnError::Config("missing \"n\"".into()))? as usize;
        let structure = parse_signature(signature, n)?;
        let leaves = raw
            .get("leaves")
            .and_then(|v| v.as_object())
            .ok_or_else(|| SpnError::Config("missing \"leaves\"".into()))?;
        let leaf_classes = structure
            .leaves()
            .iter()
            .map(|l| {
                let sym = l.symbol().unwrap_or_default();
                let entry = leaves
                    .get(sym)
                    .ok_or_else(|| SpnError::Binding(format!("leaf {sym} is unbound")))?;
                let dims = l.scope().len();
                match entry.get("type").and_then(|t| t.as_str()) {
                    Some("categorical") => {
                        let support = if let Some(s) = entry.get("support").and_then(|s| s.as_u64()) {
                            s as usize
                        } else {
                            let probs = entry
                                .pointer("/params/probs")
                                .and_then(|p| p.as_array())
                                .ok_or_else(|| SpnError::Config(format!("leaf {sym}: need support or params")))?;
                            (probs.len() as f64).powf(1.0 / dims as f64).round() as usize
                        };
                        Ok(LeafClass::Categorical { support, dims })
                    }
                    Some("gaussian") => Ok(LeafClass::Gaussian { dim: dims }),
                    other => Err(SpnError::Config(format!("leaf {sym}: unknown type {other:?}"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if leaf_classes.iter().any(|c| c.kind() != leaf_classes[0].kind()) {
            return Err(SpnError::Binding("categorical and Gaussian leaves mixed in one model".into()));
        }
        Ok(StructureSpec { structure, leaf_classes })
    }

    pub fn to_json(&self) -> String {
        let leaves: serde_json::Map<String, serde_json::Value> = self
            .structure
            .leaves()
            .iter()
            .zip(&self.leaf_classes)
            .map(|(l, c)| {
                let v = match c {
                    LeafClass::Categorical { support, .. } => {
                        serde_json::json!({"type": "categorical", "support": support})
                    }
                    LeafClass::Gaussian { .. } => serde_json::json!({"type": "gaussian"}),
                };
                (l.symbol().unwrap_or_default().to_string(), v)
            })
            .collect();
        let v = serde_json::json!({
            "signature": render_signature(&self.structure),
            "n": self.n(),
            "leaves": leaves,
        });
        serde_json::to_string_pretty(&v).expect("structure serializes") + "\n"
    }
}
