use std::path::Path;

use serde::{Deserialize, Serialize};

use super::latent::{build_latent, LatentModel};
use super::space::LdmSpace;
use super::LdmError;
use crate::geom::TriMesh;

/// Raw deformation parameters of one fitted shape, together with the space
/// they live in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawParamsDoc {
    pub space: LdmSpace,
    pub params: Vec<f64>,
    #[serde(default)]
    pub initial_chamfer: Option<f64>,
    #[serde(default)]
    pub final_chamfer: Option<f64>,
}

impl RawParamsDoc {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, LdmError> {
        let doc: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if doc.params.len() != doc.space.raw_dim() {
            return Err(LdmError::DimensionMismatch { expected: doc.space.raw_dim(), got: doc.params.len() });
        }
        Ok(doc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LdmError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Deformation space plus PCA latent model: everything needed to turn a
/// latent vector into a finger mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignModel {
    pub space: LdmSpace,
    pub latent: LatentModel,
}

impl DesignModel {
    pub fn new(space: LdmSpace, latent: LatentModel) -> Result<Self, LdmError> {
        if latent.raw_dim() != space.raw_dim() {
            return Err(LdmError::DimensionMismatch { expected: space.raw_dim(), got: latent.raw_dim() });
        }
        Ok(Self { space, latent })
    }

    /// PCA over a set of parameter documents that must share one space.
    pub fn from_docs(docs: &[RawParamsDoc], latent_dim: usize) -> Result<Self, LdmError> {
        let first = docs.first().ok_or(LdmError::DimensionMismatch { expected: latent_dim.max(1), got: 0 })?;
        if docs.iter().any(|d| d.space != first.space) {
            return Err(LdmError::InvalidField("parameter files use different deformation spaces".into()));
        }
        let rows: Vec<Vec<f64>> = docs.iter().map(|d| d.params.clone()).collect();
        Self::new(first.space.clone(), build_latent(&rows, latent_dim)?)
    }

    pub fn latent_dim(&self) -> usize {
        self.latent.latent_dim()
    }

    pub fn decode_mesh(&self, z: &[f64]) -> Result<TriMesh, LdmError> {
        self.space.deform_mesh(&self.latent.decode(z)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LdmError> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LdmError> {
        let m: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        // Re-run the latent checks.
        let latent = LatentModel::from_json(&serde_json::to_string(&m.latent)?)?;
        Self::new(m.space, latent)
    }
}
