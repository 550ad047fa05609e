use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::LdmError;

/// Half-width of the latent search box, in whitened standard deviations.
pub const LATENT_BOX: f64 = 6.0;

/// Whitened latent coordinates of a design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DesignVector(pub Vec<f64>);

impl DesignVector {
    pub fn new(z: Vec<f64>) -> Result<Self, LdmError> {
        if let Some(i) = z.iter().position(|v| !v.is_finite() || v.abs() > LATENT_BOX) {
            return Err(LdmError::Bounds(format!(
                "latent coordinate {i} = {} outside [-{LATENT_BOX}, {LATENT_BOX}]",
                z[i]
            )));
        }
        Ok(Self(z))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Clamps into the search box (non-finite entries become 0).
    pub fn clamped(z: &[f64]) -> Self {
        Self(z.iter().map(|v| if v.is_finite() { v.clamp(-LATENT_BOX, LATENT_BOX) } else { 0.0 }).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::str::FromStr for DesignVector {
    type Err = LdmError;

    /// Comma-separated list, e.g. `0.5,-1,0`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let z = s
            .split(',')
            .map(|t| t.trim())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|e| LdmError::Bounds(format!("bad latent entry {t:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(z)
    }
}

/// PCA model of raw deformation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentModel {
    pub mean: Vec<f64>,
    /// Row-major, `latent_dim` rows of length `raw_dim`.
    pub components: Vec<Vec<f64>>,
    pub scales: Vec<f64>,
}

/// Mean-centered PCA by SVD. Components are the top right singular vectors,
/// sign-fixed so their largest-magnitude entry is positive; scales are the
/// per-component standard deviations.
pub fn build_latent(dataset: &[Vec<f64>], latent_dim: usize) -> Result<LatentModel, LdmError> {
    let n = dataset.len();
    if latent_dim == 0 || n < latent_dim {
        return Err(LdmError::DimensionMismatch { expected: latent_dim.max(1), got: n });
    }
    let m = dataset[0].len();
    if let Some(row) = dataset.iter().find(|r| r.len() != m) {
        return Err(LdmError::DimensionMismatch { expected: m, got: row.len() });
    }
    if latent_dim > m {
        return Err(LdmError::RankDeficient { rank: m.min(n), requested: latent_dim });
    }
    let mut mean = vec![0.0; m];
    for row in dataset {
        for (a, b) in mean.iter_mut().zip(row) {
            *a += b;
        }
    }
    mean.iter_mut().for_each(|a| *a /= n as f64);
    let x = DMatrix::from_fn(n, m, |i, j| dataset[i][j] - mean[j]);
    let svd = x.svd(false, true);
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let smax = order.first().map(|&i| svd.singular_values[i]).unwrap_or(0.0);
    let tol = smax * (n.max(m) as f64) * f64::EPSILON;
    let rank = order.iter().filter(|&&i| svd.singular_values[i] > tol && smax > 0.0).count();
    if latent_dim > rank {
        return Err(LdmError::RankDeficient { rank, requested: latent_dim });
    }
    let denom = ((n.max(2) - 1) as f64).sqrt();
    let mut components = Vec::with_capacity(latent_dim);
    let mut scales = Vec::with_capacity(latent_dim);
    for &k in order.iter().take(latent_dim) {
        let mut row: Vec<f64> = vt.row(k).iter().copied().collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.iter_mut().for_each(|v| *v /= norm);
        let lead = row.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        if lead < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(row);
        scales.push(svd.singular_values[k] / denom);
    }
    Ok(LatentModel { mean, components, scales })
}

impl LatentModel {
    pub fn latent_dim(&self) -> usize {
        self.components.len()
    }

    pub fn raw_dim(&self) -> usize {
        self.mean.len()
    }

    /// `mean + sum_j z_j scales_j components_j`.
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>, LdmError> {
        if z.len() != self.latent_dim() {
            return Err(LdmError::DimensionMismatch { expected: self.latent_dim(), got: z.len() });
        }
        let mut x = self.mean.clone();
        for ((zj, sj), cj) in z.iter().zip(&self.scales).zip(&self.components) {
            let a = zj * sj;
            for (xi, ci) in x.iter_mut().zip(cj) {
                *xi += a * ci;
            }
        }
        Ok(x)
    }

    pub fn encode(&self, raw: &[f64]) -> Result<Vec<f64>, LdmError> {
        if raw.len() != self.raw_dim() {
            return Err(LdmError::DimensionMismatch { expected: self.raw_dim(), got: raw.len() });
        }
        Ok(self
            .components
            .iter()
            .zip(&self.scales)
            .map(|(c, s)| c.iter().zip(raw).zip(&self.mean).map(|((ci, xi), mi)| ci * (xi - mi)).sum::<f64>() / s)
            .collect())
    }

    /// Restricts to the leading `dim` components.
    pub fn truncated(&self, dim: usize) -> Result<Self, LdmError> {
        if dim == 0 || dim > self.latent_dim() {
            return Err(LdmError::DimensionMismatch { expected: self.latent_dim(), got: dim });
        }
        Ok(Self {
            mean: self.mean.clone(),
            components: self.components[..dim].to_vec(),
            scales: self.scales[..dim].to_vec(),
        })
    }

    pub fn to_json(&self) -> Result<String, LdmError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, LdmError> {
        let model: Self = serde_json::from_str(text)?;
        let m = model.mean.len();
        if model.components.len() != model.scales.len() || model.components.iter().any(|c| c.len() != m) {
            return Err(LdmError::DimensionMismatch { expected: m, got: model.components.len() });
        }
        if model.scales.iter().any(|s| !(*s > 0.0)) {
            return Err(LdmError::InvalidField("latent scales must be positive".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LdmError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LdmError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane_data(n: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = [1.0, 2.0, 0.0, -1.0, 0.5];
        let b = [0.0, 1.0, 1.0, 1.0, -2.0];
        (0..n)
            .map(|_| {
                let (s, t): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-3.0..3.0));
                (0..5).map(|j| 0.3 + s * a[j] + t * b[j]).collect()
            })
            .collect()
    }

    #[test]
    fn identical_rows_are_rank_zero() {
        let d = vec![vec![1.0, 2.0]; 5];
        assert!(matches!(build_latent(&d, 1), Err(LdmError::RankDeficient { rank: 0, .. })));
    }

    #[test]
    fn plane_reconstructs_exactly() {
        let d = plane_data(40);
        let model = build_latent(&d, 2).unwrap();
        for row in &d {
            let r = model.decode(&model.encode(row).unwrap()).unwrap();
            for (a, b) in r.iter().zip(row) {
                assert!((a - b).abs() <= 1e-8);
            }
        }
        assert!(matches!(build_latent(&d, 3), Err(LdmError::RankDeficient { rank: 2, .. })));
        assert!(model.scales[0] > model.scales[1]);
    }

    #[test]
    fn orthonormal_and_whitened() {
        let d = plane_data(200);
        let model = build_latent(&d, 2).unwrap();
        for (i, a) in model.components.iter().enumerate() {
            for (j, b) in model.components.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() <= 1e-10);
            }
        }
        let zs: Vec<Vec<f64>> = d.iter().map(|r| model.encode(r).unwrap()).collect();
        for j in 0..2 {
            let mean = zs.iter().map(|z| z[j]).sum::<f64>() / zs.len() as f64;
            let var = zs.iter().map(|z| (z[j] - mean).powi(2)).sum::<f64>() / (zs.len() - 1) as f64;
            assert!((var.sqrt() - 1.0).abs() <= 0.05);
        }
        assert_eq!(model.decode(&[0.0, 0.0]).unwrap(), model.mean);
        let e = model.encode(&model.mean).unwrap();
        assert!(e.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn json_round_trip_and_parse() {
        let model = build_latent(&plane_data(20), 2).unwrap();
        let back = LatentModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
        let z: DesignVector = "0.5, -1,2".parse().unwrap();
        assert_eq!(z.0, vec![0.5, -1.0, 2.0]);
        assert!("7,0".parse::<DesignVector>().is_err());
        assert!(model.decode(&[1.0]).is_err());
    }
}
