//! Run configuration: one sectioned TOML document, resolved against CLI
//! flags and echoed into every report.

use std::path::{Path, PathBuf};

use codesign_core::codesign::CodesignConfig;
use codesign_core::ldm::{FitConfig, PrimitiveKind};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub space: PrimitiveKind,
    /// Side lengths (cubic) or radii (spherical); a default sweep when unset.
    pub params: Option<Vec<f64>>,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self { space: PrimitiveKind::Cubic, params: None }
    }
}

/// Eight evenly spaced primitive sizes.
pub fn default_sweep(kind: PrimitiveKind) -> Vec<f64> {
    let (lo, step) = match kind {
        PrimitiveKind::Cubic => (0.01, 0.005),
        PrimitiveKind::Spherical => (0.006, 0.003),
    };
    (0..8).map(|i| lo + step * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every random stream.
    pub seed: u64,
    /// Worker threads; host core count when unset.
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
    /// Design model (deformation space + latent PCA) used by latent designs.
    pub model: Option<PathBuf>,
    pub codesign: CodesignConfig,
    pub fit: FitConfig,
    pub baseline: BaselineSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: None,
            out_dir: PathBuf::from("out"),
            model: None,
            codesign: CodesignConfig::default(),
            fit: FitConfig::default(),
            baseline: BaselineSection::default(),
        }
    }
}

/// Dotted paths of keys in `given` that the schema `known` lacks. Subtrees
/// whose default is null (optional sections) are not inspected here.
fn unknown_keys(given: &serde_json::Value, known: &serde_json::Value, prefix: &str, out: &mut Vec<String>) {
    let (serde_json::Value::Object(g), serde_json::Value::Object(k)) = (given, known) else {
        return;
    };
    for (key, v) in g {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match k.get(key) {
            None => out.push(path),
            Some(kv) => unknown_keys(v, kv, &path, out),
        }
    }
}

impl RunConfig {
    /// Parses TOML text, listing every unknown key on failure.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let value: toml::Value = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        let given = serde_json::to_value(&value).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        let known = serde_json::to_value(Self::default()).expect("default config serializes");
        let mut unknown = Vec::new();
        unknown_keys(&given, &known, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(CliError::Usage(format!("unknown config keys: {}", unknown.join(", "))));
        }
        value.try_into().map_err(|e: toml::de::Error| CliError::Usage(format!("config: {}", e.message())))
    }

    /// Loads `path`; relative paths inside are taken relative to its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        if let Some(m) = &cfg.model {
            if m.is_relative() {
                cfg.model = Some(dir.join(m));
            }
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = dir.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    /// Copies the single seed into the sections and validates.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.codesign.seed = self.seed;
        if self.threads == Some(0) {
            return Err(CliError::Usage("threads must be at least 1".into()));
        }
        self.codesign.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if let Some(m) = &self.model {
            if !m.is_file() {
                return Err(CliError::Usage(format!("model file {} does not exist", m.display())));
            }
        }
        Ok(self)
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_else(|_| serde_json::to_string_pretty(self).expect("config serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_all_unknown_keys() {
        let e = RunConfig::parse("seed = 1\nbogus = 2\n[codesign]\nenvs = 2\nwhat = 1\n[codesign.plan]\nnope = 3\n")
            .unwrap_err();
        let msg = e.to_string();
        for k in ["bogus", "codesign.what", "codesign.plan.nope"] {
            assert!(msg.contains(k), "{msg}");
        }
    }

    #[test]
    fn sections_parse() {
        let c = RunConfig::parse("seed = 7\n[codesign]\ntask = \"push\"\nenvs = 2\n[baseline]\nspace = \"spherical\"\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.codesign.envs, 2);
        assert_eq!(c.baseline.space, PrimitiveKind::Spherical);
        let r = c.resolve().unwrap();
        assert_eq!(r.codesign.seed, 7);
        let back = RunConfig::parse(&r.to_toml()).unwrap();
        assert_eq!(back, r);
    }
}
