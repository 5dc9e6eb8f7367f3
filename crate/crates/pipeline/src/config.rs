//! Pipeline configuration: a TOML file with sections, every key of which can
//! be overridden on the command line as `--set section.key=value`.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use acnn::nn::Architecture;

use crate::error::user;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub operators: OperatorConfig,
    #[serde(default)]
    pub descriptors: DescriptorConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub refinement: RefinementConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_cache_dir() -> PathBuf {
    "cache".into()
}

fn default_output_dir() -> PathBuf {
    "out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub reference: PathBuf,
    #[serde(default)]
    pub train: Vec<ShapeEntry>,
    #[serde(default)]
    pub test: Vec<ShapeEntry>,
    /// Self-symmetry of the reference, one index per line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetry: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeEntry {
    pub mesh: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorConfig {
    pub alpha: f64,
    pub orientations: usize,
    pub scales: Vec<f64>,
    pub eigen_count: usize,
    pub dense_limit: usize,
    pub residual_tolerance: f64,
    pub patch_eps: f64,
    pub umbilic_tolerance: f64,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            alpha: 100.0,
            orientations: 16,
            scales: acnn::spectral::default_scales(5),
            eigen_count: 300,
            dense_limit: 1200,
            residual_tolerance: 1e-6,
            patch_eps: acnn::patch::DEFAULT_SPARSIFY_EPS,
            umbilic_tolerance: acnn::mesh::UMBILIC_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorKind {
    Hks,
    Wks,
    /// Per-mesh files next to the mesh, e.g. externally computed SHOT.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescriptorConfig {
    pub kind: DescriptorKind,
    pub count: usize,
    /// Explicit HKS times; empty picks a grid from the reference spectrum.
    pub times: Vec<f64>,
    /// Extension replacing the mesh's for `kind = "file"`.
    pub extension: String,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self {
            kind: DescriptorKind::Hks,
            count: 16,
            times: Vec::new(),
            extension: "desc".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchNormMode {
    Training,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub architecture: String,
    pub batchnorm_statistics: BatchNormMode,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            architecture: "FC64+IC64+IC128+IC256+FC1024+FC512+Softmax".into(),
            batchnorm_statistics: BatchNormMode::Training,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub final_lr_fraction: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let adam = acnn::nn::AdamConfig::default();
        Self {
            steps: 1000,
            batch_size: 256,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            final_lr_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefinementConfig {
    pub threshold: f64,
    pub k: usize,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            threshold: acnn::correspondence::DEFAULT_CONFIDENCE_THRESHOLD,
            k: acnn::correspondence::DEFAULT_REFINEMENT_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub max_radius: f64,
    pub radii: usize,
    pub symmetric: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            max_radius: 0.25,
            radii: 26,
            symmetric: false,
        }
    }
}

impl PipelineConfig {
    /// Reads `path` and applies `key=value` overrides before validation.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| user(format!("cannot read config {}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, overrides, base_dir)
    }

    pub fn parse(text: &str, overrides: &[String], base_dir: PathBuf) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| user(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut config: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| user(format!("config: {e}")))?;
        config.base_dir = base_dir;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let op = &self.operators;
        if !(op.alpha > 0.0 && op.alpha.is_finite()) {
            return Err(user(format!("operators.alpha must be positive, got {}", op.alpha)));
        }
        if op.orientations == 0 {
            return Err(user("operators.orientations must be positive"));
        }
        if op.scales.is_empty() || op.scales.iter().any(|&t| !(t > 0.0)) || op.scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(user("operators.scales must be positive and strictly increasing"));
        }
        if op.eigen_count == 0 {
            return Err(user("operators.eigen_count must be positive"));
        }
        if !(0.0..=1e-3).contains(&op.patch_eps) {
            return Err(user("operators.patch_eps must lie in [0, 1e-3]"));
        }
        if self.descriptors.kind != DescriptorKind::File && self.descriptors.count == 0 && self.descriptors.times.is_empty() {
            return Err(user("descriptors.count must be positive"));
        }
        self.architecture()?;
        let t = &self.training;
        if t.batch_size == 0 {
            return Err(user("training.batch_size must be positive"));
        }
        if !(t.learning_rate > 0.0) {
            return Err(user("training.learning_rate must be positive"));
        }
        if !(t.final_lr_fraction > 0.0 && t.final_lr_fraction <= 1.0) {
            return Err(user("training.final_lr_fraction must lie in (0, 1]"));
        }
        if self.refinement.k == 0 {
            return Err(user("refinement.k must be positive"));
        }
        if !(self.evaluation.max_radius > 0.0) || self.evaluation.radii < 2 {
            return Err(user("evaluation needs a positive max_radius and at least two radii"));
        }
        if self.evaluation.symmetric && self.data.symmetry.is_none() {
            return Err(user("evaluation.symmetric needs data.symmetry"));
        }
        Ok(())
    }

    pub fn architecture(&self) -> Result<Architecture> {
        self.network
            .architecture
            .parse()
            .map_err(|e: acnn::Error| user(format!("network.architecture: {e}")))
    }

    pub fn adam(&self) -> acnn::nn::AdamConfig {
        acnn::nn::AdamConfig {
            learning_rate: self.training.learning_rate,
            beta1: self.training.beta1,
            beta2: self.training.beta2,
            epsilon: self.training.epsilon,
        }
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_path(&self, relative: impl AsRef<Path>) -> PathBuf {
        self.resolve(&self.output_dir).join(relative)
    }

    pub fn cache_path(&self) -> PathBuf {
        self.resolve(&self.cache_dir)
    }

    /// Hash of everything that can change a result; output and cache
    /// locations are excluded.
    pub fn hash(&self) -> [u8; 32] {
        let mut canonical = self.clone();
        canonical.cache_dir = PathBuf::new();
        canonical.output_dir = PathBuf::new();
        Sha256::digest(canonical.to_toml().as_bytes()).into()
    }
}

/// Sets `section.key = value` in `table`; the value is read as a TOML value
/// and falls back to a plain string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| user(format!("override `{assignment}` is not key=value")))?;
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(user(format!("override `{assignment}` has an empty key")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        node = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .with_context(|| format!("override `{assignment}`: `{part}` is not a section"))
            .map_err(|e| user(e.to_string()))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "seed = 3\n[data]\nreference = \"ref.off\"\n";

    #[test]
    fn defaults_follow_the_reference_settings() {
        let c = PipelineConfig::parse(MINIMAL, &[], PathBuf::new()).unwrap();
        assert_eq!(c.operators.orientations, 16);
        assert_eq!(c.operators.alpha, 100.0);
        assert_eq!(c.training.learning_rate, 1e-3);
        assert_eq!(c.training.beta1, 0.9);
        assert_eq!(c.training.beta2, 0.999);
        assert_eq!(c.refinement.k, 30);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = PipelineConfig::parse(
            MINIMAL,
            &["operators.scales=[0.01, 0.02]".into(), "data.symmetry=\"sym.map\"".into()],
            PathBuf::new(),
        )
        .unwrap();
        let again = PipelineConfig::parse(&c.to_toml(), &[], PathBuf::new()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.hash(), c.hash());
    }

    #[test]
    fn overrides_change_values_and_hash() {
        let base = PipelineConfig::parse(MINIMAL, &[], PathBuf::new()).unwrap();
        let c = PipelineConfig::parse(
            MINIMAL,
            &[
                "training.steps=42".into(),
                "network.architecture=IC16+FC64+Softmax".into(),
                "output_dir=elsewhere".into(),
            ],
            PathBuf::new(),
        )
        .unwrap();
        assert_eq!(c.training.steps, 42);
        assert_eq!(c.network.architecture, "IC16+FC64+Softmax");
        assert_ne!(c.hash(), base.hash());
        let moved = PipelineConfig::parse(MINIMAL, &["output_dir=elsewhere".into()], PathBuf::new()).unwrap();
        assert_eq!(moved.hash(), base.hash());
    }

    #[test]
    fn rejects_bad_configs() {
        for (text, overrides) in [
            ("[data]\nreference = \"a.off\"\n", vec![]),
            (MINIMAL, vec!["operators.alpha=-1"]),
            (MINIMAL, vec!["operators.scales=[0.1, 0.01]"]),
            (MINIMAL, vec!["network.architecture=FC0"]),
            (MINIMAL, vec!["training.unknown=1"]),
            (MINIMAL, vec!["evaluation.symmetric=true"]),
            (MINIMAL, vec!["seed"]),
        ] {
            let overrides: Vec<String> = overrides.into_iter().map(String::from).collect();
            assert!(PipelineConfig::parse(text, &overrides, PathBuf::new()).is_err(), "{text} {overrides:?}");
        }
    }
}
