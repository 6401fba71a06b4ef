//! File-backed run configuration: flat TOML sections for the two backends,
//! the drift detector, the featurizer, and file paths. Unknown keys are
//! rejected, and credentials are only ever named by environment variable.

use anyhow::{bail, Context, Result};
use driftguard_core::gateway::{BackendDescriptor, BackendKind};
use driftguard_core::ocdd::OcddConfig;
use driftguard_core::ocsvm::{KernelConfig, KernelKind, OcsvmConfig};
use driftguard_core::FeaturizerConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Reserved for synthetic-stream generation in tests; live LLM calls
    /// are not seedable.
    #[serde(default)]
    pub seed: Option<u64>,
    pub llm1: BackendBlock,
    pub llm2: BackendBlock,
    #[serde(default)]
    pub ocdd: OcddBlock,
    #[serde(default)]
    pub featurizer: FeaturizerBlock,
    #[serde(default)]
    pub paths: PathsBlock,
}

fn default_parallelism() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendBlock {
    pub id: String,
    /// "http" or "mock".
    pub kind: String,
    #[serde(default)]
    pub endpoint: Option<String>,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default)]
    pub max_retries: u32,
    #[serde(default)]
    pub api_key_env: Option<String>,
}

fn default_max_tokens() -> u32 {
    512
}

fn default_timeout_secs() -> f64 {
    30.0
}

impl BackendBlock {
    pub fn kind(&self) -> Result<BackendKind> {
        match self.kind.as_str() {
            "http" => Ok(BackendKind::Http),
            "mock" => Ok(BackendKind::Mock),
            other => bail!("backend {}: unknown kind {other:?} (use http or mock)", self.id),
        }
    }

    pub fn descriptor(&self) -> Result<BackendDescriptor> {
        let descriptor = BackendDescriptor {
            id: self.id.clone(),
            kind: self.kind()?,
            endpoint: self.endpoint.clone(),
            model_name: self.model.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            timeout_secs: self.timeout_secs,
            max_retries: self.max_retries,
            api_key_env: self.api_key_env.clone(),
        };
        descriptor.validate()?;
        Ok(descriptor)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcddBlock {
    #[serde(default = "default_window_size")]
    pub window_size: usize,
    #[serde(default = "default_drift_threshold")]
    pub drift_threshold: f64,
    #[serde(default = "default_min_fill")]
    pub min_fill: usize,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_window_size() -> usize {
    25
}
fn default_drift_threshold() -> f64 {
    0.3
}
fn default_min_fill() -> usize {
    3
}
fn default_nu() -> f64 {
    0.1
}
fn default_gamma() -> f64 {
    1.0
}
fn default_tol() -> f64 {
    1e-6
}
fn default_max_iter() -> usize {
    10_000
}

impl Default for OcddBlock {
    fn default() -> Self {
        OcddBlock {
            window_size: default_window_size(),
            drift_threshold: default_drift_threshold(),
            min_fill: default_min_fill(),
            nu: default_nu(),
            gamma: default_gamma(),
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

impl OcddBlock {
    pub fn to_config(&self) -> Result<OcddConfig> {
        let config = OcddConfig {
            window_size: self.window_size,
            drift_threshold: self.drift_threshold,
            min_fill: self.min_fill,
            svm: OcsvmConfig {
                nu: self.nu,
                kernel: KernelConfig {
                    kind: KernelKind::Rbf,
                    gamma: self.gamma,
                },
                tol: self.tol,
                max_iter: self.max_iter,
            },
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturizerBlock {
    #[serde(default = "default_dim_log2")]
    pub dim_log2: u8,
    #[serde(default = "default_ngram_orders")]
    pub ngram_orders: Vec<u8>,
    #[serde(default = "default_lowercase")]
    pub lowercase: bool,
}

fn default_dim_log2() -> u8 {
    14
}
fn default_ngram_orders() -> Vec<u8> {
    vec![1, 2]
}
fn default_lowercase() -> bool {
    true
}

impl Default for FeaturizerBlock {
    fn default() -> Self {
        FeaturizerBlock {
            dim_log2: default_dim_log2(),
            ngram_orders: default_ngram_orders(),
            lowercase: default_lowercase(),
        }
    }
}

impl FeaturizerBlock {
    pub fn to_config(&self) -> Result<FeaturizerConfig> {
        Ok(FeaturizerConfig::new(
            self.dim_log2,
            self.ngram_orders.iter().copied(),
            self.lowercase,
        )?)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsBlock {
    #[serde(default)]
    pub review_library: Option<PathBuf>,
    #[serde(default)]
    pub conversation_library: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.parallelism == 0 {
            bail!("parallelism must be positive");
        }
        self.llm1.descriptor().context("validating [llm1]")?;
        self.llm2.descriptor().context("validating [llm2]")?;
        self.ocdd.to_config().context("validating [ocdd]")?;
        self.featurizer.to_config().context("validating [featurizer]")?;
        Ok(())
    }
}
