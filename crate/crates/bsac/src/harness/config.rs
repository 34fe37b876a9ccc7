//! Experiment configuration: JSON schema, validation, and the canonical
//! config hash that stamps every output file.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env;
use crate::learner::Hyperparams;
use crate::needs::NeedsConfig;
use crate::strategy_graph::{self, StrategyGraph};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sac,
    Bsac,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Algorithm::Sac => write!(f, "sac"),
            Algorithm::Bsac => write!(f, "bsac"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    pub algorithm: Algorithm,
    pub env: String,
    /// Strategy graph: either inline `{"version":1,"nodes":[...]}` or
    /// `{"file": "relative/or/absolute.json"}`. Ignored for sac.
    #[serde(default)]
    pub graph: Option<serde_json::Value>,
    #[serde(default)]
    pub hyperparams: Hyperparams,
    #[serde(default)]
    pub needs: Option<NeedsConfig>,
    pub seeds: Vec<u64>,
    pub total_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    #[serde(default)]
    pub out_dir: Option<String>,
}

fn default_version() -> u32 {
    CONFIG_SCHEMA_VERSION
}

/// A validated experiment: graph resolved and inlined, dims checked, hash
/// computed over the resolved content.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub config: ExperimentConfig,
    pub graph: StrategyGraph,
    pub hash: String,
    pub out_dir: PathBuf,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let config: ExperimentConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(config)
}

/// Validate a config and pin everything the run needs. `base_dir` anchors
/// relative graph-file references (usually the config file's directory).
pub fn resolve(
    mut config: ExperimentConfig,
    base_dir: &Path,
    seeds_override: Option<Vec<u64>>,
    out_override: Option<PathBuf>,
) -> Result<ResolvedExperiment> {
    if config.version != CONFIG_SCHEMA_VERSION {
        bail!("unsupported config version {}", config.version);
    }
    if let Some(seeds) = seeds_override {
        config.seeds = seeds;
    }
    if config.seeds.is_empty() {
        bail!("no seeds given");
    }
    if config.total_steps == 0 || config.eval_interval == 0 || config.eval_episodes == 0 {
        bail!("total_steps, eval_interval and eval_episodes must be positive");
    }
    config.hyperparams.validate().map_err(|e| anyhow!("hyperparams: {e}"))?;

    let probe_env = env::make(&config.env).map_err(|e| anyhow!("{e}"))?;
    let spec = probe_env.spec().clone();

    let graph = match config.algorithm {
        Algorithm::Sac => {
            // sac ignores any configured graph: implicit single tactic
            StrategyGraph::single("policy", spec.action_dim)
        }
        Algorithm::Bsac => {
            let value = config
                .graph
                .as_ref()
                .ok_or_else(|| anyhow!("bsac requires a strategy graph"))?;
            let graph = if let Some(file) = value.get("file").and_then(|f| f.as_str()) {
                let path = base_dir.join(file);
                strategy_graph::load_file(&path).map_err(|e| anyhow!("{e}"))?
            } else {
                strategy_graph::from_json(value).map_err(|e| anyhow!("{e}"))?
            };
            if graph.total_action_dim() != spec.action_dim {
                bail!(
                    "graph action width {} does not match {} (action dim {})",
                    graph.total_action_dim(),
                    config.env,
                    spec.action_dim
                );
            }
            graph
        }
    };
    // inline the resolved graph so the hash covers its content
    config.graph = Some(strategy_graph::to_json(&graph));

    if let Some(needs) = &config.needs {
        needs.validate().map_err(|e| anyhow!("needs config: {e}"))?;
        for feature in &needs.features {
            if !spec.probes.iter().any(|(id, _)| *id == feature.probe_id) {
                bail!(
                    "needs feature '{}' wants probe '{}' which {} does not provide",
                    feature.id,
                    feature.probe_id,
                    config.env
                );
            }
        }
    }

    let hash = config_hash(&config)?;
    let out_dir = out_override
        .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{}_{}", config.env, config.algorithm)));
    Ok(ResolvedExperiment { config, graph, hash, out_dir })
}

/// SHA-256 over the canonical JSON form (sorted keys, graph inlined,
/// out_dir excluded), truncated to 16 hex chars.
pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    let mut value = serde_json::to_value(config)?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("out_dir");
    }
    let canonical = serde_json::to_string(&value)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
}
