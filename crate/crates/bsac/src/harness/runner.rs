//! Seeded multi-run training orchestration: the env/learner interleave,
//! periodic deterministic evaluation, metrics persistence, and final
//! checkpointing. Seeds run concurrently; each run is single-threaded and
//! owns its files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;

use crate::env::{self, Environment};
use crate::joint_policy::JointPolicy;
use crate::learner::{SoftLearner, StepMetrics, Transition};
use crate::needs::{evaluate_profile, shaped_reward};
use crate::numerics::{read_checkpoint, write_checkpoint, Tensor};
use crate::rng::{derive, domain, Stream};
use crate::strategy_graph;

use super::config::ResolvedExperiment;
use super::metrics::{metrics_file_name, read_hash, EvalRow, MetricsWriter};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub rows: Vec<EvalRow>,
    pub wall_clock_s: f64,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

pub fn checkpoint_file_name(seed: u64) -> String {
    format!("checkpoint_seed_{seed}.ckpt")
}

/// Run every configured seed, concurrently. Existing outputs written under
/// a different config hash refuse the run (mismatched resumption); outputs
/// from the same hash are overwritten fresh.
pub fn run_experiment(resolved: &ResolvedExperiment) -> Result<Vec<RunRecord>> {
    std::fs::create_dir_all(&resolved.out_dir)
        .with_context(|| format!("creating {}", resolved.out_dir.display()))?;
    for seed in &resolved.config.seeds {
        let existing = resolved.out_dir.join(metrics_file_name(*seed));
        if existing.exists() {
            let found = read_hash(&existing)?;
            if found != resolved.hash {
                bail!(
                    "{} was written by config {} but this config hashes to {}; \
                     refusing mismatched resumption",
                    existing.display(),
                    found,
                    resolved.hash
                );
            }
        }
    }

    let results: Vec<Result<RunRecord>> = std::thread::scope(|scope| {
        let handles: Vec<_> = resolved
            .config
            .seeds
            .iter()
            .map(|&seed| scope.spawn(move || run_single_seed(resolved, seed)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("seed thread panicked")).collect()
    });

    let mut records = Vec::with_capacity(results.len());
    for (seed, result) in resolved.config.seeds.iter().zip(results) {
        match result {
            Ok(r) => records.push(r),
            Err(e) => {
                // a failing seed aborts only that seed's run
                eprintln!("seed {seed} failed: {e:#}");
            }
        }
    }
    if records.is_empty() {
        bail!("every seed failed");
    }
    Ok(records)
}

/// One seeded training run. All stream derivations are fixed, documented
/// constants so the run replays byte-identically.
pub fn run_single_seed(resolved: &ResolvedExperiment, seed: u64) -> Result<RunRecord> {
    let config = &resolved.config;
    let hp = config.hyperparams.clone();
    let mut env = env::make(&config.env).map_err(|e| anyhow!("{e}"))?;
    let spec = env.spec().clone();
    let mut learner =
        SoftLearner::new(resolved.graph.clone(), spec.obs_dim, &spec.bounds, hp.clone(), seed)
            .map_err(|e| anyhow!("{e}"))?;

    let env_seed_root = derive(seed, domain::ENV);
    let mut action_stream = Stream::substream(seed, domain::ACTION_NOISE);
    let mut warmup_stream = Stream::substream(seed, domain::WARMUP_ACTIONS);
    let mut eval_stream = Stream::substream(seed, domain::EVAL_ENV);

    let mut writer = MetricsWriter::create(
        &resolved.out_dir,
        seed,
        &resolved.hash,
        resolved.graph.node_count(),
    )?;
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut latest: Option<StepMetrics> = None;

    let mut episode = 0u64;
    let mut state = env.reset(derive(env_seed_root, episode));
    for step in 1..=config.total_steps {
        let action: Vec<f64> = if step <= hp.warmup_steps as u64 {
            spec.bounds.iter().map(|(lo, hi)| warmup_stream.uniform(*lo, *hi)).collect()
        } else {
            learner
                .policy()
                .sample_joint(&state, &mut action_stream)
                .map_err(|e| anyhow!("{e}"))?
                .0
        };
        let sr = env.step(&action).map_err(|e| anyhow!("{e}"))?;
        let reward = match &config.needs {
            Some(needs) => {
                let profile =
                    evaluate_profile(needs, &sr.probes).map_err(|e| anyhow!("{e}"))?;
                shaped_reward(sr.reward, &profile, needs)
            }
            None => sr.reward,
        };
        learner.observe(Transition {
            state: std::mem::take(&mut state),
            action,
            reward,
            next_state: sr.observation.clone(),
            done: sr.done,
        });
        state = if sr.done {
            episode += 1;
            env.reset(derive(env_seed_root, episode))
        } else {
            sr.observation
        };

        if step % hp.update_interval as u64 == 0 {
            if let Some(m) = learner.train_step().map_err(|e| anyhow!("{e}"))? {
                latest = Some(m);
            }
        }

        if step % config.eval_interval == 0 {
            let summary = evaluate_policy(
                learner.policy(),
                &config.env,
                config.eval_episodes,
                &mut eval_stream,
            )?;
            let row = EvalRow {
                env_step: step,
                eval_return_mean: summary.mean,
                eval_return_std: summary.std,
                losses: latest.clone(),
                wall_clock_s: start.elapsed().as_secs_f64(),
            };
            writer.write_row(&row)?;
            rows.push(row);
        }
    }

    let checkpoint_path = resolved.out_dir.join(checkpoint_file_name(seed));
    let meta = json!({
        "format": "bsac-run",
        "config_hash": resolved.hash,
        "seed": seed,
        "algorithm": config.algorithm.to_string(),
        "env": config.env,
        "obs_dim": spec.obs_dim,
        "action_dim": spec.action_dim,
        "bounds": spec.bounds,
        "hidden": hp.hidden,
        "graph": strategy_graph::to_json(&resolved.graph),
    });
    write_checkpoint(&checkpoint_path, &learner.named_params(), &meta)
        .map_err(|e| anyhow!("{e}"))?;

    Ok(RunRecord {
        config_hash: resolved.hash.clone(),
        seed,
        rows,
        wall_clock_s: start.elapsed().as_secs_f64(),
        metrics_path: writer.path().to_path_buf(),
        checkpoint_path,
    })
}

/// Deterministic-policy rollouts; returns are raw (unshaped) environment
/// returns. Episode reset seeds come off the provided stream.
pub fn evaluate_policy(
    policy: &JointPolicy,
    env_name: &str,
    episodes: usize,
    eval_stream: &mut Stream,
) -> Result<EvalSummary> {
    let mut env = env::make(env_name).map_err(|e| anyhow!("{e}"))?;
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let reset_seed = eval_stream.next_u64();
        returns.push(rollout_deterministic(policy, env.as_mut(), reset_seed)?);
    }
    Ok(summarize(&returns))
}

pub fn rollout_deterministic(
    policy: &JointPolicy,
    env: &mut dyn Environment,
    reset_seed: u64,
) -> Result<f64> {
    let mut obs = env.reset(reset_seed);
    let mut total = 0.0;
    loop {
        let action = policy.deterministic_action(&obs).map_err(|e| anyhow!("{e}"))?;
        let sr = env.step(&action).map_err(|e| anyhow!("{e}"))?;
        total += sr.reward;
        if sr.done {
            return Ok(total);
        }
        obs = sr.observation;
    }
}

fn summarize(returns: &[f64]) -> EvalSummary {
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    EvalSummary {
        mean,
        std: var.sqrt(),
        min: returns.iter().copied().fold(f64::INFINITY, f64::min),
        max: returns.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Rebuild the policy stored in a checkpoint and evaluate it on `env_name`.
/// The checkpoint must match the environment's dimensions.
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    env_name: &str,
    episodes: usize,
    seed: u64,
) -> Result<EvalSummary> {
    let policy = load_policy(checkpoint, env_name)?;
    let mut eval_stream = Stream::new(seed);
    evaluate_policy(&policy, env_name, episodes, &mut eval_stream)
}

/// Reconstruct the joint policy from a run checkpoint, verifying it against
/// the named environment.
pub fn load_policy(checkpoint: &Path, env_name: &str) -> Result<JointPolicy> {
    let ck = read_checkpoint(checkpoint).map_err(|e| anyhow!("{e}"))?;
    let meta = &ck.meta;
    let env = env::make(env_name).map_err(|e| anyhow!("{e}"))?;
    let spec = env.spec();

    let obs_dim = meta["obs_dim"].as_u64().context("checkpoint missing obs_dim")? as usize;
    let action_dim =
        meta["action_dim"].as_u64().context("checkpoint missing action_dim")? as usize;
    if obs_dim != spec.obs_dim || action_dim != spec.action_dim {
        bail!(
            "checkpoint dims ({obs_dim} obs, {action_dim} act) do not match {env_name} \
             ({} obs, {} act)",
            spec.obs_dim,
            spec.action_dim
        );
    }
    let graph = strategy_graph::from_json(&meta["graph"]).map_err(|e| anyhow!("{e}"))?;
    let hidden: Vec<usize> = serde_json::from_value(meta["hidden"].clone())
        .context("checkpoint missing hidden sizes")?;
    let bounds: Vec<(f64, f64)> =
        serde_json::from_value(meta["bounds"].clone()).context("checkpoint missing bounds")?;

    let mut init = Stream::new(0);
    let mut policy = JointPolicy::new(graph, obs_dim, &bounds, &hidden, &mut init)
        .map_err(|e| anyhow!("{e}"))?;
    let lookup = |name: &str| -> Option<Tensor> {
        ck.params.iter().find(|(n, _)| n == name).map(|(_, t)| t.clone())
    };
    policy.load_named_params("policy", &lookup).map_err(|e| anyhow!("{e}"))?;
    Ok(policy)
}
