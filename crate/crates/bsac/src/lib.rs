//! Soft Actor-Critic and Bayesian Soft Actor-Critic on desk-scale,
//! fully deterministic control environments.
//!
//! The joint policy factorizes over a strategy graph of tactics: each
//! tactic's squashed-Gaussian sub-policy conditions on the observation and
//! its parents' sampled actions, and the joint log-probability is the exact
//! sum of per-tactic terms. Training follows the soft actor-critic scheme
//! (twin Q, explicit state value with a Polyak target) with the shared
//! entropy temperature split evenly across tactics. A needs-hierarchy
//! reward model, a tabular soft-iteration oracle, and a seeded experiment
//! harness round out the toolkit.

pub mod env;
pub mod harness;
pub mod joint_policy;
pub mod learner;
pub mod needs;
pub mod numerics;
pub mod rng;
pub mod strategy_graph;
