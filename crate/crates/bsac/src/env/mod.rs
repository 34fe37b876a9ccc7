//! Deterministic, seedable desk-scale control environments with fixed-step
//! semi-implicit Euler physics and needs probes. Constants are chosen for
//! well-conditioned dynamics, not physical realism; every formula is
//! documented on the environment that owns it.

mod hazard;
mod pendulum;
mod reacher;

pub use hazard::HazardPointMass;
pub use pendulum::Pendulum;
pub use reacher::{scripted_controller, Reacher2};

use std::collections::HashMap;
use std::fmt;

#[derive(Debug, Clone)]
pub struct EnvSpec {
    pub name: &'static str,
    pub obs_dim: usize,
    pub action_dim: usize,
    /// Per-dimension (low, high) action bounds.
    pub bounds: Vec<(f64, f64)>,
    /// Integration step in seconds.
    pub dt: f64,
    pub max_steps: usize,
    /// Probe ids this environment reports each step, with descriptions.
    pub probes: Vec<(&'static str, &'static str)>,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub probes: HashMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvError {
    NanAction,
    ActionWidth { expected: usize, got: usize },
    UnknownEnv(String),
}

impl fmt::Display for EnvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvError::NanAction => write!(f, "action contains NaN"),
            EnvError::ActionWidth { expected, got } => {
                write!(f, "action width {got}, environment expects {expected}")
            }
            EnvError::UnknownEnv(name) => write!(f, "unknown environment '{name}'"),
        }
    }
}

impl std::error::Error for EnvError {}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Deterministic initial state for a seed; zeroes the step counter.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    /// One integration step. Out-of-bounds actions are clamped and counted;
    /// NaN actions are a contract error.
    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError>;

    /// How many action components have been clamped so far.
    fn clamp_warnings(&self) -> u64;
}

/// Environments selectable by name in the experiment config.
pub fn make(name: &str) -> Result<Box<dyn Environment>, EnvError> {
    match name {
        "pendulum" => Ok(Box::new(Pendulum::new())),
        "reacher2" => Ok(Box::new(Reacher2::new())),
        "hazard_pointmass" => Ok(Box::new(HazardPointMass::new())),
        other => Err(EnvError::UnknownEnv(other.to_string())),
    }
}

pub fn known_names() -> &'static [&'static str] {
    &["pendulum", "reacher2", "hazard_pointmass"]
}

/// Shared clamp helper: clamps into bounds and reports whether anything moved.
pub(crate) fn clamp_action(action: &[f64], bounds: &[(f64, f64)], out: &mut Vec<f64>) -> bool {
    out.clear();
    let mut clamped = false;
    for (a, (lo, hi)) in action.iter().zip(bounds) {
        let c = a.clamp(*lo, *hi);
        if c != *a {
            clamped = true;
        }
        out.push(c);
    }
    clamped
}

pub(crate) fn check_action(action: &[f64], spec: &EnvSpec) -> Result<(), EnvError> {
    if action.len() != spec.action_dim {
        return Err(EnvError::ActionWidth { expected: spec.action_dim, got: action.len() });
    }
    if action.iter().any(|a| a.is_nan()) {
        return Err(EnvError::NanAction);
    }
    Ok(())
}
