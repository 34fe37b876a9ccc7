//! Tabular soft value iteration on finite MDPs: the desk-scale instrument
//! for checking that alternating soft evaluation and improvement converges.
//!
//! The operator iterated is
//!
//! ```text
//! Q(s,a) = r(s,a) + gamma * sum_s' P(s'|s,a) V(s')
//! V(s)   = alpha * log sum_a exp(Q(s,a) / alpha)
//! ```
//!
//! run to a sup-norm residual below the requested tolerance; the returned
//! policy is the Boltzmann distribution exp(Q/alpha) normalized per state.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const MDP_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct FiniteMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// reward[s][a]
    pub rewards: Vec<Vec<f64>>,
    /// transitions[s][a] = [(next_state, probability), ...]
    pub transitions: Vec<Vec<Vec<(usize, f64)>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TabularError {
    BadShape(String),
    BadProbability { state: usize, action: usize, total: f64 },
    BadDiscount(f64),
    BadTemperature(f64),
    NonConvergence { iterations: usize, residual: f64 },
    File(String),
}

impl fmt::Display for TabularError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TabularError::BadShape(d) => write!(f, "malformed MDP: {d}"),
            TabularError::BadProbability { state, action, total } => {
                write!(f, "transitions from s={state}, a={action} sum to {total}")
            }
            TabularError::BadDiscount(g) => write!(f, "discount {g} not in [0, 1)"),
            TabularError::BadTemperature(a) => write!(f, "temperature {a} must be positive"),
            TabularError::NonConvergence { iterations, residual } => {
                write!(f, "no convergence after {iterations} iterations (residual {residual})")
            }
            TabularError::File(d) => write!(f, "mdp file: {d}"),
        }
    }
}

impl std::error::Error for TabularError {}

impl FiniteMdp {
    pub fn validate(&self) -> Result<(), TabularError> {
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(TabularError::BadShape("empty state or action space".into()));
        }
        if self.rewards.len() != self.n_states || self.transitions.len() != self.n_states {
            return Err(TabularError::BadShape("rows != n_states".into()));
        }
        for s in 0..self.n_states {
            if self.rewards[s].len() != self.n_actions
                || self.transitions[s].len() != self.n_actions
            {
                return Err(TabularError::BadShape(format!("state {s}: cols != n_actions")));
            }
            for a in 0..self.n_actions {
                let mut total = 0.0;
                for &(sp, p) in &self.transitions[s][a] {
                    if sp >= self.n_states {
                        return Err(TabularError::BadShape(format!(
                            "state {s}, action {a}: next state {sp} out of range"
                        )));
                    }
                    if !(0.0..=1.0).contains(&p) {
                        return Err(TabularError::BadProbability { state: s, action: a, total: p });
                    }
                    total += p;
                }
                if (total - 1.0).abs() > 1e-9 {
                    return Err(TabularError::BadProbability { state: s, action: a, total });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SoftSolution {
    pub values: Vec<f64>,
    /// policy[s][a]: Boltzmann probabilities at the fixed point.
    pub policy: Vec<Vec<f64>>,
    pub iterations: usize,
    pub residual: f64,
    /// Sup-norm residual after each sweep, for contraction checks.
    pub residual_history: Vec<f64>,
}

pub const SOFT_ITERATION_TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 100_000;

/// Iterate the soft Bellman operator to its fixed point.
pub fn soft_value_iteration(
    mdp: &FiniteMdp,
    alpha: f64,
    gamma: f64,
) -> Result<SoftSolution, TabularError> {
    mdp.validate()?;
    if !(0.0..1.0).contains(&gamma) {
        return Err(TabularError::BadDiscount(gamma));
    }
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(TabularError::BadTemperature(alpha));
    }

    let mut values = vec![0.0; mdp.n_states];
    let mut q = vec![vec![0.0; mdp.n_actions]; mdp.n_states];
    let mut history = Vec::new();
    for iteration in 1..=MAX_ITERATIONS {
        let mut residual: f64 = 0.0;
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                let mut exp_next = 0.0;
                for &(sp, p) in &mdp.transitions[s][a] {
                    exp_next += p * values[sp];
                }
                q[s][a] = mdp.rewards[s][a] + gamma * exp_next;
            }
        }
        for s in 0..mdp.n_states {
            let new_v = soft_max(&q[s], alpha);
            residual = residual.max((new_v - values[s]).abs());
            values[s] = new_v;
        }
        history.push(residual);
        if residual < SOFT_ITERATION_TOLERANCE {
            let policy = boltzmann(&q, alpha);
            return Ok(SoftSolution {
                values,
                policy,
                iterations: iteration,
                residual,
                residual_history: history,
            });
        }
    }
    Err(TabularError::NonConvergence {
        iterations: MAX_ITERATIONS,
        residual: *history.last().unwrap(),
    })
}

/// alpha * log sum exp(q / alpha), computed against overflow.
fn soft_max(q: &[f64], alpha: f64) -> f64 {
    let m = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = q.iter().map(|&v| ((v - m) / alpha).exp()).sum();
    m + alpha * sum.ln()
}

fn boltzmann(q: &[Vec<f64>], alpha: f64) -> Vec<Vec<f64>> {
    q.iter()
        .map(|row| {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&v| ((v - m) / alpha).exp()).collect();
            let z: f64 = exps.iter().sum();
            exps.iter().map(|e| e / z).collect()
        })
        .collect()
}

// ---- MDP definition file ----

#[derive(Debug, Serialize, Deserialize)]
pub struct MdpFile {
    pub version: u32,
    pub gamma: f64,
    pub alpha: f64,
    pub n_states: usize,
    pub n_actions: usize,
    pub rewards: Vec<Vec<f64>>,
    /// [s][a] -> list of [next_state, probability] pairs
    pub transitions: Vec<Vec<Vec<(usize, f64)>>>,
}

pub fn load_mdp_file(path: &Path) -> Result<(FiniteMdp, f64, f64), TabularError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| TabularError::File(format!("read {}: {e}", path.display())))?;
    let file: MdpFile =
        serde_json::from_str(&text).map_err(|e| TabularError::File(e.to_string()))?;
    if file.version != MDP_SCHEMA_VERSION {
        return Err(TabularError::File(format!("unsupported version {}", file.version)));
    }
    let mdp = FiniteMdp {
        n_states: file.n_states,
        n_actions: file.n_actions,
        rewards: file.rewards,
        transitions: file.transitions,
    };
    mdp.validate()?;
    Ok((mdp, file.alpha, file.gamma))
}

/// Random well-formed MDP for property and acceptance suites.
pub fn random_mdp(
    max_states: usize,
    max_actions: usize,
    stream: &mut crate::rng::Stream,
) -> FiniteMdp {
    let n_states = 2 + stream.next_index(max_states.saturating_sub(1).max(1));
    let n_actions = 2 + stream.next_index(max_actions.saturating_sub(1).max(1));
    let rewards = (0..n_states)
        .map(|_| (0..n_actions).map(|_| stream.uniform(-1.0, 1.0)).collect())
        .collect();
    let transitions = (0..n_states)
        .map(|_| {
            (0..n_actions)
                .map(|_| {
                    // two-successor kernels keep things sparse but mixing
                    let s1 = stream.next_index(n_states);
                    let s2 = stream.next_index(n_states);
                    let p = 0.1 + 0.8 * stream.next_f64();
                    if s1 == s2 {
                        vec![(s1, 1.0)]
                    } else {
                        vec![(s1, p), (s2, 1.0 - p)]
                    }
                })
                .collect()
        })
        .collect();
    FiniteMdp { n_states, n_actions, rewards, transitions }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_state_mdp(r: f64) -> FiniteMdp {
        FiniteMdp {
            n_states: 1,
            n_actions: 1,
            rewards: vec![vec![r]],
            transitions: vec![vec![vec![(0, 1.0)]]],
        }
    }

    #[test]
    fn geometric_series_fixed_point() {
        // one state, one action, r=1, gamma=0.5: V = 1/(1-0.5) = 2, and a
        // single action contributes no entropy bonus.
        let sol = soft_value_iteration(&single_state_mdp(1.0), 0.7, 0.5).unwrap();
        assert!((sol.values[0] - 2.0).abs() < 1e-8, "{}", sol.values[0]);
        assert_eq!(sol.policy[0], vec![1.0]);
    }

    #[test]
    fn symmetric_bandit_soft_policy_is_uniform() {
        let mdp = FiniteMdp {
            n_states: 1,
            n_actions: 2,
            rewards: vec![vec![0.3, 0.3]],
            transitions: vec![vec![vec![(0, 1.0)], vec![(0, 1.0)]]],
        };
        let sol = soft_value_iteration(&mdp, 0.5, 0.5).unwrap();
        assert!((sol.policy[0][0] - 0.5).abs() < 1e-12);
        assert!((sol.policy[0][1] - 0.5).abs() < 1e-12);
    }

    /// Brute-force standard value iteration, the alpha -> 0 oracle.
    pub(crate) fn hard_value_iteration(mdp: &FiniteMdp, gamma: f64) -> Vec<f64> {
        let mut v = vec![0.0; mdp.n_states];
        loop {
            let mut next = vec![f64::NEG_INFINITY; mdp.n_states];
            for s in 0..mdp.n_states {
                for a in 0..mdp.n_actions {
                    let mut q = mdp.rewards[s][a];
                    for &(sp, p) in &mdp.transitions[s][a] {
                        q += gamma * p * v[sp];
                    }
                    next[s] = next[s].max(q);
                }
            }
            let res = v
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0_f64, f64::max);
            v = next;
            if res < 1e-12 {
                return v;
            }
        }
    }

    #[test]
    fn alpha_to_zero_approaches_hard_value_iteration() {
        let mdp = FiniteMdp {
            n_states: 2,
            n_actions: 2,
            rewards: vec![vec![1.0, 0.0], vec![-0.5, 0.8]],
            transitions: vec![
                vec![vec![(0, 0.9), (1, 0.1)], vec![(1, 1.0)]],
                vec![vec![(0, 1.0)], vec![(0, 0.4), (1, 0.6)]],
            ],
        };
        let gamma = 0.9;
        let hard = hard_value_iteration(&mdp, gamma);
        let soft = soft_value_iteration(&mdp, 1e-5, gamma).unwrap();
        for (h, s) in hard.iter().zip(&soft.values) {
            assert!((h - s).abs() < 1e-4, "hard {h} vs soft {s}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mdp = single_state_mdp(0.0);
        assert!(matches!(
            soft_value_iteration(&mdp, 0.5, 1.0),
            Err(TabularError::BadDiscount(_))
        ));
        assert!(matches!(
            soft_value_iteration(&mdp, 0.0, 0.9),
            Err(TabularError::BadTemperature(_))
        ));
        let broken = FiniteMdp {
            n_states: 1,
            n_actions: 1,
            rewards: vec![vec![0.0]],
            transitions: vec![vec![vec![(0, 0.5)]]],
        };
        assert!(matches!(
            soft_value_iteration(&broken, 0.5, 0.9),
            Err(TabularError::BadProbability { .. })
        ));
    }

    #[test]
    fn higher_temperature_adds_entropy_bonus() {
        let mdp = FiniteMdp {
            n_states: 1,
            n_actions: 2,
            rewards: vec![vec![0.0, 0.0]],
            transitions: vec![vec![vec![(0, 1.0)], vec![(0, 1.0)]]],
        };
        // V = alpha ln 2 / (1 - gamma) for two identical zero-reward arms
        let sol = soft_value_iteration(&mdp, 0.5, 0.5).unwrap();
        let expect = 0.5 * (2.0_f64).ln() / 0.5;
        assert!((sol.values[0] - expect).abs() < 1e-8);
    }
}
