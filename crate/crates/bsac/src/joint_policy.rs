//! Squashed-Gaussian sub-policies bound to strategy-graph nodes, composed
//! into a factorized joint policy whose joint log-probability is the exact
//! sum of per-sub-policy terms.
//!
//! Each sub-policy sees the observation concatenated with its parents'
//! already-sampled (post-squash) actions, samples in topological order, and
//! carries its own tanh-rescale change-of-variables correction so the
//! chain-rule factorization holds exactly in log space.

use std::collections::HashMap;

use crate::numerics::{Mlp, MlpVars, NumericsError, Tape, Tensor, Var, LOG_STD_MAX, LOG_STD_MIN};
use crate::rng::Stream;
use crate::strategy_graph::{GraphError, StrategyGraph};

const LN_2PI: f64 = 1.8378770664093453;
const LN_2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyError {
    Numerics(NumericsError),
    Graph(GraphError),
    StateWidth { expected: usize, got: usize },
    ActionWidth { expected: usize, got: usize },
    /// Action component on or outside its bound: atanh is singular there.
    ActionOutOfBounds { node: String, dim: usize, value: f64 },
    NoiseWidth { node: String, expected: usize, got: usize },
}

impl std::fmt::Display for PolicyError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicyError::Numerics(e) => write!(f, "{e}"),
            PolicyError::Graph(e) => write!(f, "{e}"),
            PolicyError::StateWidth { expected, got } => {
                write!(f, "state width {got}, policy expects {expected}")
            }
            PolicyError::ActionWidth { expected, got } => {
                write!(f, "action width {got}, policy expects {expected}")
            }
            PolicyError::ActionOutOfBounds { node, dim, value } => {
                write!(f, "action for '{node}' dim {dim} = {value} is on/outside its bounds")
            }
            PolicyError::NoiseWidth { node, expected, got } => {
                write!(f, "noise for '{node}': {got} values, expected {expected}")
            }
        }
    }
}

impl std::error::Error for PolicyError {}

impl From<NumericsError> for PolicyError {
    fn from(e: NumericsError) -> Self {
        PolicyError::Numerics(e)
    }
}

impl From<GraphError> for PolicyError {
    fn from(e: GraphError) -> Self {
        PolicyError::Graph(e)
    }
}

pub type Result<T> = std::result::Result<T, PolicyError>;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Squash {
    /// tanh then affine rescale into [low, high]; the production mode.
    TanhRescale,
    /// Raw Gaussian output. Reachable only through the in-crate test hook.
    #[cfg_attr(not(test), allow(dead_code))]
    Bypass,
}

/// One tactic's policy head: conditioning input -> (mean, log_std).
#[derive(Debug, Clone)]
pub struct SubPolicy {
    pub node_id: String,
    pub net: Mlp,
    action_dims: usize,
    /// Per-dimension (low, high); actions stay strictly inside.
    bounds: Vec<(f64, f64)>,
    squash: Squash,
}

impl SubPolicy {
    fn mid_half(&self) -> (Vec<f64>, Vec<f64>) {
        let mid = self.bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
        let half = self.bounds.iter().map(|(lo, hi)| 0.5 * (hi - lo)).collect();
        (mid, half)
    }
}

/// A sampled pass through the whole chain, still on the tape.
pub struct JointSample {
    /// [batch, total_action_dim], slices in topological order.
    pub action: Var,
    /// One [batch, 1] log-prob per sub-policy, topological order.
    pub per_sub_log_prob: Vec<Var>,
    /// Parameter handles per sub-policy when tracked, else empty.
    pub net_vars: Vec<MlpVars>,
}

/// Bank of sub-policies bound to a strategy graph.
#[derive(Debug, Clone)]
pub struct JointPolicy {
    graph: StrategyGraph,
    /// Sub-policies in topological order.
    subs: Vec<SubPolicy>,
    obs_dim: usize,
}

impl JointPolicy {
    /// Build one sub-policy per graph node. `bounds` covers the full action
    /// vector in layout (topological) order; `hidden` sizes every head.
    pub fn new(
        graph: StrategyGraph,
        obs_dim: usize,
        bounds: &[(f64, f64)],
        hidden: &[usize],
        init: &mut Stream,
    ) -> Result<Self> {
        if bounds.len() != graph.total_action_dim() {
            return Err(PolicyError::ActionWidth {
                expected: graph.total_action_dim(),
                got: bounds.len(),
            });
        }
        let order: Vec<String> = graph.topological_order().iter().map(|s| s.to_string()).collect();
        let mut subs = Vec::with_capacity(order.len());
        for (pos, id) in order.iter().enumerate() {
            let node = graph.node(id)?;
            let k = node.action_dims;
            let cond = graph.conditioning_width(id, obs_dim)?;
            let mut sizes = vec![cond];
            sizes.extend_from_slice(hidden);
            sizes.push(2 * k);
            let net = Mlp::new(&sizes, init)?;
            let range = graph.slice_ranges()[pos].clone();
            subs.push(SubPolicy {
                node_id: id.clone(),
                net,
                action_dims: k,
                bounds: bounds[range].to_vec(),
                squash: Squash::TanhRescale,
            });
        }
        Ok(JointPolicy { graph, subs, obs_dim })
    }

    pub fn graph(&self) -> &StrategyGraph {
        &self.graph
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.graph.total_action_dim()
    }

    pub fn sub_count(&self) -> usize {
        self.subs.len()
    }

    pub fn subs(&self) -> &[SubPolicy] {
        &self.subs
    }

    pub fn subs_mut(&mut self) -> &mut [SubPolicy] {
        &mut self.subs
    }

    #[cfg(test)]
    pub(crate) fn bypass_squash_for_tests(&mut self, node_id: &str) {
        let sub = self.subs.iter_mut().find(|s| s.node_id == node_id).expect("known node");
        sub.squash = Squash::Bypass;
    }

    /// Draw reparameterization noise for a batch: for each node in
    /// topological order, `batch * action_dims` standard normals, row-major.
    pub fn draw_noise(&self, batch: usize, stream: &mut Stream) -> Vec<Vec<f64>> {
        self.subs
            .iter()
            .map(|s| {
                let mut buf = vec![0.0; batch * s.action_dims];
                stream.fill_normal(&mut buf);
                buf
            })
            .collect()
    }

    /// Zero noise for a batch; deterministic evaluation runs through the
    /// identical chain with this.
    pub fn zero_noise(&self, batch: usize) -> Vec<Vec<f64>> {
        self.subs.iter().map(|s| vec![0.0; batch * s.action_dims]).collect()
    }

    /// Sample every tactic in topological order on the tape.
    ///
    /// `state` is [batch, obs_dim]; `noise[i]` belongs to sub-policy i. With
    /// `track_params` the nets' parameters become gradient leaves (for the
    /// policy loss); without, the pass is value-only.
    pub fn sample_on_tape(
        &self,
        tape: &mut Tape,
        state: Var,
        noise: &[Vec<f64>],
        track_params: bool,
    ) -> Result<JointSample> {
        let (batch, obs_cols) = tape.shape(state);
        if obs_cols != self.obs_dim {
            return Err(PolicyError::StateWidth { expected: self.obs_dim, got: obs_cols });
        }
        if noise.len() != self.subs.len() {
            return Err(PolicyError::NoiseWidth {
                node: "<all>".to_string(),
                expected: self.subs.len(),
                got: noise.len(),
            });
        }

        let mut sampled: HashMap<&str, Var> = HashMap::new();
        let mut actions = Vec::with_capacity(self.subs.len());
        let mut log_probs = Vec::with_capacity(self.subs.len());
        let mut net_vars = Vec::new();

        for (i, sub) in self.subs.iter().enumerate() {
            let k = sub.action_dims;
            if noise[i].len() != batch * k {
                return Err(PolicyError::NoiseWidth {
                    node: sub.node_id.clone(),
                    expected: batch * k,
                    got: noise[i].len(),
                });
            }

            // conditioning input: state then parent slices in declared order
            let node = self.graph.node(&sub.node_id)?;
            let mut parts = vec![state];
            for p in &node.parents {
                parts.push(*sampled.get(p.as_str()).expect("topological order"));
            }
            let cond = tape.concat_cols(&parts);

            let out = if track_params {
                let (out, vars) = sub.net.forward(tape, cond)?;
                net_vars.push(vars);
                out
            } else {
                sub.net.forward_frozen(tape, cond)?
            };
            let mean = tape.slice_cols(out, 0, k);
            let log_std_raw = tape.slice_cols(out, k, k);
            let log_std = tape.clamp(log_std_raw, LOG_STD_MIN, LOG_STD_MAX);
            let std = tape.exp(log_std);
            let eps = tape.constant(noise[i].clone(), batch, k);
            let scaled = tape.mul(std, eps);
            let u = tape.add(mean, scaled);

            // log N(u; mean, std) with u = mean + std*eps substituted:
            // per dim -(eps^2)/2 - log_std - ln(2*pi)/2. The mean path's
            // density gradient cancels exactly, so this matches evaluating
            // the full quadratic form.
            let base: Vec<f64> =
                noise[i].iter().map(|e| -0.5 * e * e - 0.5 * LN_2PI).collect();
            let base = tape.constant(base, batch, k);
            let gauss_lp = tape.sub(base, log_std);

            let (action_i, lp_dims) = match sub.squash {
                Squash::Bypass => (u, gauss_lp),
                Squash::TanhRescale => {
                    let t = tape.tanh(u);
                    let (mid, half) = sub.mid_half();
                    let mid_tiled = tape.constant(tile(&mid, batch), batch, k);
                    let half_tiled = tape.constant(tile(&half, batch), batch, k);
                    let rescaled = tape.mul(half_tiled, t);
                    let action = tape.add(mid_tiled, rescaled);
                    // log|d action/d u| per dim = ln(half) + log(1 - tanh^2 u),
                    // the latter as 2(ln 2 - u - softplus(-2u)) for stability.
                    let neg2u = tape.scale(u, -2.0);
                    let sp = tape.softplus(neg2u);
                    let u_plus_sp = tape.add(u, sp);
                    // correction = ln(half) + 2*ln2 - 2u - 2*softplus(-2u)
                    //            = ln(half) - 2 * (u + softplus(-2u) - ln2)
                    let shifted = tape.add_scalar(u_plus_sp, -LN_2);
                    let corr_var = tape.scale(shifted, -2.0);
                    let ln_half: Vec<f64> = half.iter().map(|h| h.ln()).collect();
                    let ln_half_row = tape.constant(ln_half, 1, k);
                    let corr = tape.add_row(corr_var, ln_half_row);
                    (action, tape.sub(gauss_lp, corr))
                }
            };
            let lp = tape.row_sum(lp_dims);
            sampled.insert(sub.node_id.as_str(), action_i);
            actions.push(action_i);
            log_probs.push(lp);
        }

        let action = tape.concat_cols(&actions);
        Ok(JointSample { action, per_sub_log_prob: log_probs, net_vars })
    }

    /// Sample one action for a single state, drawing fresh noise.
    /// Returns the action (layout order) and per-sub log-probs.
    pub fn sample_joint(&self, state: &[f64], stream: &mut Stream) -> Result<(Vec<f64>, Vec<f64>)> {
        let noise = self.draw_noise(1, stream);
        self.sample_with_noise(state, &noise)
    }

    /// Sample with caller-provided noise (one [1, action_dims] row per node).
    pub fn sample_with_noise(
        &self,
        state: &[f64],
        noise: &[Vec<f64>],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if state.len() != self.obs_dim {
            return Err(PolicyError::StateWidth { expected: self.obs_dim, got: state.len() });
        }
        let mut tape = Tape::new();
        let sv = tape.constant(state.to_vec(), 1, state.len());
        let s = self.sample_on_tape(&mut tape, sv, noise, false)?;
        let action = tape.value(s.action).to_vec();
        let lps = s.per_sub_log_prob.iter().map(|&v| tape.scalar_value(v)).collect();
        Ok((action, lps))
    }

    /// Squashed, rescaled means through the same chain with zero noise.
    pub fn deterministic_action(&self, state: &[f64]) -> Result<Vec<f64>> {
        let noise = self.zero_noise(1);
        Ok(self.sample_with_noise(state, &noise)?.0)
    }

    /// Exact joint log-probability of a given action, reconstructed from the
    /// action's slices. This is an independent straight-line evaluation (no
    /// tape): the dual route to `sample_on_tape`'s reported log-probs.
    pub fn log_prob_joint(&self, state: &[f64], action: &[f64]) -> Result<(f64, Vec<f64>)> {
        if state.len() != self.obs_dim {
            return Err(PolicyError::StateWidth { expected: self.obs_dim, got: state.len() });
        }
        if action.len() != self.action_dim() {
            return Err(PolicyError::ActionWidth {
                expected: self.action_dim(),
                got: action.len(),
            });
        }
        let ranges = self.graph.slice_ranges();
        let mut slices: HashMap<&str, &[f64]> = HashMap::new();
        for (sub, range) in self.subs.iter().zip(ranges) {
            slices.insert(sub.node_id.as_str(), &action[range.clone()]);
        }

        let mut per_sub = Vec::with_capacity(self.subs.len());
        for sub in &self.subs {
            let node = self.graph.node(&sub.node_id)?;
            let mut cond = state.to_vec();
            for p in &node.parents {
                cond.extend_from_slice(slices[p.as_str()]);
            }
            let head = sub.net.eval_batch(&cond, 1)?;
            let k = sub.action_dims;
            let slice = slices[sub.node_id.as_str()];
            let mut lp = 0.0;
            for d in 0..k {
                let mean = head[d];
                let log_std = head[k + d].clamp(LOG_STD_MIN, LOG_STD_MAX);
                let std = log_std.exp();
                match sub.squash {
                    Squash::Bypass => {
                        let z = (slice[d] - mean) / std;
                        lp += -0.5 * z * z - log_std - 0.5 * LN_2PI;
                    }
                    Squash::TanhRescale => {
                        let (lo, hi) = sub.bounds[d];
                        let mid = 0.5 * (lo + hi);
                        let half = 0.5 * (hi - lo);
                        let t = (slice[d] - mid) / half;
                        if !(t > -1.0 && t < 1.0) {
                            return Err(PolicyError::ActionOutOfBounds {
                                node: sub.node_id.clone(),
                                dim: d,
                                value: slice[d],
                            });
                        }
                        let u = atanh(t);
                        let z = (u - mean) / std;
                        let gauss = -0.5 * z * z - log_std - 0.5 * LN_2PI;
                        // log(1 - t^2) split for accuracy near the bounds
                        let log_det = half.ln() + (-t).ln_1p() + t.ln_1p();
                        lp += gauss - log_det;
                    }
                }
            }
            per_sub.push(lp);
        }
        Ok((per_sub.iter().sum(), per_sub))
    }

    /// Monte-Carlo estimates of each sub-policy's entropy E[-log pi_i] at a
    /// state, from `n_samples` passes through the chain. Deterministic given
    /// the stream's seed.
    pub fn entropy_terms(
        &self,
        state: &[f64],
        n_samples: usize,
        stream: &mut Stream,
    ) -> Result<Vec<f64>> {
        assert!(n_samples >= 1, "entropy_terms needs at least one sample");
        if state.len() != self.obs_dim {
            return Err(PolicyError::StateWidth { expected: self.obs_dim, got: state.len() });
        }
        let mut tape = Tape::new();
        let tiled = tile(state, n_samples);
        let sv = tape.constant(tiled, n_samples, state.len());
        let noise = self.draw_noise(n_samples, stream);
        let s = self.sample_on_tape(&mut tape, sv, &noise, false)?;
        Ok(s.per_sub_log_prob
            .iter()
            .map(|&lp| {
                let v = tape.value(lp);
                -v.iter().sum::<f64>() / n_samples as f64
            })
            .collect())
    }

    /// Parameters of every sub-policy, named for checkpointing.
    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for sub in &self.subs {
            let names = sub.net.param_names(&format!("{prefix}.{}", sub.node_id));
            for (name, t) in names.into_iter().zip(sub.net.params()) {
                out.push((name, t));
            }
        }
        out
    }

    /// Overwrite parameters from a checkpoint's named tensors.
    pub fn load_named_params(
        &mut self,
        prefix: &str,
        lookup: &dyn Fn(&str) -> Option<Tensor>,
    ) -> Result<()> {
        for sub in &mut self.subs {
            let names = sub.net.param_names(&format!("{prefix}.{}", sub.node_id));
            for (name, param) in names.into_iter().zip(sub.net.params_mut()) {
                let t = lookup(&name).ok_or(PolicyError::Numerics(NumericsError::Checkpoint {
                    detail: format!("missing parameter {name}"),
                }))?;
                if t.shape != param.shape {
                    return Err(PolicyError::Numerics(NumericsError::Checkpoint {
                        detail: format!("shape mismatch for {name}"),
                    }));
                }
                param.data = t.data;
            }
        }
        Ok(())
    }
}

fn tile(row: &[f64], times: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(row.len() * times);
    for _ in 0..times {
        out.extend_from_slice(row);
    }
    out
}

fn atanh(x: f64) -> f64 {
    0.5 * ((1.0 + x).ln() - (1.0 - x).ln())
}
