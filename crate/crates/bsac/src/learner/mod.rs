//! Off-policy maximum-entropy training: soft value/Q targets, the
//! KL-derived policy objective with the shared temperature split alpha/m
//! over sub-policies, Polyak-smoothed value target, and a replay buffer.
//! A single-node graph reduces everything here to standard SAC.

mod replay;
pub mod tabular;

pub use replay::{ReplayBuffer, Transition};

use serde::{Deserialize, Serialize};

use crate::joint_policy::{JointPolicy, JointSample, PolicyError};
use crate::numerics::{AdamHyper, AdamState, Mlp, MlpVars, Tape, Tensor, Var};
use crate::rng::{domain, Stream};
use crate::strategy_graph::StrategyGraph;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    /// Discount, in (0, 1).
    pub gamma: f64,
    /// Entropy temperature, shared equally across sub-policies.
    pub alpha: f64,
    /// Target smoothing coefficient, in (0, 1].
    pub tau: f64,
    pub lr_policy: f64,
    pub lr_q: f64,
    pub lr_v: f64,
    pub batch_size: usize,
    /// Environment steps of uniform-random warmup before updates begin.
    pub warmup_steps: usize,
    /// Train every this many environment steps once warm.
    pub update_interval: usize,
    pub buffer_capacity: usize,
    /// Hidden layer widths for every network.
    pub hidden: Vec<usize>,
    /// Sub-policy count; set from the graph, not the config file.
    #[serde(skip)]
    pub m: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            gamma: 0.99,
            alpha: 0.2,
            tau: 0.005,
            lr_policy: 3e-4,
            lr_q: 3e-4,
            lr_v: 3e-4,
            batch_size: 128,
            warmup_steps: 1000,
            update_interval: 1,
            buffer_capacity: 100_000,
            hidden: vec![32, 32],
            m: 1,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(format!("gamma {} not in (0,1)", self.gamma));
        }
        if !(self.alpha > 0.0) {
            return Err(format!("alpha {} must be positive", self.alpha));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(format!("tau {} not in (0,1]", self.tau));
        }
        for (name, lr) in
            [("lr_policy", self.lr_policy), ("lr_q", self.lr_q), ("lr_v", self.lr_v)]
        {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(format!("{name} {lr} must be finite and non-negative"));
            }
        }
        if self.batch_size == 0 || self.update_interval == 0 {
            return Err("batch_size and update_interval must be positive".into());
        }
        if self.buffer_capacity < self.batch_size {
            return Err("buffer_capacity smaller than batch_size".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(format!("bad hidden sizes {:?}", self.hidden));
        }
        Ok(())
    }
}

/// Twin soft Q-networks, the state value network, and its Polyak target.
#[derive(Debug, Clone)]
pub struct CriticBank {
    pub q1: Mlp,
    pub q2: Mlp,
    pub v: Mlp,
    pub v_target: Mlp,
}

impl CriticBank {
    pub fn new(obs_dim: usize, action_dim: usize, hidden: &[usize], init: &mut Stream) -> Self {
        let mut q_sizes = vec![obs_dim + action_dim];
        q_sizes.extend_from_slice(hidden);
        q_sizes.push(1);
        let mut v_sizes = vec![obs_dim];
        v_sizes.extend_from_slice(hidden);
        v_sizes.push(1);
        let q1 = Mlp::new(&q_sizes, init).expect("q sizes are valid");
        let q2 = Mlp::new(&q_sizes, init).expect("q sizes are valid");
        let v = Mlp::new(&v_sizes, init).expect("v sizes are valid");
        let v_target = v.clone();
        CriticBank { q1, q2, v, v_target }
    }
}

/// Per-update diagnostics, serialized by the harness.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub q1_loss: f64,
    pub q2_loss: f64,
    pub v_loss: f64,
    pub policy_loss: f64,
    /// Single-sample entropy estimates -mean(log pi_i), topological order.
    pub entropy_subs: Vec<f64>,
}

/// Soft Bellman backup target for one transition:
/// `r + gamma * (1 - done) * V_target(s')`. No gradient flows through it.
pub fn q_target(
    t: &Transition,
    critics: &CriticBank,
    hp: &Hyperparams,
) -> Result<f64, PolicyError> {
    let cont = if t.done { 0.0 } else { 1.0 };
    let v_bar = critics.v_target.eval_batch(&t.next_state, 1)?[0];
    Ok(t.reward + hp.gamma * cont * v_bar)
}

/// Soft state-value target: sample A ~ pi(.|s) and return
/// `min(Q1, Q2)(s, A) - alpha * log pi(A|s)`. For a factorized policy the
/// entropy term is the same total, split per sub-policy only for
/// diagnostics.
pub fn value_target(
    state: &[f64],
    policy: &JointPolicy,
    critics: &CriticBank,
    hp: &Hyperparams,
    stream: &mut Stream,
) -> Result<f64, PolicyError> {
    let (action, lps) = policy.sample_joint(state, stream)?;
    let mut sa = state.to_vec();
    sa.extend_from_slice(&action);
    let q1 = critics.q1.eval_batch(&sa, 1)?[0];
    let q2 = critics.q2.eval_batch(&sa, 1)?[0];
    let log_pi: f64 = lps.iter().sum();
    Ok(q1.min(q2) - hp.alpha * log_pi)
}

/// The policy objective on a tape:
/// `mean_batch( (alpha/m) * sum_i log pi_i - min(Q1, Q2)(s, A) )` with the
/// action reparameterized through the whole chain and the critics frozen.
/// Returns the loss Var and the sample (whose `net_vars` carry the policy
/// parameter handles).
pub fn policy_loss_on_tape(
    tape: &mut Tape,
    states: &[f64],
    batch: usize,
    policy: &JointPolicy,
    critics: &CriticBank,
    hp: &Hyperparams,
    noise: &[Vec<f64>],
) -> Result<(Var, JointSample), PolicyError> {
    assert!(batch > 0, "policy loss needs a non-empty batch");
    let sv = tape.constant(states.to_vec(), batch, policy.obs_dim());
    let sample = policy.sample_on_tape(tape, sv, noise, true)?;
    let sa = tape.concat_cols(&[sv, sample.action]);
    let q1 = critics.q1.forward_frozen(tape, sa)?;
    let q2 = critics.q2.forward_frozen(tape, sa)?;
    let q_min = tape.min(q1, q2);
    let mut lp_total = sample.per_sub_log_prob[0];
    for lp in &sample.per_sub_log_prob[1..] {
        lp_total = tape.add(lp_total, *lp);
    }
    let m = policy.sub_count() as f64;
    let entropy_term = tape.scale(lp_total, hp.alpha / m);
    let gap = tape.sub(entropy_term, q_min);
    let loss = tape.mean(gap);
    Ok((loss, sample))
}

/// Convenience value-only form of the policy loss, for oracles.
pub fn policy_loss(
    states: &[f64],
    batch: usize,
    policy: &JointPolicy,
    critics: &CriticBank,
    hp: &Hyperparams,
    noise: &[Vec<f64>],
) -> Result<f64, PolicyError> {
    let mut tape = Tape::new();
    let (loss, _) = policy_loss_on_tape(&mut tape, states, batch, policy, critics, hp, noise)?;
    Ok(tape.scalar_value(loss))
}

/// One learner: owns its networks, optimizers, buffer, and streams.
pub struct SoftLearner {
    policy: JointPolicy,
    critics: CriticBank,
    hp: Hyperparams,
    buffer: ReplayBuffer,
    opt_q1: AdamState,
    opt_q2: AdamState,
    opt_v: AdamState,
    opt_policy: AdamState,
    replay_stream: Stream,
    update_stream: Stream,
    obs_dim: usize,
    action_dim: usize,
}

impl SoftLearner {
    /// Networks are initialized from the run seed's weight-init stream in a
    /// fixed order: sub-policies (topological), then Q1, Q2, V.
    pub fn new(
        graph: StrategyGraph,
        obs_dim: usize,
        bounds: &[(f64, f64)],
        mut hp: Hyperparams,
        run_seed: u64,
    ) -> Result<Self, PolicyError> {
        hp.m = graph.node_count();
        let mut init = Stream::substream(run_seed, domain::WEIGHT_INIT);
        let policy = JointPolicy::new(graph, obs_dim, bounds, &hp.hidden, &mut init)?;
        let critics = CriticBank::new(obs_dim, policy.action_dim(), &hp.hidden, &mut init);

        let policy_params: Vec<&Tensor> =
            policy.subs().iter().flat_map(|s| s.net.params()).collect();
        let opt_policy = AdamState::new(&policy_params, AdamHyper::with_lr(hp.lr_policy));
        let opt_q1 = AdamState::new(&critics.q1.params(), AdamHyper::with_lr(hp.lr_q));
        let opt_q2 = AdamState::new(&critics.q2.params(), AdamHyper::with_lr(hp.lr_q));
        let opt_v = AdamState::new(&critics.v.params(), AdamHyper::with_lr(hp.lr_v));

        Ok(SoftLearner {
            buffer: ReplayBuffer::new(hp.buffer_capacity),
            replay_stream: Stream::substream(run_seed, domain::REPLAY),
            update_stream: Stream::substream(run_seed, domain::TARGET_NOISE),
            obs_dim,
            action_dim: policy.action_dim(),
            policy,
            critics,
            hp,
            opt_q1,
            opt_q2,
            opt_v,
            opt_policy,
        })
    }

    pub fn policy(&self) -> &JointPolicy {
        &self.policy
    }

    pub fn critics(&self) -> &CriticBank {
        &self.critics
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn observe(&mut self, t: Transition) {
        debug_assert_eq!(t.state.len(), self.obs_dim);
        debug_assert_eq!(t.action.len(), self.action_dim);
        self.buffer.push(t);
    }

    /// Enough data to update: the buffer covers both a batch and the warmup.
    pub fn ready(&self) -> bool {
        self.buffer.len() >= self.hp.batch_size && self.buffer.len() >= self.hp.warmup_steps
    }

    /// One gradient step per network (Q1, Q2 toward the soft Bellman target,
    /// V toward the sampled soft value, policy on its loss), then the Polyak
    /// update of the value target. Returns None while not ready.
    pub fn train_step(&mut self) -> Result<Option<StepMetrics>, PolicyError> {
        if !self.ready() {
            return Ok(None);
        }
        let batch = self.hp.batch_size;
        let idx = self.buffer.sample_indices(batch, &mut self.replay_stream);

        let mut states = Vec::with_capacity(batch * self.obs_dim);
        let mut actions = Vec::with_capacity(batch * self.action_dim);
        let mut next_states = Vec::with_capacity(batch * self.obs_dim);
        let mut rewards = Vec::with_capacity(batch);
        let mut cont = Vec::with_capacity(batch);
        for &i in &idx {
            let t = self.buffer.get(i);
            states.extend_from_slice(&t.state);
            actions.extend_from_slice(&t.action);
            next_states.extend_from_slice(&t.next_state);
            rewards.push(t.reward);
            cont.push(if t.done { 0.0 } else { 1.0 });
        }

        // Q updates toward r + gamma (1-done) V_target(s')
        let v_bar = self.critics.v_target.eval_batch(&next_states, batch)?;
        let q_targets: Vec<f64> = (0..batch)
            .map(|b| rewards[b] + self.hp.gamma * cont[b] * v_bar[b])
            .collect();
        let mut sa = Vec::with_capacity(batch * (self.obs_dim + self.action_dim));
        for b in 0..batch {
            sa.extend_from_slice(&states[b * self.obs_dim..(b + 1) * self.obs_dim]);
            sa.extend_from_slice(&actions[b * self.action_dim..(b + 1) * self.action_dim]);
        }
        let q1_loss = regress(&mut self.critics.q1, &mut self.opt_q1, &sa, &q_targets, batch)?;
        let q2_loss = regress(&mut self.critics.q2, &mut self.opt_q2, &sa, &q_targets, batch)?;

        // V update toward min Q(s, A~pi) - alpha log pi
        let noise = self.policy.draw_noise(batch, &mut self.update_stream);
        let v_targets = {
            let mut tape = Tape::new();
            let sv = tape.constant(states.clone(), batch, self.obs_dim);
            let sample = self.policy.sample_on_tape(&mut tape, sv, &noise, false)?;
            let sampled_actions = tape.value(sample.action).to_vec();
            let mut sa2 = Vec::with_capacity(batch * (self.obs_dim + self.action_dim));
            for b in 0..batch {
                sa2.extend_from_slice(&states[b * self.obs_dim..(b + 1) * self.obs_dim]);
                sa2.extend_from_slice(
                    &sampled_actions[b * self.action_dim..(b + 1) * self.action_dim],
                );
            }
            let q1 = self.critics.q1.eval_batch(&sa2, batch)?;
            let q2 = self.critics.q2.eval_batch(&sa2, batch)?;
            let mut log_pi = vec![0.0; batch];
            for lp in &sample.per_sub_log_prob {
                for (b, v) in tape.value(*lp).iter().enumerate() {
                    log_pi[b] += v;
                }
            }
            (0..batch)
                .map(|b| q1[b].min(q2[b]) - self.hp.alpha * log_pi[b])
                .collect::<Vec<f64>>()
        };
        let v_loss = regress(&mut self.critics.v, &mut self.opt_v, &states, &v_targets, batch)?;

        // policy update
        let noise2 = self.policy.draw_noise(batch, &mut self.update_stream);
        let mut tape = Tape::new();
        let (loss, sample) = policy_loss_on_tape(
            &mut tape,
            &states,
            batch,
            &self.policy,
            &self.critics,
            &self.hp,
            &noise2,
        )?;
        tape.backward(loss)?;
        let policy_loss = tape.scalar_value(loss);
        let entropy_subs: Vec<f64> = sample
            .per_sub_log_prob
            .iter()
            .map(|&lp| {
                let v = tape.value(lp);
                -v.iter().sum::<f64>() / batch as f64
            })
            .collect();
        for (sub, vars) in self.policy.subs_mut().iter_mut().zip(&sample.net_vars) {
            sub.net.collect_grads(&tape, vars);
        }
        let mut policy_params: Vec<&mut Tensor> =
            self.policy.subs_mut().iter_mut().flat_map(|s| s.net.params_mut()).collect();
        self.opt_policy.step(&mut policy_params)?;

        // Polyak smoothing of the value target
        self.critics.v_target.blend_from(&self.critics.v, self.hp.tau);

        Ok(Some(StepMetrics { q1_loss, q2_loss, v_loss, policy_loss, entropy_subs }))
    }

    /// All learnable parameters, named for the checkpoint.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = self.policy.named_params("policy");
        for (prefix, net) in [
            ("q1", &self.critics.q1),
            ("q2", &self.critics.q2),
            ("v", &self.critics.v),
            ("v_target", &self.critics.v_target),
        ] {
            for (name, t) in net.param_names(prefix).into_iter().zip(net.params()) {
                out.push((name, t));
            }
        }
        out
    }
}

/// MSE regression step of `net(inputs)` toward `targets`; returns the loss.
fn regress(
    net: &mut Mlp,
    opt: &mut AdamState,
    inputs: &[f64],
    targets: &[f64],
    batch: usize,
) -> Result<f64, PolicyError> {
    let mut tape = Tape::new();
    let x = tape.constant(inputs.to_vec(), batch, inputs.len() / batch);
    let (out, vars): (Var, MlpVars) = net.forward(&mut tape, x)?;
    let t = tape.constant(targets.to_vec(), batch, 1);
    let diff = tape.sub(out, t);
    let sq = tape.square(diff);
    let loss = tape.mean(sq);
    tape.backward(loss)?;
    net.collect_grads(&tape, &vars);
    let mut params = net.params_mut();
    opt.step(&mut params)?;
    Ok(tape.scalar_value(loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy_graph::fixtures;

    fn tiny_hp() -> Hyperparams {
        Hyperparams {
            batch_size: 8,
            warmup_steps: 8,
            buffer_capacity: 64,
            hidden: vec![8],
            ..Hyperparams::default()
        }
    }

    fn fill_learner(learner: &mut SoftLearner, n: usize, seed: u64) {
        let mut s = Stream::new(seed);
        let obs = learner.obs_dim;
        let act = learner.action_dim;
        for _ in 0..n {
            learner.observe(Transition {
                state: (0..obs).map(|_| s.uniform(-1.0, 1.0)).collect(),
                action: (0..act).map(|_| s.uniform(-0.9, 0.9)).collect(),
                reward: s.uniform(-1.0, 1.0),
                next_state: (0..obs).map(|_| s.uniform(-1.0, 1.0)).collect(),
                done: s.next_f64() < 0.05,
            });
        }
    }

    #[test]
    fn q_target_examples() {
        let mut hp = tiny_hp();
        hp.gamma = 0.99;
        let graph = StrategyGraph::single("p", 1);
        let learner = SoftLearner::new(graph, 2, &[(-1.0, 1.0)], hp.clone(), 0).unwrap();
        // force V_target to a constant 2.0 head
        let mut critics = learner.critics.clone();
        critics.v_target = Mlp::zeros(critics.v_target.layer_sizes());
        let n = critics.v_target.params().len();
        critics.v_target.params_mut()[n - 1].data[0] = 2.0;

        let t = Transition {
            state: vec![0.0, 0.0],
            action: vec![0.1],
            reward: 1.0,
            next_state: vec![0.3, 0.4],
            done: false,
        };
        assert!((q_target(&t, &critics, &hp).unwrap() - 2.98).abs() < 1e-12);

        let done = Transition { done: true, ..t };
        assert_eq!(q_target(&done, &critics, &hp).unwrap(), 1.0);
    }

    #[test]
    fn q_target_batch_matches_scalar_recomputation() {
        let hp = tiny_hp();
        let graph = StrategyGraph::single("p", 1);
        let mut learner = SoftLearner::new(graph, 2, &[(-1.0, 1.0)], hp.clone(), 3).unwrap();
        fill_learner(&mut learner, 16, 9);
        // batch path
        let idx: Vec<usize> = (0..16).collect();
        let mut flat = Vec::new();
        for &i in &idx {
            flat.extend_from_slice(&learner.buffer.get(i).next_state);
        }
        let v_bar = learner.critics.v_target.eval_batch(&flat, 16).unwrap();
        for &i in &idx {
            let t = learner.buffer.get(i);
            let scalar = q_target(t, &learner.critics, &learner.hp).unwrap();
            let cont = if t.done { 0.0 } else { 1.0 };
            let batch = t.reward + learner.hp.gamma * cont * v_bar[i];
            assert!((scalar - batch).abs() < 1e-12);
        }
    }

    #[test]
    fn value_target_arithmetic() {
        // fabricate constant heads: min Q = 1.0, log pi known
        let mut hp = tiny_hp();
        hp.alpha = 0.2;
        let graph = StrategyGraph::single("p", 1);
        let mut learner = SoftLearner::new(graph, 2, &[(-1.0, 1.0)], hp.clone(), 1).unwrap();
        for (net, c) in [(&mut learner.critics.q1, 1.0), (&mut learner.critics.q2, 1.5)] {
            *net = Mlp::zeros(net.layer_sizes());
            let n = net.params().len();
            net.params_mut()[n - 1].data[0] = c;
        }
        learner.policy.subs_mut()[0].net = Mlp::zeros(learner.policy.subs()[0].net.layer_sizes());

        let mut stream = Stream::new(7);
        // with a zeroed policy head, mean=0 and log_std=0; draw noise and
        // recompute log pi independently
        let state = [0.2, -0.1];
        let (action, lps) = {
            let mut probe = stream.clone();
            learner.policy.sample_joint(&state, &mut probe).unwrap()
        };
        let got = value_target(&state, &learner.policy, &learner.critics, &hp, &mut stream)
            .unwrap();
        let expect = 1.0 - hp.alpha * lps.iter().sum::<f64>();
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
        let _ = action;
    }

    #[test]
    fn alpha_zero_value_target_is_pure_min_q() {
        let mut hp = tiny_hp();
        hp.alpha = 0.0;
        let graph = StrategyGraph::single("p", 1);
        let learner = SoftLearner::new(graph, 2, &[(-1.0, 1.0)], hp.clone(), 2).unwrap();
        let mut s1 = Stream::new(4);
        let mut s2 = Stream::new(4);
        let vt =
            value_target(&[0.1, 0.1], &learner.policy, &learner.critics, &hp, &mut s1).unwrap();
        let (a, _) = learner.policy.sample_joint(&[0.1, 0.1], &mut s2).unwrap();
        let sa = [0.1, 0.1, a[0]];
        let q1 = learner.critics.q1.eval_batch(&sa, 1).unwrap()[0];
        let q2 = learner.critics.q2.eval_batch(&sa, 1).unwrap()[0];
        assert_eq!(vt, q1.min(q2));
    }

    #[test]
    fn policy_loss_doubles_with_alpha_under_frozen_critics() {
        let graph = fixtures::reacher_chain();
        let mut hp = tiny_hp();
        let learner = SoftLearner::new(graph, 3, &[(-1.0, 1.0), (-1.0, 1.0)], hp.clone(), 5)
            .unwrap();
        let mut stream = Stream::new(11);
        let batch = 4;
        let states: Vec<f64> = (0..batch * 3).map(|_| stream.uniform(-1.0, 1.0)).collect();
        let noise = learner.policy.draw_noise(batch, &mut stream);

        hp.alpha = 0.3;
        let l1 =
            policy_loss(&states, batch, &learner.policy, &learner.critics, &hp, &noise).unwrap();
        hp.alpha = 0.6;
        let l2 =
            policy_loss(&states, batch, &learner.policy, &learner.critics, &hp, &noise).unwrap();
        hp.alpha = 0.0;
        let l0 =
            policy_loss(&states, batch, &learner.policy, &learner.critics, &hp, &noise).unwrap();
        // entropy component (l - l0) is linear in alpha
        assert!(((l2 - l0) - 2.0 * (l1 - l0)).abs() < 1e-10);
    }

    #[test]
    fn alpha_zero_gradient_ascends_q() {
        // With alpha = 0 the loss is -mean(min Q); its gradient must match
        // central finite differences of that quantity.
        let graph = StrategyGraph::single("p", 1);
        let mut hp = tiny_hp();
        hp.alpha = 0.0;
        let mut learner = SoftLearner::new(graph, 2, &[(-1.0, 1.0)], hp.clone(), 6).unwrap();
        let mut stream = Stream::new(13);
        let batch = 4;
        let states: Vec<f64> = (0..batch * 2).map(|_| stream.uniform(-1.0, 1.0)).collect();
        let noise = learner.policy.draw_noise(batch, &mut stream);

        let mut tape = Tape::new();
        let (loss, sample) = policy_loss_on_tape(
            &mut tape,
            &states,
            batch,
            &learner.policy,
            &learner.critics,
            &hp,
            &noise,
        )
        .unwrap();
        tape.backward(loss).unwrap();
        let vars = &sample.net_vars[0];
        // params() order: w0, b0, w1, b1, ...
        let analytic: Vec<f64> = vars
            .weights
            .iter()
            .zip(&vars.biases)
            .flat_map(|(&w, &b)| [w, b])
            .flat_map(|v| tape.grad(v).unwrap().to_vec())
            .collect();

        let h = 1e-6;
        let mut flat = 0;
        let n_params = learner.policy.subs()[0].net.params().len();
        for pi in 0..n_params {
            let len = learner.policy.subs()[0].net.params()[pi].data.len();
            for j in 0..len {
                let orig = learner.policy.subs()[0].net.params()[pi].data[j];
                learner.policy.subs_mut()[0].net.params_mut()[pi].data[j] = orig + h;
                let up = policy_loss(
                    &states, batch, &learner.policy, &learner.critics, &hp, &noise,
                )
                .unwrap();
                learner.policy.subs_mut()[0].net.params_mut()[pi].data[j] = orig - h;
                let down = policy_loss(
                    &states, batch, &learner.policy, &learner.critics, &hp, &noise,
                )
                .unwrap();
                learner.policy.subs_mut()[0].net.params_mut()[pi].data[j] = orig;
                let fd = (up - down) / (2.0 * h);
                let an = analytic[flat];
                let denom = fd.abs().max(1e-5);
                assert!(((an - fd) / denom).abs() < 1e-3, "param {pi}[{j}]: {an} vs {fd}");
                flat += 1;
            }
        }
    }

    #[test]
    fn zero_learning_rates_freeze_parameters() {
        let graph = StrategyGraph::single("p", 1);
        let hp = Hyperparams {
            lr_policy: 0.0,
            lr_q: 0.0,
            lr_v: 0.0,
            ..tiny_hp()
        };
        let mut learner = SoftLearner::new(graph, 2, &[(-1.0, 1.0)], hp, 8).unwrap();
        fill_learner(&mut learner, 16, 3);
        let before: Vec<Vec<f64>> =
            learner.named_params().iter().map(|(_, t)| t.data.clone()).collect();
        let metrics = learner.train_step().unwrap().expect("ready");
        assert!(metrics.q1_loss.is_finite() && metrics.policy_loss.is_finite());
        // v_target still moves (tau blend of identical v) but v == v_target
        // initially and lr_v = 0, so everything stays put
        let after: Vec<Vec<f64>> =
            learner.named_params().iter().map(|(_, t)| t.data.clone()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn tau_one_snaps_target_to_value_net() {
        let graph = StrategyGraph::single("p", 1);
        let hp = Hyperparams { tau: 1.0, ..tiny_hp() };
        let mut learner = SoftLearner::new(graph, 2, &[(-1.0, 1.0)], hp, 9).unwrap();
        fill_learner(&mut learner, 16, 4);
        learner.train_step().unwrap().expect("ready");
        for (a, b) in learner.critics.v.params().iter().zip(learner.critics.v_target.params()) {
            assert_eq!(a.data, b.data);
        }
    }

    #[test]
    fn not_ready_is_a_noop() {
        let graph = StrategyGraph::single("p", 1);
        let mut learner = SoftLearner::new(graph, 2, &[(-1.0, 1.0)], tiny_hp(), 10).unwrap();
        fill_learner(&mut learner, 4, 5); // below batch and warmup
        assert!(learner.train_step().unwrap().is_none());
    }

    #[test]
    fn fixed_seed_training_is_bit_deterministic() {
        let run = || {
            let graph = fixtures::reacher_chain();
            let mut learner =
                SoftLearner::new(graph, 3, &[(-1.0, 1.0); 2], tiny_hp(), 123).unwrap();
            fill_learner(&mut learner, 32, 6);
            let mut out = Vec::new();
            for _ in 0..20 {
                let m = learner.train_step().unwrap().unwrap();
                out.push((m.q1_loss, m.q2_loss, m.v_loss, m.policy_loss, m.entropy_subs));
            }
            out
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn target_gap_contracts_when_value_net_is_frozen() {
        // With lr_v = 0 the Polyak update must shrink ||v_target - v||
        // by a factor (1 - tau) each step.
        let graph = StrategyGraph::single("p", 1);
        let hp = Hyperparams { lr_v: 0.0, tau: 0.25, ..tiny_hp() };
        let mut learner = SoftLearner::new(graph, 2, &[(-1.0, 1.0)], hp, 11).unwrap();
        fill_learner(&mut learner, 16, 7);
        // desynchronize the target first
        for p in learner.critics.v_target.params_mut() {
            for v in &mut p.data {
                *v += 0.5;
            }
        }
        let gap = |l: &SoftLearner| -> f64 {
            l.critics
                .v
                .params()
                .iter()
                .zip(l.critics.v_target.params())
                .flat_map(|(a, b)| a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()))
                .fold(0.0_f64, f64::max)
        };
        let mut prev = gap(&learner);
        for _ in 0..5 {
            learner.train_step().unwrap().unwrap();
            let g = gap(&learner);
            assert!(g <= (1.0 - 0.25) * prev + 1e-12, "{g} vs {prev}");
            prev = g;
        }
    }
}
