//! Planar two-joint reacher (no gravity: the arm moves in a horizontal
//! plane). Point masses M1, M2 at the distal end of each link, lengths L1,
//! L2, viscous joint damping C. With q2 the elbow angle relative to the
//! upper arm and c2 = cos(q2):
//!
//! ```text
//! M11 = M1 L1^2 + M2 (L1^2 + L2^2 + 2 L1 L2 c2)
//! M12 = M21 = M2 (L2^2 + L1 L2 c2)
//! M22 = M2 L2^2
//! coriolis1 = -M2 L1 L2 sin(q2) (2 q1d q2d + q2d^2)
//! coriolis2 =  M2 L1 L2 sin(q2) q1d^2
//! M qdd = tau - coriolis - C qd
//! ```
//!
//! Semi-implicit Euler at DT; joint speeds clamped to +-MAX_SPEED. Reward:
//! -distance(tip, target) - 0.01 ||tau||^2. The target resamples each
//! episode inside a reachable annulus. This is the canonical two-tactic
//! strategy-graph demonstration: the shoulder conditions the elbow.

use std::collections::HashMap;

use crate::rng::Stream;

use super::{check_action, clamp_action, EnvError, EnvSpec, Environment, StepResult};

const M1: f64 = 0.3;
const M2: f64 = 0.3;
const L1: f64 = 0.5;
const L2: f64 = 0.5;
const DAMPING: f64 = 0.15;
const MAX_TORQUE: f64 = 1.0;
const MAX_SPEED: f64 = 8.0;
const DT: f64 = 0.02;
const MAX_STEPS: usize = 120;
const TARGET_RADIUS: (f64, f64) = (0.3, 0.7);

pub struct Reacher2 {
    spec: EnvSpec,
    q: [f64; 2],
    qd: [f64; 2],
    target: [f64; 2],
    steps: usize,
    clamp_count: u64,
    scratch: Vec<f64>,
}

impl Reacher2 {
    pub fn new() -> Self {
        Reacher2 {
            spec: EnvSpec {
                name: "reacher2",
                obs_dim: 10,
                action_dim: 2,
                bounds: vec![(-MAX_TORQUE, MAX_TORQUE); 2],
                dt: DT,
                max_steps: MAX_STEPS,
                probes: Vec::new(),
            },
            q: [0.0; 2],
            qd: [0.0; 2],
            target: [0.5, 0.0],
            steps: 0,
            clamp_count: 0,
            scratch: Vec::with_capacity(2),
        }
    }

    pub fn tip(&self) -> [f64; 2] {
        let (q1, q12) = (self.q[0], self.q[0] + self.q[1]);
        [L1 * q1.cos() + L2 * q12.cos(), L1 * q1.sin() + L2 * q12.sin()]
    }

    pub fn target(&self) -> [f64; 2] {
        self.target
    }

    pub fn joint_state(&self) -> ([f64; 2], [f64; 2]) {
        (self.q, self.qd)
    }

    fn observation(&self) -> Vec<f64> {
        let tip = self.tip();
        vec![
            self.q[0].cos(),
            self.q[0].sin(),
            self.q[1].cos(),
            self.q[1].sin(),
            self.qd[0],
            self.qd[1],
            self.target[0],
            self.target[1],
            tip[0] - self.target[0],
            tip[1] - self.target[1],
        ]
    }
}

impl Default for Reacher2 {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for Reacher2 {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut s = Stream::new(seed);
        // draw order: q1, q2, qd1, qd2, target angle, target radius
        self.q = [s.uniform(-0.1, 0.1), s.uniform(-0.1, 0.1)];
        self.qd = [s.uniform(-0.05, 0.05), s.uniform(-0.05, 0.05)];
        let phi = s.uniform(-std::f64::consts::PI, std::f64::consts::PI);
        let r = s.uniform(TARGET_RADIUS.0, TARGET_RADIUS.1);
        self.target = [r * phi.cos(), r * phi.sin()];
        self.steps = 0;
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        check_action(action, &self.spec)?;
        let mut clamped = std::mem::take(&mut self.scratch);
        if clamp_action(action, &self.spec.bounds, &mut clamped) {
            self.clamp_count += 1;
        }
        let tau = [clamped[0], clamped[1]];
        self.scratch = clamped;

        let c2 = self.q[1].cos();
        let s2 = self.q[1].sin();
        let m11 = M1 * L1 * L1 + M2 * (L1 * L1 + L2 * L2 + 2.0 * L1 * L2 * c2);
        let m12 = M2 * (L2 * L2 + L1 * L2 * c2);
        let m22 = M2 * L2 * L2;
        let cor1 = -M2 * L1 * L2 * s2 * (2.0 * self.qd[0] * self.qd[1] + self.qd[1] * self.qd[1]);
        let cor2 = M2 * L1 * L2 * s2 * self.qd[0] * self.qd[0];
        let rhs1 = tau[0] - cor1 - DAMPING * self.qd[0];
        let rhs2 = tau[1] - cor2 - DAMPING * self.qd[1];
        let det = m11 * m22 - m12 * m12;
        let qdd1 = (m22 * rhs1 - m12 * rhs2) / det;
        let qdd2 = (m11 * rhs2 - m12 * rhs1) / det;

        self.qd[0] = (self.qd[0] + DT * qdd1).clamp(-MAX_SPEED, MAX_SPEED);
        self.qd[1] = (self.qd[1] + DT * qdd2).clamp(-MAX_SPEED, MAX_SPEED);
        self.q[0] += DT * self.qd[0];
        self.q[1] += DT * self.qd[1];

        let tip = self.tip();
        let dist =
            ((tip[0] - self.target[0]).powi(2) + (tip[1] - self.target[1]).powi(2)).sqrt();
        let reward = -dist - 0.01 * (tau[0] * tau[0] + tau[1] * tau[1]);

        self.steps += 1;
        Ok(StepResult {
            observation: self.observation(),
            reward,
            done: self.steps >= MAX_STEPS,
            probes: HashMap::new(),
        })
    }

    fn clamp_warnings(&self) -> u64 {
        self.clamp_count
    }
}

/// Scripted proportional baseline: closed-form two-link inverse kinematics
/// picks target joint angles, then a proportional controller with velocity
/// damping drives each joint there. Torques clamp to the action bounds.
/// Reads only the published observation.
pub fn scripted_controller(obs: &[f64]) -> [f64; 2] {
    const KP: f64 = 4.0;
    const KD: f64 = 1.0;
    let q1 = obs[1].atan2(obs[0]);
    let q2 = obs[3].atan2(obs[2]);
    let (qd1, qd2) = (obs[4], obs[5]);
    let (tx, ty) = (obs[6], obs[7]);

    // elbow-down IK solution, clamped into the reachable disk
    let r2 = tx * tx + ty * ty;
    let c2 = ((r2 - L1 * L1 - L2 * L2) / (2.0 * L1 * L2)).clamp(-1.0, 1.0);
    let q2_star = c2.acos();
    let q1_star = ty.atan2(tx) - (L2 * q2_star.sin()).atan2(L1 + L2 * q2_star.cos());

    let wrap = |a: f64| {
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut w = a % two_pi;
        if w > std::f64::consts::PI {
            w -= two_pi;
        } else if w < -std::f64::consts::PI {
            w += two_pi;
        }
        w
    };
    let t1 = KP * wrap(q1_star - q1) - KD * qd1;
    let t2 = KP * wrap(q2_star - q2) - KD * qd2;
    [t1.clamp(-MAX_TORQUE, MAX_TORQUE), t2.clamp(-MAX_TORQUE, MAX_TORQUE)]
}
