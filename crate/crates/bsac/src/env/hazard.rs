//! Damped point mass with 2-D thrust, a goal region, fixed circular
//! hazards, and a draining battery. The needs-hierarchy testbed: it is the
//! one environment that publishes probes.
//!
//! Dynamics: `a = (THRUST_SCALE u - C v) / M`, semi-implicit Euler at DT.
//! Battery drains by `BASE_DRAIN + DRAIN_PER_THRUST ||u||^2` per step.
//! Reward: `-distance(p, goal) - 0.05 ||u||^2`, plus GOAL_BONUS on entering
//! the goal region (episode ends). Touching a hazard ends the episode with
//! HAZARD_PENALTY; an empty battery ends it with no bonus.
//!
//! Probes:
//! - `safety`: 1 - clamp(hazard proximity); 0 at/inside a hazard edge,
//!   1 beyond MARGIN of every hazard.
//! - `battery`: remaining battery fraction.
//! - `thrust_headroom`: 1 - ||last u|| / ||max u||.

use std::collections::HashMap;

use crate::rng::Stream;

use super::{check_action, clamp_action, EnvError, EnvSpec, Environment, StepResult};

const MASS: f64 = 1.0;
const DAMPING: f64 = 0.8;
const THRUST_SCALE: f64 = 1.0;
const DT: f64 = 0.05;
const MAX_STEPS: usize = 300;
const GOAL: [f64; 2] = [0.7, 0.7];
const GOAL_RADIUS: f64 = 0.15;
const GOAL_BONUS: f64 = 10.0;
const HAZARDS: [([f64; 2], f64); 2] = [([0.25, 0.35], 0.15), ([-0.25, 0.55], 0.12)];
const HAZARD_PENALTY: f64 = -10.0;
const MARGIN: f64 = 0.3;
const START: [f64; 2] = [-0.7, -0.7];
const BASE_DRAIN: f64 = 0.0005;
const DRAIN_PER_THRUST: f64 = 0.002;

pub struct HazardPointMass {
    spec: EnvSpec,
    pos: [f64; 2],
    vel: [f64; 2],
    battery: f64,
    last_thrust: [f64; 2],
    steps: usize,
    clamp_count: u64,
    scratch: Vec<f64>,
}

impl HazardPointMass {
    pub fn new() -> Self {
        HazardPointMass {
            spec: EnvSpec {
                name: "hazard_pointmass",
                obs_dim: 10,
                action_dim: 2,
                bounds: vec![(-1.0, 1.0); 2],
                dt: DT,
                max_steps: MAX_STEPS,
                probes: vec![
                    ("safety", "1 - clamped hazard proximity"),
                    ("battery", "battery fraction remaining"),
                    ("thrust_headroom", "1 - |thrust| / |max thrust|"),
                ],
            },
            pos: START,
            vel: [0.0; 2],
            battery: 1.0,
            last_thrust: [0.0; 2],
            steps: 0,
            clamp_count: 0,
            scratch: Vec::with_capacity(2),
        }
    }

    fn hazard_proximity(&self) -> f64 {
        let mut prox: f64 = 0.0;
        for (center, radius) in &HAZARDS {
            let d = dist(self.pos, *center) - radius;
            prox = prox.max((1.0 - d / MARGIN).clamp(0.0, 1.0));
        }
        prox
    }

    fn probes(&self) -> HashMap<String, f64> {
        let headroom = 1.0
            - (self.last_thrust[0].powi(2) + self.last_thrust[1].powi(2)).sqrt()
                / std::f64::consts::SQRT_2;
        let mut m = HashMap::new();
        m.insert("safety".to_string(), 1.0 - self.hazard_proximity());
        m.insert("battery".to_string(), self.battery.clamp(0.0, 1.0));
        m.insert("thrust_headroom".to_string(), headroom.clamp(0.0, 1.0));
        m
    }

    fn observation(&self) -> Vec<f64> {
        // nearest hazard offset for avoidance
        let nearest = HAZARDS
            .iter()
            .min_by(|a, b| dist(self.pos, a.0).total_cmp(&dist(self.pos, b.0)))
            .unwrap()
            .0;
        vec![
            self.pos[0],
            self.pos[1],
            self.vel[0],
            self.vel[1],
            GOAL[0] - self.pos[0],
            GOAL[1] - self.pos[1],
            self.battery.clamp(0.0, 1.0),
            nearest[0] - self.pos[0],
            nearest[1] - self.pos[1],
            1.0 - self.hazard_proximity(),
        ]
    }
}

impl Default for HazardPointMass {
    fn default() -> Self {
        Self::new()
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl Environment for HazardPointMass {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut s = Stream::new(seed);
        // draw order: px jitter, py jitter
        self.pos = [START[0] + s.uniform(-0.05, 0.05), START[1] + s.uniform(-0.05, 0.05)];
        self.vel = [0.0; 2];
        self.battery = 1.0;
        self.last_thrust = [0.0; 2];
        self.steps = 0;
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        check_action(action, &self.spec)?;
        let mut clamped = std::mem::take(&mut self.scratch);
        if clamp_action(action, &self.spec.bounds, &mut clamped) {
            self.clamp_count += 1;
        }
        let u = [clamped[0], clamped[1]];
        self.scratch = clamped;
        self.last_thrust = u;

        for i in 0..2 {
            let acc = (THRUST_SCALE * u[i] - DAMPING * self.vel[i]) / MASS;
            self.vel[i] += DT * acc;
            self.pos[i] += DT * self.vel[i];
        }
        let thrust_sq = u[0] * u[0] + u[1] * u[1];
        self.battery -= BASE_DRAIN + DRAIN_PER_THRUST * thrust_sq;
        self.steps += 1;

        let goal_dist = dist(self.pos, GOAL);
        let mut reward = -goal_dist - 0.05 * thrust_sq;
        let mut done = self.steps >= MAX_STEPS;
        if HAZARDS.iter().any(|(c, r)| dist(self.pos, *c) < *r) {
            reward += HAZARD_PENALTY;
            done = true;
        } else if goal_dist < GOAL_RADIUS {
            reward += GOAL_BONUS;
            done = true;
        } else if self.battery <= 0.0 {
            done = true;
        }

        Ok(StepResult { observation: self.observation(), reward, done, probes: self.probes() })
    }

    fn clamp_warnings(&self) -> u64 {
        self.clamp_count
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn waypoint_route_reaches_the_goal() {
        // scripted route skirting both hazards on the lower-right
        let waypoints = [[0.3, -0.5], [0.8, 0.1], GOAL];
        let mut env = HazardPointMass::new();
        let mut obs = env.reset(0);
        let mut wp = 0;
        let mut reached_goal = false;
        for _ in 0..MAX_STEPS {
            let p = [obs[0], obs[1]];
            let v = [obs[2], obs[3]];
            if wp + 1 < waypoints.len() && dist(p, waypoints[wp]) < 0.15 {
                wp += 1;
            }
            let u = [
                (2.5 * (waypoints[wp][0] - p[0]) - 1.2 * v[0]).clamp(-1.0, 1.0),
                (2.5 * (waypoints[wp][1] - p[1]) - 1.2 * v[1]).clamp(-1.0, 1.0),
            ];
            let r = env.step(&u).unwrap();
            obs = r.observation;
            if r.done {
                reached_goal = r.reward > 0.0; // goal bonus dominates the step cost
                break;
            }
        }
        assert!(reached_goal, "never entered the goal region: pos {:?}", env.pos);
        assert!(env.battery > 0.3, "route drained the battery: {}", env.battery);
    }

    #[test]
    fn battery_drains_faster_under_thrust() {
        let mut env = HazardPointMass::new();
        env.reset(1);
        for _ in 0..50 {
            env.step(&[0.0, 0.0]).unwrap();
        }
        let idle = 1.0 - env.battery;
        env.reset(1);
        for _ in 0..50 {
            env.step(&[1.0, 1.0]).unwrap();
        }
        let busy = 1.0 - env.battery;
        assert!(busy > idle * 2.0);
    }

    #[test]
    fn hazard_contact_ends_episode_with_penalty() {
        let mut env = HazardPointMass::new();
        env.reset(2);
        env.pos = [HAZARDS[0].0[0] - HAZARDS[0].1 - 0.02, HAZARDS[0].0[1]];
        env.vel = [1.5, 0.0];
        let mut done = false;
        let mut last_reward = 0.0;
        for _ in 0..40 {
            let r = env.step(&[1.0, 0.0]).unwrap();
            last_reward = r.reward;
            if r.done {
                done = true;
                break;
            }
        }
        assert!(done, "never hit the hazard");
        assert!(last_reward < HAZARD_PENALTY / 2.0);
    }

    #[test]
    fn safety_probe_drops_near_hazards() {
        let mut env = HazardPointMass::new();
        env.reset(3);
        env.pos = [HAZARDS[0].0[0] + HAZARDS[0].1 + 0.01, HAZARDS[0].0[1]];
        let near = env.probes()["safety"];
        env.pos = [-0.9, -0.9];
        let far = env.probes()["safety"];
        assert!(near < 0.1, "near-edge safety {near}");
        assert!((far - 1.0).abs() < 1e-12, "far safety {far}");
    }
}
