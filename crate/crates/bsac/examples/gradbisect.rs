// scratch: m=1 vs m=2 on reacher; aligned eval seeds
use std::time::Instant;
use bsac::env::{self, Environment, scripted_controller};
use bsac::harness::evaluate_policy;
use bsac::learner::{Hyperparams, SoftLearner, Transition};
use bsac::rng::{derive, domain, Stream};
use bsac::strategy_graph::{fixtures, StrategyGraph};

fn aligned_baseline(episodes: usize) -> f64 {
    // identical protocol to evaluate_policy with Stream::new(4242)
    let mut eval_stream = Stream::new(4242);
    let mut env = env::make("reacher2").unwrap();
    let mut sum = 0.0;
    for _ in 0..episodes {
        let seed = eval_stream.next_u64();
        let mut obs = env.reset(seed);
        let mut total = 0.0;
        loop {
            let r = env.step(&scripted_controller(&obs)).unwrap();
            total += r.reward;
            if r.done { break; }
            obs = r.observation;
        }
        sum += total;
    }
    sum / episodes as f64
}

fn run(label: &str, graph: StrategyGraph, hp: Hyperparams, total: u64, seed: u64) -> f64 {
    let mut env = env::make("reacher2").unwrap();
    let spec = env.spec().clone();
    let mut learner = SoftLearner::new(graph, spec.obs_dim, &spec.bounds, hp.clone(), seed).unwrap();
    let env_seed_root = derive(seed, domain::ENV);
    let mut action_stream = Stream::substream(seed, domain::ACTION_NOISE);
    let mut warmup_stream = Stream::substream(seed, domain::WARMUP_ACTIONS);
    let mut episode = 0u64;
    let mut state = env.reset(derive(env_seed_root, episode));
    let start = Instant::now();
    let mut best = f64::NEG_INFINITY;
    for step in 1..=total {
        let action: Vec<f64> = if step <= hp.warmup_steps as u64 {
            spec.bounds.iter().map(|(lo, hi)| warmup_stream.uniform(*lo, *hi)).collect()
        } else {
            learner.policy().sample_joint(&state, &mut action_stream).unwrap().0
        };
        let sr = env.step(&action).unwrap();
        learner.observe(Transition {
            state: std::mem::take(&mut state),
            action, reward: sr.reward,
            next_state: sr.observation.clone(), done: sr.done,
        });
        state = if sr.done { episode += 1; env.reset(derive(env_seed_root, episode)) } else { sr.observation };
        learner.train_step().unwrap();
        if step % 15000 == 0 {
            let mut eval_stream = Stream::new(4242);
            let s = evaluate_policy(learner.policy(), "reacher2", 10, &mut eval_stream).unwrap();
            best = best.max(s.mean);
            println!("  [{label}] step {step}: eval {:.1} (best {:.1})", s.mean, best);
        }
    }
    println!("[{label}] done in {:.0}s, best {best:.1}", start.elapsed().as_secs_f64());
    best
}

fn main() {
    println!("aligned baseline (10 eps, stream 4242): {:.2}", aligned_baseline(10));
    let base = Hyperparams {
        gamma: 0.99, alpha: 0.2, tau: 0.01,
        lr_policy: 1e-3, lr_q: 1e-3, lr_v: 1e-3,
        batch_size: 64, warmup_steps: 1000, update_interval: 1,
        buffer_capacity: 100_000, hidden: vec![32, 32], m: 0,
    };
    run("A_128_4848", fixtures::reacher_chain(), Hyperparams {
        alpha: 0.05, lr_policy: 5e-4, lr_q: 5e-4, lr_v: 5e-4,
        batch_size: 128, hidden: vec![48, 48], tau: 0.005, warmup_steps: 3000,
        ..base.clone() }, 120_000, 0);
    run("B_128_3232_u2", fixtures::reacher_chain(), Hyperparams {
        alpha: 0.05, lr_policy: 7e-4, lr_q: 7e-4, lr_v: 7e-4,
        batch_size: 128, hidden: vec![32, 32], tau: 0.01, warmup_steps: 3000,
        update_interval: 2,
        ..base.clone() }, 120_000, 0);
    let _ = StrategyGraph::single("policy", 2);
}
