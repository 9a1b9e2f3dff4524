use std::fs;

use fcsrl::agent::{
    actor_grad, actor_loss, cost_expectation, load_checkpoint, normalized_cost, normalized_reward, onpolicy_targets, pid_update,
    random_policy_baseline, evaluate, save_checkpoint, train_loop, AgentState, CriticPair, Flavor, InputMode, PidState, Phase,
    TrainConfig, TrainOptions, METRICS_HEADER,
};
use fcsrl::cmdp::{Cost, Transition, TransitionBatch};
use fcsrl::envs::PointHazard2DEnv;
use fcsrl::nn::{hcat, softmax_rows, Activation, Dense, Mat, Mlp};
use fcsrl::oracle::{mc_cost_value_costs, mc_feasibility_costs, Convention};
use fcsrl::repr::{two_hot_project, Bins};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny(steps: usize) -> TrainConfig {
    TrainConfig {
        steps,
        batch_size: 16,
        z_dim: 4,
        proj_dim: 4,
        repr_hidden: vec![8],
        head_hidden: vec![8],
        rl_hidden: vec![16],
        n_bins: 21,
        start_steps: 200,
        update_after: 100,
        buffer_capacity: 10_000,
        ..TrainConfig::default()
    }
}

fn layer(weight: Mat, bias: Mat, activation: Activation) -> Mlp {
    Mlp::from_layers(vec![Dense { weight, bias, activation }]).unwrap()
}

fn random_mlp(sizes: &[usize], out: Activation, rng: &mut ChaCha8Rng) -> Mlp {
    Mlp::new(sizes, Activation::Relu, out, rng)
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

// PID

fn pid_reference(costs: &[f64], eps: f64, [kp, ki, kd]: [f64; 3]) -> Vec<f64> {
    let (mut i, mut prev) = (0.0f64, 0.0);
    costs
        .iter()
        .map(|c| {
            let e = c - eps;
            i = (i + e).max(0.0);
            let l = (kp * e + ki * i + kd * (e - prev)).max(0.0);
            prev = e;
            l
        })
        .collect()
}

#[test]
fn pid_first_step_hand_value() {
    let mut p = PidState::new(0.02, 0.005, 0.01).unwrap();
    assert!((pid_update(&mut p, 20.0, 10.0) - 0.35).abs() < 1e-15);
    let mut p = PidState::default();
    assert_eq!(pid_update(&mut p, 10.0, 10.0), 0.0);
}

#[test]
fn pid_three_step_sequence() {
    // e = 10, -5, 0: I = 10, 5, 5.
    let mut p = PidState::default();
    let got: Vec<f64> = [20.0, 5.0, 10.0].iter().map(|&c| p.update(c, 10.0)).collect();
    let want = [0.35, (0.02f64 * -5.0 + 0.005 * 5.0 + 0.01 * -15.0).max(0.0), 0.02 * 0.0 + 0.005 * 5.0 + 0.01 * 5.0];
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() < 1e-15, "{got:?} vs {want:?}");
    }
}

proptest! {
    #[test]
    fn pid_matches_reference(costs in proptest::collection::vec(0.0f64..40.0, 1..40), kp in 0.0f64..1.0, ki in 0.0f64..0.1, kd in 0.0f64..0.5) {
        let mut p = PidState::new(kp, ki, kd).unwrap();
        let want = pid_reference(&costs, 10.0, [kp, ki, kd]);
        for (c, w) in costs.iter().zip(want) {
            let l = p.update(*c, 10.0);
            prop_assert!((l - w).abs() < 1e-12);
            prop_assert!(l >= 0.0 && p.integral >= 0.0);
        }
    }
}

// Actor objective

#[test]
fn zero_lambda_actor_loss_is_minus_mean_reward_q() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let bins = Bins::cost_value(11, 0.9);
    let actor = random_mlp(&[3, 8, 2], Activation::Tanh, &mut rng);
    let reward = random_mlp(&[5, 8, 1], Activation::Identity, &mut rng);
    let cost = random_mlp(&[5, 8, 11], Activation::Identity, &mut rng);
    let x = uniform(&mut rng, 7, 3);
    let critics = CriticPair { reward: &reward, cost: &cost, cost_bins: &bins };
    let q = reward.forward(&hcat(&x, &actor.forward(&x).unwrap())).unwrap();
    let want = -q.column(0).mean().unwrap();
    assert!((actor_loss(&actor, critics, &x, 0.0, 0.0).unwrap() - want).abs() < 1e-12);
}

#[test]
fn constant_critics_give_the_constant_expression() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let bins = Bins::cost_value(5, 0.9);
    let actor = random_mlp(&[3, 6, 2], Activation::Tanh, &mut rng);
    let reward = layer(Mat::zeros((5, 1)), Mat::from_elem((1, 1), 1.7), Activation::Identity);
    let logits = [0.3, -1.0, 2.0, 0.0, 0.5];
    let cost = layer(
        Mat::zeros((5, 5)),
        Mat::from_shape_vec((1, 5), logits.to_vec()).unwrap(),
        Activation::Identity,
    );
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    let qc: f64 = logits.iter().zip(bins.centers()).map(|(l, c)| l.exp() / z * c).sum();
    let x = uniform(&mut rng, 4, 3);
    let critics = CriticPair { reward: &reward, cost: &cost, cost_bins: &bins };
    for lambda in [0.0, 0.5, 3.0, 40.0] {
        let want = -(1.7 - lambda * qc) / (1.0 + lambda);
        assert!((actor_loss(&actor, critics, &x, lambda, 0.0).unwrap() - want).abs() < 1e-12, "lambda {lambda}");
    }
}

#[test]
fn large_lambda_direction_follows_cost_critic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let bins = Bins::cost_value(11, 0.9);
    let actor = random_mlp(&[3, 8, 2], Activation::Tanh, &mut rng);
    let reward = random_mlp(&[5, 8, 1], Activation::Identity, &mut rng);
    let zero_reward = layer(Mat::zeros((5, 1)), Mat::zeros((1, 1)), Activation::Identity);
    let cost = random_mlp(&[5, 8, 11], Activation::Identity, &mut rng);
    let x = uniform(&mut rng, 6, 3);
    let lambda = 1e9;
    let (_, g) = actor_grad(&actor, CriticPair { reward: &reward, cost: &cost, cost_bins: &bins }, &x, lambda, 0.0).unwrap();
    let (_, gc) = actor_grad(&actor, CriticPair { reward: &zero_reward, cost: &cost, cost_bins: &bins }, &x, lambda, 0.0).unwrap();
    let scale = gc.iter().flat_map(|m| m.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    for (a, b) in g.iter().zip(&gc) {
        for (u, v) in a.iter().zip(b) {
            assert!((u - v).abs() <= 1e-6 * scale.max(1e-12));
        }
    }
}

#[test]
fn scaling_reward_critic_scales_the_actor_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let bins = Bins::cost_value(11, 0.9);
    let actor = random_mlp(&[3, 8, 2], Activation::Tanh, &mut rng);
    let reward = random_mlp(&[5, 8, 1], Activation::Identity, &mut rng);
    let mut scaled = reward.clone();
    let last = scaled.layers_mut().last_mut().unwrap();
    last.weight *= 3.0;
    last.bias *= 3.0;
    let cost = random_mlp(&[5, 8, 11], Activation::Identity, &mut rng);
    let x = uniform(&mut rng, 6, 3);
    let (_, g1) = actor_grad(&actor, CriticPair { reward: &reward, cost: &cost, cost_bins: &bins }, &x, 0.0, 0.0).unwrap();
    let (_, g3) = actor_grad(&actor, CriticPair { reward: &scaled, cost: &cost, cost_bins: &bins }, &x, 0.0, 0.0).unwrap();
    for (a, b) in g1.iter().zip(&g3) {
        for (u, v) in a.iter().zip(b) {
            assert!((3.0 * u - v).abs() <= 1e-12 * (1.0 + v.abs()));
            assert!(u * v >= 0.0);
        }
    }
}

// Critic targets

fn transitions(rewards: &[f64], costs: &[bool], done: &[bool]) -> Vec<Transition> {
    rewards
        .iter()
        .enumerate()
        .map(|(i, &r)| Transition {
            state: vec![0.1 * i as f64, -0.2],
            action: vec![0.3],
            reward: r,
            cost: if costs[i] { Cost::Unsafe } else { Cost::Safe },
            next_state: vec![0.5, 0.25 * i as f64],
            done: done[i],
            truncated: false,
        })
        .collect()
}

fn batch_of(trs: &[Transition]) -> TransitionBatch {
    let windows: Vec<&[Transition]> = trs.iter().map(std::slice::from_ref).collect();
    TransitionBatch::from_windows(&windows, (0..trs.len()).collect()).unwrap()
}

fn state_only_agent(n_bins: usize) -> AgentState {
    let cfg = TrainConfig {
        input_mode: InputMode::StateOnly,
        n_bins,
        ..tiny(0)
    };
    AgentState::new(2, 1, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
}

#[test]
fn td_targets_match_hand_computation() {
    let mut agent = state_only_agent(5);
    agent.actor_target = layer(Mat::zeros((2, 1)), Mat::from_elem((1, 1), 0.5), Activation::Tanh);
    agent.reward_target = layer(
        Mat::from_shape_vec((3, 1), vec![1.0, 2.0, 3.0]).unwrap(),
        Mat::from_elem((1, 1), 0.1),
        Activation::Identity,
    );
    let logits = vec![0.0, 1.0, -1.0, 0.5, 2.0];
    agent.cost_target = layer(Mat::zeros((3, 5)), Mat::from_shape_vec((1, 5), logits.clone()).unwrap(), Activation::Identity);

    let trs = transitions(&[1.0, -0.5], &[true, false], &[false, true]);
    let b = batch_of(&trs);
    let step = b.step(0);
    let next = agent.inputs(&step.states[1]).unwrap();
    let (yr, yc) = agent.td_targets(&step, &next).unwrap();

    let a = 0.5f64.tanh();
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    let eqc: f64 = logits.iter().zip(agent.cost_bins.centers()).map(|(l, c)| l.exp() / z * c).sum();
    let q0 = 0.5 + 2.0 * 0.0 + 3.0 * a + 0.1;
    assert!((yr[0] - (1.0 + 0.99 * q0)).abs() < 1e-10);
    assert!((yc[0] - (1.0 + 0.99 * eqc)).abs() < 1e-10);
    // Terminal: no bootstrap.
    assert!((yr[1] + 0.5).abs() < 1e-10);
    assert!(yc[1].abs() < 1e-10);
}

#[test]
fn zero_discount_targets_are_immediate() {
    let mut agent = state_only_agent(9);
    agent.gamma = 0.0;
    let trs = transitions(&[0.7, -1.2, 0.05], &[false, false, false], &[false; 3]);
    let b = batch_of(&trs);
    let step = b.step(0);
    let next = agent.inputs(&step.states[1]).unwrap();
    let (yr, yc) = agent.td_targets(&step, &next).unwrap();
    assert_eq!(yr, vec![0.7, -1.2, 0.05]);
    assert_eq!(yc, vec![0.0; 3]);
    let d = two_hot_project(yc[0], &agent.cost_bins).unwrap();
    assert_eq!(d.probs[0], 1.0);
    assert!(d.probs[1..].iter().all(|&p| p == 0.0));

    // Repeated steps regress Q_r onto the immediate rewards.
    let mut opt = agent.optimizers(3e-3);
    let x = agent.inputs(&step.states[0]).unwrap();
    for _ in 0..3000 {
        agent.critic_step(&x, Some(&step.actions[0]), &yr, &yc, &mut opt).unwrap();
    }
    let q = agent.reward_critic.forward(&hcat(&x, &step.actions[0])).unwrap();
    for (q, r) in q.column(0).iter().zip(&yr) {
        assert!((q - r).abs() < 1e-2, "{q} vs {r}");
    }
    let ec = cost_expectation(&agent.cost_critic, &agent.cost_bins, &hcat(&x, &step.actions[0])).unwrap();
    assert!(ec.iter().all(|&c| c < 1e-2), "{ec:?}");
}

// Monte-Carlo targets

#[test]
fn onpolicy_targets_unroll() {
    let (v, f) = onpolicy_targets(&[0.0, 0.0, 0.0, 1.0], 0.9);
    let want = [0.729, 0.81, 0.9, 1.0];
    for i in 0..4 {
        assert!((f[i] - want[i]).abs() < 1e-12 && (v[i] - want[i]).abs() < 1e-12);
    }
    let (v, f) = onpolicy_targets(&[0.0; 6], 0.9);
    assert!(v.iter().chain(&f).all(|&x| x == 0.0));
}

proptest! {
    #[test]
    fn onpolicy_targets_match_estimators(bits in proptest::collection::vec(any::<bool>(), 1..60), gamma in 0.5f64..0.999) {
        let costs: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let (v, f) = onpolicy_targets(&costs, gamma);
        for t in 0..costs.len() {
            prop_assert!((f[t] - mc_feasibility_costs(&costs, t, gamma, Convention::Relative).unwrap()).abs() < 1e-12);
            prop_assert!((v[t] - mc_cost_value_costs(&costs, t, gamma, Convention::Relative).unwrap()).abs() < 1e-9);
        }
    }
}

// Training loop

#[test]
fn zero_steps_writes_only_the_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = train_loop(&PointHazard2DEnv::default(), &tiny(0), 3, &TrainOptions {
        out_dir: Some(dir.path().to_path_buf()),
        trace_limit: 100,
    })
    .unwrap();
    assert_eq!((out.env_steps, out.updates), (0, 0));
    assert!(out.metrics.is_empty() && out.trace.is_empty());
    let ckpts: Vec<_> = fs::read_dir(dir.path().join("checkpoints")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(ckpts, vec![std::ffi::OsString::from("step-00000000")]);
    assert_eq!(fs::read_to_string(dir.path().join("metrics.csv")).unwrap(), format!("{METRICS_HEADER}\n"));
}

#[test]
fn identical_seeds_give_identical_metric_files() {
    let env = PointHazard2DEnv::default();
    let cfg = tiny(1200);
    let run = |seed| {
        let dir = tempfile::tempdir().unwrap();
        train_loop(&env, &cfg, seed, &TrainOptions {
            out_dir: Some(dir.path().to_path_buf()),
            trace_limit: 0,
        })
        .unwrap();
        fs::read(dir.path().join("metrics.csv")).unwrap()
    };
    let a = run(5);
    assert_eq!(a, run(5));
    assert_ne!(a, run(6));
    assert!(String::from_utf8(a).unwrap().lines().count() > 2);
}

#[test]
fn phases_follow_the_iteration_order() {
    let out = train_loop(&PointHazard2DEnv::default(), &tiny(400), 0, &TrainOptions {
        out_dir: None,
        trace_limit: 100_000,
    })
    .unwrap();
    let t = &out.trace;
    let update = [Phase::Sample, Phase::ReprUpdate, Phase::Ema, Phase::Encode, Phase::CriticUpdate, Phase::ActorUpdate];
    let mut updates = 0;
    for (i, p) in t.iter().enumerate() {
        if *p == Phase::Sample {
            assert_eq!(&t[i..i + update.len()], &update, "at {i}");
            updates += 1;
        }
    }
    assert_eq!(updates, out.updates);
    assert!(t.contains(&Phase::LambdaUpdate));
    assert_eq!(t[0], Phase::Collect);
}

#[test]
fn state_only_mode_skips_the_representation() {
    let cfg = TrainConfig {
        input_mode: InputMode::StateOnly,
        ..tiny(300)
    };
    let out = train_loop(&PointHazard2DEnv::default(), &cfg, 0, &TrainOptions {
        out_dir: None,
        trace_limit: 10_000,
    })
    .unwrap();
    assert!(out.updates > 0);
    assert!(!out.trace.contains(&Phase::ReprUpdate) && !out.trace.contains(&Phase::Ema));
}

#[test]
fn zero_cost_task_keeps_lambda_at_zero_and_matches_frozen_run() {
    let env = PointHazard2DEnv {
        hazards: vec![],
        ..PointHazard2DEnv::default()
    };
    let cfg = TrainConfig { epsilon: 1.0, ..tiny(900) };
    let free = train_loop(&env, &cfg, 2, &TrainOptions::default()).unwrap();
    assert!(free.metrics.iter().all(|r| r.lambda == 0.0 && r.cost == 0.0));
    let frozen_cfg = TrainConfig {
        freeze_lambda: Some(0.0),
        ..cfg
    };
    let frozen = train_loop(&env, &frozen_cfg, 2, &TrainOptions::default()).unwrap();
    let bits = |rows: &[fcsrl::agent::MetricRow]| rows.iter().map(|r| r.loss_actor.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&free.metrics), bits(&frozen.metrics));
}

#[test]
fn lambda_stays_nonnegative_under_violations() {
    let cfg = TrainConfig { epsilon: 0.5, ..tiny(1500) };
    let out = train_loop(&PointHazard2DEnv::default(), &cfg, 1, &TrainOptions::default()).unwrap();
    assert!(out.metrics.iter().all(|r| r.lambda >= 0.0));
    assert!(out.metrics.iter().any(|r| r.lambda > 0.0), "some episode should cross the hazard");
}

#[test]
fn unconstrained_run_beats_the_random_policy() {
    let env = PointHazard2DEnv::default();
    let cfg = TrainConfig {
        steps: 12_000,
        freeze_lambda: Some(0.0),
        ..TrainConfig::desk()
    };
    let out = train_loop(&env, &cfg, 0, &TrainOptions::default()).unwrap();
    let trained = evaluate(&out.agent, &env, 10, 100).unwrap();
    let random = random_policy_baseline(&env, 10, 100).unwrap();
    assert!(trained.reward > random.reward, "{trained:?} vs {random:?}");
}

#[test]
fn onpolicy_flavor_runs() {
    let cfg = TrainConfig {
        flavor: Flavor::Onpolicy,
        episodes_per_iteration: 2,
        epochs_per_iteration: 2,
        ..tiny(900)
    };
    let out = train_loop(&PointHazard2DEnv::default(), &cfg, 0, &TrainOptions {
        out_dir: None,
        trace_limit: 10_000,
    })
    .unwrap();
    assert!(out.env_steps >= 900 && out.updates > 0);
    assert!(out.metrics.iter().all(|r| r.lambda >= 0.0 && r.loss_actor.is_finite()));
    let first = |p| out.trace.iter().position(|q| *q == p).unwrap();
    assert!(first(Phase::Collect) < first(Phase::ReprUpdate));
    assert!(first(Phase::ReprUpdate) < first(Phase::Ema) && first(Phase::Ema) < first(Phase::CriticUpdate));
    assert!(first(Phase::CriticUpdate) < first(Phase::ActorUpdate) && first(Phase::ActorUpdate) < first(Phase::LambdaUpdate));
}

#[test]
fn divergence_aborts_with_a_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig { lr: 1e150, ..tiny(1000) };
    let err = train_loop(&PointHazard2DEnv::default(), &cfg, 0, &TrainOptions {
        out_dir: Some(dir.path().to_path_buf()),
        trace_limit: 0,
    })
    .unwrap_err();
    assert!(matches!(err, fcsrl::Error::TrainingDiverged(_) | fcsrl::Error::NonFinite(_)), "{err}");
    assert!(dir.path().join("diverged.json").is_file());
}

// Evaluation and checkpoints

#[test]
fn normalised_endpoints() {
    assert_eq!(normalized_reward(4.0, 1.0, 4.0).unwrap(), 1.0);
    assert_eq!(normalized_reward(1.0, 1.0, 4.0).unwrap(), 0.0);
    assert_eq!(normalized_cost(10.0, 10.0).unwrap(), 1.0);
    assert!(normalized_reward(1.0, 2.0, 2.0).is_err());
    assert!(normalized_cost(1.0, 0.0).is_err());
}

#[test]
fn evaluation_is_deterministic() {
    let env = PointHazard2DEnv::default();
    let agent = AgentState::new(4, 2, &tiny(0), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(evaluate(&agent, &env, 3, 11).unwrap(), evaluate(&agent, &env, 3, 11).unwrap());
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(0);
    let mut agent = AgentState::new(4, 2, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    agent.lambda = 0.125;
    agent.pid.update(30.0, 10.0);
    let path = save_checkpoint(dir.path(), 17, &agent, &cfg, 4, &[]).unwrap();
    let (back, back_cfg) = load_checkpoint(&path).unwrap();
    assert_eq!(back, agent);
    assert_eq!(back_cfg, cfg);
    let x = Mat::from_shape_fn((3, 4), |(i, j)| (i as f64 - j as f64) * 0.3);
    assert_eq!(agent.actor.forward(&agent.inputs(&x).unwrap()).unwrap(), back.actor.forward(&back.inputs(&x).unwrap()).unwrap());
}

#[test]
fn cost_distribution_rows_are_probabilities() {
    let agent = state_only_agent(7);
    let x = Mat::from_shape_fn((4, 3), |(i, j)| 0.1 * (i + j) as f64);
    let p = softmax_rows(&agent.cost_critic.forward(&x).unwrap());
    for r in p.rows() {
        assert!((r.sum() - 1.0).abs() < 1e-12 && r.iter().all(|&v| v >= 0.0));
    }
}
