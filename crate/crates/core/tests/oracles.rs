//! End-to-end checks against independent oracles: BFS distances, hand
//! rollouts, brute-force recomputation and exhaustive search.

use std::collections::VecDeque;

use trajex_core::agent::{train, value_iteration_oracle, Checkpoint, QTable};
use trajex_core::config::{EnvConfig, GridConfig, LanderConfig, RunConfig, TrainConfig};
use trajex_core::counterfactual::{compare, generate};
use trajex_core::envsim::grid::{LEFT, RIGHT};
use trajex_core::envsim::{Env, TerminalKind, Transition};
use trajex_core::importance::{Analyzer, RadicalKind};
use trajex_core::ranking::{rank, OutcomeRule};
use trajex_core::trajstore::{collect, Dataset, RolloutMode, Trajectory};
use trajex_core::Error;

fn preset(name: &str) -> (Env, String) {
    let cfg = EnvConfig::preset(name).unwrap();
    (Env::from_config(&cfg).unwrap(), cfg.hash())
}

fn oracle(env: &Env, hash: &str, gamma: f64) -> QTable {
    value_iteration_oracle(env, hash, gamma, 1e-12, 100_000).unwrap()
}

/// Shortest-path distance to the goal for every cell, by reverse BFS over
/// the environment's own transition function.
fn bfs_distances(env: &Env) -> Vec<Option<usize>> {
    let n = env.spec().state_count;
    let actions = env.spec().action_count;
    let open = env.open_states();
    let mut dist = vec![None; n];
    let mut queue = VecDeque::new();
    for &s in &open {
        if (0..actions).any(|a| env.transition(s, a).terminal) {
            dist[s] = Some(1);
            queue.push_back(s);
        }
    }
    while let Some(t) = queue.pop_front() {
        for &s in &open {
            if dist[s].is_none() && (0..actions).any(|a| env.transition(s, a).next_state == t && !env.transition(s, a).terminal) {
                dist[s] = Some(dist[t].unwrap() + 1);
                queue.push_back(s);
            }
        }
    }
    dist
}

#[test]
fn value_iteration_matches_bfs_on_grid5() {
    let (env, hash) = preset("grid5");
    let gamma: f64 = 0.9;
    let q = oracle(&env, &hash, gamma);
    let dist = bfs_distances(&env);
    for s in env.open_states() {
        let d = dist[s].expect("every open cell reaches the goal") as i32;
        let expected = -(1.0 - gamma.powi(d)) / (1.0 - gamma);
        assert!((q.max(s) - expected).abs() < 1e-9, "state {s}: {} vs {expected}", q.max(s));
    }
    // start (0,0) to goal (4,0) around the wall column at x = 2
    assert_eq!(dist[env.start_state()], Some(12));
}

#[test]
fn one_by_two_hand_values() {
    let (env, hash) = preset("grid1x2");
    let q = oracle(&env, &hash, 0.9);
    assert!((q.get(0, RIGHT) - -1.0).abs() < 1e-9);
    assert!((q.get(0, LEFT) - -1.9).abs() < 1e-9);

    let cfg = TrainConfig {
        episodes: 200,
        ..TrainConfig::default()
    };
    let learned = train(&env, &cfg, &hash, 1).unwrap().qtable;
    assert!((learned.get(0, RIGHT) - -1.0).abs() < 1e-9);
    assert!((learned.get(0, LEFT) - -1.9).abs() < 1e-9);
}

#[test]
fn one_by_two_counterfactual() {
    let (env, hash) = preset("grid1x2");
    let q = oracle(&env, &hash, 0.9);
    let transitions = env.episode().run_with(|s| q.greedy(s));
    assert_eq!(transitions.len(), 1);
    let original = Trajectory::new("t".into(), 1.0, 0, transitions);
    let set = generate(&env, &q, &hash, &original, None, 0).unwrap();
    assert_eq!(set.rollouts.len(), 3, "three alternatives to `right`");
    let left = set.rollouts.iter().find(|r| r.forced_action == LEFT).unwrap();
    let path: Vec<(usize, usize, usize)> = left
        .trajectory
        .transitions
        .iter()
        .map(|t| (t.state, t.action, t.next_state))
        .collect();
    // the forced `left` bumps the boundary, then greedy `right` reaches the goal
    assert_eq!(left.outcome.length, 2);
    assert_eq!(path, vec![(0, LEFT, 0), (0, RIGHT, 1)]);

    let summary = compare(&set).unwrap();
    let d = summary.deltas.iter().find(|d| d.forced_action == LEFT).unwrap();
    assert_eq!(d.length_delta, 1);
    assert_eq!(d.reward_delta, -1.0);
    assert_eq!(summary.length_dominance, 1.0);
}

#[test]
fn three_by_three_counterfactuals() {
    let (env, hash) = preset("grid3");
    let q = oracle(&env, &hash, 0.9);
    let transitions = env.episode().run_with(|s| q.greedy(s));
    let original = Trajectory::new("opt".into(), 1.0, 0, transitions);
    assert_eq!(original.length, 4);
    let set = generate(&env, &q, &hash, &original, None, 0).unwrap();
    assert_eq!(set.rollouts.len(), 12);
    let dist = bfs_distances(&env);
    for r in &set.rollouts {
        assert!(r.outcome.length >= 4);
        assert_eq!(r.outcome.terminal, TerminalKind::Success);
        let i = r.deviation_step;
        let forced = &r.trajectory.transitions[i];
        // prefix fidelity
        for (a, b) in r.trajectory.transitions[..i].iter().zip(&original.transitions) {
            assert!(a.bit_eq(b));
        }
        let before = dist[forced.state].unwrap();
        let after = if forced.done { 0 } else { dist[forced.next_state].unwrap() };
        if after > before {
            // the forced step leaves every shortest path: a wasted step plus
            // one to undo it
            assert!(r.outcome.length >= 6, "{:?}", r.trajectory.id);
        } else if after == before {
            // a bump against the boundary only wastes the step itself
            assert_eq!(r.outcome.length, 5, "{:?}", r.trajectory.id);
        }
    }
    assert_eq!(compare(&set).unwrap().length_dominance, 1.0);
}

fn three_state_chain() -> (Env, QTable) {
    let cfg = EnvConfig::Grid(GridConfig {
        width: 3,
        height: 1,
        start: [0, 0],
        goal: [2, 0],
        walls: vec![],
        max_steps: 10,
    });
    let env = Env::from_config(&cfg).unwrap();
    let q = QTable::from_rows(
        &[
            vec![-2.71, -2.71, -2.71, -1.9],
            vec![-1.9, -1.9, -2.71, -1.0],
            vec![0.0, 0.0, 0.0, 0.0],
        ],
        0.9,
    )
    .unwrap();
    (env, q)
}

#[test]
fn vgoal_on_a_three_state_chain() {
    let (env, q) = three_state_chain();
    let traj = Trajectory::new(
        "chain".into(),
        1.0,
        0,
        vec![
            Transition { state: 0, action: RIGHT, reward: -1.0, next_state: 1, done: false },
            Transition { state: 1, action: RIGHT, reward: -1.0, next_state: 2, done: true },
        ],
    );
    let analyzer = Analyzer::new(&env, &q, 1.0);
    let b = analyzer.trajectory_importance(&traj, &RadicalKind::VGoal).unwrap();
    // V = [-1.9, -1.0, 0]; s_final is state 1, the last state acted in
    assert_eq!(b.final_state, 1);
    let dq = [-1.9 - -2.71, -1.0 - -2.71];
    let radical = [1.9, 1.0];
    for i in 0..2 {
        assert!((b.steps[i].delta_q - dq[i]).abs() < 1e-9);
        assert!((b.steps[i].radical - radical[i]).abs() < 1e-9);
        assert!(!b.steps[i].fallback);
    }
    let expected = (0.81 * 1.9 + 1.71 * 1.0) / 2.0;
    assert!((b.i_tau - expected).abs() < 1e-9, "{} vs {expected}", b.i_tau);
    assert!((b.i_tau - 1.6245).abs() < 1e-9);

    // anchoring on the goal itself hits the guard and falls back to VNorm
    let goal_anchor = analyzer.radical(&RadicalKind::VGoal, &traj.transitions[0], 2).unwrap();
    assert!(goal_anchor.fallback);
    assert!((goal_anchor.value - (-1.9 - -1.9) / (0.0 - -1.9)).abs() < 1e-12);
}

/// Independent implementation of every standard radical, straight from the
/// definitions and without the library's helpers.
fn brute_force_radical(env: &Env, q: &QTable, kind: &RadicalKind, t: &Transition, s_final: usize) -> f64 {
    let row: Vec<f64> = (0..q.action_count()).map(|a| q.get(t.state, a)).collect();
    let n = row.len() as f64;
    let v = |s: usize| (0..q.action_count()).map(|a| q.get(s, a)).fold(f64::NEG_INFINITY, f64::max);
    let all_v: Vec<f64> = (0..q.state_count()).map(v).collect();
    let v_min = all_v.iter().cloned().fold(f64::INFINITY, f64::min);
    let v_max = all_v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let vnorm = |s: usize| if v_max > v_min { (v(s) - v_min) / (v_max - v_min) } else { 0.0 };
    match kind {
        RadicalKind::Classic => 1.0,
        RadicalKind::NaiveNorm => {
            let mu = row.iter().sum::<f64>() / n;
            let sd = (row.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n).sqrt();
            if sd < 1e-12 { 0.0 } else { (row[t.action] - mu) / sd }
        }
        RadicalKind::BellmanError => {
            let terminal = env.transition(t.state, t.action).terminal;
            let boot = if terminal { 0.0 } else { v(t.next_state) };
            (row[t.action] - (t.reward + q.gamma() * boot)).abs()
        }
        RadicalKind::Entropy => {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|x| (x - m).exp()).sum();
            let h: f64 = row
                .iter()
                .map(|x| (x - m).exp() / z)
                .filter(|&p| p > 0.0)
                .map(|p| -p * p.ln())
                .sum();
            1.0 - h / n.ln()
        }
        RadicalKind::VNorm => vnorm(t.state),
        RadicalKind::VGoal => {
            let vf = v(s_final);
            if vf.abs() < 1e-6 { vnorm(t.state) } else { (v(t.state) / vf).abs() }
        }
        RadicalKind::Kl(_) => unreachable!(),
    }
}

fn brute_force_score(env: &Env, q: &QTable, kind: &RadicalKind, traj: &Trajectory) -> f64 {
    let s_final = traj.transitions.last().unwrap().state;
    let mut total = 0.0;
    for t in &traj.transitions {
        let row: Vec<f64> = (0..q.action_count()).map(|a| q.get(t.state, a)).collect();
        let dq = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - row.iter().cloned().fold(f64::INFINITY, f64::min);
        total += dq * brute_force_radical(env, q, kind, t, s_final);
    }
    total / traj.transitions.len() as f64
}

fn grid5_run(seed: u64, episodes_per_checkpoint: usize) -> (Env, String, QTable, Dataset) {
    let cfg = RunConfig::for_preset("grid5").unwrap();
    let env = Env::from_config(&cfg.env).unwrap();
    let hash = cfg.env.hash();
    let out = train(&env, &cfg.train, &hash, seed).unwrap();
    let ds = collect(
        &env,
        &out.checkpoints,
        &out.qtable,
        episodes_per_checkpoint,
        RolloutMode::EpsilonGreedy(0.1),
        seed,
    )
    .unwrap();
    (env, hash, out.qtable, ds)
}

#[test]
fn ten_step_breakdown_matches_brute_force() {
    let (env, hash) = preset("grid5");
    let q = {
        // a partially trained table, so no radical is degenerate everywhere
        let cfg = TrainConfig {
            episodes: 60,
            ..TrainConfig::default()
        };
        train(&env, &cfg, &hash, 3).unwrap().qtable
    };
    // a fixed 10-step walk: down x4, right x2 (one bump into the wall), up x4
    let actions = [1, 1, 1, 1, 3, 3, 3, 0, 0, 0];
    let mut ep = env.episode();
    let transitions: Vec<Transition> = actions.iter().map(|&a| ep.step(a).unwrap()).collect();
    let traj = Trajectory::new("walk".into(), 1.0, 0, transitions);
    assert_eq!(traj.length, 10);
    let analyzer = Analyzer::new(&env, &q, 1.0);
    for kind in RadicalKind::STANDARD.iter() {
        let b = analyzer.trajectory_importance(&traj, kind).unwrap();
        let s_final = traj.transitions[9].state;
        for (i, step) in b.steps.iter().enumerate() {
            let want = brute_force_radical(&env, &q, kind, &traj.transitions[i], s_final);
            assert!((step.radical - want).abs() < 1e-9, "{kind} step {i}: {} vs {want}", step.radical);
            assert_eq!(step.product.to_bits(), (step.delta_q * step.radical).to_bits());
        }
        let want = brute_force_score(&env, &q, kind, &traj);
        assert!((b.i_tau - want).abs() < 1e-9, "{kind}: {} vs {want}", b.i_tau);
    }
}

#[test]
fn ranking_matches_an_independent_sort() {
    let (env, _, q, ds) = grid5_run(21, 10);
    assert_eq!(ds.trajectories.len(), 50);
    let analyzer = Analyzer::new(&env, &q, 1.0);
    for kind in RadicalKind::STANDARD.iter() {
        let report = rank(&analyzer, &ds, kind, 5, OutcomeRule::RewardThenLength).unwrap();
        let mut scored: Vec<(f64, usize)> = ds
            .trajectories
            .iter()
            .enumerate()
            .map(|(i, t)| (brute_force_score(&env, &q, kind, t), i))
            .collect();
        for e in &report.entries {
            assert!((e.score - scored[e.index].0).abs() < 1e-9, "{kind} {}", e.index);
        }
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        // scores equal within rounding may order differently, so compare the
        // orders only where neighbours are clearly separated
        for (pos, e) in report.entries.iter().enumerate() {
            let (s, i) = scored[pos];
            if e.index != i {
                assert!((e.score - s).abs() < 1e-9, "{kind} position {pos}");
            }
        }
        let top: Vec<&Trajectory> = report.entries[..5].iter().map(|e| &ds.trajectories[e.index]).collect();
        let avg = top.iter().map(|t| t.length as f64).sum::<f64>() / 5.0;
        assert_eq!(avg, report.avg_length);
        let best = top
            .iter()
            .max_by(|a, b| a.total_reward.total_cmp(&b.total_reward).then(b.length.cmp(&a.length)))
            .unwrap();
        assert_eq!(ds.get(&report.selected_id).unwrap().total_reward, best.total_reward);
    }
}

/// Best discounted return from `s` with `steps` steps left, by exhaustive
/// recursion with memoisation over (state, steps left).
fn best_return(env: &Env, gamma: f64, s: usize, steps: usize, memo: &mut Vec<Vec<Option<f64>>>) -> f64 {
    if steps == 0 {
        return 0.0;
    }
    if let Some(v) = memo[s][steps] {
        return v;
    }
    let mut best = f64::NEG_INFINITY;
    for a in 0..env.spec().action_count {
        let out = env.transition(s, a);
        let tail = if out.terminal { 0.0 } else { best_return(env, gamma, out.next_state, steps - 1, memo) };
        best = best.max(out.reward + gamma * tail);
    }
    memo[s][steps] = Some(best);
    best
}

#[test]
fn lander_value_iteration_matches_exhaustive_search() {
    let (env, hash) = preset("lander");
    let gamma = 0.99;
    let q = oracle(&env, &hash, gamma);
    let max_steps = env.spec().max_steps;
    let mut memo = vec![vec![None; max_steps + 1]; env.spec().state_count];
    let searched = best_return(&env, gamma, env.start_state(), max_steps, &mut memo);
    let v = q.max(env.start_state());
    assert!((v - searched).abs() < 1e-6, "VI {v} vs search {searched}");

    let transitions = env.episode().run_with(|s| q.greedy(s));
    assert_eq!(env.terminal_kind(&transitions), TerminalKind::Success);
    let discounted = transitions.iter().rev().fold(0.0, |acc, t| t.reward + gamma * acc);
    assert!((discounted - v).abs() < 1e-6);
    assert!(transitions.last().unwrap().reward == 100.0);
}

#[test]
fn lander_trained_policy_lands() {
    let cfg = RunConfig::for_preset("lander").unwrap();
    let env = Env::from_config(&cfg.env).unwrap();
    let out = train(&env, &cfg.train, &cfg.env.hash(), 5).unwrap();
    let transitions = env.episode().run_with(|s| out.qtable.greedy(s));
    assert_eq!(env.terminal_kind(&transitions), TerminalKind::Success);
}

#[test]
fn thousand_trajectories_round_trip() {
    let (env, hash, q, ds) = grid5_run(8, 200);
    assert_eq!(ds.trajectories.len(), 1000);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.traj.jsonl");
    ds.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let loaded = Dataset::load(&path).unwrap();
    loaded.check_against(&env, &hash, &q).unwrap();
    assert_eq!(loaded, ds);
    for (a, b) in loaded.trajectories.iter().zip(&ds.trajectories) {
        assert_eq!(a.total_reward.to_bits(), b.total_reward.to_bits());
        assert!(a.transitions.iter().zip(&b.transitions).all(|(x, y)| x.bit_eq(y)));
    }
    let mut again = Vec::new();
    loaded.write_to(&mut again).unwrap();
    assert_eq!(again, bytes, "re-serialisation is byte-identical");
}

#[test]
fn truncated_final_line_names_the_line() {
    let (_, _, _, ds) = grid5_run(9, 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.traj.jsonl");
    ds.save(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let cut = text.trim_end().len() - 25;
    std::fs::write(&path, &text[..cut]).unwrap();
    match Dataset::load(&path) {
        Err(Error::Malformed { line, .. }) => assert_eq!(line, ds.trajectories.len() + 1),
        other => panic!("expected a malformed-line error, got {other:?}"),
    }
}

#[test]
fn checkpoint_spread_in_a_mixed_dataset() {
    let (env, hash) = preset("grid5");
    let cfg = TrainConfig {
        checkpoints: vec![0.01, 1.0],
        ..TrainConfig::default()
    };
    let out = train(&env, &cfg, &hash, 4).unwrap();
    let ds = collect(&env, &out.checkpoints, &out.qtable, 20, RolloutMode::Greedy, 4).unwrap();
    let lengths: Vec<usize> = ds.trajectories.iter().map(|t| t.length).collect();
    assert!(lengths.iter().max() > lengths.iter().min());
}

#[test]
fn converged_greedy_dataset_is_uniform() {
    let (env, hash) = preset("grid3");
    let q = oracle(&env, &hash, 0.9);
    let ck = [Checkpoint { fraction: 1.0, qtable: q.clone() }];
    let ds = collect(&env, &ck, &q, 10, RolloutMode::Greedy, 0).unwrap();
    assert!(ds.trajectories.iter().all(|t| t.length == 4));
    assert!(ds
        .trajectories
        .iter()
        .all(|t| t.transitions.iter().zip(&ds.trajectories[0].transitions).all(|(a, b)| a.bit_eq(b))));
}

#[test]
fn lander_presets_reject_impossible_physics() {
    let cfg = EnvConfig::Lander(LanderConfig {
        thrust: 0.5,
        gravity: 1.0,
        ..LanderConfig::default()
    });
    assert!(Env::from_config(&cfg).is_err());
}
