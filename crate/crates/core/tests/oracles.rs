//! Cross-module checks against independent oracles: Monte-Carlo agreement
//! for exact probabilities and values, left-inverse independence of the
//! operator route, and the degenerate single-context reductions.

use std::sync::Arc;

use lmdp_psi::env::{sample_episode, trajectory_probability, value_of_policy};
use lmdp_psi::harness::{fixtures, gen};
use lmdp_psi::planning::{
    plan_blind_optimal, plan_informed_optimal, BlindPolicy, Conditioning, InformedPolicy,
};
use lmdp_psi::psr::{
    balanced_left_inverse, build_operators, build_operators_with, emission_matrix, psr_state,
    psr_trajectory_probability, HistoryPrefix, PsrState,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const BUDGET: u64 = 1 << 22;

#[test]
fn trajectory_probability_matches_monte_carlo_frequency() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let theta = Arc::new(gen::random_instance(&mut rng, 2, 2, 2, 2, 2, 2));
    let policy = BlindPolicy::uniform(&theta);
    let informed = InformedPolicy::shared(policy.clone());
    // Pick a moderately likely (iota, trajectory) to keep the standard error
    // informative.
    let probe = sample_episode(&theta, &informed, &mut ChaCha8Rng::seed_from_u64(7));
    let p = trajectory_probability(&theta, &policy, probe.iota, &probe);
    assert!(p > 1e-4, "probe trajectory too rare: {p}");
    let n = 1_000_000usize;
    let mut hits = 0usize;
    for _ in 0..n {
        let traj = sample_episode(&theta, &informed, &mut rng);
        if traj.iota == probe.iota && traj.steps == probe.steps {
            hits += 1;
        }
    }
    let freq = hits as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!(
        (freq - p).abs() <= 3.0 * se,
        "freq {freq} vs exact {p} (3se = {})",
        3.0 * se
    );
}

#[test]
fn policy_value_matches_monte_carlo_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let theta = Arc::new(gen::random_instance(&mut rng, 2, 2, 2, 2, 3, 2));
    let planned = plan_informed_optimal(&theta, Conditioning::FullHistory, BUDGET).unwrap();
    let exact = value_of_policy(&theta, &planned.policy, BUDGET).unwrap();
    assert!((exact - planned.value).abs() <= 1e-10);
    let n = 1_000_000usize;
    let mut total = 0.0;
    let mut total_sq = 0.0;
    for _ in 0..n {
        let r = sample_episode(&theta, &planned.policy, &mut rng).total_reward(&theta);
        total += r;
        total_sq += r * r;
    }
    let mean = total / n as f64;
    let var = (total_sq / n as f64 - mean * mean).max(0.0);
    let se = (var / n as f64).sqrt();
    assert!(
        (mean - exact).abs() <= 3.0 * se,
        "mc mean {mean} vs exact {exact} (3se = {})",
        3.0 * se
    );
}

#[test]
fn single_context_probability_factors_through_the_emission() {
    // With one context the joint probability is the plain MDP trajectory
    // probability times the single emission entry.
    let theta = Arc::new(fixtures::tiny_mdp_instance());
    let policy = BlindPolicy::uniform(&theta);
    for traj in gen::all_trajectories(&theta).into_iter().take(64) {
        let p = trajectory_probability(&theta, &policy, 0, &traj);
        let mut mdp = theta.init_dist[0][traj.steps[0].state];
        for (t, step) in traj.steps.iter().enumerate() {
            let s_next = traj.steps.get(t + 1).map(|st| st.state);
            mdp *= theta.step_factor(0, step.state, step.action, step.obs, s_next);
        }
        let pf = lmdp_psi::env::policy_factor(&policy, &traj);
        assert!((p - mdp * theta.emission[0][0] * pf).abs() <= 1e-15);
    }
}

#[test]
fn trajectory_probabilities_do_not_depend_on_the_left_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let theta = Arc::new(gen::random_instance(&mut rng, 3, 2, 2, 2, 4, 2));
    let emission = emission_matrix(&theta.emission);
    let mp = build_operators(&theta).unwrap();
    let balanced = build_operators_with(
        &theta,
        emission.clone(),
        balanced_left_inverse(&emission).unwrap(),
    );
    let policy = BlindPolicy::uniform(&theta);
    let mut worst = 0.0f64;
    for traj in gen::all_trajectories(&theta) {
        for iota in 0..theta.num_side_info {
            let a = psr_trajectory_probability(&mp, &policy, iota, &traj);
            let b = psr_trajectory_probability(&balanced, &policy, iota, &traj);
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst <= 1e-10, "left-inverse dependence {worst:.3e}");
}

#[test]
fn nonnegative_states_have_consistent_mass() {
    // Sum of coordinates equals the l1 norm whenever the state is entrywise
    // nonnegative.
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let theta = Arc::new(gen::random_instance(&mut rng, 2, 2, 2, 2, 3, 3));
    let ops = build_operators(&theta).unwrap();
    let policy = InformedPolicy::shared(BlindPolicy::uniform(&theta));
    for _ in 0..50 {
        let traj = sample_episode(&theta, &policy, &mut rng);
        let prefix = HistoryPrefix {
            s1: traj.steps[0].state,
            steps: traj
                .steps
                .iter()
                .take(2)
                .zip(traj.steps.iter().skip(1))
                .map(|(cur, next)| (cur.action, cur.obs, next.state))
                .collect(),
        };
        let state = psr_state(&ops, &prefix);
        if state.b.iter().all(|x| *x >= 0.0) {
            let sum: f64 = state.b.iter().sum();
            assert!((sum - state.mass()).abs() <= 1e-12);
        }
    }
}

#[test]
fn blind_equals_informed_for_single_context() {
    let theta = Arc::new(fixtures::tiny_mdp_instance());
    let blind = plan_blind_optimal(&theta, Conditioning::FullHistory, BUDGET).unwrap();
    let informed = plan_informed_optimal(&theta, Conditioning::FullHistory, BUDGET).unwrap();
    assert!((blind.value - informed.value).abs() <= 1e-12);
    // Evaluating the blind policy while ignoring the symbol changes nothing.
    let as_informed = InformedPolicy::shared(blind.policy.clone());
    let v = value_of_policy(&theta, &as_informed, BUDGET).unwrap();
    assert!((v - blind.value).abs() <= 1e-12);
}

#[test]
fn initial_state_of_operators_matches_marginals() {
    let theta = Arc::new(fixtures::mixed_instance());
    let ops = build_operators(&theta).unwrap();
    let init = PsrState::initial(&ops);
    // Coordinates of b0 are the symbol marginals.
    for iota in 0..theta.num_side_info {
        assert!((init.b[iota] - theta.iota_marginal(iota)).abs() <= 1e-12);
    }
}
