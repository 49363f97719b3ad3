//! Environment definition, validation, exact trajectory probabilities, and
//! seeded episode simulation.
//!
//! Conventions: decision steps are `t = 1..=H`. The fixed dummy start state
//! and dummy observation of step 0 are folded into `init_dist`, so records
//! only ever contain steps `1..=H`. Rewards are always decoded from
//! observations via `reward_decoder` and never stored.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planning::{evaluate_policy, InformedPolicy, Objective};

/// A latent MDP with prospective side information.
///
/// A hidden context `m` is drawn from `mixing` at the start of every episode
/// and stays fixed. A side-information symbol `iota ~ emission[.][m]` is
/// revealed to the agent before the first step. Kernels are stored dense:
/// `transitions[m][s][a][s']`, `obs_kernel[m][s][a][o]`, `emission[iota][m]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LmdpPsi {
    pub num_contexts: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub num_obs: usize,
    pub num_side_info: usize,
    pub horizon: usize,
    /// Probability of each latent context (length M).
    pub mixing: Vec<f64>,
    /// Distribution of the state entered at t = 1, per context (M x S).
    pub init_dist: Vec<Vec<f64>>,
    /// Transition kernels, M x S x A x S.
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    /// Instant observation kernels, M x S x A x O.
    pub obs_kernel: Vec<Vec<Vec<Vec<f64>>>>,
    /// Side-information emission matrix, |I| x M; column m is P(iota | m).
    pub emission: Vec<Vec<f64>>,
    /// Known reward decoder r(o), entries in [-1, 1].
    pub reward_decoder: Vec<f64>,
}

impl LmdpPsi {
    #[inline]
    pub fn trans(&self, m: usize, s: usize, a: usize, s_next: usize) -> f64 {
        self.transitions[m][s][a][s_next]
    }

    #[inline]
    pub fn obs(&self, m: usize, s: usize, a: usize, o: usize) -> f64 {
        self.obs_kernel[m][s][a][o]
    }

    /// Joint probability of observing `o` and moving to `s_next`, given
    /// (m, s, a). With `s_next = None` (the final step, where the successor
    /// state is not part of the trajectory) only the observation factor
    /// remains.
    #[inline]
    pub fn step_factor(&self, m: usize, s: usize, a: usize, o: usize, s_next: Option<usize>) -> f64 {
        let p = self.obs(m, s, a, o);
        match s_next {
            Some(sn) => p * self.trans(m, s, a, sn),
            None => p,
        }
    }

    #[inline]
    pub fn reward(&self, o: usize) -> f64 {
        self.reward_decoder[o]
    }

    /// Expected instant reward at (m, s, a).
    pub fn expected_reward(&self, m: usize, s: usize, a: usize) -> f64 {
        self.obs_kernel[m][s][a]
            .iter()
            .zip(&self.reward_decoder)
            .map(|(p, r)| p * r)
            .sum()
    }

    /// Marginal probability of a side-information symbol.
    pub fn iota_marginal(&self, iota: usize) -> f64 {
        (0..self.num_contexts)
            .map(|m| self.mixing[m] * self.emission[iota][m])
            .sum()
    }

    /// True whether both models share all space sizes and the horizon.
    pub fn same_spaces(&self, other: &LmdpPsi) -> bool {
        self.num_contexts == other.num_contexts
            && self.num_states == other.num_states
            && self.num_actions == other.num_actions
            && self.num_obs == other.num_obs
            && self.num_side_info == other.num_side_info
            && self.horizon == other.horizon
    }

    /// Number of nodes of the full depth-H history tree, used by budget guards.
    pub fn tree_size(&self) -> u64 {
        let branch = (self.num_states * self.num_actions * self.num_obs) as u64;
        let mut total = 1u64;
        for _ in 0..self.horizon {
            total = total.saturating_mul(branch);
        }
        total
    }
}

const SIMPLEX_TOL: f64 = 1e-12;

/// Outcome of structural validation. Empty `issues` means every invariant
/// holds.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

fn check_simplex(issues: &mut Vec<String>, label: &str, row: &[f64], expected_len: usize) {
    if row.len() != expected_len {
        issues.push(format!("{label}: length {} != {expected_len}", row.len()));
        return;
    }
    if let Some(x) = row.iter().find(|x| **x < 0.0) {
        issues.push(format!("{label}: negative entry {x}"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        issues.push(format!("{label}: sums to {sum} (off by {:+.3e})", sum - 1.0));
    }
}

/// Checks every distribution row, reward bounds, shapes, and the column rank
/// of the emission matrix. Report-style: never fails, lists all violations.
pub fn validate_model(theta: &LmdpPsi) -> ValidationReport {
    let mut issues = Vec::new();
    let (m_n, s_n, a_n, o_n, i_n) = (
        theta.num_contexts,
        theta.num_states,
        theta.num_actions,
        theta.num_obs,
        theta.num_side_info,
    );
    if m_n == 0 || s_n == 0 || a_n == 0 || o_n == 0 || i_n == 0 || theta.horizon == 0 {
        issues.push("all space sizes and the horizon must be positive".into());
        return ValidationReport { issues };
    }

    check_simplex(&mut issues, "mixing", &theta.mixing, m_n);

    if theta.init_dist.len() != m_n {
        issues.push(format!("init_dist: {} contexts != {m_n}", theta.init_dist.len()));
    }
    for (m, row) in theta.init_dist.iter().enumerate() {
        check_simplex(&mut issues, &format!("init_dist[{m}]"), row, s_n);
    }

    if theta.transitions.len() != m_n || theta.obs_kernel.len() != m_n {
        issues.push("transitions/obs_kernel: wrong number of contexts".into());
    }
    for m in 0..theta.transitions.len().min(m_n) {
        for s in 0..theta.transitions[m].len() {
            for a in 0..theta.transitions[m][s].len() {
                check_simplex(
                    &mut issues,
                    &format!("transitions[{m}][{s}][{a}]"),
                    &theta.transitions[m][s][a],
                    s_n,
                );
            }
            if theta.transitions[m][s].len() != a_n {
                issues.push(format!("transitions[{m}][{s}]: wrong action count"));
            }
        }
        if theta.transitions[m].len() != s_n {
            issues.push(format!("transitions[{m}]: wrong state count"));
        }
    }
    for m in 0..theta.obs_kernel.len().min(m_n) {
        for s in 0..theta.obs_kernel[m].len() {
            for a in 0..theta.obs_kernel[m][s].len() {
                check_simplex(
                    &mut issues,
                    &format!("obs_kernel[{m}][{s}][{a}]"),
                    &theta.obs_kernel[m][s][a],
                    o_n,
                );
            }
        }
    }

    // Emission columns are per-context distributions over iota.
    if theta.emission.len() != i_n {
        issues.push(format!("emission: {} rows != {i_n}", theta.emission.len()));
    }
    for m in 0..m_n {
        let col: Vec<f64> = theta.emission.iter().map(|row| row[m]).collect();
        check_simplex(&mut issues, &format!("emission column {m}"), &col, i_n);
    }

    if theta.reward_decoder.len() != o_n {
        issues.push(format!(
            "reward_decoder: {} entries != {o_n}",
            theta.reward_decoder.len()
        ));
    }
    for (o, r) in theta.reward_decoder.iter().enumerate() {
        if r.abs() > 1.0 {
            issues.push(format!("reward_decoder[{o}] = {r} outside [-1, 1]"));
        }
    }

    if crate::psr::emission_rank(&theta.emission) < m_n {
        issues.push(format!("emission matrix has column rank < {m_n}"));
    }

    ValidationReport { issues }
}

/// One simulated step: the state occupied, the action taken, the observation
/// received.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub obs: usize,
}

/// A complete episode record. The latent context is kept for diagnostics
/// only; policies never see it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub iota: usize,
    pub latent: usize,
    pub steps: Vec<Step>,
}

impl TrajectoryRecord {
    pub fn total_reward(&self, theta: &LmdpPsi) -> f64 {
        self.steps.iter().map(|st| theta.reward(st.obs)).sum()
    }
}

/// An ordered, finite class of candidate models sharing spaces and horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelClass {
    pub models: Vec<LmdpPsi>,
    pub truth_index: Option<usize>,
}

impl ModelClass {
    pub fn validate(&self) -> Result<()> {
        let first = self
            .models
            .first()
            .ok_or_else(|| Error::Config("model class is empty".into()))?;
        for (i, model) in self.models.iter().enumerate() {
            if !model.same_spaces(first) {
                return Err(Error::SpaceMismatch(format!(
                    "model {i} disagrees with model 0 on spaces or horizon"
                )));
            }
        }
        if let Some(idx) = self.truth_index {
            if idx >= self.models.len() {
                return Err(Error::Config(format!("truth_index {idx} out of range")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

/// Draws an index from a categorical distribution by cdf inversion.
pub fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Guard against rounding in the cdf: fall back to the last positive entry.
    probs
        .iter()
        .rposition(|p| *p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Simulates one episode of `theta` under `policy`. Deterministic given the
/// rng state.
pub fn sample_episode<R: Rng + ?Sized>(
    theta: &LmdpPsi,
    policy: &InformedPolicy,
    rng: &mut R,
) -> TrajectoryRecord {
    let m = sample_categorical(rng, &theta.mixing);
    let iota_col: Vec<f64> = theta.emission.iter().map(|row| row[m]).collect();
    let iota = sample_categorical(rng, &iota_col);
    let mut cursor = policy.cursor(iota);
    let mut state = sample_categorical(rng, &theta.init_dist[m]);
    let mut steps = Vec::with_capacity(theta.horizon);
    for _t in 1..=theta.horizon {
        let dist = cursor.action_distribution(state);
        let action = sample_categorical(rng, &dist);
        let obs = sample_categorical(rng, &theta.obs_kernel[m][state][action]);
        let next = sample_categorical(rng, &theta.transitions[m][state][action]);
        steps.push(Step { state, action, obs });
        cursor.advance(state, action, obs, next);
        state = next;
    }
    TrajectoryRecord { iota, latent: m, steps }
}

/// Policy-free mixture factor of a trajectory: the joint probability of
/// (iota, tau) divided by the policy factor pi(tau). This is what model
/// likelihoods are built from, since the policy factor is shared across
/// models.
pub fn mixture_factor(theta: &LmdpPsi, iota: usize, traj: &TrajectoryRecord) -> f64 {
    debug_assert_eq!(traj.steps.len(), theta.horizon);
    let mut total = 0.0;
    for m in 0..theta.num_contexts {
        let mut w = theta.mixing[m] * theta.emission[iota][m] * theta.init_dist[m][traj.steps[0].state];
        if w == 0.0 {
            continue;
        }
        for (t, step) in traj.steps.iter().enumerate() {
            let s_next = traj.steps.get(t + 1).map(|st| st.state);
            w *= theta.step_factor(m, step.state, step.action, step.obs, s_next);
            if w == 0.0 {
                break;
            }
        }
        total += w;
    }
    total
}

/// Probability that a blind policy produces exactly the recorded action
/// sequence along `traj`.
pub fn policy_factor(policy: &crate::planning::BlindPolicy, traj: &TrajectoryRecord) -> f64 {
    let mut cursor = policy.cursor();
    let mut p = 1.0;
    for (t, step) in traj.steps.iter().enumerate() {
        let dist = cursor.action_distribution(step.state);
        p *= dist[step.action];
        if p == 0.0 {
            return 0.0;
        }
        let next = traj.steps.get(t + 1).map(|st| st.state).unwrap_or(0);
        cursor.advance(step.state, step.action, step.obs, next);
    }
    p
}

/// Exact joint probability of (iota, tau) under a blind policy, by direct
/// latent-mixture enumeration. Summing over every (iota, tau) yields 1.
pub fn trajectory_probability(
    theta: &LmdpPsi,
    policy: &crate::planning::BlindPolicy,
    iota: usize,
    traj: &TrajectoryRecord,
) -> f64 {
    mixture_factor(theta, iota, traj) * policy_factor(policy, traj)
}

/// Exact expected cumulative reward of a policy by full enumeration over the
/// latent context, side information, and trajectory tree.
pub fn value_of_policy(theta: &Arc<LmdpPsi>, policy: &InformedPolicy, budget: u64) -> Result<f64> {
    evaluate_policy(theta, policy, Objective::Value, budget)
}
