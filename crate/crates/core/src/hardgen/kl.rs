//! Exact KL oracles over the adversarial family: the conditional trajectory
//! KL between a family member and the reference model under a fixed action
//! plan, and the information-count identity that ties per-plan conditional
//! KLs to the joint KL of a multi-episode exploration strategy.
//!
//! Probabilities are accumulated as exact rationals from the builders'
//! rational kernels; a logarithm is only taken at the leaves, so outcomes on
//! which the two models agree algebraically contribute exactly zero.

use std::collections::HashMap;

use num_traits::{One, ToPrimitive, Zero};

use super::rational::{Rat, RationalLmdp};
use super::HardModel;
use crate::error::{Error, Result};

/// An exploration strategy for the identity check: at the start of each
/// episode, given all completed episodes and the current side-information
/// symbol, it commits to an initial action and a full control sequence.
/// Plans are open-loop within an episode (adaptation happens across
/// episodes and on the symbol), which is the regime in which the
/// information-count identity is exact.
pub trait ExplorationStrategy {
    /// Returns (initial action id, control-block indices for the chain
    /// steps).
    fn plan(&self, past: &[EpisodeOutcome], iota: usize) -> (usize, Vec<usize>);
}

/// A completed episode as seen by a strategy.
#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub iota: usize,
    pub a0: usize,
    pub seq: Vec<usize>,
    pub states: Vec<usize>,
    pub obs: Vec<usize>,
}

impl EpisodeOutcome {
    /// Total decoded reward with the family's 0/1 decoder.
    pub fn reward(&self) -> f64 {
        self.obs.iter().map(|o| *o as f64).sum()
    }
}

/// Plays the same plan every episode.
pub struct FixedPlanStrategy {
    pub a0: usize,
    pub seq: Vec<usize>,
}

impl ExplorationStrategy for FixedPlanStrategy {
    fn plan(&self, _past: &[EpisodeOutcome], _iota: usize) -> (usize, Vec<usize>) {
        (self.a0, self.seq.clone())
    }
}

/// Adaptive across episodes: switches the control sequence once any reward
/// has been observed.
pub struct RewardSwitchingStrategy {
    pub a0: usize,
    pub seq_initial: Vec<usize>,
    pub seq_after_reward: Vec<usize>,
}

impl ExplorationStrategy for RewardSwitchingStrategy {
    fn plan(&self, past: &[EpisodeOutcome], _iota: usize) -> (usize, Vec<usize>) {
        let saw_reward = past.iter().any(|ep| ep.reward() > 0.0);
        if saw_reward {
            (self.a0, self.seq_after_reward.clone())
        } else {
            (self.a0, self.seq_initial.clone())
        }
    }
}

fn check_compatible(theta0: &HardModel, theta: &HardModel) -> Result<()> {
    if !theta0.lmdp.same_spaces(&theta.lmdp) {
        return Err(Error::SpaceMismatch(
            "conditional KL requires models built from one spec".into(),
        ));
    }
    if theta0.exact.emission != theta.exact.emission {
        return Err(Error::SpaceMismatch(
            "models must share the emission assignment".into(),
        ));
    }
    Ok(())
}

/// Absolute action ids per decision step for (initial action, control
/// sequence).
fn action_plan(model: &HardModel, a0: usize, seq: &[usize]) -> Result<Vec<usize>> {
    let spec = &model.spec;
    if a0 >= spec.num_actions() {
        return Err(Error::Config(format!("initial action {a0} out of range")));
    }
    if seq.len() != spec.chain_len() {
        return Err(Error::Config(format!(
            "control sequence must have {} entries, got {}",
            spec.chain_len(),
            seq.len()
        )));
    }
    if seq.iter().any(|j| *j >= spec.control_actions) {
        return Err(Error::Config("control index out of range".into()));
    }
    let mut plan = Vec::with_capacity(spec.horizon());
    plan.push(a0);
    plan.extend(seq.iter().map(|j| spec.control_action(*j)));
    Ok(plan)
}

/// Exact KL between the conditional trajectory distributions of the
/// reference model and a family member, given the side-information symbol
/// and an open-loop action plan. `seq` holds control-block indices. Zero is
/// exact: outcome probabilities are compared as rationals before any
/// floating-point logarithm.
pub fn conditional_kl(
    theta0: &HardModel,
    theta: &HardModel,
    iota: usize,
    a0: usize,
    seq: &[usize],
) -> Result<f64> {
    check_compatible(theta0, theta)?;
    let plan = action_plan(theta0, a0, seq)?;
    let e0 = &theta0.exact;
    let e1 = &theta.exact;
    let Some(w0) = e0.posterior_given_iota(iota) else {
        return Ok(0.0); // symbol has zero marginal probability
    };
    let w1 = e1.posterior_given_iota(iota).expect("shared emission");
    let mut kl = 0.0;
    let mut paths = 0u64;
    kl_walk(e0, e1, &plan, 1, super::HardInstanceSpec::S_INIT, &w0, &w1, &mut kl, &mut paths);
    Ok(kl)
}

#[allow(clippy::too_many_arguments)]
fn kl_walk(
    e0: &RationalLmdp,
    e1: &RationalLmdp,
    plan: &[usize],
    t: usize,
    s: usize,
    w0: &[Rat],
    w1: &[Rat],
    kl: &mut f64,
    paths: &mut u64,
) {
    let a = plan[t - 1];
    for o in 0..e0.num_obs {
        if t == e0.horizon {
            let p0: Rat = (0..e0.num_contexts)
                .map(|m| &w0[m] * e0.step_factor(m, s, a, o, None))
                .sum();
            let p1: Rat = (0..e1.num_contexts)
                .map(|m| &w1[m] * e1.step_factor(m, s, a, o, None))
                .sum();
            *paths += 1;
            *kl += leaf_term(&p0, &p1);
            continue;
        }
        for s_next in 0..e0.num_states {
            let n0: Vec<Rat> = (0..e0.num_contexts)
                .map(|m| &w0[m] * e0.step_factor(m, s, a, o, Some(s_next)))
                .collect();
            let n1: Vec<Rat> = (0..e1.num_contexts)
                .map(|m| &w1[m] * e1.step_factor(m, s, a, o, Some(s_next)))
                .collect();
            let z0 = n0.iter().any(|x| !x.is_zero());
            let z1 = n1.iter().any(|x| !x.is_zero());
            if !z0 && !z1 {
                continue;
            }
            kl_walk(e0, e1, plan, t + 1, s_next, &n0, &n1, kl, paths);
        }
    }
}

/// KL contribution of one disjoint outcome: exactly zero when the rational
/// probabilities coincide, infinite on support violation.
fn leaf_term(p0: &Rat, p1: &Rat) -> f64 {
    if p0.is_zero() {
        return 0.0;
    }
    if p1.is_zero() {
        return f64::INFINITY;
    }
    if p0 == p1 {
        return 0.0;
    }
    let ratio = (p0 / p1).to_f64().expect("finite ratio");
    p0.to_f64().expect("finite probability") * ratio.ln()
}

/// Both sides of the information-count identity for a K-episode adaptive
/// strategy: the left side weights per-plan conditional KLs by expected
/// exploration counts under the reference model; the right side is the KL
/// between the joint K-episode outcome distributions. Exact enumeration over
/// every outcome sequence; errs out above `max_leaves` leaves.
pub fn kl_chain_identity_check(
    theta0: &HardModel,
    theta: &HardModel,
    strategy: &dyn ExplorationStrategy,
    episodes: usize,
    max_leaves: u64,
) -> Result<(f64, f64)> {
    check_compatible(theta0, theta)?;
    let mut ctx = IdentityCtx {
        theta0,
        theta,
        strategy,
        episodes,
        max_leaves,
        leaves: 0,
        rhs: 0.0,
        counts: HashMap::new(),
    };
    let mut past = Vec::new();
    ctx.episode_level(&mut past, 0, Rat::one(), Rat::one())?;

    let mut lhs = 0.0;
    let mut kl_cache: HashMap<(usize, Vec<usize>), f64> = HashMap::new();
    let counts = std::mem::take(&mut ctx.counts);
    for ((iota, seq), weight) in counts {
        let kl = match kl_cache.get(&(iota, seq.clone())) {
            Some(kl) => *kl,
            None => {
                let kl = conditional_kl(theta0, theta, iota, theta0.spec.explore_action(), &seq)?;
                kl_cache.insert((iota, seq.clone()), kl);
                kl
            }
        };
        lhs += weight.to_f64().expect("finite weight") * kl;
    }
    Ok((lhs, ctx.rhs))
}

struct IdentityCtx<'a> {
    theta0: &'a HardModel,
    theta: &'a HardModel,
    strategy: &'a dyn ExplorationStrategy,
    episodes: usize,
    max_leaves: u64,
    leaves: u64,
    rhs: f64,
    /// Expected number of episodes with the explore test (iota, plan),
    /// under the reference model.
    counts: HashMap<(usize, Vec<usize>), Rat>,
}

impl IdentityCtx<'_> {
    fn episode_level(
        &mut self,
        past: &mut Vec<EpisodeOutcome>,
        k: usize,
        p0_acc: Rat,
        ratio_acc: Rat,
    ) -> Result<()> {
        if k == self.episodes {
            self.leaves += 1;
            if self.leaves > self.max_leaves {
                return Err(Error::Budget { needed: self.leaves, limit: self.max_leaves });
            }
            if !p0_acc.is_zero() && ratio_acc != Rat::one() {
                let ratio = ratio_acc.to_f64().expect("finite ratio");
                self.rhs += p0_acc.to_f64().expect("finite probability") * ratio.ln();
            }
            return Ok(());
        }
        let spec = self.theta0.spec.clone();
        for iota in 0..spec.num_side_info() {
            let p_iota = self.theta0.exact.iota_marginal(iota);
            if p_iota.is_zero() {
                continue;
            }
            let (a0, seq) = self.strategy.plan(past, iota);
            let plan = action_plan(self.theta0, a0, &seq)?;
            if a0 == spec.explore_action() {
                let entry = self
                    .counts
                    .entry((iota, seq.clone()))
                    .or_insert_with(Rat::zero);
                *entry += &p0_acc * &p_iota;
            }
            let w0 = self.theta0.exact.posterior_given_iota(iota).expect("positive marginal");
            let w1 = self.theta.exact.posterior_given_iota(iota).expect("shared emission");
            let mut episode_paths = Vec::new();
            enumerate_paths(
                &self.theta0.exact,
                &self.theta.exact,
                &plan,
                1,
                super::HardInstanceSpec::S_INIT,
                &w0,
                &w1,
                &mut vec![super::HardInstanceSpec::S_INIT],
                &mut Vec::new(),
                &mut episode_paths,
            );
            for (states, obs, q0, q1) in episode_paths {
                if q0.is_zero() {
                    continue; // measure-zero under the reference model
                }
                if q1.is_zero() {
                    self.rhs = f64::INFINITY;
                    continue;
                }
                past.push(EpisodeOutcome { iota, a0, seq: seq.clone(), states, obs });
                let p0_next = &p0_acc * &p_iota * &q0;
                let ratio_next = &ratio_acc * (&q0 / &q1);
                self.episode_level(past, k + 1, p0_next, ratio_next)?;
                past.pop();
            }
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn enumerate_paths(
    e0: &RationalLmdp,
    e1: &RationalLmdp,
    plan: &[usize],
    t: usize,
    s: usize,
    w0: &[Rat],
    w1: &[Rat],
    states: &mut Vec<usize>,
    obs: &mut Vec<usize>,
    out: &mut Vec<(Vec<usize>, Vec<usize>, Rat, Rat)>,
) {
    let a = plan[t - 1];
    for o in 0..e0.num_obs {
        if t == e0.horizon {
            let p0: Rat = (0..e0.num_contexts)
                .map(|m| &w0[m] * e0.step_factor(m, s, a, o, None))
                .sum();
            let p1: Rat = (0..e1.num_contexts)
                .map(|m| &w1[m] * e1.step_factor(m, s, a, o, None))
                .sum();
            if p0.is_zero() && p1.is_zero() {
                continue;
            }
            obs.push(o);
            out.push((states.clone(), obs.clone(), p0, p1));
            obs.pop();
            continue;
        }
        for s_next in 0..e0.num_states {
            let n0: Vec<Rat> = (0..e0.num_contexts)
                .map(|m| &w0[m] * e0.step_factor(m, s, a, o, Some(s_next)))
                .collect();
            let n1: Vec<Rat> = (0..e1.num_contexts)
                .map(|m| &w1[m] * e1.step_factor(m, s, a, o, Some(s_next)))
                .collect();
            if n0.iter().all(|x| x.is_zero()) && n1.iter().all(|x| x.is_zero()) {
                continue;
            }
            states.push(s_next);
            obs.push(o);
            enumerate_paths(e0, e1, plan, t + 1, s_next, &n0, &n1, states, obs, out);
            obs.pop();
            states.pop();
        }
    }
}
