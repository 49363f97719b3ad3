//! Generator for the adversarial instance family used by the lower-bound
//! experiments: a reference model plus a family of chain instances that are
//! distinguishable only through rare, weakly informative events, with exact
//! KL oracles and an emission-separation certifier.
//!
//! Layout conventions (all indices zero-based):
//! - contexts: `0..d` learn group, `d..2d` confuser group, `2d..4d`
//!   observable group, where `d = M/4`;
//! - states: 0 start, 1 sink, 2 pay (one-step delayed Bernoulli reward),
//!   `3..3+d` hard chain, `3+d..3+2d` reference chain;
//! - actions: explore block, then one exploit action per observable context,
//!   then the control block;
//! - observations: 0 decodes to reward 0, 1 to reward 1;
//! - side info: `M` equal blocks of `alphabet` symbols, then the
//!   uninformative symbol last.
//!
//! Probabilistic chain deaths pay their Bernoulli(1/8) reward one step after
//! the death transition, from the dedicated pay state: observations depend
//! on (state, action) only, so a reward correlated with the destination
//! cannot be emitted on the transition itself. The final chain step is a
//! certain death and pays directly. This shifts where the reward sits in the
//! record without changing the joint law of (state path, rewards).

mod alpha;
mod kl;
mod rational;

pub use alpha::{effective_alpha, effective_alpha_with_witness, sampled_alpha, AlphaEff};
pub use kl::{
    conditional_kl, kl_chain_identity_check, EpisodeOutcome, ExplorationStrategy,
    FixedPlanStrategy, RewardSwitchingStrategy,
};
pub use rational::{decimal_rational, rat, Rat, RationalLmdp};

use std::sync::Arc;

use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::LmdpPsi;
use crate::error::{Error, Result};

/// Parameters of the family. The optimal control sequence and the true
/// explore action are inputs, so the whole family can be realized by
/// enumerating them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HardInstanceSpec {
    /// Number of latent contexts M; a multiple of 4, at least 8.
    pub num_contexts: usize,
    /// Size of the explore action block (contains the true explore action).
    pub explore_actions: usize,
    /// Size of the control action block.
    pub control_actions: usize,
    /// Per-group side-information alphabet size.
    pub alphabet: usize,
    /// Target separation scale of the emission perturbation.
    pub alpha: f64,
    /// Construction gap parameter in (0, 1/4).
    pub epsilon: f64,
    /// Optimal control sequence, one entry per chain step, as indices into
    /// the control block.
    pub optimal_seq: Vec<usize>,
    /// The true explore action, as an index into the explore block.
    pub true_explore: usize,
}

impl HardInstanceSpec {
    pub fn chain_len(&self) -> usize {
        self.num_contexts / 4
    }

    pub fn horizon(&self) -> usize {
        self.chain_len() + 1
    }

    pub fn num_states(&self) -> usize {
        3 + 2 * self.chain_len()
    }

    pub fn num_actions(&self) -> usize {
        self.explore_actions + self.num_contexts / 2 + self.control_actions
    }

    pub fn num_side_info(&self) -> usize {
        self.num_contexts * self.alphabet + 1
    }

    pub const S_INIT: usize = 0;
    pub const S_SINK: usize = 1;
    pub const S_PAY: usize = 2;

    /// Hard-chain state at chain position t (1-based).
    pub fn hard_state(&self, t: usize) -> usize {
        2 + t
    }

    /// Reference-chain state at chain position t (1-based).
    pub fn ref_state(&self, t: usize) -> usize {
        2 + self.chain_len() + t
    }

    pub fn iota_hard(&self) -> usize {
        self.num_contexts * self.alphabet
    }

    /// Absolute action id of the true explore action.
    pub fn explore_action(&self) -> usize {
        self.true_explore
    }

    pub fn is_explore_action(&self, a: usize) -> bool {
        a < self.explore_actions
    }

    /// Exploit action for the observable context `2d + rel`.
    pub fn exploit_action(&self, rel: usize) -> usize {
        self.explore_actions + rel
    }

    /// Control-block index of an action, if it is a control action.
    pub fn control_index(&self, a: usize) -> Option<usize> {
        let base = self.explore_actions + self.num_contexts / 2;
        (a >= base).then(|| a - base)
    }

    pub fn control_action(&self, j: usize) -> usize {
        self.explore_actions + self.num_contexts / 2 + j
    }

    /// Absolute action ids of the optimal control sequence.
    pub fn optimal_actions(&self) -> Vec<usize> {
        self.optimal_seq.iter().map(|j| self.control_action(*j)).collect()
    }

    pub fn is_learn_context(&self, m: usize) -> bool {
        m < self.chain_len()
    }

    pub fn is_confuser_context(&self, m: usize) -> bool {
        m >= self.chain_len() && m < 2 * self.chain_len()
    }

    pub fn is_observable_context(&self, m: usize) -> bool {
        m >= self.num_contexts / 2
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.num_contexts;
        if m < 8 || m % 4 != 0 {
            return Err(Error::Config(format!(
                "num_contexts must be a multiple of 4 and at least 8, got {m}"
            )));
        }
        if !(0.0 < self.epsilon && self.epsilon < 0.25) {
            return Err(Error::Config(format!(
                "epsilon must lie in (0, 1/4), got {}",
                self.epsilon
            )));
        }
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.explore_actions == 0 || self.control_actions == 0 || self.alphabet == 0 {
            return Err(Error::Config("action blocks and alphabet must be nonempty".into()));
        }
        if self.true_explore >= self.explore_actions {
            return Err(Error::Config("true_explore outside the explore block".into()));
        }
        if self.optimal_seq.len() != self.chain_len() {
            return Err(Error::Config(format!(
                "optimal_seq must have one entry per chain step ({}), got {}",
                self.chain_len(),
                self.optimal_seq.len()
            )));
        }
        if self.optimal_seq.iter().any(|j| *j >= self.control_actions) {
            return Err(Error::Config("optimal_seq entry outside the control block".into()));
        }
        Ok(())
    }

    /// Non-fatal regime notes. The minimax statement assumes alpha below
    /// 1/(256 sqrt(M)); instances outside that regime are still well formed
    /// and are built with a warning.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let bound = 1.0 / (256.0 * (self.num_contexts as f64).sqrt());
        if self.alpha >= bound {
            out.push(format!(
                "alpha = {} is outside the minimax regime (alpha < {bound:.3e})",
                self.alpha
            ));
        }
        out
    }
}

/// The sampled emission perturbation signs and their certification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmissionAssignment {
    /// signs[flat_symbol][learn_or_confuser_context], flat symbols running
    /// over the first M/2 blocks.
    pub signs: Vec<Vec<i8>>,
    pub alpha_eff: f64,
    pub certified: bool,
    /// Number of draws used (1 means the first sample was accepted).
    pub resamples: usize,
    /// Minimizing direction of the separation program.
    pub witness: Option<Vec<f64>>,
}

/// Acceptance threshold for sampled assignments.
pub fn assignment_threshold(spec: &HardInstanceSpec) -> f64 {
    spec.alpha / (128.0 * (spec.num_contexts as f64).sqrt())
}

/// Draws independent uniform signs and keeps resampling until the measured
/// emission separation clears the threshold.
pub fn sample_emission_assignment<R: Rng + ?Sized>(
    spec: &HardInstanceSpec,
    rng: &mut R,
    max_attempts: usize,
) -> Result<EmissionAssignment> {
    spec.validate()?;
    let threshold = assignment_threshold(spec);
    let rows = (spec.num_contexts / 2) * spec.alphabet;
    let cols = spec.num_contexts / 2;
    for attempt in 1..=max_attempts {
        let signs: Vec<Vec<i8>> = (0..rows)
            .map(|_| (0..cols).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect())
            .collect();
        let emission = exact_emission(spec, &signs);
        let emission_f64: Vec<Vec<f64>> = emission
            .iter()
            .map(|row| row.iter().map(|r| r.to_f64().unwrap()).collect())
            .collect();
        let (alpha_eff, witness) = effective_alpha_with_witness(&emission_f64);
        if alpha_eff.value() >= threshold {
            return Ok(EmissionAssignment {
                signs,
                alpha_eff: alpha_eff.value(),
                certified: alpha_eff.is_certified(),
                resamples: attempt,
                witness,
            });
        }
    }
    Err(Error::AssignmentRetriesExceeded { threshold, attempts: max_attempts })
}

/// A built family member: the exact rational kernels plus their f64
/// rounding.
#[derive(Debug, Clone)]
pub struct HardModel {
    pub spec: HardInstanceSpec,
    pub exact: RationalLmdp,
    pub lmdp: Arc<LmdpPsi>,
    pub is_reference: bool,
}

/// Builds the family member determined by the spec's optimal sequence and
/// true explore action.
pub fn build_hard_instance(spec: &HardInstanceSpec, assignment: &EmissionAssignment) -> Result<HardModel> {
    build(spec, assignment, false)
}

/// Builds the reference model: the hard chain behaves exactly like the
/// reference chain everywhere, and the explore block routes the learn group
/// to the reference chain and the confuser group to the hard chain
/// deterministically.
pub fn build_reference(spec: &HardInstanceSpec, assignment: &EmissionAssignment) -> Result<HardModel> {
    build(spec, assignment, true)
}

fn delta_row(len: usize, idx: usize) -> Vec<Rat> {
    let mut row = vec![Rat::zero(); len];
    row[idx] = Rat::one();
    row
}

fn split_row(len: usize, a: usize, pa: Rat, b: usize, pb: Rat) -> Vec<Rat> {
    let mut row = vec![Rat::zero(); len];
    row[a] = pa;
    row[b] = pb;
    row
}

fn exact_emission(spec: &HardInstanceSpec, signs: &[Vec<i8>]) -> Vec<Vec<Rat>> {
    let m_total = spec.num_contexts;
    let n = spec.alphabet;
    let half = m_total / 2;
    let n_i = spec.num_side_info();
    let alpha = decimal_rational(spec.alpha);
    let mut emission = vec![vec![Rat::zero(); m_total]; n_i];

    for m in 0..m_total {
        if spec.is_observable_context(m) {
            let rel = m - half;
            let p = Rat::new(1.into(), (2 * n).into());
            for k in 0..n {
                emission[rel * n + k][m] = p.clone();
                emission[m * n + k][m] = p.clone();
            }
        } else {
            emission[spec.iota_hard()][m] = rat(1, 2);
            // Perturbed weights on the first half blocks, normalized to
            // total mass 1/2.
            let weights: Vec<Rat> = (0..half * n)
                .map(|flat| {
                    let s = Rat::from_integer(i64::from(signs[flat][m]).into());
                    (Rat::one() + &alpha * s) / Rat::from_integer(((m_total * n) as i64).into())
                })
                .collect();
            let total: Rat = weights.iter().sum();
            for (flat, w) in weights.into_iter().enumerate() {
                emission[flat][m] = rat(1, 2) * w / &total;
            }
        }
    }
    emission
}

fn build(spec: &HardInstanceSpec, assignment: &EmissionAssignment, reference: bool) -> Result<HardModel> {
    spec.validate()?;
    let d = spec.chain_len();
    let m_total = spec.num_contexts;
    let s_n = spec.num_states();
    let a_n = spec.num_actions();
    let eps = decimal_rational(spec.epsilon);
    let one = Rat::one();

    let mixing = vec![Rat::new(1.into(), (m_total as i64).into()); m_total];
    let init_dist = vec![delta_row(s_n, HardInstanceSpec::S_INIT); m_total];

    // Observation distributions as (p(reward 1)) per (m, s, a).
    let ber_eighth = rat(1, 8);
    let mut transitions = Vec::with_capacity(m_total);
    let mut obs_kernel = Vec::with_capacity(m_total);
    for m in 0..m_total {
        let mut t_m = vec![vec![delta_row(s_n, HardInstanceSpec::S_SINK); a_n]; s_n];
        let mut o_m = vec![vec![vec![Rat::one(), Rat::zero()]; a_n]; s_n];

        // Start state.
        for a in 0..a_n {
            let row = &mut t_m[HardInstanceSpec::S_INIT][a];
            if spec.is_observable_context(m) {
                // Always absorbs; the matching exploit action pays 1.
                if a == spec.exploit_action(m - m_total / 2) {
                    o_m[HardInstanceSpec::S_INIT][a] = vec![Rat::zero(), Rat::one()];
                }
                continue; // keep the sink row
            }
            if !spec.is_explore_action(a) {
                continue; // exploit and control actions absorb with no reward
            }
            let learn = spec.is_learn_context(m);
            let hard1 = spec.hard_state(1);
            let ref1 = spec.ref_state(1);
            *row = if reference {
                if learn {
                    delta_row(s_n, ref1)
                } else {
                    delta_row(s_n, hard1)
                }
            } else if a == spec.explore_action() {
                if learn {
                    split_row(s_n, hard1, eps.clone(), ref1, &one - &eps)
                } else {
                    split_row(s_n, hard1, &one - &eps, ref1, eps.clone())
                }
            } else if learn {
                delta_row(s_n, ref1)
            } else {
                delta_row(s_n, hard1)
            };
        }

        // Pay state: a Bernoulli(1/8) reward one step after a probabilistic
        // chain death, then the sink.
        for a in 0..a_n {
            t_m[HardInstanceSpec::S_PAY][a] = delta_row(s_n, HardInstanceSpec::S_SINK);
            o_m[HardInstanceSpec::S_PAY][a] =
                vec![&one - &ber_eighth, ber_eighth.clone()];
        }

        // Chain states.
        if !spec.is_observable_context(m) {
            for t in 1..=d {
                for (chain_state, is_hard) in [(spec.hard_state(t), true), (spec.ref_state(t), false)] {
                    for a in 0..a_n {
                        let Some(j) = spec.control_index(a) else {
                            continue; // non-control actions absorb with no reward
                        };
                        let on_optimal = j == spec.optimal_seq[t - 1];
                        let next_state = if is_hard { spec.hard_state(t + 1) } else { spec.ref_state(t + 1) };
                        let deterministic_chain =
                            is_hard && !reference && spec.is_learn_context(m);
                        if t == d {
                            // Certain death: the reward attaches directly.
                            t_m[chain_state][a] = delta_row(s_n, HardInstanceSpec::S_SINK);
                            let pays_one = is_hard && !reference && m == 0 && on_optimal;
                            o_m[chain_state][a] = if pays_one {
                                vec![Rat::zero(), Rat::one()]
                            } else {
                                vec![&one - &ber_eighth, ber_eighth.clone()]
                            };
                        } else if deterministic_chain {
                            let continues = match learn_role(d, t, m) {
                                Role::Anti => !on_optimal,
                                Role::Aligned => on_optimal,
                                Role::Neutral => true,
                            };
                            t_m[chain_state][a] = if continues {
                                delta_row(s_n, next_state)
                            } else {
                                delta_row(s_n, HardInstanceSpec::S_PAY)
                            };
                        } else {
                            // Reference survival: continue with (d-t)/(d+1-t).
                            let die = Rat::new(1.into(), ((d + 1 - t) as i64).into());
                            t_m[chain_state][a] =
                                split_row(s_n, next_state, &one - &die, HardInstanceSpec::S_PAY, die);
                        }
                    }
                }
            }
        }
        transitions.push(t_m);
        obs_kernel.push(o_m);
    }

    let exact = RationalLmdp {
        num_contexts: m_total,
        num_states: s_n,
        num_actions: a_n,
        num_obs: 2,
        num_side_info: spec.num_side_info(),
        horizon: spec.horizon(),
        mixing,
        init_dist,
        transitions,
        obs_kernel,
        emission: exact_emission(spec, &assignment.signs),
        reward_decoder: vec![0.0, 1.0],
    };
    debug_assert!(exact.check_exact_stochasticity());
    let lmdp = Arc::new(exact.to_f64());
    Ok(HardModel { spec: spec.clone(), exact, lmdp, is_reference: reference })
}

enum Role {
    /// Dies exactly when the optimal control action is played.
    Anti,
    /// Dies exactly when a non-optimal control action is played.
    Aligned,
    /// Always continues.
    Neutral,
}

/// Role of learn context `m` (zero-based) at chain step `t < d`. Exactly one
/// alive learn context dies per step under any control sequence, matching
/// the reference chain's 1/d death mass.
fn learn_role(d: usize, t: usize, m: usize) -> Role {
    if m == d - t {
        Role::Anti
    } else if m == 0 || m >= d - t + 1 {
        Role::Aligned
    } else {
        Role::Neutral
    }
}

/// Convenience: a spec with small action blocks used across tests and the
/// bundled fixture.
pub fn small_spec(num_contexts: usize, alphabet: usize, alpha: f64, epsilon: f64) -> HardInstanceSpec {
    let d = num_contexts / 4;
    HardInstanceSpec {
        num_contexts,
        explore_actions: 2,
        control_actions: 2,
        alphabet,
        alpha,
        epsilon,
        optimal_seq: (0..d).map(|t| t % 2).collect(),
        true_explore: 0,
    }
}
