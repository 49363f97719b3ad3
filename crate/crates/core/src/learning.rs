//! Optimistic maximum-likelihood learning: the episode dataset, likelihood
//! confidence sets, regret minimization over blind policies, elliptical
//! bonus accumulation, pure exploration, and the explore-then-exploit
//! wrapper.
//!
//! Theoretical constants are astronomically conservative at desk scale, so
//! the pure-exploration constants are computed verbatim and then adjusted by
//! a user-visible knob `c` (1.0 keeps them verbatim): the regularizer is
//! scaled down by `c` and the termination threshold is inflated by
//! `c^{-3/2}` relative to the formula at the scaled regularizer. Logs record
//! both the theoretical and the effective values.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{mixture_factor, sample_episode, LmdpPsi, ModelClass, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::planning::{
    evaluate_policy, plan_blind_optimal, plan_bonus_optimal, plan_informed_optimal, BonusSpec,
    BonusTables, Conditioning, InformedPolicy, Objective, Planned,
};
use crate::psr::{build_operators, PsrOperators, PsrState};

/// One episode as stored in the dataset: the side-information symbol, the
/// trajectory, and the hash of the policy that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub iota: usize,
    pub traj: TrajectoryRecord,
    pub policy_hash: String,
}

/// Append-only episode store.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub records: Vec<EpisodeRecord>,
}

impl Dataset {
    pub fn push(&mut self, record: EpisodeRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Log-likelihood of one record under a model, up to the policy factor. The
/// policy factor is identical for every candidate model and cancels in all
/// confidence-set comparisons, so it is left out. Zero-probability records
/// give negative infinity.
pub fn loglikelihood(theta: &LmdpPsi, iota: usize, traj: &TrajectoryRecord) -> f64 {
    let p = mixture_factor(theta, iota, traj);
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Likelihood survivor set at threshold beta below the maximum.
#[derive(Debug, Clone, Serialize)]
pub struct ConfidenceSet {
    pub logliks: Vec<f64>,
    pub beta: f64,
    pub survivors: Vec<usize>,
    pub mle: usize,
}

fn survivors_of(logliks: &[f64], beta: f64) -> (Vec<usize>, usize) {
    let mut mle = 0usize;
    for (i, ll) in logliks.iter().enumerate() {
        if *ll > logliks[mle] {
            mle = i;
        }
    }
    let max = logliks[mle];
    let survivors = logliks
        .iter()
        .enumerate()
        .filter(|(_, ll)| **ll >= max - beta)
        .map(|(i, _)| i)
        .collect();
    (survivors, mle)
}

/// Recomputes every model's cumulative log-likelihood over the dataset and
/// the survivor set.
pub fn update_confidence_set(class: &ModelClass, data: &Dataset, beta: f64) -> ConfidenceSet {
    let logliks: Vec<f64> = class
        .models
        .iter()
        .map(|m| {
            data.records
                .iter()
                .map(|r| loglikelihood(m, r.iota, &r.traj))
                .sum()
        })
        .collect();
    let (survivors, mle) = survivors_of(&logliks, beta);
    ConfidenceSet { logliks, beta, survivors, mle }
}

/// Per-(t, s, a) elliptical matrices over normalized predictive states,
/// re-embedded under the current optimistic model.
#[derive(Debug, Clone)]
pub struct BonusAccumulator {
    pub lambda0: f64,
    /// The accumulated matrices lambda0 I + sum of rank-one terms, visited
    /// cells only.
    pub matrices: HashMap<(usize, usize, usize), DMatrix<f64>>,
    pub tables: BonusTables,
}

/// Full recomputation of the bonus matrices: every stored trajectory is
/// re-embedded under the supplied model's operators. Prefixes with zero mass
/// under that model contribute nothing.
pub fn bonus_rebuild(ops: &PsrOperators, lambda0: f64, data: &Dataset) -> BonusAccumulator {
    let dim = ops.model.num_side_info;
    let mut sums: HashMap<(usize, usize, usize), DMatrix<f64>> = HashMap::new();
    for record in &data.records {
        let steps = &record.traj.steps;
        let mut state = PsrState::initial(ops).advance_init(ops, steps[0].state);
        for (t_idx, step) in steps.iter().enumerate() {
            let t = t_idx + 1;
            if let Some(b_bar) = &state.b_bar {
                let cell = sums
                    .entry((t, step.state, step.action))
                    .or_insert_with(|| DMatrix::zeros(dim, dim));
                // cell += b_bar b_bar^T
                cell.ger(1.0, b_bar, b_bar, 1.0);
            }
            if t_idx + 1 < steps.len() {
                state = state.advance(ops, step.state, step.action, step.obs, steps[t_idx + 1].state);
            }
        }
    }
    let mut matrices = HashMap::new();
    let mut inverses = HashMap::new();
    for (cell, sum) in sums {
        let lam = sum + DMatrix::identity(dim, dim) * lambda0;
        let inv = lam
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .unwrap_or_else(|| lam.clone().try_inverse().expect("positive definite"));
        matrices.insert(cell, lam);
        inverses.insert(cell, inv);
    }
    BonusAccumulator {
        lambda0,
        matrices,
        tables: BonusTables { lambda0, dim, inverses },
    }
}

/// Constants of one learning run; both the verbatim theoretical values and
/// the knob-adjusted effective values are kept.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantsLog {
    pub alpha_eff: f64,
    pub beta: f64,
    pub lambda0_theory: f64,
    pub lambda0_eff: f64,
    pub eps_pe_theory: f64,
    pub eps_pe_eff: f64,
    pub scale_c: f64,
    pub c_beta: f64,
    pub epsilon: f64,
}

/// One logged episode.
#[derive(Debug, Clone, Serialize)]
pub struct RunRow {
    pub episode: usize,
    pub phase: &'static str,
    pub model_index: usize,
    pub policy_hash: String,
    pub v_tilde_or_value: f64,
    pub inst_regret: f64,
    pub cum_regret: f64,
    pub survivors_count: usize,
    pub theta_star_survives: bool,
    /// Realized episode reward; logged separately from the exact-regret CSV.
    pub realized_reward: f64,
}

/// Full log of one seeded run.
#[derive(Debug, Clone, Serialize)]
pub struct RunLog {
    pub rows: Vec<RunRow>,
    pub constants: Option<ConstantsLog>,
    /// Episode index at which pure exploration stopped, if it did.
    pub terminated_at: Option<usize>,
    pub cap_hit: bool,
    pub returned_model: Option<usize>,
}

impl RunLog {
    pub fn cumulative_regret(&self) -> f64 {
        self.rows.last().map(|r| r.cum_regret).unwrap_or(0.0)
    }
}

/// Shared learner configuration. `scale_c` is the practical-constants knob
/// (1.0 reproduces the verbatim theoretical constants).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerConfig {
    #[serde(rename = "K")]
    pub num_episodes: usize,
    pub delta: f64,
    pub c_beta: f64,
    #[serde(rename = "c")]
    pub scale_c: f64,
    pub epsilon: f64,
    pub c_split: f64,
    pub conditioning: Conditioning,
    pub planner_budget: u64,
    pub alpha_override: Option<f64>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            num_episodes: 100,
            delta: 0.1,
            c_beta: 1.0,
            scale_c: 1.0,
            epsilon: 0.1,
            c_split: 1.0,
            conditioning: Conditioning::FullHistory,
            planner_budget: crate::DEFAULT_PLANNER_BUDGET,
            alpha_override: None,
        }
    }
}

fn truth_of(class: &ModelClass) -> Result<usize> {
    class
        .truth_index
        .ok_or_else(|| Error::Config("synthetic run requires a truth_index".into()))
}

fn beta_of(cfg: &LearnerConfig, class_size: usize, horizon_episodes: usize) -> f64 {
    cfg.c_beta * ((horizon_episodes.max(1) as f64) * (class_size as f64) / cfg.delta).ln()
}

/// Measured separation constant of the true model's emission, fed into the
/// pure-exploration formulas. The degenerate single-context case has no
/// belief pairs to separate and uses 1.
fn alpha_for_constants(theta: &LmdpPsi, cfg: &LearnerConfig) -> f64 {
    if let Some(a) = cfg.alpha_override {
        return a;
    }
    match crate::hardgen::effective_alpha(&theta.emission) {
        crate::hardgen::AlphaEff::Infinite => 1.0,
        crate::hardgen::AlphaEff::Certified(a) => a,
        crate::hardgen::AlphaEff::Sampled(a) => a,
    }
}

/// Optimistic-MLE regret minimization within the blind policy class.
///
/// Per round: the optimistic (model, policy) pair over the survivor set, one
/// executed episode, a likelihood update. The optimal blind plan of each
/// candidate does not depend on the data, so plans are computed once up
/// front. Regret rows use exact policy values under the true model.
pub fn omle_regret_min<R: Rng + ?Sized>(
    class: &ModelClass,
    cfg: &LearnerConfig,
    rng: &mut R,
) -> Result<RunLog> {
    class.validate()?;
    let truth = truth_of(class)?;
    let models: Vec<Arc<LmdpPsi>> = class.models.iter().cloned().map(Arc::new).collect();
    let theta_star = Arc::clone(&models[truth]);

    let plans: Vec<Planned> = models
        .par_iter()
        .map(|m| plan_blind_optimal(m, cfg.conditioning, cfg.planner_budget))
        .collect::<Result<_>>()?;
    let value_under_truth: Vec<f64> = plans
        .par_iter()
        .map(|p| {
            evaluate_policy(
                &theta_star,
                &InformedPolicy::shared(p.policy.clone()),
                Objective::Value,
                cfg.planner_budget,
            )
        })
        .collect::<Result<_>>()?;
    let star_blind_value = plans[truth].value;

    let beta = beta_of(cfg, models.len(), cfg.num_episodes);
    let mut logliks = vec![0.0f64; models.len()];
    let mut rows = Vec::with_capacity(cfg.num_episodes);
    let mut cum_regret = 0.0;
    for episode in 1..=cfg.num_episodes {
        let (survivors, _) = survivors_of(&logliks, beta);
        let chosen = *survivors
            .iter()
            .min_by(|a, b| {
                plans[**b]
                    .value
                    .partial_cmp(&plans[**a].value)
                    .unwrap()
                    .then(a.cmp(b))
            })
            .expect("survivors nonempty");
        let policy = InformedPolicy::shared(plans[chosen].policy.clone());
        let traj = sample_episode(&theta_star, &policy, rng);
        let realized = traj.total_reward(&theta_star);
        let iota = traj.iota;
        for (i, model) in models.iter().enumerate() {
            logliks[i] += loglikelihood(model, iota, &traj);
        }
        let (survivors_after, _) = survivors_of(&logliks, beta);
        let inst = star_blind_value - value_under_truth[chosen];
        cum_regret += inst;
        rows.push(RunRow {
            episode,
            phase: "omle",
            model_index: chosen,
            policy_hash: plans[chosen].policy.content_hash(),
            v_tilde_or_value: plans[chosen].value,
            inst_regret: inst,
            cum_regret,
            survivors_count: survivors_after.len(),
            theta_star_survives: survivors_after.contains(&truth),
            realized_reward: realized,
        });
    }
    Ok(RunLog {
        rows,
        constants: None,
        terminated_at: None,
        cap_hit: false,
        returned_model: None,
    })
}

/// Effective pure-exploration constants for a given class and config.
pub fn pure_explore_constants(
    theta_star: &LmdpPsi,
    class_size: usize,
    cfg: &LearnerConfig,
    cap: usize,
) -> ConstantsLog {
    let alpha = alpha_for_constants(theta_star, cfg);
    let m = theta_star.num_contexts as f64;
    let h = theta_star.horizon as f64;
    let beta = cfg.c_beta * ((cap.max(1) as f64) * (class_size as f64) / cfg.delta).ln();
    let lambda0_theory = beta * m * m * h * h / (alpha * alpha);
    let lambda0_eff = cfg.scale_c * lambda0_theory;
    let eps_pe_at = |lam0: f64| {
        cfg.epsilon * alpha / (10.0 * h * m * m * (lam0 * m * m / (alpha * alpha) + beta).sqrt())
    };
    ConstantsLog {
        alpha_eff: alpha,
        beta,
        lambda0_theory,
        lambda0_eff,
        eps_pe_theory: eps_pe_at(lambda0_theory),
        // The threshold formula is evaluated verbatim at the scaled
        // regularizer and inflated by c^{-3/2}; since the square root is
        // dominated by the lambda0 term this is about eps_pe_theory / c^2.
        // c = 1 reproduces the verbatim theoretical threshold.
        eps_pe_eff: eps_pe_at(lambda0_eff) / cfg.scale_c.powf(1.5),
        scale_c: cfg.scale_c,
        c_beta: cfg.c_beta,
        epsilon: cfg.epsilon,
    }
}

/// Bonus-driven pure exploration. Each episode re-embeds the dataset under
/// the maximum-likelihood survivor, plans the highest-bonus blind policy,
/// and stops once the optimal expected cumulative bonus falls below the
/// termination threshold. Returns the index of the model held at
/// termination (the MLE) and the run log.
pub fn pure_explore<R: Rng + ?Sized>(
    class: &ModelClass,
    cfg: &LearnerConfig,
    rng: &mut R,
) -> Result<(usize, RunLog)> {
    class.validate()?;
    let truth = truth_of(class)?;
    let models: Vec<Arc<LmdpPsi>> = class.models.iter().cloned().map(Arc::new).collect();
    let theta_star = Arc::clone(&models[truth]);
    let cap = cfg.num_episodes;
    let constants = pure_explore_constants(&theta_star, models.len(), cfg, cap);
    let beta = constants.beta;
    let all_ops: Vec<Arc<PsrOperators>> = models
        .iter()
        .map(|m| build_operators(m).map(Arc::new))
        .collect::<Result<_>>()?;
    let star_informed = plan_informed_optimal(&theta_star, cfg.conditioning, cfg.planner_budget)?;

    let mut data = Dataset::default();
    let mut logliks = vec![0.0f64; models.len()];
    let mut rows = Vec::new();
    let mut cum_regret = 0.0;
    let mut terminated_at = None;
    let mut returned = None;
    for episode in 0..cap {
        let (survivors, mle) = survivors_of(&logliks, beta);
        let acc = bonus_rebuild(&all_ops[mle], constants.lambda0_eff, &data);
        let spec = BonusSpec { ops: Arc::clone(&all_ops[mle]), tables: acc.tables };
        let planned = plan_bonus_optimal(&spec, cfg.planner_budget)?;
        let terminate = planned.value <= constants.eps_pe_eff;
        let policy = InformedPolicy::shared(planned.policy.clone());
        let value_under_truth = evaluate_policy(
            &theta_star,
            &policy,
            Objective::Value,
            cfg.planner_budget,
        )?;
        let inst = star_informed.value - value_under_truth;
        let mut realized = 0.0;
        if !terminate {
            let traj = sample_episode(&theta_star, &policy, rng);
            realized = traj.total_reward(&theta_star);
            let iota = traj.iota;
            for (i, model) in models.iter().enumerate() {
                logliks[i] += loglikelihood(model, iota, &traj);
            }
            data.push(EpisodeRecord {
                iota,
                traj,
                policy_hash: planned.policy.content_hash(),
            });
            cum_regret += inst;
        }
        let (survivors_after, _) = survivors_of(&logliks, beta);
        rows.push(RunRow {
            episode,
            phase: "explore",
            model_index: mle,
            policy_hash: planned.policy.content_hash(),
            v_tilde_or_value: planned.value,
            inst_regret: if terminate { 0.0 } else { inst },
            cum_regret,
            survivors_count: survivors_after.len(),
            theta_star_survives: survivors_after.contains(&truth),
            realized_reward: realized,
        });
        if terminate {
            terminated_at = Some(episode);
            returned = Some(mle);
            break;
        }
        let _ = survivors;
    }
    let cap_hit = terminated_at.is_none();
    let returned_model = returned.unwrap_or_else(|| survivors_of(&logliks, beta).1);
    Ok((
        returned_model,
        RunLog {
            rows,
            constants: Some(constants),
            terminated_at,
            cap_hit,
            returned_model: Some(returned_model),
        },
    ))
}

/// Explore-then-exploit: pure exploration at accuracy `c_split * K^{-1/3}`,
/// then the informed optimal policy of the returned model for the remaining
/// episodes. Regret rows use the strong notion, against the informed optimum
/// of the true model.
pub fn explore_then_exploit<R: Rng + ?Sized>(
    class: &ModelClass,
    cfg: &LearnerConfig,
    rng: &mut R,
) -> Result<RunLog> {
    let truth = truth_of(class)?;
    let k_total = cfg.num_episodes;
    let mut explore_cfg = cfg.clone();
    explore_cfg.epsilon = cfg.c_split * (k_total as f64).powf(-1.0 / 3.0);
    let (theta_hat_idx, mut log) = pure_explore(class, &explore_cfg, rng)?;

    let theta_star = Arc::new(class.models[truth].clone());
    let theta_hat = Arc::new(class.models[theta_hat_idx].clone());
    let star = plan_informed_optimal(&theta_star, cfg.conditioning, cfg.planner_budget)?;
    let exploit_plan = plan_informed_optimal(&theta_hat, cfg.conditioning, cfg.planner_budget)?;
    let exploit_value = evaluate_policy(
        &theta_star,
        &exploit_plan.policy,
        Objective::Value,
        cfg.planner_budget,
    )?;
    let inst = star.value - exploit_value;
    let hash = exploit_plan.policy.content_hash();

    let explored = log.rows.len();
    let mut cum = log.cumulative_regret();
    for episode in explored..k_total {
        let traj = sample_episode(&theta_star, &exploit_plan.policy, rng);
        cum += inst;
        log.rows.push(RunRow {
            episode,
            phase: "exploit",
            model_index: theta_hat_idx,
            policy_hash: hash.clone(),
            v_tilde_or_value: exploit_value,
            inst_regret: inst,
            cum_regret: cum,
            survivors_count: 0,
            theta_star_survives: true,
            realized_reward: traj.total_reward(&theta_star),
        });
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::fixtures;
    use crate::planning::BlindPolicy;
    use nalgebra::DVector;
    use crate::psr::HistoryPrefix;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn loglikelihood_matches_trajectory_probability() {
        let theta = Arc::new(fixtures::mixed_instance());
        let policy = InformedPolicy::shared(BlindPolicy::uniform(&theta));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let traj = sample_episode(&theta, &policy, &mut rng);
            let ll = loglikelihood(&theta, traj.iota, &traj);
            let blind = BlindPolicy::uniform(&theta);
            let tp = crate::env::trajectory_probability(&theta, &blind, traj.iota, &traj);
            let pf = crate::env::policy_factor(&blind, &traj);
            assert!((ll.exp() * pf - tp).abs() <= 1e-10 * tp.max(1.0));
        }
    }

    #[test]
    fn impossible_trajectory_gives_neg_infinity() {
        let theta = fixtures::mixed_instance();
        let mut other = theta.clone();
        // Observation 1 impossible everywhere under `other`.
        for m in 0..other.num_contexts {
            for s in 0..other.num_states {
                for a in 0..other.num_actions {
                    other.obs_kernel[m][s][a] = vec![1.0, 0.0];
                }
            }
        }
        let traj = TrajectoryRecord {
            iota: 0,
            latent: 0,
            steps: vec![
                crate::env::Step { state: 0, action: 0, obs: 1 },
                crate::env::Step { state: 0, action: 0, obs: 0 },
            ],
        };
        assert_eq!(loglikelihood(&other, 0, &traj), f64::NEG_INFINITY);
        assert!(loglikelihood(&theta, 0, &traj).is_finite());
    }

    #[test]
    fn empty_dataset_keeps_all_models() {
        let class = fixtures::mixed_class();
        let set = update_confidence_set(&class, &Dataset::default(), 1.0);
        assert_eq!(set.survivors.len(), class.len());
    }

    #[test]
    fn zero_beta_keeps_exactly_the_argmax_set() {
        let class = fixtures::mixed_class();
        let theta = Arc::new(class.models[0].clone());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let policy = InformedPolicy::shared(BlindPolicy::uniform(&theta));
        let mut data = Dataset::default();
        for _ in 0..40 {
            let traj = sample_episode(&theta, &policy, &mut rng);
            let iota = traj.iota;
            data.push(EpisodeRecord { iota, traj, policy_hash: String::new() });
        }
        let set = update_confidence_set(&class, &data, 0.0);
        let max = set.logliks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for i in &set.survivors {
            assert_abs_diff_eq!(set.logliks[*i], max);
        }
        assert!(set.survivors.contains(&set.mle));
    }

    #[test]
    fn appending_records_never_increases_loglik() {
        let class = fixtures::mixed_class();
        let theta = Arc::new(class.models[0].clone());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let policy = InformedPolicy::shared(BlindPolicy::uniform(&theta));
        let mut data = Dataset::default();
        let mut prev = vec![0.0; class.len()];
        for _ in 0..20 {
            let traj = sample_episode(&theta, &policy, &mut rng);
            let iota = traj.iota;
            data.push(EpisodeRecord { iota, traj, policy_hash: String::new() });
            let set = update_confidence_set(&class, &data, 1.0);
            for (new, old) in set.logliks.iter().zip(&prev) {
                assert!(*new <= old + 1e-12);
            }
            prev = set.logliks;
        }
    }

    #[test]
    fn single_record_bonus_matrix_matches_sherman_morrison() {
        let theta = Arc::new(fixtures::mixed_instance());
        let ops = build_operators(&theta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let policy = InformedPolicy::shared(BlindPolicy::uniform(&theta));
        let traj = sample_episode(&theta, &policy, &mut rng);
        let iota = traj.iota;
        let mut data = Dataset::default();
        let first = traj.steps[0];
        data.push(EpisodeRecord { iota, traj, policy_hash: String::new() });
        let lambda0 = 0.7;
        let acc = bonus_rebuild(&ops, lambda0, &data);
        // Closed form for lambda0 I + b b^T.
        let prefix = HistoryPrefix { s1: first.state, steps: vec![] };
        let b = crate::psr::psr_state(&ops, &prefix).b_bar.unwrap();
        let dim = theta.num_side_info;
        let outer = &b * b.transpose();
        let closed = (DMatrix::identity(dim, dim)
            - outer / (lambda0 + b.dot(&b)))
            / lambda0;
        let inv = acc
            .tables
            .inverses
            .get(&(1, first.state, first.action))
            .expect("visited cell");
        assert!((inv - closed).abs().max() < 1e-10);
        // Inverse consistency on every touched cell.
        for (cell, lam) in &acc.matrices {
            let inv = &acc.tables.inverses[cell];
            let err = (lam * inv - DMatrix::identity(dim, dim)).abs().max();
            assert!(err <= 1e-9, "cell {cell:?} inverse error {err}");
        }
    }

    #[test]
    fn empty_dataset_bonus_is_regularizer_only() {
        let theta = Arc::new(fixtures::mixed_instance());
        let ops = build_operators(&theta).unwrap();
        let acc = bonus_rebuild(&ops, 2.0, &Dataset::default());
        assert!(acc.matrices.is_empty());
        let b: DVector<f64> = DVector::from_vec(vec![0.6, 0.4]);
        let expected = (b.dot(&b) / 2.0).sqrt();
        assert_abs_diff_eq!(acc.tables.bonus(1, 0, 0, &b), expected, epsilon = 1e-12);
    }

    #[test]
    fn wrong_model_with_zero_probability_event_is_eliminated_quickly() {
        // theta_wrong assigns probability 0 to an observation that theta*
        // emits with probability ~1/2; the first such observation sends its
        // log-likelihood to -inf.
        let theta = fixtures::mixed_instance();
        let mut wrong = theta.clone();
        for m in 0..wrong.num_contexts {
            wrong.obs_kernel[m][0][0] = vec![1.0, 0.0];
        }
        let class = ModelClass { models: vec![theta, wrong], truth_index: Some(0) };
        let mut elimination_rounds = Vec::new();
        for seed in 0..20 {
            let cfg = LearnerConfig { num_episodes: 60, ..Default::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let log = omle_regret_min(&class, &cfg, &mut rng).unwrap();
            let round = log
                .rows
                .iter()
                .position(|r| r.survivors_count == 1)
                .map(|i| i + 1)
                .unwrap_or(usize::MAX);
            elimination_rounds.push(round);
        }
        elimination_rounds.sort();
        let median = elimination_rounds[elimination_rounds.len() / 2];
        assert!(median <= 5, "median elimination round {median}");
    }

    #[test]
    fn singleton_class_has_zero_regret() {
        let theta = fixtures::mixed_instance();
        let class = ModelClass { models: vec![theta], truth_index: Some(0) };
        let cfg = LearnerConfig { num_episodes: 30, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let log = omle_regret_min(&class, &cfg, &mut rng).unwrap();
        assert_abs_diff_eq!(log.cumulative_regret(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn identical_seeds_reproduce_identical_runs() {
        let class = fixtures::mixed_class();
        let cfg = LearnerConfig { num_episodes: 40, ..Default::default() };
        let mut rng_a = ChaCha8Rng::seed_from_u64(12);
        let mut rng_b = ChaCha8Rng::seed_from_u64(12);
        let a = omle_regret_min(&class, &cfg, &mut rng_a).unwrap();
        let b = omle_regret_min(&class, &cfg, &mut rng_b).unwrap();
        let ser_a = serde_json::to_string(&a).unwrap();
        let ser_b = serde_json::to_string(&b).unwrap();
        assert_eq!(ser_a, ser_b);
    }

    #[test]
    fn bonus_value_never_increases_with_more_data() {
        let class = fixtures::mixed_class();
        let theta = Arc::new(class.models[0].clone());
        let ops = Arc::new(build_operators(&theta).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let policy = InformedPolicy::shared(BlindPolicy::uniform(&theta));
        let mut data = Dataset::default();
        let lambda0 = 1.5;
        let mut prev = f64::INFINITY;
        for _ in 0..6 {
            let acc = bonus_rebuild(&ops, lambda0, &data);
            let spec = BonusSpec { ops: Arc::clone(&ops), tables: acc.tables };
            let planned = plan_bonus_optimal(&spec, 1 << 22).unwrap();
            assert!(planned.value <= prev + 1e-12, "bonus value increased");
            prev = planned.value;
            let traj = sample_episode(&theta, &policy, &mut rng);
            let iota = traj.iota;
            data.push(EpisodeRecord { iota, traj, policy_hash: String::new() });
        }
    }

    #[test]
    fn pure_explore_terminates_immediately_when_threshold_exceeds_start() {
        // A singleton class with a huge epsilon: the very first optimal
        // bonus is already below the inflated threshold.
        let theta = fixtures::mixed_instance();
        let class = ModelClass { models: vec![theta], truth_index: Some(0) };
        let cfg = LearnerConfig {
            num_episodes: 50,
            epsilon: 1e6,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (idx, log) = pure_explore(&class, &cfg, &mut rng).unwrap();
        assert_eq!(idx, 0);
        assert_eq!(log.terminated_at, Some(0));
        assert!(!log.cap_hit);
    }

    #[test]
    fn bonus_values_stay_in_range() {
        let class = fixtures::mixed_class();
        let cfg = LearnerConfig { num_episodes: 25, scale_c: 0.01, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (_, log) = pure_explore(&class, &cfg, &mut rng).unwrap();
        let lambda0 = log.constants.as_ref().unwrap().lambda0_eff;
        let h = class.models[0].horizon as f64;
        for row in &log.rows {
            assert!(row.v_tilde_or_value > 0.0);
            assert!(row.v_tilde_or_value <= h / lambda0.sqrt() + 1e-9);
        }
    }
}
