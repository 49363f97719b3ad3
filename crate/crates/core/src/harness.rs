//! Experiment orchestration: bundled fixtures, seeded preset runs with CSV
//! and manifest output, and scaling-exponent fits.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{LmdpPsi, ModelClass};
use crate::error::{Error, Result};
use crate::hardgen::{
    build_hard_instance, sample_emission_assignment, HardInstanceSpec, HardModel,
};
use crate::learning::{explore_then_exploit, omle_regret_min, pure_explore, LearnerConfig, RunLog};
use crate::planning::{
    evaluate_policy, plan_blind_optimal, plan_informed_optimal, Conditioning, InformedPolicy,
    Objective,
};

/// Where the instance under test comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InstanceSource {
    Bundled { name: String },
    File { path: PathBuf },
    HardSpec { spec: HardInstanceSpec, seed: u64 },
}

/// Where the candidate model class comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClassSource {
    Bundled { name: String },
    File { path: PathBuf },
}

/// Configuration of one preset run. Serializes into the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: String,
    pub instance: InstanceSource,
    pub model_class: Option<ClassSource>,
    #[serde(rename = "K")]
    pub num_episodes: usize,
    pub delta: f64,
    pub epsilon: f64,
    #[serde(rename = "c")]
    pub scale_c: f64,
    pub c_beta: f64,
    pub c_split: f64,
    pub seeds: Vec<u64>,
    pub planner_budget: u64,
    pub output_dir: PathBuf,
    /// Episode grid for the scaling preset.
    pub k_grid: Option<Vec<usize>>,
}

impl ExperimentConfig {
    pub fn preset_defaults(preset: &str, output_dir: PathBuf) -> ExperimentConfig {
        ExperimentConfig {
            preset: preset.to_string(),
            instance: InstanceSource::Bundled {
                name: if preset == "gap-demo" { "hard".into() } else { "mixed".into() },
            },
            model_class: Some(ClassSource::Bundled { name: "mixed_class".into() }),
            num_episodes: 500,
            delta: 0.1,
            epsilon: 0.1,
            scale_c: 0.01,
            c_beta: 1.0,
            c_split: 1.0,
            seeds: (0..10).collect(),
            planner_budget: crate::DEFAULT_PLANNER_BUDGET,
            output_dir,
            k_grid: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.num_episodes == 0 {
            return Err(Error::Config("num_episodes must be at least 1".into()));
        }
        Ok(())
    }

    pub fn learner_config(&self) -> LearnerConfig {
        LearnerConfig {
            num_episodes: self.num_episodes,
            delta: self.delta,
            c_beta: self.c_beta,
            scale_c: self.scale_c,
            epsilon: self.epsilon,
            c_split: self.c_split,
            conditioning: Conditioning::FullHistory,
            planner_budget: self.planner_budget,
            alpha_override: None,
        }
    }

    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

/// Bundled fixtures: three instances shipped with the crate so acceptance
/// runs never depend on random generation.
pub mod fixtures {
    use super::*;

    /// Single-context baseline instance (an ordinary MDP with a trivial
    /// side-information channel).
    pub fn tiny_mdp_instance() -> LmdpPsi {
        LmdpPsi {
            num_contexts: 1,
            num_states: 2,
            num_actions: 2,
            num_obs: 2,
            num_side_info: 1,
            horizon: 3,
            mixing: vec![1.0],
            init_dist: vec![vec![1.0, 0.0]],
            transitions: vec![vec![
                vec![vec![0.7, 0.3], vec![0.4, 0.6]],
                vec![vec![0.2, 0.8], vec![0.9, 0.1]],
            ]],
            obs_kernel: vec![vec![
                vec![vec![0.9, 0.1], vec![0.7, 0.3]],
                vec![vec![0.2, 0.8], vec![0.5, 0.5]],
            ]],
            emission: vec![vec![1.0]],
            reward_decoder: vec![0.0, 1.0],
        }
    }

    /// Two-context mixture with a weakly revealing symbol; the workhorse of
    /// the learning experiments.
    pub fn mixed_instance() -> LmdpPsi {
        LmdpPsi {
            num_contexts: 2,
            num_states: 2,
            num_actions: 2,
            num_obs: 2,
            num_side_info: 2,
            horizon: 2,
            mixing: vec![0.5, 0.5],
            init_dist: vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            transitions: vec![
                vec![
                    vec![vec![0.9, 0.1], vec![0.5, 0.5]],
                    vec![vec![0.3, 0.7], vec![0.6, 0.4]],
                ],
                vec![
                    vec![vec![0.6, 0.4], vec![0.5, 0.5]],
                    vec![vec![0.7, 0.3], vec![0.2, 0.8]],
                ],
            ],
            obs_kernel: vec![
                vec![
                    vec![vec![0.2, 0.8], vec![0.8, 0.2]],
                    vec![vec![0.7, 0.3], vec![0.1, 0.9]],
                ],
                vec![
                    vec![vec![0.8, 0.2], vec![0.2, 0.8]],
                    vec![vec![0.1, 0.9], vec![0.7, 0.3]],
                ],
            ],
            emission: vec![vec![0.8, 0.2], vec![0.2, 0.8]],
            reward_decoder: vec![0.0, 1.0],
        }
    }

    /// Candidate class around the mixed instance: the truth plus seven
    /// structured distortions (swapped observation roles, moderated
    /// kernels, emission tilts, transition and mixing changes).
    pub fn mixed_class() -> ModelClass {
        let truth = mixed_instance();
        let mut models = vec![truth.clone()];

        // Observation roles swapped at state 0.
        let mut swapped = truth.clone();
        swapped.obs_kernel[0][0] = vec![vec![0.8, 0.2], vec![0.2, 0.8]];
        swapped.obs_kernel[1][0] = vec![vec![0.2, 0.8], vec![0.8, 0.2]];
        models.push(swapped);

        // Moderated observation kernels at state 0.
        let mut moderated = truth.clone();
        moderated.obs_kernel[0][0] = vec![vec![0.35, 0.65], vec![0.65, 0.35]];
        moderated.obs_kernel[1][0] = vec![vec![0.65, 0.35], vec![0.35, 0.65]];
        models.push(moderated);

        // Weaker side-information channel.
        let mut tilted = truth.clone();
        tilted.emission = vec![vec![0.6, 0.4], vec![0.4, 0.6]];
        models.push(tilted);

        // Slower mixing out of state 0 in context 0.
        let mut slow = truth.clone();
        slow.transitions[0][0][0] = vec![0.7, 0.3];
        models.push(slow);

        // Uninformative observations at state 1.
        let mut flat = truth.clone();
        flat.obs_kernel[0][1] = vec![vec![0.4, 0.6], vec![0.4, 0.6]];
        flat.obs_kernel[1][1] = vec![vec![0.4, 0.6], vec![0.4, 0.6]];
        models.push(flat);

        // Skewed mixing weights.
        let mut skew = truth.clone();
        skew.mixing = vec![0.7, 0.3];
        models.push(skew);

        // Combined mild distortion.
        let mut combo = truth.clone();
        combo.emission = vec![vec![0.7, 0.3], vec![0.3, 0.7]];
        combo.obs_kernel[0][0] = vec![vec![0.25, 0.75], vec![0.75, 0.25]];
        combo.obs_kernel[1][0] = vec![vec![0.75, 0.25], vec![0.25, 0.75]];
        models.push(combo);

        ModelClass { models, truth_index: Some(0) }
    }

    /// Spec of the bundled adversarial fixture.
    pub fn hard_spec() -> HardInstanceSpec {
        crate::hardgen::small_spec(8, 2, 0.003, 0.1)
    }

    /// Fixed seed for the bundled fixture's emission assignment.
    pub const HARD_FIXTURE_SEED: u64 = 0xF1D0;

    /// The bundled adversarial fixture, rebuilt deterministically.
    pub fn hard_fixture() -> HardModel {
        let spec = hard_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(HARD_FIXTURE_SEED);
        let assignment =
            sample_emission_assignment(&spec, &mut rng, 64).expect("fixture assignment certifies");
        build_hard_instance(&spec, &assignment).expect("fixture builds")
    }

    pub fn bundled_instance(name: &str) -> Result<LmdpPsi> {
        match name {
            "tiny-mdp" | "tiny_mdp" => Ok(tiny_mdp_instance()),
            "mixed" => Ok(mixed_instance()),
            "hard" => Ok(hard_fixture().lmdp.as_ref().clone()),
            other => Err(Error::Config(format!("unknown bundled instance '{other}'"))),
        }
    }

    pub fn bundled_class(name: &str) -> Result<ModelClass> {
        match name {
            "mixed_class" | "mixed-class" => Ok(mixed_class()),
            other => Err(Error::Config(format!("unknown bundled class '{other}'"))),
        }
    }
}

/// Seeded generators and small independent oracles shared by tests and the
/// acceptance suite.
pub mod gen {
    use super::*;
    use crate::env::{Step, TrajectoryRecord};
    use rand::Rng;

    fn dirichlet_row<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
        let mut row: Vec<f64> = (0..len).map(|_| (-rng.gen::<f64>().ln()).max(1e-12)).collect();
        let z: f64 = row.iter().sum();
        for x in &mut row {
            *x /= z;
        }
        row
    }

    pub fn random_emission<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Vec<Vec<f64>> {
        loop {
            let mut emission = vec![vec![0.0; cols]; rows];
            for m in 0..cols {
                let col = dirichlet_row(rng, rows);
                for (j, p) in col.into_iter().enumerate() {
                    emission[j][m] = p;
                }
            }
            if crate::psr::emission_rank(&emission) == cols {
                return emission;
            }
        }
    }

    /// A random dense instance with full-rank emission.
    pub fn random_instance<R: Rng + ?Sized>(
        rng: &mut R,
        num_contexts: usize,
        num_states: usize,
        num_actions: usize,
        num_obs: usize,
        num_side_info: usize,
        horizon: usize,
    ) -> LmdpPsi {
        let mut transitions = Vec::new();
        let mut obs_kernel = Vec::new();
        let mut init_dist = Vec::new();
        for _ in 0..num_contexts {
            init_dist.push(dirichlet_row(rng, num_states));
            let mut t_m = Vec::new();
            let mut o_m = Vec::new();
            for _ in 0..num_states {
                let mut t_s = Vec::new();
                let mut o_s = Vec::new();
                for _ in 0..num_actions {
                    t_s.push(dirichlet_row(rng, num_states));
                    o_s.push(dirichlet_row(rng, num_obs));
                }
                t_m.push(t_s);
                o_m.push(o_s);
            }
            transitions.push(t_m);
            obs_kernel.push(o_m);
        }
        let mut reward_decoder: Vec<f64> = (0..num_obs).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        reward_decoder[0] = 0.0;
        LmdpPsi {
            num_contexts,
            num_states,
            num_actions,
            num_obs,
            num_side_info,
            horizon,
            mixing: dirichlet_row(rng, num_contexts),
            init_dist,
            transitions,
            obs_kernel,
            emission: random_emission(rng, num_side_info, num_contexts),
            reward_decoder,
        }
    }

    /// Every (state, action, observation) sequence of length H as a record
    /// (the side-information symbol is supplied separately).
    pub fn all_trajectories(theta: &LmdpPsi) -> Vec<TrajectoryRecord> {
        let mut out = Vec::new();
        let mut steps = Vec::with_capacity(theta.horizon);
        walk_all(theta, &mut steps, &mut out);
        out
    }

    fn walk_all(theta: &LmdpPsi, steps: &mut Vec<Step>, out: &mut Vec<TrajectoryRecord>) {
        if steps.len() == theta.horizon {
            out.push(TrajectoryRecord { iota: 0, latent: 0, steps: steps.clone() });
            return;
        }
        for state in 0..theta.num_states {
            for action in 0..theta.num_actions {
                for obs in 0..theta.num_obs {
                    steps.push(Step { state, action, obs });
                    walk_all(theta, steps, out);
                    steps.pop();
                }
            }
        }
    }

    /// Finite-horizon optimal value of one mixture component as a plain MDP,
    /// by state-space backward induction. Independent of the belief
    /// planners.
    pub fn finite_horizon_mdp_value(theta: &LmdpPsi, m: usize) -> f64 {
        let mut v_next = vec![0.0f64; theta.num_states];
        for _t in (1..=theta.horizon).rev() {
            let mut v = vec![f64::NEG_INFINITY; theta.num_states];
            for s in 0..theta.num_states {
                for a in 0..theta.num_actions {
                    let mut q = theta.expected_reward(m, s, a);
                    for (s_next, p) in theta.transitions[m][s][a].iter().enumerate() {
                        q += p * v_next[s_next];
                    }
                    if q > v[s] {
                        v[s] = q;
                    }
                }
            }
            v_next = v;
        }
        (0..theta.num_states)
            .map(|s| theta.init_dist[m][s] * v_next[s])
            .sum()
    }

    /// A fixed deterministic sample of Markov policies (actions keyed by
    /// step and state), reproducible from the seed.
    pub fn fixed_markov_policies(theta: &LmdpPsi, count: usize, seed: u64) -> Vec<crate::planning::BlindPolicy> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let actions: Vec<Vec<usize>> = (0..theta.horizon)
                    .map(|_| {
                        (0..theta.num_states)
                            .map(|_| rng.gen_range(0..theta.num_actions))
                            .collect()
                    })
                    .collect();
                crate::planning::BlindPolicy::Markov { actions, num_actions: theta.num_actions }
            })
            .collect()
    }
}

/// Result of a log-log least-squares fit.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    /// Percentile bootstrap interval over seeds, when seed curves were
    /// supplied.
    pub bootstrap_ci: Option<(f64, f64)>,
}

/// Floor applied before taking logs; a seed with exactly zero regret still
/// produces a finite fit.
const REGRET_FLOOR: f64 = 1e-9;

fn least_squares_loglog(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(k, _)| k.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, r)| r.max(REGRET_FLOOR).ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Least-squares slope of log regret against log episode count.
pub fn fit_scaling_exponent(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 4 {
        return Err(Error::Config(format!(
            "scaling fit needs at least 4 points, got {}",
            points.len()
        )));
    }
    let (slope, intercept) = least_squares_loglog(points);
    if !slope.is_finite() {
        return Err(Error::Config("scaling fit produced a non-finite slope".into()));
    }
    Ok(ScalingFit { points: points.to_vec(), slope, intercept, bootstrap_ci: None })
}

/// Fit on per-K medians across seeds, with a percentile bootstrap interval
/// over seed resamples.
pub fn fit_with_bootstrap(
    per_seed_curves: &[Vec<(f64, f64)>],
    resamples: usize,
    seed: u64,
) -> Result<ScalingFit> {
    if per_seed_curves.is_empty() {
        return Err(Error::Config("no seed curves supplied".into()));
    }
    let n_points = per_seed_curves[0].len();
    if per_seed_curves.iter().any(|c| c.len() != n_points) {
        return Err(Error::Config("seed curves disagree on the episode grid".into()));
    }
    let median_curve = |indices: &[usize]| -> Vec<(f64, f64)> {
        (0..n_points)
            .map(|p| {
                let k = per_seed_curves[indices[0]][p].0;
                let mut vals: Vec<f64> = indices.iter().map(|i| per_seed_curves[*i][p].1).collect();
                vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                (k, median_of_sorted(&vals))
            })
            .collect()
    };
    let all: Vec<usize> = (0..per_seed_curves.len()).collect();
    let mut fit = fit_scaling_exponent(&median_curve(&all))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slopes = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let indices: Vec<usize> = (0..per_seed_curves.len())
            .map(|_| rand::Rng::gen_range(&mut rng, 0..per_seed_curves.len()))
            .collect();
        let (slope, _) = least_squares_loglog(&median_curve(&indices));
        slopes.push(slope);
    }
    slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = slopes[((resamples as f64) * 0.025) as usize];
    let hi = slopes[(((resamples as f64) * 0.975) as usize).min(resamples - 1)];
    fit.bootstrap_ci = Some((lo, hi));
    Ok(fit)
}

pub fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Log-log slope of a cumulative-regret curve over an episode window, read
/// at up to `points` log-spaced episode indices.
pub fn regret_curve_slope(log: &RunLog, k_lo: usize, k_hi: usize, points: usize) -> Result<f64> {
    let take_at: Vec<usize> = (0..points)
        .map(|i| {
            let f = i as f64 / (points - 1) as f64;
            ((k_lo as f64) * ((k_hi as f64) / (k_lo as f64)).powf(f)).round() as usize
        })
        .collect();
    let mut curve = Vec::new();
    for k in take_at {
        if let Some(row) = log.rows.iter().find(|r| r.episode >= k) {
            curve.push((k as f64, row.cum_regret));
        }
    }
    curve.dedup_by(|a, b| a.0 == b.0);
    Ok(fit_scaling_exponent(&curve)?.slope)
}

fn load_instance(source: &InstanceSource) -> Result<Arc<LmdpPsi>> {
    let theta = match source {
        InstanceSource::Bundled { name } => fixtures::bundled_instance(name)?,
        InstanceSource::File { path } => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text)?
        }
        InstanceSource::HardSpec { spec, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let assignment = sample_emission_assignment(spec, &mut rng, 64)?;
            build_hard_instance(spec, &assignment)?.lmdp.as_ref().clone()
        }
    };
    let report = crate::env::validate_model(&theta);
    if !report.is_ok() {
        return Err(Error::Config(format!("instance fails validation: {:?}", report.issues)));
    }
    Ok(Arc::new(theta))
}

fn load_class(source: &ClassSource) -> Result<ModelClass> {
    let class = match source {
        ClassSource::Bundled { name } => fixtures::bundled_class(name)?,
        ClassSource::File { path } => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str::<ModelClass>(&text)?
        }
    };
    class.validate()?;
    Ok(class)
}

fn write_runlog_csv(path: &Path, log: &RunLog) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(e.to_string()))?;
    w.write_record([
        "episode",
        "phase",
        "model_index",
        "policy_hash",
        "V_tilde_or_value",
        "inst_regret",
        "cum_regret",
        "survivors_count",
        "theta_star_survives",
    ])
    .map_err(|e| Error::Config(e.to_string()))?;
    for row in &log.rows {
        w.write_record([
            row.episode.to_string(),
            row.phase.to_string(),
            row.model_index.to_string(),
            row.policy_hash.clone(),
            row.v_tilde_or_value.to_string(),
            row.inst_regret.to_string(),
            row.cum_regret.to_string(),
            row.survivors_count.to_string(),
            row.theta_star_survives.to_string(),
        ])
        .map_err(|e| Error::Config(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn write_rewards_csv(path: &Path, log: &RunLog) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(e.to_string()))?;
    w.write_record(["episode", "realized_reward"]).map_err(|e| Error::Config(e.to_string()))?;
    for row in &log.rows {
        w.write_record([row.episode.to_string(), row.realized_reward.to_string()])
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn write_aggregate_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(e.to_string()))?;
    w.write_record(header).map_err(|e| Error::Config(e.to_string()))?;
    for row in rows {
        w.write_record(row).map_err(|e| Error::Config(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Runs a preset and writes per-seed run logs, an aggregate CSV, and a
/// manifest. Returns the artifact directory.
pub fn run_preset(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let dir = cfg.output_dir.join(&cfg.preset);
    fs::create_dir_all(&dir)?;
    let mut summary: BTreeMap<String, serde_json::Value> = BTreeMap::new();

    match cfg.preset.as_str() {
        "regret-blind" | "coverage" => {
            let class_src = cfg
                .model_class
                .clone()
                .ok_or_else(|| Error::Config("preset needs a model class".into()))?;
            let class = load_class(&class_src)?;
            let lc = cfg.learner_config();
            let logs: Vec<(u64, RunLog)> = cfg
                .seeds
                .par_iter()
                .map(|seed| {
                    let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                    omle_regret_min(&class, &lc, &mut rng).map(|log| (*seed, log))
                })
                .collect::<Result<_>>()?;
            let mut rows = Vec::new();
            let mut finals = Vec::new();
            for (seed, log) in &logs {
                write_runlog_csv(&dir.join(format!("runlog_seed{seed}.csv")), log)?;
                write_rewards_csv(&dir.join(format!("rewards_seed{seed}.csv")), log)?;
                let survived_all = log.rows.iter().all(|r| r.theta_star_survives);
                let slope = regret_curve_slope(log, cfg.num_episodes / 10, cfg.num_episodes, 12)?;
                rows.push(vec![
                    seed.to_string(),
                    log.cumulative_regret().to_string(),
                    slope.to_string(),
                    survived_all.to_string(),
                ]);
                finals.push(log.cumulative_regret());
            }
            write_aggregate_csv(
                &dir.join("aggregate.csv"),
                &["seed", "final_cum_regret", "loglog_slope", "theta_star_survived_all"],
                &rows,
            )?;
            finals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            summary.insert("median_final_regret".into(), median_of_sorted(&finals).into());
        }
        "explore-demo" => {
            let class_src = cfg
                .model_class
                .clone()
                .ok_or_else(|| Error::Config("preset needs a model class".into()))?;
            let class = load_class(&class_src)?;
            let truth = class
                .truth_index
                .ok_or_else(|| Error::Config("class needs truth_index".into()))?;
            let theta_star = Arc::new(class.models[truth].clone());
            let star = plan_informed_optimal(&theta_star, Conditioning::FullHistory, cfg.planner_budget)?;
            let lc = cfg.learner_config();
            let runs: Vec<(u64, usize, RunLog)> = cfg
                .seeds
                .par_iter()
                .map(|seed| {
                    let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                    pure_explore(&class, &lc, &mut rng).map(|(idx, log)| (*seed, idx, log))
                })
                .collect::<Result<_>>()?;
            let mut rows = Vec::new();
            for (seed, idx, log) in &runs {
                write_runlog_csv(&dir.join(format!("runlog_seed{seed}.csv")), log)?;
                let theta_hat = Arc::new(class.models[*idx].clone());
                let hat_plan =
                    plan_informed_optimal(&theta_hat, Conditioning::FullHistory, cfg.planner_budget)?;
                let hat_value = evaluate_policy(
                    &theta_star,
                    &hat_plan.policy,
                    Objective::Value,
                    cfg.planner_budget,
                )?;
                rows.push(vec![
                    seed.to_string(),
                    idx.to_string(),
                    log.terminated_at.map(|t| t.to_string()).unwrap_or_else(|| "cap".into()),
                    (star.value - hat_value).to_string(),
                ]);
            }
            write_aggregate_csv(
                &dir.join("aggregate.csv"),
                &["seed", "returned_model", "terminated_at", "informed_value_gap"],
                &rows,
            )?;
            if let Some((_, _, log)) = runs.first() {
                if let Some(constants) = &log.constants {
                    summary.insert("constants".into(), serde_json::to_value(constants)?);
                }
            }
        }
        "ete" => {
            let class_src = cfg
                .model_class
                .clone()
                .ok_or_else(|| Error::Config("preset needs a model class".into()))?;
            let class = load_class(&class_src)?;
            let lc = cfg.learner_config();
            let logs: Vec<(u64, RunLog)> = cfg
                .seeds
                .par_iter()
                .map(|seed| {
                    let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                    explore_then_exploit(&class, &lc, &mut rng).map(|log| (*seed, log))
                })
                .collect::<Result<_>>()?;
            let mut rows = Vec::new();
            for (seed, log) in &logs {
                write_runlog_csv(&dir.join(format!("runlog_seed{seed}.csv")), log)?;
                let explored = log.rows.iter().filter(|r| r.phase == "explore").count();
                rows.push(vec![
                    seed.to_string(),
                    log.cumulative_regret().to_string(),
                    explored.to_string(),
                    log.cap_hit.to_string(),
                ]);
            }
            write_aggregate_csv(
                &dir.join("aggregate.csv"),
                &["seed", "final_cum_regret", "explore_episodes", "explore_consumed_all"],
                &rows,
            )?;
        }
        "scaling" => {
            let grid = cfg
                .k_grid
                .clone()
                .unwrap_or_else(|| vec![2_000, 5_000, 10_000, 20_000, 50_000]);
            let class_src = cfg
                .model_class
                .clone()
                .ok_or_else(|| Error::Config("preset needs a model class".into()))?;
            let class = load_class(&class_src)?;
            let mut per_seed_curves: Vec<Vec<(f64, f64)>> = Vec::new();
            let mut rows = Vec::new();
            let runs: Vec<(u64, Vec<(f64, f64)>)> = cfg
                .seeds
                .par_iter()
                .map(|seed| {
                    let mut curve = Vec::new();
                    for k in &grid {
                        let mut lc = cfg.learner_config();
                        lc.num_episodes = *k;
                        let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                        let log = explore_then_exploit(&class, &lc, &mut rng)?;
                        curve.push((*k as f64, log.cumulative_regret()));
                    }
                    Ok((*seed, curve))
                })
                .collect::<Result<_>>()?;
            for (seed, curve) in &runs {
                for (k, r) in curve {
                    rows.push(vec![seed.to_string(), k.to_string(), r.to_string()]);
                }
                per_seed_curves.push(curve.clone());
            }
            write_aggregate_csv(&dir.join("aggregate.csv"), &["seed", "K", "cum_regret"], &rows)?;
            let fit = fit_with_bootstrap(&per_seed_curves, 200, 7)?;
            summary.insert("fit".into(), serde_json::to_value(&fit)?);
        }
        "gap-demo" => {
            let theta = load_instance(&cfg.instance)?;
            let blind = plan_blind_optimal(&theta, Conditioning::FullHistory, cfg.planner_budget)?;
            let informed = plan_informed_optimal(&theta, Conditioning::FullHistory, cfg.planner_budget)?;
            let blind_replay = evaluate_policy(
                &theta,
                &InformedPolicy::shared(blind.policy.clone()),
                Objective::Value,
                cfg.planner_budget,
            )?;
            write_aggregate_csv(
                &dir.join("aggregate.csv"),
                &["blind_value", "informed_value", "gap"],
                &[vec![
                    blind.value.to_string(),
                    informed.value.to_string(),
                    (informed.value - blind.value).to_string(),
                ]],
            )?;
            summary.insert("blind_value".into(), blind.value.into());
            summary.insert("informed_value".into(), informed.value.into());
            summary.insert("gap".into(), (informed.value - blind.value).into());
            summary.insert("blind_value_replay".into(), blind_replay.into());
        }
        other => return Err(Error::Config(format!("unknown preset '{other}'"))),
    }

    let manifest = serde_json::json!({
        "config": cfg,
        "config_hash": cfg.config_hash(),
        "code_version": env!("CARGO_PKG_VERSION"),
        "summary": summary,
    });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(dir)
}
