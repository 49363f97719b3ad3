//! Command-line surface: simulation, planning, learning runs, adversarial
//! instance generation, and the numeric verifiers.
//!
//! Exit codes: 0 success, 2 configuration error, 3 enumeration-budget error,
//! 4 verification-check failure, 1 anything else.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lmdp_psi::env::{sample_episode, validate_model};
use lmdp_psi::error::Error;
use lmdp_psi::hardgen::{
    assignment_threshold, build_hard_instance, build_reference, conditional_kl,
    effective_alpha_with_witness, sample_emission_assignment,
};
use lmdp_psi::harness::{
    fixtures, run_preset, ClassSource, ExperimentConfig, InstanceSource,
};
use lmdp_psi::planning::{
    plan_blind_optimal, plan_informed_optimal, BlindPolicy, Conditioning, InformedPolicy,
};
use lmdp_psi::psr::{build_operators, psr_trajectory_probability, ConditioningCertifier};

#[derive(Parser)]
#[command(name = "lmdp-psi", about = "Desk-scale laboratory for latent MDPs with prospective side information", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Bundled instance name (tiny-mdp, mixed, hard) or a JSON file path.
    #[arg(long, default_value = "mixed")]
    instance: String,
    /// Bundled class name (mixed_class) or a JSON file path.
    #[arg(long, default_value = "mixed_class")]
    class: String,
    /// Number of episodes K.
    #[arg(long, short = 'k', default_value_t = 500)]
    episodes: usize,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Practical-constants knob; 1.0 is the verbatim theoretical setting.
    #[arg(long, default_value_t = 0.01)]
    c: f64,
    #[arg(long, default_value_t = 1.0)]
    c_beta: f64,
    #[arg(long, default_value_t = 1.0)]
    c_split: f64,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5,6,7,8,9")]
    seeds: Vec<u64>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long, default_value_t = lmdp_psi::DEFAULT_PLANNER_BUDGET)]
    budget: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate episodes and export them as CSV rows.
    Simulate {
        #[arg(long, default_value = "mixed")]
        instance: String,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// uniform | blind | informed
        #[arg(long, default_value = "uniform")]
        policy: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact blind and informed planning on an instance.
    Plan {
        #[arg(long, default_value = "mixed")]
        instance: String,
        #[arg(long, default_value_t = lmdp_psi::DEFAULT_PLANNER_BUDGET)]
        budget: u64,
        /// Write the blind policy as a JSON decision tree.
        #[arg(long)]
        emit_policy: Option<PathBuf>,
    },
    /// Optimistic-MLE regret minimization (preset "regret-blind").
    Omle(RunArgs),
    /// Bonus-driven pure exploration (preset "explore-demo").
    Explore(RunArgs),
    /// Explore-then-exploit (preset "ete").
    Ete(RunArgs),
    /// Scaling sweep over episode budgets (preset "scaling").
    Scaling {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "2000,5000,10000,20000,50000")]
        k_grid: Vec<usize>,
    },
    /// Build an adversarial family member and its certificate.
    Hardgen {
        #[arg(long, default_value_t = 8)]
        contexts: usize,
        #[arg(long, default_value_t = 0.003)]
        alpha: f64,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 64)]
        alphabet: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path for the instance JSON; the certificate lands next to
        /// it with a .certificate.json suffix.
        #[arg(long)]
        emit: PathBuf,
    },
    /// Numeric verification of the predictive-state factorization and the
    /// conditioning bounds; exits 4 on any violation.
    Verify {
        #[arg(long, default_value = "mixed")]
        instance: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1 << 22)]
        budget: u64,
    },
    /// Exact conditional KL table of the adversarial family, with scaling
    /// checks; exits 4 on any violation.
    VerifyKl {
        #[arg(long, default_value_t = 8)]
        contexts: usize,
        #[arg(long, default_value_t = 0.003)]
        alpha: f64,
        #[arg(long, default_value_t = 0.04)]
        eps: f64,
        #[arg(long, default_value_t = 2)]
        alphabet: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the bundled fixtures as JSON files.
    Fixtures {
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
    },
}

fn instance_source(name: &str) -> InstanceSource {
    if name.ends_with(".json") || name.contains('/') {
        InstanceSource::File { path: PathBuf::from(name) }
    } else {
        InstanceSource::Bundled { name: name.to_string() }
    }
}

fn class_source(name: &str) -> ClassSource {
    if name.ends_with(".json") || name.contains('/') {
        ClassSource::File { path: PathBuf::from(name) }
    } else {
        ClassSource::Bundled { name: name.to_string() }
    }
}

fn load_instance(name: &str) -> Result<Arc<lmdp_psi::LmdpPsi>, Error> {
    let theta = match instance_source(name) {
        InstanceSource::Bundled { name } => fixtures::bundled_instance(&name)?,
        InstanceSource::File { path } => serde_json::from_str(&fs::read_to_string(path)?)?,
        InstanceSource::HardSpec { .. } => unreachable!(),
    };
    let report = validate_model(&theta);
    if !report.is_ok() {
        return Err(Error::Config(format!("instance invalid: {:?}", report.issues)));
    }
    Ok(Arc::new(theta))
}

fn preset_config(preset: &str, args: &RunArgs) -> ExperimentConfig {
    ExperimentConfig {
        preset: preset.to_string(),
        instance: instance_source(&args.instance),
        model_class: Some(class_source(&args.class)),
        num_episodes: args.episodes,
        delta: args.delta,
        epsilon: args.epsilon,
        scale_c: args.c,
        c_beta: args.c_beta,
        c_split: args.c_split,
        seeds: args.seeds.clone(),
        planner_budget: args.budget,
        output_dir: args.out.clone(),
        k_grid: None,
    }
}

fn run() -> Result<bool, Error> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Simulate { instance, episodes, seed, policy, out } => {
            let theta = load_instance(&instance)?;
            let policy = match policy.as_str() {
                "uniform" => InformedPolicy::shared(BlindPolicy::uniform(&theta)),
                "blind" => InformedPolicy::shared(
                    plan_blind_optimal(&theta, Conditioning::FullHistory, lmdp_psi::DEFAULT_PLANNER_BUDGET)?.policy,
                ),
                "informed" => {
                    plan_informed_optimal(&theta, Conditioning::FullHistory, lmdp_psi::DEFAULT_PLANNER_BUDGET)?.policy
                }
                other => return Err(Error::Config(format!("unknown policy '{other}'"))),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rows = vec!["episode,iota,m,t,s,a,o,r".to_string()];
            for ep in 0..episodes {
                let traj = sample_episode(&theta, &policy, &mut rng);
                for (t, step) in traj.steps.iter().enumerate() {
                    rows.push(format!(
                        "{ep},{},{},{},{},{},{},{}",
                        traj.iota,
                        traj.latent,
                        t + 1,
                        step.state,
                        step.action,
                        step.obs,
                        theta.reward(step.obs)
                    ));
                }
            }
            let text = rows.join("\n") + "\n";
            match out {
                Some(path) => fs::write(path, text)?,
                None => print!("{text}"),
            }
            Ok(true)
        }
        Cmd::Plan { instance, budget, emit_policy } => {
            let theta = load_instance(&instance)?;
            let blind = plan_blind_optimal(&theta, Conditioning::FullHistory, budget)?;
            let informed = plan_informed_optimal(&theta, Conditioning::FullHistory, budget)?;
            println!("blind_value    = {}", blind.value);
            println!("informed_value = {}", informed.value);
            println!("gap            = {}", informed.value - blind.value);
            println!("blind_policy_hash = {}", blind.policy.content_hash());
            if let Some(path) = emit_policy {
                fs::write(&path, serde_json::to_string_pretty(&blind.policy.decision_tree(budget)?)?)?;
                println!("blind policy tree written to {}", path.display());
            }
            Ok(true)
        }
        Cmd::Omle(args) => {
            let dir = run_preset(&preset_config("regret-blind", &args))?;
            println!("artifacts in {}", dir.display());
            Ok(true)
        }
        Cmd::Explore(args) => {
            let dir = run_preset(&preset_config("explore-demo", &args))?;
            println!("artifacts in {}", dir.display());
            Ok(true)
        }
        Cmd::Ete(args) => {
            let dir = run_preset(&preset_config("ete", &args))?;
            println!("artifacts in {}", dir.display());
            Ok(true)
        }
        Cmd::Scaling { run, k_grid } => {
            let mut cfg = preset_config("scaling", &run);
            cfg.k_grid = Some(k_grid);
            let dir = run_preset(&cfg)?;
            println!("artifacts in {}", dir.display());
            Ok(true)
        }
        Cmd::Hardgen { contexts, alpha, eps, alphabet, seed, emit } => {
            let mut spec = lmdp_psi::hardgen::small_spec(contexts, alphabet, alpha, eps);
            spec.alphabet = alphabet;
            for w in spec.warnings() {
                eprintln!("note: {w}");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let assignment = sample_emission_assignment(&spec, &mut rng, 64)?;
            let model = build_hard_instance(&spec, &assignment)?;
            fs::write(&emit, serde_json::to_string_pretty(&model.lmdp.as_ref())?)?;
            let cert = serde_json::json!({
                "alpha_eff": assignment.alpha_eff,
                "certified": assignment.certified,
                "resamples": assignment.resamples,
                "threshold": assignment_threshold(&spec),
                "witness": assignment.witness,
                "spec": spec,
                "signs": assignment.signs,
            });
            let cert_path = emit.with_extension("certificate.json");
            fs::write(&cert_path, serde_json::to_string_pretty(&cert)?)?;
            println!(
                "instance -> {} (alpha_eff {:.6e}, {} draws)",
                emit.display(),
                assignment.alpha_eff,
                assignment.resamples
            );
            Ok(true)
        }
        Cmd::Verify { instance, out, budget } => {
            let theta = load_instance(&instance)?;
            verify_instance(&theta, out, budget)
        }
        Cmd::VerifyKl { contexts, alpha, eps, alphabet, seed, out } => verify_kl(contexts, alpha, eps, alphabet, seed, out),
        Cmd::Fixtures { out } => {
            fs::create_dir_all(&out)?;
            fs::write(
                out.join("tiny_mdp.json"),
                serde_json::to_string_pretty(&fixtures::tiny_mdp_instance())?,
            )?;
            fs::write(
                out.join("mixed.json"),
                serde_json::to_string_pretty(&fixtures::mixed_instance())?,
            )?;
            fs::write(
                out.join("mixed_class.json"),
                serde_json::to_string_pretty(&fixtures::mixed_class())?,
            )?;
            let hard = fixtures::hard_fixture();
            fs::write(out.join("hard.json"), serde_json::to_string_pretty(hard.lmdp.as_ref())?)?;
            let spec = fixtures::hard_spec();
            let mut rng = ChaCha8Rng::seed_from_u64(fixtures::HARD_FIXTURE_SEED);
            let assignment = sample_emission_assignment(&spec, &mut rng, 64)?;
            let cert = serde_json::json!({
                "alpha_eff": assignment.alpha_eff,
                "certified": assignment.certified,
                "resamples": assignment.resamples,
                "threshold": assignment_threshold(&spec),
                "witness": assignment.witness,
                "spec": spec,
                "seed": fixtures::HARD_FIXTURE_SEED,
            });
            fs::write(out.join("hard_certificate.json"), serde_json::to_string_pretty(&cert)?)?;
            println!("fixtures written to {}", out.display());
            Ok(true)
        }
    }
}

/// Factorization equivalence, conditioning constants against their bounds,
/// and the measured emission separation.
fn verify_instance(theta: &Arc<lmdp_psi::LmdpPsi>, out: Option<PathBuf>, budget: u64) -> Result<bool, Error> {
    let ops = build_operators(theta)?;
    let mut all_pass = true;

    // Factorization spot check over sampled Markov policies and episodes.
    let policies = lmdp_psi::harness::gen::fixed_markov_policies(theta, 5, 17);
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut worst = 0.0f64;
    for policy in &policies {
        let informed = InformedPolicy::shared(policy.clone());
        for _ in 0..40 {
            let traj = sample_episode(theta, &informed, &mut rng);
            let direct = lmdp_psi::env::trajectory_probability(theta, policy, traj.iota, &traj);
            let psr = psr_trajectory_probability(&ops, policy, traj.iota, &traj);
            worst = worst.max((direct - psr).abs());
        }
    }
    let fact_pass = worst <= 1e-10;
    all_pass &= fact_pass;
    println!("factorization: max |psr - direct| = {worst:.3e} -> {}", pass_str(fact_pass));

    // Measured emission separation.
    let (alpha, _) = effective_alpha_with_witness(&theta.emission);
    println!(
        "alpha_eff = {:?}{}",
        alpha,
        if alpha.is_certified() { "" } else { " (non-certified sample estimate)" }
    );
    let m = theta.num_contexts as f64;
    let bound_all = m / alpha.value();

    // Conditioning constants per (t, x) and per symbol.
    let cert = ConditioningCertifier::new(theta)?;
    let mut lines = vec!["t,s,a,iota,measured_constant,paper_bound,pass".to_string()];
    for t in 1..=theta.horizon {
        for s in 0..theta.num_states {
            for a in 0..theta.num_actions {
                let c = cert.constant(t, (s, a), budget)?;
                let ok = c <= bound_all + 1e-9;
                all_pass &= ok;
                lines.push(format!("{t},{s},{a},-1,{c},{bound_all},{ok}"));
                for iota in 0..theta.num_side_info {
                    let cc = cert.conditional(iota, t, (s, a), budget)?;
                    let max_row = (0..theta.num_contexts)
                        .map(|mm| theta.emission[iota][mm])
                        .fold(0.0, f64::max);
                    let bound = bound_all * max_row;
                    let ok = cc <= bound + 1e-9;
                    all_pass &= ok;
                    lines.push(format!("{t},{s},{a},{iota},{cc},{bound},{ok}"));
                }
            }
        }
    }
    if let Some(path) = out {
        fs::write(&path, lines.join("\n") + "\n")?;
        println!("conditioning table -> {}", path.display());
    }
    println!("conditioning bounds: {}", pass_str(all_pass));
    Ok(all_pass)
}

fn pass_str(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

/// KL table over (symbol class, sequence class) with the quadratic scaling
/// checks in the gap parameter and the separation scale.
fn verify_kl(
    contexts: usize,
    alpha: f64,
    eps: f64,
    alphabet: usize,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<bool, Error> {
    let build_pair = |alpha: f64, eps: f64, signs: Option<&Vec<Vec<i8>>>| -> Result<_, Error> {
        let spec = lmdp_psi::hardgen::small_spec(contexts, alphabet, alpha, eps);
        let assignment = match signs {
            Some(signs) => lmdp_psi::hardgen::EmissionAssignment {
                signs: signs.clone(),
                alpha_eff: 0.0,
                certified: false,
                resamples: 0,
                witness: None,
            },
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                sample_emission_assignment(&spec, &mut rng, 64)?
            }
        };
        Ok((
            build_reference(&spec, &assignment)?,
            build_hard_instance(&spec, &assignment)?,
            assignment.signs.clone(),
        ))
    };
    let (theta0, theta, signs) = build_pair(alpha, eps, None)?;
    let spec = theta0.spec.clone();
    let iota_hard = spec.iota_hard();
    let a_star = spec.explore_action();
    let optimal = spec.optimal_seq.clone();
    let suboptimal: Vec<usize> = optimal.iter().map(|j| (j + 1) % spec.control_actions).collect();
    let iota_info = 0usize;

    let (theta0_h, theta_h, _) = build_pair(alpha, eps / 2.0, Some(&signs))?;
    let (theta0_a, theta_a, _) = build_pair(alpha / 2.0, eps, Some(&signs))?;

    let mut rows = vec!["iota_class,a_class,kl,predicted_scaling_pass".to_string()];
    let mut all_pass = true;

    let kl_zero = conditional_kl(&theta0, &theta, iota_hard, a_star, &suboptimal)?;
    let zero_ok = kl_zero == 0.0;
    all_pass &= zero_ok;
    rows.push(format!("hard,suboptimal,{kl_zero},{zero_ok}"));

    let kl_opt = conditional_kl(&theta0, &theta, iota_hard, a_star, &optimal)?;
    let kl_opt_half = conditional_kl(&theta0_h, &theta_h, iota_hard, a_star, &optimal)?;
    let ratio = kl_opt / kl_opt_half;
    let eps_ok = (3.0..=5.3).contains(&ratio);
    all_pass &= eps_ok;
    rows.push(format!("hard,optimal,{kl_opt},{eps_ok}"));

    let kl_info = conditional_kl(&theta0, &theta, iota_info, a_star, &suboptimal)?;
    let kl_info_ha = conditional_kl(&theta0_a, &theta_a, iota_info, a_star, &suboptimal)?;
    let ratio_a = kl_info / kl_info_ha;
    let alpha_ok = (3.0..=5.3).contains(&ratio_a);
    all_pass &= alpha_ok;
    rows.push(format!("informative,suboptimal,{kl_info},{alpha_ok}"));

    let kl_info_opt = conditional_kl(&theta0, &theta, iota_info, a_star, &optimal)?;
    rows.push(format!("informative,optimal,{kl_info_opt},true"));

    println!("kl(hard, suboptimal)        = {kl_zero} (exact zero: {zero_ok})");
    println!("kl(hard, optimal)           = {kl_opt} (eps ratio {ratio:.3}: {eps_ok})");
    println!("kl(informative, suboptimal) = {kl_info} (alpha ratio {ratio_a:.3}: {alpha_ok})");
    if let Some(path) = out {
        fs::write(&path, rows.join("\n") + "\n")?;
    }
    Ok(all_pass)
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(Error::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(err @ Error::Budget { .. }) => {
            eprintln!("{err}");
            ExitCode::from(3)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
