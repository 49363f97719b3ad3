//! End-to-end checks of the command-line surface and its exit codes.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lmdp-psi"))
}

#[test]
fn simulate_exports_trajectory_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("episodes.csv");
    let status = bin()
        .args([
            "simulate",
            "--instance",
            "mixed",
            "--episodes",
            "5",
            "--seed",
            "3",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "episode,iota,m,t,s,a,o,r");
    // 5 episodes x horizon 2.
    assert_eq!(lines.count(), 10);
}

#[test]
fn plan_prints_values_and_emits_policy_tree() {
    let dir = tempfile::tempdir().unwrap();
    let tree = dir.path().join("policy.json");
    let output = bin()
        .args(["plan", "--instance", "mixed", "--emit-policy"])
        .arg(&tree)
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("blind_value"));
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&tree).unwrap()).unwrap();
    assert_eq!(parsed["kind"], "table");
    assert!(parsed["nodes"].as_object().unwrap().contains_key("s0"));
}

#[test]
fn hardgen_emits_instance_and_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("hard.json");
    let status = bin()
        .args([
            "hardgen",
            "--contexts",
            "8",
            "--alpha",
            "0.003",
            "--eps",
            "0.05",
            "--alphabet",
            "2",
            "--seed",
            "11",
            "--emit",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let instance: lmdp_psi::LmdpPsi =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(lmdp_psi::env::validate_model(&instance).is_ok());
    let cert: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.with_extension("certificate.json")).unwrap(),
    )
    .unwrap();
    assert!(cert["alpha_eff"].as_f64().unwrap() >= cert["threshold"].as_f64().unwrap());
    assert!(cert["certified"].as_bool().unwrap());
    assert!(cert["resamples"].as_u64().unwrap() >= 1);
    assert!(cert["witness"].is_array());
}

#[test]
fn verify_passes_on_bundled_instances() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("conditioning.csv");
    let status = bin()
        .args(["verify", "--instance", "mixed", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let table = std::fs::read_to_string(&out).unwrap();
    assert!(table.starts_with("t,s,a,iota,measured_constant,paper_bound,pass"));
    assert!(table.lines().skip(1).all(|l| l.ends_with("true")));
}

#[test]
fn verify_kl_passes_and_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("kl.csv");
    let status = bin()
        .args([
            "verify-kl",
            "--contexts",
            "8",
            "--alpha",
            "0.003",
            "--eps",
            "0.04",
            "--alphabet",
            "2",
            "--seed",
            "0",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let table = std::fs::read_to_string(&out).unwrap();
    assert!(table.starts_with("iota_class,a_class,kl,predicted_scaling_pass"));
    assert_eq!(table.lines().count(), 5);
}

#[test]
fn config_errors_exit_2_and_budget_errors_exit_3() {
    // Unknown bundled instance: configuration error.
    let status = bin().args(["plan", "--instance", "no-such-fixture"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
    // Tiny planner budget: enumeration budget error.
    let status = bin()
        .args(["plan", "--instance", "mixed", "--budget", "1"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn omle_preset_writes_runlogs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args([
            "omle",
            "--episodes",
            "50",
            "--seeds",
            "0,1",
            "--out",
        ])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let base = dir.path().join("regret-blind");
    for name in ["runlog_seed0.csv", "runlog_seed1.csv", "aggregate.csv", "manifest.json"] {
        assert!(base.join(name).exists(), "{name} missing");
    }
    let runlog = std::fs::read_to_string(base.join("runlog_seed0.csv")).unwrap();
    assert!(runlog.starts_with(
        "episode,phase,model_index,policy_hash,V_tilde_or_value,inst_regret,cum_regret,survivors_count,theta_star_survives"
    ));
}
